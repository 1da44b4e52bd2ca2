//! `sitnn` command-line entry point.
//!
//! Every artifact starts with a provenance record: CSV files with a
//! `# sitnn <version> config=<hash> seed=<seed>` comment line, JSON files with
//! a leading `provenance` object. Runtime failures print a single JSON line
//! `{"error": <kind>, "message": <text>}` on stderr and exit with status 1.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{Map, Value};

use sitnn::data::{
    firing_rate_featuremap, input_distribution_stats, read_idx, write_featuremap_csv, IdxData,
    ImageSet,
};
use sitnn::network::{repeat_frames, ForwardOptions, Network, NeuronBank};
use sitnn::neuron::{simulate_constant_input, NeuronModel, NeuronRegistry, ParamOverrides};
use sitnn::phase::{vector_field, Grid, PhasePortrait};
use sitnn::provenance::Provenance;
use sitnn::train::{
    evaluate, gradient_check, load_checkpoint, load_datasets, save_checkpoint, sit_location_sweep,
    train, Encoding, GradCheckOptions, GradCheckReport, SweepRow, TrainConfig,
};
use sitnn::Tensor;

#[derive(Parser, Debug)]
#[command(name = "sitnn", version, about = "Standardized Izhikevich neurons and hybrid spiking networks")]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Phase-plane analysis: fixed points, stability, vector field, nullclines.
    Analyze(AnalyzeArgs),
    /// Drive one neuron with a constant input and record its trace.
    Simulate(SimulateArgs),
    /// Train a network from a config file.
    Train(TrainArgs),
    /// Accuracy of a checkpoint on an IDX dataset.
    Eval(EvalArgs),
    /// Firing-rate map of one spiking layer, or the input-current histogram.
    Featuremap(FeaturemapArgs),
    /// Compare backpropagated gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Train the all-LIF baseline and one model per SIT position.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
struct NeuronArgs {
    /// Registered model name: lif, qif, izhikevich, sit, sit-bursting.
    #[arg(long, default_value = "sit")]
    neuron: String,
    /// Constant input current.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    input: f64,
    /// Membrane time constant.
    #[arg(long)]
    tau: Option<f64>,
    /// Override one neuron constant, e.g. `--param b=0.5`. Repeatable.
    #[arg(long = "param", value_name = "NAME=VALUE")]
    params: Vec<String>,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[command(flatten)]
    neuron: NeuronArgs,
    /// Field grid: `u=MIN:MAX v=MIN:MAX res=N` (or `ures=N vres=N`).
    #[arg(long, num_args = 1.., value_name = "SPEC")]
    grid: Vec<String>,
    /// Directory for analysis.json, field.csv and the nullcline CSVs.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    neuron: NeuronArgs,
    #[arg(long, default_value_t = 100)]
    steps: usize,
    /// Trace CSV path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write inter-spike intervals here.
    #[arg(long)]
    isi: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ConfigOverrides {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    architecture: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    timesteps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    train_limit: Option<usize>,
    #[arg(long)]
    test_limit: Option<usize>,
}

impl ConfigOverrides {
    fn load(&self) -> sitnn::Result<TrainConfig> {
        let mut config = TrainConfig::load(&self.config)?;
        if let Some(a) = &self.architecture {
            config.architecture = a.clone();
        }
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = self.$flag { config.$field = v; })*
            };
        }
        set!(epochs => epochs, seed => seed, timesteps => timesteps, batch_size => batch_size,
             learning_rate => learning_rate);
        if self.train_limit.is_some() {
            config.dataset.train_limit = self.train_limit;
        }
        if self.test_limit.is_some() {
            config.dataset.test_limit = self.test_limit;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigOverrides,
    /// Directory for report.json, curves.csv and model.ckpt.
    #[arg(long, default_value = "run")]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EncodingArg {
    Direct,
    Rate,
}

impl From<EncodingArg> for Encoding {
    fn from(e: EncodingArg) -> Self {
        match e {
            EncodingArg::Direct => Encoding::Direct,
            EncodingArg::Rate => Encoding::Rate,
        }
    }
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    images: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value_t = 4)]
    timesteps: usize,
    /// Evaluate only the first N samples.
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long, value_enum, default_value = "direct")]
    encoding: EncodingArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct FeaturemapArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// IDX image file.
    #[arg(long)]
    images: PathBuf,
    /// Index of a convolutional spiking layer.
    #[arg(long, required_unless_present = "histogram")]
    layer: Option<usize>,
    /// Which image to feed.
    #[arg(long, default_value_t = 0)]
    index: usize,
    #[arg(long, default_value_t = 4)]
    timesteps: usize,
    /// Write the input-current histogram of the first spiking layer instead.
    #[arg(long, conflicts_with = "layer")]
    histogram: bool,
    /// Histogram only: sample after the normalization before the neurons.
    #[arg(long, requires = "histogram")]
    post_norm: bool,
    /// Histogram only: number of images sampled.
    #[arg(long, default_value_t = 100, requires = "histogram")]
    samples: usize,
    /// CSV path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, default_value = "FC16-SIT-FC10-LIF")]
    arch: String,
    /// Per-sample input shape, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "8")]
    input_shape: Vec<usize>,
    #[arg(long, default_value_t = 4)]
    timesteps: usize,
    #[arg(long, default_value_t = 4)]
    batch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 256)]
    coordinates: usize,
    /// Eval-mode passes (running statistics, no dropout).
    #[arg(long)]
    eval: bool,
    /// Exit nonzero when the worst relative error exceeds this.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigOverrides,
    /// 1-based SIT positions among the convolutional spiking layers.
    #[arg(long, value_delimiter = ',')]
    positions: Vec<usize>,
    /// JSON path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Failure {
    kind: &'static str,
    message: String,
}

impl From<sitnn::Error> for Failure {
    fn from(e: sitnn::Error) -> Self {
        Self {
            kind: e.kind(),
            message: e.to_string(),
        }
    }
}

type Outcome = Result<(), Failure>;

fn io_failure(path: &Path, e: io::Error) -> Failure {
    sitnn::Error::io(path, e).into()
}

fn invalid(message: impl Into<String>) -> Failure {
    sitnn::Error::InvalidParameter(message.into()).into()
}

/// Opens `path` for writing, or stdout.
fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| io_failure(p, e))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_text(
    path: Option<&Path>,
    body: impl FnOnce(&mut dyn Write) -> io::Result<()>,
) -> Outcome {
    let mut out = sink(path)?;
    let shown = path.unwrap_or(Path::new("<stdout>"));
    body(&mut out)
        .and_then(|()| out.flush())
        .map_err(|e| io_failure(shown, e))
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Outcome {
    let text = serde_json::to_string_pretty(value).map_err(sitnn::Error::from)?;
    write_text(path, |w| writeln!(w, "{text}"))
}

fn create_dir(dir: &Path) -> Outcome {
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))
}

fn parse_overrides(args: &NeuronArgs) -> Result<ParamOverrides, Failure> {
    let mut fields = Map::new();
    for item in &args.params {
        let (name, raw) = item
            .split_once('=')
            .ok_or_else(|| invalid(format!("--param expects NAME=VALUE, got `{item}`")))?;
        let value = if let Ok(x) = raw.parse::<f64>() {
            Value::from(x)
        } else if let Ok(b) = raw.parse::<bool>() {
            Value::from(b)
        } else {
            return Err(invalid(format!("--param {name}: `{raw}` is not a number")));
        };
        fields.insert(name.trim().to_string(), value);
    }
    if let Some(tau) = args.tau {
        fields.insert("tau".into(), Value::from(tau));
    }
    serde_json::from_value(Value::Object(fields))
        .map_err(|e| invalid(format!("bad neuron parameter: {e}")))
}

fn build_model(args: &NeuronArgs) -> Result<std::sync::Arc<dyn NeuronModel>, Failure> {
    Ok(NeuronRegistry::builtin().create_with(&args.neuron, &parse_overrides(args)?)?)
}

/// Provenance for single-neuron commands: the resolved model and input.
fn neuron_provenance(command: &str, model: &dyn NeuronModel, input: f64, extra: Value) -> Provenance {
    let config = serde_json::json!({
        "command": command,
        "model": model.name(),
        "params": model.params(),
        "input": input,
        "extra": extra,
    });
    Provenance::new(&config.to_string(), 0)
}

fn parse_range(text: &str) -> Result<(f64, f64), Failure> {
    let bad = || invalid(format!("bad grid range `{text}`, expected MIN:MAX"));
    let (lo, hi) = text.split_once(':').ok_or_else(bad)?;
    Ok((lo.parse().map_err(|_| bad())?, hi.parse().map_err(|_| bad())?))
}

fn parse_grid(tokens: &[String]) -> Result<Grid, Failure> {
    let mut grid = Grid {
        u_min: -0.5,
        u_max: 1.5,
        v_min: -0.1,
        v_max: 0.1,
        u_res: 64,
        v_res: 64,
    };
    for token in tokens {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| invalid(format!("bad grid token `{token}`")))?;
        let count = || {
            value
                .parse::<usize>()
                .map_err(|_| invalid(format!("bad grid resolution `{value}`")))
        };
        match key {
            "u" => (grid.u_min, grid.u_max) = parse_range(value)?,
            "v" => (grid.v_min, grid.v_max) = parse_range(value)?,
            "res" => (grid.u_res, grid.v_res) = (count()?, count()?),
            "ures" => grid.u_res = count()?,
            "vres" => grid.v_res = count()?,
            _ => return Err(invalid(format!("unknown grid key `{key}`"))),
        }
    }
    grid.validate()?;
    Ok(grid)
}

fn analyze(args: &AnalyzeArgs) -> Outcome {
    let model = build_model(&args.neuron)?;
    let grid = parse_grid(&args.grid)?;
    let input = args.neuron.input;
    let portrait = vector_field(model.as_ref(), input, grid)?;
    let provenance = neuron_provenance(
        "analyze",
        model.as_ref(),
        input,
        serde_json::to_value(grid).map_err(sitnn::Error::from)?,
    );
    let header = provenance.header_line();
    let report = portrait.report(model.as_ref(), provenance);
    if let Some(dir) = &args.out {
        create_dir(dir)?;
        write_json(Some(&dir.join("analysis.json")), &report)?;
        write_text(Some(&dir.join("field.csv")), |w| {
            writeln!(w, "{header}")?;
            portrait.write_field_csv(w)
        })?;
        for (name, points) in [
            ("u_nullcline.csv", &portrait.nullclines.u_nullcline),
            ("v_nullcline.csv", &portrait.nullclines.v_nullcline),
        ] {
            write_text(Some(&dir.join(name)), |w| {
                writeln!(w, "{header}")?;
                PhasePortrait::write_nullcline_csv(points, w)
            })?;
        }
    }
    write_json(None, &report)
}

fn simulate(args: &SimulateArgs) -> Outcome {
    let model = build_model(&args.neuron)?;
    let train = simulate_constant_input(model.as_ref(), args.neuron.input, args.steps)?;
    let provenance = neuron_provenance(
        "simulate",
        model.as_ref(),
        args.neuron.input,
        serde_json::json!({ "steps": args.steps }),
    );
    let header = provenance.header_line();
    write_text(args.out.as_deref(), |w| {
        writeln!(w, "{header}")?;
        train.write_csv(w)
    })?;
    if let Some(path) = &args.isi {
        write_text(Some(path), |w| {
            writeln!(w, "{header}")?;
            train.write_isi_csv(w)
        })?;
    }
    Ok(())
}

fn run_training(args: &TrainArgs) -> Outcome {
    let config = args.config.load()?;
    let mut trained = train(&config)?;
    create_dir(&args.out)?;
    let ckpt = args.out.join("model.ckpt");
    save_checkpoint(&ckpt, &trained.network, Some(&trained.optimizer), &trained.report.provenance)?;
    trained.report.checkpoint = Some("model.ckpt".into());
    write_json(Some(&args.out.join("report.json")), &trained.report)?;
    let curves = args.out.join("curves.csv");
    write_text(Some(&curves), |w| trained.report.write_csv(w))?;
    write_json(None, &trained.report)
}

#[derive(Serialize)]
struct EvalOutput {
    provenance: Provenance,
    architecture: String,
    samples: usize,
    accuracy: f64,
}

fn eval(args: &EvalArgs) -> Outcome {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let mut set = ImageSet::load(&args.images, &args.labels)?;
    if let Some(n) = args.limit {
        set = set.take(n);
    }
    let accuracy = evaluate(&ckpt.network, &set, args.timesteps, args.encoding.into(), args.seed)?;
    write_json(
        None,
        &EvalOutput {
            provenance: ckpt.provenance,
            architecture: ckpt.network.architecture(),
            samples: set.len(),
            accuracy,
        },
    )
}

fn load_images(path: &Path) -> Result<ImageSet, Failure> {
    match read_idx(path)? {
        IdxData::Images(images) => {
            let n = images.shape()[0];
            Ok(ImageSet::new(images, vec![0; n])?)
        }
        IdxData::Labels(_) => Err(invalid(format!("{} holds labels, not images", path.display()))),
    }
}

fn featuremap(args: &FeaturemapArgs) -> Outcome {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let net = &ckpt.network;
    let images = load_images(&args.images)?;
    let header = ckpt.provenance.header_line();
    if args.histogram {
        let stats = input_distribution_stats(net, &images.take(args.samples), args.post_norm)?;
        return write_text(args.out.as_deref(), |w| {
            writeln!(w, "{header}")?;
            stats.write_csv(w)
        });
    }
    let layer = args.layer.expect("clap requires --layer without --histogram");
    if args.index >= images.len() {
        return Err(invalid(format!("--index {} but only {} images", args.index, images.len())));
    }
    let image = images.select(&[args.index]).images;
    let frames = repeat_frames(&image, args.timesteps);
    let pass = net.forward_sequence(&frames, ForwardOptions::eval())?;
    let spikes = pass
        .caches
        .spikes(layer)
        .ok_or_else(|| invalid(format!("layer {layer} is not a spiking layer")))?;
    let shape = net.layer_shape(layer).unwrap_or(&[]);
    if shape.len() != 3 {
        return Err(invalid(format!(
            "layer {layer} has per-sample shape {shape:?}; featuremaps need [C, H, W]"
        )));
    }
    let mut full = vec![args.timesteps];
    full.extend_from_slice(shape);
    let map = firing_rate_featuremap(&Tensor::new(full, spikes.to_vec())?)?;
    write_text(args.out.as_deref(), |w| {
        writeln!(w, "{header}")?;
        write_featuremap_csv(&map, w)
    })
}

#[derive(Serialize)]
struct GradcheckOutput {
    provenance: Provenance,
    architecture: String,
    parameters: usize,
    tolerance: f64,
    passed: bool,
    #[serde(flatten)]
    report: GradCheckReport,
}

fn gradcheck(args: &GradcheckArgs) -> Outcome {
    let net: Network<f64> =
        Network::from_architecture(&args.arch, &args.input_shape, &NeuronBank::builtin(), 0.5, args.seed)?;
    let mut shape = vec![args.timesteps, args.batch];
    shape.extend_from_slice(&args.input_shape);
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let data = (0..shape.iter().product::<usize>())
        .map(|_| rng.random_range(0.0..2.0))
        .collect();
    let frames = Tensor::new(shape, data)?;
    let classes = net.output_features();
    let targets: Vec<usize> = (0..args.batch).map(|i| i % classes).collect();
    let options = GradCheckOptions {
        coordinates: args.coordinates,
        seed: args.seed,
        train: !args.eval,
        ..Default::default()
    };
    let report = gradient_check(&net, &frames, &targets, &options)?;
    let config = serde_json::json!({
        "command": "gradcheck",
        "arch": args.arch,
        "input_shape": args.input_shape,
        "timesteps": args.timesteps,
        "batch": args.batch,
        "coordinates": args.coordinates,
        "train": !args.eval,
    });
    let worst = report.max_relative_error;
    let passed = worst < args.tolerance;
    write_json(
        None,
        &GradcheckOutput {
            provenance: Provenance::new(&config.to_string(), args.seed),
            architecture: net.architecture(),
            parameters: net.num_parameters(),
            tolerance: args.tolerance,
            passed,
            report,
        },
    )?;
    if passed {
        Ok(())
    } else {
        Err(Failure {
            kind: "gradient_mismatch",
            message: format!("max relative error {worst:e} exceeds {:e}", args.tolerance),
        })
    }
}

#[derive(Serialize)]
struct SweepOutput {
    provenance: Provenance,
    rows: Vec<SweepRow>,
    /// Positions by descending accuracy, `null` for the baseline.
    ranking: Vec<Option<usize>>,
}

fn sweep(args: &SweepArgs) -> Outcome {
    let config = args.config.load()?;
    let (train_set, test_set) = load_datasets(&config)?;
    let report = sit_location_sweep(&config, &train_set, &test_set, &args.positions)?;
    let ranking = report.ranked().iter().map(|r| r.position).collect();
    let mut provenance = config.provenance();
    provenance.config_hash = sitnn::provenance::config_hash(&format!(
        "{}\npositions={:?}",
        config.canonical(),
        args.positions
    ));
    write_json(
        args.out.as_deref(),
        &SweepOutput {
            provenance,
            rows: report.rows,
            ranking,
        },
    )
}

fn dispatch(command: &Command) -> Outcome {
    match command {
        Command::Analyze(a) => analyze(a),
        Command::Simulate(a) => simulate(a),
        Command::Train(a) => run_training(a),
        Command::Eval(a) => eval(a),
        Command::Featuremap(a) => featuremap(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Sweep(a) => sweep(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let line = serde_json::json!({ "error": f.kind, "message": f.message });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
