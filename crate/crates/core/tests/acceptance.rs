//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Criteria 9 and 10 train three networks on the bundled MNIST
//! subset and take several minutes.

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sitnn::arch::{format_architecture, parse_architecture, REFERENCE_ARCHITECTURES};
use sitnn::data::{read_idx, write_idx, IdxData, ImageSet};
use sitnn::network::{Network, NeuronBank};
use sitnn::neuron::{
    simulate_constant_input, IzhikevichVanilla, Lif, NeuronModel, NeuronParams, Sit,
};
use sitnn::phase::{fixed_points, stable_origin_b, vector_field, Grid};
use sitnn::provenance::Provenance;
use sitnn::train::{
    decode_checkpoint, encode_checkpoint, gradient_check, train_on, DatasetConfig,
    GradCheckOptions, TrainConfig, Trained,
};
use sitnn::Tensor;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within_time(elapsed: Duration, limit: Duration, detail: String) -> Outcome {
    check(elapsed < limit, format!("{detail}; {:.2?} (limit {limit:?})", elapsed))
}

fn fixed_point_reproduction() -> Outcome {
    let start = Instant::now();
    let model = Sit::new(NeuronParams::sit()).map_err(|e| e.to_string())?;
    let grid = Grid { u_min: -0.5, u_max: 1.5, v_min: -0.1, v_max: 0.1, u_res: 64, v_res: 64 };
    let portrait = vector_field(&model, 0.0, grid).map_err(|e| e.to_string())?;
    let report = portrait.report(&model, Provenance::new("acceptance", 0));
    let elapsed = start.elapsed();
    let fps = &report.fixed_points;
    let detail = fps
        .iter()
        .map(|p| format!("({:.4}, {:.4}) {:?}", p.u, p.v, p.class))
        .collect::<Vec<_>>()
        .join(", ");
    let ok = fps.len() == 2
        && (fps[0].u + 0.05).abs() < 1e-3
        && fps[0].v.abs() < 1e-3
        && fps[0].class.is_stable()
        && (fps[1].u - 1.02).abs() < 1e-3
        && (fps[1].v - 0.021).abs() < 1e-3
        && !fps[1].class.is_stable();
    check(ok, detail).and_then(|d| within_time(elapsed, Duration::from_secs(1), d))
}

fn boxed_vanilla(p: NeuronParams) -> sitnn::Result<Box<dyn NeuronModel>> {
    Ok(Box::new(IzhikevichVanilla::new(p)?))
}

fn vanilla_fixed_points() -> Outcome {
    let params = NeuronParams::izhikevich_tonic();
    let model = IzhikevichVanilla::new(params.clone()).map_err(|e| e.to_string())?;
    let fps = fixed_points(&model, 0.0).map_err(|e| e.to_string())?;
    if fps.len() != 2 {
        return Err(format!("{} fixed points", fps.len()));
    }
    let (stable, unstable) = (&fps[0], &fps[1]);
    let d = common::perturbed_distances(&params, boxed_vanilla, (unstable.u, unstable.v), 0.0, (1e-3, 0.0), 1000);
    let escaped = d.iter().any(|&x| x > 0.1);
    let decays = [(1e-3, 0.0), (-1e-3, 0.0), (0.0, 1e-3), (0.0, -1e-3)].into_iter().all(|offset| {
        let d = common::perturbed_distances(&params, boxed_vanilla, (stable.u, stable.v), 0.0, offset, 1000);
        d.last().is_some_and(|&x| x < 1e-3)
    });
    let ok = (stable.u + 70.0).abs() < 1e-6
        && (stable.v + 14.0).abs() < 1e-6
        && stable.classification.is_stable()
        && (unstable.u + 50.0).abs() < 1e-6
        && (unstable.v + 10.0).abs() < 1e-6
        && !unstable.classification.is_stable()
        && escaped
        && decays;
    check(
        ok,
        format!(
            "stable ({}, {}) {:?}, unstable ({}, {}) {:?}, perturbation escapes: {escaped}, decays at stable: {decays}",
            stable.u, stable.v, stable.classification, unstable.u, unstable.v, unstable.classification
        ),
    )
}

fn standardization_formula() -> Outcome {
    let base = NeuronParams::sit();
    let mut parts = Vec::new();
    let mut ok = true;
    for input in [-4.92, 0.0, 3.83] {
        let b = stable_origin_b(&base, input).map_err(|e| e.to_string())?;
        let oracle = -1.0 + 20.0 * input;
        let ulps = (b.to_bits() as i64 - oracle.to_bits() as i64).abs();
        ok &= ulps <= 1;
        parts.push(format!("b({input}) = {b} ({ulps} ulp from -1 + 20I)"));
    }
    let upper = stable_origin_b(&base, 3.83).map_err(|e| e.to_string())?;
    ok &= upper == 75.6;
    let lower = stable_origin_b(&base, -4.92).map_err(|e| e.to_string())?;
    parts.push(format!("lower endpoint {lower:.1} vs printed -97.4 (formula gives -99.4)"));
    check(ok, parts.join("; "))
}

fn theorem_one() -> Outcome {
    common::theorem_one_suite(1000, 2024)?;
    Ok("1000 integrator-regime draws (b <= a): lower point stable, trichotomy exact, U- < Uo < U+".into())
}

fn proposition_one() -> Outcome {
    let lif = Lif::new(NeuronParams::lif(2.0)).map_err(|e| e.to_string())?;
    let sit = Sit::new(NeuronParams::sit()).map_err(|e| e.to_string())?;
    let run = |m: &dyn NeuronModel, i| simulate_constant_input(m, i, 100).map_err(|e| e.to_string());
    let (l2, l3) = (run(&lif, 2.0)?, run(&lif, 3.0)?);
    let (s2, s3) = (run(&sit, 2.0)?, run(&sit, 3.0)?);
    let ok = l2.spikes == vec![1; 100] && l2.spikes == l3.spikes && s2.spike_count() != s3.spike_count();
    check(
        ok,
        format!(
            "LIF spikes {}/{} (identical: {}), SIT spikes {}/{}",
            l2.spike_count(),
            l3.spike_count(),
            l2.spikes == l3.spikes,
            s2.spike_count(),
            s3.spike_count()
        ),
    )
}

fn bionic_behaviors() -> Outcome {
    let start = Instant::now();
    let sit = Sit::new(NeuronParams::sit()).map_err(|e| e.to_string())?;
    let mut not_adapting = Vec::new();
    for i in 0..=30 {
        let input = 1.5 + 0.05 * i as f64;
        let train = simulate_constant_input(&sit, input, 100).map_err(|e| e.to_string())?;
        if !train.is_adapting() {
            not_adapting.push(input);
        }
    }
    let bursting = Sit::new(NeuronParams::sit_bursting()).map_err(|e| e.to_string())?;
    let b = simulate_constant_input(&bursting, 2.0, 200).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let ok = not_adapting.is_empty() && b.is_bursting();
    let isi: Vec<String> = b.isi.iter().take(12).map(ToString::to_string).collect();
    // past the onset the intervals repeat in groups of three
    let triplets = b.isi.len() > 9 && b.isi[6..].chunks(3).all(|c| c.len() < 3 || c == [3, 3, 4]);
    check(
        ok,
        format!(
            "SFA at 31 inputs in [1.5, 3] (failing: {not_adapting:?}); SIT-B at I=2 ISIs {}..., \
             max >= 2 min: {}, steady 3,3,4 triplets: {triplets}",
            isi.join(","),
            b.is_bursting()
        ),
    )
    .and_then(|d| within_time(elapsed, Duration::from_secs(2), d))
}

fn random_frames(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(0.0..2.0)).collect()).unwrap()
}

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut ok = true;
    for (arch, shape) in [("FC16-SIT-FC10", vec![8]), ("c4k3s1-BN-LIF-MPk2s2-FC10-LIF", vec![1, 8, 8])] {
        let net: Network<f64> =
            Network::from_architecture(arch, &shape, &NeuronBank::builtin(), 0.5, 7).map_err(|e| e.to_string())?;
        let mut fshape = vec![4, 4];
        fshape.extend(&shape);
        let frames = random_frames(&fshape, 9);
        let targets: Vec<usize> = (0..4).map(|i| (3 * i) % 10).collect();
        let options = GradCheckOptions { coordinates: 256, seed: 13, ..Default::default() };
        let report = gradient_check(&net, &frames, &targets, &options).map_err(|e| e.to_string())?;
        ok &= report.coordinates >= 256 && report.max_relative_error < 1e-4;
        parts.push(format!(
            "{arch}: {} coords, max rel err {:.2e}",
            report.coordinates, report.max_relative_error
        ));
    }
    check(ok, parts.join("; ")).and_then(|d| within_time(start.elapsed(), Duration::from_secs(120), d))
}

fn event_integration() -> Outcome {
    let events = common::fuzz_event_frames(1000, 8)?;
    Ok(format!("1000 streams, {events} events, exact match and counts conserved"))
}

fn mnist_root() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/mnist-5k"))
}

const DESK_HNN: &str = "c16k3s1-BN-LIF-MPk2s2-c16k3s1-BN-SIT-MPk2s2-FC128-LIF-FC100-LIF-APk10s10";

fn desk_config(architecture: &str) -> TrainConfig {
    let root = mnist_root();
    let mut config = TrainConfig::new(
        architecture,
        DatasetConfig {
            train_images: root.join("train-images-idx3-ubyte.gz"),
            train_labels: root.join("train-labels-idx1-ubyte.gz"),
            test_images: root.join("t10k-images-idx3-ubyte.gz"),
            test_labels: root.join("t10k-labels-idx1-ubyte.gz"),
            train_limit: Some(2048),
            test_limit: Some(1000),
        },
    );
    config.timesteps = 4;
    config.epochs = 10;
    config.seed = 1;
    config
}

struct DeskRuns {
    sets: (ImageSet, ImageSet),
    sit: Option<(Trained, Duration)>,
}

impl DeskRuns {
    fn load() -> Result<Self, String> {
        let sets = sitnn::train::load_datasets(&desk_config(DESK_HNN)).map_err(|e| e.to_string())?;
        Ok(Self { sets, sit: None })
    }

    fn run(&self, architecture: &str) -> Result<(Trained, Duration), String> {
        let start = Instant::now();
        let trained = train_on(&desk_config(architecture), &self.sets.0, &self.sets.1).map_err(|e| e.to_string())?;
        Ok((trained, start.elapsed()))
    }
}

fn desk_training(runs: &mut DeskRuns) -> Outcome {
    let (trained, elapsed) = runs.run(DESK_HNN)?;
    let report = &trained.report;
    let ma = &report.loss_moving_average;
    let monotone = ma.windows(2).all(|w| w[1] <= w[0]);
    let acc = report.final_accuracy;
    let detail = format!(
        "{} train / {} test, accuracy {:.1}%, moving-average loss {:.4} -> {:.4} (non-increasing: {monotone})",
        runs.sets.0.len(),
        runs.sets.1.len(),
        100.0 * acc,
        ma[0],
        ma[ma.len() - 1]
    );
    runs.sit = Some((trained, elapsed));
    check(acc >= 0.90 && monotone, detail).and_then(|d| within_time(elapsed, Duration::from_secs(1800), d))
}

fn hybrid_sanity(runs: &mut DeskRuns) -> Outcome {
    let sit = match &runs.sit {
        Some((t, _)) => t.report.final_accuracy,
        None => runs.run(DESK_HNN)?.0.report.final_accuracy,
    };
    let twin = |kind: &str| DESK_HNN.replace("-SIT-", &format!("-{kind}-"));
    let lif = runs.run(&twin("LIF"))?.0.report.final_accuracy;
    let izh = runs.run(&twin("IZH"))?.0.report.final_accuracy;
    let (sit, lif, izh) = (100.0 * sit, 100.0 * lif, 100.0 * izh);
    check(
        (sit - lif).abs() <= 3.0 && izh <= sit - 5.0 && izh <= lif - 5.0,
        format!("SIT {sit:.1}%, all-LIF {lif:.1}%, vanilla IZH {izh:.1}%"),
    )
}

fn bright_dark(n: usize) -> ImageSet {
    let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
    let mut data = Vec::with_capacity(n * 64);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let bright = i % 2 == 0;
        data.extend((0..64).map(|_| if bright { rng.random_range(0.6..1.0) } else { rng.random_range(0.0..0.2) }));
        labels.push(u8::from(bright));
    }
    ImageSet::new(Tensor::new(vec![n, 8, 8], data).unwrap(), labels).unwrap()
}

fn round_trips() -> Outcome {
    let mut parts = Vec::new();
    for (dataset, text) in REFERENCE_ARCHITECTURES {
        let layers = parse_architecture(text).map_err(|e| format!("{dataset}: {e}"))?;
        let again = parse_architecture(&format_architecture(&layers)).map_err(|e| format!("{dataset}: {e}"))?;
        if again != layers {
            return Err(format!("{dataset}: architecture does not round-trip"));
        }
    }
    parts.push("6 reference architectures".to_string());

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for gzip in [false, true] {
        let pixels: Vec<f32> = (0..20 * 28 * 28).map(|_| f32::from(rng.random::<u8>()) / 255.0).collect();
        let images = IdxData::Images(Tensor::new(vec![20, 28, 28], pixels).unwrap());
        let labels = IdxData::Labels((0..20).map(|_| rng.random_range(0..10)).collect());
        for (name, data) in [("images", &images), ("labels", &labels)] {
            let path = dir.path().join(format!("{name}-{gzip}"));
            write_idx(&path, data, gzip).map_err(|e| e.to_string())?;
            if read_idx(&path).map_err(|e| e.to_string())? != *data {
                return Err(format!("IDX {name} (gzip {gzip}) differs after round-trip"));
            }
        }
    }
    parts.push("IDX raw and gzip".to_string());

    let (train, test) = (bright_dark(32), bright_dark(16));
    let mut config = TrainConfig::new("c4k3s1-BN-SIT-MPk2s2-FC10-LIF", DatasetConfig {
        train_images: "unused".into(),
        train_labels: "unused".into(),
        test_images: "unused".into(),
        test_labels: "unused".into(),
        train_limit: None,
        test_limit: None,
    });
    config.epochs = 2;
    let trained = train_on(&config, &train, &test).map_err(|e| e.to_string())?;
    let prov = &trained.report.provenance;
    let bytes = encode_checkpoint(&trained.network, Some(&trained.optimizer), prov).map_err(|e| e.to_string())?;
    let back = decode_checkpoint(&bytes).map_err(|e| e.to_string())?;
    let same_tensors = back.network.params() == trained.network.params()
        && back.network.buffers() == trained.network.buffers()
        && back.optimizer.as_ref() == Some(&trained.optimizer)
        && back.provenance == *prov;
    let again = encode_checkpoint(&back.network, back.optimizer.as_ref(), &back.provenance).map_err(|e| e.to_string())?;
    if !same_tensors || again != bytes {
        return Err("checkpoint differs after round-trip".into());
    }
    parts.push(format!("checkpoint ({} bytes) bit-exact", bytes.len()));
    Ok(parts.join(", "))
}

fn main() {
    // `cargo test` passes harness flags such as `--quiet`; filtering by name
    // is not supported, so they are ignored.
    let mut runs = None;
    let mut desk = |f: fn(&mut DeskRuns) -> Outcome| -> Outcome {
        if runs.is_none() {
            runs = Some(DeskRuns::load()?);
        }
        f(runs.as_mut().expect("loaded"))
    };
    let criteria: Vec<(&str, Box<dyn FnOnce() -> Outcome>)> = vec![
        ("fixed-point reproduction", Box::new(fixed_point_reproduction)),
        ("vanilla fixed points", Box::new(vanilla_fixed_points)),
        ("standardization formula", Box::new(standardization_formula)),
        ("lower-equilibrium stability suite", Box::new(theorem_one)),
        ("LIF saturation vs SIT", Box::new(proposition_one)),
        ("adaptation and bursting", Box::new(bionic_behaviors)),
        ("gradient fidelity", Box::new(gradient_fidelity)),
        ("event integration", Box::new(event_integration)),
    ];
    let mut failures = 0;
    let mut report = |n: usize, name: &str, outcome: Outcome, elapsed: Duration| {
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failures += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {n:>2} {name}: {detail} [{elapsed:.1?}]");
    };
    for (i, (name, f)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        report(i + 1, name, outcome, start.elapsed());
    }
    let start = Instant::now();
    let outcome = desk(desk_training);
    report(9, "desk-scale training", outcome, start.elapsed());
    let start = Instant::now();
    let outcome = desk(hybrid_sanity);
    report(10, "hybrid sanity", outcome, start.elapsed());
    let start = Instant::now();
    let outcome = round_trips();
    report(11, "parser and round-trips", outcome, start.elapsed());

    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
    println!("all 11 criteria passed");
}
