use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{rate_encode, ImageSet};
use crate::error::{Error, Result};
use crate::network::{argmax, firing_rates, mse_rate_loss, repeat_frames, ForwardOptions, Network};
use crate::provenance::Provenance;
use crate::tensor::Tensor;

use super::config::{Encoding, TrainConfig};
use super::optim::{adam_update, cosine_lr, AdamState};

pub const MOVING_AVERAGE_WINDOW: usize = 35;
const EVAL_BATCH: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub learning_rate: f64,
    /// Mean mini-batch loss over the epoch.
    pub train_loss: f64,
    pub test_accuracy: f64,
    pub batches: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub provenance: Provenance,
    pub architecture: String,
    pub epochs: Vec<EpochRecord>,
    /// Trailing moving averages over at most `MOVING_AVERAGE_WINDOW` epochs.
    pub loss_moving_average: Vec<f64>,
    pub accuracy_moving_average: Vec<f64>,
    pub final_accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
}

impl RunReport {
    /// Same curves, ignoring wall-clock timings.
    pub fn same_curves(&self, other: &Self) -> bool {
        let strip = |r: &Self| {
            r.epochs
                .iter()
                .map(|e| (e.epoch, e.learning_rate, e.train_loss, e.test_accuracy, e.batches))
                .collect::<Vec<_>>()
        };
        strip(self) == strip(other) && self.final_accuracy == other.final_accuracy
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Per-epoch CSV behind a provenance header line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", self.provenance.header_line())?;
        writeln!(
            out,
            "epoch,learning_rate,train_loss,test_accuracy,loss_moving_average,accuracy_moving_average,seconds"
        )?;
        for (i, e) in self.epochs.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{},{},{:.3}",
                e.epoch,
                e.learning_rate,
                e.train_loss,
                e.test_accuracy,
                self.loss_moving_average[i],
                self.accuracy_moving_average[i],
                e.seconds
            )?;
        }
        Ok(())
    }
}

/// Trailing mean over the last `window` values (fewer at the start).
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    (0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            values[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
        })
        .collect()
}

/// A finished run: weights, optimizer moments and the report.
#[derive(Clone, Debug)]
pub struct Trained {
    pub network: Network<f32>,
    pub optimizer: AdamState<f32>,
    pub report: RunReport,
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut x = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    // splitmix64 finalizer
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// `[T, B, ...]` input frames for the samples at `indices`.
pub fn encode_batch(
    set: &ImageSet,
    indices: &[usize],
    timesteps: usize,
    encoding: Encoding,
    seed: u64,
) -> Result<Tensor<f32>> {
    let images = set.select(indices).images;
    match encoding {
        Encoding::Direct => Ok(repeat_frames(&images, timesteps)),
        Encoding::Rate => rate_encode(&images, timesteps, seed),
    }
}

/// Top-1 accuracy from argmax of output firing rates, in eval mode.
pub fn evaluate(
    net: &Network<f32>,
    set: &ImageSet,
    timesteps: usize,
    encoding: Encoding,
    seed: u64,
) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::InvalidParameter("evaluation set is empty".into()));
    }
    let mut correct = 0usize;
    let order: Vec<usize> = (0..set.len()).collect();
    for (b, chunk) in order.chunks(EVAL_BATCH).enumerate() {
        let frames = encode_batch(set, chunk, timesteps, encoding, mix(seed, u64::MAX, b as u64))?;
        let out = net.forward_sequence(&frames, ForwardOptions::eval())?.output;
        for (rates, &i) in firing_rates(&out)?.iter().zip(chunk) {
            if argmax(rates) == set.labels[i] as usize {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / set.len() as f64)
}

fn check_sets(net: &Network<f32>, train: &ImageSet, test: &ImageSet) -> Result<()> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::InvalidParameter("training and test sets must be non-empty".into()));
    }
    for set in [train, test] {
        if set.image_shape() != net.input_shape() {
            return Err(Error::ShapeMismatch {
                layer: 0,
                expected: net.input_shape().to_vec(),
                actual: set.image_shape().to_vec(),
            });
        }
        if set.classes() > net.output_features() {
            return Err(Error::InvalidParameter(format!(
                "{} classes but the network only has {} outputs",
                set.classes(),
                net.output_features()
            )));
        }
    }
    Ok(())
}

/// Builds a fresh network for `config` and trains it on the given sets.
pub fn train_on(config: &TrainConfig, train_set: &ImageSet, test_set: &ImageSet) -> Result<Trained> {
    config.validate()?;
    let net = Network::from_architecture(
        &config.architecture,
        train_set.image_shape(),
        &config.neuron_bank()?,
        config.dropout,
        config.seed,
    )?;
    train_network(config, net, train_set, test_set)
}

/// Trains `net` in place of a freshly built one.
pub fn train_network(
    config: &TrainConfig,
    mut net: Network<f32>,
    train_set: &ImageSet,
    test_set: &ImageSet,
) -> Result<Trained> {
    check_sets(&net, train_set, test_set)?;
    let mut optimizer = AdamState::new(&net.params());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let batches = train_set
        .len()
        .div_ceil(config.batch_size)
        .min(config.max_batches_per_epoch);
    let mut records = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let started = Instant::now();
        let lr = cosine_lr(config.learning_rate, epoch, config.schedule_period)?;
        let mut rng = ChaCha8Rng::seed_from_u64(mix(config.seed, epoch as u64 + 1, 0));
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).take(batches).enumerate() {
            let batch_seed = mix(config.seed, epoch as u64 + 1, b as u64 + 1);
            let frames = encode_batch(train_set, chunk, config.timesteps, config.encoding, batch_seed)?;
            let targets: Vec<usize> = chunk.iter().map(|&i| train_set.labels[i] as usize).collect();
            let pass = net.forward_sequence(&frames, ForwardOptions::train(batch_seed))?;
            let (loss, grad) = mse_rate_loss(&pass.output, &targets)?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch: epoch + 1,
                    batch: b + 1,
                    loss,
                });
            }
            let grads = net.backward_bptt(&pass.caches, &grad)?;
            if !grads.all_finite() {
                return Err(Error::Diverged {
                    epoch: epoch + 1,
                    batch: b + 1,
                    loss: grads.max_abs(),
                });
            }
            net.commit_batch_statistics(&pass.caches);
            let step = optimizer.step + 1;
            adam_update(&mut net.params_mut(), &grads, &mut optimizer, lr, step)?;
            loss_sum += loss;
        }
        let accuracy = evaluate(&net, test_set, config.timesteps, config.encoding, config.seed)?;
        let record = EpochRecord {
            epoch: epoch + 1,
            learning_rate: lr,
            train_loss: loss_sum / batches as f64,
            test_accuracy: accuracy,
            batches,
            seconds: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {} loss {:.5} accuracy {:.4} ({:.1}s)",
            record.epoch,
            record.train_loss,
            record.test_accuracy,
            record.seconds
        );
        records.push(record);
    }
    let losses: Vec<f64> = records.iter().map(|e| e.train_loss).collect();
    let accs: Vec<f64> = records.iter().map(|e| e.test_accuracy).collect();
    let report = RunReport {
        provenance: config.provenance(),
        architecture: net.architecture(),
        loss_moving_average: moving_average(&losses, MOVING_AVERAGE_WINDOW),
        accuracy_moving_average: moving_average(&accs, MOVING_AVERAGE_WINDOW),
        final_accuracy: *accs.last().expect("at least one epoch"),
        epochs: records,
        checkpoint: None,
    };
    Ok(Trained {
        network: net,
        optimizer,
        report,
    })
}

/// Loads the datasets named in `config` (applying the limits) and trains.
pub fn train(config: &TrainConfig) -> Result<Trained> {
    let (train_set, test_set) = load_datasets(config)?;
    train_on(config, &train_set, &test_set)
}

pub fn load_datasets(config: &TrainConfig) -> Result<(ImageSet, ImageSet)> {
    let d = &config.dataset;
    let mut train_set = ImageSet::load(&d.train_images, &d.train_labels)?;
    let mut test_set = ImageSet::load(&d.test_images, &d.test_labels)?;
    if let Some(n) = d.train_limit {
        train_set = train_set.take(n);
    }
    if let Some(n) = d.test_limit {
        test_set = test_set.take(n);
    }
    Ok((train_set, test_set))
}
