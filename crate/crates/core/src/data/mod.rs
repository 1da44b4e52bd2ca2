//! Dataset readers, spike encoders and firing-rate exports.

mod events;
mod idx;

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::network::{ForwardOptions, Layer, Network};
use crate::real::{cast, Real};
use crate::tensor::Tensor;

pub use events::{
    events_to_frames, slice_bounds, Event, EventReader, EventStream, FrameTensor, TextEventReader,
};
pub use idx::{encode_idx, parse_idx, read_idx, write_idx, IdxData, ImageSet, IMAGES_MAGIC, LABELS_MAGIC};

/// Bernoulli spikes with probability equal to the pixel value, drawn
/// independently per step. Output is `[T, ...image shape]`.
pub fn rate_encode(image: &Tensor<f32>, timesteps: usize, seed: u64) -> Result<Tensor<f32>> {
    if timesteps == 0 {
        return Err(Error::InvalidParameter("T must be at least 1".into()));
    }
    if let Some(bad) = image.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidParameter(format!(
            "rate encoding needs values in [0, 1], got {bad}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(timesteps * image.len());
    for _ in 0..timesteps {
        data.extend(image.data().iter().map(|&p| {
            let draw: f32 = rng.random();
            if draw < p {
                1.0
            } else {
                0.0
            }
        }));
    }
    let mut shape = vec![timesteps];
    shape.extend_from_slice(image.shape());
    Tensor::new(shape, data)
}

/// Mean over steps and channels of `[T, C, H, W]` spikes: an `[H, W]` map of
/// firing rates.
pub fn firing_rate_featuremap<F: Real>(spikes: &Tensor<F>) -> Result<Tensor<f64>> {
    let [t, c, h, w] = *spikes.shape() else {
        return Err(Error::InvalidParameter(format!(
            "featuremap needs [T, C, H, W] spikes, got {:?}",
            spikes.shape()
        )));
    };
    if t == 0 || c == 0 {
        return Err(Error::InvalidParameter("featuremap needs T >= 1 and C >= 1".into()));
    }
    let mut map = vec![0.0f64; h * w];
    for plane in spikes.data().chunks(h * w) {
        map.iter_mut().zip(plane).for_each(|(m, s)| *m += s.as_f64());
    }
    let scale = 1.0 / (t * c) as f64;
    map.iter_mut().for_each(|m| *m *= scale);
    Tensor::new(vec![h, w], map)
}

/// CSV with columns `y,x,rate`.
pub fn write_featuremap_csv<W: Write>(map: &Tensor<f64>, mut out: W) -> std::io::Result<()> {
    let w = map.shape()[1];
    writeln!(out, "y,x,rate")?;
    for (i, v) in map.data().iter().enumerate() {
        writeln!(out, "{},{},{v}", i / w, i % w)?;
    }
    Ok(())
}

pub const HISTOGRAM_BIN_WIDTH: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub count: u64,
}

/// Distribution of the input current reaching the first spiking layer.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistributionStats {
    /// Index of the layer whose output was sampled.
    pub layer: usize,
    pub count: usize,
    pub p5: f64,
    pub p95: f64,
    pub min: f64,
    pub max: f64,
    pub bin_width: f64,
    pub bins: Vec<HistogramBin>,
}

impl DistributionStats {
    /// CSV with columns `lower,upper,count`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "lower,upper,count")?;
        for b in &self.bins {
            writeln!(out, "{},{},{}", b.lower, b.lower + self.bin_width, b.count)?;
        }
        Ok(())
    }
}

/// Linear interpolation between order statistics, `q` in `[0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentiles and histogram of the current `I = W X` feeding the first
/// spiking layer, over every position and sample.
///
/// With `post_norm` the sample is taken after the normalization that
/// precedes the neurons, otherwise straight after the first convolution.
pub fn input_distribution_stats<F: Real>(
    net: &Network<F>,
    samples: &ImageSet,
    post_norm: bool,
) -> Result<DistributionStats> {
    if samples.is_empty() {
        return Err(Error::InvalidParameter("no samples".into()));
    }
    if !matches!(net.layers().first(), Some(Layer::Conv(_))) {
        return Err(Error::InvalidParameter(
            "input statistics need a network that starts with a convolution".into(),
        ));
    }
    let first_spiking = net
        .layers()
        .iter()
        .position(|l| matches!(l, Layer::Spiking(_)))
        .unwrap_or(net.layers().len());
    let layer = if post_norm && first_spiking > 0 {
        first_spiking - 1
    } else {
        0
    };
    let per: usize = samples.image_shape().iter().product();
    let mut values = Vec::new();
    const BATCH: usize = 32;
    for start in (0..samples.len()).step_by(BATCH) {
        let n = BATCH.min(samples.len() - start);
        let data: Vec<F> = samples.images.data()[start * per..(start + n) * per]
            .iter()
            .map(|&v| cast::<F>(f64::from(v)))
            .collect();
        let mut shape = vec![1, n];
        shape.extend_from_slice(samples.image_shape());
        let frames = Tensor::new(shape, data)?;
        let out = net.forward_to(&frames, ForwardOptions::eval(), layer)?;
        values.extend(out.data().iter().map(|v| v.as_f64()));
    }
    values.sort_by(f64::total_cmp);
    let min = values[0];
    let max = values[values.len() - 1];
    let first_bin = (min / HISTOGRAM_BIN_WIDTH).floor() as i64;
    let last_bin = (max / HISTOGRAM_BIN_WIDTH).floor() as i64;
    let mut bins: Vec<HistogramBin> = (first_bin..=last_bin)
        .map(|b| HistogramBin {
            lower: b as f64 * HISTOGRAM_BIN_WIDTH,
            count: 0,
        })
        .collect();
    for v in &values {
        let b = ((v / HISTOGRAM_BIN_WIDTH).floor() as i64 - first_bin) as usize;
        bins[b].count += 1;
    }
    Ok(DistributionStats {
        layer,
        count: values.len(),
        p5: percentile(&values, 0.05),
        p95: percentile(&values, 0.95),
        min,
        max,
        bin_width: HISTOGRAM_BIN_WIDTH,
        bins,
    })
}
