use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::network::{mse_rate_loss, ForwardOptions, Network};
use crate::neuron::SpikeMode;
use crate::tensor::Tensor;

/// Gradients smaller than this are compared absolutely rather than
/// relatively, so that round-off on near-zero entries does not dominate.
pub const RELATIVE_FLOOR: f64 = 1e-6;

pub const MAX_PARAMETERS: usize = 10_000;
pub const MAX_TIMESTEPS: usize = 8;

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Coordinates compared; all of them when the network is smaller.
    pub coordinates: usize,
    pub step: f64,
    pub seed: u64,
    /// Train-mode pass (batch statistics, dropout masks from `seed`) or
    /// eval-mode pass.
    pub train: bool,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            coordinates: 256,
            step: 1e-4,
            seed: 0,
            train: true,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub coordinates: usize,
    /// Parameter name, flat index, analytic and numeric value of the worst
    /// coordinate.
    pub worst: (String, usize, f64, f64),
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Compares backpropagated gradients of the rate loss with central
/// differences, with the spike step replaced by the sigmoid surrogate in the
/// forward pass. Both passes of every difference share one dropout mask.
pub fn gradient_check(
    net: &Network<f64>,
    frames: &Tensor<f64>,
    targets: &[usize],
    options: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let params = net.num_parameters();
    if params > MAX_PARAMETERS {
        return Err(Error::InvalidParameter(format!(
            "gradient check needs at most {MAX_PARAMETERS} parameters, network has {params}"
        )));
    }
    let t = frames.shape().first().copied().unwrap_or(0);
    if t > MAX_TIMESTEPS {
        return Err(Error::InvalidParameter(format!(
            "gradient check needs T <= {MAX_TIMESTEPS}, got {t}"
        )));
    }
    let forward = ForwardOptions {
        train: options.train,
        spike_mode: SpikeMode::Soft,
        seed: options.seed,
    };
    let loss_of = |n: &Network<f64>| -> Result<f64> {
        let pass = n.forward_sequence(frames, forward)?;
        let (loss, _) = mse_rate_loss(&pass.output, targets)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                context: "gradient check loss".into(),
                value: loss,
            });
        }
        Ok(loss)
    };

    let pass = net.forward_sequence(frames, forward)?;
    let (_, loss_grad) = mse_rate_loss(&pass.output, targets)?;
    let grads = net.backward_bptt(&pass.caches, &loss_grad)?;
    if !grads.all_finite() {
        return Err(Error::NonFinite {
            context: "analytic gradient".into(),
            value: f64::NAN,
        });
    }

    // flat coordinate -> (tensor, offset)
    let sizes: Vec<usize> = net.params().iter().map(|p| p.len()).collect();
    let locate = |mut flat: usize| {
        for (i, &n) in sizes.iter().enumerate() {
            if flat < n {
                return (i, flat);
            }
            flat -= n;
        }
        unreachable!("coordinate within parameter count")
    };
    let mut coords: Vec<usize> = if params <= options.coordinates {
        (0..params).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        sample(&mut rng, params, options.coordinates).into_vec()
    };
    coords.sort_unstable();

    let names = net.param_names();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        coordinates: coords.len(),
        worst: (String::new(), 0, 0.0, 0.0),
    };
    let mut probe = net.clone();
    for flat in coords {
        let (ti, off) = locate(flat);
        let original = net.params()[ti].data()[off];
        probe.params_mut()[ti].data_mut()[off] = original + options.step;
        let up = loss_of(&probe)?;
        probe.params_mut()[ti].data_mut()[off] = original - options.step;
        let down = loss_of(&probe)?;
        probe.params_mut()[ti].data_mut()[off] = original;
        let numeric = (up - down) / (2.0 * options.step);
        let analytic = grads.tensors[ti].data()[off];
        let err = relative_error(analytic, numeric);
        if err > report.max_relative_error || report.worst.0.is_empty() {
            report.max_relative_error = report.max_relative_error.max(err);
            report.worst = (names[ti].clone(), off, analytic, numeric);
        }
    }
    Ok(report)
}
