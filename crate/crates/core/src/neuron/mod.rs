//! Discrete-time single-neuron dynamics.
//!
//! Every model is advanced with the same charge / fire / reset / recover
//! sequence:
//!
//! ```text
//! Y_t = charge(U_{t-1}, V_{t-1}, I_t)
//! S_t = [Y_t >= U_th]
//! U_t = (1 - S_t) Y_t + S_t c
//! H_t = recover(U_t, V_{t-1})
//! V_t = H_t + S_t d
//! ```
//!
//! The recovery variable is driven by the post-reset membrane `U_t`. Models
//! without recovery (LIF, QIF) keep `V` at zero.

mod izhikevich;
mod lif;
mod qif;
mod registry;
mod sit;
mod surrogate;

use std::fmt::Debug;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::real::{cast, Real};

pub use izhikevich::{izhikevich_vanilla_step, IzhikevichVanilla};
pub use lif::{lif_step, Lif};
pub use qif::{qif_step, Qif};
pub use registry::{model_for, NeuronRegistry, ParamOverrides};
pub use sit::{sit_step, Sit};
pub use surrogate::{surrogate, surrogate_grad, surrogate_value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeuronFamily {
    Lif,
    Qif,
    IzhikevichVanilla,
    Sit,
}

impl NeuronFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            NeuronFamily::Lif => "lif",
            NeuronFamily::Qif => "qif",
            NeuronFamily::IzhikevichVanilla => "izhikevich_vanilla",
            NeuronFamily::Sit => "sit",
        }
    }
}

impl std::fmt::Display for NeuronFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-neuron constants. Fields a model does not use are ignored by it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuronParams {
    pub family: NeuronFamily,
    /// Recovery time scale.
    pub a: f64,
    /// Recovery sensitivity to the membrane potential.
    pub b: f64,
    /// Post-spike reset voltage.
    pub c: f64,
    /// Post-spike recovery increment.
    pub d: f64,
    /// Quadratic gain.
    pub k: f64,
    pub u_r: f64,
    pub u_c: f64,
    pub tau: f64,
    pub u_threshold: f64,
    pub u_reset: f64,
    /// Vanilla Izhikevich only: use `0.04u^2 + 5u + 140 - v` rather than the
    /// misprinted `0.04u^2 + 5v + 140 - u`.
    #[serde(default = "default_true")]
    pub corrected_form: bool,
}

fn default_true() -> bool {
    true
}

pub const DEFAULT_TAU: f64 = 2.0;

impl NeuronParams {
    pub fn lif(tau: f64) -> Self {
        Self {
            family: NeuronFamily::Lif,
            a: 0.0,
            b: 0.0,
            c: 0.0,
            d: 0.0,
            k: 0.0,
            u_r: 0.0,
            u_c: 0.0,
            tau,
            u_threshold: 1.0,
            u_reset: 0.0,
            corrected_form: true,
        }
    }

    /// QIF sharing the SIT voltage constants.
    pub fn qif() -> Self {
        Self {
            family: NeuronFamily::Qif,
            k: 1.0,
            u_r: -0.05,
            u_c: 1.0,
            ..Self::lif(DEFAULT_TAU)
        }
    }

    /// Standardized Izhikevich tonic neuron.
    pub fn sit() -> Self {
        Self {
            family: NeuronFamily::Sit,
            a: 0.002,
            b: 0.02,
            c: 0.0,
            d: 0.2,
            k: 1.0,
            u_r: -0.05,
            u_c: 1.0,
            tau: DEFAULT_TAU,
            u_threshold: 1.0,
            u_reset: 0.0,
            corrected_form: true,
        }
    }

    pub fn sit_bursting() -> Self {
        Self {
            a: 0.35,
            b: 0.6,
            c: 0.0,
            d: 0.5,
            ..Self::sit()
        }
    }

    /// Original Izhikevich tonic-spiking constants on the mV scale.
    pub fn izhikevich_tonic() -> Self {
        Self {
            family: NeuronFamily::IzhikevichVanilla,
            a: 0.02,
            b: 0.2,
            c: -65.0,
            d: 8.0,
            k: 0.04,
            u_r: 0.0,
            u_c: 0.0,
            tau: DEFAULT_TAU,
            u_threshold: 30.0,
            u_reset: -65.0,
            corrected_form: true,
        }
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("a", self.a),
            ("b", self.b),
            ("c", self.c),
            ("d", self.d),
            ("k", self.k),
            ("u_r", self.u_r),
            ("u_c", self.u_c),
            ("tau", self.tau),
            ("u_threshold", self.u_threshold),
            ("u_reset", self.u_reset),
        ] {
            ensure_finite(name, value)?;
        }
        if self.tau <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct NeuronState<F = f64> {
    pub u: F,
    pub v: F,
}

impl<F: Real> NeuronState<F> {
    pub fn new(u: F, v: F) -> Self {
        Self { u, v }
    }
}

/// Intermediates of one step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepTrace<F = f64> {
    /// Membrane potential before reset.
    pub y: F,
    /// Recovery variable before the spike increment.
    pub h: F,
    /// Spike indicator (exactly 0 or 1 in hard mode).
    pub s: F,
    pub u_post: F,
    pub v_post: F,
}

impl<F: Real> StepTrace<F> {
    pub fn spiked(&self) -> bool {
        self.s > F::zero()
    }

    pub fn state(&self) -> NeuronState<F> {
        NeuronState::new(self.u_post, self.v_post)
    }
}

/// How the spike indicator is produced in the forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpikeMode {
    /// Heaviside step `S = [Y >= U_th]`.
    #[default]
    Hard,
    /// `S = sigma(Y - U_th)`, the smooth relaxation used for gradient checks.
    Soft,
}

/// Discrete update rule of one neuron family, generic over the element type.
///
/// The partial derivatives are those of the charge and recovery maps with
/// respect to their direct arguments; the backward pass composes them with
/// the reset and spike derivatives.
pub trait Dynamics<F: Real> {
    /// `Y_t` from the previous state and the input current.
    fn charge(&self, u: F, v: F, input: F) -> F;
    /// `dY_t / dU_{t-1}`.
    fn charge_du(&self, u: F) -> F;
    /// `dY_t / dV_{t-1}`.
    fn charge_dv(&self) -> F;
    /// `dY_t / dI_t`.
    fn charge_dinput(&self) -> F;
    /// `H_t` from the post-reset membrane and the previous recovery value.
    fn recover(&self, u_post: F, v: F) -> F;
    /// `dH_t / dU_t`.
    fn recover_du(&self) -> F;
    /// `dH_t / dV_{t-1}`.
    fn recover_dv(&self) -> F;
    fn threshold(&self) -> F;
    fn reset_potential(&self) -> F;
    fn recovery_increment(&self) -> F;

    /// Advances every neuron of a slice by one step. `u` and `v` are updated
    /// in place; `y` and `s` receive the pre-reset membrane and the spikes.
    fn advance_slice(
        &self,
        mode: SpikeMode,
        u: &mut [F],
        v: &mut [F],
        input: &[F],
        y: &mut [F],
        s: &mut [F],
    ) {
        for i in 0..u.len() {
            let t = advance::<F, Self>(self, NeuronState::new(u[i], v[i]), input[i], mode);
            u[i] = t.u_post;
            v[i] = t.v_post;
            y[i] = t.y;
            s[i] = t.s;
        }
    }

    /// One reverse step of BPTT over a slice of neurons.
    ///
    /// On entry `gu`, `gv` hold `dL/dU_t`, `dL/dV_t`; on exit they hold
    /// `dL/dU_{t-1}`, `dL/dV_{t-1}`. `grad_s` is the gradient reaching `S_t`
    /// from downstream layers and `grad_input` receives `dL/dI_t`. The reset
    /// multiplexer is differentiated with `dS/dY = sigma'(Y - U_th)`.
    #[allow(clippy::too_many_arguments)]
    fn backward_slice(
        &self,
        u_prev: &[F],
        y: &[F],
        s: &[F],
        grad_s: &[F],
        gu: &mut [F],
        gv: &mut [F],
        grad_input: &mut [F],
    ) {
        let th = self.threshold();
        let c = self.reset_potential();
        let d = self.recovery_increment();
        let (cdv, cdi) = (self.charge_dv(), self.charge_dinput());
        let (rdu, rdv) = (self.recover_du(), self.recover_dv());
        for i in 0..y.len() {
            let theta = surrogate_grad(y[i] - th);
            let du_dy = F::one() - s[i] + (c - y[i]) * theta;
            let gy = grad_s[i] * theta + gu[i] * du_dy + gv[i] * (rdu * du_dy + d * theta);
            grad_input[i] = gy * cdi;
            gu[i] = gy * self.charge_du(u_prev[i]);
            gv[i] = gy * cdv + gv[i] * rdv;
        }
    }
}

/// A neuron model selectable by name at runtime.
///
/// Besides the discrete update it exposes the continuous right-hand side,
/// which the phase-plane analysis works on.
pub trait NeuronModel: Dynamics<f32> + Dynamics<f64> + Send + Sync + Debug {
    fn name(&self) -> &str;

    fn params(&self) -> &NeuronParams;

    /// 1 for membrane-only models, 2 when a recovery variable exists.
    fn dimension(&self) -> usize;

    /// `(dU/dt, dV/dt)` of the continuous model.
    fn vector_field(&self, u: f64, v: f64, input: f64) -> (f64, f64);

    /// Jacobian of [`NeuronModel::vector_field`] with respect to `(u, v)`.
    fn jacobian(&self, u: f64, v: f64) -> [[f64; 2]; 2];

    /// The `v` value on the U-nullcline (`dU/dt = 0`) at `u`.
    fn u_nullcline(&self, u: f64, input: f64) -> f64;

    /// The `v` value on the V-nullcline (`dV/dt = 0`) at `u`, if the model
    /// has a recovery variable.
    fn v_nullcline(&self, u: f64) -> Option<f64>;

    /// Coefficients of the equilibrium polynomial in `u` together with the
    /// line `v = slope * u + offset` on which equilibria lie. `None` for
    /// models whose drift is not quadratic.
    fn equilibrium_quadratic(&self, input: f64) -> Option<EquilibriumQuadratic>;

    /// Initial state of every simulation: `(u_reset, 0)`.
    fn rest_state(&self) -> NeuronState {
        NeuronState::new(self.params().u_reset, 0.0)
    }

    /// One checked step in `f64`.
    fn step(&self, state: NeuronState, input: f64) -> Result<StepTrace> {
        ensure_finite("membrane potential", state.u)?;
        ensure_finite("recovery variable", state.v)?;
        ensure_finite("input current", input)?;
        let trace = advance::<f64, Self>(self, state, input, SpikeMode::Hard);
        ensure_finite("membrane potential after step", trace.u_post)?;
        ensure_finite("recovery variable after step", trace.v_post)?;
        Ok(trace)
    }
}

/// `c2 u^2 + c1 u + c0 = 0`, with equilibria at `v = slope * u + offset`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EquilibriumQuadratic {
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
    pub slope: f64,
    pub offset: f64,
}

/// Advances one neuron by one step.
#[inline]
pub fn advance<F, D>(model: &D, state: NeuronState<F>, input: F, mode: SpikeMode) -> StepTrace<F>
where
    F: Real,
    D: Dynamics<F> + ?Sized,
{
    let y = model.charge(state.u, state.v, input);
    let threshold = model.threshold();
    let reset = model.reset_potential();
    let (s, u_post) = match mode {
        SpikeMode::Hard => {
            if y >= threshold {
                (F::one(), reset)
            } else {
                (F::zero(), y)
            }
        }
        SpikeMode::Soft => {
            let s = surrogate_value(y - threshold);
            (s, (F::one() - s) * y + s * reset)
        }
    };
    let h = model.recover(u_post, state.v);
    let v_post = h + s * model.recovery_increment();
    StepTrace {
        y,
        h,
        s,
        u_post,
        v_post,
    }
}

/// Output of [`simulate_constant_input`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpikeTrain {
    pub traces: Vec<StepTrace>,
    pub spikes: Vec<u8>,
    /// Gaps between consecutive spike indices.
    pub isi: Vec<usize>,
}

impl SpikeTrain {
    pub fn spike_count(&self) -> usize {
        self.spikes.iter().filter(|&&s| s == 1).count()
    }

    pub fn spike_indices(&self) -> Vec<usize> {
        self.spikes
            .iter()
            .enumerate()
            .filter_map(|(i, &s)| (s == 1).then_some(i))
            .collect()
    }

    /// Spike-frequency adaptation: inter-spike intervals never shrink.
    /// Needs at least two intervals.
    pub fn is_adapting(&self) -> bool {
        self.isi.len() >= 2 && self.isi.windows(2).all(|w| w[1] >= w[0])
    }

    /// Grouped firing: some interval is at least twice the shortest one.
    pub fn is_bursting(&self) -> bool {
        match (self.isi.iter().min(), self.isi.iter().max()) {
            (Some(&lo), Some(&hi)) => hi >= 2 * lo,
            _ => false,
        }
    }

    /// CSV with columns `step,y,u_post,v_post,s`, steps numbered from 1.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "step,y,u_post,v_post,s")?;
        for (i, t) in self.traces.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{}",
                i + 1,
                t.y,
                t.u_post,
                t.v_post,
                self.spikes[i]
            )?;
        }
        Ok(())
    }

    pub fn write_isi_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "index,isi")?;
        for (i, gap) in self.isi.iter().enumerate() {
            writeln!(out, "{i},{gap}")?;
        }
        Ok(())
    }
}

/// Drives a model from rest with a constant input.
pub fn simulate_constant_input(
    model: &dyn NeuronModel,
    input: f64,
    steps: usize,
) -> Result<SpikeTrain> {
    simulate(model, model.rest_state(), std::iter::repeat_n(input, steps))
}

/// Drives a model from `initial` with an arbitrary input schedule.
pub fn simulate(
    model: &dyn NeuronModel,
    initial: NeuronState,
    inputs: impl IntoIterator<Item = f64>,
) -> Result<SpikeTrain> {
    let mut state = initial;
    let mut traces = Vec::new();
    for input in inputs {
        let trace = model.step(state, input)?;
        state = trace.state();
        traces.push(trace);
    }
    if traces.is_empty() {
        return Err(Error::InvalidParameter("steps must be at least 1".into()));
    }
    let spikes: Vec<u8> = traces.iter().map(|t| u8::from(t.spiked())).collect();
    let indices: Vec<usize> = spikes
        .iter()
        .enumerate()
        .filter_map(|(i, &s)| (s == 1).then_some(i))
        .collect();
    let isi = indices.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(SpikeTrain {
        traces,
        spikes,
        isi,
    })
}

pub(crate) fn require_family(params: &NeuronParams, family: NeuronFamily, op: &'static str) -> Result<()> {
    if params.family == family {
        Ok(())
    } else {
        Err(Error::UnsupportedFamily {
            op,
            family: params.family.to_string(),
        })
    }
}

#[inline]
pub(crate) fn p<F: Real>(value: f64) -> F {
    cast(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_input_from_rest_never_spikes() {
        let registry = NeuronRegistry::builtin();
        for name in registry.names() {
            let model = registry.create(name).unwrap();
            let train = simulate_constant_input(model.as_ref(), 0.0, 10).unwrap();
            assert_eq!(train.spike_count(), 0, "{name}");
        }
    }

    #[test]
    fn zero_steps_rejected() {
        let model = Lif::new(NeuronParams::lif(2.0)).unwrap();
        assert!(simulate_constant_input(&model, 1.0, 0).is_err());
    }

    #[test]
    fn isi_lists_gaps_between_spikes() {
        let model = Sit::new(NeuronParams::sit()).unwrap();
        let train = simulate_constant_input(&model, 2.0, 100).unwrap();
        let idx = train.spike_indices();
        assert_eq!(train.isi.len(), idx.len() - 1);
        assert_eq!(train.isi[0], idx[1] - idx[0]);
    }

    #[test]
    fn csv_has_one_row_per_step() {
        let model = Lif::new(NeuronParams::lif(2.0)).unwrap();
        let train = simulate_constant_input(&model, 2.0, 10).unwrap();
        let mut buf = Vec::new();
        train.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "step,y,u_post,v_post,s");
        assert_eq!(lines.len(), 11);
        assert!(lines[1..].iter().all(|l| l.ends_with(",1")));
    }

    #[test]
    fn soft_mode_blends_reset() {
        let model = Sit::new(NeuronParams::sit()).unwrap();
        let hard = advance::<f64, _>(&model, NeuronState::new(0.0, 0.0), 2.0, SpikeMode::Hard);
        let soft = advance::<f64, _>(&model, NeuronState::new(0.0, 0.0), 2.0, SpikeMode::Soft);
        assert_eq!(hard.y, soft.y);
        let s = surrogate_value(soft.y - 1.0);
        assert!((soft.u_post - (1.0 - s) * soft.y).abs() < 1e-15);
    }
}
