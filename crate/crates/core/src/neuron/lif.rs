use super::{
    p, require_family, Dynamics, EquilibriumQuadratic, NeuronFamily, NeuronModel, NeuronParams,
    NeuronState, StepTrace,
};
use crate::error::Result;
use crate::real::Real;

/// Leaky integrate-and-fire with hard reset to `u_reset`.
#[derive(Clone, Debug)]
pub struct Lif {
    params: NeuronParams,
}

impl Lif {
    pub fn new(params: NeuronParams) -> Result<Self> {
        require_family(&params, NeuronFamily::Lif, "Lif::new")?;
        params.validate()?;
        Ok(Self { params })
    }
}

pub fn lif_step(params: &NeuronParams, u_prev: f64, input: f64) -> Result<StepTrace> {
    Lif::new(params.clone())?.step(NeuronState::new(u_prev, 0.0), input)
}

impl<F: Real> Dynamics<F> for Lif {
    #[inline]
    fn charge(&self, u: F, _v: F, input: F) -> F {
        let tau: F = p(self.params.tau);
        u + (-(u - p(self.params.u_reset)) + input) / tau
    }

    #[inline]
    fn charge_du(&self, _u: F) -> F {
        F::one() - F::one() / p(self.params.tau)
    }

    #[inline]
    fn charge_dv(&self) -> F {
        F::zero()
    }

    #[inline]
    fn charge_dinput(&self) -> F {
        F::one() / p(self.params.tau)
    }

    #[inline]
    fn recover(&self, _u_post: F, v: F) -> F {
        v
    }

    #[inline]
    fn recover_du(&self) -> F {
        F::zero()
    }

    #[inline]
    fn recover_dv(&self) -> F {
        F::one()
    }

    #[inline]
    fn threshold(&self) -> F {
        p(self.params.u_threshold)
    }

    #[inline]
    fn reset_potential(&self) -> F {
        p(self.params.u_reset)
    }

    #[inline]
    fn recovery_increment(&self) -> F {
        F::zero()
    }
}

impl NeuronModel for Lif {
    fn name(&self) -> &str {
        "lif"
    }

    fn params(&self) -> &NeuronParams {
        &self.params
    }

    fn dimension(&self) -> usize {
        1
    }

    fn vector_field(&self, u: f64, _v: f64, input: f64) -> (f64, f64) {
        ((-(u - self.params.u_reset) + input) / self.params.tau, 0.0)
    }

    fn jacobian(&self, _u: f64, _v: f64) -> [[f64; 2]; 2] {
        [[-1.0 / self.params.tau, 0.0], [0.0, 0.0]]
    }

    fn u_nullcline(&self, u: f64, input: f64) -> f64 {
        -(u - self.params.u_reset) + input
    }

    fn v_nullcline(&self, _u: f64) -> Option<f64> {
        None
    }

    fn equilibrium_quadratic(&self, _input: f64) -> Option<EquilibriumQuadratic> {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> NeuronParams {
        NeuronParams::lif(2.0)
    }

    #[test]
    fn threshold_hit_from_rest() {
        let t = lif_step(&params(), 0.0, 2.0).unwrap();
        assert_eq!(t.y, 1.0);
        assert_eq!(t.s, 1.0);
        assert_eq!(t.u_post, 0.0);
    }

    #[test]
    fn zero_input_at_rest() {
        let t = lif_step(&params(), 0.0, 0.0).unwrap();
        assert_eq!(t.y, 0.0);
        assert_eq!(t.s, 0.0);
    }

    #[test]
    fn sub_threshold_charge() {
        let t = lif_step(&params(), 0.5, 1.0).unwrap();
        assert_eq!(t.y, 0.75);
        assert_eq!(t.s, 0.0);
        assert_eq!(t.u_post, 0.75);
    }

    #[test]
    fn rejects_non_finite_input() {
        assert!(lif_step(&params(), 0.0, f64::NAN).is_err());
    }

    #[test]
    fn field_sign_follows_drive() {
        let m = Lif::new(params()).unwrap();
        assert_eq!(m.vector_field(0.0, 0.0, 0.0).0, 0.0);
        for &(u, i) in &[(0.3, 1.0), (2.0, 0.5), (-1.0, -3.0), (0.5, 0.5)] {
            let du = m.vector_field(u, 0.0, i).0;
            let expected = i - (u - 0.0);
            assert_eq!(du.signum() == expected.signum() || du == 0.0, true);
            assert_eq!(du == 0.0, expected == 0.0);
        }
    }
}
