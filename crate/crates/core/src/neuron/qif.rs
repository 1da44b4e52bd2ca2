use super::{
    p, require_family, Dynamics, EquilibriumQuadratic, NeuronFamily, NeuronModel, NeuronParams,
    NeuronState, StepTrace,
};
use crate::error::Result;
use crate::real::Real;

/// Quadratic integrate-and-fire: `tau dU/dt = k (U - U_r)(U - U_c) + I`.
#[derive(Clone, Debug)]
pub struct Qif {
    params: NeuronParams,
}

impl Qif {
    pub fn new(params: NeuronParams) -> Result<Self> {
        require_family(&params, NeuronFamily::Qif, "Qif::new")?;
        params.validate()?;
        Ok(Self { params })
    }
}

pub fn qif_step(params: &NeuronParams, u_prev: f64, input: f64) -> Result<StepTrace> {
    Qif::new(params.clone())?.step(NeuronState::new(u_prev, 0.0), input)
}

impl<F: Real> Dynamics<F> for Qif {
    #[inline]
    fn charge(&self, u: F, _v: F, input: F) -> F {
        let q = &self.params;
        u + (p::<F>(q.k) * (u - p(q.u_r)) * (u - p(q.u_c)) + input) / p(q.tau)
    }

    #[inline]
    fn charge_du(&self, u: F) -> F {
        let q = &self.params;
        F::one() + p::<F>(q.k) / p(q.tau) * (p::<F>(2.0) * u - (p::<F>(q.u_r) + p(q.u_c)))
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

impl NeuronModel for Qif {
    fn name(&self) -> &str {
        "qif"
    }

    fn params(&self) -> &NeuronParams {
        &self.params
    }

    fn dimension(&self) -> usize {
        1
    }

    fn vector_field(&self, u: f64, _v: f64, input: f64) -> (f64, f64) {
        let q = &self.params;
        ((q.k * (u - q.u_r) * (u - q.u_c) + input) / q.tau, 0.0)
    }

    fn jacobian(&self, u: f64, _v: f64) -> [[f64; 2]; 2] {
        let q = &self.params;
        [[q.k * (2.0 * u - q.u_r - q.u_c) / q.tau, 0.0], [0.0, 0.0]]
    }

    fn u_nullcline(&self, u: f64, input: f64) -> f64 {
        let q = &self.params;
        q.k * (u - q.u_r) * (u - q.u_c) + input
    }

    fn v_nullcline(&self, _u: f64) -> Option<f64> {
        None
    }

    fn equilibrium_quadratic(&self, input: f64) -> Option<EquilibriumQuadratic> {
        let q = &self.params;
        Some(EquilibriumQuadratic {
            c2: q.k,
            c1: -q.k * (q.u_r + q.u_c),
            c0: q.k * q.u_r * q.u_c + input,
            slope: 0.0,
            offset: 0.0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> NeuronParams {
        NeuronParams {
            k: 1.0,
            u_r: 0.0,
            u_c: 1.0,
            ..NeuronParams::qif()
        }
        .with_tau(2.0)
    }

    #[test]
    fn euler_step_between_roots() {
        let t = qif_step(&params(), 0.5, 0.0).unwrap();
        assert_eq!(t.y, 0.375);
    }

    #[test]
    fn roots_are_stationary() {
        assert_eq!(qif_step(&params(), 0.0, 0.0).unwrap().y, 0.0);
        let at_critical = qif_step(&params(), 1.0, 0.0).unwrap();
        assert_eq!(at_critical.y, 1.0);
    }

    #[test]
    fn rejects_non_finite_input() {
        assert!(qif_step(&params(), 0.0, f64::NEG_INFINITY).is_err());
    }
}
