use super::{
    p, require_family, Dynamics, EquilibriumQuadratic, NeuronFamily, NeuronModel, NeuronParams,
    NeuronState, StepTrace,
};
use crate::error::Result;
use crate::real::Real;

/// Standardized Izhikevich neuron: a QIF membrane with a linear recovery
/// variable, operating on the `[0, 1]` threshold/reset scale.
///
/// ```text
/// tau dU/dt = k (U - U_r)(U - U_c) - V + I
/// tau dV/dt = a (b (U - U_r) - V)
/// ```
#[derive(Clone, Debug)]
pub struct Sit {
    name: String,
    params: NeuronParams,
}

impl Sit {
    pub fn new(params: NeuronParams) -> Result<Self> {
        Self::named("sit", params)
    }

    pub fn named(name: impl Into<String>, params: NeuronParams) -> Result<Self> {
        require_family(&params, NeuronFamily::Sit, "Sit::new")?;
        params.validate()?;
        Ok(Self {
            name: name.into(),
            params,
        })
    }
}

/// One SIT step from `state` with input current `input`.
pub fn sit_step(params: &NeuronParams, state: NeuronState, input: f64) -> Result<StepTrace> {
    Sit::new(params.clone())?.step(state, input)
}

impl<F: Real> Dynamics<F> for Sit {
    #[inline]
    fn charge(&self, u: F, v: F, input: F) -> F {
        let q = &self.params;
        let tau: F = p(q.tau);
        u + p::<F>(q.k) / tau * (u - p(q.u_r)) * (u - p(q.u_c)) - v / tau + input / tau
    }

    #[inline]
    fn charge_du(&self, u: F) -> F {
        let q = &self.params;
        F::one() + p::<F>(q.k) / p(q.tau) * (p::<F>(2.0) * u - (p::<F>(q.u_r) + p(q.u_c)))
    }

    #[inline]
    fn charge_dv(&self) -> F {
        -F::one() / p(self.params.tau)
    }

    #[inline]
    fn charge_dinput(&self) -> F {
        F::one() / p(self.params.tau)
    }

    #[inline]
    fn recover(&self, u_post: F, v: F) -> F {
        let q = &self.params;
        v + p::<F>(q.a) / p(q.tau) * (p::<F>(q.b) * (u_post - p(q.u_r)) - v)
    }

    #[inline]
    fn recover_du(&self) -> F {
        let q = &self.params;
        p::<F>(q.a) * p(q.b) / p(q.tau)
    }

    #[inline]
    fn recover_dv(&self) -> F {
        F::one() - p::<F>(self.params.a) / p(self.params.tau)
    }

    #[inline]
    fn threshold(&self) -> F {
        p(self.params.u_threshold)
    }

    #[inline]
    fn reset_potential(&self) -> F {
        p(self.params.c)
    }

    #[inline]
    fn recovery_increment(&self) -> F {
        p(self.params.d)
    }
}

impl NeuronModel for Sit {
    fn name(&self) -> &str {
        &self.name
    }

    fn params(&self) -> &NeuronParams {
        &self.params
    }

    fn dimension(&self) -> usize {
        2
    }

    fn vector_field(&self, u: f64, v: f64, input: f64) -> (f64, f64) {
        let q = &self.params;
        let du = (q.k * (u - q.u_r) * (u - q.u_c) - v + input) / q.tau;
        let dv = q.a * (q.b * (u - q.u_r) - v) / q.tau;
        (du, dv)
    }

    fn jacobian(&self, u: f64, _v: f64) -> [[f64; 2]; 2] {
        let q = &self.params;
        [
            [q.k * (2.0 * u - q.u_r - q.u_c) / q.tau, -1.0 / q.tau],
            [q.a * q.b / q.tau, -q.a / q.tau],
        ]
    }

    fn u_nullcline(&self, u: f64, input: f64) -> f64 {
        let q = &self.params;
        q.k * (u - q.u_r) * (u - q.u_c) + input
    }

    fn v_nullcline(&self, u: f64) -> Option<f64> {
        Some(self.params.b * (u - self.params.u_r))
    }

    fn equilibrium_quadratic(&self, input: f64) -> Option<EquilibriumQuadratic> {
        let q = &self.params;
        Some(EquilibriumQuadratic {
            c2: q.k,
            c1: -(q.b + q.k * (q.u_r + q.u_c)),
            c0: input + q.b * q.u_r + q.k * q.u_r * q.u_c,
            slope: q.b,
            offset: -q.b * q.u_r,
        })
    }
}
