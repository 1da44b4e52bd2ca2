use super::{
    p, require_family, Dynamics, EquilibriumQuadratic, NeuronFamily, NeuronModel, NeuronParams,
    NeuronState, StepTrace,
};
use crate::error::Result;
use crate::real::Real;

/// The original Izhikevich model on the mV scale:
///
/// ```text
/// tau dU/dt = 0.04 U^2 + 5 U + 140 - V + I
/// tau dV/dt = a (b U - V)
/// ```
///
/// With `corrected_form = false` the drift becomes `0.04 U^2 + 5 V + 140 - U`,
/// a misprint of the above kept only for comparison. That form does not keep
/// the tonic rest point `(-70, -14)` stationary.
#[derive(Clone, Debug)]
pub struct IzhikevichVanilla {
    params: NeuronParams,
}

const QUAD: f64 = 0.04;
const LIN: f64 = 5.0;
const CONST: f64 = 140.0;

impl IzhikevichVanilla {
    pub fn new(params: NeuronParams) -> Result<Self> {
        require_family(&params, NeuronFamily::IzhikevichVanilla, "IzhikevichVanilla::new")?;
        params.validate()?;
        Ok(Self { params })
    }

    fn drift(&self, u: f64, v: f64) -> f64 {
        if self.params.corrected_form {
            QUAD * u * u + LIN * u + CONST - v
        } else {
            QUAD * u * u + LIN * v + CONST - u
        }
    }
}

pub fn izhikevich_vanilla_step(
    params: &NeuronParams,
    state: NeuronState,
    input: f64,
) -> Result<StepTrace> {
    IzhikevichVanilla::new(params.clone())?.step(state, input)
}

impl<F: Real> Dynamics<F> for IzhikevichVanilla {
    #[inline]
    fn charge(&self, u: F, v: F, input: F) -> F {
        let tau: F = p(self.params.tau);
        let drift = if self.params.corrected_form {
            p::<F>(QUAD) * u * u + p::<F>(LIN) * u + p(CONST) - v
        } else {
            p::<F>(QUAD) * u * u + p::<F>(LIN) * v + p(CONST) - u
        };
        u + (drift + input) / tau
    }

    #[inline]
    fn charge_du(&self, u: F) -> F {
        let slope = if self.params.corrected_form {
            p::<F>(2.0 * QUAD) * u + p(LIN)
        } else {
            p::<F>(2.0 * QUAD) * u - F::one()
        };
        F::one() + slope / p(self.params.tau)
    }

    #[inline]
    fn charge_dv(&self) -> F {
        let coupling = if self.params.corrected_form { -1.0 } else { LIN };
        p::<F>(coupling) / p(self.params.tau)
    }

    #[inline]
    fn charge_dinput(&self) -> F {
        F::one() / p(self.params.tau)
    }

    #[inline]
    fn recover(&self, u_post: F, v: F) -> F {
        let q = &self.params;
        v + p::<F>(q.a) / p(q.tau) * (p::<F>(q.b) * u_post - v)
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

impl NeuronModel for IzhikevichVanilla {
    fn name(&self) -> &str {
        "izhikevich"
    }

    fn params(&self) -> &NeuronParams {
        &self.params
    }

    fn dimension(&self) -> usize {
        2
    }

    fn vector_field(&self, u: f64, v: f64, input: f64) -> (f64, f64) {
        let q = &self.params;
        (
            (self.drift(u, v) + input) / q.tau,
            q.a * (q.b * u - v) / q.tau,
        )
    }

    fn jacobian(&self, u: f64, _v: f64) -> [[f64; 2]; 2] {
        let q = &self.params;
        let (duu, duv) = if q.corrected_form {
            (2.0 * QUAD * u + LIN, -1.0)
        } else {
            (2.0 * QUAD * u - 1.0, LIN)
        };
        [
            [duu / q.tau, duv / q.tau],
            [q.a * q.b / q.tau, -q.a / q.tau],
        ]
    }

    fn u_nullcline(&self, u: f64, input: f64) -> f64 {
        if self.params.corrected_form {
            QUAD * u * u + LIN * u + CONST + input
        } else {
            (u - QUAD * u * u - CONST - input) / LIN
        }
    }

    fn v_nullcline(&self, u: f64) -> Option<f64> {
        Some(self.params.b * u)
    }

    fn equilibrium_quadratic(&self, input: f64) -> Option<EquilibriumQuadratic> {
        let b = self.params.b;
        let c1 = if self.params.corrected_form {
            LIN - b
        } else {
            LIN * b - 1.0
        };
        Some(EquilibriumQuadratic {
            c2: QUAD,
            c1,
            c0: CONST + input,
            slope: b,
            offset: 0.0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tonic() -> NeuronParams {
        NeuronParams::izhikevich_tonic()
    }

    #[test]
    fn tonic_rest_point_is_stationary() {
        let m = IzhikevichVanilla::new(tonic()).unwrap();
        let (du, dv) = m.vector_field(-70.0, -14.0, 0.0);
        assert!(du.abs() < 1e-12 && dv.abs() < 1e-12);
        let t = m.step(NeuronState::new(-70.0, -14.0), 0.0).unwrap();
        assert!((t.u_post + 70.0).abs() < 1e-12 && (t.v_post + 14.0).abs() < 1e-12);
    }

    #[test]
    fn second_equilibrium() {
        let m = IzhikevichVanilla::new(tonic()).unwrap();
        let (du, dv) = m.vector_field(-50.0, -10.0, 0.0);
        assert!(du.abs() < 1e-12 && dv.abs() < 1e-12);
    }

    #[test]
    fn misprinted_form_moves_the_rest_point() {
        let m = IzhikevichVanilla::new(NeuronParams {
            corrected_form: false,
            ..tonic()
        })
        .unwrap();
        assert!(m.vector_field(-70.0, -14.0, 0.0).0.abs() > 1.0);
    }

    #[test]
    fn above_threshold_resets() {
        let params = tonic().with_tau(1.0);
        let t = izhikevich_vanilla_step(&params, NeuronState::new(31.0, 0.0), 0.0).unwrap();
        assert_eq!(t.s, 1.0);
        assert_eq!(t.u_post, -65.0);
        assert_eq!(t.v_post, t.h + 8.0);
        // recovery is driven by the post-reset membrane: 0.02 * (0.2 * -65)
        assert!((t.h + 0.26).abs() < 1e-12);
    }
}
