use std::sync::Arc;

use rayon::prelude::*;

use crate::arch::NeuronKind;
use crate::neuron::{NeuronModel, SpikeMode};
use crate::real::{cast, Real};
use crate::tensor::Tensor;

/// Neurons per work item.
const NEURON_CHUNK: usize = 4096;

/// A layer of independent neurons, one per input element, unrolled over the
/// time axis. State starts from rest on every forward call.
#[derive(Clone, Debug)]
pub struct SpikingLayer {
    pub kind: NeuronKind,
    model: Arc<dyn NeuronModel>,
}

/// Per-step traces of a spiking layer, each `[T, M]` flattened.
#[derive(Clone, Debug)]
pub struct SpikingCache<F: Real> {
    pub y: Vec<F>,
    pub s: Vec<F>,
    pub u: Vec<F>,
}

impl SpikingLayer {
    pub fn new(kind: NeuronKind, model: Arc<dyn NeuronModel>) -> Self {
        Self { kind, model }
    }

    pub fn model(&self) -> &Arc<dyn NeuronModel> {
        &self.model
    }

    pub fn forward<F: Real>(
        &self,
        x: &Tensor<F>,
        timesteps: usize,
        mode: SpikeMode,
    ) -> (Tensor<F>, SpikingCache<F>) {
        let dynamics = F::dynamics(self.model.as_ref());
        let m = x.len() / timesteps;
        let rest = self.model.rest_state();
        let mut u = vec![cast::<F>(rest.u); m];
        let mut v = vec![cast::<F>(rest.v); m];
        let mut ys = vec![F::zero(); x.len()];
        let mut ss = vec![F::zero(); x.len()];
        let mut us = vec![F::zero(); x.len()];
        for t in 0..timesteps {
            let range = t * m..(t + 1) * m;
            (
                u.par_chunks_mut(NEURON_CHUNK),
                v.par_chunks_mut(NEURON_CHUNK),
                x.data()[range.clone()].par_chunks(NEURON_CHUNK),
                ys[range.clone()].par_chunks_mut(NEURON_CHUNK),
                ss[range.clone()].par_chunks_mut(NEURON_CHUNK),
            )
                .into_par_iter()
                .for_each(|(u, v, i, y, s)| dynamics.advance_slice(mode, u, v, i, y, s));
            us[range].copy_from_slice(&u);
        }
        let out = Tensor::new(x.shape().to_vec(), ss.clone()).expect("spike output");
        (out, SpikingCache { y: ys, s: ss, u: us })
    }

    /// `dL/dI` for every step, sweeping `t` backwards.
    pub fn backward<F: Real>(
        &self,
        cache: &SpikingCache<F>,
        grad_out: &Tensor<F>,
        timesteps: usize,
    ) -> Tensor<F> {
        let dynamics = F::dynamics(self.model.as_ref());
        let m = grad_out.len() / timesteps;
        let rest = vec![cast::<F>(self.model.rest_state().u); m];
        let mut gu = vec![F::zero(); m];
        let mut gv = vec![F::zero(); m];
        let mut grad_in = vec![F::zero(); grad_out.len()];
        for t in (0..timesteps).rev() {
            let range = t * m..(t + 1) * m;
            let u_prev = if t == 0 {
                &rest[..]
            } else {
                &cache.u[(t - 1) * m..t * m]
            };
            (
                u_prev.par_chunks(NEURON_CHUNK),
                cache.y[range.clone()].par_chunks(NEURON_CHUNK),
                cache.s[range.clone()].par_chunks(NEURON_CHUNK),
                grad_out.data()[range.clone()].par_chunks(NEURON_CHUNK),
                gu.par_chunks_mut(NEURON_CHUNK),
                gv.par_chunks_mut(NEURON_CHUNK),
                grad_in[range].par_chunks_mut(NEURON_CHUNK),
            )
                .into_par_iter()
                .for_each(|(up, y, s, gs, gu, gv, gi)| {
                    dynamics.backward_slice(up, y, s, gs, gu, gv, gi)
                });
        }
        Tensor::new(grad_out.shape().to_vec(), grad_in).expect("spike grad")
    }
}
