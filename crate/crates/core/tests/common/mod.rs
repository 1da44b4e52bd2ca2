//! Oracles shared by the property tests and the acceptance suite.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sitnn::data::{events_to_frames, Event, EventStream};
use sitnn::neuron::{NeuronModel, NeuronParams, NeuronState, Sit};
use sitnn::phase::{discriminant, fixed_points, rheobase};

/// Random standardized parameters with `a, b, k > 0`. With `integrator` the
/// draw stays in `b <= a`.
pub fn random_sit_params(rng: &mut impl Rng, integrator: bool) -> NeuronParams {
    let a = rng.random_range(0.001..1.0);
    let b = if integrator {
        rng.random_range(0.0..a)
    } else {
        rng.random_range(0.001..2.0)
    };
    let u_r = rng.random_range(-1.0..0.0);
    NeuronParams {
        a,
        b: b.max(1e-6),
        k: rng.random_range(0.1..5.0),
        u_r,
        u_c: u_r + rng.random_range(0.1..3.0),
        tau: rng.random_range(0.5..5.0),
        ..NeuronParams::sit()
    }
}

/// `draws` random integrator-regime parameter sets, each at a random input
/// below rheobase: the lower equilibrium must be stable, the equilibrium
/// count must follow the sign of the discriminant around rheobase, and the
/// coincide voltage must sit strictly between the two equilibria.
pub fn theorem_one_suite(draws: usize, seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for n in 0..draws {
        let params = random_sit_params(&mut rng, true);
        let model = Sit::new(params.clone()).map_err(|e| e.to_string())?;
        let r = rheobase(&model).map_err(|e| e.to_string())?;
        let input = r.current - rng.random_range(1e-3..5.0);
        let fail = |what: &str| Err(format!("draw {n} ({params:?}, I = {input}): {what}"));
        let disc = discriminant(&model, input).map_err(|e| e.to_string())?;
        if disc <= 0.0 {
            return fail("discriminant not positive below rheobase");
        }
        let fps = fixed_points(&model, input).map_err(|e| e.to_string())?;
        if fps.len() != 2 {
            return fail("expected two equilibria");
        }
        if !fps[0].classification.is_stable() {
            return fail("lower equilibrium not stable");
        }
        if !(fps[0].u < r.coincide_voltage && r.coincide_voltage < fps[1].u) {
            return fail("coincide voltage not between the equilibria");
        }
        let count = |i: f64| fixed_points(&model, i).map(|f| f.len()).unwrap_or(usize::MAX);
        if count(r.current - 1e-6) != 2 || count(r.current) != 1 || count(r.current + 1e-6) != 0 {
            return fail("equilibrium count does not follow the discriminant");
        }
    }
    Ok(())
}

/// Euclidean distance to `(u, v)` after each of `steps` steps from a
/// perturbed start, with firing disabled. Stops early when the state leaves
/// a bounded region.
pub fn perturbed_distances(
    params: &NeuronParams,
    build: fn(NeuronParams) -> sitnn::Result<Box<dyn NeuronModel>>,
    point: (f64, f64),
    input: f64,
    offset: (f64, f64),
    steps: usize,
) -> Vec<f64> {
    let quiet = NeuronParams {
        u_threshold: 1e300,
        ..params.clone()
    };
    let model = build(quiet).expect("valid parameters");
    let mut state = NeuronState::new(point.0 + offset.0, point.1 + offset.1);
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        match model.step(state, input) {
            Ok(t) if t.u_post.abs() < 1e6 => state = t.state(),
            _ => break,
        }
        out.push(((state.u - point.0).powi(2) + (state.v - point.1).powi(2)).sqrt());
    }
    out
}

pub fn random_stream(rng: &mut impl Rng) -> EventStream {
    let width = rng.random_range(1..9u32);
    let height = rng.random_range(1..9u32);
    let n = rng.random_range(0..200usize);
    let mut t = 0u64;
    let events = (0..n)
        .map(|_| {
            t += rng.random_range(0..3u64);
            Event {
                t,
                x: rng.random_range(0..width),
                y: rng.random_range(0..height),
                p: rng.random_range(0..2u8),
            }
        })
        .collect();
    EventStream::new(width, height, events).expect("valid stream")
}

/// Slice of event `i` found by testing every slice's index interval
/// directly.
fn slice_of(i: usize, n: usize, slices: usize) -> usize {
    let width = n / slices;
    (0..slices)
        .find(|&j| {
            let lo = width * j;
            let hi = if j == slices - 1 { n } else { width * (j + 1) };
            lo <= i && i < hi
        })
        .expect("every event lands in a slice")
}

/// Compares `events_to_frames` with per-event assignment on `cases` random
/// streams and slice counts. Returns the number of events checked.
pub fn fuzz_event_frames(cases: usize, seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0;
    for case in 0..cases {
        let stream = random_stream(&mut rng);
        let slices = rng.random_range(1..12usize);
        let frames = events_to_frames(&stream, slices).map_err(|e| e.to_string())?;
        let (h, w) = (stream.height as usize, stream.width as usize);
        let mut expect = vec![0u32; slices * 2 * h * w];
        for (i, e) in stream.events.iter().enumerate() {
            let j = slice_of(i, stream.len(), slices);
            expect[((j * 2 + e.p as usize) * h + e.y as usize) * w + e.x as usize] += 1;
        }
        if frames.counts != expect {
            return Err(format!("case {case}: {} events, T = {slices}", stream.len()));
        }
        if frames.total() != stream.len() as u64 {
            return Err(format!("case {case}: counts not conserved"));
        }
        checked += stream.len();
    }
    Ok(checked)
}
