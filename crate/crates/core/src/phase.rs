//! Phase-plane analysis of the continuous neuron models: nullclines, fixed
//! points, Jacobian eigenvalues, vector fields, and the calculators that
//! place the stable point of a standardized neuron.
//!
//! Equilibria solve `c2 u^2 + c1 u + c0 = 0` on the line `v = slope u + offset`.
//! For the standardized model
//!
//! ```text
//! k u^2 - [b + k(U_r + U_c)] u + (I + b U_r + k U_r U_c) = 0,   v = b (u - U_r)
//! ```
//!
//! Note the sign of the constant term: expanding the nullcline intersection
//! gives `+ b U_r + k U_r U_c`, which is what places the SIT rest point at
//! `(-0.05, 0)` and the threshold point at `(1.02, 0.0214)`.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neuron::{NeuronFamily, NeuronModel, NeuronParams};

/// Real parts within this distance of zero classify as degenerate.
pub const EIGEN_TOLERANCE: f64 = 1e-9;
/// Residual allowed when checking a point against the nullclines.
pub const NULLCLINE_TOLERANCE: f64 = 1e-10;
/// Inputs this close to the rheobase produce a single (merged) fixed point.
pub const RHEOBASE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stability {
    StableNode,
    StableFocus,
    Unstable,
    Saddle,
    Degenerate,
}

impl Stability {
    pub fn is_stable(self) -> bool {
        matches!(self, Stability::StableNode | Stability::StableFocus)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stability::StableNode => "stable_node",
            Stability::StableFocus => "stable_focus",
            Stability::Unstable => "unstable",
            Stability::Saddle => "saddle",
            Stability::Degenerate => "degenerate",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FixedPoint {
    pub u: f64,
    pub v: f64,
    pub eigenvalues: Vec<Complex64>,
    pub classification: Stability,
}

/// Sampled nullclines over a `u` range. Each entry is `(u, v)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Nullclines {
    pub u_nullcline: Vec<(f64, f64)>,
    /// Empty for models without a recovery variable.
    pub v_nullcline: Vec<(f64, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub u_min: f64,
    pub u_max: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub u_res: usize,
    pub v_res: usize,
}

impl Grid {
    pub fn validate(&self) -> Result<()> {
        if self.u_res < 2 || self.v_res < 2 {
            return Err(Error::InvalidParameter(
                "grid resolution must be at least 2 per axis".into(),
            ));
        }
        if !(self.u_min < self.u_max) || !(self.v_min < self.v_max) {
            return Err(Error::InvalidParameter(format!(
                "degenerate grid bounds u=[{}, {}] v=[{}, {}]",
                self.u_min, self.u_max, self.v_min, self.v_max
            )));
        }
        Ok(())
    }

    fn axis(min: f64, max: f64, n: usize, i: usize) -> f64 {
        min + (max - min) * i as f64 / (n - 1) as f64
    }

    pub fn u_at(&self, i: usize) -> f64 {
        Self::axis(self.u_min, self.u_max, self.u_res, i)
    }

    pub fn v_at(&self, j: usize) -> f64 {
        Self::axis(self.v_min, self.v_max, self.v_res, j)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FieldSample {
    pub u: f64,
    pub v: f64,
    pub du: f64,
    pub dv: f64,
}

/// Vector field samples in row-major order (`v` rows, `u` columns), the
/// nullclines over the grid's `u` range, and the fixed points.
#[derive(Clone, Debug, PartialEq)]
pub struct PhasePortrait {
    pub grid: Grid,
    pub input: f64,
    pub field: Vec<FieldSample>,
    pub nullclines: Nullclines,
    pub fixed_points: Vec<FixedPoint>,
}

pub fn nullclines(
    model: &dyn NeuronModel,
    input: f64,
    u_range: (f64, f64),
    samples: usize,
) -> Result<Nullclines> {
    if samples < 2 {
        return Err(Error::InvalidParameter("nullclines need at least 2 samples".into()));
    }
    let (lo, hi) = u_range;
    if !(lo < hi) {
        return Err(Error::InvalidParameter(format!("empty u range [{lo}, {hi}]")));
    }
    let us = (0..samples).map(|i| Grid::axis(lo, hi, samples, i));
    let mut out = Nullclines::default();
    for u in us {
        out.u_nullcline.push((u, model.u_nullcline(u, input)));
        if let Some(v) = model.v_nullcline(u) {
            out.v_nullcline.push((u, v));
        }
    }
    Ok(out)
}

fn quadratic_model(model: &dyn NeuronModel, input: f64, op: &'static str) -> Result<crate::neuron::EquilibriumQuadratic> {
    let q = model.equilibrium_quadratic(input).ok_or_else(|| Error::UnsupportedFamily {
        op,
        family: model.params().family.to_string(),
    })?;
    if q.c2 == 0.0 {
        return Err(Error::InvalidParameter(
            "k = 0: drift is not quadratic".into(),
        ));
    }
    Ok(q)
}

/// Discriminant of the equilibrium quadratic.
pub fn discriminant(model: &dyn NeuronModel, input: f64) -> Result<f64> {
    let q = quadratic_model(model, input, "discriminant")?;
    Ok(q.c1 * q.c1 - 4.0 * q.c2 * q.c0)
}

/// Equilibria sorted by `u`, each classified. Empty when the discriminant is
/// negative; a single degenerate point when the input is within
/// [`RHEOBASE_TOLERANCE`] of the rheobase.
pub fn fixed_points(model: &dyn NeuronModel, input: f64) -> Result<Vec<FixedPoint>> {
    let q = quadratic_model(model, input, "fixed_points")?;
    let disc = q.c1 * q.c1 - 4.0 * q.c2 * q.c0;
    // disc = 4 c2 (I* - I), so the input tolerance scales by 4|c2|.
    let disc_tol = 4.0 * q.c2.abs() * RHEOBASE_TOLERANCE;
    let roots: Vec<f64> = if disc.abs() <= disc_tol {
        vec![-q.c1 / (2.0 * q.c2)]
    } else if disc < 0.0 {
        Vec::new()
    } else {
        // Cancellation-free form of the quadratic formula.
        let sq = disc.sqrt();
        let t = -0.5 * (q.c1 + q.c1.signum() * sq);
        let t = if q.c1 == 0.0 { -0.5 * sq } else { t };
        let mut r = vec![t / q.c2, q.c0 / t];
        r.sort_by(f64::total_cmp);
        r
    };
    roots
        .into_iter()
        .map(|u| {
            let v = q.slope * u + q.offset;
            let (eigenvalues, classification) = eigen_classify(model, u, v);
            Ok(FixedPoint {
                u,
                v,
                eigenvalues,
                classification,
            })
        })
        .collect()
}

/// Eigenvalues and stability of an equilibrium. Rejects points that are not
/// on both nullclines.
pub fn classify_fixed_point(
    model: &dyn NeuronModel,
    input: f64,
    u: f64,
    v: f64,
) -> Result<(Vec<Complex64>, Stability)> {
    let scale = 1.0_f64.max(v.abs());
    let mut residual = (model.u_nullcline(u, input) - v).abs();
    if let Some(vn) = model.v_nullcline(u) {
        residual = residual.max((vn - v).abs());
    }
    if residual > NULLCLINE_TOLERANCE * scale {
        return Err(Error::OffNullcline { u, v, residual });
    }
    Ok(eigen_classify(model, u, v))
}

fn eigen_classify(model: &dyn NeuronModel, u: f64, v: f64) -> (Vec<Complex64>, Stability) {
    let j = model.jacobian(u, v);
    if model.dimension() == 1 {
        let lambda = j[0][0];
        let class = if lambda.abs() <= EIGEN_TOLERANCE {
            Stability::Degenerate
        } else if lambda < 0.0 {
            Stability::StableNode
        } else {
            Stability::Unstable
        };
        return (vec![Complex64::new(lambda, 0.0)], class);
    }
    let eigenvalues = eigenvalues_2x2(j);
    (eigenvalues.to_vec(), classify(&eigenvalues))
}

/// Roots of `lambda^2 - tr(J) lambda + det(J)`, larger real part first.
pub fn eigenvalues_2x2(j: [[f64; 2]; 2]) -> [Complex64; 2] {
    let trace = j[0][0] + j[1][1];
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let disc = trace * trace - 4.0 * det;
    if disc >= 0.0 {
        let sq = disc.sqrt();
        // Avoid cancellation in the smaller-magnitude root.
        let big = if trace >= 0.0 {
            0.5 * (trace + sq)
        } else {
            0.5 * (trace - sq)
        };
        let small = if big != 0.0 { det / big } else { 0.0 };
        let (hi, lo) = if big >= small { (big, small) } else { (small, big) };
        [Complex64::new(hi, 0.0), Complex64::new(lo, 0.0)]
    } else {
        let re = 0.5 * trace;
        let im = 0.5 * (-disc).sqrt();
        [Complex64::new(re, im), Complex64::new(re, -im)]
    }
}

fn classify(eigenvalues: &[Complex64; 2]) -> Stability {
    if eigenvalues.iter().any(|l| l.re.abs() <= EIGEN_TOLERANCE) {
        return Stability::Degenerate;
    }
    let negative = eigenvalues.iter().filter(|l| l.re < 0.0).count();
    match negative {
        2 if eigenvalues[0].im != 0.0 => Stability::StableFocus,
        2 => Stability::StableNode,
        1 => Stability::Saddle,
        _ => Stability::Unstable,
    }
}

/// Equilibria for any model: the quadratic route where it exists, otherwise
/// the linear LIF rest point `u = u_reset + I`.
pub fn equilibria(model: &dyn NeuronModel, input: f64) -> Result<Vec<FixedPoint>> {
    if model.params().family == NeuronFamily::Lif {
        let u = model.params().u_reset + input;
        let (eigenvalues, classification) = eigen_classify(model, u, 0.0);
        return Ok(vec![FixedPoint {
            u,
            v: 0.0,
            eigenvalues,
            classification,
        }]);
    }
    fixed_points(model, input)
}

pub fn vector_field(model: &dyn NeuronModel, input: f64, grid: Grid) -> Result<PhasePortrait> {
    grid.validate()?;
    let field: Vec<FieldSample> = (0..grid.v_res)
        .into_par_iter()
        .flat_map_iter(|j| {
            let v = grid.v_at(j);
            (0..grid.u_res).map(move |i| {
                let u = grid.u_at(i);
                let (du, dv) = model.vector_field(u, v, input);
                FieldSample { u, v, du, dv }
            })
        })
        .collect();
    let nullclines = nullclines(model, input, (grid.u_min, grid.u_max), grid.u_res)?;
    let fixed_points = equilibria(model, input)?;
    Ok(PhasePortrait {
        grid,
        input,
        field,
        nullclines,
        fixed_points,
    })
}

/// The `b` that puts an equilibrium at `u = 0`:
/// `b = -(I + k U_r U_c) / U_r`. For `U_r = -0.05`, `k = U_c = 1` this is
/// `b = 20 I - 1`.
pub fn stable_origin_b(params: &NeuronParams, input: f64) -> Result<f64> {
    if params.u_r == 0.0 {
        return Err(Error::InvalidParameter(
            "u_r = 0: the origin is an equilibrium only when I = -k U_r U_c".into(),
        ));
    }
    Ok(-(input + params.k * params.u_r * params.u_c) / params.u_r)
}

/// Rheobase current and the voltage at which the two equilibria merge.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Rheobase {
    pub current: f64,
    pub coincide_voltage: f64,
}

/// `I* = [b + k(U_c - U_r)]^2 / 4k`, `U_o = [b + k(U_r + U_c)] / 2k` for the
/// standardized and QIF models; the vanilla model goes through its own
/// equilibrium quadratic.
pub fn rheobase(model: &dyn NeuronModel) -> Result<Rheobase> {
    let q = model.params();
    match q.family {
        NeuronFamily::Sit | NeuronFamily::Qif => {
            if q.k <= 0.0 {
                return Err(Error::InvalidParameter("rheobase requires k > 0".into()));
            }
            let b = if q.family == NeuronFamily::Sit { q.b } else { 0.0 };
            let spread = b + q.k * (q.u_c - q.u_r);
            Ok(Rheobase {
                current: spread * spread / (4.0 * q.k),
                coincide_voltage: (b + q.k * (q.u_r + q.u_c)) / (2.0 * q.k),
            })
        }
        NeuronFamily::IzhikevichVanilla => {
            let at_zero = quadratic_model(model, 0.0, "rheobase")?;
            Ok(Rheobase {
                current: at_zero.c1 * at_zero.c1 / (4.0 * at_zero.c2) - at_zero.c0,
                coincide_voltage: -at_zero.c1 / (2.0 * at_zero.c2),
            })
        }
        NeuronFamily::Lif => Err(Error::UnsupportedFamily {
            op: "rheobase",
            family: q.family.to_string(),
        }),
    }
}

/// JSON document written by `analyze`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct AnalysisReport {
    pub provenance: crate::provenance::Provenance,
    pub model: String,
    pub params: NeuronParams,
    pub input: f64,
    pub fixed_points: Vec<FixedPointRecord>,
    pub rheobase: Option<f64>,
    pub coincide_voltage: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FixedPointRecord {
    pub u: f64,
    pub v: f64,
    pub eigen_re: Vec<f64>,
    pub eigen_im: Vec<f64>,
    pub class: Stability,
}

impl From<&FixedPoint> for FixedPointRecord {
    fn from(p: &FixedPoint) -> Self {
        Self {
            u: p.u,
            v: p.v,
            eigen_re: p.eigenvalues.iter().map(|l| l.re).collect(),
            eigen_im: p.eigenvalues.iter().map(|l| l.im).collect(),
            class: p.classification,
        }
    }
}

impl PhasePortrait {
    pub fn report(
        &self,
        model: &dyn NeuronModel,
        provenance: crate::provenance::Provenance,
    ) -> AnalysisReport {
        let rheo = rheobase(model).ok();
        AnalysisReport {
            provenance,
            model: model.name().to_string(),
            params: model.params().clone(),
            input: self.input,
            fixed_points: self.fixed_points.iter().map(FixedPointRecord::from).collect(),
            rheobase: rheo.map(|r| r.current),
            coincide_voltage: rheo.map(|r| r.coincide_voltage),
        }
    }

    /// Columns `u,v,du,dv`, one row per grid point in row-major order.
    pub fn write_field_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "u,v,du,dv")?;
        for s in &self.field {
            writeln!(out, "{},{},{},{}", s.u, s.v, s.du, s.dv)?;
        }
        Ok(())
    }

    /// Columns `u,v`.
    pub fn write_nullcline_csv<W: Write>(points: &[(f64, f64)], mut out: W) -> std::io::Result<()> {
        writeln!(out, "u,v")?;
        for (u, v) in points {
            writeln!(out, "{u},{v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuron::{IzhikevichVanilla, Lif, Qif, Sit};

    fn sit() -> Sit {
        Sit::new(NeuronParams::sit()).unwrap()
    }

    #[test]
    fn sit_nullcline_samples() {
        let n = nullclines(&sit(), 0.0, (-0.05, 1.02), 2).unwrap();
        assert_eq!(n.v_nullcline[0], (-0.05, 0.0));
        let (u, v) = n.u_nullcline[1];
        assert_eq!(u, 1.02);
        assert!((v - 0.0214).abs() < 1e-12);
    }

    #[test]
    fn vanilla_v_nullcline() {
        let m = IzhikevichVanilla::new(NeuronParams::izhikevich_tonic()).unwrap();
        let n = nullclines(&m, 0.0, (-70.0, 0.0), 8).unwrap();
        assert_eq!(n.v_nullcline[0], (-70.0, -14.0));
    }

    #[test]
    fn nullcline_errors() {
        assert!(nullclines(&sit(), 0.0, (1.0, 1.0), 10).is_err());
        assert!(nullclines(&sit(), 0.0, (0.0, 1.0), 1).is_err());
    }

    #[test]
    fn sit_fixed_points_at_zero_input() {
        let fps = fixed_points(&sit(), 0.0).unwrap();
        assert_eq!(fps.len(), 2);
        assert!((fps[0].u + 0.05).abs() < 1e-12 && fps[0].v.abs() < 1e-12);
        assert!(fps[0].classification.is_stable());
        assert!((fps[1].u - 1.02).abs() < 1e-12 && (fps[1].v - 0.0214).abs() < 1e-12);
        assert!(fps[1].eigenvalues.iter().any(|l| l.re > 0.0));
    }

    #[test]
    fn sit_fixed_points_around_rheobase() {
        let m = sit();
        let r = rheobase(&m).unwrap();
        assert!((r.current - 0.286225).abs() < 1e-12);
        assert!((r.coincide_voltage - 0.485).abs() < 1e-12);
        let at = fixed_points(&m, r.current).unwrap();
        assert_eq!(at.len(), 1);
        assert!((at[0].u - 0.485).abs() < 1e-12);
        assert_eq!(at[0].classification, Stability::Degenerate);
        assert_eq!(fixed_points(&m, r.current - 1e-6).unwrap().len(), 2);
        assert_eq!(fixed_points(&m, r.current + 1e-6).unwrap().len(), 0);
        assert!(fixed_points(&m, 1.0).unwrap().is_empty());
    }

    #[test]
    fn symmetric_apex_rheobase() {
        let m = Sit::new(NeuronParams {
            b: 0.0,
            k: 1.0,
            u_r: 0.0,
            u_c: 1.0,
            ..NeuronParams::sit()
        })
        .unwrap();
        let r = rheobase(&m).unwrap();
        assert_eq!((r.current, r.coincide_voltage), (0.25, 0.5));
    }

    #[test]
    fn closed_form_rheobase_matches_quadratic_route() {
        let m = sit();
        let r = rheobase(&m).unwrap();
        let q = m.equilibrium_quadratic(0.0).unwrap();
        let via_quadratic = q.c1 * q.c1 / (4.0 * q.c2) - q.c0;
        assert!((r.current - via_quadratic).abs() < 1e-14);
    }

    #[test]
    fn vanilla_fixed_points() {
        let m = IzhikevichVanilla::new(NeuronParams::izhikevich_tonic().with_tau(1.0)).unwrap();
        let fps = fixed_points(&m, 0.0).unwrap();
        assert_eq!(fps.len(), 2);
        assert!((fps[0].u + 70.0).abs() < 1e-9 && (fps[0].v + 14.0).abs() < 1e-9);
        assert!(fps[0].classification.is_stable());
        assert!((fps[1].u + 50.0).abs() < 1e-9 && (fps[1].v + 10.0).abs() < 1e-9);
        assert_eq!(fps[1].classification, Stability::Saddle);
        // eigenvalues of [[-0.6, -1], [0.004, -0.02]]
        let l = &fps[0].eigenvalues;
        let tr = -0.62;
        let det: f64 = 0.012 + 0.004;
        let sq = (tr * tr - 4.0 * det).sqrt();
        assert!((l[0].re - (tr + sq) / 2.0).abs() < 1e-12);
        assert!((l[1].re - (tr - sq) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn lif_is_rejected_by_quadratic_solver() {
        let m = Lif::new(NeuronParams::lif(2.0)).unwrap();
        assert!(matches!(
            fixed_points(&m, 0.0),
            Err(Error::UnsupportedFamily { .. })
        ));
        let eq = equilibria(&m, 0.7).unwrap();
        assert_eq!(eq[0].u, 0.7);
        assert!(eq[0].classification.is_stable());
    }

    #[test]
    fn k_zero_rejected() {
        let m = Qif::new(NeuronParams {
            k: 0.0,
            ..NeuronParams::qif()
        })
        .unwrap();
        assert!(matches!(fixed_points(&m, 0.0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn qif_roots_are_one_dimensional() {
        let m = Qif::new(NeuronParams::qif()).unwrap();
        let fps = fixed_points(&m, 0.0).unwrap();
        assert_eq!(fps.len(), 2);
        assert_eq!(fps[0].eigenvalues.len(), 1);
        assert!(fps[0].classification.is_stable());
        assert_eq!(fps[1].classification, Stability::Unstable);
    }

    #[test]
    fn off_nullcline_rejected() {
        assert!(matches!(
            classify_fixed_point(&sit(), 0.0, 0.3, 0.0),
            Err(Error::OffNullcline { .. })
        ));
        let (_, class) = classify_fixed_point(&sit(), 0.0, -0.05, 0.0).unwrap();
        assert!(class.is_stable());
    }

    #[test]
    fn stable_origin_b_values() {
        let p = NeuronParams::sit();
        assert_eq!(stable_origin_b(&p, 0.0).unwrap(), -1.0);
        assert!((stable_origin_b(&p, 3.83).unwrap() - 75.6).abs() < 1e-12);
        assert!((stable_origin_b(&p, -4.92).unwrap() + 99.4).abs() < 1e-12);
        assert!(stable_origin_b(&NeuronParams { u_r: 0.0, ..p }, 1.0).is_err());
    }

    #[test]
    fn field_grid_is_row_major() {
        let grid = Grid {
            u_min: -0.5,
            u_max: 1.5,
            v_min: -0.1,
            v_max: 0.1,
            u_res: 3,
            v_res: 2,
        };
        let p = vector_field(&sit(), 0.0, grid).unwrap();
        assert_eq!(p.field.len(), 6);
        assert_eq!((p.field[1].u, p.field[1].v), (0.5, -0.1));
        assert_eq!((p.field[3].u, p.field[3].v), (-0.5, 0.1));
        for s in &p.field {
            assert_eq!((s.du, s.dv), sit().vector_field(s.u, s.v, 0.0));
        }
        assert_eq!(p.fixed_points.len(), 2);
        let bad = Grid { u_res: 1, ..grid };
        assert!(vector_field(&sit(), 0.0, bad).is_err());
        let flat = Grid { v_max: -0.1, ..grid };
        assert!(vector_field(&sit(), 0.0, flat).is_err());
    }

    #[test]
    fn complex_pair_classifies_as_focus() {
        let l = eigenvalues_2x2([[-1.0, -2.0], [2.0, -1.0]]);
        assert_eq!(l[0], Complex64::new(-1.0, 2.0));
        assert_eq!(classify(&l), Stability::StableFocus);
        let l = eigenvalues_2x2([[1.0, 0.0], [0.0, 2.0]]);
        assert_eq!(classify(&l), Stability::Unstable);
    }
}
