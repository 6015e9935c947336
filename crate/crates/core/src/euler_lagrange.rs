//! Euler–Lagrange residuals of the σ₂ and coupled energies, evaluated in
//! eigenframes and, independently, from the coordinate tension fields.

use std::f64::consts::PI;
use std::io::Write;
use std::ops::Range;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::distortion::{contact_index, multiplicities, spectrum};
use crate::energy::{full_report, EnergyReport, QuadOrders, SKYRME_UNIT};
use crate::error::{Error, Result};
use crate::geometry::{connection_coeffs, Deformation, FrameField, Gamma, MatrixFn, FD_STEP2};
use crate::linalg::{gram_schmidt, inner};
use crate::map_zoo::{alpha_join, JacobianMode, MapFamily, Profile};

/// Criticality threshold for families with analytic Jacobians.
pub const TOL_CRIT_ANALYTIC: f64 = 1e-6;
/// Criticality threshold when the Jacobian itself is a finite difference.
pub const TOL_CRIT_FD: f64 = 1e-4;
/// Smallest eigenvalue accepted as nonzero on a submersive grid.
pub const RANK_TOL: f64 = 1e-10;
/// Relative tolerance of the spectrum predicates that gate a residual system.
pub const PREDICATE_TOL: f64 = 1e-8;
/// Margin kept from the `tan 2s` pole of the Nomizu equation.
pub const NOMIZU_POLE_MARGIN: f64 = 1e-3;

pub fn tol_crit(map: &MapFamily) -> f64 {
    match map.jacobian_mode {
        JacobianMode::Analytic => TOL_CRIT_ANALYTIC,
        JacobianMode::FiniteDifference => TOL_CRIT_FD,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum System {
    Fh,
    Sig3,
    Contactsig3,
    Fourharm,
    Harmonic,
    Nomizu,
    Area2d,
    /// `h(τ_σ₂, dφE_k)` from the coordinate tension fields.
    General,
    /// Condition (c) of the contact system.
    ConditionC,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EqNorm {
    pub sup: f64,
    pub l2: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualReport {
    pub system: System,
    pub map: String,
    pub grid: Vec<Vec<f64>>,
    /// `residuals[p][e]`: equation `e` at grid point `p`.
    pub residuals: Vec<Vec<f64>>,
    pub norms: Vec<EqNorm>,
    pub tol_crit: f64,
    pub verdict: bool,
    /// Systems evaluated alongside on the same grid.
    pub companions: Vec<ResidualReport>,
    /// Largest disagreement between two routes to the same quantity, when checked.
    pub route_mismatch: Option<f64>,
    pub notes: Vec<String>,
}

impl ResidualReport {
    pub fn new(system: System, map: &str, grid: Vec<Vec<f64>>, residuals: Vec<Vec<f64>>, tol_crit: f64) -> ResidualReport {
        let norms = ResidualReport::compute_norms(&residuals);
        let verdict = norms.iter().all(|n| n.sup < tol_crit);
        ResidualReport {
            system,
            map: map.to_string(),
            grid,
            residuals,
            norms,
            tol_crit,
            verdict,
            companions: Vec::new(),
            route_mismatch: None,
            notes: Vec::new(),
        }
    }

    /// Sup and root-mean-square over the grid, per equation.
    pub fn compute_norms(residuals: &[Vec<f64>]) -> Vec<EqNorm> {
        let neq = residuals.first().map_or(0, Vec::len);
        (0..neq)
            .map(|e| {
                let mut sup: f64 = 0.0;
                let mut sq = 0.0;
                for r in residuals {
                    let v = r[e];
                    sup = if v.is_nan() { f64::NAN } else { sup.max(v.abs()) };
                    sq += v * v;
                }
                EqNorm { sup, l2: (sq / residuals.len() as f64).sqrt() }
            })
            .collect()
    }

    /// Largest sup norm over all equations.
    pub fn sup(&self) -> f64 {
        self.norms.iter().fold(0.0, |m, n| if n.sup.is_nan() { f64::NAN } else { m.max(n.sup) })
    }

    pub fn verdict_at(&self, tol: f64) -> bool {
        self.norms.iter().all(|n| n.sup < tol)
    }

    pub fn companion(&self, system: System) -> Option<&ResidualReport> {
        self.companions.iter().find(|c| c.system == system)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Pullback metric `Jᵗ h(φ) J`, symmetrized.
fn pullback(map: &MapFamily, x: &[f64]) -> DMatrix<f64> {
    let p = map.pullback_metric(x);
    (&p + p.transpose()) * 0.5
}

/// A smooth eigenframe of `φ*h` near a base point.
///
/// Clusters are fixed at the base point by position; elsewhere each cluster's
/// reference vectors are projected onto the eigenspace spanned by the same
/// positions and re-orthonormalized, which keeps the frame smooth through
/// degenerate clusters.
#[derive(Clone)]
pub struct Eigenframe {
    map: MapFamily,
    pub base: Vec<f64>,
    pub clusters: Vec<Range<usize>>,
    pub base_values: Vec<f64>,
    reference: DMatrix<f64>,
    signs: Vec<f64>,
}

impl Eigenframe {
    pub fn at(map: &MapFamily, x0: &[f64]) -> Result<Eigenframe> {
        map.domain.check_regular(x0, 0.0)?;
        let (values, vectors) = spectrum(&pullback(map, x0), &map.domain.metric(x0))?;
        let mut clusters = Vec::new();
        let mut start = 0;
        for m in multiplicities(&values) {
            clusters.push(start..start + m);
            start += m;
        }
        Ok(Eigenframe {
            map: map.clone(),
            base: x0.to_vec(),
            clusters,
            base_values: values,
            reference: vectors,
            signs: vec![1.0; map.dim_domain()],
        })
    }

    /// As [`Eigenframe::at`], with the first vector of the cluster containing
    /// `position` replaced by the projection of `preferred` onto that cluster.
    pub fn aligned(map: &MapFamily, x0: &[f64], position: usize, preferred: &DVector<f64>) -> Result<Eigenframe> {
        let mut ef = Eigenframe::at(map, x0)?;
        let cl = ef.cluster_of(position);
        if cl.len() > 1 {
            let g = map.domain.metric(x0);
            let basis: Vec<DVector<f64>> = cl.clone().map(|j| ef.reference.column(j).into_owned()).collect();
            let mut proj = DVector::zeros(g.nrows());
            for b in &basis {
                proj.axpy(inner(&g, b, preferred), b, 1.0);
            }
            let mut seed = vec![proj];
            seed.extend(basis);
            let on = gram_schmidt(&g, &seed, 1e-8);
            if on.len() != cl.len() {
                return Err(Error::Degenerate("preferred direction is orthogonal to its cluster".into()));
            }
            for (j, v) in cl.zip(on) {
                ef.reference.set_column(j, &v);
            }
        }
        Ok(ef)
    }

    /// Flips eigenfield signs (`±1` per position).
    pub fn with_signs(mut self, signs: &[f64]) -> Eigenframe {
        self.signs = signs.to_vec();
        self
    }

    pub fn cluster_of(&self, position: usize) -> Range<usize> {
        self.clusters.iter().find(|c| c.contains(&position)).cloned().unwrap_or(position..position + 1)
    }

    /// Frame vectors (columns) at `x`.
    pub fn vectors(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let g = self.map.domain.metric(x);
        let (_, vecs) = spectrum(&pullback(&self.map, x), &g)?;
        let d = g.nrows();
        let mut out = DMatrix::zeros(d, d);
        for cl in &self.clusters {
            let basis: Vec<DVector<f64>> = cl.clone().map(|j| vecs.column(j).into_owned()).collect();
            let projected: Vec<DVector<f64>> = cl
                .clone()
                .map(|j| {
                    let r = self.reference.column(j).into_owned();
                    let mut p = DVector::zeros(d);
                    for b in &basis {
                        p.axpy(inner(&g, b, &r), b, 1.0);
                    }
                    p
                })
                .collect();
            let on = gram_schmidt(&g, &projected, 1e-8);
            if on.len() != cl.len() {
                return Err(Error::Degenerate(format!("eigenframe lost continuity at {x:?}")));
            }
            for (j, v) in cl.clone().zip(on) {
                out.set_column(j, &(v * self.signs[j]));
            }
        }
        Ok(out)
    }

    pub fn field(&self) -> FrameField {
        let me = self.clone();
        let d = self.map.dim_domain();
        let f: MatrixFn = Arc::new(move |x: &[f64]| me.vectors(x).unwrap_or_else(|_| DMatrix::from_element(d, d, f64::NAN)));
        FrameField::new(d, f)
    }

    /// `λ_k²` as the Rayleigh quotient of the frame vectors at `x` (smooth in `x`).
    pub fn values(&self, x: &[f64]) -> Result<Vec<f64>> {
        let e = self.vectors(x)?;
        let p = pullback(&self.map, x);
        Ok((0..e.ncols()).map(|k| inner(&p, &e.column(k).into_owned(), &e.column(k).into_owned())).collect())
    }
}

/// Everything the eigenframe residuals need at one point.
pub struct FramePoint {
    pub x: Vec<f64>,
    pub frame: DMatrix<f64>,
    pub lam2: Vec<f64>,
    /// `lam2_plus[k]`, `lam2_minus[k]`: values at `x ± h E_k`.
    pub lam2_plus: Vec<Vec<f64>>,
    pub lam2_minus: Vec<Vec<f64>>,
    pub gamma: Gamma,
    pub h: f64,
}

impl FramePoint {
    pub fn new(ef: &Eigenframe, x: &[f64]) -> Result<FramePoint> {
        let frame = ef.vectors(x)?;
        let lam2 = ef.values(x)?;
        let h = FD_STEP2;
        let d = x.len();
        let (mut lam2_plus, mut lam2_minus) = (Vec::with_capacity(d), Vec::with_capacity(d));
        for k in 0..d {
            let step = frame.column(k);
            let xp: Vec<f64> = (0..d).map(|i| x[i] + h * step[i]).collect();
            let xm: Vec<f64> = (0..d).map(|i| x[i] - h * step[i]).collect();
            lam2_plus.push(ef.values(&xp)?);
            lam2_minus.push(ef.values(&xm)?);
        }
        let gamma = connection_coeffs(&ef.map.domain, &ef.field(), x)?;
        if !gamma.is_finite() {
            return Err(Error::NonFinite { what: "eigenframe connection coefficients".into(), point: x.to_vec() });
        }
        Ok(FramePoint { x: x.to_vec(), frame, lam2, lam2_plus, lam2_minus, gamma, h })
    }

    /// `E_k(F(λ²))` by the central rule.
    pub fn ek(&self, k: usize, f: impl Fn(&[f64]) -> f64) -> f64 {
        (f(&self.lam2_plus[k]) - f(&self.lam2_minus[k])) / (2.0 * self.h)
    }

    pub fn g(&self, i: usize, j: usize, k: usize) -> f64 {
        self.gamma.get(i, j, k)
    }

    /// `Σ_γ Γ_γγ^k` over the vertical positions.
    pub fn vertical_trace(&self, vertical: &[usize], k: usize) -> f64 {
        vertical.iter().map(|&v| self.g(v, v, k)).sum()
    }
}

/// One equation of the three-target system for label `k` with partners `i`, `j`.
fn sig3_equation(p: &FramePoint, k: usize, i: usize, j: usize, vertical: &[usize]) -> f64 {
    let l = &p.lam2;
    0.5 * p.ek(k, |v| v[k] * v[i] + v[k] * v[j] - v[i] * v[j])
        + l[j] * (l[i] - l[k]) * p.g(i, i, k)
        + l[i] * (l[j] - l[k]) * p.g(j, j, k)
        - l[k] * (l[i] + l[j]) * p.vertical_trace(vertical, k)
}

/// `E_k[λ_k² − e] + Σ_i (λ_i² − λ_k²) Γ_ii^k`, vertical positions included.
fn harmonic_equation(p: &FramePoint, k: usize) -> f64 {
    let l = &p.lam2;
    let d = l.len();
    p.ek(k, |v| v[k] - 0.5 * v.iter().sum::<f64>()) + (0..d).map(|i| (l[i] - l[k]) * p.g(i, i, k)).sum::<f64>()
}

/// Step of the five-point rule used for coordinate derivatives in [`tension_fields`].
pub const TENSION_STEP: f64 = 2e-4;

/// `∂_b f(x)` by the fourth-order central rule.
fn partial(f: &dyn Fn(&[f64]) -> DMatrix<f64>, x: &[f64], b: usize) -> DMatrix<f64> {
    let h = TENSION_STEP;
    let mut xp = x.to_vec();
    let mut at = |t: f64| {
        xp[b] = x[b] + t * h;
        f(&xp)
    };
    let (p1, m1, p2, m2) = (at(1.0), at(-1.0), at(2.0), at(-2.0));
    ((p1 - m1) * 8.0 - (p2 - m2)) / (12.0 * h)
}

fn partial_scalar(f: &dyn Fn(&[f64]) -> f64, x: &[f64], b: usize) -> f64 {
    partial(&|z: &[f64]| DMatrix::from_element(1, 1, f(z)), x, b)[(0, 0)]
}

/// Coordinate Christoffel symbols `Γ^a_bc`, index `a·d² + b·d + c`.
fn christoffel(metric: &dyn Fn(&[f64]) -> DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    let d = x.len();
    let ginv = metric(x).try_inverse().unwrap_or_else(|| DMatrix::from_element(d, d, f64::NAN));
    let dg: Vec<DMatrix<f64>> = (0..d).map(|b| partial(metric, x, b)).collect();
    let mut out = vec![0.0; d * d * d];
    for a in 0..d {
        for b in 0..d {
            for c in 0..d {
                let mut acc = 0.0;
                for e in 0..d {
                    acc += ginv[(a, e)] * (dg[b][(e, c)] + dg[c][(e, b)] - dg[e][(b, c)]);
                }
                out[a * d * d + b * d + c] = 0.5 * acc;
            }
        }
    }
    out
}

/// Tension field `τ(φ)` and σ₂-tension field `τ_σ₂(φ)` in codomain coordinates.
#[derive(Debug, Clone)]
pub struct TensionData {
    pub tau: DVector<f64>,
    pub tau_sigma2: DVector<f64>,
    pub jacobian: DMatrix<f64>,
    /// Codomain metric at `φ(x)`.
    pub target_metric: DMatrix<f64>,
    pub energy_density: f64,
    pub cauchy_green: DMatrix<f64>,
}

/// `τ_σ₂ = 2[e τ + dφ(grad e)] − trace(∇dφ)∘𝔠 − dφ(div 𝔠)` by coordinate finite differences.
pub fn tension_fields(map: &MapFamily, x: &[f64]) -> Result<TensionData> {
    map.domain.check_regular(x, 2.0 * TENSION_STEP)?;
    let (m, n) = (map.dim_domain(), map.dim_codomain());
    let gfn = map.domain.metric_fn();
    let g = gfn(x);
    let ginv = g.clone().try_inverse().ok_or_else(|| Error::Degenerate("domain metric is singular".into()))?;
    let gam_m = christoffel(&*gfn, x);
    let j = map.jacobian_unchecked(x);
    let y = map.eval_raw(x);
    let hfn = map.codomain.metric_fn();
    let hm = hfn(&y);
    let gam_n = christoffel(&*hfn, &y);

    let energy = |z: &[f64]| {
        let gz = gfn(z).try_inverse().unwrap_or_else(|| DMatrix::from_element(m, m, f64::NAN));
        0.5 * (gz * pullback(map, z)).trace()
    };
    let p = pullback(map, x);
    let e = energy(x);
    let d_j: Vec<DMatrix<f64>> = (0..m).map(|b| partial(&|z: &[f64]| map.jacobian_unchecked(z), x, b)).collect();
    let d_p: Vec<DMatrix<f64>> = (0..m).map(|b| partial(&|z: &[f64]| pullback(map, z), x, b)).collect();
    let de = DVector::from_iterator(m, (0..m).map(|b| partial_scalar(&energy, x, b)));
    // second fundamental form (∇dφ)^a_bc
    let mut hess = vec![DMatrix::zeros(m, m); n];
    for a in 0..n {
        for b in 0..m {
            for c in 0..m {
                let mut v = 0.5 * (d_j[b][(a, c)] + d_j[c][(a, b)]);
                for d in 0..m {
                    v -= gam_m[d * m * m + b * m + c] * j[(a, d)];
                }
                for ee in 0..n {
                    for f in 0..n {
                        v += gam_n[a * n * n + ee * n + f] * j[(ee, b)] * j[(f, c)];
                    }
                }
                hess[a][(b, c)] = v;
            }
        }
    }
    let w = &ginv * &p * &ginv;
    let tau = DVector::from_iterator(n, (0..n).map(|a| hess[a].component_mul(&ginv).sum()));
    let trace_c = DVector::from_iterator(n, (0..n).map(|a| hess[a].component_mul(&w).sum()));
    let mut div_p = DVector::zeros(m);
    for dd in 0..m {
        let mut acc = 0.0;
        for b in 0..m {
            for c in 0..m {
                let mut cov = d_p[b][(c, dd)];
                for ee in 0..m {
                    cov -= gam_m[ee * m * m + b * m + c] * p[(ee, dd)] + gam_m[ee * m * m + b * m + dd] * p[(c, ee)];
                }
                acc += ginv[(b, c)] * cov;
            }
        }
        div_p[dd] = acc;
    }
    let tau_sigma2 = &tau * (2.0 * e) + &j * (&ginv * &de) * 2.0 - trace_c - &j * (&ginv * div_p);
    if tau_sigma2.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "σ₂-tension field".into(), point: x.to_vec() });
    }
    Ok(TensionData { tau, tau_sigma2, jacobian: j, target_metric: hm, energy_density: e, cauchy_green: ginv * p })
}

/// Grid used by the residual operations: a line along the symmetry axis when
/// there is one, otherwise a product grid of about `n` points.
pub fn residual_grid(map: &MapFamily, n: usize) -> Vec<Vec<f64>> {
    residual_grid_inset(map, n, 0.0)
}

/// As [`residual_grid`], keeping a distance `inset` from both ends of every
/// non-periodic axis.
pub fn residual_grid_inset(map: &MapFamily, n: usize, inset: f64) -> Vec<Vec<f64>> {
    let c = &map.domain;
    let ranges: Vec<(f64, f64)> = c
        .coord_ranges
        .iter()
        .zip(&c.periodic)
        .map(|(&(lo, hi), &p)| if p { (lo, hi) } else { (lo + inset, hi - inset) })
        .collect();
    let mid = |i: usize, n: usize, (a, b): (f64, f64)| a + (b - a) * (i as f64 + 0.5) / n as f64;
    match map.reduced_axis {
        Some(axis) => (0..n)
            .map(|i| {
                let mut x: Vec<f64> = ranges.iter().map(|&(lo, hi)| 0.5 * (lo + hi)).collect();
                x[axis] = mid(i, n, ranges[axis]);
                x
            })
            .collect(),
        None => {
            let per = ((n as f64).powf(1.0 / c.dim as f64).round() as usize).max(2);
            let axes: Vec<Vec<f64>> = ranges.iter().map(|&r| (0..per).map(|i| mid(i, per, r)).collect()).collect();
            crate::geometry::product_grid(&axes)
        }
    }
}

struct PointSetup {
    fp: FramePoint,
    horizontal: Vec<usize>,
    vertical: Vec<usize>,
}

fn setup(map: &MapFamily, x: &[f64], ef: Option<Eigenframe>) -> Result<PointSetup> {
    let ef = match ef {
        Some(e) => e,
        None => Eigenframe::at(map, x)?,
    };
    let r = map.dim_codomain().min(map.dim_domain());
    let fp = FramePoint::new(&ef, x)?;
    if fp.lam2[r - 1] <= RANK_TOL {
        return Err(Error::RankDrop { point: x.to_vec(), value: fp.lam2[r - 1] });
    }
    Ok(PointSetup { fp, horizontal: (0..r).collect(), vertical: (r..map.dim_domain()).collect() })
}

/// `h(τ_σ₂, dφE_k)` along the horizontal frame vectors, the coordinate route.
fn general_components(map: &MapFamily, x: &[f64], frame: &DMatrix<f64>, horizontal: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
    let t = tension_fields(map, x)?;
    let mut sig = Vec::with_capacity(horizontal.len());
    let mut harm = Vec::with_capacity(horizontal.len());
    for &k in horizontal {
        let v = &t.jacobian * frame.column(k);
        sig.push(inner(&t.target_metric, &t.tau_sigma2, &v));
        harm.push(inner(&t.target_metric, &t.tau, &v));
    }
    Ok((sig, harm))
}

fn eval_grid<T: Send>(grid: &[Vec<f64>], f: impl Fn(&[f64]) -> Result<T> + Sync) -> Result<Vec<T>> {
    grid.par_iter().map(|x| f(x)).collect()
}

fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().zip(b).flat_map(|(u, v)| u.iter().zip(v).map(|(p, q)| (p - q).abs())).fold(0.0, f64::max)
}

/// Residual of the two-target system: `E_k ln(λ₁λ₂) − Σ_γ Γ_γγ^k`, k = 1, 2.
pub fn residual_2target(map: &MapFamily, grid: &[Vec<f64>]) -> Result<ResidualReport> {
    if map.dim_codomain() != 2 {
        return Err(Error::Dimension(format!("two-target residual needs a surface target, got dimension {}", map.dim_codomain())));
    }
    let tol = tol_crit(map);
    let rows = eval_grid(grid, |x| {
        let s = setup(map, x, None)?;
        let p = &s.fp;
        let fh: Vec<f64> = (0..2).map(|k| 0.5 * p.ek(k, |v| (v[0] * v[1]).ln()) - p.vertical_trace(&s.vertical, k)).collect();
        let harm: Vec<f64> = (0..2).map(|k| harmonic_equation(p, k)).collect();
        let (gen, _) = general_components(map, x, &p.frame, &s.horizontal)?;
        let scale = p.lam2[0] * p.lam2[1];
        let gen_scaled: Vec<f64> = gen.iter().map(|v| v / scale).collect();
        Ok((fh, harm, gen, gen_scaled))
    })?;
    let system = if map.dim_domain() == 2 { System::Area2d } else { System::Fh };
    let fh: Vec<Vec<f64>> = rows.iter().map(|r| r.0.clone()).collect();
    let scaled: Vec<Vec<f64>> = rows.iter().map(|r| r.3.clone()).collect();
    let mut rep = ResidualReport::new(system, &map.name, grid.to_vec(), fh.clone(), tol);
    rep.route_mismatch = Some(max_abs_diff(&fh, &scaled));
    rep.companions.push(ResidualReport::new(System::Harmonic, &map.name, grid.to_vec(), rows.iter().map(|r| r.1.clone()).collect(), tol));
    rep.companions.push(ResidualReport::new(System::General, &map.name, grid.to_vec(), rows.iter().map(|r| r.2.clone()).collect(), tol));
    Ok(rep)
}

/// The three-target system with the harmonic and coordinate-route companions.
pub fn residual_3target(map: &MapFamily, grid: &[Vec<f64>]) -> Result<ResidualReport> {
    residual_3target_with(map, grid, None)
}

/// As [`residual_3target`], with optional eigenfield sign flips.
pub fn residual_3target_with(map: &MapFamily, grid: &[Vec<f64>], signs: Option<&[f64]>) -> Result<ResidualReport> {
    if map.dim_codomain() != 3 {
        return Err(Error::Dimension(format!("three-target residual needs a 3-dimensional target, got {}", map.dim_codomain())));
    }
    let tol = tol_crit(map);
    let rows = eval_grid(grid, |x| {
        let mut ef = Eigenframe::at(map, x)?;
        if let Some(s) = signs {
            ef = ef.with_signs(s);
        }
        let s = setup(map, x, Some(ef))?;
        let p = &s.fp;
        let sig: Vec<f64> = (0..3).map(|k| sig3_equation(p, k, (k + 1) % 3, (k + 2) % 3, &s.vertical)).collect();
        let harm: Vec<f64> = (0..3).map(|k| harmonic_equation(p, k)).collect();
        let (gen, gen_h) = general_components(map, x, &p.frame, &s.horizontal)?;
        Ok((sig, harm, gen, gen_h))
    })?;
    let sig: Vec<Vec<f64>> = rows.iter().map(|r| r.0.clone()).collect();
    let gen: Vec<Vec<f64>> = rows.iter().map(|r| r.2.clone()).collect();
    let mut rep = ResidualReport::new(System::Sig3, &map.name, grid.to_vec(), sig.clone(), tol);
    rep.route_mismatch = Some(max_abs_diff(&sig, &gen));
    let harm: Vec<Vec<f64>> = rows.iter().map(|r| r.1.clone()).collect();
    let harm_coord: Vec<Vec<f64>> = rows.iter().map(|r| r.3.clone()).collect();
    let mut h = ResidualReport::new(System::Harmonic, &map.name, grid.to_vec(), harm.clone(), tol);
    h.route_mismatch = Some(max_abs_diff(&harm, &harm_coord));
    rep.companions.push(h);
    rep.companions.push(ResidualReport::new(System::General, &map.name, grid.to_vec(), gen, tol));
    Ok(rep)
}

/// Labels `(c1, c2, c3)` for the contact system at `x`: `c1` carries `λ₁² = λ₂²λ₃²`,
/// aligned with the Reeb field when its cluster is degenerate.
fn contact_frame(map: &MapFamily, x: &[f64]) -> Result<(Eigenframe, [usize; 3])> {
    let g = map.domain.metric(x);
    let (values, _) = spectrum(&pullback(map, x), &g)?;
    let (i, dev) = contact_index(&values).ok_or_else(|| Error::Dimension("contact system needs three dimensions".into()))?;
    if dev > PREDICATE_TOL {
        return Err(Error::PredicateFailed { predicate: "lambda1^2 = lambda2^2 * lambda3^2".into(), point: x.to_vec(), deviation: dev });
    }
    let ef = match &map.domain.contact {
        Some(c) => Eigenframe::aligned(map, x, i, &c.reeb(x))?,
        None => Eigenframe::at(map, x)?,
    };
    let c1 = ef.cluster_of(i).start;
    let rest: Vec<usize> = (0..3).filter(|&j| j != c1).collect();
    Ok((ef, [c1, rest[0], rest[1]]))
}

/// The contact system with `λ² = λ₂²` and constant `k² = λ₁²`, plus condition (c).
pub fn residual_contact(map: &MapFamily, grid: &[Vec<f64>]) -> Result<ResidualReport> {
    if map.dim_domain() != 3 || map.dim_codomain() != 3 {
        return Err(Error::Dimension("contact system needs a map between 3-manifolds".into()));
    }
    let tol = tol_crit(map);
    let rows = eval_grid(grid, |x| {
        let (ef, [c1, c2, c3]) = contact_frame(map, x)?;
        let s = setup(map, x, Some(ef))?;
        let p = &s.fp;
        let k2 = p.lam2[c1];
        let l2 = p.lam2[c2];
        let contact = vec![
            0.5 * p.ek(c1, |v| v[c2] + k2 / v[c2]) + (l2 - k2) / l2 * p.g(c2, c2, c1) + l2 * (1.0 / l2 - 1.0) * p.g(c3, c3, c1),
            0.5 * p.ek(c2, |v| v[c2] - k2 / v[c2]) + (k2 / l2 - l2) * p.g(c3, c3, c2) + (k2 - l2) / l2 * p.g(c1, c1, c2),
            0.5 * p.ek(c3, |v| k2 / v[c2] - v[c2]) + l2 * (1.0 - 1.0 / l2) * p.g(c1, c1, c3) + (l2 - k2 / l2) * p.g(c2, c2, c3),
        ];
        // the same system from the three-target equations divided by k²
        let via_sig3: Vec<f64> = [(c1, c2, c3), (c2, c3, c1), (c3, c1, c2)]
            .iter()
            .map(|&(k, i, j)| sig3_equation(p, k, i, j, &[]) / k2)
            .collect();
        let diff = p.lam2[c2] - p.lam2[c3];
        let cond_c: Vec<f64> = [c1, c2, c3]
            .iter()
            .map(|&k| 0.5 * p.ek(k, |v| v[c2] - v[c3]) - diff * (p.g(c2, c2, k) + p.g(c3, c3, k)))
            .collect();
        let harm: Vec<f64> = [c1, c2, c3].iter().map(|&k| harmonic_equation(p, k)).collect();
        Ok((contact, via_sig3, cond_c, harm))
    })?;
    let contact: Vec<Vec<f64>> = rows.iter().map(|r| r.0.clone()).collect();
    let via: Vec<Vec<f64>> = rows.iter().map(|r| r.1.clone()).collect();
    let mut rep = ResidualReport::new(System::Contactsig3, &map.name, grid.to_vec(), contact.clone(), tol);
    rep.route_mismatch = Some(max_abs_diff(&contact, &via));
    rep.companions.push(ResidualReport::new(System::ConditionC, &map.name, grid.to_vec(), rows.iter().map(|r| r.2.clone()).collect(), tol));
    rep.companions.push(ResidualReport::new(System::Harmonic, &map.name, grid.to_vec(), rows.iter().map(|r| r.3.clone()).collect(), tol));
    Ok(rep)
}

/// `(n − 4) E_k ln λ + Σ_γ Γ_γγ^k` for horizontally conformal submersions.
pub fn residual_4harmonic(map: &MapFamily, grid: &[Vec<f64>]) -> Result<ResidualReport> {
    let (m, n) = (map.dim_domain(), map.dim_codomain());
    if n > m {
        return Err(Error::Dimension(format!("4-harmonic residual needs a submersion, got {m} → {n}")));
    }
    let tol = tol_crit(map);
    let rows = eval_grid(grid, |x| {
        let s = setup(map, x, None)?;
        let p = &s.fp;
        let hor = &s.horizontal;
        let (lo, hi) = hor.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &k| (a.min(p.lam2[k]), b.max(p.lam2[k])));
        let dev = (hi - lo) / hi;
        if dev > PREDICATE_TOL {
            return Err(Error::PredicateFailed { predicate: "horizontally weakly conformal".into(), point: x.to_vec(), deviation: dev });
        }
        let mean = |v: &[f64]| hor.iter().map(|&k| v[k]).sum::<f64>() / hor.len() as f64;
        let r: Vec<f64> = hor
            .iter()
            .map(|&k| (n as f64 - 4.0) * 0.5 * p.ek(k, |v| mean(v).ln()) + p.vertical_trace(&s.vertical, k))
            .collect();
        let (gen, _) = general_components(map, x, &p.frame, hor)?;
        Ok((r, gen))
    })?;
    let mut rep = ResidualReport::new(System::Fourharm, &map.name, grid.to_vec(), rows.iter().map(|r| r.0.clone()).collect(), tol);
    rep.companions.push(ResidualReport::new(System::General, &map.name, grid.to_vec(), rows.iter().map(|r| r.1.clone()).collect(), tol));
    Ok(rep)
}

/// Pointwise residual of the reduced Nomizu equation.
pub fn nomizu_ode(alpha: &Profile, k: f64, s: f64) -> f64 {
    let (a, a1, a2) = (alpha.value(s), alpha.deriv(s), alpha.second(s));
    let (s2, c2) = ((2.0 * s).sin(), (2.0 * s).cos());
    a2 * (k * k - 2.0 * k * (2.0 * a).sin() * s2 + 1.0) - 2.0 * k * a1 * a1 * s2 * (2.0 * a).cos()
        + 2.0 * a1 * ((k * k + 1.0) * (2.0 * s).tan() - 2.0 * k * (2.0 * a).sin() / c2)
        + k * k * (4.0 * a).sin()
}

/// Default `s`-grid for the Nomizu equation: `n` midpoints of `(0, π/4 − margin)`.
pub fn nomizu_grid(n: usize) -> Vec<f64> {
    let top = PI / 4.0 - NOMIZU_POLE_MARGIN;
    (0..n).map(|i| top * (i as f64 + 0.5) / n as f64).collect()
}

pub fn nomizu_residual(alpha: &Profile, k: f64, s_grid: &[f64]) -> Result<ResidualReport> {
    if k.fract() != 0.0 || (k as i64) % 2 == 0 {
        return Err(Error::InvalidParameter(format!("Nomizu equation needs odd k, got {k}")));
    }
    if let Some(&s) = s_grid.iter().find(|&&s| !(s > 0.0 && s < PI / 4.0 - NOMIZU_POLE_MARGIN)) {
        return Err(Error::NearSingularLocus { chart: "nomizu s-grid".into(), point: vec![s], margin: NOMIZU_POLE_MARGIN });
    }
    let residuals = s_grid.iter().map(|&s| vec![nomizu_ode(alpha, k, s)]).collect();
    let mut rep = ResidualReport::new(System::Nomizu, &format!("nomizu({}, {k})", alpha.name), s_grid.iter().map(|&s| vec![s]).collect(), residuals, TOL_CRIT_ANALYTIC);
    for (s, want) in [(0.0, 0.0), (PI / 4.0, PI / 4.0)] {
        if alpha.check_boundary(s, want).is_err() {
            rep.notes.push(format!("boundary condition alpha({s}) = {want} fails"));
        }
    }
    Ok(rep)
}

/// Frame-free comparison of `τ_σ₂` before and after a biconformal change.
#[derive(Debug, Clone, Serialize)]
pub struct ScalingReport {
    pub map: String,
    pub deformation: String,
    /// `max ‖τ̄ − σ⁴[τ + dφ((2e − 𝔠) grad ln F)]‖ / max ‖σ⁴τ‖` (absolute when the latter vanishes).
    pub max_mismatch: f64,
    pub sup_before: f64,
    pub sup_after: f64,
    pub zero_sets_coincide: bool,
    pub per_point: Vec<f64>,
}

/// Checks the transformation law of `τ_σ₂` under `ḡ = σ⁻²g^H + ρ⁻²g^V`,
/// with `F = σ^{4−n} ρ^{n−m}`.
pub fn conformal_invariance_check(map: &MapFamily, deform: &Deformation, grid: &[Vec<f64>]) -> Result<ScalingReport> {
    let Deformation::Biconformal { sigma, rho, .. } = deform else {
        return Err(Error::InvalidParameter("conformal invariance check needs a biconformal deformation".into()));
    };
    let deformed = map.deformed(deform)?;
    let (m, n) = (map.dim_domain() as f64, map.dim_codomain() as f64);
    let ln_f = |x: &[f64]| (4.0 - n) * sigma(x).abs().ln() + (n - m) * rho(x).abs().ln();
    let rows = eval_grid(grid, |x| {
        let before = tension_fields(map, x)?;
        let after = tension_fields(&deformed, x)?;
        let s4 = sigma(x).powi(4);
        let d = x.len();
        let grad = DVector::from_iterator(d, (0..d).map(|b| partial_scalar(&ln_f, x, b)));
        let ginv = map.domain.metric(x).try_inverse().ok_or_else(|| Error::Degenerate("singular metric".into()))?;
        let grad = ginv * grad;
        let chi = &grad * (2.0 * before.energy_density) - &before.cauchy_green * &grad;
        let predicted = (&before.tau_sigma2 + &before.jacobian * chi) * s4;
        let h = &before.target_metric;
        let norm = |v: &DVector<f64>| inner(h, v, v).max(0.0).sqrt();
        Ok((norm(&(&after.tau_sigma2 - &predicted)), norm(&predicted), norm(&before.tau_sigma2), norm(&after.tau_sigma2)))
    })?;
    let scale = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let per_point: Vec<f64> = rows.iter().map(|r| if scale > TOL_CRIT_ANALYTIC { r.0 / scale } else { r.0 }).collect();
    let sup_before = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    let sup_after = rows.iter().map(|r| r.3).fold(0.0, f64::max);
    let tol = tol_crit(map);
    let zero_before: Vec<bool> = rows.iter().map(|r| r.2 < tol).collect();
    let zero_after: Vec<bool> = rows.iter().map(|r| r.3 < tol).collect();
    Ok(ScalingReport {
        map: map.name.clone(),
        deformation: format!("{deform:?}"),
        max_mismatch: per_point.iter().copied().fold(0.0, f64::max),
        sup_before,
        sup_after,
        zero_sets_coincide: zero_before == zero_after,
        per_point,
    })
}

/// One row of the profile minimizer's iteration log.
#[derive(Debug, Clone, Serialize)]
pub struct ProfileLogRow {
    pub iteration: usize,
    pub objective: f64,
    pub ratio: f64,
    pub gradient_norm: f64,
    /// Sup of the σ₂ equation along `∂_s` for the current profile.
    pub sigma2_residual: f64,
}

#[derive(Debug, Clone)]
pub struct ProfileResult {
    pub k: f64,
    pub l: f64,
    pub kappa: f64,
    pub s: Vec<f64>,
    pub alpha: Vec<f64>,
    pub profile: Profile,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
    /// `2√(κAB)/(12π²kℓ)` of the discrete functional.
    pub discrete_ratio: f64,
    pub report: EnergyReport,
    pub log: Vec<ProfileLogRow>,
    /// Whether the logged σ₂ residual never increased.
    pub residual_monotone: bool,
    /// Whether the optimized α is nondecreasing.
    pub profile_monotone: bool,
}

impl ProfileResult {
    pub fn write_profile_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["s", "alpha"])?;
        for (s, a) in self.s.iter().zip(&self.alpha) {
            w.write_record([format!("{s:.17e}"), format!("{a:.17e}")])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_log_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.log {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// `sup |α(s) − s|` over the nodes.
    pub fn deviation_from_identity(&self) -> f64 {
        self.s.iter().zip(&self.alpha).map(|(s, a)| (a - s).abs()).fold(0.0, f64::max)
    }
}

/// Settings of the profile minimizer.
#[derive(Debug, Clone, Copy)]
pub struct ProfileSettings {
    pub max_iter: usize,
    /// Stop when the projected gradient's sup norm falls below this.
    pub grad_tol: f64,
    pub log_every: usize,
}

impl Default for ProfileSettings {
    fn default() -> Self {
        ProfileSettings { max_iter: 50_000, grad_tol: 1e-11, log_every: 500 }
    }
}

/// Discrete reduced energy on a uniform `s`-grid with midpoint cells.
struct ProfileFunctional {
    k: f64,
    l: f64,
    h: f64,
    mids: Vec<f64>,
    weights: Vec<f64>,
}

impl ProfileFunctional {
    fn new(k: f64, l: f64, cells: usize) -> ProfileFunctional {
        let h = PI / 2.0 / cells as f64;
        let mids: Vec<f64> = (0..cells).map(|j| (j as f64 + 0.5) * h).collect();
        let weights = mids.iter().map(|s| 4.0 * PI * PI * s.cos() * s.sin() * h).collect();
        ProfileFunctional { k, l, h, mids, weights }
    }

    /// `(A, B, ∇A, ∇B)` with `A = E_σ₁`, `B = E_σ₂` at unit radius.
    fn eval(&self, alpha: &[f64]) -> (f64, f64, Vec<f64>, Vec<f64>) {
        let n = alpha.len();
        let (mut a_sum, mut b_sum) = (0.0, 0.0);
        let mut ga = vec![0.0; n];
        let mut gb = vec![0.0; n];
        let (k2, l2) = (self.k * self.k, self.l * self.l);
        for (j, (&s, &w)) in self.mids.iter().zip(&self.weights).enumerate() {
            let am = 0.5 * (alpha[j] + alpha[j + 1]);
            let d = (alpha[j + 1] - alpha[j]) / self.h;
            let (ss, cs) = (s.sin(), s.cos());
            let a = d * d;
            let b = l2 * am.sin().powi(2) / (ss * ss);
            let c = k2 * am.cos().powi(2) / (cs * cs);
            a_sum += 0.5 * w * (a + b + c);
            b_sum += 0.5 * w * (a * b + a * c + b * c);
            let (db, dc) = (l2 * (2.0 * am).sin() / (ss * ss), -k2 * (2.0 * am).sin() / (cs * cs));
            let da_dd = 2.0 * d;
            // chain rule: ∂d/∂α_j = −1/h, ∂d/∂α_{j+1} = 1/h, ∂α_m/∂α = 1/2
            for (node, dd, dm) in [(j, -1.0 / self.h, 0.5), (j + 1, 1.0 / self.h, 0.5)] {
                let d_a = da_dd * dd;
                let (d_b, d_c) = (db * dm, dc * dm);
                ga[node] += 0.5 * w * (d_a + d_b + d_c);
                gb[node] += 0.5 * w * (d_a * (b + c) + d_b * (a + c) + d_c * (a + b));
            }
        }
        (a_sum, b_sum, ga, gb)
    }

    fn objective(&self, alpha: &[f64]) -> (f64, Vec<f64>) {
        let (a, b, ga, gb) = self.eval(alpha);
        let mut g: Vec<f64> = ga.iter().zip(&gb).map(|(x, y)| x / a + y / b).collect();
        let last = g.len() - 1;
        g[0] = 0.0;
        g[last] = 0.0;
        (a.ln() + b.ln(), g)
    }
}

fn project(alpha: &mut [f64]) {
    for a in alpha.iter_mut() {
        *a = a.clamp(0.0, PI / 2.0);
    }
}

/// Sup over a few points of the three-target equation along `∂_s` for the α-join of `profile`.
fn sigma2_s_residual(profile: &Profile, k: f64, l: f64) -> f64 {
    let Ok(map) = alpha_join(profile.clone(), k, l) else { return f64::NAN };
    let pts = residual_grid(&map, 16);
    let vals: Vec<f64> = pts
        .par_iter()
        .map(|x| {
            let Ok(s) = setup(&map, x, None) else { return f64::NAN };
            let p = &s.fp;
            // the frame vector closest to ∂_s
            let ks = (0..3).max_by(|&a, &b| p.frame[(2, a)].abs().total_cmp(&p.frame[(2, b)].abs())).unwrap();
            sig3_equation(p, ks, (ks + 1) % 3, (ks + 2) % 3, &[]).abs()
        })
        .collect();
    vals.into_iter().fold(0.0, |m, v| if v.is_nan() { f64::NAN } else { m.max(v) })
}

/// Minimizes the radius-optimized Skyrme energy over α-join profiles with
/// pinned ends, by projected Barzilai–Borwein descent with Armijo backtracking.
pub fn minimize_profile_run(k: f64, l: f64, kappa: f64, cells: usize, settings: ProfileSettings) -> Result<ProfileResult> {
    if cells < 32 {
        return Err(Error::InvalidParameter(format!("profile grid needs at least 32 cells, got {cells}")));
    }
    if !(kappa > 0.0) {
        return Err(Error::InvalidParameter(format!("profile minimization needs κ > 0, got {kappa}")));
    }
    for v in [k, l] {
        if v == 0.0 || v.fract() != 0.0 {
            return Err(Error::InvalidParameter(format!("alpha_join weights must be nonzero integers, got {v}")));
        }
    }
    let fun = ProfileFunctional::new(k, l, cells);
    let s: Vec<f64> = (0..=cells).map(|j| j as f64 * fun.h).collect();
    let mut x = s.clone();
    x[cells] = PI / 2.0;
    let (mut f, mut g) = fun.objective(&x);
    let pg_norm = |x: &[f64], g: &[f64]| {
        let mut y: Vec<f64> = x.iter().zip(g).map(|(a, b)| a - b).collect();
        project(&mut y);
        y.iter().zip(x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    };
    let ratio_of = |x: &[f64]| {
        let (a, b, _, _) = fun.eval(x);
        2.0 * (kappa * a * b).sqrt() / (SKYRME_UNIT * (k * l).abs())
    };
    let to_profile = |x: &[f64]| Profile::grid("minimized", s.clone(), x.to_vec());
    let mut log = Vec::new();
    let mut step = 1e-2;
    let mut iterations = 0;
    let mut gnorm = pg_norm(&x, &g);
    while iterations < settings.max_iter && gnorm >= settings.grad_tol {
        if iterations % settings.log_every == 0 {
            log.push(ProfileLogRow {
                iteration: iterations,
                objective: f,
                ratio: ratio_of(&x),
                gradient_norm: gnorm,
                sigma2_residual: sigma2_s_residual(&to_profile(&x)?, k, l),
            });
        }
        let mut t = step;
        let (xn, fn_, gn) = loop {
            let mut y: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - t * b).collect();
            project(&mut y);
            let (fy, gy) = fun.objective(&y);
            let decrease: f64 = g.iter().zip(y.iter().zip(&x)).map(|(gi, (yi, xi))| gi * (xi - yi)).sum();
            // slack of a few ulps so roundoff cannot stall the line search
            if fy <= f - 1e-4 * decrease + 8.0 * f64::EPSILON * f.abs() || t < 1e-20 {
                break (y, fy, gy);
            }
            t *= 0.5;
        };
        let sv: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = sv.iter().zip(&yv).map(|(a, b)| a * b).sum();
        let ss: f64 = sv.iter().map(|a| a * a).sum();
        step = if sy > 0.0 { (ss / sy).clamp(1e-12, 1e12) } else { 1e-2 };
        x = xn;
        f = fn_;
        g = gn;
        iterations += 1;
        gnorm = pg_norm(&x, &g);
    }
    let converged = gnorm < settings.grad_tol;
    let profile = to_profile(&x)?;
    log.push(ProfileLogRow {
        iteration: iterations,
        objective: f,
        ratio: ratio_of(&x),
        gradient_norm: gnorm,
        sigma2_residual: sigma2_s_residual(&profile, k, l),
    });
    let map = alpha_join(profile.clone(), k, l)?;
    let report = full_report(&map, kappa, QuadOrders::default())?;
    let residual_monotone = log.windows(2).all(|w| w[1].sigma2_residual <= w[0].sigma2_residual);
    let profile_monotone = x.windows(2).all(|w| w[1] >= w[0]);
    Ok(ProfileResult {
        k,
        l,
        kappa,
        discrete_ratio: ratio_of(&x),
        s,
        alpha: x,
        profile,
        iterations,
        converged,
        gradient_norm: gnorm,
        report,
        log,
        residual_monotone,
        profile_monotone,
    })
}

/// [`minimize_profile_run`] with non-convergence reported as an error.
pub fn minimize_profile(k: f64, l: f64, kappa: f64, cells: usize) -> Result<ProfileResult> {
    let r = minimize_profile_run(k, l, kappa, cells, ProfileSettings::default())?;
    if !r.converged {
        return Err(Error::NoConvergence { iterations: r.iterations, gradient_norm: r.gradient_norm });
    }
    Ok(r)
}
