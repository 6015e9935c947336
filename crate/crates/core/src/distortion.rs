//! Pointwise Cauchy–Green spectrum of a map and the predicates built on it.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{elementary_symmetric, pencil_eigen};
use crate::map_zoo::MapFamily;

/// Relative gap below which two eigenvalues count as one cluster.
pub const DEGENERACY_TOL: f64 = 1e-8;
/// Negative round-off tolerated before clamping an eigenvalue to zero.
const CLAMP_TOL: f64 = 1e-12;

/// Spectrum of `φ*h` with respect to `g` at one point.
#[derive(Debug, Clone)]
pub struct DistortionData {
    pub point: Vec<f64>,
    pub pullback_metric: DMatrix<f64>,
    /// `λ₁² ≥ … ≥ λ_m²`.
    pub eigenvalues: Vec<f64>,
    /// g-orthonormal eigenvectors as columns, in the order of `eigenvalues`.
    pub eigenframe: DMatrix<f64>,
    /// Sizes of the clusters of equal eigenvalues, in order.
    pub multiplicities: Vec<usize>,
    /// `σ₁, …, σ_m`.
    pub invariants: Vec<f64>,
    /// `e(φ) = σ₁/2`.
    pub energy_density: f64,
    /// `v(φ) = √σ_m` when `m = n`.
    pub volume_density_map: Option<f64>,
}

impl DistortionData {
    pub fn sigma(&self, p: usize) -> f64 {
        match p {
            0 => 1.0,
            p if p <= self.invariants.len() => self.invariants[p - 1],
            _ => 0.0,
        }
    }

    pub fn sigma1(&self) -> f64 {
        self.sigma(1)
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma(2)
    }

    /// Largest `σ₂` allowed by Newton's inequality when at most `rank` eigenvalues are nonzero.
    pub fn newton_bound(&self, rank: usize) -> f64 {
        if rank < 2 {
            return 0.0;
        }
        let r = rank as f64;
        (r - 1.0) / r * self.sigma1().powi(2) / 2.0
    }

    /// Index ranges of the eigenvalue clusters.
    pub fn clusters(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for &m in &self.multiplicities {
            out.push(start..start + m);
            start += m;
        }
        out
    }
}

/// Spectrum of a symmetric form `a` relative to the metric `g`.
pub fn spectrum(a: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let eig = pencil_eigen(a, g)?;
    let scale = eig.values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut values = eig.values;
    for v in values.iter_mut() {
        if *v < 0.0 {
            if *v < -CLAMP_TOL * scale {
                return Err(Error::Degenerate(format!("pullback metric has a negative eigenvalue {v}")));
            }
            *v = 0.0;
        }
    }
    Ok((values, eig.vectors))
}

/// Cluster sizes for a descending list, with gaps measured against `DEGENERACY_TOL·σ₁`.
pub fn multiplicities(values: &[f64]) -> Vec<usize> {
    let s1: f64 = values.iter().sum();
    let tol = DEGENERACY_TOL * s1;
    let mut out = Vec::new();
    let mut run = 0;
    for i in 0..values.len() {
        run += 1;
        if i + 1 == values.len() || values[i] - values[i + 1] > tol {
            out.push(run);
            run = 0;
        }
    }
    out
}

/// Pointwise distortion data of `map` at `x`.
pub fn analyze_point(map: &MapFamily, x: &[f64]) -> Result<DistortionData> {
    map.domain.check_regular(x, 0.0)?;
    let j = map.jacobian_unchecked(x);
    if j.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "Jacobian".into(), point: x.to_vec() });
    }
    let y = map.eval_raw(x);
    let h = map.codomain.metric(&y);
    let mut pull = j.transpose() * &h * &j;
    pull = (&pull + pull.transpose()) * 0.5;
    let g = map.domain.metric(x);
    let (values, frame) = spectrum(&pull, &g)?;
    let invariants = elementary_symmetric(&values);
    let volume_density_map = (map.dim_domain() == map.dim_codomain()).then(|| invariants[values.len() - 1].max(0.0).sqrt());
    Ok(DistortionData {
        point: x.to_vec(),
        pullback_metric: pull,
        multiplicities: multiplicities(&values),
        energy_density: invariants[0] / 2.0,
        eigenvalues: values,
        eigenframe: frame,
        invariants,
        volume_density_map,
    })
}

/// `|dφ|⁴/4 = σ₁²/4`.
pub fn four_energy_density(data: &DistortionData) -> f64 {
    data.sigma1().powi(2) / 4.0
}

/// Outcome of one classification predicate over a grid.
#[derive(Debug, Clone, Serialize)]
pub struct Flag {
    pub holds: bool,
    /// Largest relative deviation seen.
    pub max_deviation: f64,
    /// Grid point where it occurred; empty when the predicate does not apply.
    pub witness: Vec<f64>,
}

impl Flag {
    fn not_applicable() -> Flag {
        Flag { holds: false, max_deviation: f64::NAN, witness: Vec::new() }
    }

    fn from_deviations(devs: impl IntoIterator<Item = (f64, Vec<f64>)>, tol: f64) -> Flag {
        let mut worst = Flag { holds: true, max_deviation: 0.0, witness: Vec::new() };
        for (d, x) in devs {
            let d = if d.is_finite() { d } else { f64::INFINITY };
            if worst.witness.is_empty() || d > worst.max_deviation {
                worst.max_deviation = d;
                worst.witness = x;
            }
        }
        worst.holds = worst.max_deviation <= tol;
        worst
    }
}

/// Class flags of a map over a sample grid.
#[derive(Debug, Clone, Serialize)]
pub struct ClassFlags {
    /// The nonzero eigenvalues coincide (horizontally weakly conformal).
    pub hwc: Flag,
    /// Mean squared dilation on the grid when `hwc` holds.
    pub dilation_sq: Option<f64>,
    /// HWC with a dilation constant across the grid.
    pub homothetic: Flag,
    /// Two nonzero eigenvalues coincide at every point.
    pub paired: Flag,
    /// Some `λᵢ²` equals the product of the other two, pointwise.
    pub contacto_pointwise: Flag,
    /// ... and that common value is constant across the grid.
    pub contacto_constant: Flag,
    /// `m = n = 2` with `λ₁λ₂` constant.
    pub area_preserving_2d: Flag,
}

fn rel(d: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        d / scale
    } else {
        d
    }
}

fn spread(xs: impl IntoIterator<Item = f64>) -> (f64, f64) {
    xs.into_iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Index `i` minimizing `|λᵢ² − Π_{j≠i} λⱼ²|` and the relative deviation.
pub fn contact_index(values: &[f64]) -> Option<(usize, f64)> {
    if values.len() != 3 {
        return None;
    }
    (0..3)
        .map(|i| {
            let prod: f64 = (0..3).filter(|&j| j != i).map(|j| values[j]).product();
            let scale = values[i].abs().max(prod.abs()).max(f64::MIN_POSITIVE);
            (i, (values[i] - prod).abs() / scale)
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

/// Evaluates the class predicates on `grid` with relative tolerance `tol`.
pub fn classify(map: &MapFamily, grid: &[Vec<f64>], tol: f64) -> ClassFlags {
    let data: Vec<DistortionData> = grid.iter().filter_map(|x| analyze_point(map, x).ok()).collect();
    let (m, n) = (map.dim_domain(), map.dim_codomain());
    let r = m.min(n);

    let hwc = Flag::from_deviations(
        data.iter().map(|d| {
            let s1 = d.sigma1();
            let (lo, hi) = spread(d.eigenvalues[..r].iter().copied());
            let tail = d.eigenvalues[r..].iter().fold(0.0f64, |a, v| a.max(*v));
            (rel((hi - lo).max(tail), s1), d.point.clone())
        }),
        tol,
    );
    let dilations: Vec<f64> = data.iter().map(|d| d.eigenvalues[..r].iter().sum::<f64>() / r as f64).collect();
    let dilation_sq = (hwc.holds && !dilations.is_empty()).then(|| dilations.iter().sum::<f64>() / dilations.len() as f64);
    let homothetic = if hwc.holds && !data.is_empty() {
        let (lo, hi) = spread(dilations.iter().copied());
        let at = data[dilations.iter().position(|&v| v == hi).unwrap_or(0)].point.clone();
        Flag::from_deviations(std::iter::once((rel(hi - lo, hi), at)), tol)
    } else {
        Flag { holds: false, ..hwc.clone() }
    };

    let paired = Flag::from_deviations(
        data.iter().map(|d| {
            let s1 = d.sigma1();
            let nz: Vec<f64> = d.eigenvalues.iter().copied().filter(|&v| v > DEGENERACY_TOL * s1).collect();
            let gap = nz.windows(2).map(|w| w[0] - w[1]).fold(f64::INFINITY, f64::min);
            (rel(gap, s1), d.point.clone())
        }),
        tol,
    );

    let (contacto_pointwise, contacto_constant) = if m == 3 && n == 3 && !data.is_empty() {
        let idx: Vec<(usize, f64)> = data.iter().map(|d| contact_index(&d.eigenvalues).unwrap()).collect();
        let pointwise = Flag::from_deviations(idx.iter().zip(&data).map(|(&(_, dev), d)| (dev, d.point.clone())), tol);
        let vals: Vec<f64> = idx.iter().zip(&data).map(|(&(i, _), d)| d.eigenvalues[i]).collect();
        let (lo, hi) = spread(vals.iter().copied());
        let at = data[vals.iter().position(|&v| v == hi).unwrap_or(0)].point.clone();
        let constant = if pointwise.holds {
            Flag::from_deviations(std::iter::once((rel(hi - lo, hi), at)), tol)
        } else {
            Flag { holds: false, ..pointwise.clone() }
        };
        (pointwise, constant)
    } else {
        (Flag::not_applicable(), Flag::not_applicable())
    };

    let area_preserving_2d = if m == 2 && n == 2 && !data.is_empty() {
        let vals: Vec<f64> = data.iter().map(|d| d.sigma2().sqrt()).collect();
        let (lo, hi) = spread(vals.iter().copied());
        let at = data[vals.iter().position(|&v| v == hi).unwrap_or(0)].point.clone();
        Flag::from_deviations(std::iter::once((rel(hi - lo, hi), at)), tol)
    } else {
        Flag::not_applicable()
    };

    ClassFlags { hwc, dilation_sq, homothetic, paired, contacto_pointwise, contacto_constant, area_preserving_2d }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Reorders each spectrum of a 1D sweep to follow the previous sample by
/// nearest value, so branches keep their identity through crossings.
pub fn track_branches(sweep: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(sweep.len());
    for cur in sweep {
        let Some(prev) = out.last() else {
            out.push(cur.clone());
            continue;
        };
        let m = cur.len();
        let best = if m <= 6 {
            permutations(m)
                .into_iter()
                .min_by(|p, q| {
                    let cost = |p: &Vec<usize>| (0..m).map(|i| (prev[i] - cur[p[i]]).abs()).sum::<f64>();
                    cost(p).total_cmp(&cost(q))
                })
                .unwrap()
        } else {
            // greedy for wide spectra
            let mut free: Vec<usize> = (0..m).collect();
            (0..m)
                .map(|i| {
                    let (k, _) = free
                        .iter()
                        .enumerate()
                        .min_by(|a, b| (prev[i] - cur[*a.1]).abs().total_cmp(&(prev[i] - cur[*b.1]).abs()))
                        .unwrap();
                    free.remove(k)
                })
                .collect()
        };
        out.push(best.iter().map(|&j| cur[j]).collect());
    }
    out
}
