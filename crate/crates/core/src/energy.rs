//! Energies, topological charges and energy bounds by quadrature.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::distortion::analyze_point;
use crate::error::{Error, Result};
use crate::geometry::{product_grid, Chart, ChartKind, VectorFn, FD_STEP};
use crate::linalg::{gauss_legendre_on, pairwise_sum};
use crate::map_zoo::{potential_defect, pullback_area_form_unchecked, pullback_oneform, MapFamily};

/// Coupling that makes the identity of S³ have minimized ratio exactly 1.
pub const KAPPA_CAL: f64 = 4.0;
/// `12π²`, the Skyrme normalization.
pub const SKYRME_UNIT: f64 = 12.0 * PI * PI;
/// Degree-2 minimum reported in the literature, kept only for comparison.
pub const LITERATURE_B2_RATIO: f64 = 1.047762;
/// Snap window for integer degrees and rational Hopf charges.
pub const SNAP_TOL: f64 = 1e-4;
/// Allowed `‖dA − φ*Ω‖∞` for a supplied potential.
pub const POTENTIAL_TOL: f64 = 1e-7;

/// Points per axis used by the default rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct QuadOrders {
    pub order_1d: usize,
    pub order_3d: usize,
    pub order_radial: usize,
}

impl Default for QuadOrders {
    fn default() -> Self {
        QuadOrders { order_1d: 64, order_3d: 32, order_radial: 128 }
    }
}

impl QuadOrders {
    pub fn doubled(self) -> QuadOrders {
        QuadOrders { order_1d: 2 * self.order_1d, order_3d: 2 * self.order_3d, order_radial: 2 * self.order_radial }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadKind {
    ProductGauss,
    Reduced1d,
}

/// Nodes with Riemannian (`weights`) and coordinate (`coord_weights`) weights.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub kind: QuadKind,
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub coord_weights: Vec<f64>,
    pub order: usize,
    pub axis: Option<usize>,
}

impl QuadratureRule {
    /// Tensor Gauss–Legendre rule with `order` points on every axis.
    pub fn product(chart: &Chart, order: usize) -> QuadratureRule {
        QuadratureRule::product_orders(chart, &vec![order; chart.dim])
    }

    /// Tensor Gauss–Legendre rule with `orders[i]` points on axis `i`.
    pub fn product_orders(chart: &Chart, orders: &[usize]) -> QuadratureRule {
        let order = orders.iter().copied().max().unwrap_or(0);
        let axes: Vec<(Vec<f64>, Vec<f64>)> =
            chart.coord_ranges.iter().zip(orders).map(|(&(a, b), &n)| gauss_legendre_on(n, a, b)).collect();
        let nodes = product_grid(&axes.iter().map(|a| a.0.clone()).collect::<Vec<_>>());
        let wgrid = product_grid(&axes.iter().map(|a| a.1.clone()).collect::<Vec<_>>());
        let coord_weights: Vec<f64> = wgrid.iter().map(|w| w.iter().product()).collect();
        let weights = nodes.iter().zip(&coord_weights).map(|(x, w)| w * chart.volume_density(x)).collect();
        QuadratureRule { kind: QuadKind::ProductGauss, nodes, weights, coord_weights, order, axis: None }
    }

    /// Rule for integrands depending only on coordinate `axis`: nodes on that axis,
    /// the other coordinates at their range midpoints, transverse directions
    /// integrated into the weights with `transverse` points per axis.
    pub fn reduced(chart: &Chart, axis: usize, order: usize, transverse: usize) -> QuadratureRule {
        let (a, b) = chart.coord_ranges[axis];
        let (xs, ws) = gauss_legendre_on(order, a, b);
        let others: Vec<usize> = (0..chart.dim).filter(|&i| i != axis).collect();
        let t_axes: Vec<(Vec<f64>, Vec<f64>)> =
            others.iter().map(|&i| gauss_legendre_on(transverse, chart.coord_ranges[i].0, chart.coord_ranges[i].1)).collect();
        let t_nodes = product_grid(&t_axes.iter().map(|a| a.0.clone()).collect::<Vec<_>>());
        let t_w: Vec<f64> = product_grid(&t_axes.iter().map(|a| a.1.clone()).collect::<Vec<_>>())
            .iter()
            .map(|w| w.iter().product())
            .collect();
        let t_volume: f64 = others.iter().map(|&i| chart.coord_ranges[i].1 - chart.coord_ranges[i].0).product();
        let mut nodes = Vec::with_capacity(order);
        let mut weights = Vec::with_capacity(order);
        let mut coord_weights = Vec::with_capacity(order);
        let mut full = vec![0.0; chart.dim];
        for (x, w) in xs.iter().zip(&ws) {
            full[axis] = *x;
            let transverse_mass: f64 = t_nodes
                .iter()
                .zip(&t_w)
                .map(|(t, tw)| {
                    for (slot, &i) in others.iter().enumerate() {
                        full[i] = t[slot];
                    }
                    tw * chart.volume_density(&full)
                })
                .sum();
            let mut node = vec![0.0; chart.dim];
            node[axis] = *x;
            for &i in &others {
                let (lo, hi) = chart.coord_ranges[i];
                node[i] = 0.5 * (lo + hi);
            }
            nodes.push(node);
            weights.push(w * transverse_mass);
            coord_weights.push(w * t_volume);
        }
        QuadratureRule { kind: QuadKind::Reduced1d, nodes, weights, coord_weights, order, axis: Some(axis) }
    }

    /// Reduced rule when the family declares a symmetry axis, product rule otherwise.
    pub fn default_for(map: &MapFamily, orders: QuadOrders) -> QuadratureRule {
        let chart = &map.domain;
        match map.reduced_axis {
            Some(axis) => {
                let order = if chart.kind == ChartKind::R3Spherical { orders.order_radial } else { orders.order_1d };
                QuadratureRule::reduced(chart, axis, order, 32)
            }
            // four-dimensional charts get half the per-axis order
            None if chart.dim >= 4 => QuadratureRule::product(chart, (orders.order_3d / 2).max(4)),
            None => QuadratureRule::product(chart, orders.order_3d),
        }
    }

    pub fn total_weight(&self) -> f64 {
        pairwise_sum(&self.weights)
    }

    /// `∫ f ν_g` with a fixed-order reduction.
    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64 + Sync) -> f64 {
        let vals: Vec<f64> = self.nodes.par_iter().zip(&self.weights).map(|(x, w)| w * f(x)).collect();
        pairwise_sum(&vals)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChargeKind {
    Degree,
    Hopf,
}

/// A topological charge with its raw quadrature value and snapped value.
#[derive(Debug, Clone, Serialize)]
pub struct Charge {
    pub kind: ChargeKind,
    pub raw: f64,
    /// Nearest integer (degree) or low-denominator rational (Hopf), when within `SNAP_TOL`.
    pub snapped: Option<f64>,
}

impl Charge {
    pub fn value(&self) -> f64 {
        self.snapped.unwrap_or(self.raw)
    }
}

/// Result of optimizing the domain radius of a sphere family.
#[derive(Debug, Clone, Serialize)]
pub struct RadiusOpt {
    pub r_star: f64,
    pub e_min: f64,
    pub ratio: f64,
    pub golden_r: f64,
    pub golden_e: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyReport {
    pub map: String,
    pub rule: QuadKind,
    pub order: usize,
    pub e_sigma1: f64,
    pub e_sigma2: f64,
    pub e_4: f64,
    pub kappa: f64,
    pub e_total: f64,
    /// `e_total / (12π² |deg|)` for maps between three-spheres with nonzero degree.
    pub skyrme_ratio: Option<f64>,
    pub charge: Option<Charge>,
    pub bound_value: Option<f64>,
    pub bound_satisfied: Option<bool>,
    pub radius_opt: Option<RadiusOpt>,
    /// Largest number of nonzero eigenvalues, used by the Newton inequality.
    pub rank: usize,
}

impl EnergyReport {
    /// Integrated Newton inequality `E_σ₂ ≤ ((r−1)/r) E₄`.
    pub fn newton_holds(&self, rel_tol: f64) -> bool {
        let r = self.rank as f64;
        let bound = if self.rank < 2 { 0.0 } else { (r - 1.0) / r * self.e_4 };
        self.e_sigma2 <= bound + rel_tol * self.e_4.max(f64::MIN_POSITIVE)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub const CSV_HEADER: [&'static str; 11] = [
        "map", "rule", "order", "kappa", "e_sigma1", "e_sigma2", "e_4", "e_total", "skyrme_ratio", "charge_kind", "charge",
    ];

    pub fn csv_record(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.12e}")).unwrap_or_default();
        vec![
            self.map.clone(),
            serde_json::to_value(self.rule).unwrap().as_str().unwrap_or_default().to_string(),
            self.order.to_string(),
            format!("{}", self.kappa),
            format!("{:.12e}", self.e_sigma1),
            format!("{:.12e}", self.e_sigma2),
            format!("{:.12e}", self.e_4),
            format!("{:.12e}", self.e_total),
            opt(self.skyrme_ratio),
            self.charge.as_ref().map(|c| format!("{:?}", c.kind).to_lowercase()).unwrap_or_default(),
            opt(self.charge.as_ref().map(Charge::value)),
        ]
    }

    /// Writes reports as CSV with a header row.
    pub fn write_csv<W: Write>(reports: &[EnergyReport], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(EnergyReport::CSV_HEADER)?;
        for r in reports {
            w.write_record(r.csv_record())?;
        }
        w.flush()?;
        Ok(())
    }
}

fn is_three_sphere(c: &Chart) -> bool {
    matches!(c.kind, ChartKind::S3Join | ChartKind::S3Suspension | ChartKind::S3UnitTangent)
}

/// `E_σ₁`, `E_σ₂`, `E₄` and `E_σ₁ + κE_σ₂` of `map`.
pub fn integrate_energy(map: &MapFamily, rule: &QuadratureRule, kappa: f64) -> Result<EnergyReport> {
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(Error::InvalidParameter(format!("coupling must be a finite κ ≥ 0, got {kappa}")));
    }
    let per_node: Vec<[f64; 4]> = rule
        .nodes
        .par_iter()
        .zip(&rule.weights)
        .map(|(x, w)| {
            let d = analyze_point(map, x)?;
            let (s1, s2) = (d.sigma1(), d.sigma2());
            if !(s1.is_finite() && s2.is_finite()) {
                return Err(Error::NonFinite { what: "energy density".into(), point: x.clone() });
            }
            let rank = d.eigenvalues.iter().filter(|&&v| v > 1e-12 * s1).count();
            Ok([w * s1, w * s2, w * s1 * s1, rank as f64])
        })
        .collect::<Result<_>>()?;
    let col = |i: usize| pairwise_sum(&per_node.iter().map(|v| v[i]).collect::<Vec<_>>());
    let (e1, e2, e4) = (0.5 * col(0), 0.5 * col(1), 0.25 * col(2));
    let rank = per_node.iter().map(|v| v[3] as usize).max().unwrap_or(0);
    Ok(EnergyReport {
        map: map.name.clone(),
        rule: rule.kind,
        order: rule.order,
        e_sigma1: e1,
        e_sigma2: e2,
        e_4: e4,
        kappa,
        e_total: e1 + kappa * e2,
        skyrme_ratio: None,
        charge: None,
        bound_value: None,
        bound_satisfied: None,
        radius_opt: None,
        rank,
    })
}

fn snap_integer(raw: f64) -> Option<f64> {
    let r = raw.round();
    ((raw - r).abs() < SNAP_TOL).then_some(r)
}

/// Nearest fraction with denominator at most 12, when within `SNAP_TOL`.
pub fn snap_rational(raw: f64) -> Option<f64> {
    (1..=12)
        .map(|q| (raw * q as f64).round() / q as f64)
        .find(|v| (raw - v).abs() < SNAP_TOL)
}

/// Degree `(1/Vol N) ∫ sign(det dφ) v(φ) ν_g` between compact equidimensional charts.
pub fn degree(map: &MapFamily, rule: &QuadratureRule) -> Result<Charge> {
    if map.dim_domain() != map.dim_codomain() {
        return Err(Error::NonCompact(format!("degree needs equal dimensions, got {} → {}", map.dim_domain(), map.dim_codomain())));
    }
    for c in [&map.domain, &map.codomain] {
        if !c.compact {
            return Err(Error::NonCompact(format!("chart `{}` is not compact", c.name)));
        }
    }
    let vol = map.codomain.volume.ok_or_else(|| Error::NonCompact(format!("chart `{}` has no volume", map.codomain.name)))?;
    let orient = map.domain.orientation_sign * map.codomain.orientation_sign;
    let vals: Vec<f64> = rule
        .nodes
        .par_iter()
        .zip(&rule.weights)
        .map(|(x, w)| {
            let d = analyze_point(map, x)?;
            let sign = map.jacobian_unchecked(x).determinant().signum() * orient;
            Ok(w * sign * d.volume_density_map.unwrap_or(0.0))
        })
        .collect::<Result<_>>()?;
    let raw = pairwise_sum(&vals) / vol;
    Ok(Charge { kind: ChargeKind::Degree, raw, snapped: snap_integer(raw) })
}

/// Degree of a contactomorphism `φ*η′ = kη` against `k² Vol(M)/Vol(N)`.
#[derive(Debug, Clone, Serialize)]
pub struct ContactDegree {
    /// `(φ*η′)(ξ)` averaged over the nodes.
    pub k: f64,
    /// Largest `|φ*η′ − kη|` over the nodes.
    pub k_defect: f64,
    pub predicted: f64,
    pub degree: Charge,
}

pub fn contact_degree(map: &MapFamily, rule: &QuadratureRule) -> Result<ContactDegree> {
    let (Some(src), Some(dst)) = (&map.domain.contact, &map.codomain.contact) else {
        return Err(Error::InvalidParameter(format!("`{}` needs contact data on both charts", map.name)));
    };
    let (Some(vol_m), Some(vol_n)) = (map.domain.volume, map.codomain.volume) else {
        return Err(Error::NonCompact(format!("`{}` needs closed-form volumes", map.name)));
    };
    let eta = dst.eta_fn.clone();
    let pulled: Vec<(DVector<f64>, DVector<f64>)> = rule
        .nodes
        .par_iter()
        .map(|x| Ok((pullback_oneform(map, eta.as_ref(), x)?, src.eta(x))))
        .collect::<Result<_>>()?;
    let ks: Vec<f64> = rule.nodes.iter().zip(&pulled).map(|(x, (p, _))| p.dot(&src.reeb(x))).collect();
    let k = pairwise_sum(&ks) / ks.len() as f64;
    let k_defect = pulled.iter().map(|(p, e)| (p - e * k).amax()).fold(0.0, f64::max);
    Ok(ContactDegree { k, k_defect, predicted: k * k * vol_m / vol_n, degree: degree(map, rule)? })
}

/// Checks `dA = φ*Ω` on an `n`-per-axis grid; returns the largest defect.
pub fn verify_potential(map: &MapFamily, potential: &VectorFn, n: usize) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for x in map.domain.sample_grid(n) {
        if map.domain.check_regular(&x, 2.0 * FD_STEP).is_err() {
            continue;
        }
        let d = potential_defect(map, potential, &x).ok_or_else(|| {
            Error::InvalidParameter(format!("codomain `{}` carries no area form", map.codomain.name))
        })?;
        if !(d < POTENTIAL_TOL) {
            return Err(Error::PotentialMismatch { point: x, deviation: d });
        }
        worst = worst.max(d);
    }
    Ok(worst)
}

/// `(A ∧ F)₁₂₃` for a 1-form and a 2-form on a 3-dimensional chart.
fn wedge_3(a: &nalgebra::DVector<f64>, f: &nalgebra::DMatrix<f64>) -> f64 {
    a[0] * f[(1, 2)] + a[1] * f[(2, 0)] + a[2] * f[(0, 1)]
}

/// Hopf invariant `Q = (1/4π²) ∫ A ∧ φ*Ω` of a map from a 3-chart onto S².
pub fn hopf_invariant(map: &MapFamily, potential: &VectorFn, rule: &QuadratureRule) -> Result<Charge> {
    if map.dim_domain() != 3 || map.dim_codomain() != 2 {
        return Err(Error::Dimension(format!("Hopf invariant needs a map from 3 to 2 dimensions, got {} → {}", map.dim_domain(), map.dim_codomain())));
    }
    verify_potential(map, potential, 8)?;
    let sign = map.domain.orientation_sign;
    let vals: Vec<f64> = rule
        .nodes
        .par_iter()
        .zip(&rule.coord_weights)
        .map(|(x, w)| {
            let f = pullback_area_form_unchecked(map, x).expect("area form checked");
            w * wedge_3(&potential(x), &f)
        })
        .collect();
    let raw = sign * pairwise_sum(&vals) / (4.0 * PI * PI);
    Ok(Charge { kind: ChargeKind::Hopf, raw, snapped: snap_rational(raw) })
}

/// Degree for equidimensional compact maps, Hopf invariant for maps onto S² with a potential.
pub fn charge_of(map: &MapFamily, rule: &QuadratureRule) -> Option<Result<Charge>> {
    if map.dim_domain() == 3 && map.dim_codomain() == 2 {
        let a = map.potential.clone()?;
        Some(hopf_invariant(map, &a, rule))
    } else if map.dim_domain() == map.dim_codomain() && map.domain.compact && map.codomain.compact {
        Some(degree(map, rule))
    } else {
        None
    }
}

/// `E(R) = A·R + κB/R` from the unit-radius energies; closed form plus a golden-section check.
pub fn minimize_over_radius(map: &MapFamily, kappa: f64, orders: QuadOrders) -> Result<RadiusOpt> {
    let r0 = match (is_three_sphere(&map.domain), map.domain.radius) {
        (true, Some(r)) => r,
        _ => return Err(Error::InvalidParameter(format!("radius optimization needs a three-sphere domain, got `{}`", map.domain.name))),
    };
    let rule = QuadratureRule::default_for(map, orders);
    let rep = integrate_energy(map, &rule, kappa)?;
    // back to unit radius: E_σ₁ ∝ R, E_σ₂ ∝ 1/R
    let a = rep.e_sigma1 / r0;
    let b = rep.e_sigma2 * r0;
    if a <= 0.0 || b <= 0.0 || kappa <= 0.0 {
        return Err(Error::Degenerate(format!("radius optimization needs A, κB > 0 (A = {a}, B = {b}, κ = {kappa})")));
    }
    let r_star = (kappa * b / a).sqrt();
    let e_min = 2.0 * (kappa * a * b).sqrt();
    let e = |r: f64| a * r + kappa * b / r;
    let (golden_r, golden_e) = golden_section(e, r_star / 10.0, r_star * 10.0, 1e-10 * r_star);
    if (golden_e - e_min).abs() > 1e-8 * e_min {
        return Err(Error::Degenerate(format!("golden-section minimum {golden_e} disagrees with closed form {e_min}")));
    }
    let deg = degree(map, &rule).ok().map(|c| c.value().abs()).filter(|d| *d > 0.5).unwrap_or(1.0);
    Ok(RadiusOpt { r_star, e_min, ratio: e_min / (SKYRME_UNIT * deg), golden_r, golden_e })
}

/// Minimizer of a unimodal `f` on `[lo, hi]` down to bracket width `tol`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > tol {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x))
}

/// Comparison of an energy with its topological lower bound.
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub bound: String,
    pub energy: f64,
    pub bound_value: f64,
    pub slack: f64,
    pub satisfied: bool,
    /// `slack < 1e-6` relative.
    pub attained: bool,
    /// Descriptive growth bound with an unspecified constant, for Hopf charges.
    pub note: Option<String>,
}

/// Skyrme bound `E ≥ 6π²|deg|` or Faddeev bound `E_σ₂ ≥ 16π²|Q|`.
pub fn bounds_report(report: &EnergyReport) -> Result<BoundReport> {
    let charge = report.charge.as_ref().ok_or_else(|| Error::InvalidParameter("bounds need a charge in the report".into()))?;
    let q = charge.value().abs();
    let (bound, energy, bound_value, note) = match charge.kind {
        ChargeKind::Degree => {
            let e = report.radius_opt.as_ref().map(|r| r.e_min).unwrap_or(report.e_total);
            ("E_skyrme >= 6 pi^2 |deg|".to_string(), e, 6.0 * PI * PI * q, None)
        }
        ChargeKind::Hopf => (
            "E_sigma2 >= 16 pi^2 |Q|".to_string(),
            report.e_sigma2,
            16.0 * PI * PI * q,
            Some(format!("E >= c |Q|^(3/4) with c unspecified; |Q|^(3/4) = {:.12}", q.powf(0.75))),
        ),
    };
    let slack = energy - bound_value;
    let scale = bound_value.abs().max(energy.abs()).max(f64::MIN_POSITIVE);
    Ok(BoundReport {
        bound,
        energy,
        bound_value,
        slack,
        satisfied: slack >= -1e-9 * scale,
        attained: slack.abs() < 1e-6 * scale || (bound_value == 0.0 && energy.abs() < 1e-12),
        note,
    })
}

/// Energy, charge, bound and (for S³ domains) radius optimization in one report.
pub fn full_report(map: &MapFamily, kappa: f64, orders: QuadOrders) -> Result<EnergyReport> {
    let rule = QuadratureRule::default_for(map, orders);
    let mut rep = integrate_energy(map, &rule, kappa)?;
    if let Some(c) = charge_of(map, &rule) {
        rep.charge = Some(c?);
    }
    if is_three_sphere(&map.domain) && is_three_sphere(&map.codomain) {
        if let Some(d) = rep.charge.as_ref().map(|c| c.value().abs()).filter(|d| *d > 0.5) {
            rep.skyrme_ratio = Some(rep.e_total / (SKYRME_UNIT * d));
            if kappa > 0.0 && rep.e_sigma1 > 0.0 && rep.e_sigma2 > 0.0 {
                rep.radius_opt = Some(minimize_over_radius(map, kappa, orders)?);
            }
        }
    }
    if rep.charge.is_some() {
        let b = bounds_report(&rep)?;
        rep.bound_value = Some(b.bound_value);
        rep.bound_satisfied = Some(b.satisfied);
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_chart_str, Deformation};
    use crate::map_zoo::make_map;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn rules_integrate_chart_volumes() {
        for (spec, vol) in [
            ("s3_join(1)", 2.0 * PI * PI),
            ("s3_suspension(2)", 16.0 * PI * PI),
            ("s3_unit_tangent(1)", 2.0 * PI * PI),
            ("s2", 4.0 * PI),
            ("t3_flat", 8.0 * PI.powi(3)),
        ] {
            let c = make_chart_str(spec).unwrap();
            assert!(rel(QuadratureRule::product(&c, 32).total_weight(), vol) < 1e-8, "{spec}");
            for axis in 0..c.dim {
                assert!(rel(QuadratureRule::reduced(&c, axis, 64, 32).total_weight(), vol) < 1e-8, "{spec} axis {axis}");
            }
        }
    }

    #[test]
    fn identity_energies() {
        let m = make_map("identity(1)").unwrap();
        let rep = integrate_energy(&m, &QuadratureRule::default_for(&m, QuadOrders::default()), 1.0).unwrap();
        let pi2 = PI * PI;
        assert!(rel(rep.e_sigma1, 3.0 * pi2) < 1e-10);
        assert!(rel(rep.e_sigma2, 3.0 * pi2) < 1e-10);
        assert!(rel(rep.e_total, 6.0 * pi2) < 1e-10);
        // full product rule agrees with the reduced one
        let full = integrate_energy(&m, &QuadratureRule::product(&m.domain, 32), 1.0).unwrap();
        assert!(rel(full.e_sigma1, rep.e_sigma1) < 1e-9);
    }

    #[test]
    fn constant_map_has_zero_energy_and_charge() {
        let m = make_map("constant").unwrap();
        let rep = full_report(&m, 1.0, QuadOrders::default()).unwrap();
        assert_eq!((rep.e_sigma1, rep.e_sigma2, rep.e_4), (0.0, 0.0, 0.0));
        assert_eq!(rep.charge.unwrap().value(), 0.0);
        let m = make_map("constant_s2").unwrap();
        let rule = QuadratureRule::default_for(&m, QuadOrders::default());
        assert_eq!(hopf_invariant(&m, &m.potential.clone().unwrap(), &rule).unwrap().value(), 0.0);
    }

    #[test]
    fn degrees_of_the_zoo() {
        for (spec, want) in [
            ("alpha_join(identity, 1, 1)", 1.0),
            ("alpha_join(arccos_cos2, 2, 1)", 2.0),
            ("alpha_join(identity, 2, 3)", 6.0),
            ("alpha_join(identity, -2, 3)", -6.0),
            ("nomizu(identity, 3)", 3.0),
            ("identity(0.5)", 1.0),
            ("suspension(identity, 2)", 2.0),
            ("degree_k_sphere_map(3)", 3.0),
        ] {
            let m = make_map(spec).unwrap();
            let c = degree(&m, &QuadratureRule::default_for(&m, QuadOrders::default())).unwrap();
            assert_eq!(c.snapped, Some(want), "{spec}: raw {}", c.raw);
            assert!((c.raw - want).abs() < SNAP_TOL);
        }
        let h = make_map("hedgehog").unwrap();
        assert!(matches!(degree(&h, &QuadratureRule::default_for(&h, QuadOrders::default())), Err(Error::NonCompact(_))));
    }

    #[test]
    fn hopf_charges() {
        for k in [1.0, 2.0, 3.0] {
            for spec in [format!("gamma_hopf(affine(pi/2, -2), {k})"), format!("gamma_hopf(affine(pi/2, 2), {k})")] {
                let m = make_map(&spec).unwrap();
                let rule = QuadratureRule::default_for(&m, QuadOrders::default());
                let q = hopf_invariant(&m, &m.potential.clone().unwrap(), &rule).unwrap();
                assert_eq!(q.snapped, Some(k * k / 4.0), "{spec}: {}", q.raw);
            }
        }
        for (k, l) in [(1.0, 1.0), (2.0, 3.0), (1.0, 4.0)] {
            let m = make_map(&format!("alpha_hopf(affine(0, 2), {k}, {l})")).unwrap();
            let rule = QuadratureRule::default_for(&m, QuadOrders::default());
            let q = hopf_invariant(&m, &m.potential.clone().unwrap(), &rule).unwrap();
            assert_eq!(q.snapped, Some(k * l), "{}", q.raw);
        }
    }

    #[test]
    fn wrong_potential_is_refused() {
        let m = make_map("gamma_hopf(affine(pi/2, -2), 2)").unwrap();
        let bad: VectorFn = std::sync::Arc::new(|_: &[f64]| nalgebra::DVector::zeros(3));
        let rule = QuadratureRule::default_for(&m, QuadOrders::default());
        assert!(matches!(hopf_invariant(&m, &bad, &rule), Err(Error::PotentialMismatch { .. })));
    }

    #[test]
    fn faddeev_energy_and_bound() {
        for k in [1.0, 2.0, 3.0] {
            let m = make_map(&format!("gamma_hopf(affine(pi/2, -2), {k})")).unwrap();
            let rep = full_report(&m, 1.0, QuadOrders::default()).unwrap();
            assert!(rel(rep.e_sigma2, 4.0 * PI * PI * k * k) < 1e-10);
            let b = bounds_report(&rep).unwrap();
            assert!(b.satisfied && b.attained, "{b:?}");
            assert!(rep.newton_holds(1e-12));
        }
    }

    #[test]
    fn identity_radius_optimum() {
        let m = make_map("identity(1)").unwrap();
        let opt = minimize_over_radius(&m, KAPPA_CAL, QuadOrders::default()).unwrap();
        assert!(rel(opt.ratio, 1.0) < 1e-10);
        assert!(rel(opt.r_star, KAPPA_CAL.sqrt()) < 1e-10);
        assert!(rel(opt.golden_r, opt.r_star) < 1e-6);
        let opt = minimize_over_radius(&m, 1.0, QuadOrders::default()).unwrap();
        assert!(rel(opt.r_star, 1.0) < 1e-10);
        // the optimum does not depend on the radius the map was given on
        let m2 = make_map("identity(0.5)").unwrap();
        let opt2 = minimize_over_radius(&m2, KAPPA_CAL, QuadOrders::default()).unwrap();
        assert!(rel(opt2.e_min, 12.0 * PI * PI) < 1e-10);
        let rep = full_report(&m, KAPPA_CAL, QuadOrders::default()).unwrap();
        let b = bounds_report(&rep).unwrap();
        assert!(rel(b.slack, 6.0 * PI * PI) < 1e-9 && !b.attained);
    }

    #[test]
    fn energy_scales_with_radius() {
        let m = make_map("alpha_join(arccos_cos2, 2, 1)").unwrap();
        let orders = QuadOrders::default();
        let base = integrate_energy(&m, &QuadratureRule::default_for(&m, orders), 1.0).unwrap();
        for r in [0.5, 2.0, 3.7] {
            let d = m.deformed(&Deformation::RadiusScale(r)).unwrap();
            let rep = integrate_energy(&d, &QuadratureRule::default_for(&d, orders), 1.0).unwrap();
            assert!(rel(rep.e_sigma1, r * base.e_sigma1) < 1e-10);
            assert!(rel(rep.e_sigma2, base.e_sigma2 / r) < 1e-10);
        }
    }

    #[test]
    fn radius_optimization_refuses_degenerate_maps() {
        let m = make_map("constant").unwrap();
        assert!(matches!(minimize_over_radius(&m, 1.0, QuadOrders::default()), Err(Error::Degenerate(_))));
        let h = make_map("henon(1.4, 0.3)").unwrap();
        assert!(minimize_over_radius(&h, 1.0, QuadOrders::default()).is_err());
    }

    #[test]
    fn rational_snap() {
        assert_eq!(snap_rational(0.25 + 1e-6), Some(0.25));
        assert_eq!(snap_rational(2.0 / 3.0 - 5e-5), Some(2.0 / 3.0));
        assert_eq!(snap_rational(0.2571), None);
    }

    #[test]
    fn reports_serialize() {
        let m = make_map("identity(1)").unwrap();
        let rep = full_report(&m, KAPPA_CAL, QuadOrders::default()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&rep.to_json()).unwrap();
        for key in ["e_sigma1", "e_sigma2", "e_4", "kappa", "e_total", "skyrme_ratio", "charge", "bound_value", "bound_satisfied", "radius_opt"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        let mut buf = Vec::new();
        EnergyReport::write_csv(&[rep], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("map,rule,order"));
    }

    #[test]
    fn contactomorphism_degree_formula() {
        for spec in ["torus_contacto(sine(0.2, 3), 2)", "torus_contacto(zero, 3)", "identity(1, unit_tangent)"] {
            let m = make_map(spec).unwrap();
            let c = contact_degree(&m, &QuadratureRule::product(&m.domain, 24)).unwrap();
            assert!(c.k_defect < 1e-8, "{spec}: {c:?}");
            assert!((c.degree.raw - c.predicted).abs() < 1e-6 * c.predicted, "{spec}: {c:?}");
        }
    }

}
