//! Second variation of homothetic maps and of the Hopf map, on finite
//! families of test fields.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::energy::QuadratureRule;
use crate::error::{Error, Result};
use crate::geometry::{connection_coeffs_with_step, ricci_form, sphere_embedding, Chart, FrameField, Gamma, MatrixFn, VectorFn, FD_STEP};
use crate::linalg::{inner, pairwise_sum};

/// Distance from a chart's singular locus inside which random fields vanish.
pub const CUTOFF_MARGIN: f64 = 0.05;
/// Relative agreement required between the two routes to the σ₂ Hessian.
pub const YANO_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Generator {
    /// `X(p) = A p` for the antisymmetric `A` of the rotation algebra.
    Killing { index: usize },
    /// Gradient of the linear coordinate function `x_a` restricted to the sphere.
    ConformalGradient { index: usize },
    FourierRandom { seed: u64, band: usize },
    /// A coordinate vector field.
    Coordinate { axis: usize },
    Custom { name: String },
}

/// A vector field on a chart, in coordinate components.
#[derive(Clone)]
pub struct VariationField {
    pub chart: Chart,
    pub components_fn: VectorFn,
    pub generator: Generator,
    /// Coordinate Jacobian `∂_j X^i`, when known in closed form.
    pub jacobian_fn: Option<MatrixFn>,
}

impl std::fmt::Debug for VariationField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VariationField").field("chart", &self.chart.name).field("generator", &self.generator).finish()
    }
}

/// Product rule resolving the cutoff of random fields: 48 nodes on bounded
/// axes, 16 on periodic ones.
pub fn random_field_rule(chart: &Chart) -> QuadratureRule {
    let orders: Vec<usize> = chart.periodic.iter().map(|&p| if p { 16 } else { 48 }).collect();
    QuadratureRule::product_orders(chart, &orders)
}

/// Index pairs of the six rotation generators `E_ab = e_a e_bᵗ − e_b e_aᵗ`.
pub const ROTATION_PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

fn rotation(index: usize) -> DMatrix<f64> {
    let (a, b) = ROTATION_PAIRS[index];
    let mut m = DMatrix::zeros(4, 4);
    m[(a, b)] = 1.0;
    m[(b, a)] = -1.0;
    m
}

/// Smooth transition from 0 (t ≤ 0) to 1 (t ≥ 1), flat to all orders at both
/// ends, and its derivative.
fn smoothstep(t: f64) -> (f64, f64) {
    let f = |u: f64| if u > 0.0 { (-1.0 / u).exp() } else { 0.0 };
    let df = |u: f64| if u > 0.0 { (-1.0 / u).exp() / (u * u) } else { 0.0 };
    let (a, b) = (f(t), f(1.0 - t));
    let sum = a + b;
    (a / sum, (df(t) * b + a * df(1.0 - t)) / (sum * sum))
}

/// Product of smoothsteps in the distance to every singular hyperplane, each
/// rising from 0 at the margin to 1 at the middle of its axis.
pub fn chart_cutoff(chart: &Chart, x: &[f64]) -> f64 {
    cutoff_with_gradient(chart, x).0
}

pub fn cutoff_with_gradient(chart: &Chart, x: &[f64]) -> (f64, DVector<f64>) {
    let factors: Vec<(usize, f64, f64)> = chart
        .singular_locus
        .iter()
        .map(|h| {
            let (lo, hi) = chart.coord_ranges[h.axis];
            let width = 0.5 * (hi - lo) - CUTOFF_MARGIN;
            let dist = x[h.axis] - h.value;
            let (v, dv) = smoothstep((dist.abs() - CUTOFF_MARGIN) / width);
            (h.axis, v, dv * dist.signum() / width)
        })
        .collect();
    let value: f64 = factors.iter().map(|f| f.1).product();
    let mut grad = DVector::zeros(x.len());
    for (i, &(axis, _, dv)) in factors.iter().enumerate() {
        let others: f64 = factors.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, f)| f.1).product();
        grad[axis] += dv * others;
    }
    (value, grad)
}

impl VariationField {
    pub fn new(chart: &Chart, generator: Generator, components_fn: VectorFn) -> VariationField {
        VariationField { chart: chart.clone(), components_fn, generator, jacobian_fn: None }
    }

    pub fn with_jacobian(mut self, jacobian_fn: MatrixFn) -> VariationField {
        self.jacobian_fn = Some(jacobian_fn);
        self
    }

    /// `∂_j X^i` at `x`, by the five-point rule when no closed form is attached.
    pub fn jacobian(&self, x: &[f64], h: f64) -> DMatrix<f64> {
        if let Some(j) = &self.jacobian_fn {
            return j(x);
        }
        let d = x.len();
        let mut out = DMatrix::zeros(d, d);
        let mut z = x.to_vec();
        for j in 0..d {
            let mut at = |t: f64| {
                z[j] = x[j] + t * h;
                self.at(&z)
            };
            let col = ((at(1.0) - at(-1.0)) * 8.0 - (at(2.0) - at(-2.0))) / (12.0 * h);
            z[j] = x[j];
            out.set_column(j, &col);
        }
        out
    }

    pub fn at(&self, x: &[f64]) -> DVector<f64> {
        (self.components_fn)(x)
    }

    /// The field `X(p) = A p` for an antisymmetric 4×4 matrix `A`, on a round 3-sphere chart.
    pub fn rotation_field(chart: &Chart, a: DMatrix<f64>, generator: Generator) -> Result<VariationField> {
        if (&a + a.transpose()).amax() > 1e-14 || a.nrows() != 4 {
            return Err(Error::InvalidParameter("rotation generator must be an antisymmetric 4×4 matrix".into()));
        }
        sphere_check(chart)?;
        let c = chart.clone();
        let f: VectorFn = Arc::new(move |x: &[f64]| {
            let (p, d) = sphere_embedding(&c, x).expect("sphere chart");
            tangent_components(&d, &(&a * p))
        });
        Ok(VariationField::new(chart, generator, f))
    }

    pub fn killing(chart: &Chart, index: usize) -> Result<VariationField> {
        if index >= 6 {
            return Err(Error::InvalidParameter(format!("Killing generator index {index} out of range 0..6")));
        }
        VariationField::rotation_field(chart, rotation(index), Generator::Killing { index })
    }

    /// `grad x_a` on a round 3-sphere, a conformal field that is not Killing.
    pub fn conformal_gradient(chart: &Chart, index: usize) -> Result<VariationField> {
        if index >= 4 {
            return Err(Error::InvalidParameter(format!("conformal generator index {index} out of range 0..4")));
        }
        sphere_check(chart)?;
        let c = chart.clone();
        let f: VectorFn = Arc::new(move |x: &[f64]| {
            let (_, d) = sphere_embedding(&c, x).expect("sphere chart");
            let mut e = DVector::zeros(4);
            e[index] = 1.0;
            tangent_components(&d, &e)
        });
        Ok(VariationField::new(chart, Generator::ConformalGradient { index }, f))
    }

    pub fn coordinate(chart: &Chart, axis: usize) -> VariationField {
        let d = chart.dim;
        let f: VectorFn = Arc::new(move |_: &[f64]| {
            let mut v = DVector::zeros(d);
            v[axis] = 1.0;
            v
        });
        VariationField::new(chart, Generator::Coordinate { axis }, f)
    }

    /// Band-limited trigonometric field with seeded coefficients, cut off near
    /// the chart's singular locus.
    pub fn fourier_random(chart: &Chart, seed: u64, band: usize) -> VariationField {
        let d = chart.dim;
        let width = 2 * band + 1;
        let n_modes = width.pow(d as u32);
        // mode index → per-axis frequency offsets in 0..width (frequency = offset − band)
        let offsets = |mut idx: usize| -> Vec<usize> {
            let mut out = vec![0; d];
            for o in out.iter_mut().rev() {
                *o = idx % width;
                idx /= width;
            }
            out
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // (cos coefficient, sin coefficient) per component and mode
        let coeffs: Vec<Vec<(f64, f64)>> = (0..d)
            .map(|_| {
                (0..n_modes)
                    .map(|m| {
                        let k2: f64 = offsets(m).iter().map(|&o| (o as f64 - band as f64).powi(2)).sum();
                        let decay = 1.0 / (1.0 + k2);
                        (decay * rng.random_range(-1.0..1.0), decay * rng.random_range(-1.0..1.0))
                    })
                    .collect()
            })
            .collect();
        let table: Vec<Vec<usize>> = (0..n_modes).map(offsets).collect();
        let c = chart.clone();
        // trigonometric part T and its coordinate Jacobian ∂_j T^i
        let trig = Arc::new(move |x: &[f64], with_jac: bool| -> (DVector<f64>, DMatrix<f64>) {
            let phases: Vec<Vec<(f64, f64)>> = x
                .iter()
                .map(|&xj| (0..width).map(|o| ((o as f64 - band as f64) * xj).sin_cos()).map(|(s, c)| (c, s)).collect())
                .collect();
            let mut t = DVector::zeros(d);
            let mut jac = DMatrix::zeros(d, if with_jac { d } else { 0 });
            for (m, offs) in table.iter().enumerate() {
                let (mut re, mut im) = (1.0, 0.0);
                for (j, &o) in offs.iter().enumerate() {
                    let (c, s) = phases[j][o];
                    (re, im) = (re * c - im * s, re * s + im * c);
                }
                for (comp, cf) in coeffs.iter().enumerate() {
                    let (a, b) = cf[m];
                    t[comp] += a * re + b * im;
                    if with_jac {
                        let dphase = b * re - a * im;
                        for (j, &o) in offs.iter().enumerate() {
                            jac[(comp, j)] += (o as f64 - band as f64) * dphase;
                        }
                    }
                }
            }
            (t, jac)
        });
        let (c1, t1) = (c.clone(), trig.clone());
        let f: VectorFn = Arc::new(move |x: &[f64]| {
            let cut = chart_cutoff(&c1, x);
            if cut == 0.0 {
                return DVector::zeros(d);
            }
            t1(x, false).0 * cut
        });
        let jf: MatrixFn = Arc::new(move |x: &[f64]| {
            let (cut, grad) = cutoff_with_gradient(&c, x);
            if cut == 0.0 && grad.amax() == 0.0 {
                return DMatrix::zeros(d, d);
            }
            let (t, jac) = trig(x, true);
            jac * cut + &t * grad.transpose()
        });
        VariationField::new(chart, Generator::FourierRandom { seed, band }, f).with_jacobian(jf)
    }

    /// `c X`.
    pub fn scaled(&self, c: f64) -> VariationField {
        let f = self.components_fn.clone();
        VariationField {
            chart: self.chart.clone(),
            components_fn: Arc::new(move |x: &[f64]| f(x) * c),
            generator: self.generator.clone(),
            jacobian_fn: self.jacobian_fn.clone().map(|j| -> MatrixFn { Arc::new(move |x: &[f64]| j(x) * c) }),
        }
    }

    /// `X − g(X, ξ)ξ` for a unit field `ξ`.
    pub fn horizontal_part(&self, xi: VectorFn) -> VariationField {
        let (f, g) = (self.components_fn.clone(), self.chart.metric_fn());
        let proj: VectorFn = Arc::new(move |x: &[f64]| {
            let (v, e) = (f(x), xi(x));
            let gx = g(x);
            &v - &e * (inner(&gx, &v, &e) / inner(&gx, &e, &e))
        });
        VariationField { chart: self.chart.clone(), components_fn: proj, generator: self.generator.clone(), jacobian_fn: None }
    }
}

fn sphere_check(chart: &Chart) -> Result<()> {
    let probe: Vec<f64> = chart.coord_ranges.iter().map(|&(a, b)| 0.5 * (a + b)).collect();
    if sphere_embedding(chart, &probe).is_none() {
        return Err(Error::InvalidParameter(format!("chart `{}` is not a round 3-sphere chart", chart.name)));
    }
    Ok(())
}

/// Chart components of a vector tangent to the embedded sphere: `(DᵗD)⁻¹Dᵗ v`.
fn tangent_components(d: &DMatrix<f64>, v: &DVector<f64>) -> DVector<f64> {
    let dtd = d.transpose() * d;
    dtd.try_inverse().map_or_else(|| DVector::from_element(3, f64::NAN), |inv| inv * d.transpose() * v)
}

/// Covariant derivative of a field in the orthonormalized coordinate frame.
#[derive(Debug, Clone)]
pub struct VectorCalculus {
    /// Orthonormal frame vectors (columns, coordinate components).
    pub frame: DMatrix<f64>,
    /// `nabla[(k, i)] = g(∇_{E_i} X, E_k)`.
    pub nabla: DMatrix<f64>,
    pub div: f64,
    /// `(L_X g)(E_i, E_j)`.
    pub lie: DMatrix<f64>,
    /// Frame components of `X`.
    pub components: DVector<f64>,
}

impl VectorCalculus {
    pub fn nabla_norm2(&self) -> f64 {
        self.nabla.norm_squared()
    }

    pub fn lie_norm2(&self) -> f64 {
        self.lie.norm_squared()
    }

    /// `½|L_X g|² − (2/n)(div X)²`, nonnegative by Newton's inequality.
    pub fn newton_gap(&self) -> f64 {
        let n = self.nabla.nrows() as f64;
        0.5 * self.lie_norm2() - 2.0 / n * self.div * self.div
    }

    /// `∇_Y X` in frame components, for `Y` in frame components.
    pub fn along(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.nabla * y
    }
}

/// Field-independent data at one point: orthonormal frame, its connection
/// coefficients, and the dual covectors `g E_k` with their derivatives.
pub struct NodeGeometry {
    pub x: Vec<f64>,
    pub frame: DMatrix<f64>,
    pub gamma: Gamma,
    /// Rows are the covectors `(g E_k)ᵗ` at `x`.
    dual: DMatrix<f64>,
    /// `E_i` applied to `dual`, one matrix per `i`.
    dual_deriv: Vec<DMatrix<f64>>,
    h: f64,
}

impl NodeGeometry {
    pub fn at(chart: &Chart, x: &[f64], h: f64) -> Result<NodeGeometry> {
        let frame_field = FrameField::orthonormal_coordinate(chart);
        let gamma = connection_coeffs_with_step(chart, &frame_field, x, h)?;
        let dual_at = |z: &[f64]| (chart.metric(z) * frame_field.vectors(z)).transpose();
        let frame = frame_field.vectors(x);
        let d = chart.dim;
        let dual_deriv = (0..d)
            .map(|i| {
                let at = |t: f64| dual_at(&(0..d).map(|j| x[j] + t * h * frame[(j, i)]).collect::<Vec<_>>());
                ((at(1.0) - at(-1.0)) * 8.0 - (at(2.0) - at(-2.0))) / (12.0 * h)
            })
            .collect();
        Ok(NodeGeometry { x: x.to_vec(), dual: dual_at(x), frame, gamma, dual_deriv, h })
    }

    pub fn calculus(&self, field: &VariationField) -> Result<VectorCalculus> {
        let d = self.frame.ncols();
        let v = field.at(&self.x);
        let a = &self.dual * &v;
        let jv = field.jacobian(&self.x, self.h) * &self.frame;
        let mut nabla = DMatrix::zeros(d, d);
        for i in 0..d {
            // E_i(a_k) = E_i(g E_k)·X + (g E_k)·(∂X E_i)
            let da = &self.dual_deriv[i] * &v + &self.dual * jv.column(i);
            for k in 0..d {
                nabla[(k, i)] = da[k] + (0..d).map(|j| a[j] * self.gamma.get(i, j, k)).sum::<f64>();
            }
        }
        if nabla.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: format!("covariant derivative of {:?}", field.generator), point: self.x.clone() });
        }
        let lie = &nabla + nabla.transpose();
        Ok(VectorCalculus { frame: self.frame.clone(), div: nabla.trace(), nabla, lie, components: a })
    }
}

/// `∇X`, `div X` and `L_X g` at `x`.
pub fn vector_calculus(field: &VariationField, x: &[f64]) -> Result<VectorCalculus> {
    vector_calculus_with_step(field, x, FD_STEP)
}

pub fn vector_calculus_with_step(field: &VariationField, x: &[f64], h: f64) -> Result<VectorCalculus> {
    NodeGeometry::at(&field.chart, x, h)?.calculus(field)
}

/// A quadrature rule with the node geometry cached, for integrating many
/// fields on the same chart.
pub struct FieldQuadrature {
    pub chart: Chart,
    nodes: Vec<NodeGeometry>,
    weights: Vec<f64>,
    ricci: Vec<DMatrix<f64>>,
}

impl FieldQuadrature {
    pub fn new(chart: &Chart, rule: &QuadratureRule) -> Result<FieldQuadrature> {
        let ric = ricci_form(chart)?;
        let nodes = rule.nodes.par_iter().map(|x| NodeGeometry::at(chart, x, FD_STEP)).collect::<Result<Vec<_>>>()?;
        let ricci = rule.nodes.iter().map(|x| ric(x)).collect();
        Ok(FieldQuadrature { chart: chart.clone(), nodes, weights: rule.weights.clone(), ricci })
    }

    pub fn integrals(&self, field: &VariationField) -> Result<FieldIntegrals> {
        let rows: Vec<[f64; 5]> = self
            .nodes
            .par_iter()
            .zip(&self.ricci)
            .map(|(node, ric)| {
                let vc = node.calculus(field)?;
                let v = &vc.frame * &vc.components;
                Ok([vc.nabla_norm2(), inner(ric, &v, &v), vc.div * vc.div, vc.lie_norm2(), vc.newton_gap()])
            })
            .collect::<Result<_>>()?;
        let sum = |j: usize| pairwise_sum(&rows.iter().zip(&self.weights).map(|(r, w)| r[j] * w).collect::<Vec<_>>());
        let gaps = rows.iter().map(|r| r[4]);
        Ok(FieldIntegrals {
            nabla2: sum(0),
            ric: sum(1),
            div2: sum(2),
            lie2: sum(3),
            newton_min: gaps.clone().fold(f64::INFINITY, f64::min),
            newton_max: gaps.fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

/// Integrals of the pointwise quantities entering the homothety Hessians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FieldIntegrals {
    /// `∫|∇X|²`.
    pub nabla2: f64,
    /// `∫Ric(X, X)`.
    pub ric: f64,
    /// `∫(div X)²`.
    pub div2: f64,
    /// `∫|L_X g|²`.
    pub lie2: f64,
    /// Extremes over the nodes of the pointwise Newton gap `½|L_X g|² − (2/n)(div X)²`.
    pub newton_min: f64,
    pub newton_max: f64,
}

impl FieldIntegrals {
    /// Yano defect `∫{|∇X|² − Ric(X,X) + (div X)² − ½|L_X g|²}` relative to the largest term.
    pub fn yano_defect(&self) -> f64 {
        let scale = self.nabla2.abs().max(self.ric.abs()).max(self.div2).max(self.lie2).max(f64::MIN_POSITIVE);
        (self.nabla2 - self.ric + self.div2 - 0.5 * self.lie2).abs() / scale
    }
}

pub fn field_integrals(field: &VariationField, rule: &QuadratureRule) -> Result<FieldIntegrals> {
    FieldQuadrature::new(&field.chart, rule)?.integrals(field)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum HessianForm {
    Sigma2Homothety,
    Sigma12Full,
    Hopf2hh,
    DirichletPart,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HessianParams {
    pub n: usize,
    pub lambda: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HessianReport {
    pub form: HessianForm,
    pub value: f64,
    pub terms: Vec<(String, f64)>,
    pub parameters: Option<HessianParams>,
    /// For the σ₂ form: the value before Yano's identity is applied.
    pub unreduced_value: Option<f64>,
    pub field: Generator,
}

impl HessianReport {
    fn from_terms(form: HessianForm, terms: Vec<(&str, f64)>, parameters: Option<HessianParams>, field: &VariationField) -> HessianReport {
        HessianReport {
            form,
            value: terms.iter().map(|t| t.1).sum(),
            terms: terms.into_iter().map(|(n, v)| (n.to_string(), v)).collect(),
            parameters,
            unreduced_value: None,
            field: field.generator.clone(),
        }
    }

    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|t| t.0 == name).map(|t| t.1)
    }

    /// Relative disagreement of the two σ₂ routes, when both were computed.
    pub fn yano_mismatch(&self) -> Option<f64> {
        let scale = self.terms.iter().map(|t| t.1.abs()).fold(self.value.abs(), f64::max).max(f64::MIN_POSITIVE);
        self.unreduced_value.map(|u| (u - self.value).abs() / scale)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Homothety Hessians from precomputed integrals.
pub fn hessian_from_integrals(field: &VariationField, ints: &FieldIntegrals, p: HessianParams, form: HessianForm) -> Result<HessianReport> {
    let (n, li) = (p.n as f64, p.lambda.powi(-2));
    let rep = match form {
        HessianForm::Sigma2Homothety => {
            let mut r = HessianReport::from_terms(
                form,
                vec![("lie_term", 0.5 * (n - 2.0) * ints.lie2), ("div_term", -(n - 3.0) * ints.div2)],
                Some(p),
                field,
            );
            r.unreduced_value = Some((n - 2.0) * (ints.nabla2 - ints.ric) + ints.div2);
            r
        }
        HessianForm::Sigma12Full => HessianReport::from_terms(
            form,
            vec![("lie_term", 0.5 * (li + (n - 2.0) * p.kappa) * ints.lie2), ("div_term", -(li + (n - 3.0) * p.kappa) * ints.div2)],
            Some(p),
            field,
        ),
        HessianForm::DirichletPart => {
            HessianReport::from_terms(form, vec![("lie_term", 0.5 * li * ints.lie2), ("div_term", -li * ints.div2)], Some(p), field)
        }
        HessianForm::Hopf2hh => return Err(Error::InvalidParameter("use hessian_hopf for the Hopf form".into())),
    };
    Ok(rep)
}

/// Hessian of a homothetic diffeomorphism with dilation `λ` in the direction `X`.
pub fn hessian_homothety(field: &VariationField, n: usize, lambda: f64, kappa: f64, rule: &QuadratureRule, form: HessianForm) -> Result<HessianReport> {
    if !(lambda > 0.0) || !(kappa >= 0.0) {
        return Err(Error::InvalidParameter(format!("need λ > 0 and κ ≥ 0, got λ = {lambda}, κ = {kappa}")));
    }
    let ints = field_integrals(field, rule)?;
    hessian_from_integrals(field, &ints, HessianParams { n, lambda, kappa }, form)
}

/// σ₂ Hessian of the Hopf map on the unit join sphere in the direction of the
/// horizontal part of `X`.
pub fn hessian_hopf(field: &VariationField, rule: &QuadratureRule) -> Result<HessianReport> {
    let chart = &field.chart;
    let contact = chart
        .contact
        .clone()
        .ok_or_else(|| Error::MissingContactData { chart: chart.name.clone(), deform: "hopf hessian".into() })?;
    let xi_fn: VectorFn = Arc::new(move |x: &[f64]| contact.reeb(x));
    let xi = VariationField::new(chart, Generator::Custom { name: "reeb".into() }, xi_fn.clone());
    let xh = field.horizontal_part(xi_fn);
    let rows: Vec<[f64; 3]> = rule
        .nodes
        .par_iter()
        .map(|x| {
            let vx = vector_calculus(&xh, x)?;
            let vxi = vector_calculus(&xi, x)?;
            Ok([vx.div * vx.div, vx.along(&vxi.components).norm_squared(), -vxi.along(&vx.components).norm_squared()])
        })
        .collect::<Result<_>>()?;
    let sum = |j: usize| pairwise_sum(&rows.iter().zip(&rule.weights).map(|(r, w)| r[j] * w).collect::<Vec<_>>());
    Ok(HessianReport::from_terms(
        HessianForm::Hopf2hh,
        vec![("div_term", sum(0)), ("vertical_term", sum(1)), ("twist_term", sum(2))],
        None,
        field,
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdScan {
    pub kappa: f64,
    /// `(λ, min over fields of the full Hessian)`.
    pub rows: Vec<(f64, f64)>,
    /// Bisection-refined smallest stable λ, if the grid brackets one.
    pub lambda_star: Option<f64>,
    pub predicted: f64,
}

impl ThresholdScan {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["lambda", "min_hessian"])?;
        for (l, h) in &self.rows {
            w.write_record([format!("{l:.17e}"), format!("{h:.17e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Scans the full homothety Hessian over `λ` and locates the onset of
/// nonnegativity on the given field family.
pub fn threshold_scan(kappa: f64, lambdas: &[f64], fields: &[VariationField], rule: &QuadratureRule) -> Result<ThresholdScan> {
    if !(kappa > 0.0) {
        return Err(Error::InvalidParameter(format!("threshold scan needs κ > 0, got {kappa}")));
    }
    let chart = &fields.first().ok_or_else(|| Error::InvalidParameter("threshold scan needs at least one field".into()))?.chart;
    let quad = FieldQuadrature::new(chart, rule)?;
    let ints: Vec<FieldIntegrals> = fields.iter().map(|f| quad.integrals(f)).collect::<Result<_>>()?;
    if ints.iter().all(|i| i.div2.max(i.lie2) < 1e-8) {
        return Err(Error::Degenerate("every field in the scan is Killing".into()));
    }
    let n = fields.first().map_or(3, |f| f.chart.dim);
    let min_at = |lambda: f64| -> Result<f64> {
        let p = HessianParams { n, lambda, kappa };
        let mut m = f64::INFINITY;
        for (f, i) in fields.iter().zip(&ints) {
            m = m.min(hessian_from_integrals(f, i, p, HessianForm::Sigma12Full)?.value);
        }
        Ok(m)
    };
    let rows: Vec<(f64, f64)> = lambdas.iter().map(|&l| Ok((l, min_at(l)?))).collect::<Result<_>>()?;
    // values are relative to the field scale; a tiny negative value at the threshold is still stable
    let scale = ints.iter().map(|i| i.div2.max(i.lie2)).fold(0.0, f64::max);
    let stable = |v: f64| v >= -1e-10 * scale;
    let mut lambda_star = None;
    if let Some(j) = rows.iter().position(|r| stable(r.1)) {
        if j == 0 {
            lambda_star = Some(rows[0].0);
        } else {
            let (mut lo, mut hi) = (rows[j - 1].0, rows[j].0);
            while hi - lo > 1e-5 {
                let mid = 0.5 * (lo + hi);
                if stable(min_at(mid)?) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            lambda_star = Some(hi);
        }
    }
    Ok(ThresholdScan { kappa, rows, lambda_star, predicted: 1.0 / (2.0 * kappa).sqrt() })
}

/// Killing, conformal and random fields on a round 3-sphere chart.
pub fn standard_field_family(chart: &Chart, seeds: &[u64], band: usize) -> Result<Vec<VariationField>> {
    let mut out = Vec::new();
    for i in 0..6 {
        out.push(VariationField::killing(chart, i)?);
    }
    for i in 0..4 {
        out.push(VariationField::conformal_gradient(chart, i)?);
    }
    for &s in seeds {
        out.push(VariationField::fourier_random(chart, s, band));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_chart, ChartSpec};
    use std::f64::consts::PI;

    fn suspension() -> Chart {
        make_chart(ChartSpec::S3Suspension(1.0)).unwrap()
    }

    fn join() -> Chart {
        make_chart(ChartSpec::S3Join(1.0)).unwrap()
    }

    #[test]
    fn killing_fields_preserve_the_metric() {
        for chart in [suspension(), join()] {
            for i in 0..6 {
                let x = VariationField::killing(&chart, i).unwrap();
                for p in chart.sample_grid(10) {
                    let vc = vector_calculus(&x, &p).unwrap();
                    assert!(vc.lie.amax() < 1e-8, "{} E{i} at {p:?}: {}", chart.name, vc.lie.amax());
                }
            }
        }
    }

    #[test]
    fn conformal_gradients_are_conformal() {
        let chart = suspension();
        for i in 0..4 {
            let x = VariationField::conformal_gradient(&chart, i).unwrap();
            for p in chart.sample_grid(10) {
                let vc = vector_calculus(&x, &p).unwrap();
                let defect = &vc.lie - DMatrix::identity(3, 3) * (2.0 / 3.0 * vc.div);
                assert!(defect.amax() < 1e-8);
            }
        }
        let x = VariationField::conformal_gradient(&chart, 0).unwrap();
        let p = [0.7, 1.1, 2.0];
        assert!((x.at(&p)[0] + 0.7f64.sin()).abs() < 1e-14);
        let vc = vector_calculus(&x, &p).unwrap();
        assert!((vc.div + 3.0 * 0.7f64.cos()).abs() < 1e-8);
    }

    #[test]
    fn coordinate_fields_are_parallel_on_the_flat_torus() {
        let chart = make_chart(ChartSpec::T3Flat).unwrap();
        let x = VariationField::coordinate(&chart, 1);
        let vc = vector_calculus(&x, &[0.3, 1.0, 4.0]).unwrap();
        assert!(vc.nabla.amax() < 1e-12);
    }

    #[test]
    fn full_hessian_of_conformal_field() {
        let chart = suspension();
        let rule = QuadratureRule::product(&chart, 24);
        let x = VariationField::conformal_gradient(&chart, 0).unwrap();
        let h = hessian_homothety(&x, 3, 1.0, 1.0, &rule, HessianForm::Sigma12Full).unwrap();
        assert!((h.value - 1.5 * PI * PI).abs() < 1e-8, "{}", h.value);
        let h = hessian_homothety(&x, 3, 0.5f64.sqrt(), 1.0, &rule, HessianForm::Sigma12Full).unwrap();
        assert!(h.value.abs() < 1e-8);
        let d = hessian_homothety(&x, 3, 1.0, 1.0, &rule, HessianForm::DirichletPart).unwrap();
        assert!(d.value < 0.0);
        let s = hessian_homothety(&x, 3, 1.0, 1.0, &rule, HessianForm::Sigma2Homothety).unwrap();
        assert!(s.value > 0.0 && s.yano_mismatch().unwrap() < YANO_TOL);
    }

    #[test]
    fn killing_fields_have_zero_hessian() {
        let chart = suspension();
        let rule = QuadratureRule::product(&chart, 16);
        for i in [0, 3, 5] {
            let x = VariationField::killing(&chart, i).unwrap();
            let h = hessian_homothety(&x, 3, 0.4, 2.0, &rule, HessianForm::Sigma12Full).unwrap();
            assert!(h.value.abs() < 1e-8);
        }
    }

    #[test]
    fn yano_identity_on_random_fields() {
        let chart = suspension();
        let rule = random_field_rule(&chart);
        for (seed, band) in [(1, 1), (2, 2)] {
            let x = VariationField::fourier_random(&chart, seed, band);
            let ints = field_integrals(&x, &rule).unwrap();
            assert!(ints.yano_defect() < YANO_TOL, "seed {seed}: {ints:?} {}", ints.yano_defect());
        }
    }

    #[test]
    fn hessian_terms_sum_and_scale() {
        let chart = suspension();
        let rule = QuadratureRule::product(&chart, 12);
        let x = VariationField::fourier_random(&chart, 5, 1);
        let a = hessian_homothety(&x, 3, 0.8, 1.5, &rule, HessianForm::Sigma12Full).unwrap();
        let b = hessian_homothety(&x.scaled(3.0), 3, 0.8, 1.5, &rule, HessianForm::Sigma12Full).unwrap();
        assert!((a.value - a.terms.iter().map(|t| t.1).sum::<f64>()).abs() < 1e-12);
        assert!((b.value - 9.0 * a.value).abs() < 1e-9 * b.value.abs().max(1.0));
    }

    /// Rotations `A p` orthogonal to the Reeb field of the join chart.
    fn hopf_horizontal_rotations(chart: &Chart) -> Vec<DMatrix<f64>> {
        let mut out = Vec::new();
        for (i, j) in [(0, 5), (1, 4), (2, 3)] {
            for sign in [1.0, -1.0] {
                let a = rotation(i) + rotation(j) * sign;
                let x = VariationField::rotation_field(chart, a.clone(), Generator::Custom { name: "rot".into() }).unwrap();
                let c = chart.contact.clone().unwrap();
                if chart.sample_grid(5).iter().all(|p| inner(&chart.metric(p), &x.at(p), &c.reeb(p)).abs() < 1e-12) {
                    out.push(a);
                }
            }
        }
        out
    }

    #[test]
    fn hopf_hessian() {
        let chart = join();
        let rule = QuadratureRule::product(&chart, 16);
        let c = chart.contact.clone().unwrap();
        let xi = VariationField::new(&chart, Generator::Custom { name: "reeb".into() }, Arc::new(move |x: &[f64]| c.reeb(x)));
        assert!(hessian_hopf(&xi, &rule).unwrap().value.abs() < 1e-10);
        let horizontal = hopf_horizontal_rotations(&chart);
        assert_eq!(horizontal.len(), 2);
        for a in horizontal {
            let x = VariationField::rotation_field(&chart, a, Generator::Custom { name: "horizontal".into() }).unwrap();
            let h = hessian_hopf(&x, &rule).unwrap();
            assert!(h.value >= -1e-8, "{h:?}");
        }
    }

    #[test]
    fn threshold_matches_prediction() {
        let chart = suspension();
        let rule = QuadratureRule::product(&chart, 12);
        let fields = standard_field_family(&chart, &[3], 1).unwrap();
        let lambdas: Vec<f64> = (1..=40).map(|i| i as f64 * 0.05).collect();
        for kappa in [1.0, 4.0] {
            let scan = threshold_scan(kappa, &lambdas, &fields, &rule).unwrap();
            assert!((scan.lambda_star.unwrap() - scan.predicted).abs() < 1e-3, "{scan:?}");
        }
        let killing: Vec<VariationField> = (0..6).map(|i| VariationField::killing(&chart, i).unwrap()).collect();
        assert!(threshold_scan(1.0, &lambdas, &killing, &rule).is_err());
    }
}

