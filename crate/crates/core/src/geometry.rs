//! Coordinate charts for the model manifolds, contact data, frames,
//! connection coefficients and metric deformations.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::gram_schmidt;
use crate::spec::{parse_specifier, Arg, Call};

/// Central finite-difference step for first derivatives in chart coordinates.
pub const FD_STEP: f64 = 1e-5;
/// Step for second derivatives and eigenframe flows.
pub const FD_STEP2: f64 = 1e-4;
/// Default truncation radius of the Euclidean chart.
pub const R_MAX: f64 = 20.0;

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&[f64]) -> DVector<f64> + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// Which model space a chart parameterizes.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub enum ChartKind {
    S3Join,
    S3Suspension,
    S3UnitTangent,
    S2,
    T3Flat,
    Heisenberg,
    R3Spherical,
    R2Flat,
    FlatTorus(usize),
}

/// Catalogued Ricci tensors.
#[derive(Debug, Clone, Copy, PartialEq)]
enum RicciModel {
    /// Round sphere of the given dimension and radius.
    SpaceForm { dim: usize, radius: f64 },
    Flat,
    Heisenberg,
    Unknown,
}

/// Coordinate hyperplane `x[axis] = value` on which a chart degenerates.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Hyperplane {
    pub axis: usize,
    pub value: f64,
}

/// A contact form and its Reeb field, both in chart components.
#[derive(Clone)]
pub struct ContactData {
    pub eta_fn: VectorFn,
    pub reeb_fn: VectorFn,
}

impl ContactData {
    pub fn eta(&self, x: &[f64]) -> DVector<f64> {
        (self.eta_fn)(x)
    }

    pub fn reeb(&self, x: &[f64]) -> DVector<f64> {
        (self.reeb_fn)(x)
    }

    /// Components `(dη)_{ij} = ∂_i η_j − ∂_j η_i` by central differences.
    pub fn d_eta(&self, x: &[f64]) -> DMatrix<f64> {
        exterior_derivative(&*self.eta_fn, x, FD_STEP)
    }
}

/// Exterior derivative of a 1-form given by components, via central differences.
pub fn exterior_derivative(
    form: &(dyn Fn(&[f64]) -> DVector<f64> + Send + Sync),
    x: &[f64],
    h: f64,
) -> DMatrix<f64> {
    let d = x.len();
    let mut grad = DMatrix::zeros(d, d); // grad[(i, j)] = ∂_i ω_j
    let mut xp = x.to_vec();
    for i in 0..d {
        xp[i] = x[i] + h;
        let fp = form(&xp);
        xp[i] = x[i] - h;
        let fm = form(&xp);
        xp[i] = x[i];
        for j in 0..d {
            grad[(i, j)] = (fp[j] - fm[j]) / (2.0 * h);
        }
    }
    &grad - grad.transpose()
}

/// A single-patch model of a Riemannian manifold.
#[derive(Clone)]
pub struct Chart {
    pub name: String,
    pub kind: ChartKind,
    pub dim: usize,
    pub coord_ranges: Vec<(f64, f64)>,
    pub periodic: Vec<bool>,
    pub singular_locus: Vec<Hyperplane>,
    pub orientation_sign: f64,
    pub compact: bool,
    /// Sphere radius, when the chart is a (possibly rescaled) round sphere.
    pub radius: Option<f64>,
    pub contact: Option<ContactData>,
    /// Area form of the target sphere, as an antisymmetric component matrix.
    pub area_form: Option<MatrixFn>,
    /// Closed-form total volume, when known.
    pub volume: Option<f64>,
    metric_fn: MatrixFn,
    density_fn: Option<ScalarFn>,
    ricci: RicciModel,
}

impl fmt::Debug for Chart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Chart")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("coord_ranges", &self.coord_ranges)
            .field("contact", &self.contact.is_some())
            .finish()
    }
}

impl Chart {
    pub fn metric(&self, x: &[f64]) -> DMatrix<f64> {
        (self.metric_fn)(x)
    }

    /// `√det g`, in closed form where the chart provides one.
    pub fn volume_density(&self, x: &[f64]) -> f64 {
        match &self.density_fn {
            Some(f) => f(x),
            None => self.metric(x).determinant().max(0.0).sqrt(),
        }
    }

    pub fn metric_fn(&self) -> MatrixFn {
        self.metric_fn.clone()
    }

    /// Smallest distance from `x` to any singular hyperplane, measured in coordinates.
    pub fn singular_distance(&self, x: &[f64]) -> f64 {
        self.singular_locus
            .iter()
            .map(|h| (x[h.axis] - h.value).abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// Refuses points within `margin` of the singular locus.
    pub fn check_regular(&self, x: &[f64], margin: f64) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Dimension(format!(
                "chart `{}` has dimension {}, got a point with {} coordinates",
                self.name,
                self.dim,
                x.len()
            )));
        }
        if self.singular_distance(x) <= margin {
            return Err(Error::NearSingularLocus {
                chart: self.name.clone(),
                point: x.to_vec(),
                margin,
            });
        }
        Ok(())
    }

    /// Open midpoint product grid with `n` points per axis.
    pub fn sample_grid(&self, n: usize) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = self
            .coord_ranges
            .iter()
            .map(|&(a, b)| (0..n).map(|i| a + (b - a) * (i as f64 + 0.5) / n as f64).collect())
            .collect();
        product_grid(&axes)
    }

    /// Same chart with a different metric; contact data and Ricci model as supplied.
    fn with_metric(
        &self,
        name: String,
        metric_fn: MatrixFn,
        density_fn: Option<ScalarFn>,
        contact: Option<ContactData>,
        ricci: RicciModel,
        radius: Option<f64>,
        volume: Option<f64>,
    ) -> Chart {
        Chart {
            name,
            metric_fn,
            density_fn,
            contact,
            ricci,
            radius,
            volume,
            ..self.clone()
        }
    }
}

/// Cartesian product of per-axis node lists, last axis fastest.
pub fn product_grid(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for p in &out {
            for &v in axis {
                let mut q = p.clone();
                q.push(v);
                next.push(q);
            }
        }
        out = next;
    }
    out
}

/// Parsed chart specifier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChartSpec {
    S3Join(f64),
    S3Suspension(f64),
    S3UnitTangent(f64),
    S2,
    T3Flat,
    Heisenberg,
    R3Spherical,
    R2Flat,
    FlatTorus(usize),
}

impl ChartSpec {
    pub fn parse(text: &str) -> Result<ChartSpec> {
        let call = parse_specifier(text)?;
        ChartSpec::from_call(&call)
    }

    pub(crate) fn from_call(call: &Call) -> Result<ChartSpec> {
        let radius = |call: &Call| -> Result<f64> {
            match call.args.as_slice() {
                [] => Ok(1.0),
                [a] => a.number(),
                _ => Err(Error::InvalidParameter(format!("`{}` takes one radius", call.name))),
            }
        };
        let no_args = |call: &Call, spec: ChartSpec| -> Result<ChartSpec> {
            if call.args.is_empty() {
                Ok(spec)
            } else {
                Err(Error::InvalidParameter(format!("`{}` takes no arguments", call.name)))
            }
        };
        match call.name.as_str() {
            "s3_join" => Ok(ChartSpec::S3Join(radius(call)?)),
            "s3_suspension" => Ok(ChartSpec::S3Suspension(radius(call)?)),
            "s3_unit_tangent" => Ok(ChartSpec::S3UnitTangent(radius(call)?)),
            "s2" => no_args(call, ChartSpec::S2),
            "t3_flat" => no_args(call, ChartSpec::T3Flat),
            "heisenberg" => no_args(call, ChartSpec::Heisenberg),
            "r3_spherical" => no_args(call, ChartSpec::R3Spherical),
            "r2_flat" => no_args(call, ChartSpec::R2Flat),
            "flat_torus" => match call.args.as_slice() {
                [a] => {
                    let d = a.number()?;
                    if d < 1.0 || d.fract() != 0.0 {
                        return Err(Error::InvalidParameter(format!("flat_torus dimension {d}")));
                    }
                    Ok(ChartSpec::FlatTorus(d as usize))
                }
                _ => Err(Error::InvalidParameter("flat_torus takes a dimension".into())),
            },
            other => Err(Error::UnknownChart(other.to_string())),
        }
    }
}

fn diag3(a: f64, b: f64, c: f64) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_vec(vec![a, b, c]))
}

fn vec3(a: f64, b: f64, c: f64) -> DVector<f64> {
    DVector::from_vec(vec![a, b, c])
}

/// Builds the chart named by a specifier string such as `s3_join(2)`.
pub fn make_chart_str(spec: &str) -> Result<Chart> {
    make_chart(ChartSpec::parse(spec)?)
}

pub fn make_chart(spec: ChartSpec) -> Result<Chart> {
    let check_radius = |r: f64| {
        if r > 0.0 && r.is_finite() {
            Ok(r)
        } else {
            Err(Error::InvalidParameter(format!("sphere radius must be positive, got {r}")))
        }
    };
    let tau = 2.0 * PI;
    let chart = match spec {
        ChartSpec::S3Join(r) => {
            let r = check_radius(r)?;
            let r2 = r * r;
            let r3 = r2 * r;
            Chart {
                name: format!("s3_join({r})"),
                kind: ChartKind::S3Join,
                dim: 3,
                coord_ranges: vec![(0.0, tau), (0.0, tau), (0.0, PI / 2.0)],
                periodic: vec![true, true, false],
                singular_locus: vec![
                    Hyperplane { axis: 2, value: 0.0 },
                    Hyperplane { axis: 2, value: PI / 2.0 },
                ],
                orientation_sign: 1.0,
                compact: true,
                radius: Some(r),
                contact: Some(ContactData {
                    eta_fn: Arc::new(|x: &[f64]| {
                        let (c, s) = (x[2].cos(), x[2].sin());
                        vec3(c * c, -s * s, 0.0)
                    }),
                    reeb_fn: Arc::new(|_: &[f64]| vec3(1.0, -1.0, 0.0)),
                }),
                area_form: None,
                volume: Some(2.0 * PI * PI * r3),
                metric_fn: Arc::new(move |x: &[f64]| {
                    let (c, s) = (x[2].cos(), x[2].sin());
                    diag3(r2 * c * c, r2 * s * s, r2)
                }),
                density_fn: Some(Arc::new(move |x: &[f64]| r3 * x[2].cos() * x[2].sin())),
                ricci: RicciModel::SpaceForm { dim: 3, radius: r },
            }
        }
        ChartSpec::S3Suspension(r) => {
            let r = check_radius(r)?;
            let r2 = r * r;
            let r3 = r2 * r;
            Chart {
                name: format!("s3_suspension({r})"),
                kind: ChartKind::S3Suspension,
                dim: 3,
                coord_ranges: vec![(0.0, PI), (0.0, PI), (0.0, tau)],
                periodic: vec![false, false, true],
                singular_locus: vec![
                    Hyperplane { axis: 0, value: 0.0 },
                    Hyperplane { axis: 0, value: PI },
                    Hyperplane { axis: 1, value: 0.0 },
                    Hyperplane { axis: 1, value: PI },
                ],
                orientation_sign: 1.0,
                compact: true,
                radius: Some(r),
                contact: Some(ContactData {
                    eta_fn: Arc::new(|x: &[f64]| {
                        let (s, t) = (x[0], x[1]);
                        let ss = s.sin();
                        vec3(
                            t.cos(),
                            -0.5 * (2.0 * s).sin() * t.sin(),
                            ss * ss * t.sin() * t.sin(),
                        )
                    }),
                    reeb_fn: Arc::new(|x: &[f64]| {
                        let (s, t) = (x[0], x[1]);
                        vec3(t.cos(), -t.sin() * s.cos() / s.sin(), 1.0)
                    }),
                }),
                area_form: None,
                volume: Some(2.0 * PI * PI * r3),
                metric_fn: Arc::new(move |x: &[f64]| {
                    let ss = x[0].sin();
                    let st = x[1].sin();
                    diag3(r2, r2 * ss * ss, r2 * ss * ss * st * st)
                }),
                density_fn: Some(Arc::new(move |x: &[f64]| {
                    let ss = x[0].sin();
                    r3 * ss * ss * x[1].sin()
                })),
                ricci: RicciModel::SpaceForm { dim: 3, radius: r },
            }
        }
        ChartSpec::S3UnitTangent(r) => {
            let r = check_radius(r)?;
            let r2 = r * r;
            let r3 = r2 * r;
            Chart {
                name: format!("s3_unit_tangent({r})"),
                kind: ChartKind::S3UnitTangent,
                dim: 3,
                coord_ranges: vec![(0.0, tau), (0.0, PI / 4.0), (0.0, tau)],
                periodic: vec![true, false, true],
                singular_locus: vec![
                    Hyperplane { axis: 1, value: 0.0 },
                    Hyperplane { axis: 1, value: PI / 4.0 },
                ],
                orientation_sign: 1.0,
                compact: true,
                radius: Some(r),
                contact: Some(ContactData {
                    eta_fn: Arc::new(|x: &[f64]| vec3(1.0, 0.0, (2.0 * x[1]).sin())),
                    reeb_fn: Arc::new(|_: &[f64]| vec3(1.0, 0.0, 0.0)),
                }),
                area_form: None,
                volume: Some(2.0 * PI * PI * r3),
                metric_fn: Arc::new(move |x: &[f64]| {
                    let s2 = (2.0 * x[1]).sin();
                    DMatrix::from_row_slice(3, 3, &[r2, 0.0, r2 * s2, 0.0, r2, 0.0, r2 * s2, 0.0, r2])
                }),
                density_fn: Some(Arc::new(move |x: &[f64]| r3 * (2.0 * x[1]).cos())),
                ricci: RicciModel::SpaceForm { dim: 3, radius: r },
            }
        }
        ChartSpec::S2 => Chart {
            name: "s2".into(),
            kind: ChartKind::S2,
            dim: 2,
            coord_ranges: vec![(0.0, PI), (0.0, tau)],
            periodic: vec![false, true],
            singular_locus: vec![Hyperplane { axis: 0, value: 0.0 }, Hyperplane { axis: 0, value: PI }],
            orientation_sign: 1.0,
            compact: true,
            radius: Some(1.0),
            contact: None,
            area_form: Some(Arc::new(|x: &[f64]| {
                let w = -0.5 * x[0].sin();
                DMatrix::from_row_slice(2, 2, &[0.0, w, -w, 0.0])
            })),
            volume: Some(4.0 * PI),
            metric_fn: Arc::new(|x: &[f64]| {
                let s = x[0].sin();
                DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, s * s]))
            }),
            density_fn: Some(Arc::new(|x: &[f64]| x[0].sin())),
            ricci: RicciModel::SpaceForm { dim: 2, radius: 1.0 },
        },
        ChartSpec::T3Flat => Chart {
            name: "t3_flat".into(),
            kind: ChartKind::T3Flat,
            dim: 3,
            coord_ranges: vec![(0.0, tau); 3],
            periodic: vec![true; 3],
            singular_locus: vec![],
            orientation_sign: 1.0,
            compact: true,
            radius: None,
            contact: Some(ContactData {
                eta_fn: Arc::new(|x: &[f64]| vec3(x[2].cos(), x[2].sin(), 0.0)),
                reeb_fn: Arc::new(|x: &[f64]| vec3(x[2].cos(), x[2].sin(), 0.0)),
            }),
            area_form: None,
            volume: Some(tau * tau * tau),
            metric_fn: Arc::new(|_: &[f64]| DMatrix::identity(3, 3)),
            density_fn: Some(Arc::new(|_: &[f64]| 1.0)),
            ricci: RicciModel::Flat,
        },
        ChartSpec::Heisenberg => Chart {
            name: "heisenberg".into(),
            kind: ChartKind::Heisenberg,
            dim: 3,
            coord_ranges: vec![(-2.0, 2.0); 3],
            periodic: vec![false; 3],
            singular_locus: vec![],
            orientation_sign: 1.0,
            compact: false,
            radius: None,
            contact: Some(ContactData {
                eta_fn: Arc::new(|x: &[f64]| vec3(-x[1], 0.0, 1.0)),
                reeb_fn: Arc::new(|_: &[f64]| vec3(0.0, 0.0, 1.0)),
            }),
            area_form: None,
            volume: None,
            metric_fn: Arc::new(|x: &[f64]| {
                let y = x[1];
                DMatrix::from_row_slice(3, 3, &[1.0 + y * y, 0.0, -y, 0.0, 1.0, 0.0, -y, 0.0, 1.0])
            }),
            density_fn: Some(Arc::new(|_: &[f64]| 1.0)),
            ricci: RicciModel::Heisenberg,
        },
        ChartSpec::R3Spherical => Chart {
            name: "r3_spherical".into(),
            kind: ChartKind::R3Spherical,
            dim: 3,
            coord_ranges: vec![(0.0, R_MAX), (0.0, PI), (0.0, tau)],
            periodic: vec![false, false, true],
            singular_locus: vec![
                Hyperplane { axis: 0, value: 0.0 },
                Hyperplane { axis: 1, value: 0.0 },
                Hyperplane { axis: 1, value: PI },
            ],
            orientation_sign: 1.0,
            compact: false,
            radius: None,
            contact: None,
            area_form: None,
            volume: Some(4.0 * PI * R_MAX.powi(3) / 3.0),
            metric_fn: Arc::new(|x: &[f64]| {
                let r = x[0];
                let st = x[1].sin();
                diag3(1.0, r * r, r * r * st * st)
            }),
            density_fn: Some(Arc::new(|x: &[f64]| x[0] * x[0] * x[1].sin())),
            ricci: RicciModel::Flat,
        },
        ChartSpec::R2Flat => Chart {
            name: "r2_flat".into(),
            kind: ChartKind::R2Flat,
            dim: 2,
            coord_ranges: vec![(-1.0, 1.0); 2],
            periodic: vec![false; 2],
            singular_locus: vec![],
            orientation_sign: 1.0,
            compact: false,
            radius: None,
            contact: None,
            area_form: None,
            volume: None,
            metric_fn: Arc::new(|_: &[f64]| DMatrix::identity(2, 2)),
            density_fn: Some(Arc::new(|_: &[f64]| 1.0)),
            ricci: RicciModel::Flat,
        },
        ChartSpec::FlatTorus(d) => Chart {
            name: format!("flat_torus({d})"),
            kind: ChartKind::FlatTorus(d),
            dim: d,
            coord_ranges: vec![(0.0, tau); d],
            periodic: vec![true; d],
            singular_locus: vec![],
            orientation_sign: 1.0,
            compact: true,
            radius: None,
            contact: None,
            area_form: None,
            volume: Some(tau.powi(d as i32)),
            metric_fn: Arc::new(move |_: &[f64]| DMatrix::identity(d, d)),
            density_fn: Some(Arc::new(|_: &[f64]| 1.0)),
            ricci: RicciModel::Flat,
        },
    };
    Ok(chart)
}

/// How the tangent space splits for a biconformal change: a basis of `V`
/// (as matrix columns) at each point. `H` is its `g`-orthogonal complement.
#[derive(Clone)]
pub struct Splitting {
    pub vertical_basis: MatrixFn,
}

/// Metric deformations.
#[derive(Clone)]
pub enum Deformation {
    /// `g ↦ c² g`.
    RadiusScale(f64),
    /// `g ↦ R⁻¹ g + (1 − R⁻¹) η⊗η`.
    Squash(f64),
    /// The join-coordinate metric `k²cos²s dx₁² + ℓ²sin²s dx₂² + ds²`.
    HopfSquash { k: f64, l: f64 },
    /// `ḡ = σ⁻² g^H + ρ⁻² g^V`.
    Biconformal { sigma: ScalarFn, rho: ScalarFn, splitting: Splitting },
}

impl fmt::Debug for Deformation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Deformation::RadiusScale(c) => write!(f, "radius_scale({c})"),
            Deformation::Squash(r) => write!(f, "squash({r})"),
            Deformation::HopfSquash { k, l } => write!(f, "hopf_squash({k},{l})"),
            Deformation::Biconformal { .. } => write!(f, "biconformal(..)"),
        }
    }
}

impl Deformation {
    /// Parses `radius_scale(c)`, `squash(R)`, `hopf_squash(k,l)` and `conformal(c)`,
    /// the last being the constant biconformal change `σ = ρ = c⁻¹`.
    pub fn parse(text: &str) -> Result<Deformation> {
        let call = parse_specifier(text)?;
        let nums: Vec<f64> = call.args.iter().map(Arg::number).collect::<Result<_>>()?;
        match (call.name.as_str(), nums.as_slice()) {
            ("radius_scale", [c]) => Ok(Deformation::RadiusScale(*c)),
            ("squash", [r]) => Ok(Deformation::Squash(*r)),
            ("hopf_squash", [k, l]) => Ok(Deformation::HopfSquash { k: *k, l: *l }),
            ("conformal", [c]) => Ok(Deformation::conformal_constant(*c)),
            (name, _) => Err(Error::InvalidParameter(format!("unknown or malformed deformation `{name}`"))),
        }
    }

    /// Constant conformal factor `σ = ρ = c⁻¹`, i.e. `g ↦ c² g`, as a biconformal change.
    /// `g ↦ σ⁻² g`.
    pub fn conformal(sigma: ScalarFn) -> Deformation {
        Deformation::Biconformal {
            rho: sigma.clone(),
            sigma,
            splitting: Splitting { vertical_basis: Arc::new(|x: &[f64]| DMatrix::zeros(x.len(), 0)) },
        }
    }

    pub fn conformal_constant(c: f64) -> Deformation {
        let inv = 1.0 / c;
        Deformation::Biconformal {
            sigma: Arc::new(move |_: &[f64]| inv),
            rho: Arc::new(move |_: &[f64]| inv),
            splitting: Splitting { vertical_basis: Arc::new(|x: &[f64]| DMatrix::zeros(x.len(), 0)) },
        }
    }
}

/// `1 + Σ aᵢ sin(kᵢ·x + φᵢ)` with four seeded terms, integer `kᵢ ∈ [−2, 2]ᵈ`
/// and `|aᵢ| < amplitude`; nowhere zero for `amplitude < 1/4`.
pub fn seeded_conformal_factor(seed: u64, dim: usize, amplitude: f64) -> ScalarFn {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let terms: Vec<(Vec<f64>, f64, f64)> = (0..4)
        .map(|_| {
            let k = (0..dim).map(|_| rng.random_range(-2i32..=2) as f64).collect();
            (k, rng.random_range(-amplitude..amplitude), rng.random_range(0.0..2.0 * PI))
        })
        .collect();
    Arc::new(move |x: &[f64]| {
        1.0 + terms.iter().map(|(k, a, ph)| a * (k.iter().zip(x).map(|(k, x)| k * x).sum::<f64>() + ph).sin()).sum::<f64>()
    })
}

/// Applies a metric deformation, returning a new chart.
pub fn deform_metric(chart: &Chart, deform: &Deformation) -> Result<Chart> {
    match deform {
        Deformation::RadiusScale(c) => {
            let c = *c;
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::InvalidParameter(format!("radius scale must be positive, got {c}")));
            }
            let c2 = c * c;
            let cd = c.powi(chart.dim as i32);
            let base = chart.metric_fn.clone();
            let density = chart.density_fn.clone().map(|f| -> ScalarFn { Arc::new(move |x: &[f64]| cd * f(x)) });
            let ricci = match chart.ricci {
                RicciModel::SpaceForm { dim, radius } => RicciModel::SpaceForm { dim, radius: radius * c },
                other => other,
            };
            Ok(chart.with_metric(
                format!("{}+radius_scale({c})", chart.name),
                Arc::new(move |x: &[f64]| base(x) * c2),
                density,
                chart.contact.clone(),
                ricci,
                chart.radius.map(|r| r * c),
                chart.volume.map(|v| v * cd),
            ))
        }
        Deformation::Squash(r) => {
            let r = *r;
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::InvalidParameter(format!("squash parameter must be positive, got {r}")));
            }
            let contact = chart.contact.clone().ok_or_else(|| Error::MissingContactData {
                chart: chart.name.clone(),
                deform: "squash".into(),
            })?;
            let base = chart.metric_fn.clone();
            let eta = contact.eta_fn.clone();
            let a = 1.0 / r;
            Ok(chart.with_metric(
                format!("{}+squash({r})", chart.name),
                Arc::new(move |x: &[f64]| {
                    let e = eta(x);
                    base(x) * a + (&e * e.transpose()) * (1.0 - a)
                }),
                None,
                Some(contact),
                RicciModel::Unknown,
                None,
                None,
            ))
        }
        Deformation::HopfSquash { k, l } => {
            let (k, l) = (*k, *l);
            if chart.contact.is_none() {
                return Err(Error::MissingContactData { chart: chart.name.clone(), deform: "hopf_squash".into() });
            }
            if chart.kind != ChartKind::S3Join {
                return Err(Error::InvalidParameter(format!(
                    "hopf_squash is defined in join coordinates, chart is `{}`",
                    chart.name
                )));
            }
            if k == 0.0 || l == 0.0 {
                return Err(Error::InvalidParameter("hopf_squash needs nonzero k and l".into()));
            }
            let r = chart.radius.unwrap_or(1.0);
            let r2 = r * r;
            let r3 = r2 * r;
            let ricci = if k.abs() == 1.0 && l.abs() == 1.0 { chart.ricci } else { RicciModel::Unknown };
            let volume = chart.volume.map(|v| v * (k * l).abs());
            Ok(chart.with_metric(
                format!("{}+hopf_squash({k},{l})", chart.name),
                Arc::new(move |x: &[f64]| {
                    let (c, s) = (x[2].cos(), x[2].sin());
                    diag3(r2 * k * k * c * c, r2 * l * l * s * s, r2)
                }),
                Some(Arc::new(move |x: &[f64]| r3 * (k * l).abs() * x[2].cos() * x[2].sin())),
                Some(ContactData {
                    eta_fn: Arc::new(move |x: &[f64]| {
                        let (c, s) = (x[2].cos(), x[2].sin());
                        vec3(k * c * c, -l * s * s, 0.0)
                    }),
                    reeb_fn: Arc::new(move |_: &[f64]| vec3(1.0 / k, -1.0 / l, 0.0)),
                }),
                ricci,
                if ricci == RicciModel::Unknown { None } else { chart.radius },
                volume,
            ))
        }
        Deformation::Biconformal { sigma, rho, splitting } => {
            for x in chart.sample_grid(6) {
                for (name, f) in [("sigma", sigma), ("rho", rho)] {
                    let v = f(&x);
                    if !v.is_finite() || v.abs() < 1e-12 {
                        let _ = name;
                        return Err(Error::VanishingDeformation { point: x });
                    }
                }
            }
            let base = chart.metric_fn.clone();
            if Arc::ptr_eq(sigma, rho) {
                // σ = ρ: plain conformal change, no projector needed
                let sigma = sigma.clone();
                return Ok(chart.with_metric(
                    format!("{}+conformal", chart.name),
                    Arc::new(move |x: &[f64]| {
                        let s = sigma(x);
                        base(x) / (s * s)
                    }),
                    None,
                    None,
                    RicciModel::Unknown,
                    None,
                    None,
                ));
            }
            let (sigma, rho, basis) = (sigma.clone(), rho.clone(), splitting.vertical_basis.clone());
            Ok(chart.with_metric(
                format!("{}+biconformal", chart.name),
                Arc::new(move |x: &[f64]| {
                    let g = base(x);
                    let p = vertical_projector(&g, &basis(x));
                    let d = g.nrows();
                    let q = DMatrix::identity(d, d) - &p;
                    let s = sigma(x);
                    let r = rho(x);
                    (q.transpose() * &g * &q) / (s * s) + (p.transpose() * &g * &p) / (r * r)
                }),
                None,
                None,
                RicciModel::Unknown,
                None,
                None,
            ))
        }
    }
}

/// `g`-orthogonal projector onto the span of the columns of `b`.
pub fn vertical_projector(g: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let d = g.nrows();
    if b.ncols() == 0 {
        return DMatrix::zeros(d, d);
    }
    let gram = b.transpose() * g * b;
    let inv = gram.try_inverse().unwrap_or_else(|| DMatrix::zeros(b.ncols(), b.ncols()));
    b * inv * b.transpose() * g
}

/// Analytic Ricci tensor of a catalogued chart.
pub fn ricci_form(chart: &Chart) -> Result<MatrixFn> {
    match chart.ricci {
        RicciModel::SpaceForm { dim, radius } => {
            let factor = (dim as f64 - 1.0) / (radius * radius);
            let g = chart.metric_fn.clone();
            Ok(Arc::new(move |x: &[f64]| g(x) * factor))
        }
        RicciModel::Flat => {
            let d = chart.dim;
            Ok(Arc::new(move |_: &[f64]| DMatrix::zeros(d, d)))
        }
        RicciModel::Heisenberg => Ok(Arc::new(|x: &[f64]| {
            // -½(dx² + dy²) + ½ η⊗η with η = dz − y dx
            let eta = vec3(-x[1], 0.0, 1.0);
            let flat = diag3(-0.5, -0.5, 0.0);
            flat + (&eta * eta.transpose()) * 0.5
        })),
        RicciModel::Unknown => Err(Error::RicciUnavailable(chart.name.clone())),
    }
}

/// A frame of `d` vector fields, columns of the returned matrix.
#[derive(Clone)]
pub struct FrameField {
    pub dim: usize,
    vectors_fn: MatrixFn,
}

impl FrameField {
    pub fn new(dim: usize, vectors_fn: MatrixFn) -> FrameField {
        FrameField { dim, vectors_fn }
    }

    pub fn vectors(&self, x: &[f64]) -> DMatrix<f64> {
        (self.vectors_fn)(x)
    }

    /// The coordinate frame `∂_1, …, ∂_d`.
    pub fn coordinate(dim: usize) -> FrameField {
        FrameField::new(dim, Arc::new(move |_: &[f64]| DMatrix::identity(dim, dim)))
    }

    /// Gram–Schmidt in `g` of the columns produced by `raw`, in order.
    pub fn orthonormalized(chart: &Chart, raw: MatrixFn) -> FrameField {
        let metric = chart.metric_fn.clone();
        let dim = chart.dim;
        FrameField::new(
            dim,
            Arc::new(move |x: &[f64]| {
                let g = metric(x);
                let m = raw(x);
                let cols: Vec<DVector<f64>> = (0..m.ncols()).map(|j| m.column(j).into_owned()).collect();
                let on = gram_schmidt(&g, &cols, 0.0);
                DMatrix::from_columns(&on)
            }),
        )
    }

    /// Orthonormalized coordinate frame.
    pub fn orthonormal_coordinate(chart: &Chart) -> FrameField {
        let d = chart.dim;
        FrameField::orthonormalized(chart, Arc::new(move |_: &[f64]| DMatrix::identity(d, d)))
    }
}

/// Connection coefficients `Γ_ij^k = g(∇_{E_i} E_j, E_k)` of a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Gamma {
    pub dim: usize,
    data: Vec<f64>,
}

impl Gamma {
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.dim + j) * self.dim + k]
    }
}

/// Koszul formula with brackets and frame derivatives by central differences.
pub fn connection_coeffs(chart: &Chart, frame: &FrameField, x: &[f64]) -> Result<Gamma> {
    connection_coeffs_with_step(chart, frame, x, FD_STEP)
}

pub fn connection_coeffs_with_step(chart: &Chart, frame: &FrameField, x: &[f64], h: f64) -> Result<Gamma> {
    chart.check_regular(x, 2.0 * h)?;
    let d = chart.dim;
    let e = frame.vectors(x);
    let g = chart.metric(x);
    // dframe[a] = ∂_a E, dgram[a] = ∂_a (Eᵗ g E), five-point rule
    let mut dframe = Vec::with_capacity(d);
    let mut dgram = Vec::with_capacity(d);
    let mut xp = x.to_vec();
    for a in 0..d {
        let mut sample = |t: f64| {
            xp[a] = x[a] + t * h;
            let (ev, gv) = (frame.vectors(&xp), chart.metric(&xp));
            let sv = ev.transpose() * &gv * &ev;
            (ev, sv)
        };
        let ((e1, s1), (em1, sm1), (e2, s2), (em2, sm2)) = (sample(1.0), sample(-1.0), sample(2.0), sample(-2.0));
        xp[a] = x[a];
        dframe.push(((e1 - em1) * 8.0 - (e2 - em2)) / (12.0 * h));
        dgram.push(((s1 - sm1) * 8.0 - (s2 - sm2)) / (12.0 * h));
    }
    // directional derivative along E_i of the Gram entry (j, k)
    let along = |i: usize, j: usize, k: usize| -> f64 { (0..d).map(|a| e[(a, i)] * dgram[a][(j, k)]).sum() };
    // brackets [E_i, E_j] as coordinate vectors
    let mut bracket = vec![DVector::zeros(d); d * d];
    for i in 0..d {
        for j in 0..d {
            let mut v = DVector::zeros(d);
            for a in 0..d {
                v += dframe[a].column(j) * e[(a, i)] - dframe[a].column(i) * e[(a, j)];
            }
            bracket[i * d + j] = v;
        }
    }
    let ge = &g * &e; // columns g E_k
    let gb = |i: usize, j: usize, k: usize| -> f64 { bracket[i * d + j].dot(&ge.column(k)) };
    let mut data = vec![0.0; d * d * d];
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                data[(i * d + j) * d + k] = 0.5
                    * (along(i, j, k) + along(j, i, k) - along(k, i, j) + gb(i, j, k) - gb(i, k, j) - gb(j, k, i));
            }
        }
    }
    Ok(Gamma { dim: d, data })
}

/// Embedding of a round 3-sphere chart into ℝ⁴ and its Jacobian (4×3).
pub fn sphere_embedding(chart: &Chart, x: &[f64]) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let r = chart.radius?;
    match chart.kind {
        ChartKind::S3Suspension => {
            let (s, t, u) = (x[0], x[1], x[2]);
            let (cs, ss, ct, st, cu, su) = (s.cos(), s.sin(), t.cos(), t.sin(), u.cos(), u.sin());
            let p = DVector::from_vec(vec![cs, ss * ct, ss * st * cu, ss * st * su]) * r;
            #[rustfmt::skip]
            let d = DMatrix::from_row_slice(4, 3, &[
                -ss, 0.0, 0.0,
                cs * ct, -ss * st, 0.0,
                cs * st * cu, ss * ct * cu, -ss * st * su,
                cs * st * su, ss * ct * su, ss * st * cu,
            ]) * r;
            Some((p, d))
        }
        ChartKind::S3Join => {
            let (a, b, s) = (x[0], x[1], x[2]);
            let (ca, sa, cb, sb, cs, ss) = (a.cos(), a.sin(), b.cos(), b.sin(), s.cos(), s.sin());
            let p = DVector::from_vec(vec![cs * ca, cs * sa, ss * cb, ss * sb]) * r;
            #[rustfmt::skip]
            let d = DMatrix::from_row_slice(4, 3, &[
                -cs * sa, 0.0, -ss * ca,
                cs * ca, 0.0, -ss * sa,
                0.0, -ss * sb, cs * cb,
                0.0, ss * cb, cs * sb,
            ]) * r;
            Some((p, d))
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn join_metric_at_quarter_pi() {
        let c = make_chart_str("s3_join(1)").unwrap();
        let g = c.metric(&[0.0, 0.0, PI / 4.0]);
        let want = diag3(0.5, 0.5, 1.0);
        assert!((g - want).amax() < 1e-15);
    }

    #[test]
    fn s2_metric_at_equator() {
        let c = make_chart_str("s2").unwrap();
        let g = c.metric(&[PI / 2.0, 0.0]);
        assert!((g - DMatrix::identity(2, 2)).amax() < 1e-15);
    }

    #[test]
    fn heisenberg_metric_entry() {
        let c = make_chart_str("heisenberg").unwrap();
        let g = c.metric(&[0.0, 2.0, 0.0]);
        assert_eq!(g[(0, 0)], 5.0);
        assert_eq!(g[(0, 2)], -2.0);
    }

    #[test]
    fn unknown_chart_and_bad_radius() {
        assert!(matches!(make_chart_str("s4_join(1)"), Err(Error::UnknownChart(_))));
        assert!(matches!(make_chart_str("s3_join(0)"), Err(Error::InvalidParameter(_))));
        assert!(matches!(make_chart_str("s3_join(-1)"), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn density_matches_determinant_on_all_charts() {
        for spec in [
            "s3_join(1.5)",
            "s3_suspension(0.7)",
            "s3_unit_tangent(2)",
            "s2",
            "t3_flat",
            "heisenberg",
            "r3_spherical",
            "r2_flat",
            "flat_torus(4)",
        ] {
            let c = make_chart_str(spec).unwrap();
            for x in c.sample_grid(5) {
                let g = c.metric(&x);
                let eig = g.clone().symmetric_eigen();
                assert!(eig.eigenvalues.min() > 0.0, "{spec} not definite at {x:?}");
                let det = g.determinant().sqrt();
                assert!(close(det, c.volume_density(&x), 1e-12), "{spec} at {x:?}");
                assert!((&g - g.transpose()).amax() == 0.0);
            }
        }
    }

    #[test]
    fn contact_data_is_consistent() {
        for spec in ["s3_join(1)", "s3_suspension(1)", "s3_unit_tangent(1)", "t3_flat", "heisenberg"] {
            let c = make_chart_str(spec).unwrap();
            let cd = c.contact.clone().unwrap();
            for x in c.sample_grid(10) {
                let eta = cd.eta(&x);
                let xi = cd.reeb(&x);
                assert!((eta.dot(&xi) - 1.0).abs() < 1e-10, "{spec} η(ξ) at {x:?}");
                let contraction = cd.d_eta(&x).transpose() * &xi;
                assert!(contraction.amax() < 1e-8, "{spec} ι_ξ dη at {x:?}");
            }
        }
    }

    #[test]
    fn hopf_squash_cases() {
        let c = make_chart_str("s3_join(1)").unwrap();
        let same = deform_metric(&c, &Deformation::HopfSquash { k: 1.0, l: 1.0 }).unwrap();
        let d = deform_metric(&c, &Deformation::HopfSquash { k: 2.0, l: 1.0 }).unwrap();
        for x in c.sample_grid(4) {
            assert!((same.metric(&x) - c.metric(&x)).amax() < 1e-15);
        }
        assert_eq!(d.metric(&[0.3, 0.1, 0.0])[(0, 0)], 4.0);
        let cd = d.contact.clone().unwrap();
        for x in c.sample_grid(5) {
            assert!((cd.eta(&x).dot(&cd.reeb(&x)) - 1.0).abs() < 1e-12);
            assert!((cd.d_eta(&x).transpose() * cd.reeb(&x)).amax() < 1e-8);
        }
        let flat = make_chart_str("r3_spherical").unwrap();
        assert!(matches!(
            deform_metric(&flat, &Deformation::HopfSquash { k: 2.0, l: 1.0 }),
            Err(Error::MissingContactData { .. })
        ));
        assert!(matches!(deform_metric(&flat, &Deformation::Squash(2.0)), Err(Error::MissingContactData { .. })));
    }

    #[test]
    fn radius_scale_one_is_bit_exact() {
        let c = make_chart_str("s3_suspension(1.3)").unwrap();
        let d = deform_metric(&c, &Deformation::RadiusScale(1.0)).unwrap();
        for x in c.sample_grid(4) {
            assert_eq!(c.metric(&x), d.metric(&x));
        }
    }

    #[test]
    fn constant_biconformal_scales_metric() {
        let c = make_chart_str("s3_join(1)").unwrap();
        let d = deform_metric(&c, &Deformation::conformal_constant(3.0)).unwrap();
        for x in c.sample_grid(4) {
            assert!((d.metric(&x) - c.metric(&x) * 9.0).amax() < 1e-13);
        }
        let node = c.sample_grid(6)[0][2];
        let vanishing = Deformation::Biconformal {
            sigma: Arc::new(move |x: &[f64]| x[2] - node),
            rho: Arc::new(|_: &[f64]| 1.0),
            splitting: Splitting { vertical_basis: Arc::new(|_: &[f64]| DMatrix::zeros(3, 0)) },
        };
        assert!(matches!(deform_metric(&c, &vanishing), Err(Error::VanishingDeformation { .. })));
    }

    #[test]
    fn squash_keeps_reeb_unit() {
        let c = make_chart_str("s3_join(1)").unwrap();
        let d = deform_metric(&c, &Deformation::Squash(2.0)).unwrap();
        let cd = d.contact.clone().unwrap();
        for x in c.sample_grid(4) {
            let xi = cd.reeb(&x);
            let n2 = xi.dot(&(d.metric(&x) * &xi));
            assert!((n2 - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn flat_torus_connection_vanishes() {
        let c = make_chart_str("t3_flat").unwrap();
        let f = FrameField::coordinate(3);
        let gam = connection_coeffs(&c, &f, &[0.3, 1.0, 2.0]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    assert!(gam.get(i, j, k).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn suspension_gamma_221_vanishes_at_equator() {
        let c = make_chart_str("s3_suspension(1)").unwrap();
        let f = FrameField::new(
            3,
            Arc::new(|x: &[f64]| {
                let ss = x[0].sin();
                diag3(1.0, 1.0 / ss, 1.0 / (ss * x[1].sin()))
            }),
        );
        let gam = connection_coeffs(&c, &f, &[PI / 2.0, PI / 2.0, 1.0]).unwrap();
        assert!(gam.get(1, 1, 0).abs() < 1e-10);
        // away from the equator Γ₂₂¹ = −cot s
        let s = 1.0;
        let gam = connection_coeffs(&c, &f, &[s, 1.2, 0.4]).unwrap();
        assert!((gam.get(1, 1, 0) + 1.0 / s.tan()).abs() < 1e-9);
    }

    #[test]
    fn join_gamma_113_is_tan_s() {
        let c = make_chart_str("s3_join(1)").unwrap();
        let f = FrameField::orthonormal_coordinate(&c);
        for s in [PI / 4.0, 0.3, 1.1] {
            let gam = connection_coeffs(&c, &f, &[0.5, 0.5, s]).unwrap();
            // ∇_{E1}E1 = tan s ∂_s for E1 = ∂_{x1}/cos s
            assert!((gam.get(0, 0, 2) - s.tan()).abs() < 1e-7, "s={s}");
            assert!((gam.get(1, 1, 2) + 1.0 / s.tan()).abs() < 1e-7, "s={s} got {}", gam.get(1, 1, 2));
        }
    }

    #[test]
    fn orthonormal_frame_gamma_is_antisymmetric() {
        for spec in ["s3_join(1)", "s3_suspension(2)", "s3_unit_tangent(1)", "heisenberg"] {
            let c = make_chart_str(spec).unwrap();
            let f = FrameField::orthonormal_coordinate(&c);
            for x in c.sample_grid(3) {
                let gram = {
                    let e = f.vectors(&x);
                    e.transpose() * c.metric(&x) * e
                };
                assert!((gram - DMatrix::identity(3, 3)).amax() < 1e-10);
                let gam = connection_coeffs(&c, &f, &x).unwrap();
                for i in 0..3 {
                    for j in 0..3 {
                        for k in 0..3 {
                            assert!((gam.get(i, j, k) + gam.get(i, k, j)).abs() < 10.0 * FD_STEP * FD_STEP);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn connection_refuses_singular_points() {
        let c = make_chart_str("s3_join(1)").unwrap();
        let f = FrameField::coordinate(3);
        assert!(matches!(connection_coeffs(&c, &f, &[0.0, 0.0, 1e-6]), Err(Error::NearSingularLocus { .. })));
    }

    #[test]
    fn ricci_catalogue() {
        let c1 = make_chart_str("s3_join(1)").unwrap();
        let c2 = make_chart_str("s3_join(2)").unwrap();
        let x = [0.1, 0.2, 0.7];
        let r1 = ricci_form(&c1).unwrap();
        let r2 = ricci_form(&c2).unwrap();
        assert!((r1(&x) - c1.metric(&x) * 2.0).amax() < 1e-15);
        assert!((r2(&x) - c2.metric(&x) * 0.5).amax() < 1e-15);
        let t = make_chart_str("t3_flat").unwrap();
        assert_eq!(ricci_form(&t).unwrap()(&x), DMatrix::zeros(3, 3));
        let sq = deform_metric(&c1, &Deformation::Squash(2.0)).unwrap();
        assert!(matches!(ricci_form(&sq), Err(Error::RicciUnavailable(_))));
        let scaled = deform_metric(&c1, &Deformation::RadiusScale(2.0)).unwrap();
        assert!((ricci_form(&scaled).unwrap()(&x) - c1.metric(&x) * 2.0).amax() < 1e-14);
    }

    /// Ricci of a left-invariant orthonormal frame from constant connection coefficients.
    #[test]
    fn heisenberg_ricci_matches_frame_computation() {
        let c = make_chart_str("heisenberg").unwrap();
        // left-invariant orthonormal frame e1 = ∂x + y∂z, e2 = ∂y, e3 = ∂z
        let f = FrameField::new(
            3,
            Arc::new(|x: &[f64]| DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, x[1], 0.0, 1.0])),
        );
        let x = [0.3, -0.4, 0.2];
        let gam = connection_coeffs(&c, &f, &x).unwrap();
        let d = 3;
        // R(e_i, e_j) e_k expressed in the frame
        let nabla = |i: usize, v: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; d];
            for (j, vj) in v.iter().enumerate() {
                for l in 0..d {
                    out[l] += vj * gam.get(i, j, l);
                }
            }
            out
        };
        let mut ric = DMatrix::zeros(d, d);
        for j in 0..d {
            for k in 0..d {
                let mut acc = 0.0;
                for i in 0..d {
                    let mut ek = vec![0.0; d];
                    ek[k] = 1.0;
                    let a = nabla(i, &nabla(j, &ek));
                    let b = nabla(j, &nabla(i, &ek));
                    let mut br = vec![0.0; d];
                    for l in 0..d {
                        br[l] = gam.get(i, j, l) - gam.get(j, i, l);
                    }
                    let mut c3 = vec![0.0; d];
                    for (l, bl) in br.iter().enumerate() {
                        let t = nabla(l, &ek);
                        for p in 0..d {
                            c3[p] += bl * t[p];
                        }
                    }
                    acc += a[i] - b[i] - c3[i];
                }
                ric[(j, k)] = acc;
            }
        }
        let e = f.vectors(&x);
        let analytic = e.transpose() * ricci_form(&c).unwrap()(&x) * &e;
        assert!((ric - analytic).amax() < 1e-8);
    }

    #[test]
    fn embeddings_pull_back_the_metric() {
        for spec in ["s3_join(1.5)", "s3_suspension(0.5)"] {
            let c = make_chart_str(spec).unwrap();
            for x in c.sample_grid(3) {
                let (p, d) = sphere_embedding(&c, &x).unwrap();
                assert!((p.norm() - c.radius.unwrap()).abs() < 1e-14);
                assert!((d.transpose() * &d - c.metric(&x)).amax() < 1e-14);
            }
        }
    }
}
