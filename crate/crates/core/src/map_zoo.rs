//! Map families between the model charts: evaluation, Jacobians and pullbacks.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{
    deform_metric, exterior_derivative, make_chart, ChartSpec, Chart, Deformation, MatrixFn, VectorFn, FD_STEP,
    R_MAX,
};
use crate::linalg::gauss_legendre_on;
use crate::spec::{parse_specifier, Arg, Call};

type Fn1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type PointFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Tolerance for boundary values of grid profiles.
const GRID_BC_TOL: f64 = 1e-10;
/// Points used by the constructor's Jacobian self-test.
pub const SELF_TEST_POINTS: usize = 100;
/// Relative tolerance of the Jacobian self-test.
pub const SELF_TEST_TOL: f64 = 1e-6;

/// Natural cubic spline through `(x_i, y_i)`.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>, // second derivatives at the nodes
}

impl CubicSpline {
    pub fn natural(x: Vec<f64>, y: Vec<f64>) -> Result<CubicSpline> {
        let n = x.len();
        if n < 3 || y.len() != n {
            return Err(Error::InvalidParameter("spline needs at least 3 matching nodes".into()));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("spline nodes must be strictly increasing".into()));
        }
        // tridiagonal system for interior second derivatives (Thomas algorithm)
        let mut m = vec![0.0; n];
        let k = n - 2;
        let mut diag = vec![0.0; k];
        let mut upper = vec![0.0; k];
        let mut rhs = vec![0.0; k];
        for i in 1..n - 1 {
            let h0 = x[i] - x[i - 1];
            let h1 = x[i + 1] - x[i];
            diag[i - 1] = 2.0 * (h0 + h1);
            upper[i - 1] = h1;
            rhs[i - 1] = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
        }
        for i in 1..k {
            let lower = x[i + 1] - x[i]; // h_{i} multiplies m_{i} in row i+1
            let w = lower / diag[i - 1];
            diag[i] -= w * upper[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        for i in (0..k).rev() {
            let next = if i + 1 < k { m[i + 2] } else { 0.0 };
            m[i + 1] = (rhs[i] - upper[i] * next) / diag[i];
        }
        Ok(CubicSpline { x, y, m })
    }

    fn segment(&self, t: f64) -> usize {
        let n = self.x.len();
        match self.x.binary_search_by(|v| v.total_cmp(&t)) {
            Ok(i) => i.min(n - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(n - 2),
        }
    }

    /// Value, first and second derivative at `t` (cubic extension outside the nodes).
    pub fn eval3(&self, t: f64) -> (f64, f64, f64) {
        let i = self.segment(t);
        let (x0, x1) = (self.x[i], self.x[i + 1]);
        let h = x1 - x0;
        let a = (x1 - t) / h;
        let b = (t - x0) / h;
        let (m0, m1) = (self.m[i], self.m[i + 1]);
        let (y0, y1) = (self.y[i], self.y[i + 1]);
        let v = a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0;
        let d = (y1 - y0) / h - (3.0 * a * a - 1.0) / 6.0 * h * m0 + (3.0 * b * b - 1.0) / 6.0 * h * m1;
        let dd = a * m0 + b * m1;
        (v, d, dd)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }
}

#[derive(Clone)]
enum ProfileRepr {
    Closed { f: Fn1, df: Fn1, d2f: Fn1 },
    Grid(CubicSpline),
}

/// A scalar profile function such as `α(s)`, `γ(s)` or `f(r)`.
#[derive(Clone)]
pub struct Profile {
    pub name: String,
    repr: ProfileRepr,
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Profile({})", self.name)
    }
}

impl Profile {
    /// Closed form with its first two derivatives.
    pub fn closed(
        name: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Profile {
        Profile { name: name.into(), repr: ProfileRepr::Closed { f: Arc::new(f), df: Arc::new(df), d2f: Arc::new(d2f) } }
    }

    /// Natural cubic interpolant of grid values.
    pub fn grid(name: impl Into<String>, s: Vec<f64>, values: Vec<f64>) -> Result<Profile> {
        Ok(Profile { name: name.into(), repr: ProfileRepr::Grid(CubicSpline::natural(s, values)?) })
    }

    /// Two-column CSV `(s, value)`; a non-numeric first row is taken as a header.
    pub fn from_csv(path: &Path) -> Result<Profile> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path)?;
        let (mut s, mut v) = (Vec::new(), Vec::new());
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() < 2 {
                return Err(Error::Io(format!("{}: row {} has fewer than two columns", path.display(), i + 1)));
            }
            match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
                (Ok(a), Ok(b)) => {
                    s.push(a);
                    v.push(b);
                }
                _ if i == 0 => continue,
                _ => return Err(Error::Io(format!("{}: row {} is not numeric", path.display(), i + 1))),
            }
        }
        Profile::grid(path.display().to_string(), s, v)
    }

    pub fn is_grid(&self) -> bool {
        matches!(self.repr, ProfileRepr::Grid(_))
    }

    pub fn spline(&self) -> Option<&CubicSpline> {
        match &self.repr {
            ProfileRepr::Grid(sp) => Some(sp),
            ProfileRepr::Closed { .. } => None,
        }
    }

    pub fn value(&self, s: f64) -> f64 {
        match &self.repr {
            ProfileRepr::Closed { f, .. } => f(s),
            ProfileRepr::Grid(sp) => sp.eval3(s).0,
        }
    }

    pub fn deriv(&self, s: f64) -> f64 {
        match &self.repr {
            ProfileRepr::Closed { df, .. } => df(s),
            ProfileRepr::Grid(sp) => sp.eval3(s).1,
        }
    }

    pub fn second(&self, s: f64) -> f64 {
        match &self.repr {
            ProfileRepr::Closed { d2f, .. } => d2f(s),
            ProfileRepr::Grid(sp) => sp.eval3(s).2,
        }
    }

    fn bc_tol(&self) -> f64 {
        if self.is_grid() {
            GRID_BC_TOL
        } else {
            1e-12
        }
    }

    /// Checks `value(s) = want` within the representation's tolerance.
    pub fn check_boundary(&self, s: f64, want: f64) -> Result<()> {
        let got = self.value(s);
        if (got - want).abs() > self.bc_tol() * (1.0 + want.abs()) {
            return Err(Error::BoundaryConditions(format!(
                "profile `{}` has value {got} at {s}, expected {want}",
                self.name
            )));
        }
        Ok(())
    }

    pub fn identity() -> Profile {
        Profile::closed("identity", |s| s, |_| 1.0, |_| 0.0)
    }

    pub fn affine(c0: f64, c1: f64) -> Profile {
        Profile::closed(format!("affine({c0}, {c1})"), move |s| c0 + c1 * s, move |_| c1, |_| 0.0)
    }

    pub fn constant(c: f64) -> Profile {
        Profile::closed(format!("const({c})"), move |_| c, |_| 0.0, |_| 0.0)
    }

    /// `arccos(cos² s)` on `[0, π/2]`.
    pub fn arccos_cos2() -> Profile {
        Profile::closed(
            "arccos_cos2",
            |s: f64| {
                let c = s.cos();
                (s.sin() * (1.0 + c * c).sqrt()).atan2(c * c)
            },
            |s: f64| {
                let c = s.cos();
                2.0 * c / (1.0 + c * c).sqrt()
            },
            |s: f64| {
                let c = s.cos();
                -2.0 * s.sin() * (1.0 + c * c).powf(-1.5)
            },
        )
    }

    /// `4 arctan(e^{-r})`, with `f(0) = π`.
    pub fn kink() -> Profile {
        Profile::closed(
            "kink",
            |r: f64| 4.0 * (-r).exp().atan(),
            |r: f64| -2.0 / r.cosh(),
            |r: f64| 2.0 * r.sinh() / (r.cosh() * r.cosh()),
        )
    }

    /// `c0 + c1 s + ε sin(n s)`.
    pub fn trig(c0: f64, c1: f64, eps: f64, n: f64) -> Profile {
        Profile::closed(
            format!("trig({c0}, {c1}, {eps}, {n})"),
            move |s| c0 + c1 * s + eps * (n * s).sin(),
            move |s| c1 + eps * n * (n * s).cos(),
            move |s| -eps * n * n * (n * s).sin(),
        )
    }

    /// Resolves a profile specifier; bare names are looked up in `store` first.
    pub fn from_call(call: &Call, store: &HashMap<String, Profile>) -> Result<Profile> {
        if call.args.is_empty() {
            if let Some(p) = store.get(&call.name) {
                return Ok(p.clone());
            }
        }
        let nums: Vec<f64> = call.args.iter().map(Arg::number).collect::<Result<_>>()?;
        match (call.name.as_str(), nums.as_slice()) {
            ("identity", []) => Ok(Profile::identity()),
            ("zero", []) => Ok(Profile::constant(0.0)),
            ("const", [c]) => Ok(Profile::constant(*c)),
            ("affine", [c0, c1]) => Ok(Profile::affine(*c0, *c1)),
            ("arccos_cos2", []) => Ok(Profile::arccos_cos2()),
            ("kink", []) => Ok(Profile::kink()),
            ("sine", [eps, n]) => Ok(Profile::trig(0.0, 0.0, *eps, *n)),
            ("trig", [c0, c1, eps, n]) => Ok(Profile::trig(*c0, *c1, *eps, *n)),
            (name, _) => Err(Error::InvalidParameter(format!("unknown or malformed profile `{call}` ({name})"))),
        }
    }
}

/// How a family's Jacobian is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum JacobianMode {
    Analytic,
    FiniteDifference,
}

/// A smooth map between two charts.
#[derive(Clone)]
pub struct MapFamily {
    pub name: String,
    pub domain: Chart,
    pub codomain: Chart,
    pub jacobian_mode: JacobianMode,
    pub params: BTreeMap<String, f64>,
    pub profile: Option<Profile>,
    /// Coordinate on which every pointwise invariant depends, when there is one.
    pub reduced_axis: Option<usize>,
    /// Potential `A` on the domain with `dA = φ*Ω`, for maps into S².
    pub potential: Option<VectorFn>,
    /// Pointwise identities the family is known to satisfy, checked downstream.
    pub claims: Vec<String>,
    eval_fn: PointFn,
    jac_fn: Option<MatrixFn>,
}

impl fmt::Debug for MapFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MapFamily")
            .field("name", &self.name)
            .field("domain", &self.domain.name)
            .field("codomain", &self.codomain.name)
            .field("jacobian_mode", &self.jacobian_mode)
            .finish()
    }
}

impl MapFamily {
    /// A family from closures; `jac` `None` selects finite differences.
    pub fn new(
        name: impl Into<String>,
        domain: Chart,
        codomain: Chart,
        eval: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        jac: Option<MatrixFn>,
    ) -> MapFamily {
        MapFamily {
            name: name.into(),
            domain,
            codomain,
            jacobian_mode: if jac.is_some() { JacobianMode::Analytic } else { JacobianMode::FiniteDifference },
            params: BTreeMap::new(),
            profile: None,
            reduced_axis: None,
            potential: None,
            claims: Vec::new(),
            eval_fn: Arc::new(eval),
            jac_fn: jac,
        }
    }

    pub fn dim_domain(&self) -> usize {
        self.domain.dim
    }

    pub fn dim_codomain(&self) -> usize {
        self.codomain.dim
    }

    /// Image point without reducing angular coordinates.
    pub fn eval_raw(&self, x: &[f64]) -> Vec<f64> {
        (self.eval_fn)(x)
    }

    /// Image point with periodic codomain coordinates reduced into their range.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.eval_raw(x);
        for (i, yi) in y.iter_mut().enumerate() {
            if self.codomain.periodic[i] {
                let (a, b) = self.codomain.coord_ranges[i];
                *yi = a + (*yi - a).rem_euclid(b - a);
            }
        }
        y
    }

    /// Central-difference Jacobian of the raw evaluation.
    pub fn jacobian_fd(&self, x: &[f64], h: f64) -> DMatrix<f64> {
        let (m, n) = (self.dim_domain(), self.dim_codomain());
        let mut j = DMatrix::zeros(n, m);
        let mut xp = x.to_vec();
        for a in 0..m {
            xp[a] = x[a] + h;
            let fp = self.eval_raw(&xp);
            xp[a] = x[a] - h;
            let fm = self.eval_raw(&xp);
            xp[a] = x[a];
            for b in 0..n {
                j[(b, a)] = (fp[b] - fm[b]) / (2.0 * h);
            }
        }
        j
    }

    /// Jacobian without singular-locus checks.
    pub fn jacobian_unchecked(&self, x: &[f64]) -> DMatrix<f64> {
        match &self.jac_fn {
            Some(f) => f(x),
            None => self.jacobian_fd(x, FD_STEP),
        }
    }

    /// Components of `dφ` (n×m), refusing points near either chart's singular locus.
    pub fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.domain.check_regular(x, 0.0)?;
        let y = self.eval_raw(x);
        self.codomain.check_regular(&y, FD_STEP)?;
        let j = self.jacobian_unchecked(x);
        if j.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "Jacobian".into(), point: x.to_vec() });
        }
        Ok(j)
    }

    /// Pullback metric `φ*h` in domain coordinates.
    pub fn pullback_metric(&self, x: &[f64]) -> DMatrix<f64> {
        let j = self.jacobian_unchecked(x);
        let h = self.codomain.metric(&self.eval_raw(x));
        j.transpose() * h * j
    }

    /// Same map with its domain chart replaced (for deformations of the domain metric).
    pub fn with_domain(&self, domain: Chart) -> MapFamily {
        MapFamily { name: format!("{} on {}", self.name, domain.name), domain, ..self.clone() }
    }

    /// Same map on the domain deformed by `deform`.
    pub fn deformed(&self, deform: &Deformation) -> Result<MapFamily> {
        Ok(self.with_domain(deform_metric(&self.domain, deform)?))
    }

    /// Interior sample points away from both ends of every coordinate range.
    pub fn random_interior_points(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                self.domain
                    .coord_ranges
                    .iter()
                    .map(|&(a, b)| a + (b - a) * rng.random_range(0.02..0.98))
                    .collect()
            })
            .collect()
    }

    /// Analytic vs finite-difference Jacobian on seeded random interior points.
    pub fn self_test(&self, n: usize, seed: u64) -> Result<f64> {
        if self.jac_fn.is_none() {
            return Ok(0.0);
        }
        let mut worst: f64 = 0.0;
        for x in self.random_interior_points(n, seed) {
            let ja = self.jacobian_unchecked(&x);
            let jf = self.jacobian_fd(&x, FD_STEP);
            let err = (&ja - &jf).amax() / ja.amax().max(1.0);
            if !err.is_finite() || err > SELF_TEST_TOL {
                return Err(Error::JacobianSelfTest { family: self.name.clone(), point: x, error: err });
            }
            worst = worst.max(err);
        }
        Ok(worst)
    }

    fn param(mut self, key: &str, v: f64) -> Self {
        self.params.insert(key.to_string(), v);
        self
    }
}

/// `(φ*ω)(x) = ω(φ(x)) ∘ dφ(x)`.
pub fn pullback_oneform(map: &MapFamily, omega: &(dyn Fn(&[f64]) -> DVector<f64> + Send + Sync), x: &[f64]) -> Result<DVector<f64>> {
    let j = map.jacobian(x)?;
    let w = omega(&map.eval_raw(x));
    Ok(j.transpose() * w)
}

/// `φ*Ω` for maps into a target carrying an area form, as antisymmetric components.
pub fn pullback_area_form(map: &MapFamily, x: &[f64]) -> Result<DMatrix<f64>> {
    let omega = map.codomain.area_form.clone().ok_or_else(|| {
        Error::InvalidParameter(format!("codomain `{}` carries no area form", map.codomain.name))
    })?;
    let j = map.jacobian(x)?;
    Ok(j.transpose() * omega(&map.eval_raw(x)) * j)
}

/// Unchecked variant used on quadrature nodes.
pub(crate) fn pullback_area_form_unchecked(map: &MapFamily, x: &[f64]) -> Option<DMatrix<f64>> {
    let omega = map.codomain.area_form.clone()?;
    let j = map.jacobian_unchecked(x);
    Some(j.transpose() * omega(&map.eval_raw(x)) * j)
}

/// `‖dA − φ*Ω‖∞` at `x`, with `dA` by central differences.
pub fn potential_defect(map: &MapFamily, potential: &VectorFn, x: &[f64]) -> Option<f64> {
    let f = pullback_area_form_unchecked(map, x)?;
    let da = exterior_derivative(&**potential, x, FD_STEP);
    Some((da - f).amax())
}

fn diag(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(v))
}

fn nonzero_integer(v: f64, what: &str) -> Result<f64> {
    if v == 0.0 || v.fract() != 0.0 {
        return Err(Error::InvalidParameter(format!("{what} must be a nonzero integer, got {v}")));
    }
    Ok(v)
}

fn chart(spec: ChartSpec) -> Chart {
    make_chart(spec).expect("catalogued chart")
}

/// Skyrme's hedgehog `(r, t, x) ↦ (f(r), t, x)` from the truncated ball into S³.
pub fn hedgehog(f: Profile) -> Result<MapFamily> {
    f.check_boundary(0.0, PI)?;
    let tail = f.value(R_MAX).abs();
    if tail >= 1e-3 {
        return Err(Error::BoundaryConditions(format!("hedgehog profile has |f(r_max)| = {tail} ≥ 1e-3")));
    }
    let (fe, fj) = (f.clone(), f.clone());
    let mut m = MapFamily::new(
        format!("hedgehog({})", f.name),
        chart(ChartSpec::R3Spherical),
        chart(ChartSpec::S3Suspension(1.0)),
        move |x| vec![fe.value(x[0]), x[1], x[2]],
        Some(Arc::new(move |x: &[f64]| diag(&[fj.deriv(x[0]), 1.0, 1.0]))),
    );
    m.profile = Some(f);
    m.reduced_axis = Some(0);
    Ok(m)
}

/// Transverse map of a suspension: `(t, x) ↦ (q, r)` with partial derivatives.
pub type TransverseFn = Arc<dyn Fn(f64, f64) -> ([f64; 2], [[f64; 2]; 2]) + Send + Sync>;

/// Suspension `(s, t, x) ↦ (f(s), q(t,x), r(t,x))` with user-supplied transverse part.
pub fn suspension_custom(name: &str, f: Profile, transverse: TransverseFn, reduced: bool) -> Result<MapFamily> {
    for end in [0.0, PI] {
        let v = f.value(end);
        let k = (v / PI).round();
        if (v - k * PI).abs() > f.bc_tol() * (1.0 + v.abs()) {
            return Err(Error::BoundaryConditions(format!("suspension profile f({end}) = {v} is not a multiple of π")));
        }
    }
    let (fe, fj) = (f.clone(), f.clone());
    let (te, tj) = (transverse.clone(), transverse);
    let mut m = MapFamily::new(
        name,
        chart(ChartSpec::S3Suspension(1.0)),
        chart(ChartSpec::S3Suspension(1.0)),
        move |x| {
            let ([q, r], _) = te(x[1], x[2]);
            vec![fe.value(x[0]), q, r]
        },
        Some(Arc::new(move |x: &[f64]| {
            let (_, d) = tj(x[1], x[2]);
            DMatrix::from_row_slice(3, 3, &[fj.deriv(x[0]), 0.0, 0.0, 0.0, d[0][0], d[0][1], 0.0, d[1][0], d[1][1]])
        })),
    );
    m.profile = Some(f);
    if reduced {
        m.reduced_axis = Some(0);
    }
    Ok(m)
}

/// Suspension of the `k`-fold map `(t, x) ↦ (t, kx)`; `k = 1` is the suspended identity.
pub fn suspension(f: Profile, k: f64) -> Result<MapFamily> {
    let k = nonzero_integer(k, "suspension fold k")?;
    let name = format!("suspension({}, {k})", f.name);
    let m = suspension_custom(&name, f, Arc::new(move |t, x| ([t, k * x], [[1.0, 0.0], [0.0, k]])), true)?;
    Ok(m.param("k", k))
}

/// α-join `(x₁, x₂, s) ↦ (k x₁, ℓ x₂, α(s))` on the join chart.
pub fn alpha_join(alpha: Profile, k: f64, l: f64) -> Result<MapFamily> {
    let k = nonzero_integer(k, "alpha_join k")?;
    let l = nonzero_integer(l, "alpha_join l")?;
    alpha.check_boundary(0.0, 0.0)?;
    alpha.check_boundary(PI / 2.0, PI / 2.0)?;
    let (ae, aj) = (alpha.clone(), alpha.clone());
    let mut m = MapFamily::new(
        format!("alpha_join({}, {k}, {l})", alpha.name),
        chart(ChartSpec::S3Join(1.0)),
        chart(ChartSpec::S3Join(1.0)),
        move |x| vec![k * x[0], l * x[1], ae.value(x[2])],
        Some(Arc::new(move |x: &[f64]| diag(&[k, l, aj.deriv(x[2])]))),
    );
    if alpha.name == "arccos_cos2" && k == 2.0 && l == 1.0 {
        m.claims.push("lambda3^2 = lambda1^2 * lambda2^2 pointwise".into());
    }
    m.profile = Some(alpha);
    m.reduced_axis = Some(2);
    Ok(m.param("k", k).param("l", l))
}

/// Nomizu-equivariant `(θ, s, μ) ↦ (kθ, α(s), μ)` on the unit-tangent chart.
pub fn nomizu(alpha: Profile, k: f64) -> Result<MapFamily> {
    let k = nonzero_integer(k, "nomizu k")?;
    if (k as i64) % 2 == 0 {
        return Err(Error::InvalidParameter(format!("nomizu needs odd k, got {k}")));
    }
    alpha.check_boundary(0.0, 0.0)?;
    alpha.check_boundary(PI / 4.0, PI / 4.0)?;
    let (ae, aj) = (alpha.clone(), alpha.clone());
    let mut m = MapFamily::new(
        format!("nomizu({}, {k})", alpha.name),
        chart(ChartSpec::S3UnitTangent(1.0)),
        chart(ChartSpec::S3UnitTangent(1.0)),
        move |x| vec![k * x[0], ae.value(x[1]), x[2]],
        Some(Arc::new(move |x: &[f64]| diag(&[k, aj.deriv(x[1]), 1.0]))),
    );
    m.profile = Some(alpha);
    m.reduced_axis = Some(1);
    Ok(m.param("k", k))
}

/// `(θ, s, μ) ↦ (γ(s), kμ)` from the unit-tangent chart onto S².
///
/// The potential is `A = (k/2)(ε dθ + cos γ(s) dμ)` with `ε = cos γ(π/4)`,
/// which is `(k/2)η` for `γ = π/2 − 2s`.
pub fn gamma_hopf(gamma: Profile, k: f64) -> Result<MapFamily> {
    let k = nonzero_integer(k, "gamma_hopf k")?;
    let end = gamma.value(PI / 4.0);
    let eps = end.cos();
    if (eps.abs() - 1.0).abs() > 1e-10 {
        return Err(Error::BoundaryConditions(format!("gamma_hopf profile must end at 0 or π, γ(π/4) = {end}")));
    }
    let (ge, gj, gp) = (gamma.clone(), gamma.clone(), gamma.clone());
    let mut m = MapFamily::new(
        format!("gamma_hopf({}, {k})", gamma.name),
        chart(ChartSpec::S3UnitTangent(1.0)),
        chart(ChartSpec::S2),
        move |x| vec![ge.value(x[1]), k * x[2]],
        Some(Arc::new(move |x: &[f64]| DMatrix::from_row_slice(2, 3, &[0.0, gj.deriv(x[1]), 0.0, 0.0, 0.0, k]))),
    );
    m.potential = Some(Arc::new(move |x: &[f64]| {
        DVector::from_vec(vec![0.5 * k * eps, 0.0, 0.5 * k * gp.value(x[1]).cos()])
    }));
    m.profile = Some(gamma);
    m.reduced_axis = Some(1);
    Ok(m.param("k", k))
}

/// α-Hopf construction `(x₁, x₂, s) ↦ (α(s), k x₁ + ℓ x₂)`, on the `g_{k,ℓ}` domain.
///
/// Potential `A = (k/2)(1 + cos α) dx₁ − (ℓ/2)(1 − cos α) dx₂`, equal to `η_{k,ℓ}` for `α = 2s`.
pub fn alpha_hopf(alpha: Profile, k: f64, l: f64) -> Result<MapFamily> {
    let k = nonzero_integer(k, "alpha_hopf k")?;
    let l = nonzero_integer(l, "alpha_hopf l")?;
    alpha.check_boundary(0.0, 0.0)?;
    alpha.check_boundary(PI / 2.0, PI)?;
    let domain = deform_metric(&chart(ChartSpec::S3Join(1.0)), &Deformation::HopfSquash { k, l })?;
    let (ae, aj, ap) = (alpha.clone(), alpha.clone(), alpha.clone());
    let mut m = MapFamily::new(
        format!("alpha_hopf({}, {k}, {l})", alpha.name),
        domain,
        chart(ChartSpec::S2),
        move |x| vec![ae.value(x[2]), k * x[0] + l * x[1]],
        Some(Arc::new(move |x: &[f64]| DMatrix::from_row_slice(2, 3, &[0.0, 0.0, aj.deriv(x[2]), k, l, 0.0]))),
    );
    m.potential = Some(Arc::new(move |x: &[f64]| {
        let c = ap.value(x[2]).cos();
        DVector::from_vec(vec![0.5 * k * (1.0 + c), -0.5 * l * (1.0 - c), 0.0])
    }));
    m.profile = Some(alpha);
    m.reduced_axis = Some(2);
    Ok(m.param("k", k).param("l", l))
}

/// Which sphere parameterization the identity family uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SphereChart {
    Join,
    Suspension,
    UnitTangent,
}

/// Homothetic identity from the sphere of radius `1/λ` onto the unit sphere.
pub fn identity(lambda: f64, which: SphereChart) -> Result<MapFamily> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("identity dilation must be positive, got {lambda}")));
    }
    let (dom, cod, axis) = match which {
        SphereChart::Join => (ChartSpec::S3Join(1.0 / lambda), ChartSpec::S3Join(1.0), 2),
        SphereChart::Suspension => (ChartSpec::S3Suspension(1.0 / lambda), ChartSpec::S3Suspension(1.0), 0),
        SphereChart::UnitTangent => (ChartSpec::S3UnitTangent(1.0 / lambda), ChartSpec::S3UnitTangent(1.0), 1),
    };
    let mut m = MapFamily::new(
        format!("identity({lambda})"),
        chart(dom),
        chart(cod),
        |x| x.to_vec(),
        Some(Arc::new(|x: &[f64]| DMatrix::identity(x.len(), x.len()))),
    );
    m.reduced_axis = Some(axis);
    Ok(m.param("lambda", lambda))
}

/// Hénon map `(x, y) ↦ (y + 1 − a x², b x)`.
pub fn henon(a: f64, b: f64) -> Result<MapFamily> {
    if b == 0.0 {
        return Err(Error::InvalidParameter("henon needs b ≠ 0".into()));
    }
    let m = MapFamily::new(
        format!("henon({a}, {b})"),
        chart(ChartSpec::R2Flat),
        chart(ChartSpec::R2Flat),
        move |x| vec![x[1] + 1.0 - a * x[0] * x[0], b * x[0]],
        Some(Arc::new(move |x: &[f64]| DMatrix::from_row_slice(2, 2, &[-2.0 * a * x[0], 1.0, b, 0.0]))),
    );
    Ok(m.param("a", a).param("b", b))
}

/// Contact homothety `(x, y, z) ↦ (a x, a y, a² z)` of the Heisenberg group.
pub fn heis_dilation(a: f64) -> Result<MapFamily> {
    if !(a > 0.0) {
        return Err(Error::InvalidParameter(format!("heis_dilation needs a > 0, got {a}")));
    }
    let m = MapFamily::new(
        format!("heis_dilation({a})"),
        chart(ChartSpec::Heisenberg),
        chart(ChartSpec::Heisenberg),
        move |x| vec![a * x[0], a * x[1], a * a * x[2]],
        Some(Arc::new(move |_: &[f64]| diag(&[a, a, a * a]))),
    );
    Ok(m.param("a", a))
}

/// Shift contactomorphism `(x, y, z) ↦ (x, a y + f′(x), a z + f(x))`.
pub fn heis_shift(f: Profile, a: f64) -> Result<MapFamily> {
    if !(a > 0.0) {
        return Err(Error::InvalidParameter(format!("heis_shift needs a > 0, got {a}")));
    }
    let (fe, fj) = (f.clone(), f.clone());
    let mut m = MapFamily::new(
        format!("heis_shift({}, {a})", f.name),
        chart(ChartSpec::Heisenberg),
        chart(ChartSpec::Heisenberg),
        move |x| vec![x[0], a * x[1] + fe.deriv(x[0]), a * x[2] + fe.value(x[0])],
        Some(Arc::new(move |x: &[f64]| {
            let (d1, d2) = (fj.deriv(x[0]), fj.second(x[0]));
            DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, d2, a, 0.0, d1, 0.0, a])
        })),
    );
    m.profile = Some(f);
    Ok(m.param("a", a))
}

/// `∫₀^z tan s · f′(s) ds` by composite Gauss–Legendre.
fn tan_weighted_integral(f: &Profile, z: f64) -> f64 {
    if z == 0.0 {
        return 0.0;
    }
    let panels = ((z.abs() / (PI / 4.0)).ceil() as usize).max(1);
    let h = z / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let (a, b) = (p as f64 * h, (p + 1) as f64 * h);
        let (xs, ws) = gauss_legendre_on(24, a.min(b), a.max(b));
        let sign = if b >= a { 1.0 } else { -1.0 };
        acc += sign * xs.iter().zip(&ws).map(|(s, w)| w * s.tan() * f.deriv(*s)).sum::<f64>();
    }
    acc
}

/// Torus contactomorphism `(x, y, z) ↦ (a x − ∫₀^z tan s f′(s) ds, a y + f(z), z)`.
///
/// `f′` must vanish where `tan` has its poles; `f = ε sin(n z)` with odd `n` qualifies.
pub fn torus_contacto(f: Profile, a: f64) -> Result<MapFamily> {
    if a == 0.0 || !a.is_finite() {
        return Err(Error::InvalidParameter("torus_contacto needs a ≠ 0".into()));
    }
    if (f.value(0.0) - f.value(2.0 * PI)).abs() > 1e-10 {
        return Err(Error::BoundaryConditions(format!("torus_contacto profile `{}` is not 2π-periodic", f.name)));
    }
    for pole in [PI / 2.0, 1.5 * PI] {
        if f.deriv(pole).abs() > 1e-10 {
            return Err(Error::BoundaryConditions(format!(
                "torus_contacto profile `{}` needs f′ = 0 at {pole}",
                f.name
            )));
        }
    }
    let (fe, fj) = (f.clone(), f.clone());
    let mut m = MapFamily::new(
        format!("torus_contacto({}, {a})", f.name),
        chart(ChartSpec::T3Flat),
        chart(ChartSpec::T3Flat),
        move |x| vec![a * x[0] - tan_weighted_integral(&fe, x[2]), a * x[1] + fe.value(x[2]), x[2]],
        Some(Arc::new(move |x: &[f64]| {
            let d = fj.deriv(x[2]);
            DMatrix::from_row_slice(3, 3, &[a, 0.0, -x[2].tan() * d, 0.0, a, d, 0.0, 0.0, 1.0])
        })),
    );
    if a.fract() != 0.0 {
        m.claims.push("a is not an integer: the map does not descend to the torus; only pointwise checks apply".into());
    }
    m.claims.push("lambda1^2 = lambda2^2 * lambda3^2 = a^2 pointwise".into());
    m.profile = Some(f);
    Ok(m.param("a", a))
}

/// `∫₀^μ 1/A` by composite Gauss–Legendre.
fn inverse_integral(a: &Profile, mu: f64) -> f64 {
    let panels = ((mu.abs() / (PI / 4.0)).ceil() as usize).max(1);
    let h = mu / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let (lo, hi) = (p as f64 * h, (p + 1) as f64 * h);
        let sign = if hi >= lo { 1.0 } else { -1.0 };
        let (xs, ws) = gauss_legendre_on(24, lo.min(hi), lo.max(hi));
        acc += sign * xs.iter().zip(&ws).map(|(t, w)| w / a.value(*t)).sum::<f64>();
    }
    acc
}

/// Sphere contactomorphism `(θ, s, μ) ↦ (kθ, ½ arcsin(k A(μ) sin 2s), ∫₀^μ 1/A)`.
pub fn sphere_contacto(a: Profile, k: f64) -> Result<MapFamily> {
    if k == 0.0 {
        return Err(Error::InvalidParameter("sphere_contacto needs k ≠ 0".into()));
    }
    let (xs, _) = gauss_legendre_on(256, 0.0, 2.0 * PI);
    let max_a = xs.iter().map(|&t| a.value(t).abs()).fold(0.0, f64::max);
    let min_a = xs.iter().map(|&t| a.value(t).abs()).fold(f64::INFINITY, f64::min);
    if min_a < 1e-8 {
        return Err(Error::InvalidParameter(format!("sphere_contacto needs A without zeros (min |A| = {min_a})")));
    }
    if k.abs() * max_a >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "sphere_contacto needs |k|·max|A| < 1, got {}",
            k.abs() * max_a
        )));
    }
    let (ae, aj) = (a.clone(), a.clone());
    let mut m = MapFamily::new(
        format!("sphere_contacto({}, {k})", a.name),
        chart(ChartSpec::S3UnitTangent(1.0)),
        chart(ChartSpec::S3UnitTangent(1.0)),
        move |x| {
            let v = k * ae.value(x[2]) * (2.0 * x[1]).sin();
            vec![k * x[0], 0.5 * v.asin(), inverse_integral(&ae, x[2])]
        },
        Some(Arc::new(move |x: &[f64]| {
            let (s, mu) = (x[1], x[2]);
            let (av, ad) = (aj.value(mu), aj.deriv(mu));
            let v = k * av * (2.0 * s).sin();
            let root = (1.0 - v * v).sqrt();
            let ds = k * av * (2.0 * s).cos() / root;
            let dmu = 0.5 * k * ad * (2.0 * s).sin() / root;
            DMatrix::from_row_slice(3, 3, &[k, 0.0, 0.0, 0.0, ds, dmu, 0.0, 0.0, 1.0 / av])
        })),
    );
    m.profile = Some(a);
    Ok(m.param("k", k))
}

/// `(u, v) ↦ (u, k v)` on S².
pub fn degree_k_sphere_map(k: f64) -> Result<MapFamily> {
    let k = nonzero_integer(k, "degree_k_sphere_map k")?;
    let mut m = MapFamily::new(
        format!("degree_k_sphere_map({k})"),
        chart(ChartSpec::S2),
        chart(ChartSpec::S2),
        move |x| vec![x[0], k * x[1]],
        Some(Arc::new(move |_: &[f64]| diag(&[1.0, k]))),
    );
    m.reduced_axis = Some(0);
    Ok(m.param("k", k))
}

/// Constant map of the unit join sphere to a point of S³.
pub fn constant_s3() -> MapFamily {
    let mut m = MapFamily::new(
        "constant",
        chart(ChartSpec::S3Join(1.0)),
        chart(ChartSpec::S3Join(1.0)),
        |_| vec![0.0, 0.0, PI / 4.0],
        Some(Arc::new(|_: &[f64]| DMatrix::zeros(3, 3))),
    );
    m.reduced_axis = Some(2);
    m
}

/// Constant map of the unit join sphere to a point of S², with zero potential.
pub fn constant_s2() -> MapFamily {
    let mut m = MapFamily::new(
        "constant_s2",
        chart(ChartSpec::S3Join(1.0)),
        chart(ChartSpec::S2),
        |_| vec![PI / 2.0, 0.0],
        Some(Arc::new(|_: &[f64]| DMatrix::zeros(2, 3))),
    );
    m.potential = Some(Arc::new(|_: &[f64]| DVector::zeros(3)));
    m.reduced_axis = Some(2);
    m
}

/// A generic diffeomorphism of the flat 4-torus, `x_i ↦ x_i + ε sin(x_{i+1} + 2x_{i+2} + i)`.
pub fn torus_wave(eps: f64) -> Result<MapFamily> {
    if eps.abs() >= 0.3 {
        return Err(Error::InvalidParameter(format!("torus_wave needs |ε| < 0.3, got {eps}")));
    }
    let phase = |x: &[f64], i: usize| x[(i + 1) % 4] + 2.0 * x[(i + 2) % 4] + i as f64;
    let m = MapFamily::new(
        format!("torus_wave({eps})"),
        chart(ChartSpec::FlatTorus(4)),
        chart(ChartSpec::FlatTorus(4)),
        move |x| (0..4).map(|i| x[i] + eps * phase(x, i).sin()).collect(),
        Some(Arc::new(move |x: &[f64]| {
            let mut j = DMatrix::identity(4, 4);
            for i in 0..4 {
                let c = eps * phase(x, i).cos();
                j[(i, (i + 1) % 4)] += c;
                j[(i, (i + 2) % 4)] += 2.0 * c;
            }
            j
        })),
    );
    Ok(m.param("eps", eps))
}

/// Builds and self-tests the family named by `spec`.
pub fn make_map(spec: &str) -> Result<MapFamily> {
    make_map_with(spec, &HashMap::new())
}

/// As [`make_map`], resolving bare profile names through `profiles` first.
pub fn make_map_with(spec: &str, profiles: &HashMap<String, Profile>) -> Result<MapFamily> {
    let call = parse_specifier(spec)?;
    let map = family_from_call(&call, profiles)?;
    map.self_test(SELF_TEST_POINTS, 0x5eed)?;
    Ok(MapFamily { name: spec.trim().to_string(), ..map })
}

fn family_from_call(call: &Call, profiles: &HashMap<String, Profile>) -> Result<MapFamily> {
    let args = &call.args;
    let prof = |i: usize| -> Result<Profile> {
        let a = args.get(i).ok_or_else(|| Error::InvalidParameter(format!("`{}` is missing argument {}", call.name, i + 1)))?;
        Profile::from_call(a.call()?, profiles)
    };
    let num = |i: usize| -> Result<f64> {
        args.get(i)
            .ok_or_else(|| Error::InvalidParameter(format!("`{}` is missing argument {}", call.name, i + 1)))?
            .number()
    };
    let arity = |n: usize| -> Result<()> {
        if args.len() == n {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("`{}` takes {n} arguments, got {}", call.name, args.len())))
        }
    };
    match call.name.as_str() {
        "hedgehog" => {
            if args.is_empty() {
                hedgehog(Profile::kink())
            } else {
                arity(1)?;
                hedgehog(prof(0)?)
            }
        }
        "suspension" => {
            arity(2)?;
            suspension(prof(0)?, num(1)?)
        }
        "alpha_join" => {
            arity(3)?;
            alpha_join(prof(0)?, num(1)?, num(2)?)
        }
        "nomizu" => {
            arity(2)?;
            nomizu(prof(0)?, num(1)?)
        }
        "gamma_hopf" => {
            arity(2)?;
            gamma_hopf(prof(0)?, num(1)?)
        }
        "alpha_hopf" => {
            arity(3)?;
            alpha_hopf(prof(0)?, num(1)?, num(2)?)
        }
        "identity" => {
            let lambda = if args.is_empty() { 1.0 } else { num(0)? };
            let which = match args.get(1) {
                None => SphereChart::Join,
                Some(a) => match a.call()?.name.as_str() {
                    "join" | "s3_join" => SphereChart::Join,
                    "suspension" | "s3_suspension" => SphereChart::Suspension,
                    "unit_tangent" | "s3_unit_tangent" => SphereChart::UnitTangent,
                    other => return Err(Error::UnknownChart(other.to_string())),
                },
            };
            if args.len() > 2 {
                return Err(Error::InvalidParameter("identity takes at most 2 arguments".into()));
            }
            identity(lambda, which)
        }
        "henon" => {
            arity(2)?;
            henon(num(0)?, num(1)?)
        }
        "heis_dilation" => {
            arity(1)?;
            heis_dilation(num(0)?)
        }
        "heis_shift" => {
            arity(2)?;
            heis_shift(prof(0)?, num(1)?)
        }
        "torus_contacto" => {
            arity(2)?;
            torus_contacto(prof(0)?, num(1)?)
        }
        "sphere_contacto" => {
            arity(2)?;
            sphere_contacto(prof(0)?, num(1)?)
        }
        "degree_k_sphere_map" => {
            arity(1)?;
            degree_k_sphere_map(num(0)?)
        }
        "constant" => {
            arity(0)?;
            Ok(constant_s3())
        }
        "constant_s2" => {
            arity(0)?;
            Ok(constant_s2())
        }
        "torus_wave" => {
            arity(1)?;
            torus_wave(num(0)?)
        }
        other => Err(Error::UnknownFamily(other.to_string())),
    }
}
