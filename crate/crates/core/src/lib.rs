//! Numerical evaluation of σ₁, σ₂ and coupled energies of maps between model
//! Riemannian manifolds, their Euler–Lagrange residuals and second variations.

pub mod distortion;
pub mod energy;
pub mod error;
pub mod euler_lagrange;
pub mod geometry;
pub mod linalg;
pub mod map_zoo;
pub mod spec;
pub mod stability;

pub use error::{Error, Result};
pub use geometry::{
    connection_coeffs, deform_metric, make_chart, make_chart_str, ricci_form, Chart, ChartKind, ChartSpec,
    ContactData, Deformation, FrameField, Gamma, Splitting,
};
pub use map_zoo::{make_map, make_map_with, pullback_area_form, pullback_oneform, JacobianMode, MapFamily, Profile};
pub use distortion::{analyze_point, classify, four_energy_density, ClassFlags, DistortionData};
pub use energy::{
    bounds_report, contact_degree, degree, full_report, hopf_invariant, integrate_energy, minimize_over_radius, EnergyReport, QuadOrders,
    QuadratureRule, KAPPA_CAL,
};
pub use euler_lagrange::{
    conformal_invariance_check, minimize_profile, nomizu_residual, residual_2target, residual_3target, residual_4harmonic,
    residual_contact, ResidualReport,
};
pub use stability::{
    hessian_homothety, hessian_hopf, threshold_scan, vector_calculus, Generator, HessianForm, HessianReport, ThresholdScan, VariationField,
};
