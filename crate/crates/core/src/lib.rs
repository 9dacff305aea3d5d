//! Numerical toolkit for unique continuation across the intersection of two
//! characteristic hypersurfaces of a second-order operator with Lorentzian
//! principal symbol `p(x, ξ) = ⟨Q(x)ξ, ξ⟩`.
//!
//! - [`geometry`]: symbol, Poisson brackets `H_pψ`, `H_p²ψ`, charts.
//! - [`hypotheses`]: sampling of `Σ±` and checks of the structural
//!   hypotheses (manifold, transversality, characteristic, sign).
//! - [`certifier`]: pseudo-convexity certificates for `ψ₁ − λψ₀²`.
//! - [`rays`]: null bicharacteristics and their contact with level sets.
//! - [`corner`], [`mollifier`]: extension by zero across the corner in weak
//!   form, and the Friedrichs commutator for kinked `H¹` functions.
//! - [`carleman`]: discrete Carleman ratios and λ sweeps.
//! - [`models`]: the flat model, a conformal variant, the flattening chart
//!   and negative controls.

pub mod bump;
pub mod carleman;
pub mod certifier;
pub mod corner;
pub mod error;
pub mod expr;
pub mod field;
pub mod geometry;
pub mod grid;
pub mod hypotheses;
pub mod models;
pub mod mollifier;
pub mod rays;
pub mod report;
pub mod sphere;

pub use bump::TensorBump;
pub use carleman::{CarlemanReport, CarlemanSample, LowerOrder, WeightSpec};
pub use certifier::{Certificate, CertificateStatus};
pub use corner::{BMatrixField, CornerField};
pub use error::{Error, Result};
pub use expr::Expr;
pub use field::{BoxRegion, MetricField, Point, ScalarField};
pub use geometry::{Chart, PhasePoint, Signature};
pub use grid::{Grid, GridFunction};
pub use hypotheses::{CheckResult, GeometrySpec, HypothesisReport, Status};
pub use models::ModelSpec;
pub use rays::{ContactReport, RayTrajectory, Side};
