//! Tangent-point energies of closed curves: discretization, variations and
//! constrained gradient flows in fractional Sobolev spaces.

pub mod constraint;
pub mod curve;
pub mod energy;
pub mod error;
pub mod field;
pub mod flow;
mod pairs;
pub mod quadrature;
pub mod reference;
pub mod sobolev;
pub mod spectral;
pub mod variation;
pub mod verify;

pub use constraint::{constrained_gradient, ConstrainedGradient, ConstraintSystem, KktMethod};
pub use curve::DiscreteCurve;
pub use energy::TangentPointEnergy;
pub use error::{Error, Result};
pub use field::{Covector, DisplacementField, Field};
pub use flow::{run_flow, Flow, FlowConfig, FlowRun, FlowTrace, Termination};
pub use quadrature::{QuadratureGrid, QuadratureOptions};
pub use sobolev::{SobolevOrder, SobolevSpace};
pub use spectral::{Multiplier, SpectralGrid};
pub use variation::{FormKind, FormMatrix};
