//! Frame operators, Weaver-type partitions, Lyapunov subset selection and
//! sampling of continuous frames, all with checkable certificates.

pub mod certificate;
pub mod continuous;
pub mod error;
pub mod exemplars;
pub mod frame;
pub mod json;
pub mod lyapunov;
pub mod operator;
pub mod partition;
pub mod sampler;

pub use continuous::{CellPortion, ContinuousFrameModel, Generator, MeasureCell};
pub use error::{ErrorClass, FrameError, Result};
pub use frame::{FrameBoundsReport, FrameSystem};
pub use operator::{ComplexVector, HermitianOperator, SpectralDecomposition};
pub use partition::{PartitionCertificate, PartitionSpec, SearchConfig, SearchMode};
