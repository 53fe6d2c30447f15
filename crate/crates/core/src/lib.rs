//! Simulation and verification of generalized universal blind quantum
//! computation: a client hides layers of diagonal unitaries interleaved
//! with Hadamard layers from the server executing them.
//!
//! - [`qsim`]: dense statevector simulator for the protocol's gate set.
//! - [`diaggroup`]: the diagonal unitary group and its finite subgroups.
//! - [`protocol`]: client and server state machines, messages, wire
//!   format and transports.
//! - [`analyzer`]: reference oracle, correctness and blindness verifiers.
//! - [`bounds`]: closed-form bounds on hidden gates per transmitted qubit.

pub mod analyzer;
pub mod bits;
pub mod bounds;
pub mod diaggroup;
pub mod protocol;
pub mod qsim;

pub use analyzer::{BlindnessReport, CorrectnessReport, ReferenceResult, TeleportReport};
pub use bits::BitString;
pub use bounds::{GammaBounds, Setting};
pub use diaggroup::{DiagonalUnitary, SubgroupKind, SubgroupSpec};
pub use protocol::{
    Computation, OutputMode, ProtocolError, ProtocolMessage, SecretKey, Seeds, SessionOutput, SessionTranscript,
};
pub use qsim::{DensityMatrix, MeasurementBranch, StateVector};
