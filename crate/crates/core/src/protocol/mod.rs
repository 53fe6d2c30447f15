//! The blind protocol between a client (Alice) with a limited device and a
//! server (Bob) with a full quantum computer.
//!
//! Alice hides `m` layers `U_1 … U_m` drawn from a diagonal subgroup. Per
//! layer she sends `Z^{r_i} D_i |+>^{⊗n}` with a random pad `D_i` and
//! random `r_i`, Bob links consecutive registers qubit-by-qubit with CZ,
//! and then for each layer Alice reveals `C_i = D_i† · X^{c_i} U_i X^{c_i}`
//! while Bob applies it and measures that register in the Hadamard basis.
//! The correction bits `c_i` fold earlier outcomes back in, so the net
//! effect is `H U_m … H U_1 |+>^{⊗n}` while Bob only ever sees uniformly
//! random instructions and maximally mixed registers.
//!
//! Both parties are sans-IO state machines ([`AliceMachine`],
//! [`BobMachine`]); [`transport`] moves their messages and [`session`]
//! drives complete runs.

mod alice;
mod bob;
mod message;
pub mod session;
pub mod transcript;
pub mod transport;
pub mod wire;

pub use alice::{AliceMachine, AliceStep};
pub use bob::{BobBranch, BobMachine};
pub use message::{OutputMode, ProtocolMessage};
pub use session::{enumerate_session, run_session, run_session_with_key, Seeds, SessionOutput};
pub use transcript::{SessionResult, SessionTranscript};

use rand::Rng;
use thiserror::Error;

use crate::bits::BitString;
use crate::diaggroup::{DiagError, DiagonalUnitary, SubgroupSpec};
use crate::qsim::{PauliAxis, SimError, StateVector, DEFAULT_MAX_QUBITS};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("protocol violation: expected {expected}, received {found}")]
    UnexpectedMessage { expected: String, found: &'static str },
    #[error("layer {found} out of order (expected {expected})")]
    LayerOrder { expected: usize, found: usize },
    #[error("register {0} measured twice")]
    DoubleMeasurement(usize),
    #[error("message width {found} does not match session width {expected}")]
    Width { expected: usize, found: usize },
    #[error("session of {n}×{m} qubits exceeds simulator cap of {cap}")]
    SessionSize { n: usize, m: usize, cap: usize },
    #[error("invalid computation: {0}")]
    Computation(String),
    #[error("missing outcome history for layer {0}")]
    MissingHistory(usize),
    #[error("session already finished")]
    Finished,
    #[error("transport closed before the session finished")]
    Closed,
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Diag(#[from] DiagError),
    #[error(transparent)]
    Decode(#[from] wire::DecodeError),
    #[error("transport i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Public shape `(n, m)` and Alice's secret layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Computation {
    n: usize,
    layers: Vec<DiagonalUnitary>,
    output_mode: OutputMode,
}

impl Computation {
    pub fn new(layers: Vec<DiagonalUnitary>, output_mode: OutputMode) -> Result<Self, ProtocolError> {
        let first = layers
            .first()
            .ok_or_else(|| ProtocolError::Computation("at least one layer is required".into()))?;
        let n = first.num_qubits();
        if let Some((i, bad)) = layers.iter().enumerate().find(|(_, u)| u.num_qubits() != n) {
            return Err(ProtocolError::Computation(format!(
                "layer {} acts on {} qubits, layer 1 on {n}",
                i + 1,
                bad.num_qubits()
            )));
        }
        let m = layers.len();
        if n * m > DEFAULT_MAX_QUBITS {
            return Err(ProtocolError::SessionSize {
                n,
                m,
                cap: DEFAULT_MAX_QUBITS,
            });
        }
        Ok(Computation { n, layers, output_mode })
    }

    pub fn identity(n: usize, m: usize, k: usize, output_mode: OutputMode) -> Result<Self, ProtocolError> {
        let id = DiagonalUnitary::identity(n, k)?;
        Self::new(vec![id; m], output_mode)
    }

    pub fn random<R: Rng + ?Sized>(
        spec: &SubgroupSpec,
        n: usize,
        m: usize,
        output_mode: OutputMode,
        rng: &mut R,
    ) -> Result<Self, ProtocolError> {
        let layers = (0..m).map(|_| spec.sample(n, rng)).collect::<Result<Vec<_>, _>>()?;
        Self::new(layers, output_mode)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[DiagonalUnitary] {
        &self.layers
    }

    /// 1-based.
    pub fn layer(&self, i: usize) -> &DiagonalUnitary {
        &self.layers[i - 1]
    }

    pub fn output_mode(&self) -> OutputMode {
        self.output_mode
    }

    pub fn with_output_mode(mut self, mode: OutputMode) -> Self {
        self.output_mode = mode;
        self
    }

    /// Every layer must belong to `spec`.
    pub fn check_against(&self, spec: &SubgroupSpec) -> Result<(), ProtocolError> {
        spec.validate_for(self.n)?;
        for (i, u) in self.layers.iter().enumerate() {
            if !spec.contains(u) {
                return Err(ProtocolError::Computation(format!(
                    "layer {} is not an element of the configured subgroup",
                    i + 1
                )));
            }
        }
        Ok(())
    }
}

/// Alice's one-time pad for one layer: `|φ_i> = Z^{r_i} D_i |+>^{⊗n}`.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerSecret {
    pub pad: DiagonalUnitary,
    pub z_mask: BitString,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SecretKey {
    layers: Vec<LayerSecret>,
}

impl SecretKey {
    pub fn new(layers: Vec<LayerSecret>) -> Self {
        SecretKey { layers }
    }

    pub fn sample<R: Rng + ?Sized>(
        spec: &SubgroupSpec,
        n: usize,
        m: usize,
        rng: &mut R,
    ) -> Result<Self, ProtocolError> {
        let layers = (0..m)
            .map(|_| {
                let pad = spec.sample(n, rng)?;
                let z_mask = BitString::from_bits((0..n).map(|_| rng.random::<bool>()).collect());
                Ok(LayerSecret { pad, z_mask })
            })
            .collect::<Result<Vec<_>, ProtocolError>>()?;
        Ok(SecretKey { layers })
    }

    /// `D_i = I`, `r_i = 0` for every layer.
    pub fn trivial(n: usize, m: usize, k: usize) -> Result<Self, ProtocolError> {
        let pad = DiagonalUnitary::identity(n, k)?;
        Ok(SecretKey {
            layers: vec![
                LayerSecret {
                    pad,
                    z_mask: BitString::zeros(n),
                };
                m
            ],
        })
    }

    pub fn m(&self) -> usize {
        self.layers.len()
    }

    /// 1-based.
    pub fn layer(&self, i: usize) -> &LayerSecret {
        &self.layers[i - 1]
    }

    pub fn layers(&self) -> &[LayerSecret] {
        &self.layers
    }
}

/// `S_i = {i, i−2, i−4, …} ∩ [1, m]`.
pub fn dependency_set(i: usize) -> Vec<usize> {
    (1..=i).rev().step_by(2).collect()
}

/// How Alice folds past outcomes into the correction bits. Anything but
/// `Alternating` is wrong and exists to prove that the verifiers notice.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DependencyRule {
    /// `S_i = {i, i−2, …}`.
    #[default]
    Alternating,
    /// `S_i = {i}`: drops every deeper term.
    LatestOnly,
    /// `S_i = ∅`: no corrections at all.
    Empty,
}

impl DependencyRule {
    pub fn set(self, i: usize) -> Vec<usize> {
        match self {
            DependencyRule::Alternating => dependency_set(i),
            DependencyRule::LatestOnly => (i >= 1).then_some(i).into_iter().collect(),
            DependencyRule::Empty => Vec::new(),
        }
    }
}

/// XOR of `s_k` over `k ∈ set`; `s_history[k-1]` holds `s_k`.
fn xor_over(set: &[usize], s_history: &[BitString], n: usize) -> Result<BitString, ProtocolError> {
    let mut acc = BitString::zeros(n);
    for &k in set {
        let s = s_history.get(k - 1).ok_or(ProtocolError::MissingHistory(k))?;
        acc = acc.xor(s).map_err(|_| ProtocolError::Width {
            expected: n,
            found: s.len(),
        })?;
    }
    Ok(acc)
}

/// `c_i = ⊕_{k ∈ S_{i−1}} s_k`, with `c_1 = 0`.
pub fn correction_bits(i: usize, s_history: &[BitString], n: usize) -> Result<BitString, ProtocolError> {
    correction_bits_with(DependencyRule::Alternating, i, s_history, n)
}

pub fn correction_bits_with(
    rule: DependencyRule,
    i: usize,
    s_history: &[BitString],
    n: usize,
) -> Result<BitString, ProtocolError> {
    if i <= 1 {
        return Ok(BitString::zeros(n));
    }
    xor_over(&rule.set(i - 1), s_history, n)
}

/// `c_{m+1}`, Alice's result in classical-output mode.
pub fn classical_output(s_history: &[BitString], m: usize, n: usize) -> Result<BitString, ProtocolError> {
    if s_history.len() < m {
        return Err(ProtocolError::MissingHistory(s_history.len() + 1));
    }
    correction_bits(m + 1, s_history, n)
}

/// `s_i = b_i ⊕ r_i`.
pub fn record_outcome(b: &BitString, r: &BitString) -> Result<BitString, ProtocolError> {
    b.xor(r).map_err(|_| ProtocolError::Width {
        expected: r.len(),
        found: b.len(),
    })
}

/// `|φ_i> = Z^{r_i} D_i |+>^{⊗n}`.
pub fn prepare_layer(secret: &LayerSecret) -> Result<StateVector, ProtocolError> {
    let mut s = StateVector::plus(secret.pad.num_qubits())?;
    s.apply_diagonal(&secret.pad)?;
    s.apply_pauli(PauliAxis::Z, &secret.z_mask)?;
    Ok(s)
}

/// `C_i = D_i† · X^{c_i} U_i X^{c_i}`.
pub fn instruction(
    layer: &DiagonalUnitary,
    secret: &LayerSecret,
    c: &BitString,
) -> Result<DiagonalUnitary, ProtocolError> {
    let twisted = layer.x_conjugate(c)?;
    Ok(secret.pad.dagger().multiply(&twisted)?)
}

/// Applies `⊗_j Z^{c_m^j} X^{c_{m−1}^j ⊕ r_m^j}` (X first, then Z).
pub fn final_correction(
    state: &mut StateVector,
    c_m: &BitString,
    c_prev: &BitString,
    r_m: &BitString,
) -> Result<(), ProtocolError> {
    let x_mask = record_outcome(c_prev, r_m)?;
    state.apply_pauli(PauliAxis::X, &x_mask)?;
    state.apply_pauli(PauliAxis::Z, c_m)?;
    Ok(())
}

/// Tensor product of all registers, register `i` on qubits
/// `(i−1)·n .. i·n`, with CZ between qubit `j` of every consecutive pair.
pub fn entangle_registers(registers: &[StateVector]) -> Result<StateVector, ProtocolError> {
    let first = registers
        .first()
        .ok_or_else(|| ProtocolError::Computation("no registers to entangle".into()))?;
    let n = first.num_qubits();
    let m = registers.len();
    if n * m > DEFAULT_MAX_QUBITS {
        return Err(ProtocolError::SessionSize {
            n,
            m,
            cap: DEFAULT_MAX_QUBITS,
        });
    }
    let mut joint = first.clone();
    for r in &registers[1..] {
        if r.num_qubits() != n {
            return Err(ProtocolError::Width {
                expected: n,
                found: r.num_qubits(),
            });
        }
        joint = joint.tensor(r)?;
    }
    for i in 0..m.saturating_sub(1) {
        for j in 0..n {
            joint.apply_cz(i * n + j, (i + 1) * n + j)?;
        }
    }
    Ok(joint)
}
