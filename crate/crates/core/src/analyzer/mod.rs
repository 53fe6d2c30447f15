//! Independent oracles for the protocol.
//!
//! The reference evaluator never touches the protocol code: it applies the
//! layers directly to `|+>^{⊗n}`. Correctness compares every measurement
//! branch of a real session against it. Blindness is checked per layer on
//! Bob's pair `(C_i, |φ_i>)`.

mod blindness;
mod stats;
mod teleport;

pub use blindness::{
    cross_layer_correlation, verify_blindness_exhaustive, verify_blindness_exhaustive_with_pads,
    verify_blindness_sampled, BlindnessMode, BlindnessReport, CrossLayerReport, PadSampler,
};
pub use stats::{kolmogorov_survival, ks_two_sample};
pub use teleport::{teleportation_branches, teleportation_identity_check, TeleportReport};

use std::collections::BTreeMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use thiserror::Error;

use crate::bits::BitString;
use crate::diaggroup::{DiagError, SubgroupSpec};
use crate::protocol::{
    enumerate_session, run_session_with_key, transport::InProcessTransport, Computation, DependencyRule, OutputMode,
    ProtocolError, SecretKey, Seeds, SessionOutput,
};
use crate::qsim::{SimError, StateVector, DEFAULT_BRANCH_CAP};

/// Tolerance for oracle equivalence (fidelity deficit, total variation).
pub const ORACLE_TOLERANCE: f64 = 1e-9;
/// Tolerance for identities that hold exactly in real arithmetic.
pub const EXACT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum AnalyzerError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Diag(#[from] DiagError),
    #[error("{0}")]
    Precondition(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceResult {
    pub state: StateVector,
    /// Computational-basis outcome probabilities; zero entries omitted.
    pub classical_distribution: BTreeMap<BitString, f64>,
}

impl ReferenceResult {
    pub fn probability(&self, outcome: &BitString) -> f64 {
        self.classical_distribution.get(outcome).copied().unwrap_or(0.0)
    }
}

/// `H U_m … H U_1 |+>^{⊗n}` applied gate by gate.
pub fn reference_output(comp: &Computation) -> Result<ReferenceResult, AnalyzerError> {
    let n = comp.n();
    let mut state = StateVector::plus(n)?;
    for u in comp.layers() {
        state.apply_diagonal(u)?;
        state.apply_hadamard_all();
    }
    let classical_distribution = state
        .probabilities()
        .into_iter()
        .enumerate()
        .filter(|&(_, p)| p > 0.0)
        .map(|(x, p)| (BitString::from_index(x, n), p))
        .collect();
    Ok(ReferenceResult {
        state,
        classical_distribution,
    })
}

/// `½ Σ |p(x) − q(x)|` over the union of supports.
pub fn total_variation(p: &BTreeMap<BitString, f64>, q: &BTreeMap<BitString, f64>) -> f64 {
    let mut keys: Vec<&BitString> = p.keys().chain(q.keys()).collect();
    keys.sort();
    keys.dedup();
    0.5 * keys
        .into_iter()
        .map(|k| (p.get(k).copied().unwrap_or(0.0) - q.get(k).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum CorrectnessMethod {
    Exhaustive,
    /// Seeded sampling with the declared total-variation tolerance.
    Sampled {
        sessions_per_key: usize,
        tolerance: f64,
    },
}

#[derive(Clone, Copy, Debug)]
pub struct CorrectnessOptions {
    pub key_samples: usize,
    pub seed: u64,
    pub rule: DependencyRule,
    /// Above this many branches per session, fall back to sampling.
    pub branch_cap: usize,
    pub sessions_per_key: usize,
}

impl Default for CorrectnessOptions {
    fn default() -> Self {
        CorrectnessOptions {
            key_samples: 100,
            seed: 0,
            rule: DependencyRule::Alternating,
            branch_cap: DEFAULT_BRANCH_CAP,
            sessions_per_key: 2000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrectnessReport {
    pub n: usize,
    pub m: usize,
    pub output_mode: String,
    pub keys_checked: usize,
    pub branches_checked: usize,
    pub method: CorrectnessMethod,
    /// Quantum mode: worst `1 − F` over all branches and keys.
    pub worst_fidelity_deficit: Option<f64>,
    /// Classical mode: worst total variation over keys.
    pub worst_total_variation: Option<f64>,
    pub tolerance: f64,
    pub passed: bool,
}

impl fmt::Display for CorrectnessReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "suite: correctness")?;
        writeln!(f, "n: {}", self.n)?;
        writeln!(f, "m: {}", self.m)?;
        writeln!(f, "output_mode: {}", self.output_mode)?;
        writeln!(f, "keys_checked: {}", self.keys_checked)?;
        writeln!(f, "branches_checked: {}", self.branches_checked)?;
        match self.method {
            CorrectnessMethod::Exhaustive => writeln!(f, "method: exhaustive")?,
            CorrectnessMethod::Sampled { sessions_per_key, .. } => {
                writeln!(f, "method: sampled ({sessions_per_key} sessions per key)")?
            }
        }
        if let Some(d) = self.worst_fidelity_deficit {
            writeln!(f, "worst_fidelity_deficit: {d:.3e}")?;
        }
        if let Some(tv) = self.worst_total_variation {
            writeln!(f, "worst_total_variation: {tv:.3e}")?;
        }
        writeln!(f, "tolerance: {:.3e}", self.tolerance)?;
        write!(f, "verdict: {}", verdict(self.passed))
    }
}

pub(crate) fn verdict(passed: bool) -> &'static str {
    if passed {
        "pass"
    } else {
        "fail"
    }
}

fn branch_count(comp: &Computation) -> u128 {
    let measured = match comp.output_mode() {
        OutputMode::Classical => comp.m(),
        OutputMode::Quantum => comp.m() - 1,
    };
    1u128 << (comp.n() * measured)
}

/// Runs the protocol under `options.key_samples` random keys and compares
/// Alice's output with [`reference_output`]. Every measurement branch is
/// enumerated when it fits under `options.branch_cap`; otherwise sessions
/// are sampled from seeded Bobs.
pub fn verify_correctness(
    comp: &Computation,
    spec: &SubgroupSpec,
    options: &CorrectnessOptions,
) -> Result<CorrectnessReport, AnalyzerError> {
    comp.check_against(spec)?;
    if options.key_samples == 0 {
        return Err(AnalyzerError::Precondition("key_samples must be at least 1".into()));
    }
    let reference = reference_output(comp)?;
    let n = comp.n();
    let dim = 1usize << n;
    let exhaustive = branch_count(comp) <= options.branch_cap as u128;
    let method = if exhaustive {
        CorrectnessMethod::Exhaustive
    } else {
        if options.sessions_per_key == 0 {
            return Err(AnalyzerError::Precondition(
                "sessions_per_key must be at least 1".into(),
            ));
        }
        // E[TV] ≤ ½ Σ sqrt(p(1−p)/N) ≤ ½ sqrt(2^n / N); allow three times that.
        let tolerance = 1.5 * (dim as f64 / options.sessions_per_key as f64).sqrt();
        CorrectnessMethod::Sampled {
            sessions_per_key: options.sessions_per_key,
            tolerance,
        }
    };
    let mut key_rng = ChaCha20Rng::seed_from_u64(options.seed);
    let mut worst_deficit: f64 = 0.0;
    let mut worst_tv: f64 = 0.0;
    let mut branches_checked = 0usize;
    for key_index in 0..options.key_samples {
        let key = SecretKey::sample(spec, n, comp.m(), &mut key_rng)?;
        let outputs = if exhaustive {
            enumerate_session(comp, &key, options.rule)?
        } else {
            sample_sessions(comp, &key, options, key_index as u64)?
        };
        branches_checked += outputs.len();
        let mut dist: BTreeMap<BitString, f64> = BTreeMap::new();
        for (p, out) in &outputs {
            match out {
                SessionOutput::Quantum(state) => {
                    let deficit = 1.0 - state.fidelity(&reference.state)?;
                    worst_deficit = worst_deficit.max(deficit);
                }
                SessionOutput::Classical(bits) => *dist.entry(bits.clone()).or_default() += p,
            }
        }
        if comp.output_mode() == OutputMode::Classical {
            worst_tv = worst_tv.max(total_variation(&dist, &reference.classical_distribution));
        }
    }
    let (tolerance, passed, worst_fidelity_deficit, worst_total_variation) = match comp.output_mode() {
        OutputMode::Quantum => (
            ORACLE_TOLERANCE,
            worst_deficit <= ORACLE_TOLERANCE,
            Some(worst_deficit),
            None,
        ),
        OutputMode::Classical => {
            let tol = match method {
                CorrectnessMethod::Exhaustive => ORACLE_TOLERANCE,
                CorrectnessMethod::Sampled { tolerance, .. } => tolerance,
            };
            (tol, worst_tv <= tol, None, Some(worst_tv))
        }
    };
    Ok(CorrectnessReport {
        n,
        m: comp.m(),
        output_mode: comp.output_mode().to_string(),
        keys_checked: options.key_samples,
        branches_checked,
        method,
        worst_fidelity_deficit,
        worst_total_variation,
        tolerance,
        passed,
    })
}

fn sample_sessions(
    comp: &Computation,
    key: &SecretKey,
    options: &CorrectnessOptions,
    key_index: u64,
) -> Result<Vec<(f64, SessionOutput)>, AnalyzerError> {
    if options.rule != DependencyRule::Alternating {
        return Err(AnalyzerError::Precondition(
            "sampled correctness runs the real protocol only".into(),
        ));
    }
    let weight = 1.0 / options.sessions_per_key as f64;
    (0..options.sessions_per_key as u64)
        .map(|t| {
            let bob = options.seed ^ (key_index << 32) ^ t;
            let seeds = Seeds { alice: 0, bob };
            let mut transport = InProcessTransport::new(bob);
            let (out, _) = run_session_with_key(comp, key.clone(), seeds, &mut transport)?;
            Ok((weight, out))
        })
        .collect()
}
