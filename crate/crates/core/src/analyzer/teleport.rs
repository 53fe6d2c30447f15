//! One-bit teleportation: `|φ>|+>`, CZ, then an X-basis measurement of the
//! first qubit leaves `X^b H|φ>` on the second.

use rand::Rng;
use serde::Serialize;

use super::{verdict, AnalyzerError, EXACT_TOLERANCE};
use crate::bits::BitString;
use crate::qsim::{Basis, PauliAxis, StateVector};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TeleportReport {
    pub trials: usize,
    pub branches: usize,
    pub worst_fidelity_deficit: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl std::fmt::Display for TeleportReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "suite: teleport")?;
        writeln!(f, "trials: {}", self.trials)?;
        writeln!(f, "branches: {}", self.branches)?;
        writeln!(f, "worst_fidelity_deficit: {:.3e}", self.worst_fidelity_deficit)?;
        writeln!(f, "tolerance: {:.3e}", self.tolerance)?;
        write!(f, "verdict: {}", verdict(self.passed))
    }
}

/// For one input, every branch `(b, probability, fidelity with X^b H|φ>)`.
pub fn teleportation_branches(phi: &StateVector) -> Result<Vec<(bool, f64, f64)>, AnalyzerError> {
    if phi.num_qubits() != 1 {
        return Err(AnalyzerError::Precondition(
            "teleportation input must be one qubit".into(),
        ));
    }
    let mut joint = phi.tensor(&StateVector::plus(1)?)?;
    joint.apply_cz(0, 1)?;
    joint.apply_hadamard(0)?;
    let mut out = Vec::new();
    for branch in joint.enumerate_measurement(&[0], Basis::Computational, 2)? {
        let Some(post) = branch.post_state else { continue };
        let b = branch.outcome.get(0);
        let rest = post.discard_qubits(&[0], &branch.outcome, Basis::Computational)?;
        let mut want = phi.clone();
        want.apply_hadamard(0)?;
        want.apply_pauli(PauliAxis::X, &BitString::from_bits(vec![b]))?;
        out.push((b, branch.probability, rest.fidelity(&want)?));
    }
    Ok(out)
}

/// Haar-random inputs; every branch must match within `1e-10`.
pub fn teleportation_identity_check<R: Rng + ?Sized>(
    trials: usize,
    rng: &mut R,
) -> Result<TeleportReport, AnalyzerError> {
    if trials == 0 {
        return Err(AnalyzerError::Precondition("trials must be at least 1".into()));
    }
    let mut worst: f64 = 0.0;
    let mut branches = 0;
    for _ in 0..trials {
        let phi = StateVector::haar_random(1, rng)?;
        for (_, _, fid) in teleportation_branches(&phi)? {
            worst = worst.max(1.0 - fid);
            branches += 1;
        }
    }
    Ok(TeleportReport {
        trials,
        branches,
        worst_fidelity_deficit: worst,
        tolerance: EXACT_TOLERANCE,
        passed: worst <= EXACT_TOLERANCE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn basis_inputs() {
        for idx in 0..2 {
            let branches = teleportation_branches(&StateVector::basis(1, idx).unwrap()).unwrap();
            assert_eq!(branches.len(), 2);
            for (_, p, fid) in branches {
                assert!((p - 0.5).abs() < 1e-12);
                assert!((fid - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn one_input_gives_minus_on_both_branches() {
        // H|1> = |−>, and X|−> = −|−>, so both branches hold |−> up to phase.
        let phi = StateVector::basis(1, 1).unwrap();
        let mut joint = phi.tensor(&StateVector::plus(1).unwrap()).unwrap();
        joint.apply_cz(0, 1).unwrap();
        joint.apply_hadamard(0).unwrap();
        let mut minus = StateVector::basis(1, 1).unwrap();
        minus.apply_hadamard(0).unwrap();
        for branch in joint.enumerate_measurement(&[0], Basis::Computational, 2).unwrap() {
            let rest = branch
                .post_state
                .unwrap()
                .discard_qubits(&[0], &branch.outcome, Basis::Computational)
                .unwrap();
            assert!((rest.fidelity(&minus).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn random_inputs_pass() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let report = teleportation_identity_check(50, &mut rng).unwrap();
        assert!(report.passed, "{report}");
        assert_eq!(report.branches, 100);
    }

    #[test]
    fn wrong_correction_would_be_detected() {
        // Without the X^b byproduct the b = 1 branch is generically wrong.
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let phi = StateVector::haar_random(1, &mut rng).unwrap();
        let mut joint = phi.tensor(&StateVector::plus(1).unwrap()).unwrap();
        joint.apply_cz(0, 1).unwrap();
        joint.apply_hadamard(0).unwrap();
        let mut h_phi = phi.clone();
        h_phi.apply_hadamard(0).unwrap();
        let branch = &joint.enumerate_measurement(&[0], Basis::Computational, 2).unwrap()[1];
        let rest = branch
            .post_state
            .as_ref()
            .unwrap()
            .discard_qubits(&[0], &branch.outcome, Basis::Computational)
            .unwrap();
        assert!(rest.fidelity(&h_phi).unwrap() < 1.0 - 1e-3);
    }
}
