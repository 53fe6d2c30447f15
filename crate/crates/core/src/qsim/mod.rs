//! Dense statevector simulator.
//!
//! Only the gates the blind protocol needs are provided: Hadamard,
//! controlled-Z, Pauli X/Z strings, diagonal unitaries and single-basis
//! measurement with full branch enumeration.
//!
//! Basis ordering: qubit 0 is the least significant bit of the amplitude
//! index. This convention is shared with the diagonal group and the wire
//! format.

mod density;

pub use density::{DensityAccumulator, DensityMatrix};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::bits::BitString;
use crate::diaggroup::DiagonalUnitary;

/// Largest register the simulator will allocate by default.
pub const DEFAULT_MAX_QUBITS: usize = 12;
/// Largest number of branches `enumerate_measurement` will produce by default.
pub const DEFAULT_BRANCH_CAP: usize = 1 << 16;

const NORM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("qubit count {n} outside 1..={max}")]
    QubitCount { n: usize, max: usize },
    #[error("qubit index {index} out of range for {num_qubits}-qubit state")]
    QubitIndex { index: usize, num_qubits: usize },
    #[error("qubit {0} listed twice")]
    DuplicateQubit(usize),
    #[error("mask length {found} does not match {expected} qubits")]
    MaskLength { expected: usize, found: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("amplitude vector length {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("state norm {0} differs from 1")]
    NotNormalized(f64),
    #[error("enumeration of {branches} branches exceeds cap {cap}")]
    BranchCap { branches: u128, cap: usize },
    #[error("ensemble weights must be nonnegative and sum to 1 (sum = {0})")]
    Weights(f64),
    #[error("ensemble is empty")]
    EmptyEnsemble,
    #[error("matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),
    #[error("discarded qubits are not in the stated product state (residual norm {0})")]
    NotProductState(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PauliAxis {
    X,
    Z,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Basis {
    Computational,
    /// `|+>` is outcome 0, `|->` is outcome 1.
    Hadamard,
}

/// Normalized pure state of `num_qubits` qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amplitudes: Vec<Complex64>,
}

/// One outcome of a projective measurement.
#[derive(Clone, Debug)]
pub struct MeasurementBranch {
    /// Bit `t` is the outcome on the `t`-th listed qubit.
    pub outcome: BitString,
    pub probability: f64,
    /// Full post-measurement state; `None` when the branch has probability 0.
    pub post_state: Option<StateVector>,
}

fn check_qubit_count(n: usize, max: usize) -> Result<(), SimError> {
    if n == 0 || n > max {
        Err(SimError::QubitCount { n, max })
    } else {
        Ok(())
    }
}

impl StateVector {
    /// `|+>^{⊗n}` with the default size limit.
    pub fn plus(n: usize) -> Result<Self, SimError> {
        Self::plus_with_limit(n, DEFAULT_MAX_QUBITS)
    }

    pub fn plus_with_limit(n: usize, max_qubits: usize) -> Result<Self, SimError> {
        check_qubit_count(n, max_qubits)?;
        let dim = 1usize << n;
        let amp = Complex64::new((dim as f64).sqrt().recip(), 0.0);
        Ok(StateVector {
            num_qubits: n,
            amplitudes: vec![amp; dim],
        })
    }

    /// Computational basis state `|index>`.
    pub fn basis(n: usize, index: usize) -> Result<Self, SimError> {
        check_qubit_count(n, DEFAULT_MAX_QUBITS)?;
        let dim = 1usize << n;
        if index >= dim {
            return Err(SimError::Dimension {
                expected: dim,
                found: index,
            });
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); dim];
        amplitudes[index] = Complex64::new(1.0, 0.0);
        Ok(StateVector {
            num_qubits: n,
            amplitudes,
        })
    }

    /// Wraps an amplitude vector, checking length and norm.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self, SimError> {
        let dim = amplitudes.len();
        if dim < 2 || !dim.is_power_of_two() {
            return Err(SimError::NotPowerOfTwo(dim));
        }
        let num_qubits = dim.trailing_zeros() as usize;
        let state = StateVector { num_qubits, amplitudes };
        let norm = state.norm();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(SimError::NotNormalized(norm));
        }
        Ok(state)
    }

    /// Haar-distributed random state (normalized complex Gaussian vector).
    pub fn haar_random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self, SimError> {
        check_qubit_count(n, DEFAULT_MAX_QUBITS)?;
        let mut amplitudes: Vec<Complex64> = (0..1usize << n)
            .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        amplitudes.iter_mut().for_each(|a| *a /= norm);
        Ok(StateVector {
            num_qubits: n,
            amplitudes,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    fn check_index(&self, q: usize) -> Result<(), SimError> {
        if q >= self.num_qubits {
            Err(SimError::QubitIndex {
                index: q,
                num_qubits: self.num_qubits,
            })
        } else {
            Ok(())
        }
    }

    fn check_qubit_set(&self, qubits: &[usize]) -> Result<(), SimError> {
        let mut seen = 0usize;
        for &q in qubits {
            self.check_index(q)?;
            if seen >> q & 1 == 1 {
                return Err(SimError::DuplicateQubit(q));
            }
            seen |= 1 << q;
        }
        Ok(())
    }

    pub fn apply_hadamard(&mut self, q: usize) -> Result<(), SimError> {
        self.check_index(q)?;
        hadamard_unchecked(&mut self.amplitudes, q);
        Ok(())
    }

    pub fn apply_hadamard_all(&mut self) {
        for q in 0..self.num_qubits {
            hadamard_unchecked(&mut self.amplitudes, q);
        }
    }

    pub fn apply_cz(&mut self, q1: usize, q2: usize) -> Result<(), SimError> {
        self.check_index(q1)?;
        self.check_index(q2)?;
        if q1 == q2 {
            return Err(SimError::DuplicateQubit(q1));
        }
        let mask = (1 << q1) | (1 << q2);
        for (x, a) in self.amplitudes.iter_mut().enumerate() {
            if x & mask == mask {
                *a = -*a;
            }
        }
        Ok(())
    }

    /// Applies `X^mask` or `Z^mask`, bit `j` of the mask acting on qubit `j`.
    pub fn apply_pauli(&mut self, axis: PauliAxis, mask: &BitString) -> Result<(), SimError> {
        if mask.len() != self.num_qubits {
            return Err(SimError::MaskLength {
                expected: self.num_qubits,
                found: mask.len(),
            });
        }
        let m = mask.to_index();
        match axis {
            PauliAxis::X => {
                if m != 0 {
                    let old = self.amplitudes.clone();
                    for (x, a) in self.amplitudes.iter_mut().enumerate() {
                        *a = old[x ^ m];
                    }
                }
            }
            PauliAxis::Z => {
                for (x, a) in self.amplitudes.iter_mut().enumerate() {
                    if (x & m).count_ones() % 2 == 1 {
                        *a = -*a;
                    }
                }
            }
        }
        Ok(())
    }

    /// Multiplies the amplitude of `|x>` by `exp(i·θ_x)`.
    pub fn apply_diagonal(&mut self, d: &DiagonalUnitary) -> Result<(), SimError> {
        if d.num_qubits() != self.num_qubits {
            return Err(SimError::Dimension {
                expected: self.num_qubits,
                found: d.num_qubits(),
            });
        }
        for (x, a) in self.amplitudes.iter_mut().enumerate() {
            *a *= Complex64::from_polar(1.0, d.phase_at(x));
        }
        Ok(())
    }

    /// Applies `d` to the `d.num_qubits()` consecutive qubits starting at `offset`.
    pub fn apply_diagonal_at(&mut self, d: &DiagonalUnitary, offset: usize) -> Result<(), SimError> {
        let width = d.num_qubits();
        if offset + width > self.num_qubits {
            return Err(SimError::QubitIndex {
                index: offset + width - 1,
                num_qubits: self.num_qubits,
            });
        }
        let local = (1usize << width) - 1;
        let phases: Vec<Complex64> = (0..1usize << width)
            .map(|y| Complex64::from_polar(1.0, d.phase_at(y)))
            .collect();
        for (x, a) in self.amplitudes.iter_mut().enumerate() {
            *a *= phases[(x >> offset) & local];
        }
        Ok(())
    }

    /// `self ⊗ other` with `self` on the low qubits.
    pub fn tensor(&self, other: &StateVector) -> Result<StateVector, SimError> {
        let n = self.num_qubits + other.num_qubits;
        check_qubit_count(n, DEFAULT_MAX_QUBITS)?;
        let mut amplitudes = Vec::with_capacity(1 << n);
        for b in &other.amplitudes {
            for a in &self.amplitudes {
                amplitudes.push(a * b);
            }
        }
        Ok(StateVector {
            num_qubits: n,
            amplitudes,
        })
    }

    /// Every outcome of measuring `qubits` in `basis`, one branch per bit string.
    pub fn enumerate_measurement(
        &self,
        qubits: &[usize],
        basis: Basis,
        cap: usize,
    ) -> Result<Vec<MeasurementBranch>, SimError> {
        self.check_qubit_set(qubits)?;
        let branches = 1u128 << qubits.len();
        if branches > cap as u128 {
            return Err(SimError::BranchCap { branches, cap });
        }
        let mut rotated = self.amplitudes.clone();
        if basis == Basis::Hadamard {
            for &q in qubits {
                hadamard_unchecked(&mut rotated, q);
            }
        }
        let key = |x: usize| -> usize {
            qubits
                .iter()
                .enumerate()
                .fold(0, |acc, (t, &q)| acc | (((x >> q) & 1) << t))
        };
        let mut probs = vec![0.0f64; branches as usize];
        for (x, a) in rotated.iter().enumerate() {
            probs[key(x)] += a.norm_sqr();
        }
        let zero = Complex64::new(0.0, 0.0);
        let out = probs
            .iter()
            .enumerate()
            .map(|(outcome, &p)| {
                let post_state = (p > 0.0).then(|| {
                    let scale = p.sqrt().recip();
                    let mut amps: Vec<Complex64> = rotated
                        .iter()
                        .enumerate()
                        .map(|(x, a)| if key(x) == outcome { a * scale } else { zero })
                        .collect();
                    if basis == Basis::Hadamard {
                        for &q in qubits {
                            hadamard_unchecked(&mut amps, q);
                        }
                    }
                    StateVector {
                        num_qubits: self.num_qubits,
                        amplitudes: amps,
                    }
                });
                MeasurementBranch {
                    outcome: BitString::from_index(outcome, qubits.len()),
                    probability: p,
                    post_state,
                }
            })
            .collect();
        Ok(out)
    }

    pub fn enumerate_hadamard_measurement(&self, qubits: &[usize]) -> Result<Vec<MeasurementBranch>, SimError> {
        self.enumerate_measurement(qubits, Basis::Hadamard, DEFAULT_BRANCH_CAP)
    }

    /// Draws one outcome by measuring the listed qubits one at a time. No
    /// enumeration cap applies; the result is a deterministic function of
    /// the RNG state.
    pub fn sample_measurement<R: Rng + ?Sized>(
        &self,
        qubits: &[usize],
        basis: Basis,
        rng: &mut R,
    ) -> Result<MeasurementBranch, SimError> {
        self.check_qubit_set(qubits)?;
        let mut amps = self.amplitudes.clone();
        if basis == Basis::Hadamard {
            for &q in qubits {
                hadamard_unchecked(&mut amps, q);
            }
        }
        let mut outcome = BitString::zeros(qubits.len());
        let mut probability = 1.0;
        for (t, &q) in qubits.iter().enumerate() {
            let p_one: f64 = amps
                .iter()
                .enumerate()
                .filter(|(x, _)| (x >> q) & 1 == 1)
                .map(|(_, a)| a.norm_sqr())
                .sum();
            let p_one = p_one.clamp(0.0, 1.0);
            let draw: f64 = rng.random();
            let bit = draw < p_one;
            let p = if bit { p_one } else { 1.0 - p_one };
            let scale = p.sqrt().recip();
            for (x, a) in amps.iter_mut().enumerate() {
                if ((x >> q) & 1 == 1) == bit {
                    *a *= scale;
                } else {
                    *a = Complex64::new(0.0, 0.0);
                }
            }
            outcome.set(t, bit);
            probability *= p;
        }
        if basis == Basis::Hadamard {
            for &q in qubits {
                hadamard_unchecked(&mut amps, q);
            }
        }
        Ok(MeasurementBranch {
            outcome,
            probability,
            post_state: Some(StateVector {
                num_qubits: self.num_qubits,
                amplitudes: amps,
            }),
        })
    }

    pub fn sample_hadamard_measurement<R: Rng + ?Sized>(
        &self,
        qubits: &[usize],
        rng: &mut R,
    ) -> Result<MeasurementBranch, SimError> {
        self.sample_measurement(qubits, Basis::Hadamard, rng)
    }

    /// Removes `qubits`, which must be in the product state given by `bits`
    /// in `basis` (typically just after measuring them). The remaining
    /// qubits keep their relative order.
    pub fn discard_qubits(&self, qubits: &[usize], bits: &BitString, basis: Basis) -> Result<StateVector, SimError> {
        self.check_qubit_set(qubits)?;
        if bits.len() != qubits.len() {
            return Err(SimError::MaskLength {
                expected: qubits.len(),
                found: bits.len(),
            });
        }
        let remaining = self.num_qubits - qubits.len();
        if remaining == 0 {
            return Err(SimError::QubitCount {
                n: 0,
                max: self.num_qubits,
            });
        }
        let mut rotated = self.amplitudes.clone();
        if basis == Basis::Hadamard {
            for &q in qubits {
                hadamard_unchecked(&mut rotated, q);
            }
        }
        let mut want = 0usize;
        let mut measured_mask = 0usize;
        for (t, &q) in qubits.iter().enumerate() {
            measured_mask |= 1 << q;
            if bits.get(t) {
                want |= 1 << q;
            }
        }
        let kept: Vec<usize> = (0..self.num_qubits).filter(|q| measured_mask >> q & 1 == 0).collect();
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << remaining];
        for (x, a) in rotated.iter().enumerate() {
            if x & measured_mask == want {
                let y = kept
                    .iter()
                    .enumerate()
                    .fold(0, |acc, (t, &q)| acc | (((x >> q) & 1) << t));
                amplitudes[y] = *a;
            }
        }
        let out = StateVector {
            num_qubits: remaining,
            amplitudes,
        };
        let norm = out.norm();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(SimError::NotProductState(norm));
        }
        Ok(out)
    }

    pub fn inner(&self, other: &StateVector) -> Result<Complex64, SimError> {
        if self.dim() != other.dim() {
            return Err(SimError::Dimension {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// `|<a|b>|^2`, insensitive to global phase.
    pub fn fidelity(&self, other: &StateVector) -> Result<f64, SimError> {
        Ok(self.inner(other)?.norm_sqr().min(1.0))
    }

    /// Computational-basis outcome probabilities indexed by basis state.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Entrywise comparison, not phase-insensitive.
    pub fn approx_eq(&self, other: &StateVector, tol: f64) -> bool {
        self.dim() == other.dim()
            && self
                .amplitudes
                .iter()
                .zip(&other.amplitudes)
                .all(|(a, b)| (a - b).norm() <= tol)
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm() - 1.0).abs() <= NORM_TOLERANCE * self.dim() as f64
    }
}

/// `|<a|b>|^2` between two states of equal dimension.
pub fn fidelity_up_to_global_phase(a: &StateVector, b: &StateVector) -> Result<f64, SimError> {
    a.fidelity(b)
}

fn hadamard_unchecked(amps: &mut [Complex64], q: usize) {
    let bit = 1usize << q;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for x in 0..amps.len() {
        if x & bit == 0 {
            let a = amps[x];
            let b = amps[x | bit];
            amps[x] = (a + b) * s;
            amps[x | bit] = (a - b) * s;
        }
    }
}
