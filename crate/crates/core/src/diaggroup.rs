//! The diagonal unitary group used for both hidden layers and one-time
//! pads.
//!
//! An element acting on `n` qubits is stored as `n/k` blocks of `2^k`
//! phases, the tensor product of independent `k`-qubit diagonals. Block
//! `b` covers qubits `b·k .. b·k + k`, and within a block index bit `t`
//! belongs to qubit `b·k + t`. Every block is kept in canonical form: the
//! phase at index 0 is zero (global phase removed) and all phases lie in
//! `[0, 2π)`.

use std::collections::HashSet;
use std::f64::consts::TAU;
use std::fmt;

use rand::Rng;
use thiserror::Error;

use crate::bits::BitString;

/// Phases this close to a multiple of 2π are snapped to zero.
const WRAP_EPSILON: f64 = 1e-12;
/// Tolerance for recognising a phase as a point of a cyclic lattice.
const LATTICE_TOLERANCE: f64 = 1e-9;

/// Largest subgroup `enumerate` will materialise by default.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagError {
    #[error("n must be a multiple of k (n = {n}, k = {k})")]
    NotMultipleOfBlock { n: usize, k: usize },
    #[error("block size must be at least 1")]
    ZeroBlockSize,
    #[error("block {block} has {found} phases, expected {expected}")]
    BlockLength {
        block: usize,
        expected: usize,
        found: usize,
    },
    #[error("phase {0} is not finite")]
    NonFinite(f64),
    #[error("phase vector is not canonical (block {block}, index {index}, value {value})")]
    NotCanonical { block: usize, index: usize, value: f64 },
    #[error("shape mismatch: ({n1} qubits, k = {k1}) vs ({n2} qubits, k = {k2})")]
    Shape { n1: usize, k1: usize, n2: usize, k2: usize },
    #[error("mask length {found} does not match {expected} qubits")]
    MaskLength { expected: usize, found: usize },
    #[error("cyclic subgroup order must be at least 2 (got {0})")]
    InvalidOrder(u32),
    #[error("continuous subgroups cannot be enumerated")]
    NotEnumerable,
    #[error("subgroup of size {size} exceeds enumeration cap {cap}")]
    EnumerationCap { size: u128, cap: u128 },
    #[error("parameter counting needs a continuous subgroup")]
    NotContinuous,
}

/// Reduces a phase into `[0, 2π)`.
pub fn wrap_phase(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    if r < WRAP_EPSILON || TAU - r < WRAP_EPSILON {
        0.0
    } else {
        r
    }
}

/// Distance between two phases on the circle.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// A canonical element of the diagonal group.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalUnitary {
    num_qubits: usize,
    block_size: usize,
    blocks: Vec<Vec<f64>>,
}

impl DiagonalUnitary {
    pub fn identity(n: usize, k: usize) -> Result<Self, DiagError> {
        check_shape(n, k)?;
        Ok(DiagonalUnitary {
            num_qubits: n,
            block_size: k,
            blocks: vec![vec![0.0; 1 << k]; n / k],
        })
    }

    /// Canonicalises arbitrary finite phases: global phase per block is
    /// removed and the rest wrapped into `[0, 2π)`.
    pub fn from_blocks(block_size: usize, blocks: Vec<Vec<f64>>) -> Result<Self, DiagError> {
        if block_size == 0 {
            return Err(DiagError::ZeroBlockSize);
        }
        let width = 1usize << block_size;
        for (b, block) in blocks.iter().enumerate() {
            if block.len() != width {
                return Err(DiagError::BlockLength {
                    block: b,
                    expected: width,
                    found: block.len(),
                });
            }
            if let Some(&bad) = block.iter().find(|p| !p.is_finite()) {
                return Err(DiagError::NonFinite(bad));
            }
        }
        let num_qubits = blocks.len() * block_size;
        check_shape(num_qubits, block_size)?;
        let blocks = blocks.into_iter().map(canonical_block).collect();
        Ok(DiagonalUnitary {
            num_qubits,
            block_size,
            blocks,
        })
    }

    /// One block covering all qubits; `phases.len()` must be a power of two.
    pub fn single_block(phases: Vec<f64>) -> Result<Self, DiagError> {
        let len = phases.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(DiagError::BlockLength {
                block: 0,
                expected: len.next_power_of_two().max(2),
                found: len,
            });
        }
        Self::from_blocks(len.trailing_zeros() as usize, vec![phases])
    }

    /// Accepts only phases that are already canonical. Used when decoding
    /// values that crossed a trust boundary.
    pub fn from_canonical_flat(n: usize, k: usize, phases: &[f64]) -> Result<Self, DiagError> {
        check_shape(n, k)?;
        let width = 1usize << k;
        let expected = (n / k) * width;
        if phases.len() != expected {
            return Err(DiagError::BlockLength {
                block: phases.len() / width,
                expected,
                found: phases.len(),
            });
        }
        let blocks: Vec<Vec<f64>> = phases.chunks(width).map(<[f64]>::to_vec).collect();
        for (b, block) in blocks.iter().enumerate() {
            for (i, &p) in block.iter().enumerate() {
                let ok = p.is_finite() && (0.0..TAU).contains(&p) && (i != 0 || p == 0.0);
                if !ok {
                    return Err(DiagError::NotCanonical {
                        block: b,
                        index: i,
                        value: p,
                    });
                }
            }
        }
        Ok(DiagonalUnitary {
            num_qubits: n,
            block_size: k,
            blocks,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn blocks(&self) -> &[Vec<f64>] {
        &self.blocks
    }

    /// All phases, block after block.
    pub fn flat_phases(&self) -> impl Iterator<Item = f64> + '_ {
        self.blocks.iter().flatten().copied()
    }

    /// Phase applied to computational basis state `|x>`.
    pub fn phase_at(&self, x: usize) -> f64 {
        let mask = (1usize << self.block_size) - 1;
        self.blocks
            .iter()
            .enumerate()
            .map(|(b, block)| block[(x >> (b * self.block_size)) & mask])
            .sum()
    }

    fn check_same_shape(&self, other: &Self) -> Result<(), DiagError> {
        if self.num_qubits != other.num_qubits || self.block_size != other.block_size {
            return Err(DiagError::Shape {
                n1: self.num_qubits,
                k1: self.block_size,
                n2: other.num_qubits,
                k2: other.block_size,
            });
        }
        Ok(())
    }

    pub fn multiply(&self, other: &Self) -> Result<Self, DiagError> {
        self.check_same_shape(other)?;
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| canonical_block(a.iter().zip(b).map(|(x, y)| x + y).collect()))
            .collect();
        Ok(self.with_blocks(blocks))
    }

    pub fn dagger(&self) -> Self {
        let blocks = self
            .blocks
            .iter()
            .map(|b| canonical_block(b.iter().map(|p| -p).collect()))
            .collect();
        self.with_blocks(blocks)
    }

    /// `X^c · D · X^c`, up to the global phase absorbed by canonicalisation.
    pub fn x_conjugate(&self, c: &BitString) -> Result<Self, DiagError> {
        if c.len() != self.num_qubits {
            return Err(DiagError::MaskLength {
                expected: self.num_qubits,
                found: c.len(),
            });
        }
        let k = self.block_size;
        let blocks = self
            .blocks
            .iter()
            .enumerate()
            .map(|(b, block)| {
                let flip = (0..k).fold(0usize, |acc, t| acc | ((c.get(b * k + t) as usize) << t));
                canonical_block((0..block.len()).map(|x| block[x ^ flip]).collect())
            })
            .collect();
        Ok(self.with_blocks(blocks))
    }

    pub fn is_identity(&self) -> bool {
        self.flat_phases().all(|p| p == 0.0)
    }

    /// Phasewise comparison on the circle.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.num_qubits == other.num_qubits
            && self.block_size == other.block_size
            && self
                .flat_phases()
                .zip(other.flat_phases())
                .all(|(a, b)| circular_distance(a, b) <= tol)
    }

    /// Lattice coordinates `j` with `θ = 2πj/q` for every free phase, or
    /// `None` if some phase is off the lattice.
    pub fn lattice_key(&self, order: u32) -> Option<Vec<u32>> {
        let q = order as f64;
        self.blocks
            .iter()
            .flat_map(|b| b[1..].iter())
            .map(|&p| {
                let j = (p * q / TAU).round();
                let snapped = j * TAU / q;
                (circular_distance(p, snapped) <= LATTICE_TOLERANCE).then(|| (j as u32) % order)
            })
            .collect()
    }

    fn with_blocks(&self, blocks: Vec<Vec<f64>>) -> Self {
        DiagonalUnitary {
            num_qubits: self.num_qubits,
            block_size: self.block_size,
            blocks,
        }
    }
}

impl fmt::Display for DiagonalUnitary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "diag[k={}]", self.block_size)?;
        for block in &self.blocks {
            f.write_str("(")?;
            for (i, p) in block.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{p:.6}")?;
            }
            f.write_str(")")?;
        }
        Ok(())
    }
}

fn check_shape(n: usize, k: usize) -> Result<(), DiagError> {
    if k == 0 {
        return Err(DiagError::ZeroBlockSize);
    }
    if n == 0 || !n.is_multiple_of(k) {
        return Err(DiagError::NotMultipleOfBlock { n, k });
    }
    Ok(())
}

fn canonical_block(block: Vec<f64>) -> Vec<f64> {
    let base = block[0];
    block.into_iter().map(|p| wrap_phase(p - base)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SubgroupKind {
    /// Every free phase ranges over the whole circle.
    Continuous,
    /// Free phases restricted to multiples of `2π/order`.
    Cyclic { order: u32 },
}

/// Which subgroup of the diagonal group the protocol draws from.
///
/// The same kind applies to every `block_size`-qubit block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SubgroupSpec {
    pub kind: SubgroupKind,
    pub block_size: usize,
}

impl SubgroupSpec {
    pub fn continuous(block_size: usize) -> Self {
        SubgroupSpec {
            kind: SubgroupKind::Continuous,
            block_size,
        }
    }

    pub fn cyclic(order: u32, block_size: usize) -> Self {
        SubgroupSpec {
            kind: SubgroupKind::Cyclic { order },
            block_size,
        }
    }

    pub fn validate(&self) -> Result<(), DiagError> {
        if self.block_size == 0 {
            return Err(DiagError::ZeroBlockSize);
        }
        if let SubgroupKind::Cyclic { order } = self.kind {
            if order < 2 {
                return Err(DiagError::InvalidOrder(order));
            }
        }
        Ok(())
    }

    pub fn validate_for(&self, n: usize) -> Result<(), DiagError> {
        self.validate()?;
        check_shape(n, self.block_size)
    }

    pub fn order(&self) -> Option<u32> {
        match self.kind {
            SubgroupKind::Continuous => None,
            SubgroupKind::Cyclic { order } => Some(order),
        }
    }

    /// Free phases per element on `n` qubits: `(n/k)(2^k − 1)`.
    fn free_phase_count(&self, n: usize) -> usize {
        (n / self.block_size) * ((1 << self.block_size) - 1)
    }

    /// Number of independent single-parameter gates an element carries.
    pub fn free_parameter_count(&self, n: usize) -> Result<usize, DiagError> {
        self.validate_for(n)?;
        match self.kind {
            SubgroupKind::Continuous => Ok(self.free_phase_count(n)),
            SubgroupKind::Cyclic { .. } => Err(DiagError::NotContinuous),
        }
    }

    /// `q^{(n/k)(2^k − 1)}` for cyclic subgroups; saturates at `u128::MAX`.
    pub fn element_count(&self, n: usize) -> Result<u128, DiagError> {
        self.validate_for(n)?;
        let q = self.order().ok_or(DiagError::NotEnumerable)? as u128;
        let exp = self.free_phase_count(n);
        Ok((0..exp)
            .try_fold(1u128, |acc, _| acc.checked_mul(q))
            .unwrap_or(u128::MAX))
    }

    pub fn contains(&self, d: &DiagonalUnitary) -> bool {
        d.block_size() == self.block_size
            && match self.kind {
                SubgroupKind::Continuous => true,
                SubgroupKind::Cyclic { order } => d.lattice_key(order).is_some(),
            }
    }

    /// Uniform draw: independent uniform free phases (Haar measure on the
    /// torus) or independent uniform lattice points.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<DiagonalUnitary, DiagError> {
        self.validate_for(n)?;
        let width = 1usize << self.block_size;
        let blocks = (0..n / self.block_size)
            .map(|_| {
                let mut block = vec![0.0; width];
                for p in block.iter_mut().skip(1) {
                    *p = match self.kind {
                        SubgroupKind::Continuous => wrap_phase(rng.random::<f64>() * TAU),
                        SubgroupKind::Cyclic { order } => lattice_phase(rng.random_range(0..order), order),
                    };
                }
                block
            })
            .collect();
        Ok(DiagonalUnitary {
            num_qubits: n,
            block_size: self.block_size,
            blocks,
        })
    }

    /// Element with the given lattice coordinates (one per free phase).
    pub fn element_from_key(&self, n: usize, key: &[u32]) -> Result<DiagonalUnitary, DiagError> {
        self.validate_for(n)?;
        let order = self.order().ok_or(DiagError::NotEnumerable)?;
        let free = (1usize << self.block_size) - 1;
        if key.len() != self.free_phase_count(n) {
            return Err(DiagError::BlockLength {
                block: 0,
                expected: self.free_phase_count(n),
                found: key.len(),
            });
        }
        let blocks = key
            .chunks(free)
            .map(|chunk| {
                std::iter::once(0.0)
                    .chain(chunk.iter().map(|&j| lattice_phase(j % order, order)))
                    .collect()
            })
            .collect();
        Ok(DiagonalUnitary {
            num_qubits: n,
            block_size: self.block_size,
            blocks,
        })
    }

    /// Every element, in mixed-radix order of the lattice coordinates.
    pub fn enumerate(&self, n: usize, cap: u128) -> Result<Vec<DiagonalUnitary>, DiagError> {
        let size = self.element_count(n)?;
        if size > cap {
            return Err(DiagError::EnumerationCap { size, cap });
        }
        let order = self.order().expect("element_count checked cyclic");
        let mut key = vec![0u32; self.free_phase_count(n)];
        let mut out = Vec::with_capacity(size as usize);
        for _ in 0..size {
            out.push(self.element_from_key(n, &key)?);
            for digit in key.iter_mut() {
                *digit += 1;
                if *digit < order {
                    break;
                }
                *digit = 0;
            }
        }
        Ok(out)
    }

    pub fn verify_closure(&self, n: usize) -> Result<ClosureReport, DiagError> {
        let elements = self.enumerate(n, DEFAULT_ENUMERATION_CAP)?;
        Ok(verify_closure_of(&elements, self.order().expect("enumerated"), n))
    }
}

fn lattice_phase(j: u32, order: u32) -> f64 {
    wrap_phase(TAU * j as f64 / order as f64)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ClosureViolation {
    MissingIdentity,
    OffLattice { index: usize },
    Duplicate { index: usize },
    Product { left: usize, right: usize },
    Dagger { index: usize },
    XConjugate { index: usize, mask: BitString },
}

impl fmt::Display for ClosureViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClosureViolation::MissingIdentity => write!(f, "identity missing"),
            ClosureViolation::OffLattice { index } => write!(f, "element {index} is off the phase lattice"),
            ClosureViolation::Duplicate { index } => write!(f, "element {index} is a duplicate"),
            ClosureViolation::Product { left, right } => {
                write!(f, "product of elements {left} and {right} falls outside the set")
            }
            ClosureViolation::Dagger { index } => write!(f, "inverse of element {index} falls outside the set"),
            ClosureViolation::XConjugate { index, mask } => {
                write!(f, "X^{mask} conjugate of element {index} falls outside the set")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClosureReport {
    pub size: usize,
    pub products_checked: u64,
    pub violation: Option<ClosureViolation>,
}

impl ClosureReport {
    pub fn is_closed(&self) -> bool {
        self.violation.is_none()
    }
}

/// Element pairs checked exhaustively below this set size; above it the
/// product check uses the per-coordinate generators instead.
const FULL_PRODUCT_CHECK_LIMIT: usize = 4096;

/// Checks that `elements` is closed under multiplication, inversion and
/// conjugation by every `X` string on `n` qubits, using exact lattice
/// coordinates of order `order` for membership.
pub fn verify_closure_of(elements: &[DiagonalUnitary], order: u32, n: usize) -> ClosureReport {
    let mut report = ClosureReport {
        size: elements.len(),
        products_checked: 0,
        violation: None,
    };
    let mut keys = Vec::with_capacity(elements.len());
    let mut set = HashSet::with_capacity(elements.len());
    for (index, d) in elements.iter().enumerate() {
        let Some(key) = d.lattice_key(order) else {
            report.violation = Some(ClosureViolation::OffLattice { index });
            return report;
        };
        if !set.insert(key.clone()) {
            report.violation = Some(ClosureViolation::Duplicate { index });
            return report;
        }
        keys.push(key);
    }
    let member = |d: &DiagonalUnitary| d.lattice_key(order).is_some_and(|k| set.contains(&k));

    if !elements.iter().any(DiagonalUnitary::is_identity) {
        report.violation = Some(ClosureViolation::MissingIdentity);
        return report;
    }
    for (index, d) in elements.iter().enumerate() {
        if !member(&d.dagger()) {
            report.violation = Some(ClosureViolation::Dagger { index });
            return report;
        }
        for c in 0..1usize << n {
            let mask = BitString::from_index(c, n);
            let conj = d.x_conjugate(&mask).expect("mask length is n");
            if !member(&conj) {
                report.violation = Some(ClosureViolation::XConjugate { index, mask });
                return report;
            }
        }
    }

    // Right factors: everything for small sets, otherwise the generators
    // (one free phase at 2π/q). Closure under generators plus finiteness
    // already forces closure under the generated group.
    let right: Vec<usize> = if elements.len() <= FULL_PRODUCT_CHECK_LIMIT {
        (0..elements.len()).collect()
    } else {
        let free = keys.first().map_or(0, Vec::len);
        (0..free)
            .filter_map(|slot| {
                keys.iter()
                    .position(|k| k.iter().enumerate().all(|(i, &v)| v == u32::from(i == slot)))
            })
            .collect()
    };
    for (left, a) in elements.iter().enumerate() {
        for &r in &right {
            report.products_checked += 1;
            let ok = a.multiply(&elements[r]).map(|p| member(&p)).unwrap_or(false);
            if !ok {
                report.violation = Some(ClosureViolation::Product { left, right: r });
                return report;
            }
        }
    }
    report
}
