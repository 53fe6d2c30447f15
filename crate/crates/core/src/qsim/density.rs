use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{SimError, StateVector};

const HERMITIAN_TOLERANCE: f64 = 1e-10;

/// Density operator on `num_qubits` qubits.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    num_qubits: usize,
    entries: DMatrix<Complex64>,
}

impl DensityMatrix {
    /// `Σ w |ψ><ψ|` over a weighted ensemble of equal-sized pure states.
    pub fn from_ensemble(states: &[(StateVector, f64)]) -> Result<Self, SimError> {
        let first = states.first().ok_or(SimError::EmptyEnsemble)?;
        let n = first.0.num_qubits();
        let total: f64 = states.iter().map(|(_, w)| w).sum();
        if states.iter().any(|(_, w)| *w < 0.0) || (total - 1.0).abs() > 1e-10 {
            return Err(SimError::Weights(total));
        }
        let mut acc = DensityAccumulator::new(n);
        for (psi, w) in states {
            acc.add(psi, *w)?;
        }
        Ok(acc.finish_unnormalized())
    }

    pub fn pure(psi: &StateVector) -> Self {
        let mut acc = DensityAccumulator::new(psi.num_qubits());
        acc.add(psi, 1.0).expect("dimension matches by construction");
        acc.finish_unnormalized()
    }

    pub fn maximally_mixed(n: usize) -> Self {
        let dim = 1usize << n;
        DensityMatrix {
            num_qubits: n,
            entries: DMatrix::from_diagonal_element(dim, dim, Complex64::new(1.0 / dim as f64, 0.0)),
        }
    }

    pub fn from_matrix(num_qubits: usize, entries: DMatrix<Complex64>) -> Result<Self, SimError> {
        let dim = 1usize << num_qubits;
        if entries.nrows() != dim || entries.ncols() != dim {
            return Err(SimError::Dimension {
                expected: dim,
                found: entries.nrows(),
            });
        }
        Ok(DensityMatrix { num_qubits, entries })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.entries[(row, col)]
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn trace(&self) -> Complex64 {
        self.entries.trace()
    }

    pub fn hermitian_deviation(&self) -> f64 {
        (&self.entries - self.entries.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Eigenvalues in ascending order. Fails if the matrix is not Hermitian.
    pub fn eigenvalues(&self) -> Result<Vec<f64>, SimError> {
        let dev = self.hermitian_deviation();
        if dev > HERMITIAN_TOLERANCE {
            return Err(SimError::NotHermitian(dev));
        }
        // Symmetrize so that rounding noise cannot leak into the solver.
        let herm = (&self.entries + self.entries.adjoint()) * Complex64::new(0.5, 0.0);
        let mut values: Vec<f64> = herm.symmetric_eigenvalues().iter().copied().collect();
        values.sort_by(f64::total_cmp);
        Ok(values)
    }

    /// Hermitian, unit trace and positive semidefinite, each to 1e-10.
    pub fn is_valid(&self) -> bool {
        let trace_ok = (self.trace() - Complex64::new(1.0, 0.0)).norm() <= 1e-10;
        match self.eigenvalues() {
            Ok(values) => trace_ok && values.first().is_none_or(|&v| v > -1e-10),
            Err(_) => false,
        }
    }

    /// `½‖ρ − I/2^n‖₁`. Since `I/2^n` commutes with everything this is
    /// `½ Σ |λ_i − 2^{-n}|` over the eigenvalues of `ρ`.
    pub fn trace_distance_to_maximally_mixed(&self) -> Result<f64, SimError> {
        let uniform = 1.0 / (1usize << self.num_qubits) as f64;
        Ok(0.5 * self.eigenvalues()?.iter().map(|l| (l - uniform).abs()).sum::<f64>())
    }
}

/// Streaming `Σ w |ψ><ψ|` builder for large ensembles.
#[derive(Clone, Debug)]
pub struct DensityAccumulator {
    num_qubits: usize,
    entries: DMatrix<Complex64>,
    total_weight: f64,
}

impl DensityAccumulator {
    pub fn new(num_qubits: usize) -> Self {
        let dim = 1usize << num_qubits;
        DensityAccumulator {
            num_qubits,
            entries: DMatrix::zeros(dim, dim),
            total_weight: 0.0,
        }
    }

    pub fn add(&mut self, psi: &StateVector, weight: f64) -> Result<(), SimError> {
        if psi.num_qubits() != self.num_qubits {
            return Err(SimError::Dimension {
                expected: self.num_qubits,
                found: psi.num_qubits(),
            });
        }
        let amps = psi.amplitudes();
        for (r, a) in amps.iter().enumerate() {
            let wa = a * weight;
            for (c, b) in amps.iter().enumerate() {
                self.entries[(r, c)] += wa * b.conj();
            }
        }
        self.total_weight += weight;
        Ok(())
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    /// Divides by the accumulated weight.
    pub fn finish(self) -> Result<DensityMatrix, SimError> {
        if self.total_weight <= 0.0 {
            return Err(SimError::EmptyEnsemble);
        }
        let scale = Complex64::new(self.total_weight.recip(), 0.0);
        Ok(DensityMatrix {
            num_qubits: self.num_qubits,
            entries: self.entries * scale,
        })
    }

    fn finish_unnormalized(self) -> DensityMatrix {
        DensityMatrix {
            num_qubits: self.num_qubits,
            entries: self.entries,
        }
    }
}
