//! What Bob sees for one layer is the pair `(C_i, |φ_i>)` with
//! `C_i = D_i† U'_i` and `|φ_i> = Z^{r_i} D_i |+>^{⊗n}`. Blindness needs the
//! instruction distribution not to depend on `U'_i` and the register to be
//! maximally mixed given the instruction. Fixing `C_i` fixes `D_i`, so the
//! second condition is the same as the `D`-conditional average over `r`.

use std::collections::HashMap;
use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use super::stats::ks_two_sample;
use super::{verdict, AnalyzerError, EXACT_TOLERANCE};
use crate::bits::BitString;
use crate::diaggroup::{DiagonalUnitary, SubgroupKind, SubgroupSpec, DEFAULT_ENUMERATION_CAP};
use crate::protocol::{prepare_layer, LayerSecret};
use crate::qsim::DensityAccumulator;

/// Overall significance of the per-coordinate KS tests before Bonferroni.
pub const KS_SIGNIFICANCE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BlindnessMode {
    Exhaustive,
    Sampled,
}

/// How the secret pads of consecutive layers are drawn. Only
/// `Independent` is the protocol; the other exists to exercise the
/// cross-layer check.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PadSampler {
    #[default]
    Independent,
    ReusedAcrossLayers,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CrossLayerReport {
    pub samples: usize,
    /// Largest `|mean exp(i(θ₁ − θ₂))|` over phase coordinates of `C_1, C_2`.
    pub max_resultant: f64,
    pub threshold: f64,
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlindnessReport {
    pub mode: BlindnessMode,
    pub n: usize,
    pub block_size: usize,
    /// Group order `q` for exhaustive runs.
    pub order: Option<u32>,
    /// Worst trace distance from `I/2^n` over all averaged slices.
    pub state_trace_distance: f64,
    pub state_threshold: f64,
    /// Exhaustive: total variation of the `C` counts from uniform and
    /// between the pair (exact, from integer counts). Sampled: largest KS
    /// statistic.
    pub instruction_distribution_deviation: f64,
    /// Exhaustive only.
    pub instruction_uniform: Option<bool>,
    pub instruction_pair_identical: Option<bool>,
    /// Sampled only: smallest KS p-value and the corrected threshold.
    pub ks_min_p_value: Option<f64>,
    pub ks_threshold: Option<f64>,
    /// `|{(D, r)}|` or the number of seeded draws.
    pub size: u128,
    pub cross_layer: Option<CrossLayerReport>,
    pub passed: bool,
}

impl fmt::Display for BlindnessReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "suite: blindness")?;
        match self.mode {
            BlindnessMode::Exhaustive => writeln!(f, "mode: exhaustive")?,
            BlindnessMode::Sampled => writeln!(f, "mode: sampled")?,
        }
        writeln!(f, "n: {}", self.n)?;
        writeln!(f, "block_size: {}", self.block_size)?;
        if let Some(q) = self.order {
            writeln!(f, "order: {q}")?;
        }
        match self.mode {
            BlindnessMode::Exhaustive => writeln!(f, "enumeration_size: {}", self.size)?,
            BlindnessMode::Sampled => writeln!(f, "sample_count: {}", self.size)?,
        }
        writeln!(f, "state_trace_distance: {:.3e}", self.state_trace_distance)?;
        writeln!(f, "state_threshold: {:.3e}", self.state_threshold)?;
        writeln!(
            f,
            "instruction_distribution_deviation: {:.3e}",
            self.instruction_distribution_deviation
        )?;
        if let (Some(u), Some(i)) = (self.instruction_uniform, self.instruction_pair_identical) {
            writeln!(f, "instruction_uniform: {u}")?;
            writeln!(f, "instruction_pair_identical: {i}")?;
        }
        if let (Some(p), Some(t)) = (self.ks_min_p_value, self.ks_threshold) {
            writeln!(f, "ks_min_p_value: {p:.4}")?;
            writeln!(f, "ks_threshold: {t:.3e}")?;
        }
        if let Some(c) = &self.cross_layer {
            writeln!(
                f,
                "cross_layer_resultant: {:.3e} (threshold {:.3e}, informational){}",
                c.max_resultant,
                c.threshold,
                if c.flagged { " FLAGGED" } else { "" }
            )?;
        }
        write!(f, "verdict: {}", verdict(self.passed))
    }
}

fn check_pair(spec: &SubgroupSpec, n: usize, pair: (&DiagonalUnitary, &DiagonalUnitary)) -> Result<(), AnalyzerError> {
    for u in [pair.0, pair.1] {
        if u.num_qubits() != n || !spec.contains(u) {
            return Err(AnalyzerError::Precondition(
                "U' must be an n-qubit element of the subgroup".into(),
            ));
        }
    }
    Ok(())
}

fn z_masks(n: usize) -> impl Iterator<Item = BitString> {
    (0..1usize << n).map(move |x| BitString::from_index(x, n))
}

/// Enumerates every `(D, r)` with `D` ranging over the whole subgroup.
pub fn verify_blindness_exhaustive(
    spec: &SubgroupSpec,
    n: usize,
    pair: (&DiagonalUnitary, &DiagonalUnitary),
) -> Result<BlindnessReport, AnalyzerError> {
    if spec.kind == SubgroupKind::Continuous {
        return Err(AnalyzerError::Precondition(
            "exhaustive blindness needs a discrete subgroup".into(),
        ));
    }
    let pads = spec.enumerate(n, DEFAULT_ENUMERATION_CAP)?;
    verify_blindness_exhaustive_with_pads(spec, n, &pads, pair)
}

/// As [`verify_blindness_exhaustive`] but with the pads drawn uniformly
/// from `pads` instead of the full group; a set that is not the group
/// should fail.
pub fn verify_blindness_exhaustive_with_pads(
    spec: &SubgroupSpec,
    n: usize,
    pads: &[DiagonalUnitary],
    pair: (&DiagonalUnitary, &DiagonalUnitary),
) -> Result<BlindnessReport, AnalyzerError> {
    let order = spec
        .order()
        .ok_or_else(|| AnalyzerError::Precondition("exhaustive blindness needs a discrete subgroup".into()))?;
    check_pair(spec, n, pair)?;
    if pads.is_empty() {
        return Err(AnalyzerError::Precondition("no pads to enumerate".into()));
    }
    let group_size = spec.element_count(n)?;
    let per_pad = 1u128 << n;
    let total = pads.len() as u128 * per_pad;

    let count = |u: &DiagonalUnitary| -> Result<(HashMap<Vec<u32>, u128>, u128), AnalyzerError> {
        let mut counts = HashMap::new();
        let mut off_lattice = 0u128;
        for d in pads {
            match d.dagger().multiply(u)?.lattice_key(order) {
                Some(key) => *counts.entry(key).or_insert(0u128) += per_pad,
                None => off_lattice += per_pad,
            }
        }
        Ok((counts, off_lattice))
    };
    let (counts_a, off_a) = count(pair.0)?;
    let (counts_b, off_b) = count(pair.1)?;

    // TV from uniform is Σ_g |c_g·G − total| / (2·total·G); keep it integral.
    let distance_from_uniform = |counts: &HashMap<Vec<u32>, u128>, off: u128| -> f64 {
        let seen: u128 = counts.values().map(|&c| (c * group_size).abs_diff(total)).sum();
        let unseen = (group_size - counts.len() as u128) * total;
        let numerator = seen + unseen + off * group_size;
        numerator as f64 / (2 * total * group_size) as f64
    };
    let between = {
        let mut keys: Vec<&Vec<u32>> = counts_a.keys().chain(counts_b.keys()).collect();
        keys.sort();
        keys.dedup();
        let diff: u128 = keys
            .into_iter()
            .map(|k| {
                counts_a
                    .get(k)
                    .copied()
                    .unwrap_or(0)
                    .abs_diff(counts_b.get(k).copied().unwrap_or(0))
            })
            .sum::<u128>()
            + off_a.abs_diff(off_b);
        diff as f64 / (2 * total) as f64
    };
    let tv_a = distance_from_uniform(&counts_a, off_a);
    let tv_b = distance_from_uniform(&counts_b, off_b);
    let instruction_uniform = tv_a == 0.0 && tv_b == 0.0;
    let instruction_pair_identical = counts_a == counts_b && off_a == off_b;

    let mut all = DensityAccumulator::new(n);
    let mut worst_slice: f64 = 0.0;
    for pad in pads {
        let mut slice = DensityAccumulator::new(n);
        for z_mask in z_masks(n) {
            let phi = prepare_layer(&LayerSecret {
                pad: pad.clone(),
                z_mask,
            })?;
            slice.add(&phi, 1.0)?;
            all.add(&phi, 1.0)?;
        }
        worst_slice = worst_slice.max(slice.finish()?.trace_distance_to_maximally_mixed()?);
    }
    let state_trace_distance = worst_slice.max(all.finish()?.trace_distance_to_maximally_mixed()?);

    let passed = instruction_uniform && instruction_pair_identical && state_trace_distance < EXACT_TOLERANCE;
    Ok(BlindnessReport {
        mode: BlindnessMode::Exhaustive,
        n,
        block_size: spec.block_size,
        order: Some(order),
        state_trace_distance,
        state_threshold: EXACT_TOLERANCE,
        instruction_distribution_deviation: tv_a.max(tv_b).max(between),
        instruction_uniform: Some(instruction_uniform),
        instruction_pair_identical: Some(instruction_pair_identical),
        ks_min_p_value: None,
        ks_threshold: None,
        size: total,
        cross_layer: None,
        passed,
    })
}

fn free_coordinates(d: &DiagonalUnitary) -> impl Iterator<Item = f64> + '_ {
    d.blocks().iter().flat_map(|b| b[1..].iter().copied())
}

fn random_z_mask<R: Rng + ?Sized>(n: usize, rng: &mut R) -> BitString {
    BitString::from_bits((0..n).map(|_| rng.random::<bool>()).collect())
}

/// Monte Carlo version for the continuous torus. The register test uses
/// the bound `3·2^n/√samples`; the instruction test runs a two-sample KS
/// test per free phase of `C` between the two `U'` choices, Bonferroni
/// corrected. The cross-layer check is reported but does not affect the
/// verdict.
pub fn verify_blindness_sampled<R: Rng + ?Sized>(
    spec: &SubgroupSpec,
    n: usize,
    pair: (&DiagonalUnitary, &DiagonalUnitary),
    samples: usize,
    sampler: PadSampler,
    rng: &mut R,
) -> Result<BlindnessReport, AnalyzerError> {
    if spec.kind != SubgroupKind::Continuous {
        return Err(AnalyzerError::Precondition(
            "sampled blindness is for the continuous subgroup".into(),
        ));
    }
    if samples < 1000 {
        return Err(AnalyzerError::Precondition(
            "sampled blindness needs at least 1000 samples".into(),
        ));
    }
    spec.validate_for(n)?;
    check_pair(spec, n, pair)?;

    let mut acc = DensityAccumulator::new(n);
    for _ in 0..samples {
        let phi = prepare_layer(&LayerSecret {
            pad: spec.sample(n, rng)?,
            z_mask: random_z_mask(n, rng),
        })?;
        acc.add(&phi, 1.0)?;
    }
    let state_trace_distance = acc.finish()?.trace_distance_to_maximally_mixed()?;
    let state_threshold = 3.0 * (1u64 << n) as f64 / (samples as f64).sqrt();

    let coords = spec.free_parameter_count(n)?;
    let mut marginals = |u: &DiagonalUnitary| -> Result<Vec<Vec<f64>>, AnalyzerError> {
        let mut cols = vec![Vec::with_capacity(samples); coords];
        for _ in 0..samples {
            let c = spec.sample(n, rng)?.dagger().multiply(u)?;
            for (col, v) in cols.iter_mut().zip(free_coordinates(&c)) {
                col.push(v);
            }
        }
        Ok(cols)
    };
    let mut a = marginals(pair.0)?;
    let mut b = marginals(pair.1)?;
    let mut max_d: f64 = 0.0;
    let mut min_p: f64 = 1.0;
    for (ca, cb) in a.iter_mut().zip(b.iter_mut()) {
        let (d, p) = ks_two_sample(ca, cb);
        max_d = max_d.max(d);
        min_p = min_p.min(p);
    }
    let ks_threshold = KS_SIGNIFICANCE / coords as f64;

    let cross_layer = cross_layer_correlation(spec, n, pair, samples, sampler, rng)?;
    let passed = state_trace_distance < state_threshold && min_p > ks_threshold;
    Ok(BlindnessReport {
        mode: BlindnessMode::Sampled,
        n,
        block_size: spec.block_size,
        order: None,
        state_trace_distance,
        state_threshold,
        instruction_distribution_deviation: max_d,
        instruction_uniform: None,
        instruction_pair_identical: None,
        ks_min_p_value: Some(min_p),
        ks_threshold: Some(ks_threshold),
        size: samples as u128,
        cross_layer: Some(cross_layer),
        passed,
    })
}

/// Two consecutive layers with `U'_1 = pair.0` and `U'_2 = pair.1`. With
/// independent pads the phase differences of `C_1` and `C_2` are uniform,
/// so their mean resultant is `O(1/√samples)`. A reused pad makes the
/// difference the constant `U'_2 − U'_1` and the resultant 1.
pub fn cross_layer_correlation<R: Rng + ?Sized>(
    spec: &SubgroupSpec,
    n: usize,
    pair: (&DiagonalUnitary, &DiagonalUnitary),
    samples: usize,
    sampler: PadSampler,
    rng: &mut R,
) -> Result<CrossLayerReport, AnalyzerError> {
    let coords = spec.free_parameter_count(n)?;
    let mut sums = vec![Complex64::new(0.0, 0.0); coords];
    for _ in 0..samples {
        let d1 = spec.sample(n, rng)?;
        let d2 = match sampler {
            PadSampler::Independent => spec.sample(n, rng)?,
            PadSampler::ReusedAcrossLayers => d1.clone(),
        };
        let c1 = d1.dagger().multiply(pair.0)?;
        let c2 = d2.dagger().multiply(pair.1)?;
        for (s, (x, y)) in sums.iter_mut().zip(free_coordinates(&c1).zip(free_coordinates(&c2))) {
            *s += Complex64::from_polar(1.0, x - y);
        }
    }
    let max_resultant = sums.iter().map(|s| s.norm() / samples as f64).fold(0.0, f64::max);
    // N·R² is asymptotically Exp(1) under independence.
    let threshold = 5.0 / (samples as f64).sqrt();
    Ok(CrossLayerReport {
        samples,
        max_resultant,
        threshold,
        flagged: max_resultant > threshold,
    })
}
