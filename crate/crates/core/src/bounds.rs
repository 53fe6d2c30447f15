//! Bounds on Γ(N), the number of single-parameter gates that can be hidden
//! while sending N qubits, for four models of the client's device, plus
//! the rate the diagonal-layer protocol actually achieves.
//!
//! Everything is exact: big integers for the `2^k` terms, rationals where
//! a formula divides.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

use crate::diaggroup::{SubgroupKind, SubgroupSpec};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BoundsError {
    #[error("k must be at least 1")]
    ZeroBlockSize,
    #[error("N must be at least 1")]
    ZeroTransmitted,
    #[error("N must be divisible by k (N = {total}, k = {k})")]
    NotDivisible { total: u64, k: u32 },
    #[error("the gate budget requires n ≥ log2 f(N) (n = {n}, f(N) = {budget})")]
    RegisterTooSmall { n: u32, budget: BigInt },
    #[error("the gate budget requires (m − 1) to divide f(N) (m = {m}, f(N) = {budget})")]
    BudgetNotDivisible { m: u32, budget: BigInt },
    #[error("the gate budget f(N) must be positive")]
    NonPositiveBudget,
    #[error("memory setting requires n ≥ k (n = {n}, k = {k})")]
    MemoryTooSmall { n: u32, k: u32 },
    #[error("memory setting requires N ≥ k (N = {total}, k = {k})")]
    TooFewTransmitted { total: u64, k: u32 },
    #[error("n must be a multiple of k (n = {n}, k = {k})")]
    NotMultipleOfBlock { n: u32, k: u32 },
    #[error("{0}")]
    Precondition(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Setting {
    /// Alice sends single qubits in separable states.
    SeparableSingleQubit,
    /// Alice sends separable groups of `k` entangled qubits.
    SeparableKQubit { k: u32 },
    /// Alice applies commuting gates to a fixed input; optionally at most
    /// `budget` single-parameter gates per run, spread over `m − 1` layers
    /// of `n` qubits.
    Commuting { budget: Option<BigInt>, n: u32, m: u32 },
    /// Alice has a `k`-qubit working memory and an `n`-qubit register.
    MemoryK { k: u32, n: u32 },
}

impl Setting {
    pub fn name(&self) -> &'static str {
        match self {
            Setting::SeparableSingleQubit => "separable1q",
            Setting::SeparableKQubit { .. } => "separablekq",
            Setting::Commuting { .. } => "commuting",
            Setting::MemoryK { .. } => "memory",
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Setting::SeparableSingleQubit => write!(f, "separable1q"),
            Setting::SeparableKQubit { k } => write!(f, "separablekq(k={k})"),
            Setting::Commuting { budget: None, .. } => write!(f, "commuting"),
            Setting::Commuting { budget: Some(b), n, m } => write!(f, "commuting(f={b}, n={n}, m={m})"),
            Setting::MemoryK { k, n } => write!(f, "memory(k={k}, n={n})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GammaBounds {
    pub setting: Setting,
    /// Qubits transmitted, N.
    pub transmitted: u64,
    pub lower: BigRational,
    pub upper: BigRational,
}

fn int(x: impl Into<BigInt>) -> BigRational {
    BigRational::from_integer(x.into())
}

fn pow2(e: u64) -> BigInt {
    BigInt::one() << e
}

/// `(lower, upper)` for `setting` after `total` transmitted qubits.
pub fn gamma_bounds(setting: &Setting, total: u64) -> Result<GammaBounds, BoundsError> {
    if total == 0 {
        return Err(BoundsError::ZeroTransmitted);
    }
    let big_n = BigInt::from(total);
    let (lower, upper) = match setting {
        Setting::SeparableSingleQubit => (int(big_n.clone()), int(2 * big_n)),
        Setting::SeparableKQubit { k } => {
            let k = *k;
            if k == 0 {
                return Err(BoundsError::ZeroBlockSize);
            }
            if !total.is_multiple_of(k as u64) {
                return Err(BoundsError::NotDivisible { total, k });
            }
            let lower = (big_n / k) * (pow2(k as u64) - BigInt::one());
            let upper = 2 * &lower;
            (int(lower), int(upper))
        }
        Setting::Commuting { budget: None, .. } => {
            let full = pow2(total) - BigInt::one();
            (int(full.clone()), int(full))
        }
        Setting::Commuting { budget: Some(f), n, m } => {
            if *f <= BigInt::zero() {
                return Err(BoundsError::NonPositiveBudget);
            }
            // n ≥ log2 f  ⇔  f ≤ 2^n.
            if *f > pow2(*n as u64) {
                return Err(BoundsError::RegisterTooSmall {
                    n: *n,
                    budget: f.clone(),
                });
            }
            if *m < 2 || (f % BigInt::from(m - 1)) != BigInt::zero() {
                return Err(BoundsError::BudgetNotDivisible {
                    m: *m,
                    budget: f.clone(),
                });
            }
            (int(f.clone()), int(f.clone()))
        }
        Setting::MemoryK { k, n } => {
            let (k, n) = (*k, *n);
            if k == 0 {
                return Err(BoundsError::ZeroBlockSize);
            }
            if n < k {
                return Err(BoundsError::MemoryTooSmall { n, k });
            }
            if total < k as u64 {
                return Err(BoundsError::TooFewTransmitted { total, k });
            }
            let k64 = k as u64;
            let per_register = pow2(k64 - 1) * BigInt::from(n - k + 2) - 1;
            let lower = BigRational::new(big_n.clone() * per_register, BigInt::from(n));
            let upper = (big_n - k) * (pow2(2 * k64) - pow2(2 * (k64 - 1))) + (pow2(2 * k64) - BigInt::one());
            (lower, int(upper))
        }
    };
    Ok(GammaBounds {
        setting: setting.clone(),
        transmitted: total,
        lower,
        upper,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AchievedRate {
    pub hidden_gates: BigInt,
    pub transmitted: BigInt,
    pub rate: BigRational,
}

/// Gates hidden by `m` layers of `(n/k)` arbitrary `k`-qubit diagonal
/// blocks, per qubit sent. Only Alice→Bob registers count unless
/// `count_return_register` adds the register Bob sends back in
/// quantum-output mode.
pub fn achieved_rate(
    spec: &SubgroupSpec,
    n: u32,
    m: u32,
    count_return_register: bool,
) -> Result<AchievedRate, BoundsError> {
    if spec.kind != SubgroupKind::Continuous {
        return Err(BoundsError::Precondition(
            "parameter counting needs the continuous subgroup".into(),
        ));
    }
    let k = spec.block_size as u32;
    if k == 0 {
        return Err(BoundsError::ZeroBlockSize);
    }
    if n == 0 || !n.is_multiple_of(k) {
        return Err(BoundsError::NotMultipleOfBlock { n, k });
    }
    if m == 0 {
        return Err(BoundsError::Precondition("m must be at least 1".into()));
    }
    let hidden_gates = BigInt::from(m) * BigInt::from(n / k) * (pow2(k as u64) - BigInt::one());
    let layers = if count_return_register { m + 1 } else { m };
    let transmitted = BigInt::from(n) * BigInt::from(layers);
    let rate = BigRational::new(hidden_gates.clone(), transmitted.clone());
    Ok(AchievedRate {
        hidden_gates,
        transmitted,
        rate,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub label: &'static str,
    /// Exact gate count, when the protocol determines one.
    pub gates: Option<BigRational>,
    /// Asymptotic form when only the growth is known.
    pub asymptotic: Option<&'static str>,
    /// Value of the asymptotic form, without its unknown constant.
    pub shape_value: Option<f64>,
    pub constant_unspecified: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonTable {
    pub transmitted: u64,
    pub n: u32,
    pub rows: Vec<ComparisonRow>,
    /// `(label, ratio)` of the upper bound over each exact protocol count.
    pub gaps: Vec<(&'static str, BigRational)>,
}

/// Single-qubit-device protocols against the `2N` upper bound.
pub fn protocol_comparison(total: u64, n: u32) -> Result<ComparisonTable, BoundsError> {
    if total < 2 || n < 2 {
        return Err(BoundsError::Precondition("comparison needs N ≥ 2 and n ≥ 2".into()));
    }
    let big_n = int(BigInt::from(total));
    let ubqc_explicit = &big_n * BigRational::new(3.into(), 4.into());
    let ubqc_general = big_n.clone();
    let gubqc = &big_n * achieved_rate(&SubgroupSpec::continuous(1), n, 1, false)?.rate;
    let upper = gamma_bounds(&Setting::SeparableSingleQubit, total)?.upper;
    let exact = |label, gates: BigRational| ComparisonRow {
        label,
        gates: Some(gates),
        asymptotic: None,
        shape_value: None,
        constant_unspecified: false,
    };
    let rows = vec![
        exact("UBQC explicit construction (3N/4)", ubqc_explicit.clone()),
        exact("UBQC general pattern (N)", ubqc_general.clone()),
        exact("GUBQC, k = 1", gubqc),
        ComparisonRow {
            label: "GMMR",
            gates: None,
            asymptotic: Some("N / log2(n)"),
            shape_value: Some(total as f64 / (n as f64).log2()),
            constant_unspecified: true,
        },
        exact("upper bound, separable single qubits (2N)", upper.clone()),
    ];
    let gaps = vec![
        ("upper bound / UBQC explicit", &upper / &ubqc_explicit),
        ("upper bound / UBQC general", &upper / &ubqc_general),
    ];
    Ok(ComparisonTable {
        transmitted: total,
        n,
        rows,
        gaps,
    })
}

/// `"7"` or `"7/2"`.
pub fn format_rational(x: &BigRational) -> String {
    if x.is_integer() {
        x.to_integer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

/// Decimal rendering; falls back to the exact form when it does not fit
/// an `f64`.
pub fn format_decimal(x: &BigRational, digits: usize) -> String {
    match x.to_f64() {
        Some(v) if v.is_finite() => format!("{v:.digits$}"),
        _ => format_rational(x),
    }
}

impl fmt::Display for GammaBounds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}  N={}  lower={}  upper={}",
            self.setting,
            self.transmitted,
            format_rational(&self.lower),
            format_rational(&self.upper)
        )
    }
}

impl fmt::Display for ComparisonTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "N = {}, n = {}", self.transmitted, self.n)?;
        let width = self
            .rows
            .iter()
            .map(|r| r.label.len())
            .chain(self.gaps.iter().map(|g| g.0.len()))
            .max()
            .unwrap_or(0);
        for row in &self.rows {
            match (&row.gates, row.asymptotic) {
                (Some(g), _) => writeln!(f, "{:<width$}  {}", row.label, format_rational(g))?,
                (None, Some(form)) => writeln!(
                    f,
                    "{:<width$}  ∝ {} ≈ {:.4} × c (proportionality constant unspecified)",
                    row.label,
                    form,
                    row.shape_value.unwrap_or(f64::NAN)
                )?,
                (None, None) => writeln!(f, "{:<width$}  -", row.label)?,
            }
        }
        for (i, (label, ratio)) in self.gaps.iter().enumerate() {
            write!(
                f,
                "{:<width$}  {} ({})",
                label,
                format_rational(ratio),
                format_decimal(ratio, 4)
            )?;
            if i + 1 < self.gaps.len() {
                writeln!(f)?;
            }
        }
        Ok(())
    }
}
