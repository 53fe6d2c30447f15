//! Run configuration: strict TOML with a schema version. Every rejection
//! names the key at fault.

use std::fmt;
use std::path::{Path, PathBuf};

use gubqc_core::diaggroup::{DiagonalUnitary, SubgroupKind, SubgroupSpec};
use gubqc_core::protocol::{Computation, OutputMode, Seeds};
use gubqc_core::qsim::DEFAULT_MAX_QUBITS;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Deserialize;

use crate::angle::Angle;

pub const SCHEMA_VERSION: u32 = 1;
pub const CONFIG_DIR_ENV: &str = "GUBQC_CONFIG_DIR";
pub const DEFAULT_CONFIG_NAME: &str = "gubqc.toml";

/// Rendered into `--help`; the CLI tests check that each key appears.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("schema_version", "must be 1"),
    ("n", "qubits per register"),
    ("m", "number of layers; n·m ≤ 12"),
    ("output_mode", "\"classical\" or \"quantum\" (default classical)"),
    ("subgroup.kind", "\"cyclic\" or \"continuous\""),
    ("subgroup.k", "block size; n must be a multiple of k (default 1)"),
    ("subgroup.q", "phase lattice order for cyclic subgroups, ≥ 2"),
    (
        "layers",
        "\"random\" (default) or m lists of (n/k)·2^k phases such as \"3/4pi\"",
    ),
    ("layer_seed", "seed for random layers (default 0)"),
    ("seeds.alice", "Alice's key seed (u64, default 0)"),
    ("seeds.bob", "Bob's measurement seed (u64, default 0)"),
    ("transport.kind", "\"inprocess\" (default) or \"socket\""),
    ("transport.host", "server host for socket transport (default 127.0.0.1)"),
    ("transport.port", "server port for socket transport (default 7878)"),
    ("output.transcript", "where `run` writes the transcript"),
    ("verify.key_samples", "secret keys per correctness check (default 100)"),
    ("verify.samples", "draws for sampled blindness (default 100000)"),
    ("verify.trials", "inputs for the teleportation check (default 50)"),
    ("verify.seed", "seed for verification randomness (default 0)"),
];

pub fn config_keys_help() -> String {
    let width = CONFIG_KEYS.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut out = String::from("Config keys (TOML; unknown keys are rejected):\n");
    for (key, doc) in CONFIG_KEYS {
        out.push_str(&format!("  {key:<width$}  {doc}\n"));
    }
    out
}

#[derive(Debug)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    fn new(key: impl Into<String>, message: impl fmt::Display) -> Self {
        ConfigError {
            key: key.into(),
            message: message.to_string(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error at `{}`: {}", self.key, self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum SeedValue {
    Int(i64),
    Text(String),
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum AngleValue {
    Int(i64),
    Float(f64),
    Text(String),
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum LayersValue {
    Keyword(String),
    Explicit(Vec<Vec<AngleValue>>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSubgroup {
    kind: String,
    k: Option<usize>,
    q: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSeeds {
    alice: Option<SeedValue>,
    bob: Option<SeedValue>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTransport {
    kind: Option<String>,
    host: Option<String>,
    port: Option<u16>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    transcript: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVerify {
    key_samples: Option<usize>,
    samples: Option<usize>,
    trials: Option<usize>,
    seed: Option<SeedValue>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    schema_version: Option<u32>,
    n: Option<usize>,
    m: Option<usize>,
    output_mode: Option<String>,
    subgroup: Option<RawSubgroup>,
    layers: Option<LayersValue>,
    layer_seed: Option<SeedValue>,
    seeds: Option<RawSeeds>,
    transport: Option<RawTransport>,
    output: Option<RawOutput>,
    verify: Option<RawVerify>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TransportChoice {
    InProcess,
    Socket { host: String, port: u16 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VerifySettings {
    pub key_samples: usize,
    pub samples: usize,
    pub trials: usize,
    pub seed: u64,
}

/// A validated configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub spec: SubgroupSpec,
    pub computation: Computation,
    pub seeds: Seeds,
    pub transport: TransportChoice,
    pub transcript_path: Option<PathBuf>,
    pub verify: VerifySettings,
    /// The parsed document, embedded in transcripts for replay.
    pub table: toml::Table,
}

fn seed(key: &str, v: Option<SeedValue>, default: u64) -> Result<u64, ConfigError> {
    match v {
        None => Ok(default),
        Some(SeedValue::Int(i)) => u64::try_from(i).map_err(|_| ConfigError::new(key, "seed must be non-negative")),
        Some(SeedValue::Text(s)) => s
            .trim()
            .parse::<u64>()
            .map_err(|e| ConfigError::new(key, format!("seed {s:?} is not a u64: {e}"))),
    }
}

fn angle(key: &str, v: &AngleValue) -> Result<Angle, ConfigError> {
    match v {
        AngleValue::Int(i) => Ok(Angle::Radians(*i as f64)),
        AngleValue::Float(f) => Ok(Angle::Radians(*f)),
        AngleValue::Text(s) => Angle::parse(s).map_err(|e| ConfigError::new(key, e)),
    }
}

/// Converts one explicit layer into a group element.
fn explicit_layer(
    spec: &SubgroupSpec,
    n: usize,
    index: usize,
    phases: &[AngleValue],
) -> Result<DiagonalUnitary, ConfigError> {
    let key = format!("layers[{index}]");
    let k = spec.block_size;
    let width = 1usize << k;
    let expected = (n / k) * width;
    if phases.len() != expected {
        return Err(ConfigError::new(
            key,
            format!("expected (n/k)·2^k = {expected} phases, found {}", phases.len()),
        ));
    }
    let angles = phases
        .iter()
        .enumerate()
        .map(|(j, v)| angle(&format!("layers[{index}][{j}]"), v))
        .collect::<Result<Vec<_>, _>>()?;
    match spec.kind {
        SubgroupKind::Continuous => {
            let blocks = angles
                .chunks(width)
                .map(|b| b.iter().map(|a| a.radians()).collect())
                .collect();
            DiagonalUnitary::from_blocks(k, blocks).map_err(|e| ConfigError::new(key, e))
        }
        SubgroupKind::Cyclic { order } => {
            let mut lattice = Vec::with_capacity((n / k) * (width - 1));
            for (b, block) in angles.chunks(width).enumerate() {
                let idx = |x: usize| {
                    block[x].lattice_index(order).ok_or_else(|| {
                        ConfigError::new(
                            format!("layers[{index}][{}]", b * width + x),
                            format!("angle is not an exact multiple of 2pi/{order}"),
                        )
                    })
                };
                let base = idx(0)?;
                for x in 1..width {
                    lattice.push((idx(x)? + order - base) % order);
                }
            }
            spec.element_from_key(n, &lattice).map_err(|e| ConfigError::new(key, e))
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = toml::from_str(text).map_err(|e| ConfigError::new("<document>", e.message()))?;
        Self::from_table(table)
    }

    pub fn from_table(table: toml::Table) -> Result<Self, ConfigError> {
        for key in table.keys() {
            if !CONFIG_KEYS
                .iter()
                .any(|(k, _)| k.split('.').next() == Some(key.as_str()))
            {
                return Err(ConfigError::new(key.clone(), "unknown key"));
            }
        }
        let raw: RawConfig = table
            .clone()
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::new(section_of(e.message()), e.message()))?;

        match raw.schema_version {
            Some(SCHEMA_VERSION) => {}
            Some(v) => {
                return Err(ConfigError::new(
                    "schema_version",
                    format!("unsupported version {v} (expected {SCHEMA_VERSION})"),
                ))
            }
            None => return Err(ConfigError::new("schema_version", "missing (expected 1)")),
        }
        let n = raw.n.ok_or_else(|| ConfigError::new("n", "missing"))?;
        let m = raw.m.ok_or_else(|| ConfigError::new("m", "missing"))?;
        if n == 0 {
            return Err(ConfigError::new("n", "must be at least 1"));
        }
        if m == 0 {
            return Err(ConfigError::new("m", "must be at least 1"));
        }
        if n * m > DEFAULT_MAX_QUBITS {
            return Err(ConfigError::new(
                "m",
                format!(
                    "n·m = {} exceeds the simulator cap of {DEFAULT_MAX_QUBITS} qubits",
                    n * m
                ),
            ));
        }
        let output_mode = match raw.output_mode.as_deref() {
            None => OutputMode::Classical,
            Some(s) => s.parse().map_err(|e: String| ConfigError::new("output_mode", e))?,
        };

        let sub = raw
            .subgroup
            .ok_or_else(|| ConfigError::new("subgroup", "missing table"))?;
        let k = sub.k.unwrap_or(1);
        if k == 0 {
            return Err(ConfigError::new("subgroup.k", "block size must be at least 1"));
        }
        let spec = match sub.kind.as_str() {
            "continuous" => {
                if sub.q.is_some() {
                    return Err(ConfigError::new("subgroup.q", "only valid for cyclic subgroups"));
                }
                SubgroupSpec::continuous(k)
            }
            "cyclic" => {
                let q = sub
                    .q
                    .ok_or_else(|| ConfigError::new("subgroup.q", "required for cyclic subgroups"))?;
                SubgroupSpec::cyclic(q, k)
            }
            other => {
                return Err(ConfigError::new(
                    "subgroup.kind",
                    format!("expected \"cyclic\" or \"continuous\", found {other:?}"),
                ))
            }
        };
        spec.validate().map_err(|e| ConfigError::new("subgroup.q", e))?;
        spec.validate_for(n).map_err(|e| ConfigError::new("subgroup.k", e))?;

        let layer_seed = seed("layer_seed", raw.layer_seed, 0)?;
        let layers = match raw.layers {
            None => None,
            Some(LayersValue::Keyword(s)) if s == "random" => None,
            Some(LayersValue::Keyword(s)) => {
                return Err(ConfigError::new(
                    "layers",
                    format!("expected \"random\" or a list of phase lists, found {s:?}"),
                ))
            }
            Some(LayersValue::Explicit(list)) => {
                if list.len() != m {
                    return Err(ConfigError::new(
                        "layers",
                        format!("expected m = {m} layers, found {}", list.len()),
                    ));
                }
                Some(
                    list.iter()
                        .enumerate()
                        .map(|(i, phases)| explicit_layer(&spec, n, i, phases))
                        .collect::<Result<Vec<_>, _>>()?,
                )
            }
        };
        let computation = match layers {
            Some(layers) => Computation::new(layers, output_mode),
            None => Computation::random(&spec, n, m, output_mode, &mut ChaCha20Rng::seed_from_u64(layer_seed)),
        }
        .map_err(|e| ConfigError::new("layers", e))?;

        let seeds_raw = raw.seeds.unwrap_or_default();
        let seeds = Seeds {
            alice: seed("seeds.alice", seeds_raw.alice, 0)?,
            bob: seed("seeds.bob", seeds_raw.bob, 0)?,
        };

        let t = raw.transport.unwrap_or_default();
        let transport = match t.kind.as_deref().unwrap_or("inprocess") {
            "inprocess" => {
                if t.host.is_some() || t.port.is_some() {
                    return Err(ConfigError::new(
                        "transport.host",
                        "host/port need transport.kind = \"socket\"",
                    ));
                }
                TransportChoice::InProcess
            }
            "socket" => TransportChoice::Socket {
                host: t.host.unwrap_or_else(|| "127.0.0.1".into()),
                port: t.port.unwrap_or(7878),
            },
            other => {
                return Err(ConfigError::new(
                    "transport.kind",
                    format!("expected \"inprocess\" or \"socket\", found {other:?}"),
                ))
            }
        };

        let v = raw.verify.unwrap_or_default();
        let verify = VerifySettings {
            key_samples: v.key_samples.unwrap_or(100),
            samples: v.samples.unwrap_or(100_000),
            trials: v.trials.unwrap_or(50),
            seed: seed("verify.seed", v.seed, 0)?,
        };
        if verify.key_samples == 0 {
            return Err(ConfigError::new("verify.key_samples", "must be at least 1"));
        }
        if verify.trials == 0 {
            return Err(ConfigError::new("verify.trials", "must be at least 1"));
        }

        Ok(RunConfig {
            spec,
            computation,
            seeds,
            transport,
            transcript_path: raw.output.and_then(|o| o.transcript),
            verify,
            table,
        })
    }

    /// Reads `path`, resolving relative paths that do not exist against
    /// the config directory from the environment.
    pub fn load(path: Option<&Path>) -> Result<(Self, PathBuf), ConfigError> {
        let resolved = resolve_config_path(path)?;
        let text = std::fs::read_to_string(&resolved)
            .map_err(|e| ConfigError::new("--config", format!("{}: {e}", resolved.display())))?;
        Ok((Self::from_toml_str(&text)?, resolved))
    }

    /// The document with the effective seeds written back.
    pub fn effective_table(&self) -> toml::Table {
        let mut table = self.table.clone();
        let mut seeds = toml::Table::new();
        seeds.insert("alice".into(), toml::Value::String(self.seeds.alice.to_string()));
        seeds.insert("bob".into(), toml::Value::String(self.seeds.bob.to_string()));
        table.insert("seeds".into(), toml::Value::Table(seeds));
        table
    }
}

/// Best-effort key for a serde message such as "unknown field `x`".
fn section_of(message: &str) -> String {
    message
        .split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| "<document>".into())
}

pub fn resolve_config_path(path: Option<&Path>) -> Result<PathBuf, ConfigError> {
    let dir = std::env::var_os(CONFIG_DIR_ENV).map(PathBuf::from);
    match (path, dir) {
        (Some(p), Some(d)) if p.is_relative() && !p.exists() => Ok(d.join(p)),
        (Some(p), _) => Ok(p.to_path_buf()),
        (None, Some(d)) => Ok(d.join(DEFAULT_CONFIG_NAME)),
        (None, None) => Err(ConfigError::new(
            "--config",
            format!("no config given and {CONFIG_DIR_ENV} is not set"),
        )),
    }
}
