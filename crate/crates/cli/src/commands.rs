//! The verbs. Each returns an [`Outcome`]: a text rendering, a JSON value
//! for `--format machine`, and whether every check passed.

use std::io::Write;
use std::net::TcpListener;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use gubqc_core::analyzer::{
    reference_output, teleportation_identity_check, verify_blindness_exhaustive, verify_blindness_sampled,
    verify_correctness, CorrectnessOptions, PadSampler,
};
use gubqc_core::bounds::{format_decimal, format_rational, gamma_bounds, protocol_comparison, GammaBounds, Setting};
use gubqc_core::diaggroup::{DiagonalUnitary, SubgroupKind};
use gubqc_core::protocol::transcript::state_fingerprint;
use gubqc_core::protocol::transport::{serve_listener, InProcessTransport, StreamTransport, Transport};
use gubqc_core::protocol::{run_session, SessionOutput, SessionResult, SessionTranscript};
use num_bigint::BigInt;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde_json::{json, Value};

use crate::config::{config_keys_help, ConfigError, RunConfig, TransportChoice};

pub const EXIT_PASS: u8 = 0;
pub const EXIT_FAIL: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

#[derive(Debug)]
pub enum CliError {
    /// Bad config, flags or preconditions.
    Usage(String),
    /// Something broke while running: I/O, network, decoding.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

pub struct Outcome {
    pub text: String,
    pub machine: Value,
    pub passed: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Text,
    /// One JSON document.
    Machine,
}

#[derive(Debug, Parser)]
#[command(name = "gubqc", version, about = "Simulate and verify blind delegated quantum computation", after_long_help = config_keys_help())]
pub struct Cli {
    /// Run configuration (TOML). Relative paths fall back to $GUBQC_CONFIG_DIR.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override `seeds.alice`.
    #[arg(long, global = true, value_name = "U64")]
    pub seed_alice: Option<u64>,
    /// Override `seeds.bob`.
    #[arg(long, global = true, value_name = "U64")]
    pub seed_bob: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Write the report here instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one session and print Alice's output.
    Run(RunArgs),
    /// Run a verification suite against the configured computation.
    Verify(VerifyArgs),
    /// Print Γ(N) bounds for a client setting, or the protocol comparison.
    Bounds(BoundsArgs),
    /// Act as Bob: one session per TCP connection. Every session reuses
    /// the same Bob seed.
    Serve(ServeArgs),
    /// Act as Alice against a running server.
    Connect(EndpointArgs),
    /// Re-run a saved transcript in process and compare it byte for byte.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Transcript destination; overrides `output.transcript`.
    #[arg(long, value_name = "PATH")]
    pub transcript: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Correctness,
    Blindness,
    Teleport,
    Closure,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum)]
    pub suite: Suite,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SettingName {
    Separable1q,
    Separablekq,
    Commuting,
    Memory,
    Comparison,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[arg(long, value_enum)]
    pub setting: SettingName,
    /// Transmitted qubits: `8`, `4..16` or `4..16:4` (inclusive).
    #[arg(long, value_name = "N|A..B[:STEP]")]
    pub range: String,
    /// Block or memory size.
    #[arg(long)]
    pub k: Option<u32>,
    /// Register width.
    #[arg(long)]
    pub n: Option<u32>,
    /// Number of layers (commuting setting with a budget).
    #[arg(long)]
    pub m: Option<u32>,
    /// Gate budget f for the commuting setting.
    #[arg(long)]
    pub budget: Option<String>,
}

#[derive(Debug, Args)]
pub struct EndpointArgs {
    /// Defaults to `transport.host`, then 127.0.0.1.
    #[arg(long)]
    pub host: Option<String>,
    /// Defaults to `transport.port`, then 7878.
    #[arg(long)]
    pub port: Option<u16>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub endpoint: EndpointArgs,
    /// Stop after this many sessions.
    #[arg(long)]
    pub sessions: Option<usize>,
    /// One thread per connection.
    #[arg(long)]
    pub threaded: bool,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub transcript: PathBuf,
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let (mut config, _) = RunConfig::load(cli.config.as_deref())?;
    if let Some(a) = cli.seed_alice {
        config.seeds.alice = a;
    }
    if let Some(b) = cli.seed_bob {
        config.seeds.bob = b;
    }
    Ok(config)
}

pub fn execute(cli: &Cli) -> Result<Outcome, CliError> {
    match &cli.command {
        Command::Run(args) => {
            let config = load_config(cli)?;
            let transport = config.transport.clone();
            command_run(
                &config,
                &transport,
                args.transcript.as_deref().or(config.transcript_path.as_deref()),
            )
        }
        Command::Connect(ep) => {
            let config = load_config(cli)?;
            let (host, port) = endpoint(&config.transport, ep);
            command_run(
                &config,
                &TransportChoice::Socket { host, port },
                config.transcript_path.as_deref(),
            )
        }
        Command::Verify(args) => command_verify(&load_config(cli)?, args.suite),
        Command::Bounds(args) => command_bounds(args),
        Command::Serve(args) => command_serve(cli, args),
        Command::Replay(args) => command_replay(&args.transcript),
    }
}

fn endpoint(choice: &TransportChoice, ep: &EndpointArgs) -> (String, u16) {
    let (h, p) = match choice {
        TransportChoice::Socket { host, port } => (host.clone(), *port),
        TransportChoice::InProcess => ("127.0.0.1".to_string(), 7878),
    };
    (ep.host.clone().unwrap_or(h), ep.port.unwrap_or(p))
}

/// Runs one session over `transport`.
pub fn session(
    config: &RunConfig,
    transport: &TransportChoice,
) -> Result<(SessionOutput, SessionTranscript), CliError> {
    let mut t: Box<dyn Transport> = match transport {
        TransportChoice::InProcess => Box::new(InProcessTransport::new(config.seeds.bob)),
        TransportChoice::Socket { host, port } => Box::new(
            StreamTransport::connect((host.as_str(), *port))
                .map_err(|e| runtime(format!("connect {host}:{port}: {e}")))?,
        ),
    };
    run_session(&config.computation, &config.spec, config.seeds, t.as_mut()).map_err(runtime)
}

fn command_run(
    config: &RunConfig,
    transport: &TransportChoice,
    transcript_path: Option<&Path>,
) -> Result<Outcome, CliError> {
    let (output, transcript) = session(config, transport)?;
    let comp = &config.computation;
    let mut text = format!(
        "n: {}\nm: {}\noutput_mode: {}\ntransport: {}\n",
        comp.n(),
        comp.m(),
        comp.output_mode(),
        match transport {
            TransportChoice::InProcess => "inprocess".to_string(),
            TransportChoice::Socket { host, port } => format!("socket {host}:{port}"),
        }
    );
    let mut machine = json!({
        "n": comp.n(),
        "m": comp.m(),
        "output_mode": comp.output_mode().to_string(),
        "seeds": { "alice": config.seeds.alice.to_string(), "bob": config.seeds.bob.to_string() },
        "frames": transcript.frames.len(),
        "digest": transcript.digest(),
    });
    match &output {
        SessionOutput::Classical(bits) => {
            text.push_str(&format!("output: {bits}\n"));
            machine["output"] = json!(bits.to_string());
        }
        SessionOutput::Quantum(state) => {
            let reference = reference_output(comp).map_err(runtime)?;
            let fidelity = state.fidelity(&reference.state).map_err(runtime)?;
            let fingerprint = state_fingerprint(state);
            text.push_str(&format!("fingerprint: {fingerprint}\nfidelity: {fidelity:.10}\n"));
            machine["fingerprint"] = json!(fingerprint);
            machine["fidelity"] = json!(fidelity);
        }
    }
    text.push_str(&format!(
        "frames: {}\ndigest: {}",
        transcript.frames.len(),
        transcript.digest()
    ));
    if let Some(path) = transcript_path {
        let body = transcript.to_toml(Some(&config.effective_table())).map_err(runtime)?;
        std::fs::write(path, body).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
        text.push_str(&format!("\ntranscript: {}", path.display()));
        machine["transcript"] = json!(path.display().to_string());
    }
    Ok(Outcome {
        text,
        machine,
        passed: true,
    })
}

fn command_verify(config: &RunConfig, suite: Suite) -> Result<Outcome, CliError> {
    let comp = &config.computation;
    let spec = &config.spec;
    let n = comp.n();
    let v = config.verify;
    let mut rng = ChaCha20Rng::seed_from_u64(v.seed);
    match suite {
        Suite::Correctness => {
            let options = CorrectnessOptions {
                key_samples: v.key_samples,
                seed: v.seed,
                ..CorrectnessOptions::default()
            };
            let report = verify_correctness(comp, spec, &options).map_err(usage)?;
            Ok(Outcome {
                text: report.to_string(),
                machine: serde_json::to_value(&report).map_err(runtime)?,
                passed: report.passed,
            })
        }
        Suite::Blindness => {
            // Bob must not tell the identity apart from any configured layer.
            let identity = DiagonalUnitary::identity(n, spec.block_size).map_err(usage)?;
            let mut texts = Vec::new();
            let mut reports = Vec::new();
            let mut passed = true;
            for (i, layer) in comp.layers().iter().enumerate() {
                let report = match spec.kind {
                    SubgroupKind::Cyclic { .. } => verify_blindness_exhaustive(spec, n, (&identity, layer)),
                    SubgroupKind::Continuous => verify_blindness_sampled(
                        spec,
                        n,
                        (&identity, layer),
                        v.samples,
                        PadSampler::Independent,
                        &mut rng,
                    ),
                }
                .map_err(usage)?;
                passed &= report.passed;
                texts.push(format!("pair: (identity, layer {})\n{report}", i + 1));
                let mut value = serde_json::to_value(&report).map_err(runtime)?;
                value["layer"] = json!(i + 1);
                reports.push(value);
            }
            Ok(Outcome {
                text: format!("{}\noverall: {}", texts.join("\n\n"), verdict(passed)),
                machine: json!({ "suite": "blindness", "pairs": reports, "passed": passed }),
                passed,
            })
        }
        Suite::Teleport => {
            let report = teleportation_identity_check(v.trials, &mut rng).map_err(usage)?;
            Ok(Outcome {
                text: report.to_string(),
                machine: serde_json::to_value(&report).map_err(runtime)?,
                passed: report.passed,
            })
        }
        Suite::Closure => {
            let Some(order) = spec.order() else {
                return Err(usage(
                    "closure suite needs a cyclic subgroup (subgroup.kind = \"cyclic\")",
                ));
            };
            let report = spec.verify_closure(n).map_err(usage)?;
            let closed = report.is_closed();
            let violation = report.violation.as_ref().map(ToString::to_string);
            let mut text = format!(
                "suite: closure\nq: {order}\nk: {}\nn: {n}\nsize: {}\nproducts_checked: {}\n",
                spec.block_size, report.size, report.products_checked
            );
            if let Some(v) = &violation {
                text.push_str(&format!("violation: {v}\n"));
            }
            text.push_str(&format!("closed: {closed}\nverdict: {}", verdict(closed)));
            Ok(Outcome {
                text,
                machine: json!({
                    "suite": "closure",
                    "q": order,
                    "k": spec.block_size,
                    "n": n,
                    "size": report.size,
                    "products_checked": report.products_checked,
                    "violation": violation,
                    "closed": closed,
                    "passed": closed,
                }),
                passed: closed,
            })
        }
    }
}

fn verdict(passed: bool) -> &'static str {
    if passed {
        "pass"
    } else {
        "fail"
    }
}

/// `"8"`, `"4..16"` or `"4..16:4"`, inclusive.
pub fn parse_range(text: &str) -> Result<Vec<u64>, String> {
    let bad = || format!("--range: cannot parse {text:?} (expected N, A..B or A..B:STEP)");
    let num = |s: &str| s.trim().parse::<u64>().map_err(|_| bad());
    let Some((a, rest)) = text.split_once("..") else {
        return Ok(vec![num(text)?]);
    };
    let (b, step) = match rest.split_once(':') {
        Some((b, s)) => (num(b)?, num(s)?),
        None => (num(rest)?, 1),
    };
    let a = num(a)?;
    if step == 0 || b < a {
        return Err(bad());
    }
    if (b - a) / step >= 10_000 {
        return Err(format!("--range: more than 10000 points (cap 10000) in {text:?}"));
    }
    Ok((a..=b).step_by(step as usize).collect())
}

fn require<T: Copy>(v: Option<T>, flag: &str, setting: &str) -> Result<T, CliError> {
    v.ok_or_else(|| usage(format!("--{flag} is required for --setting {setting}")))
}

fn bounds_json(b: &GammaBounds) -> Value {
    json!({
        "setting": b.setting.to_string(),
        "transmitted": b.transmitted,
        "lower": format_rational(&b.lower),
        "upper": format_rational(&b.upper),
    })
}

fn command_bounds(args: &BoundsArgs) -> Result<Outcome, CliError> {
    let points = parse_range(&args.range).map_err(CliError::Usage)?;
    if args.setting == SettingName::Comparison {
        let n = args.n.unwrap_or(2);
        let mut texts = Vec::new();
        let mut tables = Vec::new();
        for total in points {
            let table = protocol_comparison(total, n).map_err(usage)?;
            texts.push(table.to_string());
            let rows: Vec<Value> = table
                .rows
                .iter()
                .map(|r| {
                    json!({
                        "label": r.label,
                        "gates": r.gates.as_ref().map(format_rational),
                        "asymptotic": r.asymptotic,
                        "shape_value": r.shape_value,
                        "constant_unspecified": r.constant_unspecified,
                    })
                })
                .collect();
            let gaps: Vec<Value> = table
                .gaps
                .iter()
                .map(|(label, ratio)| json!({ "label": label, "ratio": format_rational(ratio), "decimal": format_decimal(ratio, 6) }))
                .collect();
            tables.push(json!({ "transmitted": total, "n": n, "rows": rows, "gaps": gaps }));
        }
        return Ok(Outcome {
            text: texts.join("\n\n"),
            machine: json!({ "comparison": tables }),
            passed: true,
        });
    }
    let setting = match args.setting {
        SettingName::Separable1q => Setting::SeparableSingleQubit,
        SettingName::Separablekq => Setting::SeparableKQubit {
            k: require(args.k, "k", "separablekq")?,
        },
        SettingName::Commuting => {
            let budget = args
                .budget
                .as_deref()
                .map(|b| b.trim().parse::<BigInt>().map_err(|e| usage(format!("--budget: {e}"))))
                .transpose()?;
            let (n, m) = match budget {
                Some(_) => (
                    require(args.n, "n", "commuting with --budget")?,
                    require(args.m, "m", "commuting with --budget")?,
                ),
                None => (args.n.unwrap_or(0), args.m.unwrap_or(0)),
            };
            Setting::Commuting { budget, n, m }
        }
        SettingName::Memory => Setting::MemoryK {
            k: require(args.k, "k", "memory")?,
            n: require(args.n, "n", "memory")?,
        },
        SettingName::Comparison => unreachable!("handled above"),
    };
    let rows = points
        .iter()
        .map(|&total| gamma_bounds(&setting, total).map_err(|e| usage(format!("N = {total}: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    let text = rows
        .iter()
        .map(|b| {
            format!(
                "N={}  ({}, {})",
                b.transmitted,
                format_rational(&b.lower),
                format_rational(&b.upper)
            )
        })
        .collect::<Vec<_>>()
        .join("\n");
    Ok(Outcome {
        text: format!("setting: {setting}\n{text}"),
        machine: json!({ "setting": setting.to_string(), "rows": rows.iter().map(bounds_json).collect::<Vec<_>>() }),
        passed: true,
    })
}

fn command_serve(cli: &Cli, args: &ServeArgs) -> Result<Outcome, CliError> {
    // The config is optional here; Bob only needs his seed and an address.
    let config = match &cli.config {
        Some(_) => Some(load_config(cli)?),
        None => None,
    };
    let choice = config
        .as_ref()
        .map(|c| c.transport.clone())
        .unwrap_or(TransportChoice::InProcess);
    let (host, port) = endpoint(&choice, &args.endpoint);
    let bob_seed = cli.seed_bob.or(config.as_ref().map(|c| c.seeds.bob)).unwrap_or(0);
    let listener = TcpListener::bind((host.as_str(), port)).map_err(|e| runtime(format!("bind {host}:{port}: {e}")))?;
    let addr = listener.local_addr().map_err(runtime)?;
    // Printed before accepting so scripts can read the bound port.
    println!("listening on {addr}");
    std::io::stdout().flush().map_err(runtime)?;

    let mut sessions = Vec::new();
    let mut failures = 0usize;
    serve_listener(&listener, bob_seed, args.sessions, args.threaded, |result| {
        let index = sessions.len() + 1;
        let entry = match result {
            Ok(frames) => {
                let digest = gubqc_core::protocol::transcript::frames_digest(&frames);
                eprintln!("session {index}: {} frames, digest {digest}", frames.len());
                json!({ "session": index, "frames": frames.len(), "digest": digest })
            }
            Err(e) => {
                failures += 1;
                eprintln!("session {index}: aborted: {e}");
                json!({ "session": index, "error": e.to_string() })
            }
        };
        sessions.push(entry);
    })
    .map_err(runtime)?;
    let text = sessions
        .iter()
        .map(|s| match s.get("digest") {
            Some(d) => format!(
                "session {}: {} frames, digest {}",
                s["session"],
                s["frames"],
                d.as_str().unwrap_or("")
            ),
            None => format!(
                "session {}: aborted: {}",
                s["session"],
                s["error"].as_str().unwrap_or("")
            ),
        })
        .collect::<Vec<_>>()
        .join("\n");
    Ok(Outcome {
        text: format!("{text}\nserved: {}", sessions.len()),
        machine: json!({ "address": addr.to_string(), "sessions": sessions, "passed": failures == 0 }),
        passed: failures == 0,
    })
}

fn command_replay(path: &Path) -> Result<Outcome, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let (saved, table) = SessionTranscript::from_toml(&text).map_err(usage)?;
    let table = table.ok_or_else(|| usage("transcript has no [config] section to replay from"))?;
    let mut config = RunConfig::from_table(table)?;
    config.seeds = saved.seeds;
    let (output, fresh) = session(&config, &TransportChoice::InProcess)?;
    let frames_match = fresh.frames == saved.frames;
    let result_match = SessionResult::from_output(&output) == saved.result;
    let first_difference = saved
        .frames
        .iter()
        .zip(&fresh.frames)
        .position(|(a, b)| a != b)
        .or_else(|| (saved.frames.len() != fresh.frames.len()).then(|| saved.frames.len().min(fresh.frames.len())));
    let passed = frames_match && result_match;
    let mut out = format!(
        "transcript: {}\nsaved_digest: {}\nreplayed_digest: {}\nframes_match: {frames_match}\nresult_match: {result_match}\n",
        path.display(),
        saved.digest(),
        fresh.digest()
    );
    if let Some(i) = first_difference {
        out.push_str(&format!("first_differing_frame: {i}\n"));
    }
    out.push_str(&format!("verdict: {}", verdict(passed)));
    Ok(Outcome {
        text: out,
        machine: json!({
            "saved_digest": saved.digest(),
            "replayed_digest": fresh.digest(),
            "frames_match": frames_match,
            "result_match": result_match,
            "first_differing_frame": first_difference,
            "passed": passed,
        }),
        passed,
    })
}

/// Parses arguments, runs, prints, and maps the result to an exit code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
        }
    };
    match execute(&cli) {
        Ok(outcome) => {
            let body = match cli.format {
                Format::Text => outcome.text,
                Format::Machine => serde_json::to_string_pretty(&outcome.machine).unwrap_or_default(),
            };
            let written = match &cli.out {
                Some(path) => std::fs::write(path, format!("{body}\n")).map_err(|e| format!("{}: {e}", path.display())),
                None => {
                    println!("{body}");
                    Ok(())
                }
            };
            if let Err(e) = written {
                eprintln!("error: {e}");
                return EXIT_RUNTIME;
            }
            if outcome.passed {
                EXIT_PASS
            } else {
                EXIT_FAIL
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
