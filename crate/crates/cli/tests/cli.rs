use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_gubqc"));
    c.env_remove("GUBQC_CONFIG_DIR");
    c
}

fn write(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn run(args: &[&str], config: Option<&Path>) -> Output {
    let mut c = bin();
    if let Some(p) = config {
        c.arg("--config").arg(p);
    }
    c.args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn line<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}: ")))
        .unwrap_or_else(|| panic!("no `{key}` line in\n{text}"))
}

const IDENTITY_1X1: &str = r#"
schema_version = 1
n = 1
m = 1
layers = [["0", "0"]]
[subgroup]
kind = "cyclic"
q = 8
[seeds]
alice = 11
bob = 12
"#;

const QUANTUM_1X2: &str = r#"
schema_version = 1
n = 1
m = 2
output_mode = "quantum"
layers = [["0", "0"], ["0", "0"]]
[subgroup]
kind = "cyclic"
q = 8
"#;

fn cyclic(q: u32, n: usize, m: usize) -> String {
    format!("schema_version = 1\nn = {n}\nm = {m}\nlayer_seed = 5\n[subgroup]\nkind = \"cyclic\"\nq = {q}\n[verify]\nkey_samples = 20\n")
}

#[test]
fn identity_run_prints_zero() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "id.toml", IDENTITY_1X1);
    let o = run(&["run"], Some(&cfg));
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(line(&stdout(&o), "output"), "0");
}

#[test]
fn quantum_run_reports_unit_fidelity() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "q.toml", QUANTUM_1X2);
    let o = run(&["run"], Some(&cfg));
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(line(&stdout(&o), "fidelity"), "1.0000000000");
    assert_eq!(line(&stdout(&o), "fingerprint").len(), 64);
}

#[test]
fn indivisible_block_size_is_rejected_by_key() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "bad.toml",
        "schema_version = 1\nn = 3\nm = 1\n[subgroup]\nkind = \"continuous\"\nk = 2\n",
    );
    let o = run(&["run"], Some(&cfg));
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("subgroup.k"), "{err}");
    assert!(err.contains("n must be a multiple of k"), "{err}");
}

#[test]
fn unknown_keys_are_rejected_by_name() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "bad.toml", &format!("colour = \"blue\"\n{IDENTITY_1X1}"));
    let o = run(&["run"], Some(&cfg));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`colour`"), "{}", stderr(&o));
    let cfg = write(
        &dir,
        "bad2.toml",
        &format!("{IDENTITY_1X1}[transport]\nprotocol = \"udp\"\n"),
    );
    let o = run(&["run"], Some(&cfg));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("protocol"), "{}", stderr(&o));
}

#[test]
fn help_lists_every_config_key() {
    let o = bin().arg("--help").output().unwrap();
    assert!(o.status.success());
    let help = stdout(&o);
    for (key, _) in gubqc_cli::config::CONFIG_KEYS {
        assert!(help.contains(key), "help is missing {key}");
    }
}

#[test]
fn correctness_suite_passes_for_q8() {
    let dir = TempDir::new().unwrap();
    for mode in ["classical", "quantum"] {
        let cfg = write(
            &dir,
            "c.toml",
            &format!("output_mode = \"{mode}\"\n{}", cyclic(8, 2, 2)),
        );
        let o = run(&["verify", "--suite", "correctness"], Some(&cfg));
        assert!(o.status.success(), "{mode}: {}{}", stdout(&o), stderr(&o));
        assert_eq!(line(&stdout(&o), "verdict"), "pass");
    }
}

#[test]
fn exhaustive_blindness_passes_for_q2() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "b.toml", &cyclic(2, 1, 1));
    let o = run(&["--format", "machine", "verify", "--suite", "blindness"], Some(&cfg));
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["passed"], true);
    let pair = &v["pairs"][0];
    assert_eq!(pair["mode"], "exhaustive");
    assert!(pair["state_trace_distance"].as_f64().unwrap() < 1e-10);
}

#[test]
fn closure_suite_reports_closed() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "cl.toml", &cyclic(8, 2, 1));
    let o = run(&["verify", "--suite", "closure"], Some(&cfg));
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(line(&stdout(&o), "closed"), "true");
    assert_eq!(line(&stdout(&o), "size"), "64");
}

#[test]
fn closure_on_the_torus_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "t.toml",
        "schema_version = 1\nn = 1\nm = 1\n[subgroup]\nkind = \"continuous\"\n",
    );
    let o = run(&["verify", "--suite", "closure"], Some(&cfg));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn teleport_suite_passes() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "t.toml", IDENTITY_1X1);
    let o = run(&["verify", "--suite", "teleport"], Some(&cfg));
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(line(&stdout(&o), "trials"), "50");
}

#[test]
fn bounds_rows() {
    let o = run(&["bounds", "--setting", "separable1q", "--range", "8"], None);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("N=8  (8, 16)"), "{}", stdout(&o));

    let o = run(
        &["bounds", "--setting", "memory", "--k", "2", "--n", "4", "--range", "8"],
        None,
    );
    assert!(stdout(&o).contains("N=8  (14, 87)"), "{}", stdout(&o));

    let o = run(
        &["bounds", "--setting", "separablekq", "--k", "2", "--range", "2..6:2"],
        None,
    );
    let text = stdout(&o);
    assert!(text.contains("N=2  (3, 6)") && text.contains("N=6  (9, 18)"), "{text}");

    let o = run(&["bounds", "--setting", "comparison", "--range", "8"], None);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("8/3"), "{}", stdout(&o));
}

#[test]
fn bounds_preconditions_are_usage_errors() {
    let o = run(
        &["bounds", "--setting", "separablekq", "--k", "3", "--range", "8"],
        None,
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("N = 8"), "{}", stderr(&o));
    let o = run(&["bounds", "--setting", "memory", "--range", "8"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--k"));
}

#[test]
fn config_dir_from_environment() {
    let dir = TempDir::new().unwrap();
    write(&dir, "gubqc.toml", IDENTITY_1X1);
    let o = bin().env("GUBQC_CONFIG_DIR", dir.path()).arg("run").output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let o = bin()
        .env("GUBQC_CONFIG_DIR", dir.path())
        .args(["--config", "gubqc.toml", "run"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn out_flag_writes_machine_report() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "id.toml", IDENTITY_1X1);
    let out = dir.path().join("report.json");
    let o = run(
        &["--format", "machine", "--out", out.to_str().unwrap(), "run"],
        Some(&cfg),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(v["output"], "0");
}

fn digest_of(o: &Output) -> String {
    line(&stdout(o), "digest").to_string()
}

#[test]
fn loopback_session_matches_in_process_digest() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "r.toml",
        &format!("output_mode = \"quantum\"\n{}", cyclic(8, 2, 3)),
    );
    let local = run(&["--seed-alice", "21", "--seed-bob", "22", "run"], Some(&cfg));
    assert!(local.status.success(), "{}", stderr(&local));

    let mut server = bin()
        .args([
            "serve",
            "--host",
            "127.0.0.1",
            "--port",
            "0",
            "--sessions",
            "1",
            "--seed-bob",
            "22",
        ])
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut first = String::new();
    BufReader::new(server.stdout.as_mut().unwrap())
        .read_line(&mut first)
        .unwrap();
    let addr = first
        .trim()
        .strip_prefix("listening on ")
        .expect("listening line")
        .to_string();
    let port = addr.rsplit(':').next().unwrap();

    let remote = run(
        &[
            "--seed-alice",
            "21",
            "--seed-bob",
            "22",
            "connect",
            "--host",
            "127.0.0.1",
            "--port",
            port,
        ],
        Some(&cfg),
    );
    assert!(remote.status.success(), "{}", stderr(&remote));
    let served = server.wait_with_output().unwrap();
    assert!(served.status.success(), "{}", stderr(&served));

    assert_eq!(digest_of(&local), digest_of(&remote));
    assert_eq!(
        line(&stdout(&local), "fingerprint"),
        line(&stdout(&remote), "fingerprint")
    );
    assert!(stdout(&served).contains(&digest_of(&local)), "{}", stdout(&served));
}

#[test]
fn loopback_identity_outputs_zero() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "id.toml", IDENTITY_1X1);
    let mut server = bin()
        .args([
            "--config",
            cfg.to_str().unwrap(),
            "serve",
            "--port",
            "0",
            "--sessions",
            "1",
            "--threaded",
        ])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut first = String::new();
    BufReader::new(server.stdout.as_mut().unwrap())
        .read_line(&mut first)
        .unwrap();
    let port = first.trim().rsplit(':').next().unwrap().to_string();
    let o = run(&["connect", "--port", &port], Some(&cfg));
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(line(&stdout(&o), "output"), "0");
    assert!(server.wait().unwrap().success());
}

#[test]
fn connect_to_nothing_is_a_runtime_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "id.toml", IDENTITY_1X1);
    // Bind and drop to find a port that is very likely closed.
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let o = run(&["connect", "--port", &port.to_string()], Some(&cfg));
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn replay_reproduces_the_transcript() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "r.toml", &cyclic(8, 2, 3));
    let transcript = dir.path().join("t.toml");
    let o = run(
        &[
            "--seed-alice",
            "7",
            "--seed-bob",
            "9",
            "run",
            "--transcript",
            transcript.to_str().unwrap(),
        ],
        Some(&cfg),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(&["replay", transcript.to_str().unwrap()], None);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    assert_eq!(line(&stdout(&o), "frames_match"), "true");
    assert_eq!(line(&stdout(&o), "saved_digest"), line(&stdout(&o), "replayed_digest"));

    // Swapping the saved Bob seed (and nothing else) must be detected.
    let text = std::fs::read_to_string(&transcript).unwrap();
    let tampered = text.replace("bob_seed = \"9\"", "bob_seed = \"10\"");
    assert_ne!(text, tampered);
    let tampered_path = write(&dir, "tampered.toml", &tampered);
    let o = run(&["replay", tampered_path.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1), "{}{}", stdout(&o), stderr(&o));
}
