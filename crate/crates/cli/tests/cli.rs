use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use spkg_core::campaign::{Campaign, CampaignSpec, PolicyConfig};
use spkg_core::kg::{kg_linear, spkg_scores};
use spkg_core::prior::PriorBundle;
use spkg_core::rna::{generate_probe_library, LibrarySpec};
use spkg_core::sim::synthetic::bundled_target;

fn spkg() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_spkg"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    spkg().args(args).output().unwrap()
}

fn data(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/data")
        .join(name)
        .display()
        .to_string()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn fit_window(dir: &Path, extra: &[&str]) -> PathBuf {
    let out = dir.join("prior.json");
    let csv = data("synthetic_dms.csv");
    let mut args = vec!["fit-prior", csv.as_str()];
    args.extend_from_slice(&["--first-position", "11", "--window", "100,129", "--kappa", "0.4"]);
    args.extend_from_slice(extra);
    args.extend_from_slice(&["--out", out.to_str().unwrap()]);
    stdout(&run(&args));
    out
}

fn parse_scores(csv: &str) -> Vec<(usize, usize, f64, bool)> {
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("probe,start,end,score,above_mean"));
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (
                f[1].parse().unwrap(),
                f[2].parse().unwrap(),
                f[3].parse().unwrap(),
                f[4].parse().unwrap(),
            )
        })
        .collect()
}

#[test]
fn unknown_flags_and_bad_values_exit_2() {
    assert_eq!(run(&["simulate", "x.json", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(&["score", "b.json", "--policy", "greedy"]).status.code(), Some(2));
    assert_eq!(run(&["nonsense"]).status.code(), Some(2));
    for sub in ["simulate", "fit-prior", "serve", "score", "mutate"] {
        let o = run(&[sub, "--help"]);
        assert_eq!(o.status.code(), Some(0), "{sub}");
        assert!(String::from_utf8_lossy(&o.stdout).contains("Usage"));
    }
}

#[test]
fn mutate_lists_neighbors() {
    assert_eq!(stdout(&run(&["mutate", "10,20", "-p", "400"])).lines().count(), 28);
    assert_eq!(stdout(&run(&["mutate", "[1,4]", "-p", "400"])).lines().count(), 7);
    let o = run(&["mutate", "20,10", "-p", "400"]);
    assert_eq!(o.status.code(), Some(2));
    // Bounds come from the molecule when no length is given.
    let o = stdout(&run(&["mutate", "100,107", "--window", "100,129"]));
    assert!(o.lines().all(|l| {
        let (a, b) = l.split_once(',').unwrap();
        a.parse::<usize>().unwrap() >= 100 && b.parse::<usize>().unwrap() <= 129
    }));
}

fn small_config(dir: &Path) -> PathBuf {
    let cfg = serde_json::json!({
        "schema_version": 1,
        "name": "cli",
        "target": {"window": [100, 129]},
        "library": {"uniform": {"length": 8, "overlap": 5}},
        "policies": ["spkg", "kg_linear", "explore"],
        "budget": 4,
        "noise_ratios": [0.1],
        "max_patterns": 5,
        "truth": {"shift": [5, 15]},
        "trials": 3,
        "seed": 1
    });
    let p = dir.join("cfg.json");
    std::fs::write(&p, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    p
}

#[test]
fn simulate_is_deterministic_across_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let summary = stdout(&run(&[
        "simulate",
        cfg,
        "--trials",
        "4",
        "--seed",
        "7",
        "--out",
        a.to_str().unwrap(),
        "--jobs",
        "1",
    ]));
    let v: serde_json::Value = serde_json::from_str(&summary).unwrap();
    assert_eq!(v["policies"].as_array().unwrap().len(), 3);
    stdout(&run(&[
        "simulate",
        cfg,
        "--trials",
        "4",
        "--seed",
        "7",
        "--out",
        b.to_str().unwrap(),
        "--jobs",
        "3",
    ]));
    for f in ["trajectories.csv", "aggregate.csv"] {
        let x = std::fs::read(a.join(f)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    // A different seed changes the trials.
    let c = dir.path().join("c");
    stdout(&run(&[
        "simulate",
        cfg,
        "--trials",
        "4",
        "--seed",
        "8",
        "--out",
        c.to_str().unwrap(),
    ]));
    assert_ne!(
        std::fs::read(a.join("trajectories.csv")).unwrap(),
        std::fs::read(c.join("trajectories.csv")).unwrap()
    );
}

#[test]
fn simulate_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let o = run(&["simulate", cfg.to_str().unwrap(), "--trials", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("trials must be ≥ 1"));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\n  \"schema_version\": 1,\n  \"budget\": \"x\"\n}").unwrap();
    let o = run(&["simulate", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(
        String::from_utf8_lossy(&o.stderr).contains("line 3"),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );

    let o = run(&["simulate", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn fit_prior_on_bundled_profile() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p.json");
    stdout(&run(&[
        "fit-prior",
        &data("synthetic_dms.csv"),
        "--out",
        out.to_str().unwrap(),
    ]));
    let b = PriorBundle::read(&out).unwrap();
    assert!((0.3..=0.5).contains(&b.kappa), "{}", b.kappa);
    assert_eq!(b.r, 0.2);
    // Unreactive positions borrow the profile mean.
    let mean = b.belief.theta.iter().sum::<f64>() / b.belief.p as f64;
    for j in 0..b.belief.p {
        let t = if b.belief.theta[j] == 0.0 {
            mean
        } else {
            b.belief.theta[j]
        };
        let expected = (0.2 * t).powi(2);
        assert!((b.belief.sigma[j][j] - expected).abs() <= 1e-12 * expected.max(1.0));
    }

    stdout(&run(&[
        "fit-prior",
        &data("synthetic_dms.csv"),
        "--w",
        "0",
        "--out",
        out.to_str().unwrap(),
    ]));
    let b = PriorBundle::read(&out).unwrap();
    assert!(b.belief.xi.iter().zip(&b.belief.eta).all(|(x, e)| x / (x + e) == 0.5));
}

#[test]
fn fit_prior_rejects_malformed_csv() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "position,value\n1,0.5\ntwo,0.1\n").unwrap();
    let o = run(&[
        "fit-prior",
        bad.to_str().unwrap(),
        "--out",
        dir.path().join("o.json").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

fn campaign_for(prior: &Path, max_patterns: usize) -> Campaign {
    let (full, _) = bundled_target().unwrap();
    let molecule = full.window(100, 129).unwrap();
    let library = generate_probe_library(&molecule, &LibrarySpec::Uniform { length: 8, overlap: 5 }).unwrap();
    Campaign::new(CampaignSpec {
        molecule,
        library,
        prior: PriorBundle::read(prior).unwrap(),
        policy: PolicyConfig {
            max_patterns,
            seed: 0,
            ..PolicyConfig::new(1.0)
        },
        energy_table: None,
    })
    .unwrap()
}

#[test]
fn score_matches_the_library_api() {
    let dir = tempfile::tempdir().unwrap();
    let prior = fit_window(dir.path(), &[]);
    let rows = parse_scores(&stdout(&run(&[
        "score",
        prior.to_str().unwrap(),
        "--window",
        "100,129",
        "--L",
        "5",
    ])));
    let c = campaign_for(&prior, 5);
    let k = spkg_scores(c.belief(), &c.patterns_for(0)).unwrap();
    assert_eq!(rows.len(), k.scores.len());
    let mean = k.scores.iter().sum::<f64>() / k.scores.len() as f64;
    for ((s, e, v, above), (p, want)) in rows.iter().zip(c.library().iter().zip(&k.scores)) {
        assert_eq!((*s, *e), (p.start, p.end));
        assert!((v - want).abs() <= 1e-12, "{v} vs {want}");
        assert_eq!(*above, *want > mean);
    }
}

#[test]
fn score_reductions() {
    let dir = tempfile::tempdir().unwrap();
    // Every position reactive, so the MAP pattern includes all coefficients.
    let profile = dir.path().join("reactive.csv");
    let rows: String = (1..=30)
        .map(|i| format!("{i},{}\n", 1.0 + (i % 7) as f64 * 0.3))
        .collect();
    std::fs::write(&profile, format!("position,value\n{rows}")).unwrap();
    let prior = dir.path().join("reactive.json");
    stdout(&run(&[
        "fit-prior",
        profile.to_str().unwrap(),
        "--first-position",
        "100",
        "--kappa",
        "0.4",
        "--out",
        prior.to_str().unwrap(),
    ]));
    let b = PriorBundle::read(&prior).unwrap();
    let p = prior.to_str().unwrap();
    let sparse = parse_scores(&stdout(&run(&["score", p, "--window", "100,129", "--L", "1"])));
    let linear = parse_scores(&stdout(&run(&[
        "score",
        p,
        "--window",
        "100,129",
        "--policy",
        "kg_linear",
    ])));
    let c = campaign_for(&prior, 1);
    let k = kg_linear(&c.belief().gaussian, &c.belief().basis, &c.belief().noise_sd).unwrap();
    for ((a, b), want) in sparse.iter().zip(&linear).zip(&k.scores) {
        assert!((a.2 - b.2).abs() <= 1e-12 * want.abs().max(1.0), "{} vs {}", a.2, b.2);
        assert!((b.2 - want).abs() <= 1e-12 * want.abs().max(1.0));
    }

    let mut zero = b.clone();
    zero.belief.sigma = vec![vec![0.0; b.belief.p]; b.belief.p];
    let zp = dir.path().join("zero.json");
    zero.write(&zp).unwrap();
    for policy in ["spkg", "kg_linear", "batch_spkg"] {
        let rows = parse_scores(&stdout(&run(&[
            "score",
            zp.to_str().unwrap(),
            "--window",
            "100,129",
            "--policy",
            policy,
            "--Q",
            "50",
        ])));
        assert!(rows.iter().all(|r| r.2 == 0.0 && !r.3), "{policy}");
    }
}

#[test]
fn score_dimension_mismatch_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let prior = fit_window(dir.path(), &[]);
    let o = run(&["score", prior.to_str().unwrap(), "--window", "100,140"]);
    assert_eq!(o.status.code(), Some(2));
    let lib = dir.path().join("lib.csv");
    std::fs::write(&lib, "name,start,end\nfar,300,310\n").unwrap();
    let o = run(&[
        "score",
        prior.to_str().unwrap(),
        "--window",
        "100,129",
        "--library",
        lib.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

struct Server(Child, String);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn start_server(data_dir: &Path) -> Server {
    let mut child = spkg()
        .args([
            "serve",
            "--addr",
            "127.0.0.1:0",
            "--data-dir",
            data_dir.to_str().unwrap(),
        ])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let url = line.trim().strip_prefix("listening on ").expect(&line).to_string();
    Server(child, url)
}

fn session_json(server: &str, args: &[&str]) -> serde_json::Value {
    let mut full = vec!["session"];
    full.extend_from_slice(args);
    let o = spkg().args(&full).env("SPKG_SERVER", server).output().unwrap();
    serde_json::from_str(&stdout(&o)).unwrap()
}

#[test]
fn serve_sessions_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let prior = fit_window(dir.path(), &[]);
    let data_dir = dir.path().join("data");

    let server = start_server(&data_dir);
    let health = reqwest_get(&format!("{}/healthz", server.1));
    assert_eq!(health, serde_json::json!({"status": "ok"}));

    let created = session_json(
        &server.1,
        &[
            "create",
            "--prior",
            prior.to_str().unwrap(),
            "--window",
            "100,129",
            "--noise-sd",
            "0.5",
            "--Q",
            "100",
            "--L",
            "5",
        ],
    );
    let id = created["id"].as_str().unwrap().to_string();
    let sug = session_json(&server.1, &["suggest", &id, "--mode", "single"]);
    let probe = &sug["suggestion"]["probes"][0];
    let probe = format!("{},{}", probe["start"], probe["end"]);
    let obs = session_json(
        &server.1,
        &["observe", &id, "--probe", &probe, "--value", "-1.5", "--version", "0"],
    );
    assert_eq!(obs["version"], 1);

    // Stale version is a usage error for the caller.
    let o = spkg()
        .args([
            "session",
            "observe",
            &id,
            "--probe",
            &probe,
            "--value",
            "2",
            "--version",
            "0",
            "--server",
            &server.1,
        ])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("version_conflict"));

    let before = session_json(&server.1, &["posterior", &id]);
    drop(server);

    let server = start_server(&data_dir);
    let list = session_json(&server.1, &["list"]);
    assert_eq!(list.as_array().unwrap().len(), 1);
    assert_eq!(session_json(&server.1, &["posterior", &id]), before);
    let replay = session_json(&server.1, &["replay", &id]);
    assert_eq!(replay["matches"], true);
    assert_eq!(
        session_json(&server.1, &["history", &id])["history"]
            .as_array()
            .unwrap()
            .len(),
        1
    );
}

fn reqwest_get(url: &str) -> serde_json::Value {
    let rt = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .unwrap();
    rt.block_on(async {
        spkg_client::Client::new(url.trim_end_matches("/healthz"))
            .health()
            .await
    })
    .map(|h| serde_json::to_value(h).unwrap())
    .unwrap()
}

#[test]
fn serve_fails_on_bad_data_dir_and_busy_port() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("not-a-dir");
    std::fs::write(&file, "x").unwrap();
    let o = run(&["serve", "--addr", "127.0.0.1:0", "--data-dir", file.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());

    let busy = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = busy.local_addr().unwrap().to_string();
    let o = spkg()
        .args(["serve", "--data-dir", dir.path().join("d").to_str().unwrap()])
        .env("SPKG_ADDR", &addr)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot bind"));
}

#[test]
fn serve_config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("serve.json");
    std::fs::write(
        &cfg,
        r#"{"schema_version": 1, "addr": "256.0.0.1:1", "data_dir": "/nonexistent/x"}"#,
    )
    .unwrap();
    let data_dir = dir.path().join("data");
    let mut child = spkg()
        .args([
            "serve",
            "--config",
            cfg.to_str().unwrap(),
            "--addr",
            "127.0.0.1:0",
            "--data-dir",
            data_dir.to_str().unwrap(),
        ])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let _ = child.kill();
    let _ = child.wait();
    assert!(line.starts_with("listening on http://127.0.0.1:"), "{line}");
    assert!(data_dir.is_dir());

    std::fs::write(&cfg, r#"{"schema_version": 1, "port": 3}"#).unwrap();
    assert_eq!(
        run(&["serve", "--config", cfg.to_str().unwrap()]).status.code(),
        Some(2)
    );
}
