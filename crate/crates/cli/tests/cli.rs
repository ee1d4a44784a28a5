use std::path::Path;
use std::process::{Command, Output};

use anonpriv::rng::derive_seed;
use anonpriv::source_models::{Stage, TraceMatrix, UserPopulation};
use serde_json::{json, Value};

fn anonpriv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_anonpriv"))
        .args(args)
        .env("ANONPRIV_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn write(path: &Path, value: &Value) {
    std::fs::write(path, serde_json::to_string_pretty(value).unwrap()).unwrap();
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn grid(n_values: &[usize], gamma_values: &[f64], budget: f64) -> Value {
    json!({
        "model": {"kind": "iid-2"},
        "n_values": n_values,
        "eta_values": [1.0],
        "gamma_values": gamma_values,
        "c": 5.0,
        "c_prime": 0.5,
        "trials": 20,
        "seed": 4,
        "budget": budget,
    })
}

#[test]
fn verify_passes_all_suites() {
    let out = anonpriv(&["verify", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 4, "{stdout}");
}

#[test]
fn empty_grid_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("grid.json");
    write(&cfg, &grid(&[5], &[], 1e6));
    let out = anonpriv(&["sweep", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o.csv").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn malformed_key_names_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("grid.json");
    let mut g = grid(&[5], &[0.5], 1e6);
    g["c_prime"] = json!("half");
    write(&cfg, &g);
    let out = anonpriv(&["sweep", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o.csv").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("c_prime"), "{}", stderr(&out));
}

#[test]
fn budget_overrun_exits_three_and_still_writes_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("grid.json");
    // n = 4 needs 20 * 4 * 20 = 1600 draws, n = 50 needs 250 * 50 * 20.
    write(&cfg, &grid(&[4, 50], &[0.5], 10_000.0));
    let csv = dir.path().join("o.csv");
    let out = anonpriv(&["sweep", "--quiet", "--config", cfg.to_str().unwrap(), "--out", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("budget"));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 2, "{text}");
    assert!(dir.path().join("o.csv.meta.json").exists());
}

#[test]
fn sweep_seed_override_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("grid.json");
    write(&cfg, &grid(&[4], &[0.5], 1e6));
    let csv = dir.path().join("o.csv");
    let out = anonpriv(&["sweep", "--quiet", "--seed", "991", "--config", cfg.to_str().unwrap(), "--out", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let meta = read_json(&dir.path().join("o.csv.meta.json"));
    assert_eq!(meta["seed"], json!(991));
    // The row carries the cell seed derived from the overridden root.
    let cell_seed = derive_seed(991, &[4, 1.0f64.to_bits(), 0.5f64.to_bits()]);
    let row = std::fs::read_to_string(&csv).unwrap();
    assert!(row.lines().nth(1).unwrap().contains(&format!(",{cell_seed},")), "{row}");
}

#[test]
fn attack_on_noiseless_permuted_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let pop = UserPopulation::from_bernoulli(&[0.1, 0.5, 0.9]).unwrap();
    std::fs::write(dir.path().join("population.json"), serde_json::to_string(&pop).unwrap()).unwrap();
    let m = 1000;
    // Pseudonyms hold users 1, 2, 0 with exact frequencies.
    let column = |p: f64| (0..m).map(|t| u8::from((t as f64 + 0.5) / m as f64 > 1.0 - p)).collect::<Vec<u8>>();
    let y = TraceMatrix::from_symbol_columns(Stage::Y, 2, vec![column(0.5), column(0.9), column(0.1)]).unwrap();
    y.write_csv(&dir.path().join("y.csv")).unwrap();
    let cfg = dir.path().join("attack.json");
    for (target, pseudonym) in [(0, 2), (1, 0), (2, 1)] {
        write(
            &cfg,
            &json!({
                "population": "population.json",
                "traces": "y.csv",
                "method": {"kind": "match", "alpha": 0.5, "a_n": 0.01, "target": target},
                "true_pseudonym": pseudonym,
                "seed": 5,
            }),
        );
        let report = dir.path().join("report.json");
        let out = anonpriv(&["attack", "--config", cfg.to_str().unwrap(), "--out", report.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        let v = read_json(&report);
        assert_eq!(v["kind"], json!("match"));
        assert_eq!(v["seed"], json!(5));
        assert_eq!(v["report"]["fallback_pseudonym"], json!(pseudonym));
        assert_eq!(v["report"]["success_flag"], json!(true));
    }
}

#[test]
fn generate_then_attack_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("gen.json");
    write(
        &cfg,
        &json!({
            "model": {"kind": "iid-2"},
            "n": 5,
            "observations": {"c": 20000.0, "eta": 0.0},
            "noise": {"c_prime": 0.001, "gamma": 0.0},
            "seed": 3,
        }),
    );
    let data = dir.path().join("data");
    let out = anonpriv(&["generate", "--config", cfg.to_str().unwrap(), "--out", data.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    for f in ["population.json", "x.csv", "z.csv", "y.csv", "truth.json"] {
        assert!(data.join(f).exists(), "{f}");
    }
    let truth = read_json(&data.join("truth.json"));
    assert_eq!(truth["seed"], json!(3));
    assert_eq!(truth["m"], json!(20000));
    let pseudonym = truth["permutation"][0].as_u64().unwrap();

    let attack = dir.path().join("attack.json");
    write(
        &attack,
        &json!({
            "population": "data/population.json",
            "traces": "data/y.csv",
            "method": {"kind": "match", "alpha": 0.5, "a_n": 0.001},
            "true_pseudonym": pseudonym,
        }),
    );
    let report = dir.path().join("report.json");
    let out = anonpriv(&["attack", "--config", attack.to_str().unwrap(), "--out", report.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    // Five uniform profiles are separated far beyond the sampling error at m = 20000.
    assert_eq!(read_json(&report)["report"]["success_flag"], json!(true));
}

#[test]
fn generate_is_reproducible_and_seed_overridable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("gen.json");
    write(
        &cfg,
        &json!({
            "model": {"kind": "iid-r", "r": 3},
            "n": 4,
            "observations": {"c": 2.0, "eta": 1.0},
            "noise": {"c_prime": 0.5, "gamma": 0.5},
            "seed": 10,
        }),
    );
    let run = |name: &str, extra: &[&str]| {
        let d = dir.path().join(name);
        let mut args = vec!["generate", "--quiet", "--config", cfg.to_str().unwrap(), "--out", d.to_str().unwrap()];
        args.extend_from_slice(extra);
        assert_eq!(anonpriv(&args).status.code(), Some(0));
        std::fs::read(d.join("y.csv")).unwrap()
    };
    let a = run("a", &[]);
    let b = run("b", &[]);
    let c = run("c", &["--seed", "11"]);
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(read_json(&dir.path().join("c/truth.json"))["seed"], json!(11));
}

#[test]
fn exact_mi_reports_seed_and_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("mi.json");
    write(
        &cfg,
        &json!({
            "method": "exact-small",
            "population": {"kind": "random", "n": 3, "density": {"delta_lo": 1.0, "delta_hi": 1.0, "kind": "uniform_on_support"}},
            "noise": {"c_prime": 1.0, "gamma": 0.5},
            "observations": {"c": 10.0, "eta": 0.0},
            "time": 0,
            "trials": 50,
            "seed": 2,
            "enumeration_cap": 7,
        }),
    );
    let out_path = dir.path().join("mi_out.json");
    let out = anonpriv(&["mi", "--seed", "8", "--config", cfg.to_str().unwrap(), "--out", out_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v = read_json(&out_path);
    assert_eq!(v["seed"], json!(8));
    let bits = v["estimate"]["value_bits"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&bits));
    assert!(v["median_dp_epsilon"].as_f64().unwrap() >= 0.0);
}

#[test]
fn missing_config_is_a_configuration_error() {
    let out = anonpriv(&["sweep", "--config", "/nonexistent/grid.json", "--out", "/tmp/x.csv"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}
