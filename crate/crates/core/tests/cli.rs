use std::path::Path;
use std::process::Command;

const SPEC: &str = r#"{
  "version": 1,
  "link": {
    "beta2": -2.17e-26, "gamma": 0.0013, "alpha_db_per_km": 0.2, "span_length_m": 100000.0,
    "num_spans": 2, "ase_noise_figure_db": 5.0, "launch_power_dbm": 0.0
  },
  "system": { "sim_steps_per_span": 4 },
  "variants": [
    { "name": "lsco15", "bank": { "source": "lsco", "taps": 15 } },
    { "name": "lsco15q", "bank": { "source": "lsco", "taps": 15 }, "quant": { "signal_bits": 9, "coeff_bits": 6 } }
  ],
  "sweep": { "launch_powers_dbm": [-1.0, 1.0], "symbols": 1024, "seeds": [1, 2] }
}"#;

fn tddbp(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_tddbp")).args(args).output().unwrap()
}

fn write_spec(dir: &Path, text: &str) -> String {
    let p = dir.join("spec.json");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn run_is_reproducible_and_comparable() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), SPEC);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (out, threads) in [(&a, "1"), (&b, "2")] {
        let o = tddbp(&["run", "--spec", &spec, "--out", out.to_str().unwrap(), "--threads", threads]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let ca = std::fs::read(a.join("results.csv")).unwrap();
    assert_eq!(ca, std::fs::read(b.join("results.csv")).unwrap());
    let text = String::from_utf8(ca).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "variant,power_dbm,seed,eff_snr_db,ber,n_symbols,spec_hash,build");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 8);
    assert!(rows.iter().all(|r| r.len() == 8 && r[6] == rows[0][6] && r[6].len() == 16 && !r[7].is_empty()));

    let summary = dir.path().join("summary.csv");
    let o = tddbp(&[
        "compare",
        a.to_str().unwrap(),
        b.to_str().unwrap(),
        "--out",
        summary.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(summary).unwrap();
    assert_eq!(table.lines().count(), 5);
    assert!(table.lines().skip(1).all(|l| l.split(',').nth(8) == Some("0.0000")));
}

#[test]
fn seed_override_replaces_sweep_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), SPEC);
    let out = dir.path().join("s");
    let o = tddbp(&["run", "--spec", &spec, "--out", out.to_str().unwrap(), "--seed", "9"]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().skip(1).all(|l| l.split(',').nth(2) == Some("9")));
}

#[test]
fn schema_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), &SPEC.replace("\"version\": 1", "\"version\": 2"));
    let o = tddbp(&["run", "--spec", &spec, "--out", dir.path().join("x").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("version"));
    let o = tddbp(&["train", "--spec", &write_spec(dir.path(), SPEC), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_with_three_and_keep_partial_rows() {
    let dir = tempfile::tempdir().unwrap();
    // 96 symbols cover the 15-tap support but not the 25-tap one
    let text = SPEC
        .replace("\"symbols\": 1024", "\"symbols\": 96")
        .replace("\"lsco15q\", \"bank\": { \"source\": \"lsco\", \"taps\": 15 }", "\"lsco25q\", \"bank\": { \"source\": \"lsco\", \"taps\": 25 }");
    let spec = write_spec(dir.path(), &text);
    let out = dir.path().join("f");
    let o = tddbp(&["run", "--spec", &spec, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let text = std::fs::read_to_string(out.join("results.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 8);
    assert!(rows[..4].iter().all(|r| r.starts_with("lsco15,") && !r.contains("failed")));
    assert!(rows[4..].iter().all(|r| r.starts_with("lsco25q,") && r.contains(",failed,failed,0,")));
}

#[test]
fn design_and_cost_write_files() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), SPEC);
    let out = dir.path().join("d");
    let o = tddbp(&["design", "--spec", &spec, "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let bank: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("bank_lsco15.json")).unwrap()).unwrap();
    assert_eq!(bank["T"], 15);

    let o = tddbp(&["cost", "--spec", &spec, "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let cost = std::fs::read_to_string(out.join("cost.csv")).unwrap();
    assert_eq!(cost.lines().count(), 2);
    assert!(cost.contains("lsco15q,15,9,6,768,3072,"));
    assert!(String::from_utf8_lossy(&o.stdout).contains("crossover at 21 taps"));
}

#[test]
fn compare_rejects_mismatched_grids() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let spec_a = write_spec(dir.path(), SPEC);
    assert!(tddbp(&["run", "--spec", &spec_a, "--out", a.to_str().unwrap()]).status.success());
    let spec_b = write_spec(dir.path(), &SPEC.replace("[-1.0, 1.0]", "[-1.0, 2.0]"));
    assert!(tddbp(&["run", "--spec", &spec_b, "--out", b.to_str().unwrap()]).status.success());
    let o = tddbp(&["compare", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("grid"));
}
