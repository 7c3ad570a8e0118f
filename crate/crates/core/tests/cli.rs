use std::path::Path;
use std::process::Command;

const SMALL: &str = "[grid]\nl_max = 6\nn_pulse = 16\n[formation]\nn_u = 21\nu_max = 1.0\n[report]\nrandom_fields = 10\n";

fn run(dir: &Path, args: &[&str]) -> (i32, String) {
    let cfg = dir.join("small.toml");
    if !cfg.exists() {
        std::fs::write(&cfg, SMALL).unwrap();
    }
    let out = Command::new(env!("CARGO_BIN_EXE_nullpulse"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .env_remove("NULLPULSE_THREADS")
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&out.stdout).to_string() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap_or(-1), text)
}

fn out_arg(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (c, t) = run(d, &["gen-data", "--out", &out_arg(d, "a")]);
    assert_eq!(c, 0, "{t}");
    assert!(d.join("a/free_data.csv").exists() && d.join("a/manifest.json").exists());
    let (c, t) = run(d, &["evolve-formation", "--out", &out_arg(d, "b")]);
    assert_eq!(c, 10, "{t}");
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("b/formation_report.json")).unwrap()).unwrap();
    assert_eq!(report["result"]["verdict"], "trapped");
    assert!(report["config"].is_object());
    let (c, t) = run(d, &["evolve-formation", "--out", &out_arg(d, "b2"), "--mode", "bound", "--delta", "0.01"]);
    assert_eq!(c, 10, "{t}");
    let (c, _) = run(d, &["gen-data", "--out", &out_arg(d, "c"), "--delta", "5"]);
    assert_eq!(c, 2);
    let (c, _) = run(d, &["gen-data", "--out", &out_arg(d, "c"), "--mode", "sideways"]);
    assert_eq!(c, 2);
    std::fs::write(d.join("bad.toml"), "[pulse]\nmas = 1\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_nullpulse"))
        .args(["gen-data", "--config", &out_arg(d, "bad.toml"), "--out", &out_arg(d, "c")])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let (c, t) = run(d, &["check-balance", "--out", &out_arg(d, "e")]);
    assert_eq!(c, 0, "{t}");
    let (c, t) = run(d, &["check-balance", "--baseline", "one", "--out", &out_arg(d, "f")]);
    assert_eq!(c, 0, "{t}");
    let bal = std::fs::read_to_string(d.join("f/balance.csv")).unwrap();
    assert!(bal.lines().next().unwrap().starts_with("equation,term,signature,deficit,maxwell_factors"));
    assert!(bal.lines().count() > 1);
}

#[test]
fn formation_verdicts_by_mass() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("small.toml"), format!("{SMALL}[pulse]\nmass = 0.10\n")).unwrap();
    let (c, t) = run(d, &["evolve-formation", "--out", &out_arg(d, "a")]);
    assert_eq!(c, 11, "{t}");
    std::fs::write(d.join("small.toml"), format!("{SMALL}[pulse]\nmass = 0.25\n")).unwrap();
    let (c, t) = run(d, &["evolve-formation", "--out", &out_arg(d, "b")]);
    assert_eq!(c, 4, "{t}");
}

fn files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    v.sort();
    v
}

#[test]
fn artifacts_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for cmd in ["solve-h0", "norms", "residuals", "report"] {
        let (a, b) = (format!("{cmd}-1"), format!("{cmd}-2"));
        let (c1, t1) = run(d, &[cmd, "--out", &out_arg(d, &a), "--seed", "7"]);
        let (c2, _) = run(d, &[cmd, "--out", &out_arg(d, &b), "--seed", "7"]);
        assert_eq!((c1, c2), (0, 0), "{cmd}: {t1}");
        let fa = files(&d.join(&a));
        assert_eq!(fa, files(&d.join(&b)));
        assert!(fa.len() >= 3, "{cmd}: {fa:?}");
        for f in fa.iter().filter(|f| *f != "manifest.json") {
            let x = std::fs::read(d.join(&a).join(f)).unwrap();
            let y = std::fs::read(d.join(&b).join(f)).unwrap();
            assert!(x == y, "{cmd}/{f} differs between runs");
        }
        let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join(&a).join("manifest.json")).unwrap()).unwrap();
        assert_eq!(m["subcommand"], cmd);
        assert_eq!(m["exit_code"], 0);
        assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
        // the thread count lands in the embedded config, but not in the tables
        let t = format!("{cmd}-t");
        let (c3, _) = run(d, &[cmd, "--out", &out_arg(d, &t), "--seed", "7", "--threads", "2"]);
        assert_eq!(c3, 0);
        for f in fa.iter().filter(|f| f.ends_with(".csv")) {
            let x = std::fs::read(d.join(&a).join(f)).unwrap();
            let y = std::fs::read(d.join(&t).join(f)).unwrap();
            assert!(x == y, "{cmd}/{f} depends on the thread count");
        }
    }
}

#[test]
fn residuals_on_a_written_slab() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (c, t) = run(d, &["solve-h0", "--out", &out_arg(d, "h")]);
    assert_eq!(c, 0, "{t}");
    let slab = out_arg(d, "h/h0.slab");
    let (c, t) = run(d, &["residuals", "--input", &slab, "--out", &out_arg(d, "r")]);
    assert_eq!(c, 0, "{t}");
    let csv = std::fs::read_to_string(d.join("r/residuals.csv")).unwrap();
    assert!(csv.starts_with("equation,u,ubar,max_norm,l2_norm"));
    let (c, _) = run(d, &["residuals", "--input", &out_arg(d, "missing.slab"), "--out", &out_arg(d, "r2")]);
    assert_ne!(c, 0);
}

#[test]
fn help_lists_subcommands() {
    let out = Command::new(env!("CARGO_BIN_EXE_nullpulse")).arg("--help").output().unwrap();
    let s = String::from_utf8_lossy(&out.stdout);
    for c in ["gen-data", "solve-h0", "evolve-formation", "norms", "scaling-study", "residuals", "check-balance", "report"] {
        assert!(s.contains(c), "{c}");
    }
}
