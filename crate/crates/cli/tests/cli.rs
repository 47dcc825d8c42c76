use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fgpinn"))
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("fgpinn-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

const TINY: &str = r#"
[run]
benchmark = "poisson1d"

[training]
n_interior = 64
width = 6
lf_depth = 2
modules = 1
iters = 4
eval_every = 2
"#;

fn tiny_config(dir: &Path, extra: &str) -> PathBuf {
    let p = dir.join("tiny.toml");
    std::fs::write(&p, format!("{TINY}{extra}")).unwrap();
    p
}

fn run_dirs(out: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .collect();
    v.sort();
    v
}

fn report(dir: &Path, name: &str) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(name)).unwrap()).unwrap()
}

/// History without the wall-clock column.
fn losses(dir: &Path) -> Vec<String> {
    std::fs::read_to_string(dir.join("history.csv"))
        .unwrap()
        .lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string())
        .collect()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn run_writes_report_and_config_round_trips() {
    let dir = scratch("run");
    let cfg = tiny_config(&dir, "");
    let out = dir.join("runs");
    let o = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let first = run_dirs(&out).pop().unwrap();
    let name = first.file_name().unwrap().to_string_lossy().to_string();
    assert!(name.starts_with("poisson1d-seed1234-"), "{name}");
    let r = report(&first, "report.json");
    assert!(r["metrics"]["rel_l2"].as_f64().unwrap() > 0.0);
    assert!(r["metrics"]["max_abs_err"].is_number());
    assert!(r["metrics"]["rel_l2_slices"].is_object());
    assert_eq!(r["seed"], 1234);
    assert!(r["wall_ms"].is_number());
    for key in ["history", "spectrum", "amplitudes", "field_global", "model"] {
        let p = r["histories"][key].as_str().unwrap();
        assert!(Path::new(p).exists(), "{key}");
    }
    let hist = std::fs::read_to_string(first.join("history.csv")).unwrap();
    assert!(hist.starts_with(
        "iter,loss_total,loss_interior,loss_boundary,loss_initial,loss_velocity,loss_final,rel_l2,wall_ms\n"
    ));
    assert_eq!(hist.lines().count(), 1 + 5);
    let spectrum = std::fs::read_to_string(first.join("spectrum.csv")).unwrap();
    assert!(spectrum.starts_with("k,amp_exact,amp_pred,amp_hf,amp_lf\n"));
    let field = std::fs::read_to_string(first.join("field_global.csv")).unwrap();
    assert!(field.starts_with("x,u_exact,u_pred,abs_err\n"));

    // Re-run from the echoed config.
    let out2 = dir.join("runs2");
    let o = bin()
        .args(["run", "--config"])
        .arg(first.join("report.json"))
        .arg("--out")
        .arg(&out2)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let second = run_dirs(&out2).pop().unwrap();
    assert_eq!(losses(&first), losses(&second));
    assert_eq!(
        std::fs::read_to_string(first.join("model.json")).unwrap(),
        std::fs::read_to_string(second.join("model.json")).unwrap()
    );
}

#[test]
fn flags_override_file_and_keep_checkpoints() {
    let dir = scratch("flags");
    let cfg = tiny_config(&dir, "");
    let out = dir.join("runs");
    let o = bin()
        .args(["run", "--iters", "2", "--seed", "7", "--activation", "tanh", "--keep-checkpoints", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let d = run_dirs(&out).pop().unwrap();
    let r = report(&d, "report.json");
    assert_eq!(r["config"]["training"]["iters"], 2);
    assert_eq!(r["config"]["training"]["activation"], "tanh");
    assert_eq!(r["seed"], 7);
    assert!(d.join("checkpoints").join("iter_000000.json").exists());
}

#[test]
fn config_errors_exit_2() {
    let dir = scratch("cfgerr");
    let o = bin().arg("run").output().unwrap();
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("benchmark"));

    let bad = tiny_config(&dir, "widht = 3\n");
    let o = bin().args(["run", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("widht"));

    let o = bin().args(["run", "--benchmark", "heat1d", "--modules", "0"]).output().unwrap();
    assert_eq!(code(&o), 2);

    let o = bin().args(["run", "--benchmark", "nothing"]).output().unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn divergence_exits_3_with_partial_report() {
    let dir = scratch("diverge");
    let cfg = tiny_config(&dir, "lr = 1e300\n");
    let out = dir.join("runs");
    let o = bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let d = run_dirs(&out).pop().unwrap();
    let r = report(&d, "report.json");
    assert!(r["failure"].as_str().unwrap().contains("diverged"));
    assert!(losses(&d).len() >= 2);
}

#[test]
fn sweep_table_and_empty_axis() {
    let dir = scratch("sweep");
    let cfg = tiny_config(&dir, "");
    let o = bin()
        .args(["sweep", "--modules-list", "1,2", "--interior-list", "32,48", "--jobs", "2", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("runs"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let d = run_dirs(&dir.join("runs")).pop().unwrap();
    let table = std::fs::read_to_string(d.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "n_interior,modules_1,modules_2");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("32,") && lines[2].starts_with("48,"));
    for l in &lines[1..] {
        for v in l.split(',').skip(1) {
            assert!(v.parse::<f64>().unwrap() > 0.0);
        }
    }

    let o = bin()
        .args(["sweep", "--axis", "activations", "--activations-list", "sin,sigmoid", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("acts"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let d = run_dirs(&dir.join("acts")).pop().unwrap();
    let table = std::fs::read_to_string(d.join("sweep.csv")).unwrap();
    assert!(table.starts_with("n_interior,sin,sigmoid\n64,"));

    let o = bin()
        .args(["sweep", "--benchmark", "heat1d", "--modules-list", ""])
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn compare_reports_both_models() {
    let dir = scratch("compare");
    let cfg = tiny_config(&dir, "");
    let o = bin()
        .args(["compare", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("runs"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let d = run_dirs(&dir.join("runs")).pop().unwrap();
    let r = report(&d, "compare.json");
    assert!(r["fg"]["metrics"]["rel_l2"].is_number());
    assert!(r["baseline"]["metrics"]["rel_l2"].is_number());
    assert!(r["baseline_over_fg_rel_l2"].is_number());
    assert!(r["baseline"]["final_amplitudes"]["k100"].is_number());
    assert!(d.join("baseline_history.csv").exists() && d.join("fg_history.csv").exists());
}

#[test]
fn compare_baseline_is_reproducible() {
    let dir = scratch("compare2");
    let cfg = tiny_config(&dir, "");
    for out in ["a", "b"] {
        let o = bin()
            .args(["compare", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir.join(out))
            .output()
            .unwrap();
        assert_eq!(code(&o), 0);
    }
    let read = |o: &str| {
        let d = run_dirs(&dir.join(o)).pop().unwrap();
        std::fs::read_to_string(d.join("baseline_history.csv"))
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect::<Vec<_>>()
    };
    assert_eq!(read("a"), read("b"));
}

#[test]
fn verify_passes_and_detects_fault() {
    let o = bin().args(["verify", "--nets", "2"]).output().unwrap();
    let text = String::from_utf8_lossy(&o.stdout).to_string();
    assert_eq!(code(&o), 0, "{text}");
    assert!(text.contains("PASS jet_vs_fd"));
    assert!(text.contains("max_err="));

    let o = bin().args(["verify", "--nets", "1", "--inject-fault", "1.001"]).output().unwrap();
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL jet_vs_fd"));
}

#[test]
fn wave3_run_omits_undefined_t0_metric() {
    let dir = scratch("wave3");
    let out = dir.join("runs");
    let o = bin()
        .args(["run", "--benchmark", "wave3", "--iters", "1", "--interior", "64", "--modules", "1", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let d = run_dirs(&out).pop().unwrap();
    let r = report(&d, "report.json");
    let slices = r["metrics"]["rel_l2_slices"].as_object().unwrap();
    assert!(slices.contains_key("t=0.5") && !slices.contains_key("t=0"));
    assert!(d.join("field_t0.csv").exists());
}
