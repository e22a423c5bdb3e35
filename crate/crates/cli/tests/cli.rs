use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;
use wavefluct_cli::config::RunConfig;

const BIN: &str = env!("CARGO_BIN_EXE_wavefluct");

/// Small enough for a test: 8 inclusions at eta = 1/2 and a 47^3 grid.
fn config(medium_laws: &str, out: &Path) -> String {
    format!(
        r#"
output_dir = "{out}"
eta_sweep = [0.5]
delta = 0.05

[medium]
eta = 0.5
seed = 5
domain_b = {{ kind = "box", lo = [-0.6, -0.6, -0.6], hi = [0.6, 0.6, 0.6] }}
{medium_laws}

[supercell]
l = 3
per_cell = 16

[solver]
tol = 1e-8
max_iter = 20000
h = 0.0625
pad = 0.5
pml_width = 0.35
allow_thin_pml = true

[budgets]
mc_samples = 3
outer = 3
noise_draws = 3
n_modes = 400
quadrature_nodes = 8

[f_spec]
center = [-0.85, 0.0, 0.0]
width = 0.08
cutoff = 2.5

[g_spec]
center = [0.85, 0.05, 0.0]
width = 0.08
cutoff = 2.5
"#,
        out = out.display()
    )
}

const RANDOM: &str = r#"
nu0 = { theta = { kind = "box", lo = [0.45, 0.45, 0.45], hi = [0.55, 0.55, 0.55] }, rho = { kind = "uniform", lo = 0.26, hi = 0.3 } }
nu1 = { kind = "rect", re = [1.0, 3.0], im = [0.5, 1.5] }
"#;

const DETERMINISTIC: &str = r#"
nu0 = { theta = { kind = "point", theta = [0.5, 0.5, 0.5] }, rho = { kind = "point", rho = 0.3 } }
nu1 = { kind = "point", a = [2.0, 1.0] }
"#;

fn write_config(dir: &Path, laws: &str) -> PathBuf {
    let p = dir.join("run.toml");
    fs::write(&p, config(laws, &dir.join("out"))).unwrap();
    p
}

fn wavefluct(args: &[&str], threads: &str) -> std::process::Output {
    Command::new(BIN).args(args).env("WAVEFLUCT_THREADS", threads).env("RUST_LOG", "warn").output().unwrap()
}

fn ok(args: &[&str], threads: &str) {
    let o = wavefluct(args, threads);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn data(dir: &Path, name: &str) -> Value {
    let v: Value = serde_json::from_slice(&fs::read(dir.join("out").join(name)).unwrap()).unwrap();
    v["data"].clone()
}

#[test]
fn reruns_are_bit_identical_across_thread_counts() {
    let runs: Vec<_> = ["1", "2"]
        .iter()
        .map(|threads| {
            let dir = tempfile::tempdir().unwrap();
            let cfg = write_config(dir.path(), RANDOM);
            let c = cfg.to_str().unwrap();
            for stage in ["sample-medium", "correctors", "effective", "mc-variance"] {
                ok(&[stage, "--config", c], threads);
            }
            dir
        })
        .collect();
    for name in ["medium.json", "medium.csv", "correctors.json", "correctors.csv", "effective.json", "mc_variance.json", "pairings.csv"] {
        let a = fs::read(runs[0].path().join("out").join(name)).unwrap();
        let b = fs::read(runs[1].path().join("out").join(name)).unwrap();
        assert!(a == b, "{name} differs between runs");
    }
    let m = data(runs[0].path(), "mc_variance.json");
    assert!(m[0]["e_abs2"].as_f64().unwrap() > 0.0);
}

#[test]
fn zero_variance_laws_give_zero_fluctuations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), DETERMINISTIC);
    ok(&["run", "--config", cfg.to_str().unwrap()], "1");
    let cov = data(dir.path(), "covariances.json")["set"].clone();
    let mut largest: f64 = 0.0;
    let mut visit = |v: &Value| {
        fn walk(v: &Value, f: &mut dyn FnMut(f64)) {
            match v {
                Value::Number(n) => f(n.as_f64().unwrap()),
                Value::Array(a) => a.iter().for_each(|x| walk(x, f)),
                Value::Object(o) => o.values().for_each(|x| walk(x, f)),
                _ => {}
            }
        }
        walk(v, &mut |x| largest = largest.max(x.abs()));
    };
    for k in ["c_w", "c_wn", "c_theta", "c_theta_star", "c_a", "c_a_star"] {
        visit(&cov[k]);
    }
    assert!(largest <= 1e-12, "largest covariance entry {largest:e}");
    let mc = data(dir.path(), "mc_variance.json");
    assert_eq!(mc[0]["e_abs2"].as_f64().unwrap(), 0.0);
    let limit = data(dir.path(), "limit.json");
    assert!(limit["moments"]["e_abs2"].as_f64().unwrap().abs() <= 1e-20);
    let report = data(dir.path(), "report.json");
    assert_eq!(report["comparison"]["rows"].as_array().unwrap().len(), 1);
}

#[test]
fn every_artifact_is_stamped() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), RANDOM);
    ok(&["sample-medium", "--config", cfg.to_str().unwrap()], "1");
    let hash = RunConfig::load(&cfg).unwrap().hash;
    let v: Value = serde_json::from_slice(&fs::read(dir.path().join("out/medium.json")).unwrap()).unwrap();
    assert_eq!(v["schema"], "wavefluct.medium");
    assert_eq!(v["config_hash"], hash.as_str());
    assert_eq!(v["seed"], 5);
    assert!(!v["build"].as_str().unwrap().is_empty());
    let csv = fs::read_to_string(dir.path().join("out/medium.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("schema_version,config_hash,seed,build,j0"));
    assert!(lines.next().unwrap().starts_with(&format!("1,{hash},5,")));
}

#[test]
fn stages_refuse_inputs_from_another_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), RANDOM);
    let c = cfg.to_str().unwrap();
    ok(&["correctors", "--config", c], "1");
    let text = fs::read_to_string(&cfg).unwrap().replace("seed = 5", "seed = 6");
    fs::write(&cfg, text).unwrap();
    let o = wavefluct(&["effective", "--config", c], "1");
    assert_eq!(o.status.code(), Some(1));
    let err: Value = serde_json::from_slice(o.stderr.split(|b| *b == b'\n').rfind(|l| !l.is_empty()).unwrap()).unwrap();
    assert_eq!(err["kind"], "stage");
    assert!(dir.path().join("out/error.json").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), RANDOM);
    let bad = fs::read_to_string(&cfg).unwrap().replace("center = [-0.85, 0.0, 0.0]", "center = [-0.5, 0.0, 0.0]");
    let p = dir.path().join("bad.toml");
    fs::write(&p, bad).unwrap();
    let o = wavefluct(&["sample-medium", "--config", p.to_str().unwrap()], "1");
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("outside the closure of B"));

    let starved = fs::read_to_string(&cfg).unwrap().replace("max_iter = 20000", "max_iter = 3");
    fs::write(&p, starved).unwrap();
    let o = wavefluct(&["mc-variance", "--config", p.to_str().unwrap()], "1");
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));

    let o = wavefluct(&["verify", "chatterjee"], "1");
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("[PASS]"));
}

#[test]
fn config_hash_ignores_formatting() {
    let dir = tempfile::tempdir().unwrap();
    let text = config(RANDOM, &dir.path().join("out"));
    let a = RunConfig::from_toml(&text).unwrap().hash().unwrap();
    let b = RunConfig::from_toml(&text.replace("tol = 1e-8", "tol = 0.00000001   # same")).unwrap().hash().unwrap();
    assert_eq!(a, b);
    let c = RunConfig::from_toml(&text.replace("tol = 1e-8", "tol = 1e-7")).unwrap().hash().unwrap();
    assert_ne!(a, c);
}

#[test]
fn shipped_configs_validate() {
    for name in ["smoke.toml", "desk.toml"] {
        let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
        RunConfig::load(&p).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}
