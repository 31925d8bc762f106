use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn raystab(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_raystab"))
        .args(args)
        .current_dir(cwd)
        .env_remove("RAYSTAB_OUT")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

const STRAIN_BETA: &str = r#"
[field]
kind = "strain"
lambda = [-1, 0, 1]

[task]
kind = "beta"
T = 1.0

[task.plan]
n_seeds = 32
refine_rounds = 1
"#;

#[test]
fn beta_report_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "s.toml", STRAIN_BETA);
    let o = raystab(&["run", "s.toml", "--out", "out"], dir.path());
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let out = dir.path().join("out");
    let report = read_json(&out.join("growth_report.json"));
    let beta = report["beta_estimate"].as_f64().unwrap();
    assert!(beta >= std::f64::consts::E - 1e-3, "{beta}");

    let m = read_json(&out.join("manifest.json"));
    assert_eq!(m["task"], "beta");
    assert_eq!(m["verdict"], "none");
    let scenario_hash = hex::encode(Sha256::digest(STRAIN_BETA.as_bytes()));
    assert_eq!(m["scenario"]["sha256"], scenario_hash.as_str());
    let arts = m["artifacts"].as_array().unwrap();
    assert_eq!(arts.len(), 2);
    for a in arts {
        let bytes = fs::read(out.join(a["file"].as_str().unwrap())).unwrap();
        assert_eq!(a["sha256"], hex::encode(Sha256::digest(&bytes)).as_str());
        assert_eq!(a["bytes"].as_u64().unwrap() as usize, bytes.len());
    }
    let csv = fs::read_to_string(out.join("sup_series.csv")).unwrap();
    assert!(csv.starts_with("t,sup_b\n"));
}

#[test]
fn reruns_are_byte_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "s.toml", STRAIN_BETA);
    for (workers, out) in [("1", "a"), ("3", "b"), ("3", "c")] {
        let o = raystab(
            &["run", "s.toml", "--out", out, "--workers", workers],
            dir.path(),
        );
        assert_eq!(o.status.code(), Some(0));
    }
    for f in ["growth_report.json", "sup_series.csv"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        for other in ["b", "c"] {
            assert_eq!(a, fs::read(dir.path().join(other).join(f)).unwrap(), "{f}");
        }
    }
}

#[test]
fn certify_abc_passes() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "c.toml",
        "[field]\nkind = \"abc\"\n[task]\nkind = \"certify\"\nT = 1.0\n\
         [task.plan]\nn_seeds = 16\nrefine_rounds = 1\nvorticity_grid = 16\n\
         [output]\ndir = \"res\"\n",
    );
    let o = raystab(&["run", "c.toml"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    // output.dir resolves against the scenario file's directory
    let r = read_json(&dir.path().join("res/certificate_report.json"));
    assert_eq!(r["verdict"], "pass");
    assert_eq!(r["report"]["certificate"]["pass"], true);
    let m = read_json(&dir.path().join("res/manifest.json"));
    assert_eq!(m["verdict"], "pass");
}

#[test]
fn environment_overrides_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "v.toml",
        "[field]\nkind = \"shear\"\n[task]\nkind = \"verify_field\"\nn_samples = 50\n\
         [output]\ndir = \"ignored\"\n",
    );
    let o = Command::new(env!("CARGO_BIN_EXE_raystab"))
        .args(["run", "v.toml"])
        .current_dir(dir.path())
        .env("RAYSTAB_OUT", "from_env")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("from_env/verify_report.json").exists());
    assert!(!dir.path().join("ignored").exists());
}

#[test]
fn configuration_errors_exit_1_with_key_paths() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "bad.toml",
        "[field]\nkind = \"strain\"\nlambda = [1, 1, 1]\n[task]\nkind = \"beta\"\nT = 1.0\n",
    );
    let o = raystab(&["run", "bad.toml", "--out", "out"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("field.lambda"), "{err}");
    assert!(err.contains("strain eigenvalues must sum to zero"), "{err}");
    assert!(!dir.path().join("out").exists());

    write(
        dir.path(),
        "coarse.toml",
        "[field]\nkind = \"rotation\"\n[task]\nkind = \"wkb_sweep\"\nT = 1.0\n\
         epsilons = [0.1, 0.05, 0.02]\nh = 0.005\n",
    );
    let o = raystab(&["run", "coarse.toml"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(
        err.contains("task.h") && err.contains("resolution constraint"),
        "{err}"
    );

    assert_eq!(
        raystab(&["catalog", "--bogus"], dir.path()).status.code(),
        Some(1)
    );
    assert_eq!(
        raystab(&["run", "missing.toml"], dir.path()).status.code(),
        Some(1)
    );
    assert_eq!(
        raystab(&["run", "bad.toml", "--workers", "0"], dir.path())
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn aborted_computation_exits_2_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    // ξ along the contracting axis decays like e^{-t} and the integration
    // cannot reach T = 800
    write(
        dir.path(),
        "u.toml",
        "[field]\nkind = \"strain\"\nlambda = [-1, 0, 1]\n[task]\nkind = \"ray\"\nT = 800.0\n\
         [[task.seeds]]\nx0 = [0, 0, 0]\nxi0 = [1, 0, 0]\nb0 = [0, 1, 0]\n",
    );
    let o = raystab(&["run", "u.toml", "--out", "out"], dir.path());
    assert_eq!(
        o.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(String::from_utf8_lossy(&o.stderr).contains("aborted"));
    let left = dir.path().join("out");
    assert!(!left.exists() || fs::read_dir(&left).unwrap().count() == 0);
}

#[test]
fn ray_trajectories_are_line_delimited() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "r.toml",
        "[field]\nkind = \"shear\"\n[task]\nkind = \"ray\"\nT = 3.0\n\
         [[task.seeds]]\nx0 = [0, 0, 0]\nxi0 = [0, 0, 1]\nb0 = [0, 1, 0]\nframed = true\n",
    );
    let o = raystab(&["run", "r.toml", "--out", "out"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("out/ray_000.jsonl")).unwrap();
    let records: Vec<Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert!(records.len() > 2);
    let last = records.last().unwrap();
    assert_eq!(last["t"], 3.0);
    for key in ["gamma", "xi", "b", "btilde", "omega"] {
        assert_eq!(last[key].as_array().unwrap().len(), 3, "{key}");
    }
    let b: Vec<f64> = last["b"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    let norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!((norm - 10f64.sqrt()).abs() <= 1e-6, "{norm}");
}

#[test]
fn burgers_without_field_section() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "b.toml",
        "[task]\nkind = \"burgers\"\nnx = 128\nT = 2.0\n\
         u0 = { kind = \"sine\", amplitude = -1.0 }\n\
         v0 = { kind = \"constant\", value = 1.0 }\nsnapshot_times = [0.5]\n",
    );
    let o = raystab(&["run", "b.toml", "--out", "out"], dir.path());
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let r = read_json(&dir.path().join("out/burgers_report.json"));
    assert!(r["l1"]["max_rel_drift"].as_f64().unwrap() <= 1e-12);
    assert_eq!(r["shock"]["status"], "shock");
    assert_eq!(r["snapshots"].as_array().unwrap().len(), 3);
    let snaps = fs::read_to_string(dir.path().join("out/burgers_snapshots.csv")).unwrap();
    assert_eq!(snaps.lines().count(), 1 + 3 * 128);
    let m = read_json(&dir.path().join("out/manifest.json"));
    assert_eq!(m["field"], "none");
}

#[test]
fn catalog_and_schema() {
    let dir = tempfile::tempdir().unwrap();
    let o = raystab(&["catalog"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    for kind in ["rotation", "strain", "shear", "abc", "trig_poly"] {
        assert!(text.lines().any(|l| l == kind), "{kind}");
    }
    let o = raystab(&["catalog", "--machine"], dir.path());
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc.as_array().unwrap().len(), 5);

    let o = raystab(&["schema"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8(o.stdout).unwrap().contains("## Manifest"));
    assert_eq!(raystab(&["--help"], dir.path()).status.code(), Some(0));
}
