use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use spinlind_workbench::output::{sha256_hex, Manifest};
use spinlind_workbench::SweepConfig;

fn spinlind(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spinlind")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn spectrum_command_matches_the_closed_form_pt_spectrum() {
    // At p = 0 the one-spin PT Liouvillian has eigenvalues
    // i g q - (2 kappa / S)(|q| + l (1 + l + 2|q|)), q = -2S..2S, l = 0..2S-|q|.
    let dir = tempfile::tempdir().unwrap();
    let o = spinlind(&["spectrum", "--model", "one-spin-pt", "--p", "0", "--S", "1", "--g", "1", "--kappa", "1"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "point,S,g,kappa,p,index,re,im");
    let mut got: Vec<(f64, f64)> = lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[6].parse().unwrap(), f[7].parse().unwrap())
        })
        .collect();
    let (s, g, kappa) = (1.0_f64, 1.0, 1.0);
    let mut want = Vec::new();
    for q in -2i32..=2 {
        let aq = q.abs() as f64;
        for l in 0..=(2 - q.abs()) {
            let l = l as f64;
            want.push((-(2.0 * kappa / s) * (aq + l * (1.0 + l + 2.0 * aq)), g * q as f64));
        }
    }
    let key = |a: &(f64, f64), b: &(f64, f64)| (a.0, a.1).partial_cmp(&(b.0, b.1)).unwrap();
    let round = |v: &mut Vec<(f64, f64)>| v.iter_mut().for_each(|x| *x = ((x.0 * 1e6).round() / 1e6, (x.1 * 1e6).round() / 1e6));
    round(&mut got);
    round(&mut want);
    got.sort_by(key);
    want.sort_by(key);
    assert_eq!(got.len(), 9);
    assert_eq!(got, want);
}

#[test]
fn configuration_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = spinlind(&["spectrum", "--model", "one-spin-btc", "--S", "1", "--g", "1", "--kappa", "1", "--p", "0.5"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("`p`"));

    fs::write(dir.path().join("bad.toml"), "model = \"one-spin-btc\"\nspins = [1]\ntasks = []\nout = \"o\"\n").unwrap();
    let o = spinlind(&["run", "bad.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.toml") && err.contains("line 3"), "{err}");

    let o = spinlind(&["run", "missing.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn degenerate_stationary_state_exits_with_code_3() {
    // Without dissipation every diagonal state is stationary.
    let dir = tempfile::tempdir().unwrap();
    let o = spinlind(&["steady", "--model", "one-spin-btc", "--S", "1", "--g", "1", "--kappa", "0"], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn btc_detect_needs_three_spins() {
    let dir = tempfile::tempdir().unwrap();
    let o = spinlind(&["btc-detect", "--model", "one-spin-btc", "--S", "2", "--g", "1", "--kappa", "0.5"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn json_output_parses() {
    let dir = tempfile::tempdir().unwrap();
    let o = spinlind(
        &["check-pt", "--model", "one-spin-pt", "--S", "1,2", "--g", "1", "--kappa", "0.5", "--p", "0,0.5", "--format", "json"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let rows = v["tables"][0]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    for r in rows {
        let symmetric = r["symmetric"].as_i64().unwrap();
        assert_eq!(symmetric == 1, r["p"].as_f64().unwrap() == 0.0, "{r}");
    }
}

const SWEEP: &str = r#"
model = "one-spin-btc"
spins = [1, 2, 3]
tasks = ["spectrum", "steady", "dynamics", "trajectory", "perturb", "check-pt", "btc-detect"]
out = "results"
seed = 5

[params]
g = 1.0
kappa = [0.5, 1.5]

[dynamics]
t_max = 2.0
n_times = 11

[trajectory]
n_traj = 8

[[figures]]
name = "sz"
kind = "series"
task = "dynamics"
x = "t"
y = "sz"
group = "S"
point = 0

[[figures]]
name = "residual"
kind = "residual-matrix"
task = "steady"
point = 1
S = 3
"#;

#[test]
fn sweeps_are_reproducible_and_manifests_are_honest() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("sweep.toml"), SWEEP).unwrap();
    for out in ["a", "b"] {
        let o = spinlind(&["run", "sweep.toml", "--out", out], dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = dir.path().join("a");
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.tables.len(), 7, "{:?}", manifest.tables.iter().map(|t| &t.file).collect::<Vec<_>>());
    for f in &manifest.files {
        let bytes = fs::read(a.join(&f.path)).unwrap();
        assert_eq!(sha256_hex(&bytes), f.sha256, "{}", f.path);
        assert_eq!(bytes.len(), f.bytes);
        if f.path.ends_with(".csv") || f.path.ends_with(".svg") {
            assert_eq!(bytes, fs::read(dir.path().join("b").join(&f.path)).unwrap(), "{} differs between runs", f.path);
        }
    }
    assert!(a.join("sz.svg").exists() && a.join("residual.svg").exists());
    let residual = fs::read_to_string(a.join("residual.svg")).unwrap();
    assert_eq!(residual.matches("class=\"cell\"").count(), 49);

    // The config echo re-parses to the effective configuration.
    let echo = SweepConfig::from_toml(&fs::read_to_string(a.join("config.toml")).unwrap()).unwrap();
    assert_eq!(echo, manifest.config);
    assert_eq!(echo.out, Path::new("a"));
    assert_eq!(echo.seed, 5);

    // Row counts: 2 points x 3 spins, dynamics at 11 times.
    let dynamics = manifest.tables.iter().find(|t| t.task == "dynamics").unwrap();
    assert_eq!(dynamics.rows, 66);
    let steady = manifest.tables.iter().find(|t| t.task == "steady").unwrap();
    assert_eq!(steady.rows, 6);
    assert_eq!(&steady.columns[..4], &["point", "S", "g", "kappa"]);

    // A different seed changes only the trajectory table.
    let o = spinlind(&["run", "sweep.toml", "--out", "c", "--seed", "6"], dir.path());
    assert!(o.status.success());
    let c = dir.path().join("c");
    assert_ne!(fs::read(a.join("trajectory.csv")).unwrap(), fs::read(c.join("trajectory.csv")).unwrap());
    assert_eq!(fs::read(a.join("dynamics.csv")).unwrap(), fs::read(c.join("dynamics.csv")).unwrap());
}

#[test]
fn every_recipe_parses() {
    let recipes = Path::new(env!("CARGO_MANIFEST_DIR")).join("recipes");
    let mut n = 0;
    for entry in fs::read_dir(recipes).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            spinlind_workbench::output::read_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 10);
}

#[test]
fn triple_flag_takes_comma_separated_groups() {
    let dir = tempfile::tempdir().unwrap();
    // L = Sz (dephasing) plus L = Sx, both as x-ladder triples.
    let args = ["check-pt", "--model", "class", "--S", "1", "--g", "1", "--kappa", "1", "--triple", "0,-0.5,0,0.5,0,0"];
    let o = spinlind(&args, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut two = args.to_vec();
    two.extend(["--triple", "0,0,0,0,1,0"]);
    assert!(spinlind(&two, dir.path()).status.success());
    let mut short = args[..args.len() - 1].to_vec();
    short.push("0,-0.5,0");
    assert_eq!(spinlind(&short, dir.path()).status.code(), Some(2));
}
