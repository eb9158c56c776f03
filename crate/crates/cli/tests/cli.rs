use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_gaussdeconv");

const GAUSSIAN_PAIR: &str = r#"
points = [[0.5, 0.0, 0.0, 0.0, 0.0], [2.0, 1.0, 0.0, 0.0, 0.0]]

[j]
kind = "mixture"
dim = 5
components = [{ weight = 1.0, covariance = 1.0 }]

[g]
kind = "mixture"
dim = 5
components = [{ weight = 1.0, covariance = 1.0 }]
"#;

const PERTURBED: &str = r#"
points = [[1.0, 0.0, 0.0, 0.0, 0.0]]

[j]
kind = "mixture"
dim = 5
components = [
  { weight = 1.25, covariance = 1.0 },
  { weight = -0.25, covariance = 2.0 },
]

[g]
kind = "mixture"
dim = 5
components = [{ weight = 1.0, covariance = 0.5 }]

[scan]
directions = [[1.0, 0.0, 0.0, 0.0, 0.0], [1.0, 1.0, 0.0, 0.0, 0.0]]
radii = [10.0, 15.0, 20.0, 30.0]

[oracle]
method = "series"
"#;

const SRBM_SMALL: &str = r#"
task = "gamma"

[model]
alpha = 0.5
legs = 3
substeps = 8
paths = 3000
batch_size = 500
probes = [1.0, 2.0, 3.0]
seed = 11
"#;

struct Sandbox {
    dir: TempDir,
}

impl Sandbox {
    fn new() -> Self {
        Self {
            dir: TempDir::new().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, contents: &str) -> PathBuf {
        let p = self.path(name);
        fs::write(&p, contents).unwrap();
        p
    }

    fn run(&self, out: &str, args: &[&str]) -> Output {
        Command::new(BIN)
            .arg("--out")
            .arg(self.path(out))
            .args(args)
            .env_remove("GAUSSDECONV_THREADS")
            .output()
            .unwrap()
    }
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn header(path: &Path) -> String {
    read(path).lines().next().unwrap().to_string()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn column(csv: &str, row: usize, name: &str) -> f64 {
    let mut lines = csv.lines();
    let names: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = names.iter().position(|n| *n == name).unwrap();
    lines.nth(row).unwrap().split(',').nth(idx).unwrap().parse().unwrap()
}

#[test]
fn walk_c_at_origin_in_five_dimensions() {
    let sb = Sandbox::new();
    let out = sb.run("w", &["walk-c", "--dim", "5"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let csv = read(&sb.path("w/walk_c.csv"));
    let c = column(&csv, 0, "C");
    assert!((c / 3.4505e-3 - 1.0).abs() < 1e-4, "C(0) = {c}");
    assert!((c / 3.450840064082869e-3 - 1.0).abs() < 1e-9, "C(0) = {c}");
}

#[test]
fn walk_c_flags_and_config_agree() {
    let sb = Sandbox::new();
    let cfg = sb.write(
        "walk.toml",
        "rel_tol = 1e-10\nsigma = [1.0, 2.0, 0.5]\npoints = [[1.0, 2.0, 3.0]]\n",
    );
    let a = sb.run("a", &["walk-c", "--config", cfg.to_str().unwrap()]);
    let b = sb.run("b", &["walk-c", "--sigma", "1,2,0.5", "--point", "1,2,3"]);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(b.status.code(), Some(0), "{}", stderr(&b));
    assert_eq!(read(&sb.path("a/walk_c.csv")), read(&sb.path("b/walk_c.csv")));
}

#[test]
fn check_assumptions_passes_for_gaussian_pair() {
    let sb = Sandbox::new();
    let cfg = sb.write("pair.toml", GAUSSIAN_PAIR);
    let out = sb.run("c", &["check-assumptions", "-c", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report: toml::Table = read(&sb.path("c/assumptions.toml")).parse().unwrap();
    assert_eq!(report["pass"].as_bool(), Some(true));
    assert!(read(&sb.path("c/summary.txt")).contains("[J] overall: pass"));
}

#[test]
fn check_assumptions_reports_failure_with_exit_two() {
    let sb = Sandbox::new();
    let cfg = sb.write("nc.toml", &GAUSSIAN_PAIR.replacen("weight = 1.0", "weight = 0.9", 1));
    let out = sb.run("c", &["check-assumptions", "-c", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(sb.path("c/manifest.toml").exists());
}

#[test]
fn solve_rejects_non_critical_kernel() {
    let sb = Sandbox::new();
    let cfg = sb.write("nc.toml", &PERTURBED.replace("weight = 1.25", "weight = 1.2"));
    let out = sb.run("s", &["solve", "-c", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("not critical"), "{}", stderr(&out));
    assert!(!sb.path("s/manifest.toml").exists());

    let out = sb.run("s", &["solve", "-c", cfg.to_str().unwrap(), "--subcritical"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let manifest = read(&sb.path("s/manifest.toml"));
    assert!(manifest.contains("subcritical = true"), "{manifest}");
}

#[test]
fn unknown_config_keys_are_rejected() {
    let sb = Sandbox::new();
    for (typo, key) in [
        (PERTURBED.replace("[oracle]", "[oracel]"), "oracel"),
        (PERTURBED.replace("radii =", "radius ="), "radius"),
        (PERTURBED.replace("dim = 5", "dimension = 5"), "dimension"),
        (format!("{PERTURBED}\n[solver]\nengin = \"fft\"\n"), "engin"),
    ] {
        let cfg = sb.write("typo.toml", &typo);
        let out = sb.run("t", &["solve", "-c", cfg.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(1));
        assert!(stderr(&out).contains(&format!("`{key}`")), "{}", stderr(&out));
    }
}

#[test]
fn usage_and_file_errors_exit_one() {
    let sb = Sandbox::new();
    assert_eq!(sb.run("u", &["no-such-command"]).status.code(), Some(1));
    let out = sb.run("u", &["solve", "-c", "/nonexistent/config.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("/nonexistent/config.toml"));
    let out = sb.run("u", &["walk-c", "--dim", "5", "--point", "1,2"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("points[0]"), "{}", stderr(&out));
}

#[test]
fn csv_headers_are_pinned() {
    let sb = Sandbox::new();
    let cfg = sb.write("p.toml", PERTURBED);
    let cfg = cfg.to_str().unwrap();
    for (args, file, expected) in [
        (
            vec!["walk-c", "--dim", "3"],
            "walk_c.csv",
            "x1,x2,x3,C,tail_bound,asymptotic,difference",
        ),
        (
            vec!["solve", "-c", cfg],
            "solve.csv",
            "x1,x2,x3,x4,x5,C,f,H,G,err_est",
        ),
        (
            vec!["oracle", "-c", cfg],
            "oracle.csv",
            "x1,x2,x3,x4,x5,H,error",
        ),
        (
            vec!["validate-asymptotics", "-c", cfg],
            "asymptotics.csv",
            "direction,v1,v2,v3,v4,v5,prefactor,predicted,deviation,exponent_H,exponent_G",
        ),
        (
            vec!["validate-asymptotics", "-c", cfg],
            "prefactors.csv",
            "direction,radius,prefactor,predicted",
        ),
    ] {
        let out = sb.run("h", &args);
        assert_eq!(out.status.code(), Some(0), "{args:?}: {}", stderr(&out));
        assert_eq!(header(&sb.path("h").join(file)), expected, "{args:?}");
    }

    let srbm = sb.write("srbm.toml", SRBM_SMALL);
    let srbm = srbm.to_str().unwrap();
    for (task, file, expected) in [
        ("gamma", "srbm.csv", "radius,gamma_hat,stderr,phi_reference,five_c_phi"),
        ("lambda", "lambda.csv", "n,mean_weight,stderr"),
        ("domination", "domination.csv", "radius,sum_hat,stderr,five_c_phi,pass"),
    ] {
        let out = sb.run(task, &["srbm", "-c", srbm, "--task", task]);
        assert!(matches!(out.status.code(), Some(0 | 2)), "{task}: {}", stderr(&out));
        assert_eq!(header(&sb.path(task).join(file)), expected, "{task}");
    }
}

#[test]
fn validate_asymptotics_fails_with_exit_two_under_impossible_tolerance() {
    let sb = Sandbox::new();
    let cfg = sb.write("p.toml", PERTURBED);
    let ok = sb.run("v", &["validate-asymptotics", "-c", cfg.to_str().unwrap()]);
    assert_eq!(ok.status.code(), Some(0), "{}", stderr(&ok));
    let strict = sb.write(
        "strict.toml",
        &format!("{PERTURBED}\n[tolerances]\namplitude_rel = 1e-300\n"),
    );
    let out = sb.run("v", &["validate-asymptotics", "-c", strict.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn rerun_from_manifest_is_bit_identical() {
    let sb = Sandbox::new();
    let problem = sb.write("p.toml", PERTURBED);
    let srbm = sb.write("s.toml", SRBM_SMALL);
    for (args, file) in [
        (vec!["solve", "-c", problem.to_str().unwrap()], "solve.csv"),
        (vec!["srbm", "-c", srbm.to_str().unwrap(), "--seed", "5"], "srbm.csv"),
        (vec!["walk-c", "--sigma", "1,2,3,4,5", "--point", "1,1,1,1,1"], "walk_c.csv"),
    ] {
        let first = sb.run("first", &args);
        assert_eq!(first.status.code(), Some(0), "{}", stderr(&first));
        let manifest = sb.path("first/manifest.toml");
        let again = sb.run("again", &["rerun", manifest.to_str().unwrap()]);
        assert_eq!(again.status.code(), Some(0), "{}", stderr(&again));
        assert_eq!(
            fs::read(sb.path("first").join(file)).unwrap(),
            fs::read(sb.path("again").join(file)).unwrap(),
            "{args:?}"
        );
        assert_eq!(read(&manifest), read(&sb.path("again/manifest.toml")));
    }
    assert!(read(&sb.path("again/manifest.toml")).contains("command = \"walk-c\""));
}

#[test]
fn seed_flag_is_recorded_and_changes_the_sample() {
    let sb = Sandbox::new();
    let srbm = sb.write("s.toml", SRBM_SMALL);
    let srbm = srbm.to_str().unwrap();
    sb.run("a", &["srbm", "-c", srbm, "--seed", "1"]);
    sb.run("b", &["srbm", "-c", srbm, "--seed", "2"]);
    assert!(read(&sb.path("a/manifest.toml")).contains("seed = 1"));
    assert_ne!(read(&sb.path("a/srbm.csv")), read(&sb.path("b/srbm.csv")));
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let sb = Sandbox::new();
    let srbm = sb.write("s.toml", SRBM_SMALL);
    let run = |out: &str, threads: &str| {
        let status = Command::new(BIN)
            .args(["--out", sb.path(out).to_str().unwrap(), "srbm", "-c", srbm.to_str().unwrap()])
            .env("GAUSSDECONV_THREADS", threads)
            .stdout(std::process::Stdio::null())
            .status()
            .unwrap();
        assert!(status.success());
    };
    run("one", "1");
    run("three", "3");
    assert_eq!(read(&sb.path("one/srbm.csv")), read(&sb.path("three/srbm.csv")));
    assert!(read(&sb.path("three/manifest.toml")).contains("threads = 3"));
}
