use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL_GRID: &str = "p=0:0.02:0.002,q=0.7:1:0.05,pi=0:0.03:0.001";

fn serocs(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_serocs"))
        .args(args)
        .current_dir(dir)
        .env_clear()
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn datasets_list_and_validate() {
    let dir = tempfile::tempdir().unwrap();
    let out = serocs(&["datasets", "list"], dir.path());
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("santa-clara\tdesign=(401, 197, 3330)\tobserved=(2, 178, 50)"));

    let file = dir.path().join("d.toml");
    fs::write(&file, "label = \"x\"\nn_cal_neg = 401\ns_cal_neg = 500\nn_cal_pos = 197\ns_cal_pos = 178\nn_main = 3330\ns_main = 50\n").unwrap();
    let out = serocs(&["datasets", "validate", "d.toml"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("s_cal_neg"));
}

#[test]
fn scan_is_deterministic_and_projectable() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["--quiet", "scan", "--dataset", "santa-clara", "--grid", SMALL_GRID];
    let a = serocs(&[&base[..], &["--out", "a.csv", "--workers", "1"]].concat(), dir.path());
    let b = serocs(&[&base[..], &["--out", "b.csv", "--workers", "2"]].concat(), dir.path());
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert!(b.status.success());
    let fa = fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(fa, fs::read(dir.path().join("b.csv")).unwrap());
    assert!(dir.path().join("a.csv.meta.json").exists());
    let text = stdout(&a);
    assert!(text.contains("alt pi: ["));
    assert!(text.contains("basic pi: ["));

    let first = String::from_utf8(fa).unwrap();
    assert!(first.contains("p,q,k,pi,evidence_basic,evidence_alt,in_basic,in_alt,mass_deficit"));

    let proj = serocs(
        &[
            "project",
            "a.csv",
            "--axis",
            "pi",
            "--method",
            "alt",
            "--condition",
            "p=0.004",
        ],
        dir.path(),
    );
    assert!(proj.status.success(), "{}", String::from_utf8_lossy(&proj.stderr));
    assert!(stdout(&proj).starts_with("alt pi: "));

    let json = serocs(&[&base[..], &["--out", "a.json"]].concat(), dir.path());
    assert!(json.status.success());
    let proj_json = serocs(&["project", "a.json", "--condition", "p=0.004"], dir.path());
    assert_eq!(stdout(&proj_json), stdout(&proj));
}

#[test]
fn project_rejects_missing_and_corrupt_files() {
    let dir = tempfile::tempdir().unwrap();
    assert!(!serocs(&["project", "nope.csv"], dir.path()).status.success());
    fs::write(dir.path().join("bad.csv"), "garbage\n1,2,3\n").unwrap();
    assert!(!serocs(&["project", "bad.csv"], dir.path()).status.success());
}

#[test]
fn bad_inputs_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = serocs(&["scan", "--dataset", "atlantis"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("santa-clara"));
    assert!(
        !serocs(&["scan", "--dataset", "santa-clara", "--grid", "p=1:0:0.1"], dir.path())
            .status
            .success()
    );
    assert!(
        !serocs(&["scan", "--dataset", "santa-clara", "--alpha", "1.5"], dir.path())
            .status
            .success()
    );
    assert_eq!(serocs(&["scan", "--bogus"], dir.path()).status.code(), Some(2));
}

#[test]
fn environment_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_serocs"))
        .args(["--quiet", "scan", "--out", "env.csv"])
        .current_dir(dir.path())
        .env_clear()
        .env("SEROCS_DATASET", "la-county")
        .env("SEROCS_GRID", SMALL_GRID)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("dataset: la-county"));
}

#[test]
fn combine_requires_matching_calibration() {
    let dir = tempfile::tempdir().unwrap();
    let out = serocs(
        &[
            "--quiet",
            "scan",
            "--combine",
            "santa-clara+la-county",
            "--shared-calibration",
            "--grid",
            SMALL_GRID,
            "--out",
            "c.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    assert!(stdout(&out).contains("dataset: santa-clara+la-county"));
    let text = fs::read_to_string(dir.path().join("c.csv")).unwrap();
    assert!(text.contains("# design=401,197,4176"));
    assert!(text.contains("# observed=2,178,85"));
}

#[test]
fn mcmc_writes_post_burn_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = serocs(
        &[
            "mcmc",
            "--dataset",
            "santa-clara",
            "--iters",
            "5000",
            "--burn",
            "0.2",
            "--out",
            "chain.csv",
            "--trace-out",
            "trace.csv",
            "--grid",
            SMALL_GRID,
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let chain = fs::read_to_string(dir.path().join("chain.csv")).unwrap();
    assert_eq!(chain.lines().count(), 4001);
    assert!(chain.starts_with("iter,psi0,psi1,psi2,loglik,accepted\n1000,"));
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 5001);
    assert!(stdout(&out).contains("credible pi: ["));
}

#[test]
fn lrt_reads_points() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("pts.csv"), "p,q,pi\n0.005,0.9,0.012\n0.03,0.65,0.0\n").unwrap();
    let out = serocs(
        &[
            "lrt",
            "--dataset",
            "santa-clara",
            "--points",
            "pts.csv",
            "-r",
            "20",
            "--lrt-tail",
            "conventional",
            "--starts",
            "3",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "p,q,k,pi,t_obs,pvalue,reject");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0.005,0.9,40,"));
    assert!(lines[2].ends_with(",true"));
}

#[test]
fn coverage_and_bench_print_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let out = serocs(
        &[
            "coverage",
            "--theta",
            "0.01,0.85,0.01",
            "--reps",
            "40",
            "--dataset-design",
            "santa-clara",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("theta: p=0.01 q=0.85 k=33"));
    assert!(text.contains("coverage alt: "));
    let out = serocs(&["bench", "--dataset", "santa-clara", "--points", "3"], dir.path());
    assert!(out.status.success());
    assert!(stdout(&out).contains("per-theta seconds mean: "));
}
