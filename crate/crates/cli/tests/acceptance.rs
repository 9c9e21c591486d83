//! CLI acceptance: byte-identical outputs under a fixed seed, the exit-code
//! contract, and the configuration file precedence rules.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rpca-synth"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn assert_code(out: &Output, want: i32, what: &str) {
    let got = out.status.code().expect("no signal");
    assert_eq!(
        got,
        want,
        "{what}: exit {got}, want {want}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Two donor groups around distinct levels; the treated unit is an exact
/// mixture of two donors, so the weight support has at least two entries.
fn write_panel(dir: &Path) -> PathBuf {
    let mut text = String::from("unit");
    let n_times = 14;
    for t in 0..n_times {
        text.push_str(&format!(",{t}"));
    }
    text.push('\n');
    for u in 0..9 {
        text.push_str(&format!("u{u}"));
        for t in 0..n_times {
            let x = 0.7 * t as f64;
            let v = match u {
                0 => 1.0 + 0.1 * x.sin() + 0.1 * x.cos(),
                1 => 0.7 + 0.2 * x.sin(),
                2 => 1.3 + 0.2 * x.cos(),
                3 => 0.9 + 0.2 * (x + 2.0).sin(),
                4 => 1.1 + 0.2 * (x + 3.0).cos(),
                _ => 10.0 + 0.1 * (x + u as f64).cos(),
            };
            text.push_str(&format!(",{v}"));
        }
        text.push('\n');
    }
    let path = dir.join("panel.csv");
    fs::write(&path, text).unwrap();
    path
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap_or_else(|e| panic!("reading {name}: {e}"))
}

/// Repeating any invocation with the same seed yields byte-identical CSV
/// files, including across different worker counts.
#[test]
fn same_seed_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let panel = write_panel(tmp.path());
    let panel = panel.to_str().unwrap();

    let base = [
        "--input", panel, "--treated", "u0", "--t0", "9",
        "--k-min", "2", "--k-max", "2", "--restarts", "5", "--seed", "3",
    ];
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    for (cmd, extra) in [
        ("fit", vec![]),
        ("placebo-time", vec!["--fake-t0", "6"]),
        ("placebo-space", vec!["--jobs", "1"]),
        ("placebo-space", vec!["--jobs", "4"]),
        ("loo", vec![]),
    ] {
        let mut args_a: Vec<&str> = vec![cmd];
        args_a.extend_from_slice(&base);
        args_a.extend_from_slice(&extra);
        let mut args_b = args_a.clone();
        args_a.extend_from_slice(&["--out", out_a.to_str().unwrap()]);
        args_b.extend_from_slice(&["--out", out_b.to_str().unwrap()]);
        assert_code(&run(&args_a), 0, cmd);
        assert_code(&run(&args_b), 0, cmd);
        let mut names: Vec<String> = fs::read_dir(&out_a)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .filter(|n| n.ends_with(".csv"))
            .collect();
        names.sort();
        assert!(!names.is_empty(), "{cmd} wrote no CSV files");
        for name in names {
            assert_eq!(
                read(&out_a, &name),
                read(&out_b, &name),
                "{cmd}: {name} differs between identical runs"
            );
        }
    }

    // The study command has its own generator path; check it separately.
    let sim = [
        "simulate", "--n1", "8", "--n2", "8", "--t-max", "30", "--t0", "20",
        "--sigma2", "1", "--seed", "9",
    ];
    let sim_a = tmp.path().join("sa");
    let sim_b = tmp.path().join("sb");
    let mut args_a: Vec<&str> = sim.to_vec();
    let mut args_b = args_a.clone();
    args_a.extend_from_slice(&["--out", sim_a.to_str().unwrap()]);
    args_b.extend_from_slice(&["--out", sim_b.to_str().unwrap()]);
    assert_code(&run(&args_a), 0, "simulate");
    assert_code(&run(&args_b), 0, "simulate");
    assert_eq!(
        read(&sim_a, "study.csv"),
        read(&sim_b, "study.csv"),
        "study.csv differs between identical runs"
    );

    println!("[PASS] repeated invocations with one seed write byte-identical CSV outputs");
}

/// 0 on success and help, 64 on usage mistakes, 1 on invalid data, 2 stays
/// reserved for numerical failures.
#[test]
fn exit_codes_follow_the_contract() {
    let tmp = tempfile::tempdir().unwrap();
    let panel = write_panel(tmp.path());
    let panel = panel.to_str().unwrap();
    let out = tmp.path().join("out");
    let out = out.to_str().unwrap();

    assert_code(&run(&["--help"]), 0, "help");
    assert_code(&run(&["--version"]), 0, "version");
    assert_code(&run(&["fit", "--help"]), 0, "subcommand help");

    assert_code(&run(&["frobnicate"]), 64, "unknown subcommand");
    assert_code(
        &run(&["fit", "--input", panel, "--bogus"]),
        64,
        "unknown flag",
    );
    assert_code(
        &run(&["fit", "--input", panel, "--t0", "9", "--out", out]),
        64,
        "missing --treated",
    );
    assert_code(
        &run(&["fit", "--treated", "u0", "--t0", "9", "--out", out]),
        64,
        "missing --input",
    );

    assert_code(
        &run(&["fit", "--input", "/no/such/file.csv", "--treated", "u0", "--t0", "9", "--out", out]),
        1,
        "missing input file",
    );
    assert_code(
        &run(&["fit", "--input", panel, "--treated", "nobody", "--t0", "9", "--out", out]),
        1,
        "unknown treated label",
    );
    assert_code(
        &run(&["fit", "--input", panel, "--treated", "u0", "--t0", "99", "--out", out]),
        1,
        "unknown time label",
    );

    println!("[PASS] exit codes: 0 ok, 64 usage, 1 validation");
}

/// Values come from the configuration file unless the same key is given on
/// the command line; unknown keys in the file are rejected.
#[test]
fn config_file_merges_under_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let panel = write_panel(tmp.path());
    let panel = panel.to_str().unwrap();
    let conf = tmp.path().join("run.conf");
    fs::write(
        &conf,
        "# study settings\ntreated = u0\nt0 = 9\nk_min = 2\nk-max = 2\nrestarts = 5\nseed = 3\n",
    )
    .unwrap();
    let conf = conf.to_str().unwrap();

    let out_file = tmp.path().join("file");
    let st = run(&[
        "fit", "--input", panel, "--config", conf,
        "--out", out_file.to_str().unwrap(),
    ]);
    assert_code(&st, 0, "config-driven run");
    let summary = fs::read_to_string(out_file.join("summary.json")).unwrap();
    assert!(summary.contains("\"treated\": \"u0\""), "summary: {summary}");

    // A flag overrides the file value for the same key.
    let out_flag = tmp.path().join("flag");
    let st = run(&[
        "fit", "--input", panel, "--config", conf, "--treated", "u3",
        "--out", out_flag.to_str().unwrap(),
    ]);
    assert_code(&st, 0, "flag override");
    let summary = fs::read_to_string(out_flag.join("summary.json")).unwrap();
    assert!(summary.contains("\"treated\": \"u3\""), "summary: {summary}");

    // Unknown keys are validation errors, not silent noise.
    fs::write(tmp.path().join("bad.conf"), "treated = u0\nt0 = 9\nbanwidth = 3\n").unwrap();
    let st = run(&[
        "fit", "--input", panel,
        "--config", tmp.path().join("bad.conf").to_str().unwrap(),
        "--out", out_file.to_str().unwrap(),
    ]);
    assert_code(&st, 1, "unknown config key");

    println!("[PASS] flags override the configuration file; unknown keys are rejected");
}

/// The CSV files named in the summary exist and carry the documented headers.
#[test]
fn outputs_have_documented_headers() {
    let tmp = tempfile::tempdir().unwrap();
    let panel = write_panel(tmp.path());
    let panel = panel.to_str().unwrap();
    let out = tmp.path().join("out");
    let st = run(&[
        "fit", "--input", panel, "--treated", "u0", "--t0", "9",
        "--k-min", "2", "--k-max", "2", "--restarts", "5",
        "--out", out.to_str().unwrap(),
    ]);
    assert_code(&st, 0, "fit");

    let header = |name: &str| {
        let text = fs::read_to_string(out.join(name)).unwrap();
        text.lines().next().unwrap_or("").to_string()
    };
    assert_eq!(header("series.csv"), "time,actual,counterfactual,gap");
    assert_eq!(header("scree.csv"), "component,eigenvalue,share,cumulative");
    assert_eq!(header("tune.csv"), "k,wss,silhouette");
    assert_eq!(header("weights.csv"), "donor,weight");
    assert!(header("scores.csv").starts_with("unit,score_1"));

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["command"], "fit");
    assert!(summary["pipeline"]["pre_rmspe"].is_number());

    println!("[PASS] output files carry the documented headers and a parseable summary");
}
