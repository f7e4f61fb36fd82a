use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn patchmc(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_patchmc"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

const RUN: &[&str] = &[
    "--gamma",
    "100",
    "--n",
    "8",
    "--beta",
    "6",
    "--seed",
    "1",
    "--max-sim-time",
    "200000",
];

fn synth_and_run(dir: &Path) -> Output {
    let out = patchmc(
        &["synth", "--out", ".", "--seed", "7", "--loops", "15"],
        dir,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let mut args = vec!["pipeline", "--input", "synthetic.csv", "--out", "run"];
    args.extend_from_slice(RUN);
    patchmc(&args, dir)
}

#[test]
fn pipeline_writes_every_artifact_and_resumes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = synth_and_run(tmp.path());
    // every stage ran; the sparse synthetic fleet violates EVWT, hence exit 1
    assert_eq!(
        out.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let run = tmp.path().join("run");
    for f in [
        "traces.csv",
        "heatmap.pgm",
        "blurred.pgm",
        "skeleton.pgm",
        "graph.txt",
        "route.txt",
        "patches.txt",
        "observations.tsv",
        "model.txt",
        "gof.tsv",
        "results.tsv",
    ] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    let model = fs::read_to_string(run.join("model.txt")).unwrap();
    assert_eq!(model.lines().filter(|l| l.starts_with("patch")).count(), 8);

    let before = fs::read(run.join("results.tsv")).unwrap();
    fs::remove_file(run.join("model.txt")).unwrap();
    let mut args = vec!["pipeline", "--out", "run", "--resume-from", "fit"];
    args.extend_from_slice(RUN);
    let again = patchmc(&args, tmp.path());
    assert_eq!(again.status.code(), Some(1));
    assert_eq!(fs::read_to_string(run.join("model.txt")).unwrap(), model);
    assert_eq!(fs::read(run.join("results.tsv")).unwrap(), before);
}

#[test]
fn missing_input_names_the_stage_and_path() {
    let tmp = tempfile::tempdir().unwrap();
    let out = patchmc(&["route", "--out", "empty"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("stage `route`"), "{err}");
    assert!(err.contains("empty/skeleton.pgm"), "{err}");
}

#[test]
fn check_needs_a_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let out = patchmc(&["check", "--preset", "airlink"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));
}

#[test]
fn preset_check_passes_and_config_file_is_read() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("airlink.toml"),
        "preset = \"airlink\"\nseed = 5\nmax_sim_time = 300000.0\nout = \"a\"\n",
    )
    .unwrap();
    let prop = "f() = if { s.rval(\"y_6\") > 900 } then 1 else 0 fi;\nS [ f(), \"c_6\" ] < 0.5;\n";
    fs::write(tmp.path().join("p.quatex"), prop).unwrap();
    let out = patchmc(
        &[
            "check",
            "--config",
            "airlink.toml",
            "--properties",
            "p.quatex",
        ],
        tmp.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let res = fs::read_to_string(tmp.path().join("a/results.tsv")).unwrap();
    assert!(res.lines().nth(1).unwrap().contains("satisfied"), "{res}");
}

#[test]
fn bad_config_key_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("c.toml"), "gama = 3\n").unwrap();
    let out = patchmc(&["patches", "--config", "c.toml"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gama"));
}

#[test]
fn simulate_writes_an_event_log() {
    let tmp = tempfile::tempdir().unwrap();
    let out = patchmc(
        &[
            "simulate",
            "--preset",
            "bellevue",
            "--seed",
            "2",
            "--duration",
            "5000",
            "--out",
            "s",
        ],
        tmp.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let log = fs::read_to_string(tmp.path().join("s/events.tsv")).unwrap();
    assert!(log.starts_with("t\tbus\tkind\tpatch\tlap"));
    assert!(log.lines().count() > 100);
}
