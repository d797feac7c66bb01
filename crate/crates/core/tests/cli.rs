use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::Command;

use ppvgroup::cli::run;
use ppvgroup::io::{read_meta, read_waveform};

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(name)
}

fn invoke(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut full = vec!["ppvgroup"];
    full.extend_from_slice(args);
    let code = run(full, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

fn invoke_with(cfg: &Path, out: &Path, cmd: &[&str]) -> (i32, String, String) {
    let mut args = vec![
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(cmd);
    invoke(&args)
}

fn files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .map(|d| {
            d.map(|e| e.unwrap().file_name().into_string().unwrap())
                .collect()
        })
        .unwrap_or_default();
    v.sort();
    v
}

fn meta(path: PathBuf) -> BTreeMap<String, String> {
    read_meta(BufReader::new(fs::File::open(path).unwrap()))
        .unwrap()
        .into_iter()
        .collect()
}

fn with_solver_lines(base: &str, lines: &str) -> String {
    let text = fs::read_to_string(config(base)).unwrap();
    text.replace("[solver]\n", &format!("[solver]\n{lines}\n"))
}

#[test]
fn lock_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout, _) = invoke_with(&config("pair.toml"), dir.path(), &["lock"]);
    assert_eq!(code, 0);
    assert!(stdout.contains("f* = 1.000000000"));
    assert_eq!(files(dir.path()), ["lock.csv", "lock.meta"]);
    let w = read_waveform(fs::File::open(dir.path().join("lock.csv")).unwrap()).unwrap();
    assert_eq!(w.dim(), 2);
    assert!(w.max_abs() < 1e-12);
    let m = meta(dir.path().join("lock.meta"));
    let f: f64 = m["f_star"].parse().unwrap();
    assert!((f - 1.0).abs() < 1e-9);
}

#[test]
fn every_command_succeeds_on_the_pair() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("pair.toml");
    for cmd in [
        &["floquet"][..],
        &["extract"],
        &["simulate", "--which", "full"],
        &["simulate", "--which", "reduced"],
        &["compare"],
        &["demo-blowup"],
    ] {
        let (code, _, err) = invoke_with(&cfg, dir.path(), cmd);
        assert_eq!(code, 0, "{cmd:?}: {err}");
    }
    let expected = [
        "alpha.csv",
        "blowup.csv",
        "blowup.meta",
        "compare.csv",
        "compare_sweep.csv",
        "floquet.csv",
        "floquet.meta",
        "group.meta",
        "group_ppv.csv",
        "traj_full.csv",
        "traj_reduced.csv",
        "u1.csv",
        "v1.csv",
    ];
    assert_eq!(files(dir.path()), expected);

    let q = read_waveform(fs::File::open(dir.path().join("group_ppv.csv")).unwrap()).unwrap();
    assert_eq!(q.dim(), 4);
    let m = meta(dir.path().join("floquet.meta"));
    assert_eq!(m["contraction_ok"], "true");
    let sweep = fs::read_to_string(dir.path().join("compare_sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 4);
    assert!(sweep.starts_with("input_scale,oscillators,"));
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = config("detuned.toml");
    for dir in [a.path(), b.path()] {
        for cmd in [&["floquet"][..], &["extract"], &["compare"]] {
            assert_eq!(invoke_with(&cfg, dir, cmd).0, 0);
        }
    }
    let names = files(a.path());
    assert_eq!(names, files(b.path()));
    for n in names {
        assert_eq!(
            fs::read(a.path().join(&n)).unwrap(),
            fs::read(b.path().join(&n)).unwrap(),
            "{n}"
        );
    }
}

#[test]
fn seed_shift_moves_the_anchor() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, _) = invoke_with(
        &config("detuned.toml"),
        dir.path(),
        &["--seed-shift", "-0.25", "lock"],
    );
    assert_eq!(code, 0);
    let m = meta(dir.path().join("lock.meta"));
    let shift: f64 = m["anchor_shift"].parse().unwrap();
    assert_eq!(shift, -0.25);
}

#[test]
fn bad_arguments_exit_1() {
    assert_eq!(invoke(&["bogus"]).0, 1);
    assert_eq!(invoke(&["lock"]).0, 1);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    assert_eq!(
        invoke_with(&dir.path().join("missing.toml"), &out, &["lock"]).0,
        1
    );
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[[oscillator]]\nkind = \"sinusoidal\"\nfreq = 1.0\n").unwrap();
    assert_eq!(invoke_with(&bad, &out, &["lock"]).0, 1);
    assert_eq!(
        invoke_with(&config("pair.toml"), &out, &["--horizon", "0", "compare"]).0,
        1
    );
    assert!(!out.exists());
    assert_eq!(invoke(&["--help"]).0, 0);
}

#[test]
fn unstable_lock_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let (code, _, err) = invoke_with(&config("unstable.toml"), &out, &["compare"]);
    assert_eq!(code, 2);
    assert!(err.contains("unstable"));
    assert!(!out.exists());
}

#[test]
fn degenerate_floquet_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("uncoupled.toml");
    let text = fs::read_to_string(config("pair.toml"))
        .unwrap()
        .replace("gain = 0.1", "gain = 0.0");
    fs::write(&cfg, text).unwrap();
    let out = dir.path().join("o");
    for cmd in ["floquet", "extract", "compare"] {
        assert_eq!(invoke_with(&cfg, &out, &[cmd]).0, 3, "{cmd}");
    }
    assert!(!out.exists());
}

#[test]
fn exhausted_step_budget_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tight.toml");
    fs::write(&cfg, with_solver_lines("pair.toml", "max_steps = 10")).unwrap();
    let out = dir.path().join("o");
    for cmd in [&["compare"][..], &["simulate", "--which", "reduced"]] {
        let (code, _, err) = invoke_with(&cfg, &out, cmd);
        assert_eq!(code, 4, "{cmd:?}");
        assert!(err.contains("step budget"));
    }
    assert!(!out.exists());
}

#[test]
fn binary_reads_environment() {
    let dir = tempfile::tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_ppvgroup"))
        .arg("lock")
        .env("PPVGROUP_CONFIG", config("pair.toml"))
        .env("PPVGROUP_OUT", dir.path())
        .output()
        .unwrap();
    assert!(status.status.success());
    assert!(dir.path().join("lock.csv").exists());
    let status = Command::new(env!("CARGO_BIN_EXE_ppvgroup"))
        .arg("lock")
        .env("PPVGROUP_CONFIG", config("unstable.toml"))
        .env("PPVGROUP_OUT", dir.path().join("u"))
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2));
}
