use std::path::Path;
use std::process::{Command, Output};

fn penfem(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_penfem"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("run penfem")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn spatial_study_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = penfem(&["spatial", "--levels", "1-2", "--out", "res"], dir.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("level"), "{stdout}");
    let csv = std::fs::read_to_string(dir.path().join("res/errors.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "h,k,eps,eL2,eH1,eP,rateL2,rateH1,rateP");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].ends_with(",,,"), "first row has no rates: {}", lines[1]);
    let meta = std::fs::read_to_string(dir.path().join("res/metadata.txt")).unwrap();
    assert!(meta.contains("kind=spatial\n") && meta.contains("completed_runs=2\n"), "{meta}");
    assert!(dir.path().join("res/plot.gp").exists());
}

#[test]
fn config_file_supplies_settings_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.cfg"), "pair = crp0\nlevels = 1-2\nout = from_file\n").unwrap();
    let out = penfem(&["--config", "run.cfg", "spatial", "--out", "from_flag"], dir.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(!dir.path().join("from_file").exists());
    let meta = std::fs::read_to_string(dir.path().join("from_flag/metadata.txt")).unwrap();
    assert!(meta.contains("pair=crp0\n"), "{meta}");
}

#[test]
fn parameter_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["spatial", "--pair", "q9q8", "--levels", "1"][..],
        &["spatial", "--levels", "6"],
        &["spatial", "--levels", "3-1"],
        &["temporal", "--levels", "1-2"],
        &["spatial", "--levels", "1", "--c", "-1"],
    ] {
        let out = penfem(args, dir.path());
        assert_eq!(code(&out), 2, "{args:?}: {}", stderr(&out));
        assert!(stderr(&out).starts_with("error: "), "{args:?}");
    }
}

#[test]
fn unreadable_inputs_exit_with_4() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.cfg"), "pair = p2p1\nspeed = 3\n").unwrap();
    let out = penfem(&["--config", "bad.cfg", "spatial"], dir.path());
    assert_eq!(code(&out), 4);
    assert!(stderr(&out).contains("bad.cfg:2:"), "{}", stderr(&out));

    let out = penfem(&["cavity", "--levels", "1", "--ghia", "missing"], dir.path());
    assert_eq!(code(&out), 4, "{}", stderr(&out));
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = penfem(&["selftest"], dir.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 3, "{stdout}");
}
