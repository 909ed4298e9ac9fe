//! End-to-end checks of the command-line interface: exit codes, file
//! round trips, and the documented CSV headers.

use std::path::Path;
use std::process::{Command, Output};

fn rvelab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rvelab"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn gen_is_deterministic_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["gen", "--seed", "7", "--n", "60", "--vf", "0.5", "-o", "a.json"];
    let out = rvelab(&args, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let args2 = ["gen", "--seed", "7", "--n", "60", "--vf", "0.5", "-o", "b.json"];
    assert!(rvelab(&args2, dir.path()).status.success());
    assert_eq!(
        std::fs::read(dir.path().join("a.json")).unwrap(),
        std::fs::read(dir.path().join("b.json")).unwrap(),
        "same seed must produce identical files"
    );
    let other = ["gen", "--seed", "8", "--n", "60", "--vf", "0.5", "-o", "c.json"];
    assert!(rvelab(&other, dir.path()).status.success());
    assert_ne!(
        std::fs::read(dir.path().join("a.json")).unwrap(),
        std::fs::read(dir.path().join("c.json")).unwrap()
    );
}

#[test]
fn stats_writes_requested_descriptor_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let gen = ["gen", "--seed", "3", "--n", "80", "--vf", "0.45", "-o", "ms.json"];
    assert!(rvelab(&gen, dir.path()).status.success());
    let stats = [
        "stats", "--in", "ms.json", "--descriptors", "nn,ripley", "--stem", "s",
    ];
    let out = rvelab(&stats, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let nn = read(&dir.path().join("s_nn.csv"));
    assert!(nn.starts_with("bin_left,bin_right,density\n"), "nn header: {nn:.60}");
    let ripley = read(&dir.path().join("s_ripley.csv"));
    assert!(ripley.starts_with("h,k,k_poisson\n"), "ripley header: {ripley:.60}");
    assert!(!dir.path().join("s_pair.csv").exists(), "only requested descriptors");
    let manifest = read(&dir.path().join("s.manifest.json"));
    assert!(manifest.contains("\"command\": \"stats\""));
}

#[test]
fn homog_writes_documented_results_columns() {
    let dir = tempfile::tempdir().unwrap();
    let gen = ["gen", "--seed", "5", "--n", "40", "--vf", "0.4", "-o", "ms.json"];
    assert!(rvelab(&gen, dir.path()).status.success());
    let homog = [
        "homog", "--in", "ms.json", "--phases", "glass_epoxy", "--nx", "64", "-o",
        "results.csv",
    ];
    let out = rvelab(&homog, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(&dir.path().join("results.csv"));
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "name,bc_mode,nx,e_x,e_y,e_z,g_xy,nu_xy,nu_yx,nu_xz,iterations,residual"
    );
    let row = lines.next().unwrap();
    assert!(row.starts_with("ms,periodic,64,"), "row: {row}");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("E_x ="), "stdout: {stdout}");
}

#[test]
fn validate_accepts_generated_structures() {
    let dir = tempfile::tempdir().unwrap();
    let gen = ["gen", "--seed", "11", "--n", "50", "--vf", "0.5", "-o", "ms.json"];
    assert!(rvelab(&gen, dir.path()).status.success());
    let out = rvelab(&["validate", "--in", "ms.json"], dir.path());
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("ok"));
}

#[test]
fn lattice_builds_depleted_hexagonal() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "lattice", "--vf", "0.9", "--cells", "6", "--deplete", "third", "-o", "hex.json",
    ];
    let out = rvelab(&args, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = rvelab(&["validate", "--in", "hex.json"], dir.path());
    assert!(out.status.success());
    // 2/3 of the sites at base vf 0.9 -> vf 0.6.
    assert!(String::from_utf8_lossy(&out.stdout).contains("V_f = 0.6000"));
}

#[test]
fn usage_errors_exit_2_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let out = rvelab(&["gen", "--no-such-flag"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
    let out = rvelab(&["not-a-command"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = rvelab(&["--help"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"));
}

#[test]
fn domain_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    // Volume fraction beyond the gap-adjusted packing limit.
    let out = rvelab(&["gen", "--vf", "0.93", "-o", "x.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
    // Missing input file.
    let out = rvelab(&["stats", "--in", "missing.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    // Homogenization without phases.
    let dir2 = tempfile::tempdir().unwrap();
    let gen = ["gen", "--seed", "1", "--n", "30", "--vf", "0.4", "-o", "ms.json"];
    assert!(rvelab(&gen, dir2.path()).status.success());
    let out = rvelab(&["homog", "--in", "ms.json", "-o", "r.csv"], dir2.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("phases"));
}

#[test]
fn config_file_drives_gen_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.toml"),
        "[srm]\nn_fibers = 45\ntarget_vf = 0.5\nswelling_rate = 0.02\n\
         migration_intensity = 0.3\nmin_gap = 0.01\nmax_steps = 50000\nseed = 9\n",
    )
    .unwrap();
    let args = ["gen", "--config", "run.toml", "-o", "a.json"];
    assert!(rvelab(&args, dir.path()).status.success());
    let text = read(&dir.path().join("a.json"));
    assert!(text.contains("\"n_fibers\": 45"), "config n_fibers used");
    assert!(text.contains("\"seed\": 9"));
    // Flag wins over the config value.
    let args = ["gen", "--config", "run.toml", "--seed", "12", "-o", "b.json"];
    assert!(rvelab(&args, dir.path()).status.success());
    assert!(read(&dir.path().join("b.json")).contains("\"seed\": 12"));
    // Unknown config keys are a parse (domain) error.
    std::fs::write(dir.path().join("bad.toml"), "[srm]\nn_fiber = 3\n").unwrap();
    let out = rvelab(&["gen", "--config", "bad.toml", "-o", "c.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn corrupt_schema_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let gen = ["gen", "--seed", "2", "--n", "30", "--vf", "0.4", "-o", "ms.json"];
    assert!(rvelab(&gen, dir.path()).status.success());
    let doctored = read(&dir.path().join("ms.json")).replace(
        "\"schema_version\": 1",
        "\"schema_version\": 99",
    );
    std::fs::write(dir.path().join("ms.json"), doctored).unwrap();
    let out = rvelab(&["validate", "--in", "ms.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema"));
}
