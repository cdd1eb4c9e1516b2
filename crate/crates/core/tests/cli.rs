use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use wannier_ladder::config::*;
use wannier_ladder::lattice::BoundaryCondition;
use wannier_ladder::pipeline::ClusterRule;

const BIN: &str = env!("CARGO_BIN_EXE_wannier-ladder");

const MINIMAL: &str = "[model]\nnx = 8\nny = 6\nt = 1\nt_prime = 0.1\nv = 1.0\nphi = \"pi/2\"\n";

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn small(extra_model: &str, rest: &str) -> String {
    format!("[model]\nnx = 8\nny = 8\nt = 1.0\nt_prime = 0.1\nv = 1.0\nphi = \"pi/2\"\n{extra_model}\n{rest}")
}

/// Runs `command` with `cfg_text`, writing to `dir/name`.
fn run_cli(dir: &Path, name: &str, command: &str, cfg_text: &str, extra: &[&str]) -> (Output, PathBuf) {
    let cfg = dir.join(format!("{name}.cfg"));
    fs::write(&cfg, cfg_text).unwrap();
    let out = dir.join(name);
    let output = Command::new(BIN)
        .args([command, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .args(extra)
        .env_remove("WL_THREADS")
        .output()
        .unwrap();
    (output, out)
}

fn stderr_record(o: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&o.stderr);
    serde_json::from_str(text.lines().last().unwrap_or("")).unwrap_or_else(|_| panic!("stderr is not JSON: {text}"))
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

fn column(path: &Path, idx: usize) -> Vec<f64> {
    fs::read_to_string(path).unwrap().lines().skip(1).map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

fn manifests(dir: &Path) -> usize {
    fs::read_dir(dir).unwrap().filter(|e| e.as_ref().unwrap().file_name() == "manifest.json").count()
}

#[test]
fn minimal_config_gets_defaults() {
    let cfg = parse_config(MINIMAL).unwrap();
    assert_eq!((cfg.model.nx, cfg.model.ny), (8, 6));
    assert_eq!(cfg.model.t, 1.0);
    assert_eq!(cfg.model.phi, std::f64::consts::FRAC_PI_2);
    assert_eq!(cfg.model.bc_x, BoundaryCondition::Dirichlet);
    assert_eq!((cfg.model.sigma2, cfg.model.seed), (0.0, 0));
    assert_eq!(cfg.pipeline.gap_threshold, ClusterRule::Threshold(0.25));
    assert_eq!(cfg.pipeline.fermi_level, 0.0);
    assert_eq!(cfg.pipeline.position, PositionChoice::Standard);
    assert!(cfg.pipeline.manual_merges.is_empty());
    assert!(cfg.outputs.emit_vectors);
    assert!(cfg.scan.is_empty());
}

#[test]
fn missing_required_keys() {
    let text = MINIMAL.replace("t = 1\n", "");
    assert_eq!(parse_config(&text), Err(ConfigError::MissingKey("model.t".into())));
    let text = MINIMAL.replace("nx = 8\n", "");
    assert_eq!(parse_config(&text), Err(ConfigError::MissingKey("model.nx".into())));
    assert_eq!(parse_config("[outputs]\ndir = \"x\"\n"), Err(ConfigError::MissingKey("model".into())));
    let text = format!("{MINIMAL}[pipeline]\nposition = \"custom_file\"\n");
    assert_eq!(parse_config(&text), Err(ConfigError::MissingKey("pipeline.position_file".into())));
}

#[test]
fn unknown_keys_are_rejected_with_their_line() {
    let text = format!("{MINIMAL}[pipeline]\nfermi_level = 0.1\ngap_treshold = 0.3\n");
    assert_eq!(parse_config(&text), Err(ConfigError::UnknownKey { key: "pipeline.gap_treshold".into(), line: 10 }));
    let text = format!("{MINIMAL}[plotting]\ncolor = 1\n");
    assert!(matches!(parse_config(&text), Err(ConfigError::UnknownKey { line: 8, .. })));
    let text = format!("{MINIMAL}[scan]\nnx = [1, 2]\n");
    assert!(matches!(parse_config(&text), Err(ConfigError::UnknownKey { line: 9, .. })));
}

#[test]
fn type_errors_carry_line_numbers() {
    let text = MINIMAL.replace("ny = 6", "ny = \"6\"");
    assert!(matches!(parse_config(&text), Err(ConfigError::TypeError { ref key, line: 3, .. }) if key == "model.ny"));
    let text = MINIMAL.replace("v = 1.0", "v = true");
    assert!(matches!(parse_config(&text), Err(ConfigError::TypeError { line: 6, .. })));
    let text = MINIMAL.replace("nx = 8", "nx = 8.5");
    assert!(matches!(parse_config(&text), Err(ConfigError::TypeError { line: 2, .. })));
    let text = format!("{MINIMAL}[outputs]\nemit_vectors = 1\n");
    assert!(matches!(parse_config(&text), Err(ConfigError::TypeError { line: 9, .. })));
}

#[test]
fn invalid_values_and_syntax() {
    let bad = |t: &str| parse_config(t).unwrap_err();
    assert!(matches!(bad(&MINIMAL.replace("nx = 8", "nx = 0")), ConfigError::InvalidValue { .. }));
    assert!(matches!(bad(&MINIMAL.replace("phi = \"pi/2\"", "phi = \"half\"")), ConfigError::InvalidValue { .. }));
    assert!(matches!(bad(&format!("{MINIMAL}bc_x = \"open\"\n")), ConfigError::InvalidValue { .. }));
    assert!(matches!(bad(&format!("{MINIMAL}sigma2 = -1\n")), ConfigError::InvalidValue { .. }));
    assert!(matches!(bad(&format!("{MINIMAL}[pipeline]\ngap_threshold = \"fast\"\n")), ConfigError::InvalidValue { .. }));
    assert!(matches!(bad(&format!("{MINIMAL}[pipeline]\nmanual_merges = [[3, 1]]\n")), ConfigError::InvalidValue { .. }));
    assert!(matches!(bad("[model\nnx = 1\n"), ConfigError::Syntax { line: 1, .. }));
}

#[test]
fn optional_keys_are_read() {
    let text = format!(
        "{MINIMAL}bc_x = \"periodic\"\nsigma2 = 0.25\nseed = 7\n[pipeline]\ngap_threshold = \"auto\"\nmanual_merges = [[21, 23]]\nfermi_level = -0.5\nposition = \"rotated\"\n[outputs]\ndir = \"runs/a\"\nemit_vectors = false\n"
    );
    let cfg = parse_config(&text).unwrap();
    assert_eq!(cfg.model.bc_x, BoundaryCondition::Periodic);
    assert_eq!((cfg.model.sigma2, cfg.model.seed), (0.25, 7));
    assert_eq!(cfg.pipeline.gap_threshold, ClusterRule::Auto);
    assert_eq!(cfg.pipeline.manual_merges, vec![(21, 23)]);
    assert_eq!(cfg.pipeline.fermi_level, -0.5);
    assert_eq!(cfg.pipeline.position, PositionChoice::Rotated);
    assert_eq!(cfg.outputs.dir, PathBuf::from("runs/a"));
    assert!(!cfg.outputs.emit_vectors);
    let cfg = parse_config(&MINIMAL.replace("phi = \"pi/2\"", "phi = 0.25")).unwrap();
    assert_eq!(cfg.model.phi, 0.25);
}

#[test]
fn scan_axes_from_config_and_grid_flag() {
    let text = format!("{MINIMAL}[scan]\nv = [0.0, 1.0]\nphi = [\"pi/2\", 0]\n");
    let mut cfg = parse_config(&text).unwrap();
    assert_eq!(cfg.scan.len(), 2);
    assert_eq!(cfg.scan_points().len(), 4);
    cfg.apply_grid("v=0:2:5,t_prime=0.1;0.2").unwrap();
    assert_eq!(cfg.scan[0].values, vec![0.0, 0.5, 1.0, 1.5, 2.0]);
    assert_eq!(cfg.scan[2].key, ScanKey::TPrime);
    assert_eq!(cfg.scan_points().len(), 20);
    assert_eq!(cfg.scan_points()[0], vec![0.0, std::f64::consts::FRAC_PI_2, 0.1]);
    assert!(matches!(cfg.apply_grid("nx=1:2:2"), Err(ConfigError::InvalidGrid { .. })));
    assert!(matches!(cfg.apply_grid("v=1:2"), Err(ConfigError::InvalidGrid { .. })));
    assert!(matches!(cfg.apply_grid("v"), Err(ConfigError::InvalidGrid { .. })));
}

#[test]
fn shipped_configs_parse() {
    let mut n = 0;
    for entry in fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "cfg") {
            parse_config(&fs::read_to_string(&path).unwrap()).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 3);
    let cfg = parse_config(&fs::read_to_string(configs_dir().join("haldane_dirichlet_trivial.cfg")).unwrap()).unwrap();
    let m = &cfg.model;
    assert_eq!((m.nx, m.ny, m.t, m.t_prime, m.v, m.phi), (24, 24, 1.0, 0.1, 1.0, std::f64::consts::FRAC_PI_2));
    assert_eq!((m.bc_x, m.bc_y), (BoundaryCondition::Dirichlet, BoundaryCondition::Dirichlet));
}

#[test]
fn spectrum_and_pxp_files() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run_cli(dir.path(), "spectrum", "spectrum", &small("", ""), &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(header(&out.join("hamiltonian_spectrum.csv")), "index,eigenvalue");
    let eigs = column(&out.join("hamiltonian_spectrum.csv"), 1);
    assert_eq!(eigs.len(), 128);
    assert!(eigs.windows(2).all(|w| w[0] <= w[1]));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["n_occ"], 64);
    for key in ["h_gap", "n_occ", "uniform_gap", "chern", "residuals"] {
        assert!(summary.get(key).is_some(), "{key}");
    }
    assert_eq!(manifests(&out), 1);

    let (o, out) = run_cli(dir.path(), "pxp", "pxp", &small("", ""), &[]);
    assert!(o.status.success());
    assert_eq!(header(&out.join("pxp_spectrum.csv")), "index,eigenvalue,cluster_id");
    let eigs = column(&out.join("pxp_spectrum.csv"), 1);
    assert_eq!(eigs.len(), 64);
    assert!(eigs.windows(2).all(|w| w[0] <= w[1]));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["uniform_gap"]["passed"], true);
    for key in ["passed", "d", "D", "n_clusters"] {
        assert!(summary["uniform_gap"].get(key).is_some(), "{key}");
    }
}

#[test]
fn gwf_files_follow_the_schema() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run_cli(dir.path(), "gwf", "gwf", &small("", ""), &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(header(&out.join("gwf_centers.csv")), "band_j,m,center_a,center_b,gamma,log_c,r2");
    let rows = fs::read_to_string(out.join("gwf_centers.csv")).unwrap().lines().count() - 1;
    assert_eq!(rows, 64);
    let vector = out.join("gwf_0063.csv");
    assert_eq!(header(&vector), "m,n,re_A,im_A,re_B,im_B");
    let text = fs::read_to_string(&vector).unwrap();
    let body: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(body.len(), 64);
    assert!(body.iter().all(|l| l.split(',').count() == 6));
    assert!(!out.join("gwf_0064.csv").exists());
    let norm: f64 = body
        .iter()
        .map(|l| l.split(',').skip(2).map(|x| x.parse::<f64>().unwrap().powi(2)).sum::<f64>())
        .sum();
    assert!((norm - 1.0).abs() < 1e-12);
    assert_eq!(manifests(&out), 1);

    // Rerunning without vectors removes the stale files.
    let (o, out) = run_cli(dir.path(), "gwf", "gwf", &small("", "[outputs]\nemit_vectors = false\n"), &[]);
    assert!(o.status.success());
    assert!(out.join("gwf_centers.csv").exists());
    assert!(!out.join("gwf_0000.csv").exists());
}

#[test]
fn csv_payloads_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small("sigma2 = 0.25\nseed = 3", "");
    let read_all = |out: &Path| {
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(out)
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.extension().is_some_and(|e| e == "csv"))
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
            .collect();
        files.sort();
        files
    };
    let (o, out) = run_cli(dir.path(), "gwf", "gwf", &cfg, &[]);
    assert!(o.status.success());
    let first = read_all(&out);
    let (o, again) = run_cli(dir.path(), "again", "gwf", &cfg, &[]);
    assert!(o.status.success());
    assert_eq!(read_all(&again), first);
    // Every float carries 17 significant digits.
    let line = String::from_utf8(first.iter().find(|f| f.0 == "pxp_spectrum.csv").unwrap().1.clone()).unwrap();
    let value = line.lines().nth(1).unwrap().split(',').nth(1).unwrap();
    assert_eq!(value.split('e').next().unwrap().trim_start_matches('-').replace('.', "").len(), 17);
}

#[test]
fn topological_gwf_exits_3_unless_forced() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[model]\nnx = 8\nny = 8\nt = 1\nt_prime = 0.25\nv = 0\nphi = \"pi/2\"\nbc_x = \"periodic\"\nbc_y = \"periodic\"\n[pipeline]\ngap_threshold = 0.3\n";
    let (o, out) = run_cli(dir.path(), "gwf", "gwf", cfg, &[]);
    assert_eq!(o.status.code(), Some(3));
    let rec = stderr_record(&o);
    assert_eq!(rec["error"], "UniformGapFailed");
    assert_eq!(rec["exit_code"], 3);
    assert_eq!(manifests(&out), 1);
    let (o, out) = run_cli(dir.path(), "gwf", "gwf", cfg, &["--force"]);
    assert!(o.status.success());
    assert_eq!(fs::read_to_string(out.join("gwf_centers.csv")).unwrap().lines().count(), 65);
    let (o, out) = run_cli(dir.path(), "pxp", "pxp", cfg, &[]);
    assert!(o.status.success());
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["uniform_gap"]["passed"], false);
}

#[test]
fn chern_windings_of_trivial_and_topological_configs() {
    let dir = tempfile::tempdir().unwrap();
    let periodic = "bc_x = \"periodic\"\nbc_y = \"periodic\"";
    let trivial = small(periodic, "");
    let topo = small(periodic, "").replace("t_prime = 0.1\nv = 1.0", "t_prime = 0.3\nv = 0.0");
    let mut windings = Vec::new();
    for (name, cfg) in [("a", trivial), ("b", topo)] {
        let (o, out) = run_cli(dir.path(), name, "chern", &cfg, &[]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(header(&out.join("charge_centers.csv")), "k2,band,phase_continued");
        let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
        windings.push(summary["chern"].as_i64().unwrap());
        assert_eq!(summary["mending"]["obstructed"], summary["chern"] != 0);
    }
    assert_eq!(windings[0], 0);
    assert_eq!(windings[1].abs(), 1);
    // Open x2 boundaries have no k2.
    let (o, _) = run_cli(dir.path(), "chern", "chern", &small("", ""), &[]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(stderr_record(&o)["error"], "NonPeriodicInput");
}

#[test]
fn config_and_io_errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (o, _) = run_cli(dir.path(), "spectrum", "spectrum", &MINIMAL.replace("t = 1\n", ""), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_record(&o)["error"], "MissingKey");
    let (o, _) = run_cli(dir.path(), "spectrum", "spectrum", &MINIMAL.replace("ny = 6", "ny = \"6\""), &[]);
    assert_eq!(o.status.code(), Some(2));
    let rec = stderr_record(&o);
    assert_eq!((rec["error"].as_str(), rec["line"].as_u64()), (Some("TypeError"), Some(3)));
    let o = Command::new(BIN).args(["spectrum", "--config", dir.path().join("absent.cfg").to_str().unwrap()]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr_record(&o)["error"], "Io");
    let o = Command::new(BIN)
        .args(["spectrum", "--config", "x.cfg"])
        .env("WL_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    let (o, _) = run_cli(dir.path(), "scan", "scan", &small("", ""), &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn scan_emits_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small("bc_x = \"periodic\"\nbc_y = \"periodic\"", "");
    let cfg_path = dir.path().join("scan.cfg");
    fs::write(&cfg_path, &cfg).unwrap();
    let out = dir.path().join("scan");
    let o = Command::new(BIN)
        .args(["scan", "--config", cfg_path.to_str().unwrap(), "--out", out.to_str().unwrap(), "--grid", "v=0.5;2.0,t_prime=0;0.3"])
        .env("WL_THREADS", "2")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("scan.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "point,v,t_prime,h_gap,n_occ,uniform_gap_passed,n_clusters,winding,status");
    assert_eq!(lines.len(), 5);
    let winding = |l: &str| l.split(',').nth(7).unwrap().parse::<i64>().unwrap();
    // (0.5, 0): trivial. (0.5, 0.3): deep in the Chern phase. (2, 0) and (2, 0.3): trivial.
    assert_eq!(winding(lines[1]), 0);
    assert_eq!(winding(lines[2]).abs(), 1);
    assert_eq!(winding(lines[3]), 0);
    assert_eq!(winding(lines[4]), 0);
    assert_eq!(manifests(&out), 1);
    assert!(!out.join("summary.json").exists());
}

#[test]
fn custom_position_file() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("m,n,x,y\n");
    for n in 0..8 {
        for m in 0..8 {
            csv.push_str(&format!("{m},{n},{},{}\n", 2.0 * m as f64 + 1.0, n));
        }
    }
    fs::write(dir.path().join("pos.csv"), &csv).unwrap();
    let cfg = small("", "[pipeline]\nposition = \"custom_file\"\nposition_file = \"pos.csv\"\ngap_threshold = 0.5\n");
    let (o, out) = run_cli(dir.path(), "pxp", "pxp", &cfg, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let eigs = column(&out.join("pxp_spectrum.csv"), 1);
    // An affine map of X maps the projected spectrum the same way.
    let (o, std_out) = run_cli(dir.path(), "std", "pxp", &small("", ""), &[]);
    assert!(o.status.success());
    let std_eigs = column(&std_out.join("pxp_spectrum.csv"), 1);
    for (a, b) in eigs.iter().zip(&std_eigs) {
        assert!((a - (2.0 * b + 1.0)).abs() < 1e-9);
    }
    fs::write(dir.path().join("pos.csv"), csv.lines().take(10).collect::<Vec<_>>().join("\n")).unwrap();
    let (o, _) = run_cli(dir.path(), "pxp", "pxp", &cfg, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_record(&o)["error"], "InvalidInputFile");
}
