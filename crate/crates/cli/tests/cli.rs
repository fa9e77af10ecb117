use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn recon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_recon"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const STEEL_WIRE: &str = r#"
[input]
kind = "phantom"
phantom = { kind = "wire_in_cylinder", cylinder_value = 0.02, wire_value = 0.1, cylinder_radius = 45.0, wire_radius = 4.0, wire_offset = [12.0, -8.0] }
image = { voxels = [128, 128, 100] }
transmission = 0.7

[input.geometry]
beam = "parallel"
pixels = [160, 135]
angles = { kind = "linspace", start = 0.0, stop = 180.0, count = 91 }

[[stages]]
op = "normalise"
flat = { slice_mean = { vertical = 5 } }

[[stages]]
op = "absorption"

[[stages]]
op = "centre"

[[stages]]
op = "slice"
roi = { horizontal = [20, 140] }

[[stages]]
op = "slice"
roi = { angle = [0, 90, 6] }

[recon]
method = "fbp"

[[outputs]]
kind = "native"
path = "recon.tk"

[[outputs]]
kind = "png"
path = "slice.png"
range = [-0.01, 0.11]
"#;

#[test]
fn steel_wire_sequence_has_expected_sinogram_shape() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "wire.toml", STEEL_WIRE);
    let o = recon(&["run", config.to_str().unwrap(), "--threads", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let last_slice = out.lines().rfind(|l| l.starts_with("slice ")).unwrap();
    assert!(last_slice.ends_with("shape [15, 135, 120]"), "{out}");
    assert!(out.contains("recon (fbp)"));
    let rec = tomokit::io::read_native(dir.path().join("recon.tk")).unwrap();
    // the phantom grid is reused for the reconstruction
    assert_eq!(rec.shape(), &[100, 128, 128]);
    let centre = out.lines().find(|l| l.starts_with("centre: axis")).unwrap();
    let offset: f64 = centre.split_whitespace().nth(2).unwrap().parse().unwrap();
    assert!(offset.abs() < 0.1, "{centre}");
    assert!(dir.path().join("slice.png").exists());
}

const GOLDEN_PDHG: &str = r#"
seed = 5

[input]
kind = "phantom"
phantom = { kind = "shepp_logan2d" }
image = { voxels = [64, 64] }
noise = { kind = "gaussian", sigma = 0.5 }

[input.geometry]
beam = "parallel"
pixels = [96]
angles = { kind = "golden", count = 15 }

[recon]
method = "pdhg"
iterations = 5000
regulariser = "tv"
alpha = 0.02
lower = 0.0
upper = 1.0

[[outputs]]
kind = "csv"
path = "history.csv"

[[outputs]]
kind = "metrics"
"#;

#[test]
fn pdhg_gap_keeps_shrinking() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "golden.toml", GOLDEN_PDHG);
    let o = recon(&["run", config.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("metrics: mse"));
    let csv = std::fs::read_to_string(dir.path().join("history.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("iteration,primal,dual,gap"));
    let gaps: Vec<(usize, f64)> = lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[3].parse().unwrap())
        })
        .collect();
    assert_eq!(gaps.last().unwrap().0, 5000);
    let at = |k: usize| gaps.iter().find(|g| g.0 == k).unwrap().1;
    for &(k, gap) in gaps.iter().filter(|g| g.0 > 500) {
        assert!(gap <= at(k - 100), "gap at {k} is {gap}, at {} it was {}", k - 100, at(k - 100));
    }
}

#[test]
fn unknown_solver_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "golden.toml", GOLDEN_PDHG);
    let o = recon(&["run", config.to_str().unwrap(), "--set", "recon.method=\"spdhg\""]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("spdhg") && err.contains("method"), "{err}");
    assert!(!dir.path().join("history.csv").exists());

    let o = recon(&["run", config.to_str().unwrap(), "--set", "recon.typo=1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = recon(&["run", config.to_str().unwrap(), "--threads", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn runtime_and_io_errors_have_their_own_codes() {
    let dir = tempfile::tempdir().unwrap();
    let no_pair = GOLDEN_PDHG.replace("[recon]", "[[stages]]\nop = \"centre\"\n\n[recon]");
    let config = write_config(dir.path(), "centre.toml", &no_pair);
    let o = recon(&["run", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("stages[0] (centre)"), "{}", stderr(&o));

    let missing = write_config(
        dir.path(),
        "missing.toml",
        "[input]\nkind = \"native\"\npath = \"nowhere.tk\"\n",
    );
    let o = recon(&["run", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    let o = recon(&["run", dir.path().join("absent.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let text = GOLDEN_PDHG
        .replace("iterations = 5000", "iterations = 40")
        .replace("kind = \"csv\"\npath = \"history.csv\"", "kind = \"native\"\npath = \"x.tk\"");
    let config = write_config(dir.path(), "small.toml", &text);
    let run = |threads: &str, seed: &str| {
        let o = recon(&["run", config.to_str().unwrap(), "--threads", threads, "--seed", seed]);
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(dir.path().join("x.tk")).unwrap()
    };
    let first = run("1", "3");
    assert_eq!(first, run("1", "3"));
    assert_eq!(first, run("4", "3"));
    assert_ne!(first, run("1", "4"));
}

const LAMINOGRAPHY: &str = r#"
[input]
kind = "phantom"
phantom = { kind = "shepp_logan3d" }
image = { voxels = [32, 32, 32] }

[input.geometry]
beam = "cone"
pixels = [48, 48]
angles = { kind = "uniform", range = 360.0, count = 60 }
source_position = [0.0, -200.0, 0.0]
detector_position = [0.0, 100.0, 0.0]
tilt = 30.0
"#;

#[test]
fn geometry_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "lamino.toml", LAMINOGRAPHY);
    let o = recon(&["geom", config.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = stdout(&o);
    assert!(report.contains("rotation_axis_direction: [0.0000, -0.5000, 0.8660]"), "{report}");
    assert!(report.contains("beam: cone (3-D)"));
    assert!(report.contains("angles: 60 from 0.0000° to 354.0000°"));
    assert_eq!(o.stdout, recon(&["geom", config.to_str().unwrap()]).stdout);

    let o = recon(&["geom", config.to_str().unwrap(), "--set", "input.geometry.tilt=0.0"]);
    assert!(stdout(&o).contains("rotation_axis_direction: [0.0000, 0.0000, 1.0000]"));
    let parallel = write_config(dir.path(), "wire.toml", STEEL_WIRE);
    let o = recon(&["geom", parallel.to_str().unwrap()]);
    assert!(stdout(&o).contains("rotation_axis_direction: [0.0000, 0.0000, 1.0000]"));
}

#[test]
fn formats_listing() {
    let o = recon(&["formats"]);
    assert!(o.status.success());
    for f in ["native", "tiff", "png", "csv"] {
        assert!(stdout(&o).contains(f));
    }
}
