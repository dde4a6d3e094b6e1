use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ghostpixel_cli::imageio::{decode_pgm, read_image};
use tempfile::TempDir;

fn ghostpixel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ghostpixel"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = ghostpixel(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    ghostpixel(args).status.code().unwrap()
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn basis_entries(text: &str) -> Vec<usize> {
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("HAD k="));
    lines
        .next()
        .unwrap()
        .split(',')
        .map(|t| t.parse().unwrap())
        .collect()
}

fn records(series: &str) -> Vec<Vec<String>> {
    series
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

fn summary_rows(summary: &str) -> Vec<Vec<String>> {
    summary
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("axis_value"))
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

fn cnr_of(rows: &[Vec<String>], value: &str, method: &str) -> f64 {
    rows.iter()
        .find(|r| r[0] == value && r[1] == method)
        .unwrap_or_else(|| panic!("no row {value},{method}"))[4]
        .parse()
        .unwrap()
}

fn relative_error(a: &ndarray::Array2<f64>, b: &ndarray::Array2<f64>) -> f64 {
    (a - b).mapv(|v| v * v).sum().sqrt() / b.mapv(|v| v * v).sum().sqrt()
}

#[test]
fn basis_export_sizes() {
    let full = basis_entries(&ok(&["basis", "--k", "5", "--ordering", "sequency", "--rate", "1.0"]));
    assert_eq!(full.len(), 1024);
    let mut sorted = full.clone();
    sorted.sort_unstable();
    assert_eq!(sorted, (0..1024).collect::<Vec<_>>());

    let part = basis_entries(&ok(&["basis", "--k", "6", "--rate", "0.1875"]));
    assert_eq!(part.len(), 768);
    assert_eq!(part[0], 0);
}

#[test]
fn basis_rate_out_of_range_is_usage_error() {
    assert_eq!(code(&["basis", "--k", "5", "--rate", "1.5"]), 2);
    assert_eq!(code(&["basis", "--k", "5", "--rate", "0"]), 2);
    assert_eq!(code(&["basis", "--k", "9"]), 2);
    assert_eq!(code(&["basis", "--bogus", "1"]), 2);
    assert_eq!(code(&["frobnicate"]), 2);
    assert_eq!(code(&[]), 2);
}

#[test]
fn basis_writes_pattern_images() {
    let dir = TempDir::new().unwrap();
    let pats = path(&dir, "pats");
    ok(&["basis", "--k", "2", "--rate", "0.5", "--basis.patterns_dir", s(&pats)]);
    let mut names: Vec<_> = std::fs::read_dir(&pats)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names.len(), 8);
    let img = decode_pgm(&std::fs::read(pats.join(&names[0])).unwrap()).unwrap();
    assert_eq!(img.dim(), (4, 4));
    assert!(img.iter().all(|&v| v == 1.0));
}

#[test]
fn simulate_differential_records() {
    let text = ok(&["simulate", "--k", "5", "--acquisition.differential", "true"]);
    let recs = records(&text);
    assert_eq!(recs.len(), 1024);
    for r in &recs {
        assert_eq!(r.len(), 3);
        let plus: f64 = r[1].parse().unwrap();
        let minus: f64 = r[2].parse().unwrap();
        assert!(plus.is_finite() && minus.is_finite());
    }
}

#[test]
fn simulate_speckle_records() {
    let text = ok(&[
        "simulate",
        "--k",
        "5",
        "--acquisition.mode",
        "speckle",
        "--acquisition.patterns",
        "5000",
    ]);
    let recs = records(&text);
    assert_eq!(recs.len(), 5000);
    assert!(recs.iter().all(|r| r.len() == 2));
}

#[test]
fn simulate_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let cfg = path(&dir, "run.cfg");
    std::fs::write(
        &cfg,
        "# noisy run\nbasis.k = 5\nbasis.rate = 0.5\nmask.modulation_depth = 0.75\n\
         mask.jitter_sigma = 0.5\nnoise.photon_scale = 1e4\nnoise.read_noise_sigma = 2\nseed = 17\n",
    )
    .unwrap();
    let (a, b) = (path(&dir, "a.series"), path(&dir, "b.series"));
    ok(&["simulate", "--config", s(&cfg), "--out", s(&a)]);
    ok(&["simulate", "--config", s(&cfg), "--out", s(&b)]);
    let (a, b) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    assert_eq!(a, b);
    assert_eq!(records(std::str::from_utf8(&a).unwrap()).len(), 512);

    // Flags override the file.
    let other = ok(&["simulate", "--config", s(&cfg), "--seed", "18"]);
    assert_ne!(other.as_bytes(), &a[..]);
}

#[test]
fn reconstruct_dgi_full_series() {
    let dir = TempDir::new().unwrap();
    let (series, image, reference) = (
        path(&dir, "full.series"),
        path(&dir, "dgi.txt"),
        path(&dir, "ref.txt"),
    );
    ok(&["phantom", "--k", "5", "--kind", "letters", "--out", s(&reference)]);
    ok(&["simulate", "--k", "5", "--out", s(&series)]);
    ok(&["reconstruct", "--series", s(&series), "--method", "dgi", "--out", s(&image)]);
    let scores = ok(&["evaluate", "--image", s(&image), "--reference", s(&reference)]);
    let ncorr: f64 = scores
        .lines()
        .find_map(|l| l.strip_prefix("ncorr="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(ncorr > 0.999, "ncorr {ncorr}");
    let diag = std::fs::read_to_string(path(&dir, "dgi.txt.diag")).unwrap();
    assert!(diag.contains("method=dgi"));
}

#[test]
fn reconstruct_tv_compressed() {
    let dir = TempDir::new().unwrap();
    let (series, image, reference) = (
        path(&dir, "part.series"),
        path(&dir, "tv.txt"),
        path(&dir, "ref.txt"),
    );
    let common = ["--k", "6", "--kind", "semicylinder_gap"];
    let mut args = vec!["phantom", "--out", s(&reference)];
    args.extend(common);
    ok(&args);
    let mut args = vec!["simulate", "--rate", "0.1875", "--out", s(&series)];
    args.extend(common);
    ok(&args);
    ok(&["reconstruct", "--series", s(&series), "--method", "tv", "--out", s(&image)]);
    let err = relative_error(&read_image(&image).unwrap(), &read_image(&reference).unwrap());
    assert!(err < 0.05, "relative error {err}");

    // PGM output is normalized to the full 16-bit range.
    let pgm = path(&dir, "tv.pgm");
    ok(&["reconstruct", "--series", s(&series), "--method", "tv", "--tv.max_iters", "20", "--out", s(&pgm)]);
    let bytes = std::fs::read(&pgm).unwrap();
    assert!(bytes.starts_with(b"P5\n64 64\n65535\n"));
    let img = decode_pgm(&bytes).unwrap();
    assert_eq!(img.iter().cloned().fold(0.0, f64::max), 1.0);
    assert_eq!(img.iter().cloned().fold(1.0, f64::min), 0.0);
}

#[test]
fn reconstruct_errors() {
    let dir = TempDir::new().unwrap();
    let series = path(&dir, "s.series");
    ok(&["simulate", "--k", "3", "--kind", "semicylinder_gap", "--out", s(&series)]);
    let out = path(&dir, "x.txt");
    assert_eq!(code(&["reconstruct", "--series", s(&series), "--method", "magic", "--out", s(&out)]), 2);
    let missing = path(&dir, "missing.series");
    assert_eq!(code(&["reconstruct", "--series", s(&missing), "--out", s(&out)]), 3);
    std::fs::write(&missing, "not a series\n").unwrap();
    assert_eq!(code(&["reconstruct", "--series", s(&missing), "--out", s(&out)]), 3);
}

#[test]
fn inconsistent_config_exit_code() {
    assert_eq!(code(&["simulate", "--k", "5", "--phantom.side", "16"]), 4);
    assert_eq!(code(&["simulate", "--k", "5", "--mask.modulation_depth", "1.5"]), 4);
}

#[test]
fn sweep_hadamard_beats_speckle() {
    let dir = TempDir::new().unwrap();
    let csv = path(&dir, "sweep.csv");
    ok(&[
        "sweep",
        "--k",
        "5",
        "--mask.modulation_depth",
        "0.75",
        "--noise.photon_scale",
        "1e4",
        "--sweep.values",
        "128,512,1024",
        "--sweep.methods",
        "hadamard,speckle",
        "--out",
        s(&csv),
    ]);
    let summary = std::fs::read_to_string(path(&dir, "sweep.csv.summary.csv")).unwrap();
    let rows = summary_rows(&summary);
    assert_eq!(rows.len(), 6);
    for m in ["128", "512", "1024"] {
        assert!(cnr_of(&rows, m, "hadamard") > cnr_of(&rows, m, "speckle"), "M={m}");
    }
    let detail = std::fs::read_to_string(&csv).unwrap();
    assert!(detail.lines().any(|l| l == ghostpixel_cli::commands::SWEEP_COLUMNS));
}

#[test]
fn sweep_hadamard_512_matches_speckle_5000() {
    let run = |value: &str, method: &str| {
        let text = ok(&[
            "sweep",
            "--k",
            "5",
            "--mask.modulation_depth",
            "0.75",
            "--noise.photon_scale",
            "1e4",
            "--sweep.values",
            value,
            "--sweep.methods",
            method,
        ]);
        let summary = text.split("\n\n").nth(1).unwrap();
        let rows = summary_rows(summary);
        assert_eq!(rows.len(), 1);
        cnr_of(&rows, value, method)
    };
    let hadamard = run("512", "hadamard");
    let speckle = run("5000", "speckle");
    assert!(hadamard >= speckle, "hadamard {hadamard} vs speckle {speckle}");
}

#[test]
fn sweep_rate_axis_and_errors() {
    let text = ok(&[
        "sweep",
        "--k",
        "4",
        "--kind",
        "semicylinder_gap",
        "--noise.photon_scale",
        "1e4",
        "--sweep.axis",
        "rate",
        "--sweep.values",
        "0.25,1",
        "--sweep.methods",
        "dgi,tv",
        "--sweep.seeds",
        "2",
    ]);
    let (detail, summary) = text.split_once("\n\n").unwrap();
    assert_eq!(summary_rows(detail).len(), 8);
    let rows = summary_rows(summary);
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r[2] == "2"));
    assert_eq!(rows[0][3], "64");

    assert_eq!(code(&["sweep", "--k", "4", "--sweep.values", "2000", "--sweep.methods", "hadamard"]), 4);
    assert_eq!(code(&["sweep", "--k", "4", "--sweep.methods", "nope"]), 2);
}

#[test]
fn help_lists_commands() {
    let text = ok(&["--help"]);
    for c in ["basis", "simulate", "reconstruct", "evaluate", "sweep", "GHOSTPIXEL_THREADS"] {
        assert!(text.contains(c));
    }
}
