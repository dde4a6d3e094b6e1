use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;

use ghostpixel::hadamard::{compress, compressed_len, make_pattern_pair, HadamardBasis};
use ghostpixel::metrics::{self, RegionMask};
use ghostpixel::optics::{run_acquisition, run_speckle_acquisition, MeasurementSeries, Phantom};
use ghostpixel::phantoms::generate;
use ghostpixel::reconstruct::{
    correlation_gi, differential_gi, series_patterns, series_problem, tv_admm, wavelet_fista,
    ReconMethod, ReconResult,
};

use crate::config::{AcquisitionMode, ExperimentConfig, Settings};
use crate::error::{CliError, CliResult};
use crate::imageio::{read_image, write_image, ImageFormat};

fn write_file(path: &Path, contents: &[u8]) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

/// Writes to `output.path`, or to `out` when it is unset.
fn emit(settings: &Settings, out: &mut dyn Write, contents: &str) -> CliResult<()> {
    match settings.path("output.path") {
        Some(path) => write_file(&path, contents.as_bytes()),
        None => out
            .write_all(contents.as_bytes())
            .map_err(|e| CliError::Io(format!("stdout: {e}"))),
    }
}

fn make_phantom(cfg: &ExperimentConfig) -> CliResult<Phantom> {
    generate(&cfg.phantom).map_err(|e| CliError::config("phantom", e))
}

pub fn basis(settings: &Settings, out: &mut dyn Write) -> CliResult<()> {
    let cfg = ExperimentConfig::from_settings(settings)?;
    let basis = HadamardBasis::new(cfg.grid_log2, cfg.ordering)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let indices = compress(basis.permutation(), cfg.rate).map_err(|e| CliError::Usage(e.to_string()))?;
    emit(settings, out, &basis.export(&indices))?;

    if let Some(dir) = settings.path("basis.patterns_dir") {
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        for (rank, &index) in indices.iter().enumerate() {
            let pair = make_pattern_pair(&basis, index, basis.side())
                .map_err(|e| CliError::config("basis", e))?;
            let image = pair.positive.mapv(f64::from);
            let path = dir.join(format!("pattern_{rank:05}_{index}.pgm"));
            write_image(&path, &image)?;
        }
    }
    Ok(())
}

pub fn phantom(settings: &Settings) -> CliResult<()> {
    let cfg = ExperimentConfig::from_settings(settings)?;
    let phantom = make_phantom(&cfg)?;
    write_image(&settings.required_path("output.path")?, phantom.transmission())
}

/// Simulates the configured acquisition: the first `M` rows of the ordered
/// Hadamard basis, or `count` speckle patterns.
pub fn acquire(cfg: &ExperimentConfig, phantom: &Phantom, count: usize) -> CliResult<MeasurementSeries> {
    let mut series = match cfg.mode {
        AcquisitionMode::Hadamard => {
            let basis = HadamardBasis::new(cfg.grid_log2, cfg.ordering)
                .map_err(|e| CliError::config("basis.k", e))?;
            if count == 0 || count > basis.len() {
                return Err(CliError::config(
                    "basis",
                    format!("{count} exposures requested from a basis of {}", basis.len()),
                ));
            }
            run_acquisition(
                &basis,
                &basis.permutation()[..count],
                phantom,
                &cfg.imperfection,
                cfg.source.as_ref(),
                &cfg.noise,
                cfg.differential,
            )
        }
        AcquisitionMode::Speckle => run_speckle_acquisition(
            count,
            cfg.speckle_size,
            phantom,
            cfg.source.as_ref(),
            &cfg.noise,
        ),
    }
    .map_err(|e| CliError::config("acquisition", e))?;
    series.metadata.push(("phantom.kind".into(), cfg.phantom.kind.name().into()));
    series.metadata.push(("phantom.side".into(), cfg.side().to_string()));
    Ok(series)
}

fn exposure_count(cfg: &ExperimentConfig) -> usize {
    match cfg.mode {
        AcquisitionMode::Hadamard => cfg.hadamard_len(),
        AcquisitionMode::Speckle => cfg.speckle_count,
    }
}

pub fn simulate(settings: &Settings, out: &mut dyn Write) -> CliResult<()> {
    let cfg = ExperimentConfig::from_settings(settings)?;
    let phantom = make_phantom(&cfg)?;
    let series = acquire(&cfg, &phantom, exposure_count(&cfg))?;
    if settings.bool("log.verbose")? {
        let m = series.len();
        for (i, r) in series.records.iter().enumerate() {
            eprintln!("exposure {}/{m} index={} bucket={:e}", i + 1, r.index, r.bucket_plus);
        }
    }
    eprintln!("simulated {} exposures (seed {})", series.len(), cfg.seed);
    emit(settings, out, &series.to_text())
}

pub fn read_series(path: &Path) -> CliResult<MeasurementSeries> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    MeasurementSeries::from_text(&text).map_err(|e| CliError::io(path, e))
}

/// Runs one reconstruction method on a series.
pub fn reconstruct_series(
    series: &MeasurementSeries,
    method: ReconMethod,
    cfg: &ExperimentConfig,
) -> CliResult<ReconResult> {
    let fail = |e: ghostpixel::Error| CliError::config("recon.method", format!("{method}: {e}"));
    match method {
        ReconMethod::Gi => {
            let patterns = series_patterns(series).map_err(fail)?;
            correlation_gi(series, &patterns).map_err(fail)
        }
        ReconMethod::Dgi => differential_gi(series).map_err(fail),
        ReconMethod::Tv => {
            let (op, b) = series_problem(series, cfg.operator).map_err(fail)?;
            tv_admm(&op, &b, &cfg.tv).map_err(fail)
        }
        ReconMethod::Wfista => {
            let (op, b) = series_problem(series, cfg.operator).map_err(fail)?;
            wavelet_fista(&op, &b, &cfg.fista).map_err(fail)
        }
    }
}

fn sidecar_path(image: &Path) -> PathBuf {
    let mut name = image.as_os_str().to_owned();
    name.push(".diag");
    PathBuf::from(name)
}

pub fn reconstruct(settings: &Settings) -> CliResult<()> {
    let cfg = ExperimentConfig::from_settings(settings)?;
    let series_path = settings.required_path("input.series")?;
    let output = settings.required_path("output.path")?;
    let series = read_series(&series_path)?;
    let result = reconstruct_series(&series, cfg.method, &cfg)?;

    let image = match ImageFormat::for_path(&output) {
        ImageFormat::Pgm => metrics::min_max_normalize(&result.image),
        ImageFormat::FloatText => result.image.clone(),
    };
    write_image(&output, &image)?;
    let mut diag = format!(
        "method={}\nseries={}\nseed={}\nrecords={}\n",
        cfg.method,
        series_path.display(),
        series.noise.seed,
        series.len()
    );
    diag.push_str(&result.diagnostics());
    write_file(&sidecar_path(&output), diag.as_bytes())
}

pub fn evaluate(settings: &Settings, out: &mut dyn Write) -> CliResult<()> {
    let cfg = ExperimentConfig::from_settings(settings)?;
    let image = read_image(&settings.required_path("input.image")?)?;
    let reference = read_image(&settings.required_path("input.reference")?)?;
    if image.dim() != reference.dim() {
        return Err(CliError::config(
            "input.image",
            format!("shape {:?} differs from reference {:?}", image.dim(), reference.dim()),
        ));
    }
    let scores = Scores::compute(&image, &reference);
    let mut text = String::new();
    let _ = writeln!(text, "cnr={}", fmt9(scores.cnr));
    let _ = writeln!(text, "mse={}", fmt9(scores.mse));
    let _ = writeln!(text, "psnr={}", fmt9(scores.psnr));
    let _ = writeln!(text, "ncorr={}", fmt9(scores.ncorr));
    if settings.is_set("evaluate.knife_edge_row") {
        let row: usize = settings.parse("evaluate.knife_edge_row")?;
        if row >= image.nrows() {
            return Err(CliError::config(
                "evaluate.knife_edge_row",
                format!("row {row} outside a {}-row image", image.nrows()),
            ));
        }
        let profile: Vec<f64> = image.row(row).to_vec();
        let fwhm = metrics::knife_edge_fwhm(&profile, cfg.phantom.pixel_pitch_um)
            .map_err(|e| CliError::config("evaluate.knife_edge_row", e))?;
        let _ = writeln!(text, "knife_edge_fwhm_um={}", fmt9(fwhm));
    }
    emit(settings, out, &text)
}

/// Scores of a reconstruction against its reference; NaN where a metric is
/// undefined (e.g. a constant image has no CNR).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub cnr: f64,
    pub mse: f64,
    pub psnr: f64,
    pub ncorr: f64,
}

impl Scores {
    /// CNR on the raw image with regions thresholded from the reference;
    /// MSE, PSNR and correlation after min-max normalization.
    pub fn compute(image: &Array2<f64>, reference: &Array2<f64>) -> Self {
        let cnr = RegionMask::from_reference(reference)
            .and_then(|mask| metrics::cnr(image, &mask))
            .unwrap_or(f64::NAN);
        let normalized = metrics::min_max_normalize(image);
        let (mse, psnr, ncorr) = match metrics::mse_psnr_ncorr(&normalized, reference) {
            Ok(c) => (c.mse, c.psnr, c.ncorr),
            Err(_) => (
                metrics::mse(&normalized, reference).unwrap_or(f64::NAN),
                metrics::psnr(&normalized, reference).unwrap_or(f64::NAN),
                f64::NAN,
            ),
        };
        Scores {
            cnr,
            mse,
            psnr,
            ncorr,
        }
    }
}

/// Nine significant digits.
pub fn fmt9(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.8e}")
    } else {
        v.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SweepAxis {
    Exposures,
    Rate,
}

impl std::str::FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "exposures" => Ok(SweepAxis::Exposures),
            "rate" => Ok(SweepAxis::Rate),
            other => Err(format!("unknown sweep axis '{other}'")),
        }
    }
}

/// What a sweep cell measures and how it reconstructs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMethod {
    /// Hadamard acquisition reconstructed with `recon.method`.
    Hadamard,
    /// Speckle acquisition reconstructed by correlation.
    Speckle,
    /// Hadamard acquisition reconstructed with the named method.
    Recon(ReconMethod),
}

impl SweepMethod {
    pub fn name(self) -> &'static str {
        match self {
            SweepMethod::Hadamard => "hadamard",
            SweepMethod::Speckle => "speckle",
            SweepMethod::Recon(m) => m.name(),
        }
    }
}

impl std::str::FromStr for SweepMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "hadamard" => Ok(SweepMethod::Hadamard),
            "speckle" => Ok(SweepMethod::Speckle),
            other => other
                .parse()
                .map(SweepMethod::Recon)
                .map_err(|_| format!("unknown sweep method '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub method: &'static str,
    pub seed: u64,
    pub exposures: usize,
    pub scores: Scores,
    pub wall_time: f64,
}

pub const SWEEP_COLUMNS: &str = "axis_value,method,seed,exposures,cnr,mse,psnr,ncorr,wall_time";
pub const SUMMARY_COLUMNS: &str = "axis_value,method,seeds,exposures,cnr_mean,cnr_std,mse_mean,mse_std,psnr_mean,psnr_std,ncorr_mean,ncorr_std,wall_time_mean";

fn sweep_cell(
    base: &ExperimentConfig,
    phantom: &Phantom,
    exposures: usize,
    method: SweepMethod,
    seed: u64,
    timing: bool,
    value: f64,
) -> CliResult<SweepRow> {
    let mut cfg = base.clone();
    cfg.seed = seed;
    cfg.noise.seed = seed;
    let recon_method = match method {
        SweepMethod::Hadamard => cfg.method,
        SweepMethod::Speckle => ReconMethod::Gi,
        SweepMethod::Recon(m) => m,
    };
    cfg.mode = if method == SweepMethod::Speckle {
        AcquisitionMode::Speckle
    } else {
        AcquisitionMode::Hadamard
    };
    let start = Instant::now();
    let series = acquire(&cfg, phantom, exposures)?;
    let result = reconstruct_series(&series, recon_method, &cfg)?;
    let wall_time = if timing { start.elapsed().as_secs_f64() } else { 0.0 };
    Ok(SweepRow {
        value,
        method: method.name(),
        seed,
        exposures,
        scores: Scores::compute(&result.image, phantom.transmission()),
        wall_time,
    })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn fmt_axis(axis: SweepAxis, value: f64) -> String {
    match axis {
        SweepAxis::Exposures => format!("{}", value as usize),
        SweepAxis::Rate => fmt9(value),
    }
}

/// Runs every `(axis value, method, seed)` cell and returns the per-seed CSV
/// and the per-cell summary CSV.
pub fn run_sweep(settings: &Settings) -> CliResult<(String, String)> {
    let cfg = ExperimentConfig::from_settings(settings)?;
    let axis: SweepAxis = settings.parse("sweep.axis")?;
    let values: Vec<f64> = settings.list("sweep.values")?;
    let methods: Vec<SweepMethod> = settings.list("sweep.methods")?;
    let seeds: u64 = settings.parse("sweep.seeds")?;
    if seeds == 0 {
        return Err(CliError::Usage("--sweep.seeds must be at least 1".into()));
    }
    let timing = settings.bool("sweep.timing")?;
    let phantom = make_phantom(&cfg)?;
    let total = cfg.side() * cfg.side();

    let mut cells = Vec::new();
    for &value in &values {
        let exposures = match axis {
            SweepAxis::Exposures => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(CliError::Usage(format!(
                        "--sweep.values: exposure count {value} is not a positive integer"
                    )));
                }
                value as usize
            }
            SweepAxis::Rate => compressed_len(total, value)
                .map_err(|e| CliError::Usage(format!("--sweep.values: {e}")))?,
        };
        for &method in &methods {
            if method != SweepMethod::Speckle && exposures > total {
                return Err(CliError::config(
                    "sweep.values",
                    format!("{exposures} Hadamard exposures exceed the basis size {total}"),
                ));
            }
            for s in 0..seeds {
                cells.push((value, exposures, method, cfg.seed + s));
            }
        }
    }

    let mut rows = cells
        .par_iter()
        .map(|&(value, exposures, method, seed)| {
            sweep_cell(&cfg, &phantom, exposures, method, seed, timing, value)
        })
        .collect::<CliResult<Vec<_>>>()?;
    rows.sort_by(|a, b| {
        a.value
            .total_cmp(&b.value)
            .then(a.method.cmp(b.method))
            .then(a.seed.cmp(&b.seed))
    });

    let axis_name = settings.get("sweep.axis");
    let header = format!(
        "# ghostpixel sweep axis={axis_name} seed={} seeds={seeds} phantom={}\n",
        cfg.seed,
        cfg.phantom.kind.name()
    );
    let mut detail = header.clone();
    detail.push_str(SWEEP_COLUMNS);
    detail.push('\n');
    for r in &rows {
        let _ = writeln!(
            detail,
            "{},{},{},{},{},{},{},{},{}",
            fmt_axis(axis, r.value),
            r.method,
            r.seed,
            r.exposures,
            fmt9(r.scores.cnr),
            fmt9(r.scores.mse),
            fmt9(r.scores.psnr),
            fmt9(r.scores.ncorr),
            fmt9(r.wall_time)
        );
    }

    let mut summary = header;
    summary.push_str(SUMMARY_COLUMNS);
    summary.push('\n');
    for group in rows.chunk_by(|a, b| a.value == b.value && a.method == b.method) {
        let col = |f: fn(&SweepRow) -> f64| mean_std(&group.iter().map(f).collect::<Vec<_>>());
        let (cnr_m, cnr_s) = col(|r| r.scores.cnr);
        let (mse_m, mse_s) = col(|r| r.scores.mse);
        let (psnr_m, psnr_s) = col(|r| r.scores.psnr);
        let (nc_m, nc_s) = col(|r| r.scores.ncorr);
        let (wt, _) = col(|r| r.wall_time);
        let _ = writeln!(
            summary,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            fmt_axis(axis, group[0].value),
            group[0].method,
            group.len(),
            group[0].exposures,
            fmt9(cnr_m),
            fmt9(cnr_s),
            fmt9(mse_m),
            fmt9(mse_s),
            fmt9(psnr_m),
            fmt9(psnr_s),
            fmt9(nc_m),
            fmt9(nc_s),
            fmt9(wt)
        );
    }
    Ok((detail, summary))
}

pub fn sweep(settings: &Settings, out: &mut dyn Write) -> CliResult<()> {
    let (detail, summary) = run_sweep(settings)?;
    match settings.path("output.path") {
        Some(path) => {
            write_file(&path, detail.as_bytes())?;
            let summary_path = settings.path("output.summary").unwrap_or_else(|| {
                let mut name = path.as_os_str().to_owned();
                name.push(".summary.csv");
                PathBuf::from(name)
            });
            write_file(&summary_path, summary.as_bytes())
        }
        None => {
            let text = format!("{detail}\n{summary}");
            out.write_all(text.as_bytes())
                .map_err(|e| CliError::Io(format!("stdout: {e}")))
        }
    }
}
