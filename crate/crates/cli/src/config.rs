//! Flat dotted-key configuration.
//!
//! Settings come from built-in defaults, then an optional `--config` file of
//! `key = value` lines, then `--key value` flags. Every key can be given in
//! any of the three places.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ghostpixel::hadamard::{compressed_len, Ordering, MAX_GRID_LOG2};
use ghostpixel::optics::{ImperfectionModel, NoiseModel, SourceModel};
use ghostpixel::phantoms::{PhantomKind, PhantomSpec};
use ghostpixel::reconstruct::{FistaParams, OperatorModel, ReconMethod, TvParams};

use crate::error::{CliError, CliResult};

/// `(key, default, description)`. An empty default means "unset".
pub const KEYS: &[(&str, &str, &str)] = &[
    ("seed", "0", "RNG seed for noise, jitter and speckle"),
    ("basis.k", "5", "grid is 2^k × 2^k pixels (0..=6)"),
    ("basis.ordering", "connectivity", "natural | sequency | connectivity"),
    ("basis.rate", "1.0", "fraction of the ordered basis kept, in (0, 1]"),
    ("basis.patterns_dir", "", "basis: also write P⁺ of every selected row here"),
    ("acquisition.mode", "hadamard", "hadamard | speckle"),
    ("acquisition.differential", "true", "measure complementary mask pairs"),
    ("acquisition.patterns", "0", "speckle pattern count (0 = one per pixel)"),
    ("speckle.size_px", "1", "speckle grain size in pixels"),
    ("phantom.kind", "letters", "letters | gear | semicylinder_gap | knife_edge | bar_target | uniform"),
    ("phantom.side", "0", "phantom side in pixels (0 = 2^basis.k)"),
    ("phantom.pitch_um", "10", "object pixel pitch in μm"),
    ("phantom.text", "", "letters: text"),
    ("phantom.teeth", "", "gear: tooth count"),
    ("phantom.outer_radius", "", "gear: tip radius / side"),
    ("phantom.tooth_depth", "", "gear: tooth height / side"),
    ("phantom.gap_px", "", "semicylinder_gap: gap width"),
    ("phantom.position", "", "knife_edge: edge position / side"),
    ("phantom.period_px", "", "bar_target: bar period"),
    ("phantom.value", "", "uniform: transmission"),
    ("mask.modulation_depth", "1.0", "D_r; opaque mask pixels transmit 1 - D_r"),
    ("mask.edge_blur_sigma", "0", "Gaussian edge blur σ in pixels"),
    ("mask.jitter_sigma", "0", "per-exposure shift σ in pixels"),
    ("source.enabled", "false", "apply penumbral source blur"),
    ("source.fwhm_x_um", "37", "source FWHM across columns, μm"),
    ("source.fwhm_y_um", "30", "source FWHM across rows, μm"),
    ("source.source_to_mask_mm", "100", "source to mask distance, mm"),
    ("source.mask_to_object_mm", "100", "mask to object distance, mm"),
    ("noise.photon_scale", "0", "photons per unit bucket (0 = no shot noise)"),
    ("noise.read_noise_sigma", "0", "additive Gaussian σ"),
    ("noise.dark_current", "0", "additive offset"),
    ("recon.method", "dgi", "gi | dgi | tv | wfista"),
    ("recon.operator", "designed", "designed | calibrated (solver forward model)"),
    ("tv.mu", "1", "TV data weight μ"),
    ("tv.beta", "32", "TV ADMM penalty β"),
    ("tv.max_iters", "500", "TV iteration cap"),
    ("tv.tol", "1e-5", "TV relative-change tolerance"),
    ("tv.cg_iters", "30", "conjugate-gradient steps per TV iteration"),
    ("fista.lambda", "1", "ℓ₁ weight on Haar detail coefficients"),
    ("fista.levels", "3", "Haar levels"),
    ("fista.max_iters", "300", "FISTA iteration cap"),
    ("fista.tol", "1e-6", "FISTA relative-change tolerance"),
    ("sweep.axis", "exposures", "exposures | rate"),
    ("sweep.values", "128,512,1024", "comma-separated axis values"),
    ("sweep.methods", "hadamard,speckle", "comma list of hadamard | speckle | gi | dgi | tv | wfista"),
    ("sweep.seeds", "1", "seeds per cell, counting up from seed"),
    ("sweep.timing", "false", "record wall time (makes the CSV run-dependent)"),
    ("input.series", "", "measurement series file"),
    ("input.image", "", "evaluate: image to score"),
    ("input.reference", "", "evaluate: reference image"),
    ("evaluate.knife_edge_row", "", "evaluate: row used for the knife-edge FWHM"),
    ("output.path", "", "output file (stdout when empty, where allowed)"),
    ("output.summary", "", "sweep: aggregate CSV (default: <output>.summary.csv)"),
    ("log.verbose", "false", "print every record to stderr"),
];

/// Short flag names accepted in place of the full dotted key.
const ALIASES: &[(&str, &str)] = &[
    ("k", "basis.k"),
    ("ordering", "basis.ordering"),
    ("rate", "basis.rate"),
    ("method", "recon.method"),
    ("series", "input.series"),
    ("image", "input.image"),
    ("reference", "input.reference"),
    ("out", "output.path"),
    ("output", "output.path"),
    ("kind", "phantom.kind"),
];

fn resolve(key: &str) -> CliResult<&'static str> {
    if let Some((k, _, _)) = KEYS.iter().find(|(k, _, _)| *k == key) {
        return Ok(k);
    }
    if let Some((_, k)) = ALIASES.iter().find(|(a, _)| *a == key) {
        return Ok(k);
    }
    Err(CliError::Usage(format!("unknown key '{key}'")))
}

/// Explicitly set values; lookups fall back to [`KEYS`] defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<&'static str, String>,
}

impl Settings {
    /// Parses `--key value` / `--key=value` flags and an optional
    /// `--config <file>`; flags win over the file.
    pub fn from_args(args: &[String]) -> CliResult<Self> {
        let mut flags = Vec::new();
        let mut config_file = None;
        let mut it = args.iter();
        while let Some(arg) = it.next() {
            let Some(body) = arg.strip_prefix("--") else {
                return Err(CliError::Usage(format!("unexpected argument '{arg}'")));
            };
            let (key, value) = match body.split_once('=') {
                Some((k, v)) => (k.to_string(), v.to_string()),
                None => {
                    let v = it
                        .next()
                        .ok_or_else(|| CliError::Usage(format!("--{body} needs a value")))?;
                    (body.to_string(), v.clone())
                }
            };
            if key == "config" {
                config_file = Some(PathBuf::from(value));
            } else {
                flags.push((key, value));
            }
        }
        let mut settings = match config_file {
            Some(path) => Settings::from_file(&path)?,
            None => Settings::default(),
        };
        for (k, v) in flags {
            settings.set(&k, &v)?;
        }
        Ok(settings)
    }

    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Settings::parse_text(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    /// `key = value` lines; `#` starts a comment.
    pub fn parse_text(text: &str) -> CliResult<Self> {
        let mut settings = Settings::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("line {}: expected key = value", no + 1)))?;
            settings.set(k.trim(), v.trim())?;
        }
        Ok(settings)
    }

    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let key = resolve(key)?;
        self.values.insert(key, value.to_string());
        Ok(())
    }

    pub fn is_set(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn get(&self, key: &str) -> &str {
        if let Some(v) = self.values.get(key) {
            return v;
        }
        KEYS.iter()
            .find(|(k, _, _)| *k == key)
            .map(|(_, d, _)| *d)
            .unwrap_or_else(|| panic!("key '{key}' missing from the key table"))
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> CliResult<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.get(key);
        raw.parse()
            .map_err(|e| CliError::Usage(format!("--{key} '{raw}': {e}")))
    }

    pub fn bool(&self, key: &str) -> CliResult<bool> {
        match self.get(key) {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            other => Err(CliError::Usage(format!("--{key} '{other}' is not a boolean"))),
        }
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        let v = self.get(key);
        (!v.is_empty()).then(|| PathBuf::from(v))
    }

    pub fn required_path(&self, key: &str) -> CliResult<PathBuf> {
        self.path(key)
            .ok_or_else(|| CliError::Usage(format!("--{key} is required")))
    }

    pub fn list<T: FromStr>(&self, key: &str) -> CliResult<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.get(key);
        let items = raw
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|e| CliError::Usage(format!("--{key} item '{s}': {e}")))
            })
            .collect::<CliResult<Vec<T>>>()?;
        if items.is_empty() {
            return Err(CliError::Usage(format!("--{key} is empty")));
        }
        Ok(items)
    }

    /// Effective `key=value` pairs (defaults included), in table order.
    pub fn effective(&self) -> Vec<(&'static str, String)> {
        KEYS.iter()
            .map(|(k, _, _)| (*k, self.get(k).to_string()))
            .filter(|(_, v)| !v.is_empty())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AcquisitionMode {
    Hadamard,
    Speckle,
}

impl FromStr for AcquisitionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "hadamard" => Ok(AcquisitionMode::Hadamard),
            "speckle" => Ok(AcquisitionMode::Speckle),
            other => Err(format!("unknown acquisition mode '{other}'")),
        }
    }
}

fn parse_operator_model(s: &str) -> CliResult<OperatorModel> {
    match s {
        "designed" => Ok(OperatorModel::Designed),
        "calibrated" => Ok(OperatorModel::Calibrated),
        other => Err(CliError::Usage(format!(
            "--recon.operator '{other}': expected designed or calibrated"
        ))),
    }
}

/// Typed view of every model parameter, checked for mutual consistency.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub grid_log2: u32,
    pub ordering: Ordering,
    pub rate: f64,
    pub mode: AcquisitionMode,
    pub differential: bool,
    /// Speckle pattern count.
    pub speckle_count: usize,
    pub speckle_size: usize,
    pub phantom: PhantomSpec,
    pub imperfection: ImperfectionModel,
    pub source: Option<SourceModel>,
    pub noise: NoiseModel,
    pub method: ReconMethod,
    pub operator: OperatorModel,
    pub tv: TvParams,
    pub fista: FistaParams,
}

const PHANTOM_PARAMS: &[&str] = &[
    "text",
    "teeth",
    "outer_radius",
    "tooth_depth",
    "gap_px",
    "position",
    "period_px",
    "value",
];

impl ExperimentConfig {
    pub fn from_settings(s: &Settings) -> CliResult<Self> {
        let seed: u64 = s.parse("seed")?;
        let grid_log2: u32 = s.parse("basis.k")?;
        if grid_log2 > MAX_GRID_LOG2 {
            return Err(CliError::Usage(format!(
                "--basis.k {grid_log2}: must be at most {MAX_GRID_LOG2}"
            )));
        }
        let ordering: Ordering = s.parse("basis.ordering")?;
        let rate: f64 = s.parse("basis.rate")?;
        if !(rate > 0.0 && rate <= 1.0) {
            return Err(CliError::Usage(format!("--basis.rate {rate}: must be in (0, 1]")));
        }
        let n = 1usize << grid_log2;

        let side: usize = s.parse("phantom.side")?;
        if side != 0 && side != n {
            return Err(CliError::config(
                "phantom.side",
                format!("{side} does not match the {n}×{n} basis grid (basis.k = {grid_log2})"),
            ));
        }
        let kind_name = s.get("phantom.kind").to_string();
        let mut params = BTreeMap::new();
        for p in PHANTOM_PARAMS {
            let key = format!("phantom.{p}");
            if s.is_set(&key) {
                params.insert(p.to_string(), s.get(&key).to_string());
            }
        }
        let kind = PhantomKind::from_params(&kind_name, &params)
            .map_err(|e| CliError::config("phantom", e))?;
        let pitch: f64 = s.parse("phantom.pitch_um")?;
        if !(pitch > 0.0) {
            return Err(CliError::config("phantom.pitch_um", "must be positive"));
        }

        let imperfection = ImperfectionModel {
            modulation_depth: s.parse("mask.modulation_depth")?,
            edge_blur_sigma: s.parse("mask.edge_blur_sigma")?,
            jitter_sigma: s.parse("mask.jitter_sigma")?,
        };
        imperfection
            .validate()
            .map_err(|e| CliError::config("mask", e))?;
        let source = if s.bool("source.enabled")? {
            let src = SourceModel {
                fwhm_um: [s.parse("source.fwhm_x_um")?, s.parse("source.fwhm_y_um")?],
                source_to_mask_mm: s.parse("source.source_to_mask_mm")?,
                mask_to_object_mm: s.parse("source.mask_to_object_mm")?,
            };
            src.validate().map_err(|e| CliError::config("source", e))?;
            Some(src)
        } else {
            None
        };
        let noise = NoiseModel {
            photon_scale: s.parse("noise.photon_scale")?,
            read_noise_sigma: s.parse("noise.read_noise_sigma")?,
            dark_current: s.parse("noise.dark_current")?,
            seed,
        };
        noise.validate().map_err(|e| CliError::config("noise", e))?;

        let speckle_count: usize = match s.parse("acquisition.patterns")? {
            0 => n * n,
            c => c,
        };
        let speckle_size: usize = s.parse("speckle.size_px")?;
        if speckle_size == 0 || speckle_size > n {
            return Err(CliError::config(
                "speckle.size_px",
                format!("{speckle_size} must be in 1..={n}"),
            ));
        }

        let method: ReconMethod = s
            .get("recon.method")
            .parse()
            .map_err(|e| CliError::Usage(format!("--recon.method: {e}")))?;
        let tv = TvParams {
            mu: s.parse("tv.mu")?,
            beta: s.parse("tv.beta")?,
            max_iters: s.parse("tv.max_iters")?,
            tol: s.parse("tv.tol")?,
            cg_iters: s.parse("tv.cg_iters")?,
        };
        let fista = FistaParams {
            lambda: s.parse("fista.lambda")?,
            levels: s.parse("fista.levels")?,
            max_iters: s.parse("fista.max_iters")?,
            tol: s.parse("fista.tol")?,
        };
        Ok(ExperimentConfig {
            seed,
            grid_log2,
            ordering,
            rate,
            mode: s.parse("acquisition.mode")?,
            differential: s.bool("acquisition.differential")?,
            speckle_count,
            speckle_size,
            phantom: PhantomSpec::new(kind, n, pitch),
            imperfection,
            source,
            noise,
            method,
            operator: parse_operator_model(s.get("recon.operator"))?,
            tv,
            fista,
        })
    }

    pub fn side(&self) -> usize {
        1 << self.grid_log2
    }

    /// Number of Hadamard rows kept at the configured rate.
    pub fn hadamard_len(&self) -> usize {
        compressed_len(self.side() * self.side(), self.rate).expect("rate validated")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn flags_and_aliases() {
        let s = Settings::from_args(&args(&["--k", "6", "--noise.photon_scale=1e6"])).unwrap();
        assert_eq!(s.get("basis.k"), "6");
        assert_eq!(s.get("noise.photon_scale"), "1e6");
        assert_eq!(s.get("basis.rate"), "1.0");
    }

    #[test]
    fn unknown_key_is_usage_error() {
        let e = Settings::from_args(&args(&["--basis.kk", "6"])).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert_eq!(Settings::from_args(&args(&["--k"])).unwrap_err().exit_code(), 2);
        assert_eq!(Settings::from_args(&args(&["stray"])).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn config_text_with_comments() {
        let s = Settings::parse_text("# comment\nbasis.k = 4\n\nmask.modulation_depth = 0.75 # Cu\n")
            .unwrap();
        assert_eq!(s.get("basis.k"), "4");
        assert_eq!(s.get("mask.modulation_depth"), "0.75");
        assert!(Settings::parse_text("basis.k 4").is_err());
    }

    #[test]
    fn experiment_defaults() {
        let c = ExperimentConfig::from_settings(&Settings::default()).unwrap();
        assert_eq!(c.side(), 32);
        assert_eq!(c.hadamard_len(), 1024);
        assert_eq!(c.speckle_count, 1024);
        assert!(c.differential);
        assert_eq!(c.method, ReconMethod::Dgi);
    }

    #[test]
    fn inconsistencies_are_config_errors() {
        let mut s = Settings::default();
        s.set("phantom.side", "64").unwrap();
        let e = ExperimentConfig::from_settings(&s).unwrap_err();
        assert_eq!(e.exit_code(), 4);
        assert!(e.to_string().contains("phantom.side"));

        let mut s = Settings::default();
        s.set("phantom.teeth", "9").unwrap();
        assert_eq!(ExperimentConfig::from_settings(&s).unwrap_err().exit_code(), 4);

        let mut s = Settings::default();
        s.set("rate", "1.5").unwrap();
        assert_eq!(ExperimentConfig::from_settings(&s).unwrap_err().exit_code(), 2);
    }
}
