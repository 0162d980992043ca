//! Run configuration: TOML loading, validation with field paths, hashing
//! and sweep expansion.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::WindowFn;
use crate::channel::FiberParams;
use crate::field::PulseWindowing;
use crate::modulation::{synthesize_rf_drive, ImParams, PmParams, PolarizerParams, VoaParams};
use crate::receiver::{DliParams, SpadParams};
use crate::rng::derive_seed;
use crate::source::LaserParams;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub n_pulses: usize,
    /// Hz
    pub rep_rate: f64,
    pub samples_per_pulse: usize,
    /// Pulses per streamed block.
    pub block_pulses: usize,
    pub seed: u64,
    /// Fraction of the sifted key disclosed for error estimation.
    pub qber_sample_fraction: f64,
    /// Pulses per pattern in the visibility calibration.
    pub calibration_pulses: usize,
    pub output_dir: String,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            n_pulses: 100_000,
            rep_rate: 1e9,
            samples_per_pulse: 16,
            block_pulses: 1024,
            seed: 1,
            qber_sample_fraction: 0.1,
            calibration_pulses: 1000,
            output_dir: "out".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub spectrum_nfft: usize,
    pub window: WindowFn,
    /// Pulses of Alice's output captured for the spectrum.
    pub spectrum_pulses: usize,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            spectrum_nfft: 1024,
            window: WindowFn::Hann,
            spectrum_pulses: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Dotted parameter path, e.g. `fiber.length`.
    pub parameter: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run: RunSection,
    pub laser: LaserParams<f64>,
    pub polarizer: PolarizerParams<f64>,
    pub im: ImParams<f64>,
    pub pm: PmParams<f64>,
    pub voa: VoaParams<f64>,
    pub fiber: FiberParams<f64>,
    pub dli: DliParams<f64>,
    pub spad: SpadParams<f64>,
    pub analysis: AnalysisSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

impl RunConfig {
    /// Every imperfection off: noiseless laser, ideal polarizer, transparent
    /// fiber, lossless interferometer and a detector with only finite
    /// efficiency.
    pub fn ideal() -> Self {
        let mut c = Self::default();
        c.laser.linewidth = 0.0;
        c.laser.rin = f64::NEG_INFINITY;
        c.laser.sigma_i = 0.0;
        c.polarizer = PolarizerParams {
            insertion_loss: 0.0,
            per: f64::INFINITY,
        };
        c.pm.bias_drift = 0.0;
        c.fiber = FiberParams::transparent();
        c.dli.insertion_loss = 0.0;
        c.dli.phase_offset = 0.0;
        c.spad = SpadParams::ideal(0.1);
        c
    }

    pub fn window(&self) -> Result<PulseWindowing<f64>> {
        PulseWindowing::new(self.run.rep_rate, self.run.samples_per_pulse).map_err(|e| match e {
            Error::InvalidParameter { reason, .. } => Error::param("run.rep_rate", reason),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.run;
        if r.n_pulses < 2 {
            return Err(Error::param("run.n_pulses", "need at least 2 pulses"));
        }
        if !(r.rep_rate > 0.0) || !r.rep_rate.is_finite() {
            return Err(Error::param("run.rep_rate", "must be > 0"));
        }
        if r.samples_per_pulse < 2 {
            return Err(Error::param("run.samples_per_pulse", "must be >= 2"));
        }
        if r.block_pulses == 0 {
            return Err(Error::param("run.block_pulses", "must be >= 1"));
        }
        if !(r.qber_sample_fraction > 0.0 && r.qber_sample_fraction <= 1.0) {
            return Err(Error::param("run.qber_sample_fraction", "must lie in (0, 1]"));
        }
        if r.calibration_pulses < 2 {
            return Err(Error::param("run.calibration_pulses", "must be >= 2"));
        }
        let window = self.window()?;
        self.laser.validate("laser")?;
        self.polarizer.validate("polarizer")?;
        self.im.validate("im")?;
        synthesize_rf_drive(&self.im, &window)?;
        self.pm.validate("pm")?;
        self.voa.validate("voa")?;
        self.fiber.validate("fiber")?;
        let block_samples = r.block_pulses * r.samples_per_pulse;
        if self.fiber.nfft < block_samples {
            return Err(Error::param(
                "fiber.nfft",
                format!("{} is smaller than a block of {block_samples} samples", self.fiber.nfft),
            ));
        }
        self.dli.validate("dli")?;
        self.dli.delay_samples(&window).map_err(|_| {
            Error::param("dli.delay", "must be an integer number of samples")
        })?;
        self.spad.validate("spad")?;
        if self.analysis.spectrum_nfft < 2 {
            return Err(Error::param("analysis.spectrum_nfft", "must be >= 2"));
        }
        if self.analysis.spectrum_pulses * r.samples_per_pulse < self.analysis.spectrum_nfft {
            return Err(Error::param(
                "analysis.spectrum_pulses",
                "captured samples must cover at least one FFT frame",
            ));
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(Error::param("sweep.values", "must not be empty"));
            }
            self.with_override(&s.parameter, s.values[0])?;
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }

    /// Documented default configuration.
    pub fn reference_toml() -> String {
        let body = Self::default().to_toml_string();
        let mut out = String::from(
            "# Reference configuration with every default spelled out.\n\
             # Units: SI unless the key says otherwise (fiber lengths in km,\n\
             # dispersion per km, losses and ratios in dB).\n\
             # Exactly one of voa.attenuation (dB) or voa.target_mpn may be set.\n\
             # Optional keys: dli.delay (s, default one period), fiber.dz (km),\n\
             # and a [sweep] table with `parameter` and `values`.\n\n",
        );
        out.push_str(&body);
        out
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML. The output
    /// directory is excluded so relocated runs keep their hash.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.run.output_dir.clear();
        let digest = Sha256::digest(c.to_toml_string().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Copy with one dotted parameter replaced by `value`.
    pub fn with_override(&self, path: &str, value: f64) -> Result<Self> {
        let mut root = toml::Value::try_from(self).map_err(|e| Error::ConfigParse(e.to_string()))?;
        let parts: Vec<&str> = path.split('.').collect();
        if parts.len() != 2 || parts[0] == "sweep" {
            return Err(Error::param(path, "expected `section.key`"));
        }
        let table = root
            .get_mut(parts[0])
            .and_then(|v| v.as_table_mut())
            .ok_or_else(|| Error::param(path, "unknown section"))?;
        let replacement = match table.get(parts[1]) {
            Some(toml::Value::Integer(_)) => {
                if value.fract() != 0.0 || value < 0.0 {
                    return Err(Error::param(path, "expects a non-negative integer"));
                }
                toml::Value::Integer(value as i64)
            }
            Some(toml::Value::Float(_)) | None => toml::Value::Float(value),
            Some(_) => return Err(Error::param(path, "is not numeric")),
        };
        table.insert(parts[1].to_string(), replacement);
        if parts[0] == "voa" {
            // The two VOA modes are exclusive; setting one clears the other.
            let other = if parts[1] == "attenuation" { "target_mpn" } else { "attenuation" };
            if parts[1] == "attenuation" || parts[1] == "target_mpn" {
                table.remove(other);
            }
        }
        let cfg: RunConfig = root
            .try_into()
            .map_err(|e: toml::de::Error| Error::param(path, e.to_string()))?;
        Ok(cfg)
    }

    /// One configuration per sweep value, or just `self` without a sweep.
    pub fn expand_sweep(&self) -> Result<Vec<RunConfig>> {
        match &self.sweep {
            None => Ok(vec![self.clone()]),
            Some(s) => s
                .values
                .iter()
                .map(|&v| {
                    let mut c = self.with_override(&s.parameter, v)?;
                    c.sweep = None;
                    c.validate()?;
                    Ok(c)
                })
                .collect(),
        }
    }
}

/// Seed of sweep point `index` derived from the root seed.
pub fn sweep_seed(root: u64, index: usize) -> u64 {
    derive_seed(root, &format!("sweep.{index}"))
}
