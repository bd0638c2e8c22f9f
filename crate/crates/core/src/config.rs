//! Device configuration, read from a single JSON document.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::{EomLabel, MAX_ALPHA};
use crate::protocol::{fit_model, BinSchedule, ImperfectionModel, Policy};
use crate::spectral::Etalon;

/// The reference device, shipped with the crate.
pub const REFERENCE_DEVICE_JSON: &str = include_str!("../configs/reference-device.json");

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "CFCOMM_CONFIG";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EomConfig {
    pub label: EomLabel,
    pub freq_ghz: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BeamsplitterConfig {
    /// Power reflectivity of the outer splitters.
    pub outer_reflectivity: f64,
    /// Power reflectivity of the inner-interferometer splitters.
    pub inner_reflectivity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttenuatorSetting {
    Auto,
    Fixed(f64),
}

impl Serialize for AttenuatorSetting {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            AttenuatorSetting::Auto => s.serialize_str("auto"),
            AttenuatorSetting::Fixed(t) => s.serialize_f64(*t),
        }
    }
}

impl<'de> Deserialize<'de> for AttenuatorSetting {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(t) => Ok(AttenuatorSetting::Fixed(t)),
            Raw::Str(s) if s == "auto" => Ok(AttenuatorSetting::Auto),
            Raw::Str(s) => Err(serde::de::Error::custom(format!(
                "attenuator_t must be a number or \"auto\", got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EtalonConfig {
    /// Source-preparation cascade.
    pub source: Vec<Etalon>,
    /// Detection-side scanning etalon.
    pub scan: Etalon,
    /// FWHM of the unfiltered down-converted spectrum.
    pub raw_linewidth_ghz: f64,
    /// Half-width of the window used to characterize the source cascade.
    #[serde(default = "default_cascade_window")]
    pub cascade_window_ghz: f64,
}

fn default_cascade_window() -> f64 {
    150.0
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub range_ghz: f64,
    pub step_ghz: f64,
    /// Monte Carlo replicas used for counting-noise error bars.
    pub replicas: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            range_ghz: 4.0,
            step_ghz: 0.05,
            replicas: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TargetErrors {
    pub err0: f64,
    pub err1: f64,
}

/// Either explicit visibilities or error rates to fit them to.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum ImperfectionSetting {
    Fit {
        fit_error_rates: TargetErrors,
        #[serde(default)]
        dark_rate: f64,
        #[serde(default = "one")]
        heralding_efficiency: f64,
    },
    Explicit(ImperfectionModel),
}

fn one() -> f64 {
    1.0
}

fn default_floor() -> f64 {
    1e-12
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DeviceConfig {
    pub eoms: Vec<EomConfig>,
    pub beamsplitters: BeamsplitterConfig,
    pub attenuator_t: AttenuatorSetting,
    pub etalons: EtalonConfig,
    pub imperfections: ImperfectionSetting,
    pub photon_rate_hz: f64,
    pub bin_duration_s: f64,
    pub seed: u64,
    #[serde(default)]
    pub scan: ScanConfig,
    /// Weak traces below this magnitude are flagged as vanishing.
    #[serde(default = "default_floor")]
    pub trace_floor: f64,
}

impl DeviceConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: DeviceConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn reference() -> Self {
        Self::from_json(REFERENCE_DEVICE_JSON).expect("shipped reference-device.json is valid")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn eom(&self, label: EomLabel) -> Option<&EomConfig> {
        self.eoms.iter().find(|e| e.label == label)
    }

    pub fn freq_ghz(&self, label: EomLabel) -> f64 {
        self.eom(label).map(|e| e.freq_ghz).unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let mut labels = BTreeSet::new();
        for e in &self.eoms {
            if !labels.insert(e.label) {
                return Err(Error::Config(format!("duplicate EOM label {}", e.label)));
            }
            if !(0.0..=MAX_ALPHA).contains(&e.alpha) {
                return Err(Error::Config(format!("EOM {} alpha {} outside [0, {MAX_ALPHA}]", e.label, e.alpha)));
            }
            if !(e.freq_ghz.is_finite() && e.freq_ghz > 0.0) {
                return Err(Error::Config(format!("EOM {} frequency must be positive", e.label)));
            }
        }
        for bs in [self.beamsplitters.outer_reflectivity, self.beamsplitters.inner_reflectivity] {
            if !(0.0..=1.0).contains(&bs) {
                return Err(Error::Config(format!("beamsplitter reflectivity {bs} outside [0, 1]")));
            }
        }
        if let AttenuatorSetting::Fixed(t) = self.attenuator_t {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Config(format!("attenuator_t {t} outside [0, 1]")));
            }
        }
        for e in self.etalons.source.iter().chain(std::iter::once(&self.etalons.scan)) {
            e.validate()?;
        }
        if self.etalons.source.is_empty() {
            return Err(Error::Config("at least one source etalon is required".into()));
        }
        // Every sideband line must be resolvable from the carrier and from
        // every other line by the scanning etalon.
        let lw = self.etalons.scan.linewidth_ghz;
        let mut lines: Vec<f64> = vec![0.0];
        for e in &self.eoms {
            lines.push(e.freq_ghz);
            lines.push(-e.freq_ghz);
        }
        let fsr = self.etalons.scan.fsr_ghz;
        for (i, a) in lines.iter().enumerate() {
            for b in &lines[i + 1..] {
                // distance modulo the scan etalon's free spectral range
                let d = (a - b).rem_euclid(fsr);
                if d.min(fsr - d) <= lw {
                    return Err(Error::Config(format!(
                        "lines at {a} and {b} GHz are closer than the scan linewidth {lw} GHz"
                    )));
                }
            }
        }
        let s = self.scan;
        if !(s.step_ghz > 0.0 && s.range_ghz > 0.0 && s.replicas > 0) {
            return Err(Error::Config("scan range, step and replicas must be positive".into()));
        }
        if !(self.photon_rate_hz > 0.0 && self.bin_duration_s > 0.0) {
            return Err(Error::Config("photon_rate_hz and bin_duration_s must be positive".into()));
        }
        if !(self.trace_floor >= 0.0) {
            return Err(Error::Config("trace_floor must be non-negative".into()));
        }
        match self.imperfections {
            ImperfectionSetting::Explicit(m) => m.validate()?,
            ImperfectionSetting::Fit { fit_error_rates: t, dark_rate, heralding_efficiency } => {
                for v in [t.err0, t.err1] {
                    if !(0.0..0.5).contains(&v) {
                        return Err(Error::Config(format!("target error rate {v} outside [0, 0.5)")));
                    }
                }
                ImperfectionModel { v_inner: 1.0, v_outer: 1.0, dark_rate, heralding_efficiency }.validate()?;
            }
        }
        Ok(())
    }

    /// Visibilities and noise, fitting them if the config gives error rates.
    pub fn imperfection_model(&self) -> Result<ImperfectionModel> {
        match self.imperfections {
            ImperfectionSetting::Explicit(m) => Ok(m),
            ImperfectionSetting::Fit { fit_error_rates: t, dark_rate, heralding_efficiency } => {
                let fitted = fit_model(self, t.err0, t.err1)?.into_result()?;
                Ok(ImperfectionModel { dark_rate, heralding_efficiency, ..fitted })
            }
        }
    }

    pub fn schedule(&self, policy: Policy) -> BinSchedule {
        BinSchedule {
            bin_duration_s: self.bin_duration_s,
            photon_rate_hz: self.photon_rate_hz,
            policy,
        }
    }
}
