//! Etalon filters, detected sideband spectra with counting noise, and peak
//! extraction.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, POSTSELECTION_FLOOR};
use crate::error::{Error, Result};
use crate::optics::{EomLabel, Element};
use crate::rng::{substream2, Domain};

/// Fabry-Perot etalon with Airy transmission.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Etalon {
    pub fsr_ghz: f64,
    /// Full width at half maximum of one transmission peak.
    pub linewidth_ghz: f64,
    #[serde(default)]
    pub center_offset_ghz: f64,
}

impl Etalon {
    pub fn new(fsr_ghz: f64, linewidth_ghz: f64) -> Self {
        Etalon { fsr_ghz, linewidth_ghz, center_offset_ghz: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.linewidth_ghz > 0.0
            && self.fsr_ghz > self.linewidth_ghz
            && self.fsr_ghz.is_finite()
            && self.center_offset_ghz.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "etalon needs fsr > linewidth > 0 (fsr {}, linewidth {})",
                self.fsr_ghz, self.linewidth_ghz
            )))
        }
    }

    pub fn finesse(&self) -> f64 {
        self.fsr_ghz / self.linewidth_ghz
    }

    /// `T(δ) = 1 / (1 + (2F/π)² sin²(π(δ − offset)/FSR))`.
    pub fn transmission(&self, detuning_ghz: f64) -> f64 {
        let k = 2.0 * self.finesse() / std::f64::consts::PI;
        let s = (std::f64::consts::PI * (detuning_ghz - self.center_offset_ghz) / self.fsr_ghz).sin();
        1.0 / (1.0 + k * k * s * s)
    }
}

/// What the source-preparation cascade does to a broadband photon.
#[derive(Debug, Clone, Serialize)]
pub struct CascadeReport {
    /// FWHM of the central transmitted line.
    pub effective_linewidth_ghz: f64,
    /// Suppression of the side peak nearest the central line, in dB.
    pub sidepeak_suppression_db: f64,
    pub nearest_sidepeak_ghz: Option<f64>,
    /// Suppression of the strongest side peak anywhere in the window.
    pub worst_sidepeak_suppression_db: f64,
    pub worst_sidepeak_ghz: Option<f64>,
    /// Share of the transmitted broadband power that lies in the central line.
    pub central_power_fraction: f64,
    pub window_ghz: f64,
}

/// Combined transmission of the etalons, a Lorentzian raw spectrum of FWHM
/// `raw_linewidth_ghz` as the input, over `±window_ghz`.
pub fn source_filter_cascade(etalons: &[Etalon], raw_linewidth_ghz: f64, window_ghz: f64) -> Result<CascadeReport> {
    if etalons.is_empty() {
        return Err(Error::Config("the source cascade needs at least one etalon".into()));
    }
    for e in etalons {
        e.validate()?;
    }
    if !(raw_linewidth_ghz > 0.0 && window_ghz > 0.0) {
        return Err(Error::Config("raw linewidth and window must be positive".into()));
    }
    let filter = |d: f64| etalons.iter().map(|e| e.transmission(d)).product::<f64>();
    let raw = |d: f64| {
        let x = 2.0 * d / raw_linewidth_ghz;
        1.0 / (1.0 + x * x)
    };

    let narrowest = etalons.iter().map(|e| e.linewidth_ghz).fold(f64::INFINITY, f64::min);
    let peak = filter(0.0);

    // Half maximum of the central line, walking out until it is crossed.
    let half_width = {
        let mut hi = narrowest / 4.0;
        while filter(hi) > peak / 2.0 && hi < window_ghz {
            hi *= 1.5;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if filter(mid) > peak / 2.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };

    let step = narrowest / 40.0;
    let n = (window_ghz / step).ceil() as usize;
    let grid: Vec<f64> = (0..=n).map(|i| i as f64 * step).collect();
    let values: Vec<f64> = grid.iter().map(|&d| filter(d).max(filter(-d))).collect();

    // Local maxima outside the central line, refined off the grid.
    let folded = |d: f64| filter(d).max(filter(-d));
    let mut side: Vec<(f64, f64)> = Vec::new();
    for i in 1..n {
        if grid[i] > 2.0 * half_width && values[i] >= values[i - 1] && values[i] > values[i + 1] {
            let (mut a, mut b) = (grid[i - 1], grid[i + 1]);
            for _ in 0..100 {
                let m1 = a + (b - a) / 3.0;
                let m2 = b - (b - a) / 3.0;
                if folded(m1) < folded(m2) {
                    a = m1;
                } else {
                    b = m2;
                }
            }
            let d = 0.5 * (a + b);
            side.push((d, folded(d)));
        }
    }
    let db = |v: f64| -10.0 * (v / peak).log10();
    let nearest = side.first().copied();
    let worst = side.iter().copied().max_by(|a, b| a.1.total_cmp(&b.1));

    let (mut central, mut total) = (0.0, 0.0);
    for i in 0..=n {
        let d = grid[i];
        let w = if i == 0 { 1.0 } else { 2.0 };
        let p = raw(d) * (filter(d) + filter(-d)) / 2.0 * w;
        total += p;
        if d <= 3.0 * half_width {
            central += p;
        }
    }

    Ok(CascadeReport {
        effective_linewidth_ghz: 2.0 * half_width,
        sidepeak_suppression_db: nearest.map_or(f64::INFINITY, |s| db(s.1)),
        nearest_sidepeak_ghz: nearest.map(|s| s.0),
        worst_sidepeak_suppression_db: worst.map_or(f64::INFINITY, |s| db(s.1)),
        worst_sidepeak_ghz: worst.map(|s| s.0),
        central_power_fraction: central / total,
        window_ghz,
    })
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct SpectrumPoint {
    pub detuning_ghz: f64,
    pub intensity: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Spectrum {
    pub points: Vec<SpectrumPoint>,
    pub detector: String,
    pub tuning: String,
    pub photons: f64,
    pub scan: Etalon,
    pub noise: bool,
    pub warnings: Vec<String>,
}

impl Spectrum {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "detuning_ghz,intensity,stderr")?;
        for p in &self.points {
            writeln!(w, "{},{},{}", p.detuning_ghz, p.intensity, p.stderr)?;
        }
        Ok(())
    }

    pub fn range(&self) -> (f64, f64) {
        match (self.points.first(), self.points.last()) {
            (Some(a), Some(b)) => (a.detuning_ghz, b.detuning_ghz),
            _ => (0.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOptions {
    pub range_ghz: f64,
    pub step_ghz: f64,
    /// Scale of the spectrum: the carrier line peaks at this many counts.
    pub photons: f64,
    pub noise: bool,
    pub replicas: usize,
    pub dark_counts_per_point: f64,
    pub seed: u64,
}

/// Modulation frequency of every label present in the circuit.
pub fn circuit_frequencies(c: &Circuit) -> BTreeMap<EomLabel, f64> {
    c.elements
        .iter()
        .filter_map(|e| match e {
            Element::Eom { instance, freq_ghz, .. } => Some((instance.label, *freq_ghz)),
            _ => None,
        })
        .collect()
}

/// Detected line weights per detuning, per carrier-detected photon.
fn line_weights(c: &Circuit, detector: &str) -> Result<Vec<(f64, f64)>> {
    let mode = c.detector_mode(detector)?.clone();
    let out = c.propagate()?;
    let post = out.carrier(&mode).norm_sqr();
    if post.sqrt() <= POSTSELECTION_FLOOR {
        return Err(Error::UndefinedPostselection { detector: detector.to_string() });
    }
    let freqs = circuit_frequencies(c);
    let mut lines: Vec<(f64, f64)> = out
        .amplitudes()
        .filter(|(m, _, _)| **m == mode)
        .map(|(_, t, a)| (t.detuning_ghz(|l| freqs.get(&l).copied().unwrap_or(0.0)), a.norm_sqr() / post))
        .collect();
    lines.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(lines)
}

/// Expected (and optionally Poisson-sampled) counts behind the scanning
/// etalon at each detuning. With noise on, `intensity` is one sampled
/// record and `stderr` the spread over `replicas` further records.
pub fn scan_spectrum(c: &Circuit, detector: &str, scan: &Etalon, tuning: &str, opts: &ScanOptions) -> Result<Spectrum> {
    scan.validate()?;
    if !(opts.photons > 0.0 && opts.photons.is_finite()) {
        return Err(Error::Config("photon number must be positive".into()));
    }
    if !(opts.step_ghz > 0.0 && opts.step_ghz <= scan.linewidth_ghz / 2.0) {
        return Err(Error::Config(format!(
            "scan step {} GHz does not resolve the {} GHz etalon line",
            opts.step_ghz, scan.linewidth_ghz
        )));
    }
    if !(opts.range_ghz > 0.0) || (opts.noise && opts.replicas == 0) {
        return Err(Error::Config("scan range and replica count must be positive".into()));
    }
    let lines = line_weights(c, detector)?;

    let mut warnings = Vec::new();
    let max_freq = circuit_frequencies(c).values().copied().fold(0.0, f64::max);
    if opts.range_ghz < max_freq {
        let msg = format!(
            "scan range ±{} GHz is narrower than the highest modulation frequency {max_freq} GHz; some peaks fall outside",
            opts.range_ghz
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }

    let n = (2.0 * opts.range_ghz / opts.step_ghz).round() as usize;
    let detunings: Vec<f64> = (0..=n).map(|i| -opts.range_ghz + i as f64 * opts.step_ghz).collect();
    let expected: Vec<f64> = detunings
        .iter()
        .map(|&d| {
            opts.dark_counts_per_point
                + opts.photons * lines.iter().map(|(pos, w)| w * scan.transmission(d - pos)).sum::<f64>()
        })
        .collect();

    let points = if opts.noise {
        let draw = |replica: usize, i: usize| -> f64 {
            let lambda = expected[i];
            if lambda <= 0.0 {
                return 0.0;
            }
            let mut rng = substream2(opts.seed, Domain::ScanPoint, replica as u64, i as u64);
            Poisson::new(lambda).map(|p| p.sample(&mut rng)).unwrap_or(lambda)
        };
        (0..detunings.len())
            .into_par_iter()
            .map(|i| {
                let measured = draw(0, i);
                let reps: Vec<f64> = (1..=opts.replicas).map(|r| draw(r, i)).collect();
                let mean = reps.iter().sum::<f64>() / reps.len() as f64;
                let var = reps.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps.len().max(2) - 1) as f64;
                SpectrumPoint { detuning_ghz: detunings[i], intensity: measured, stderr: var.sqrt() }
            })
            .collect()
    } else {
        detunings
            .iter()
            .zip(&expected)
            .map(|(&d, &e)| SpectrumPoint { detuning_ghz: d, intensity: e, stderr: 0.0 })
            .collect()
    };

    Ok(Spectrum {
        points,
        detector: detector.to_string(),
        tuning: tuning.to_string(),
        photons: opts.photons,
        scan: *scan,
        noise: opts.noise,
        warnings,
    })
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct PeakEntry {
    pub freq_ghz: f64,
    pub present: bool,
    /// Mean of the fitted `+Ω` and `−Ω` line heights.
    pub height: f64,
    pub height_plus: f64,
    pub height_minus: f64,
    /// Counting-noise scale of the background under the peak.
    pub baseline_stderr: f64,
    pub height_over_calibration: Option<f64>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct PeakTable {
    pub detector: String,
    pub tuning: String,
    pub carrier_height: f64,
    pub peaks: BTreeMap<EomLabel, PeakEntry>,
}

/// A peak counts as present when it exceeds this many baseline stderrs.
pub const PRESENCE_SIGMAS: f64 = 5.0;

impl PeakTable {
    pub fn present(&self) -> Vec<EomLabel> {
        self.peaks.iter().filter(|(_, p)| p.present).map(|(l, _)| *l).collect()
    }

    pub fn height(&self, label: EomLabel) -> Option<f64> {
        self.peaks.get(&label).map(|p| p.height)
    }

    /// Fills `height_over_calibration` from a calibration table.
    pub fn with_calibration(mut self, calibration: Option<&PeakTable>) -> Result<Self> {
        let cal = calibration.ok_or_else(|| Error::Config("peak ratios need a calibration table".into()))?;
        for (label, entry) in self.peaks.iter_mut() {
            let reference = cal
                .peaks
                .get(label)
                .ok_or_else(|| Error::Config(format!("calibration table has no {label} peak")))?;
            entry.height_over_calibration = (reference.height != 0.0).then(|| entry.height / reference.height);
        }
        Ok(self)
    }
}

/// Fits every line (carrier, `±Ω` per label, flat background) with the scan
/// etalon's Airy profile and reports one entry per label.
pub fn extract_peaks(s: &Spectrum, labels: &[(EomLabel, f64)]) -> Result<PeakTable> {
    let (lo, hi) = s.range();
    for (label, f) in labels {
        if *f < lo || *f > hi || -*f < lo {
            return Err(Error::Config(format!("spectrum does not cover the {label} lines at ±{f} GHz")));
        }
    }
    let mut centers = vec![0.0];
    for (_, f) in labels {
        centers.push(*f);
        centers.push(-*f);
    }
    let rows = s.points.len();
    let cols = centers.len() + 1;
    let basis = DMatrix::from_fn(rows, cols, |i, j| {
        if j == cols - 1 {
            1.0
        } else {
            s.scan.transmission(s.points[i].detuning_ghz - centers[j])
        }
    });
    let y = DVector::from_iterator(rows, s.points.iter().map(|p| p.intensity));
    let fit = basis
        .clone()
        .svd(true, true)
        .solve(&y, 1e-14)
        .map_err(|e| Error::Config(format!("peak fit failed: {e}")))?;

    // Model value at `d` without the lines of label index `skip`.
    let background = |d: f64, skip: usize| -> f64 {
        let mut v = fit[cols - 1];
        for (j, c) in centers.iter().enumerate() {
            if j != 2 * skip + 1 && j != 2 * skip + 2 {
                v += fit[j] * s.scan.transmission(d - c);
            }
        }
        v.max(0.0)
    };

    let mut peaks = BTreeMap::new();
    for (k, (label, f)) in labels.iter().enumerate() {
        let plus = fit[2 * k + 1];
        let minus = fit[2 * k + 2];
        let height = 0.5 * (plus + minus);
        let base = 0.5 * (background(*f, k) + background(-*f, k));
        // At least one count of spread so noise-free zeros never pass.
        let stderr = base.max(1.0).sqrt();
        peaks.insert(
            *label,
            PeakEntry {
                freq_ghz: *f,
                present: height > PRESENCE_SIGMAS * stderr,
                height,
                height_plus: plus,
                height_minus: minus,
                baseline_stderr: stderr,
                height_over_calibration: None,
            },
        );
    }
    Ok(PeakTable {
        detector: s.detector.clone(),
        tuning: s.tuning.clone(),
        carrier_height: fit[0],
        peaks,
    })
}
