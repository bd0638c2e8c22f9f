mod common;

use std::f64::consts::PI;

use cfcomm::circuit::{build_unfolded, modes, predicted_sideband_prob, weak_trace, Preset, Tuning};
use cfcomm::cli::{scan_options, spectrum};
use cfcomm::config::DeviceConfig;
use cfcomm::optics::EomLabel;
use cfcomm::spectral::{extract_peaks, scan_spectrum, source_filter_cascade, Etalon, ScanOptions};
use common::close;

const LABELS: [EomLabel; 5] = [EomLabel::A, EomLabel::B, EomLabel::C, EomLabel::E, EomLabel::F];

fn opts(cfg: &DeviceConfig, photons: f64, noise: bool) -> ScanOptions {
    scan_options(cfg, photons, noise, cfg.seed)
}

#[test]
fn airy_profile_by_formula() {
    let e = Etalon::new(22.0, 0.315);
    let finesse = 22.0 / 0.315;
    let coeff = (2.0 * finesse / PI).powi(2);
    for d in [0.0, 0.1, 0.1575, 1.0, 5.5, 11.0, 21.9, 22.0, 44.3, -3.0] {
        let want = 1.0 / (1.0 + coeff * (PI * d / 22.0).sin().powi(2));
        assert!(close(e.transmission(d), want, 1e-14), "T({d})");
    }
    assert!(close(e.finesse(), finesse, 1e-12));
}

#[test]
fn bad_etalons_are_rejected() {
    assert!(Etalon::new(10.0, 0.0).validate().is_err());
    assert!(Etalon::new(10.0, 12.0).validate().is_err());
    assert!(source_filter_cascade(&[], 200.0, 150.0).is_err());
}

#[test]
fn noiseless_spectrum_is_linear_in_photons() {
    let cfg = DeviceConfig::reference();
    let c = build_unfolded(&cfg, Tuning::preset(Preset::Calibration)).unwrap();
    let a = scan_spectrum(&c, modes::D0, &cfg.etalons.scan, "calibration", &opts(&cfg, 1e4, false)).unwrap();
    let b = scan_spectrum(&c, modes::D0, &cfg.etalons.scan, "calibration", &opts(&cfg, 3e4, false)).unwrap();
    for (p, q) in a.points.iter().zip(&b.points) {
        assert!(close(3.0 * p.intensity, q.intensity, 1e-9 * q.intensity.max(1.0)));
        assert_eq!(p.stderr, 0.0);
    }
    // the carrier peaks at N
    let top = a.points.iter().map(|p| p.intensity).fold(0.0, f64::max);
    assert!(close(top, 1e4, 1e-6 * 1e4 + 1.0), "carrier {top}");
}

#[test]
fn counting_noise_is_poissonian() {
    let cfg = DeviceConfig::reference();
    let c = build_unfolded(&cfg, Tuning::preset(Preset::Calibration)).unwrap();
    let quiet = scan_spectrum(&c, modes::D0, &cfg.etalons.scan, "calibration", &opts(&cfg, 1e6, false)).unwrap();
    let noisy = scan_spectrum(&c, modes::D0, &cfg.etalons.scan, "calibration", &opts(&cfg, 1e6, true)).unwrap();
    // stderr / √λ averages to one over points with real counts
    let ratios: Vec<f64> = quiet
        .points
        .iter()
        .zip(&noisy.points)
        .filter(|(q, _)| q.intensity > 100.0)
        .map(|(q, n)| n.stderr / q.intensity.sqrt())
        .collect();
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    assert!(ratios.len() > 20);
    assert!(close(mean, 1.0, 0.05), "mean stderr/√λ = {mean}");
    // intensities are integers scattered about the expectation
    for (q, n) in quiet.points.iter().zip(&noisy.points) {
        assert_eq!(n.intensity.fract(), 0.0);
        assert!((n.intensity - q.intensity).abs() < 7.0 * q.intensity.sqrt().max(1.0));
    }
}

#[test]
fn carrier_dominates_every_tuning() {
    let cfg = DeviceConfig::reference();
    for (p, det) in [(Preset::Calibration, modes::D0), (Preset::Bit0, modes::D0), (Preset::Bit1, modes::D1)] {
        let (_, t) = spectrum(&cfg, p, det, &opts(&cfg, 1e6, false)).unwrap();
        for l in LABELS {
            assert!(t.carrier_height > 5.0 * t.height(l).unwrap(), "{p} {l}");
        }
    }
}

#[test]
fn presence_patterns() {
    let cfg = DeviceConfig::reference();
    for noise in [false, true] {
        let o = opts(&cfg, 1e6, noise);
        let (_, cal) = spectrum(&cfg, Preset::Calibration, modes::D0, &o).unwrap();
        assert_eq!(cal.present(), LABELS.to_vec(), "noise {noise}");
        let (_, b0) = spectrum(&cfg, Preset::Bit0, modes::D0, &o).unwrap();
        assert_eq!(b0.present(), vec![EomLabel::C], "noise {noise}");
        let (_, b1) = spectrum(&cfg, Preset::Bit1, modes::D1, &o).unwrap();
        assert_eq!(b1.present(), vec![EomLabel::B, EomLabel::E, EomLabel::F], "noise {noise}");
    }
}

#[test]
fn channel_peak_hides_in_the_noise() {
    let cfg = DeviceConfig::reference();
    for seed in 0..5 {
        let (_, t) = spectrum(&cfg, Preset::Bit1, modes::D1, &scan_options(&cfg, 1e6, true, seed)).unwrap();
        let a = &t.peaks[&EomLabel::A];
        assert!(a.height <= 5.0 * a.baseline_stderr, "seed {seed}: {a:?}");
    }
}

#[test]
fn peaks_equal_trace_predictions() {
    let cfg = DeviceConfig::reference();
    let labels: Vec<_> = cfg.eoms.iter().map(|e| (e.label, e.freq_ghz)).collect();
    for (p, det) in [(Preset::Calibration, modes::D0), (Preset::Bit0, modes::D0), (Preset::Bit1, modes::D1)] {
        let c = build_unfolded(&cfg, Tuning::preset(p)).unwrap();
        let report = weak_trace(&c, det).unwrap();
        let s = scan_spectrum(&c, det, &cfg.etalons.scan, "x", &opts(&cfg, 1.0, false)).unwrap();
        let t = extract_peaks(&s, &labels).unwrap();
        for l in LABELS {
            let want = predicted_sideband_prob(&c, &report, l) / report.postselection_probability;
            let got = t.peaks[&l].height_plus / t.carrier_height;
            assert!((got - want).abs() <= 1e-9 * want.max(1e-3), "{p} {l}: {got} vs {want}");
        }
    }
}

#[test]
fn scan_guards() {
    let cfg = DeviceConfig::reference();
    let c = build_unfolded(&cfg, Tuning::preset(Preset::Calibration)).unwrap();
    let coarse = ScanOptions { step_ghz: 0.2, ..opts(&cfg, 1e6, false) };
    assert!(scan_spectrum(&c, modes::D0, &cfg.etalons.scan, "c", &coarse).is_err());
    let narrow = ScanOptions { range_ghz: 3.0, ..opts(&cfg, 1e6, false) };
    let s = scan_spectrum(&c, modes::D0, &cfg.etalons.scan, "c", &narrow).unwrap();
    assert_eq!(s.warnings.len(), 1);
    let labels: Vec<_> = cfg.eoms.iter().map(|e| (e.label, e.freq_ghz)).collect();
    assert!(extract_peaks(&s, &labels).is_err());

    let full = scan_spectrum(&c, modes::D0, &cfg.etalons.scan, "c", &opts(&cfg, 1e6, false)).unwrap();
    assert!(extract_peaks(&full, &labels).unwrap().with_calibration(None).is_err());
}
