//! Forward/backward state pairs and first-order weak traces.
//!
//! The backward state starts as a unit carrier on the postselected
//! detector and runs through each element's adjoint in reverse order. The
//! trace on an arm is `|⟨φ|Π_arm|ψ⟩| / |⟨φ|ψ⟩|`: it vanishes wherever the
//! two states do not overlap, even if each one is non-zero there.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::Serialize;

use super::Circuit;
use crate::error::{Error, Result};
use crate::optics::{apply_adjoint, EomInstance, EomLabel, Element, Expansion, ModeId, PhotonState, SidebandTag};

/// Postselection amplitudes at or below this are treated as exactly dark.
pub const POSTSELECTION_FLOOR: f64 = 1e-10;

/// Backward state at every cut, aligned with [`Circuit::forward_cuts`]:
/// `cuts[k]` sits just before element `k`.
pub fn backward_propagate(c: &Circuit, detector: &str) -> Result<Vec<PhotonState>> {
    let det = c.detector_mode(detector)?;
    let mut s = PhotonState::single(c.terminal_modes(), det, Complex64::new(1.0, 0.0));
    let mut cuts = vec![s.clone()];
    for e in c.elements.iter().rev() {
        s = apply_adjoint(&s, e)?;
        cuts.push(s.clone());
    }
    cuts.reverse();
    Ok(cuts)
}

#[derive(Debug, Clone)]
pub struct TwoStateVector {
    pub forward: Vec<PhotonState>,
    pub backward: Vec<PhotonState>,
    pub postselection: String,
}

impl TwoStateVector {
    pub fn cuts(&self) -> usize {
        self.forward.len()
    }

    /// `⟨φ|ψ⟩` at cut `k`.
    pub fn overlap(&self, k: usize) -> Complex64 {
        self.backward[k].inner(&self.forward[k])
    }

    /// Amplitude of the postselected detector in the forward pass.
    pub fn postselection_amplitude(&self) -> Complex64 {
        self.overlap(self.cuts() - 1)
    }

    /// `conj(φ(mode))·ψ(mode)` on the carrier at cut `k`.
    pub fn local_overlap(&self, k: usize, mode: &ModeId) -> Complex64 {
        self.backward[k].carrier(mode).conj() * self.forward[k].carrier(mode)
    }
}

pub fn two_state_vector(c: &Circuit, detector: &str) -> Result<TwoStateVector> {
    Ok(TwoStateVector {
        forward: c.forward_cuts(Expansion::FirstOrder)?,
        backward: backward_propagate(c, detector)?,
        postselection: detector.to_string(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct InstanceTrace {
    pub label: EomLabel,
    pub pass: u8,
    pub arm: ModeId,
    /// Normalized trace at the modulator.
    pub trace: f64,
    /// Unnormalized `|⟨φ|Π|ψ⟩|`; `α²` times its square is the sideband
    /// probability this pass contributes at the detector, per sign.
    pub numerator: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceReport {
    pub detector: String,
    pub postselection_probability: f64,
    pub arms: BTreeMap<ModeId, f64>,
    pub below_floor: BTreeMap<ModeId, bool>,
    pub instances: Vec<InstanceTrace>,
}

impl TraceReport {
    pub fn arm(&self, name: &str) -> Option<f64> {
        self.arms.get(&ModeId::new(name)).copied()
    }

    /// `Σ trace²` over every pass of `label` (incoherent across passes).
    pub fn label_weight(&self, label: EomLabel) -> f64 {
        self.instances
            .iter()
            .filter(|i| i.label == label)
            .map(|i| i.trace * i.trace)
            .sum()
    }

    /// `{arm: trace}` as a JSON object.
    pub fn arms_json(&self) -> serde_json::Value {
        serde_json::Value::Object(
            self.arms
                .iter()
                .map(|(k, v)| (k.to_string(), serde_json::json!(v)))
                .collect(),
        )
    }
}

/// First-order weak trace on every arm, normalized by the postselection
/// amplitude, with `below_floor` set for traces `≤ floor`.
pub fn weak_trace_with_floor(c: &Circuit, detector: &str, floor: f64) -> Result<TraceReport> {
    let tsv = two_state_vector(c, detector)?;
    let post = tsv.postselection_amplitude();
    if post.norm() <= POSTSELECTION_FLOOR {
        return Err(Error::UndefinedPostselection { detector: detector.to_string() });
    }

    // Each arm is evaluated at the first cut where it exists; the local
    // overlap is constant along an arm.
    let mut arms = BTreeMap::new();
    for arm in c.arms() {
        let k = (0..tsv.cuts())
            .find(|&k| tsv.forward[k].is_live(arm))
            .ok_or_else(|| Error::Topology(format!("arm {arm} never appears")))?;
        arms.insert(arm.clone(), tsv.local_overlap(k, arm).norm() / post.norm());
    }

    let mut instances = Vec::new();
    for (k, e) in c.elements.iter().enumerate() {
        if let Element::Eom { mode, instance: EomInstance { label, pass }, .. } = e {
            let numerator = tsv.local_overlap(k, mode).norm();
            instances.push(InstanceTrace {
                label: *label,
                pass: *pass,
                arm: mode.clone(),
                trace: numerator / post.norm(),
                numerator,
            });
        }
    }

    let below_floor = arms.iter().map(|(k, v)| (k.clone(), *v <= floor)).collect();
    Ok(TraceReport {
        detector: detector.to_string(),
        postselection_probability: post.norm_sqr(),
        arms,
        below_floor,
        instances,
    })
}

pub fn weak_trace(c: &Circuit, detector: &str) -> Result<TraceReport> {
    weak_trace_with_floor(c, detector, 1e-12)
}

/// Sideband probability of `label` at `detector` (one sign) predicted from
/// the trace numerators: `α² Σ_passes |⟨φ|Π|ψ⟩|²`.
pub fn predicted_sideband_prob(c: &Circuit, report: &TraceReport, label: EomLabel) -> f64 {
    report
        .instances
        .iter()
        .filter(|i| i.label == label)
        .map(|i| {
            let alpha = c
                .elements
                .iter()
                .find_map(|e| match e {
                    Element::Eom { instance, alpha, .. }
                        if instance.label == i.label && instance.pass == i.pass =>
                    {
                        Some(*alpha)
                    }
                    _ => None,
                })
                .unwrap_or(0.0);
            alpha * alpha * i.numerator * i.numerator
        })
        .sum()
}

/// Sideband probability of `label` (one sign) actually found on the
/// detector mode after forward propagation.
pub fn detected_sideband_prob(terminal: &PhotonState, mode: &ModeId, label: EomLabel) -> f64 {
    terminal
        .amplitudes()
        .filter(|(m, t, _)| *m == mode && is_plus(t, label))
        .map(|(_, _, a)| a.norm_sqr())
        .sum()
}

fn is_plus(t: &SidebandTag, label: EomLabel) -> bool {
    t.first_order()
        .is_some_and(|s| s.instance.label == label && s.harmonic == 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::modes::*;
    use crate::circuit::{build_unfolded, Preset, Tuning};
    use crate::config::DeviceConfig;

    fn circuit(p: Preset) -> Circuit {
        build_unfolded(&DeviceConfig::reference(), Tuning::preset(p)).unwrap()
    }

    #[test]
    fn bit0_forward_and_backward_do_not_overlap_in_the_channel() {
        let c = circuit(Preset::Bit0);
        let tsv = two_state_vector(&c, D0).unwrap();
        let at = |mode: &str| {
            let m = ModeId::new(mode);
            let k = (0..tsv.cuts()).find(|&k| tsv.forward[k].is_live(&m)).unwrap();
            (tsv.forward[k].carrier(&m).norm(), tsv.backward[k].carrier(&m).norm())
        };
        let (f_a1, b_a1) = at(A1);
        let (f_a2, b_a2) = at(A2);
        assert!(f_a1 > 0.1 && b_a1 < 1e-12);
        assert!(f_a2 < 1e-12 && b_a2 > 0.1);
    }

    #[test]
    fn bit1_backward_from_d1_reaches_the_mirror_side() {
        let c = circuit(Preset::Bit1);
        let tsv = two_state_vector(&c, D1).unwrap();
        for mode in [B2, M2, M1, B1, IN] {
            let m = ModeId::new(mode);
            let k = (0..tsv.cuts()).find(|&k| tsv.forward[k].is_live(&m)).unwrap();
            assert!(tsv.backward[k].carrier(&m).norm() > 0.1, "{mode}");
        }
    }

    #[test]
    fn overlap_is_cut_invariant() {
        for p in [Preset::Calibration, Preset::Bit0, Preset::Bit1] {
            let c = circuit(p);
            for det in [D0, D1] {
                let tsv = two_state_vector(&c, det).unwrap();
                let first = tsv.overlap(0);
                assert!(tsv.cuts() >= 10);
                for k in 0..tsv.cuts() {
                    assert!((tsv.overlap(k) - first).norm() < 1e-12, "{p} {det} cut {k}");
                }
                // reciprocity: backward at the source equals forward at the detector
                let src = ModeId::new(SRC);
                let fwd = c.propagate().unwrap().carrier(c.detector_mode(det).unwrap());
                assert!((tsv.backward[0].carrier(&src).conj() - fwd).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn trace_patterns() {
        let r = weak_trace(&circuit(Preset::Bit0), D0).unwrap();
        for arm in [A1, A2, B1, B2, IN, M1, M2] {
            assert!(r.arm(arm).unwrap() <= 1e-12, "bit0 {arm} {:?}", r.arm(arm));
        }
        assert!(r.arm(C).unwrap() > 0.1);

        let r = weak_trace(&circuit(Preset::Bit1), D1).unwrap();
        for arm in [A1, A2, C] {
            assert!(r.arm(arm).unwrap() <= 1e-12, "bit1 {arm}");
        }
        for arm in [IN, B1, B2, M1, M2] {
            assert!(r.arm(arm).unwrap() > 0.1, "bit1 {arm}");
        }

        let r = weak_trace(&circuit(Preset::Calibration), D0).unwrap();
        for (arm, v) in &r.arms {
            assert!(*v > 0.01, "calibration {arm} {v}");
        }
    }

    #[test]
    fn dark_detector_has_no_trace() {
        let r = weak_trace(&circuit(Preset::Bit0), D1);
        assert!(matches!(r, Err(Error::UndefinedPostselection { .. })));
        assert!(matches!(weak_trace(&circuit(Preset::Bit0), "D7"), Err(Error::UnknownDetector(_))));
    }

    #[test]
    fn sidebands_match_trace_numerators() {
        for (p, det) in [(Preset::Calibration, D0), (Preset::Bit0, D0), (Preset::Bit1, D1)] {
            let c = circuit(p);
            let r = weak_trace(&c, det).unwrap();
            let out = c.propagate().unwrap();
            let mode = c.detector_mode(det).unwrap();
            for label in EomLabel::ALL {
                let predicted = predicted_sideband_prob(&c, &r, label);
                let detected = detected_sideband_prob(&out, mode, label);
                let scale = predicted.abs().max(1e-30);
                assert!((predicted - detected).abs() <= 1e-9 * scale.max(detected), "{p} {label} {predicted} {detected}");
            }
        }
    }
}
