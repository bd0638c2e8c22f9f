use std::collections::BTreeMap;

use num_complex::Complex64;

use super::modes::*;
use super::tuning::tune;
use super::{Circuit, Tuning, TuningSlots};
use crate::config::{AttenuatorSetting, DeviceConfig};
use crate::error::Result;
use crate::optics::{EomInstance, EomLabel, Element, ModeId};

/// The optical parameters that fix the circuit's element list.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceOptics {
    /// Modulation frequency (GHz) and depth per label; absent labels have
    /// no modulator.
    pub eoms: BTreeMap<EomLabel, (f64, f64)>,
    pub outer_reflectivity: f64,
    pub inner_reflectivity: f64,
    pub attenuator: AttenuatorSetting,
}

impl DeviceOptics {
    pub fn from_config(cfg: &DeviceConfig) -> Self {
        DeviceOptics {
            eoms: cfg.eoms.iter().map(|e| (e.label, (e.freq_ghz, e.alpha))).collect(),
            outer_reflectivity: cfg.beamsplitters.outer_reflectivity,
            inner_reflectivity: cfg.beamsplitters.inner_reflectivity,
            attenuator: cfg.attenuator_t,
        }
    }

    pub fn without_eoms(mut self) -> Self {
        self.eoms.clear();
        self
    }
}

fn m(s: &str) -> ModeId {
    ModeId::new(s)
}

struct Builder<'a> {
    optics: &'a DeviceOptics,
    elements: Vec<Element>,
    slots: TuningSlots,
}

impl Builder<'_> {
    fn push(&mut self, e: Element) -> usize {
        self.elements.push(e);
        self.elements.len() - 1
    }

    fn bs(&mut self, in1: &str, in2: &str, out1: &str, out2: &str, reflectivity: f64) {
        self.push(Element::Beamsplitter {
            inputs: [m(in1), m(in2)],
            outputs: [m(out1), m(out2)],
            reflectivity,
        });
    }

    fn eom(&mut self, mode: &str, label: EomLabel, pass: u8) {
        if let Some(&(freq_ghz, alpha)) = self.optics.eoms.get(&label) {
            self.push(Element::Eom {
                mode: m(mode),
                instance: EomInstance { label, pass },
                freq_ghz,
                alpha,
            });
        }
    }

    fn phase(&mut self, mode: &str) -> usize {
        self.push(Element::PhaseShift { mode: m(mode), radians: 0.0 })
    }
}

/// Untuned unfolded circuit: phases zero, attenuator fully open.
///
/// ```text
/// SRC ─BS0─┬─ C: attenuator, phase, EOM-C ───────────────────────────┐
///          └─ IN: EOM-E ─BS1a─ A1/B1 ─BS1b─ M1: F ▸ mirror ▸ M2: F   │
///                                      └ ESC1   ─BS2a─ A2/B2 ─BS2b─ OUT ─BS3─ D0 / ESC0
///                                                              └ D1
/// ```
pub fn unfolded_skeleton(optics: &DeviceOptics, blocked: bool) -> Result<Circuit> {
    let mut b = Builder {
        optics,
        elements: Vec::new(),
        slots: TuningSlots::default(),
    };
    let ro = optics.outer_reflectivity;
    let ri = optics.inner_reflectivity;

    b.bs(SRC, V0, IN, C, ro);

    let att = b.push(Element::Attenuator { mode: m(C), transmission: 1.0, loss: m(LOSS_C) });
    b.slots.attenuator = Some(att);
    b.slots.outer = Some(b.phase(C));
    b.eom(C, EomLabel::C, 1);

    b.eom(IN, EomLabel::E, 1);
    b.bs(IN, V1, A1, B1, ri);
    if blocked {
        b.push(Element::Block { mode: m(A1), loss: m(LOSS_A1) });
    }
    b.eom(A1, EomLabel::A, 1);
    let p1 = b.phase(B1);
    b.slots.inner.push(p1);
    b.eom(B1, EomLabel::B, 1);
    b.bs(A1, B1, M1, ESC1, ri);

    b.eom(M1, EomLabel::F, 1);
    b.push(Element::Mirror { input: m(M1), output: m(M2) });
    b.eom(M2, EomLabel::F, 2);

    b.bs(M2, V2, A2, B2, ri);
    if blocked {
        b.push(Element::Block { mode: m(A2), loss: m(LOSS_A2) });
    }
    b.eom(A2, EomLabel::A, 2);
    let p2 = b.phase(B2);
    b.slots.inner.push(p2);
    b.eom(B2, EomLabel::B, 2);
    b.bs(A2, B2, OUT, D1, ri);

    b.bs(OUT, C, ESC0, D0, ro);
    b.push(Element::Detector { mode: m(D0), name: D0.into() });
    b.push(Element::Detector { mode: m(D1), name: D1.into() });

    let mut losses = vec![m(ESC0), m(ESC1), m(LOSS_C)];
    if blocked {
        losses.extend([m(LOSS_A1), m(LOSS_A2)]);
    }
    let zero = Complex64::new(0.0, 0.0);
    Circuit::new(
        b.elements,
        vec![(m(SRC), Complex64::new(1.0, 0.0)), (m(V0), zero), (m(V1), zero), (m(V2), zero)],
        vec![(D0.into(), m(D0)), (D1.into(), m(D1))],
        losses,
        b.slots,
    )
}

/// The tuned unfolded circuit for `tuning`.
pub fn build_unfolded(cfg: &DeviceConfig, tuning: Tuning) -> Result<Circuit> {
    build_from_optics(&DeviceOptics::from_config(cfg), tuning)
}

pub fn build_from_optics(optics: &DeviceOptics, tuning: Tuning) -> Result<Circuit> {
    tune(&|blocked| unfolded_skeleton(optics, blocked), optics.attenuator, tuning)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::Preset;
    use crate::optics::apply_element;

    fn reference() -> DeviceConfig {
        DeviceConfig::reference()
    }

    #[test]
    fn bit0_cancels_the_mirror_path() {
        let c = build_unfolded(&reference(), Tuning::preset(Preset::Bit0)).unwrap();
        assert!(c.carrier_after_creation(&m(M1)).unwrap().norm() < 1e-12);
        assert!(c.carrier_after_creation(&m(ESC1)).unwrap().norm() > 0.5);
    }

    #[test]
    fn bit1_nulls_d0_with_balanced_attenuator() {
        let c = build_unfolded(&reference(), Tuning::preset(Preset::Bit1)).unwrap();
        let out = c.propagate().unwrap();
        assert!(out.carrier(&m(D0)).norm() < 1e-12);
        assert!((c.attenuator_t().unwrap() - 0.25).abs() < 1e-10);
    }

    #[test]
    fn calibration_puts_every_label_on_a_path_to_d0() {
        let c = build_unfolded(&reference(), Tuning::preset(Preset::Calibration)).unwrap();
        let tsv = crate::circuit::two_state_vector(&c, D0).unwrap();
        for label in EomLabel::ALL {
            let reached = c.elements.iter().enumerate().any(|(k, e)| match e {
                Element::Eom { mode, instance, .. } if instance.label == label => {
                    tsv.forward[k].carrier(mode).norm() > 1e-6 && tsv.backward[k].carrier(mode).norm() > 1e-6
                }
                _ => false,
            });
            assert!(reached, "label {label} not on a source-to-D0 path");
        }
    }

    #[test]
    fn bit0_without_eoms_matches_transfer_matrix() {
        let optics = DeviceOptics::from_config(&reference()).without_eoms();
        let c = build_from_optics(&optics, Tuning::preset(Preset::Bit0)).unwrap();
        let p = c.detection_probs().unwrap();
        assert!((p.d0 - 1.0 / 64.0).abs() < 1e-12);
        assert!(p.d1.abs() < 1e-12);
        assert!((p.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inconsistent_tuning_is_rejected() {
        let mut t = Tuning::preset(Preset::Bit0);
        t.blocked = true;
        assert!(matches!(build_unfolded(&reference(), t), Err(crate::Error::Config(_))));
    }

    #[test]
    fn block_is_followed_by_nothing_on_its_mode() {
        let c = build_unfolded(&reference(), Tuning::preset(Preset::Bit1)).unwrap();
        let mut s = c.source_state();
        let mut after_block = false;
        for e in &c.elements {
            s = apply_element(&s, e).unwrap();
            if matches!(e, Element::Block { mode, .. } if mode.as_str() == A1) {
                after_block = true;
            }
            if after_block && s.is_live(&m(A1)) {
                assert_eq!(s.mode_prob(&m(A1)), 0.0);
            }
        }
    }
}
