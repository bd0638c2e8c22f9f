//! The folded (Michelson-type) description of the device and its unrolling.
//!
//! Physically there is one inner interferometer, retraced after the end
//! mirror. Unrolling duplicates every double-traversed item into two
//! instances that share a label.

use std::collections::BTreeSet;

use num_complex::Complex64;

use super::modes::*;
use super::tuning::tune;
use super::{Circuit, Tuning, TuningSlots};
use crate::config::{AttenuatorSetting, DeviceConfig};
use crate::error::{Error, Result};
use crate::optics::{EomInstance, EomLabel, Element, ModeId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FoldedItem {
    Eom { label: EomLabel, freq_ghz: f64, alpha: f64 },
    /// A tunable phase shifter.
    Phase,
    /// The tunable attenuator; only allowed on single-pass sections.
    Attenuator,
}

/// Items along one arm of the inner interferometer, in outbound order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FoldedArm {
    pub items: Vec<FoldedItem>,
    /// Bob's shutter sits on this arm.
    pub shutter: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldedDevice {
    pub outer_reflectivity: f64,
    pub inner_reflectivity: f64,
    /// Before the inner interferometer, traversed once on the way in.
    pub entry: Vec<FoldedItem>,
    pub arm_a: FoldedArm,
    pub arm_b: FoldedArm,
    /// Between the inner interferometer and the end mirror; traversed twice.
    pub turnaround: Vec<FoldedItem>,
    /// The lower (reference) arm, traversed once.
    pub lower: Vec<FoldedItem>,
    pub attenuator: AttenuatorSetting,
    pub tuning: Tuning,
}

impl FoldedDevice {
    /// The device as built: E at the entrance, A and B inside the inner
    /// interferometer, F before the end mirror, C on the lower arm.
    pub fn from_config(cfg: &DeviceConfig, tuning: Tuning) -> Self {
        let eom = |label| {
            cfg.eom(label).map(|e| FoldedItem::Eom {
                label,
                freq_ghz: e.freq_ghz,
                alpha: e.alpha,
            })
        };
        let mut arm_b: Vec<FoldedItem> = vec![FoldedItem::Phase];
        arm_b.extend(eom(EomLabel::B));
        let mut lower = vec![FoldedItem::Attenuator, FoldedItem::Phase];
        lower.extend(eom(EomLabel::C));
        FoldedDevice {
            outer_reflectivity: cfg.beamsplitters.outer_reflectivity,
            inner_reflectivity: cfg.beamsplitters.inner_reflectivity,
            entry: eom(EomLabel::E).into_iter().collect(),
            arm_a: FoldedArm {
                items: eom(EomLabel::A).into_iter().collect(),
                shutter: true,
            },
            arm_b: FoldedArm { items: arm_b, shutter: false },
            turnaround: eom(EomLabel::F).into_iter().collect(),
            lower,
            attenuator: cfg.attenuator_t,
            tuning,
        }
    }

    fn check(&self) -> Result<()> {
        let mut labels = BTreeSet::new();
        let all = self
            .entry
            .iter()
            .chain(&self.arm_a.items)
            .chain(&self.arm_b.items)
            .chain(&self.turnaround)
            .chain(&self.lower);
        for item in all {
            if let FoldedItem::Eom { label, .. } = item {
                if !labels.insert(*label) {
                    return Err(Error::Topology(format!("modulator {label} appears twice in the folded device")));
                }
            }
        }
        let twice = self.arm_a.items.iter().chain(&self.arm_b.items).chain(&self.turnaround);
        if twice.clone().any(|i| matches!(i, FoldedItem::Attenuator)) {
            return Err(Error::Topology("attenuator on a double-traversed section cannot be unrolled".into()));
        }
        if self.turnaround.iter().any(|i| matches!(i, FoldedItem::Phase)) {
            return Err(Error::Topology("phase shifter between the inner interferometer and the mirror is not tunable per pass".into()));
        }
        if self.entry.iter().any(|i| !matches!(i, FoldedItem::Eom { .. })) {
            return Err(Error::Topology("only modulators are allowed on the entrance segment".into()));
        }
        if self.arm_b.shutter {
            return Err(Error::Topology("the shutter must sit on arm A".into()));
        }
        if self.lower.iter().filter(|i| matches!(i, FoldedItem::Attenuator)).count() != 1
            || self.lower.iter().filter(|i| matches!(i, FoldedItem::Phase)).count() != 1
        {
            return Err(Error::Topology("the lower arm needs exactly one attenuator and one phase shifter".into()));
        }
        Ok(())
    }
}

struct Unroller {
    elements: Vec<Element>,
    slots: TuningSlots,
}

impl Unroller {
    fn item(&mut self, mode: &str, item: &FoldedItem, pass: u8, inner: bool) {
        let mode = ModeId::new(mode);
        let idx = self.elements.len();
        match *item {
            FoldedItem::Eom { label, freq_ghz, alpha } => self.elements.push(Element::Eom {
                mode,
                instance: EomInstance { label, pass },
                freq_ghz,
                alpha,
            }),
            FoldedItem::Phase => {
                self.elements.push(Element::PhaseShift { mode, radians: 0.0 });
                if inner {
                    self.slots.inner.push(idx);
                } else {
                    self.slots.outer = Some(idx);
                }
            }
            FoldedItem::Attenuator => {
                self.elements.push(Element::Attenuator {
                    mode,
                    transmission: 1.0,
                    loss: ModeId::new(LOSS_C),
                });
                self.slots.attenuator = Some(idx);
            }
        }
    }

    fn bs(&mut self, inputs: [&str; 2], outputs: [&str; 2], reflectivity: f64) {
        self.elements.push(Element::Beamsplitter {
            inputs: inputs.map(ModeId::new),
            outputs: outputs.map(ModeId::new),
            reflectivity,
        });
    }

    /// One traversal of the inner interferometer. The shutter, when in,
    /// comes first on its arm in both directions so no A sideband is ever
    /// created ahead of it.
    fn inner_pass(&mut self, dev: &FoldedDevice, shutter_in: bool, pass: u8, io: [&str; 5]) {
        let [input, vacuum, a, b, _] = io;
        self.bs([input, vacuum], [a, b], dev.inner_reflectivity);
        for (arm, mode, loss) in [(&dev.arm_a, a, [LOSS_A1, LOSS_A2][pass as usize - 1]), (&dev.arm_b, b, "")] {
            if arm.shutter && shutter_in {
                self.elements.push(Element::Block { mode: ModeId::new(mode), loss: ModeId::new(loss) });
            }
            for item in &arm.items {
                self.item(mode, item, pass, true);
            }
        }
    }
}

/// Unrolls the folded device, with shutters as `blocked` says and phases and
/// attenuator left untuned.
fn unroll(dev: &FoldedDevice, blocked: bool) -> Result<Circuit> {
    dev.check()?;
    let mut u = Unroller { elements: Vec::new(), slots: TuningSlots::default() };

    u.bs([SRC, V0], [IN, C], dev.outer_reflectivity);
    for item in &dev.lower {
        u.item(C, item, 1, false);
    }
    for item in &dev.entry {
        u.item(IN, item, 1, false);
    }

    u.inner_pass(dev, blocked, 1, [IN, V1, A1, B1, M1]);
    u.bs([A1, B1], [M1, ESC1], dev.inner_reflectivity);

    for item in &dev.turnaround {
        u.item(M1, item, 1, false);
    }
    u.elements.push(Element::Mirror { input: ModeId::new(M1), output: ModeId::new(M2) });
    for item in &dev.turnaround {
        u.item(M2, item, 2, false);
    }

    u.inner_pass(dev, blocked, 2, [M2, V2, A2, B2, OUT]);
    u.bs([A2, B2], [OUT, D1], dev.inner_reflectivity);

    u.bs([OUT, C], [ESC0, D0], dev.outer_reflectivity);
    u.elements.push(Element::Detector { mode: ModeId::new(D0), name: D0.into() });
    u.elements.push(Element::Detector { mode: ModeId::new(D1), name: D1.into() });

    let mut losses: Vec<ModeId> = [ESC0, ESC1, LOSS_C].map(ModeId::new).into();
    if blocked {
        losses.extend([LOSS_A1, LOSS_A2].map(ModeId::new));
    }
    let zero = Complex64::new(0.0, 0.0);
    Circuit::new(
        u.elements,
        vec![
            (ModeId::new(SRC), Complex64::new(1.0, 0.0)),
            (ModeId::new(V0), zero),
            (ModeId::new(V1), zero),
            (ModeId::new(V2), zero),
        ],
        vec![(D0.into(), ModeId::new(D0)), (D1.into(), ModeId::new(D1))],
        losses,
        u.slots,
    )
}

/// The tuned unfolded circuit equivalent to a folded device.
pub fn expand_folded(dev: &FoldedDevice) -> Result<Circuit> {
    tune(&|blocked| unroll(dev, blocked), dev.attenuator, dev.tuning)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{build_unfolded, Preset};

    #[test]
    fn matches_unfolded_builder_element_for_element() {
        let cfg = DeviceConfig::reference();
        for p in [Preset::Calibration, Preset::Bit0, Preset::Bit1] {
            let folded = expand_folded(&FoldedDevice::from_config(&cfg, Tuning::preset(p))).unwrap();
            let unfolded = build_unfolded(&cfg, Tuning::preset(p)).unwrap();
            assert_eq!(folded, unfolded, "{p}");
        }
    }

    #[test]
    fn bit1_has_both_shutters() {
        let c = expand_folded(&FoldedDevice::from_config(&DeviceConfig::reference(), Tuning::preset(Preset::Bit1))).unwrap();
        let blocked: Vec<_> = c
            .elements
            .iter()
            .filter_map(|e| match e {
                Element::Block { mode, .. } => Some(mode.as_str()),
                _ => None,
            })
            .collect();
        assert_eq!(blocked, vec![A1, A2]);
    }

    #[test]
    fn unrollable_descriptions_are_rejected() {
        let cfg = DeviceConfig::reference();
        let base = FoldedDevice::from_config(&cfg, Tuning::preset(Preset::Bit0));

        let mut dev = base.clone();
        dev.turnaround.push(FoldedItem::Attenuator);
        assert!(matches!(expand_folded(&dev), Err(Error::Topology(_))));

        let mut dev = base.clone();
        dev.arm_b.items.push(FoldedItem::Attenuator);
        assert!(matches!(expand_folded(&dev), Err(Error::Topology(_))));

        let mut dev = base.clone();
        dev.entry.push(FoldedItem::Eom { label: EomLabel::A, freq_ghz: 2.1, alpha: 0.1 });
        assert!(matches!(expand_folded(&dev), Err(Error::Topology(_))));
    }
}
