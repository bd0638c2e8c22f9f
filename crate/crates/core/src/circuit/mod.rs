//! The nested-interferometer circuit: construction, tuning, forward and
//! backward propagation, detection probabilities and weak traces.

mod build;
mod folded;
mod tsv;
mod tuning;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::{apply_element_with, ComplexAmp, Element, Expansion, ModeId, PhotonState};

pub use build::{build_from_optics, build_unfolded, unfolded_skeleton, DeviceOptics};
pub use folded::{expand_folded, FoldedArm, FoldedDevice, FoldedItem};
pub use tsv::{
    backward_propagate, detected_sideband_prob, predicted_sideband_prob, two_state_vector, weak_trace,
    weak_trace_with_floor, InstanceTrace, TraceReport, TwoStateVector, POSTSELECTION_FLOOR,
};
pub use tuning::{balance_attenuator, balance_attenuator_on, solve_phases, PortCondition};

/// Mode names of the unfolded circuit.
pub mod modes {
    pub const SRC: &str = "SRC";
    pub const V0: &str = "V0";
    pub const V1: &str = "V1";
    pub const V2: &str = "V2";
    pub const C: &str = "C";
    pub const IN: &str = "IN";
    pub const A1: &str = "A1";
    pub const B1: &str = "B1";
    pub const M1: &str = "M1";
    pub const ESC1: &str = "ESC1";
    pub const M2: &str = "M2";
    pub const A2: &str = "A2";
    pub const B2: &str = "B2";
    pub const OUT: &str = "OUT";
    pub const D0: &str = "D0";
    pub const D1: &str = "D1";
    pub const ESC0: &str = "ESC0";
    pub const LOSS_C: &str = "LOSS_C";
    pub const LOSS_A1: &str = "LOSS_A1";
    pub const LOSS_A2: &str = "LOSS_A2";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Calibration,
    Bit0,
    Bit1,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "calibration" => Ok(Preset::Calibration),
            "bit0" => Ok(Preset::Bit0),
            "bit1" => Ok(Preset::Bit1),
            other => Err(Error::Config(format!("unknown tuning {other:?}"))),
        }
    }
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Preset::Calibration => "calibration",
            Preset::Bit0 => "bit0",
            Preset::Bit1 => "bit1",
        })
    }
}

/// Phase (radians) on the B arm of each inner pass and on the C arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSet {
    pub inner: f64,
    pub outer: f64,
}

/// How the device is set for one run.
///
/// Bit 0 and bit 1 share Alice's phases; they differ only in Bob's
/// shutters. When `phases` is `None` they are solved from the preset's
/// dark/bright conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tuning {
    pub preset: Preset,
    pub blocked: bool,
    pub phases: Option<PhaseSet>,
    pub attenuator_t: Option<f64>,
}

impl Tuning {
    pub fn preset(preset: Preset) -> Self {
        Tuning {
            preset,
            blocked: preset == Preset::Bit1,
            phases: None,
            attenuator_t: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let expect_blocked = self.preset == Preset::Bit1;
        if self.blocked != expect_blocked {
            return Err(Error::Config(format!(
                "tuning {} requires the shutters {}",
                self.preset,
                if expect_blocked { "inserted" } else { "removed" }
            )));
        }
        if let Some(t) = self.attenuator_t {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Config(format!("attenuator transmission {t} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Element indices that tuning writes to.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TuningSlots {
    /// Phase shifters on B1 and B2 (one physical phase, two passes).
    pub inner: Vec<usize>,
    /// Phase shifter on C.
    pub outer: Option<usize>,
    pub attenuator: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    pub modes: Vec<ModeId>,
    pub elements: Vec<Element>,
    pub sources: Vec<(ModeId, ComplexAmp)>,
    /// Detector name and terminal mode.
    pub detectors: Vec<(String, ModeId)>,
    pub loss_terminals: Vec<ModeId>,
    pub slots: TuningSlots,
}

/// Probability of each terminal outcome, carrier and sidebands together.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectionProbs {
    pub d0: f64,
    pub d1: f64,
    pub lost: f64,
}

impl DetectionProbs {
    pub fn total(&self) -> f64 {
        self.d0 + self.d1 + self.lost
    }
}

impl Circuit {
    /// Checks ordering and terminals, and fills in `modes`.
    pub fn new(
        elements: Vec<Element>,
        sources: Vec<(ModeId, ComplexAmp)>,
        detectors: Vec<(String, ModeId)>,
        loss_terminals: Vec<ModeId>,
        slots: TuningSlots,
    ) -> Result<Self> {
        let mut c = Circuit {
            modes: Vec::new(),
            elements,
            sources,
            detectors,
            loss_terminals,
            slots,
        };
        c.modes = c.check_topology()?;
        Ok(c)
    }

    fn check_topology(&self) -> Result<Vec<ModeId>> {
        let mut live: BTreeSet<&ModeId> = BTreeSet::new();
        let mut seen: Vec<ModeId> = Vec::new();
        let mut ever: BTreeSet<&ModeId> = BTreeSet::new();
        for (m, _) in &self.sources {
            if !live.insert(m) {
                return Err(Error::Topology(format!("duplicate source mode {m}")));
            }
            ever.insert(m);
            seen.push(m.clone());
        }
        for (i, e) in self.elements.iter().enumerate() {
            e.validate()?;
            let consumed = e.consumed();
            for m in &consumed {
                if !live.contains(m) {
                    return Err(Error::Topology(format!(
                        "element {i} uses mode {m} which does not exist at that point"
                    )));
                }
            }
            for m in &consumed {
                live.remove(m);
            }
            for m in e.produced() {
                if !consumed.contains(&m) && ever.contains(m) {
                    return Err(Error::Topology(format!("mode {m} is produced twice")));
                }
                if ever.insert(m) {
                    seen.push(m.clone());
                }
                live.insert(m);
            }
        }
        let terminals: BTreeSet<&ModeId> = self
            .detectors
            .iter()
            .map(|(_, m)| m)
            .chain(self.loss_terminals.iter())
            .collect();
        if live != terminals {
            let dangling: Vec<_> = live.difference(&terminals).map(|m| m.to_string()).collect();
            let missing: Vec<_> = terminals.difference(&live).map(|m| m.to_string()).collect();
            return Err(Error::Topology(format!(
                "terminal mismatch: unconsumed {dangling:?}, undeclared {missing:?}"
            )));
        }
        for (i, e) in self.elements.iter().enumerate() {
            if let Element::Detector { mode, name } = e {
                if !self.detectors.iter().any(|(n, m)| n == name && m == mode) {
                    return Err(Error::Topology(format!("detector element {i} ({name}) not declared")));
                }
            }
        }
        Ok(seen)
    }

    pub fn source_state(&self) -> PhotonState {
        let mut s = PhotonState::vacuum(self.sources.iter().map(|(m, _)| m));
        for (m, a) in &self.sources {
            s.add(m, crate::optics::SidebandTag::carrier(), *a);
        }
        s
    }

    pub fn detector_mode(&self, name: &str) -> Result<&ModeId> {
        self.detectors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| Error::UnknownDetector(name.to_string()))
    }

    pub fn terminal_modes(&self) -> impl Iterator<Item = &ModeId> {
        self.detectors.iter().map(|(_, m)| m).chain(self.loss_terminals.iter())
    }

    /// Modes that are neither sources nor terminals.
    pub fn arms(&self) -> Vec<&ModeId> {
        let outer: BTreeSet<&ModeId> = self
            .sources
            .iter()
            .map(|(m, _)| m)
            .chain(self.terminal_modes())
            .collect();
        self.modes.iter().filter(|m| !outer.contains(m)).collect()
    }

    /// Forward state at every cut: `cuts[k]` is the state before element `k`,
    /// the last entry is the terminal state.
    pub fn forward_cuts(&self, expansion: Expansion) -> Result<Vec<PhotonState>> {
        let mut cuts = Vec::with_capacity(self.elements.len() + 1);
        let mut s = self.source_state();
        for e in &self.elements {
            let next = apply_element_with(&s, e, expansion)?;
            cuts.push(s);
            s = next;
        }
        cuts.push(s);
        Ok(cuts)
    }

    pub fn propagate(&self) -> Result<PhotonState> {
        self.propagate_with(Expansion::FirstOrder)
    }

    pub fn propagate_with(&self, expansion: Expansion) -> Result<PhotonState> {
        self.elements
            .iter()
            .try_fold(self.source_state(), |s, e| apply_element_with(&s, e, expansion))
    }

    /// Carrier amplitude on `mode` right after the element that creates it.
    pub fn carrier_after_creation(&self, mode: &ModeId) -> Result<ComplexAmp> {
        let mut s = self.source_state();
        if s.is_live(mode) {
            return Ok(s.carrier(mode));
        }
        for e in &self.elements {
            s = apply_element_with(&s, e, Expansion::FirstOrder)?;
            if e.produced().contains(&mode) && !e.consumed().contains(&mode) {
                return Ok(s.carrier(mode));
            }
        }
        Err(Error::Topology(format!("mode {mode} is never produced")))
    }

    pub fn detection_probs(&self) -> Result<DetectionProbs> {
        self.detection_probs_with(Expansion::FirstOrder)
    }

    pub fn detection_probs_with(&self, expansion: Expansion) -> Result<DetectionProbs> {
        let out = self.propagate_with(expansion)?;
        Ok(self.probs_of(&out))
    }

    pub fn probs_of(&self, terminal: &PhotonState) -> DetectionProbs {
        let by_name = |name: &str| {
            self.detectors
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, m)| terminal.mode_prob(m))
                .unwrap_or(0.0)
        };
        DetectionProbs {
            d0: by_name(modes::D0),
            d1: by_name(modes::D1),
            lost: self.loss_terminals.iter().map(|m| terminal.mode_prob(m)).sum(),
        }
    }

    /// Sum of `|carrier|²` over every modulator position; the first-order
    /// model adds `2α²` times each term to the total norm.
    pub fn eom_exposure(&self) -> Result<f64> {
        let cuts = self.forward_cuts(Expansion::FirstOrder)?;
        Ok(self
            .elements
            .iter()
            .zip(&cuts)
            .filter_map(|(e, s)| match e {
                Element::Eom { mode, alpha, .. } => Some(2.0 * alpha * alpha * s.carrier(mode).norm_sqr()),
                _ => None,
            })
            .sum())
    }

    pub(crate) fn set_phase(&mut self, idx: usize, value: f64) {
        if let Some(Element::PhaseShift { radians, .. }) = self.elements.get_mut(idx) {
            *radians = value;
        }
    }

    pub(crate) fn set_attenuator(&mut self, value: f64) {
        if let Some(idx) = self.slots.attenuator {
            if let Some(Element::Attenuator { transmission, .. }) = self.elements.get_mut(idx) {
                *transmission = value;
            }
        }
    }

    pub(crate) fn set_phases(&mut self, phases: PhaseSet) {
        for idx in self.slots.inner.clone() {
            self.set_phase(idx, phases.inner);
        }
        if let Some(idx) = self.slots.outer {
            self.set_phase(idx, phases.outer);
        }
    }

    pub fn phases(&self) -> Option<PhaseSet> {
        let get = |idx: usize| match self.elements.get(idx) {
            Some(Element::PhaseShift { radians, .. }) => Some(*radians),
            _ => None,
        };
        Some(PhaseSet {
            inner: get(*self.slots.inner.first()?)?,
            outer: get(self.slots.outer?)?,
        })
    }

    pub fn attenuator_t(&self) -> Option<f64> {
        match self.elements.get(self.slots.attenuator?) {
            Some(Element::Attenuator { transmission, .. }) => Some(*transmission),
            _ => None,
        }
    }
}
