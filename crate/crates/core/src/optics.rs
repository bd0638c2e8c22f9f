//! Photon states over (spatial mode, sideband tag) and the optical elements
//! that act on them.
//!
//! The carrier is a single spectral line. An electro-optic modulator adds
//! sidebands `±Ω` of relative amplitude `α` to whatever carrier passes it,
//! and each sideband remembers which modulator pass created it. Elements
//! other than the modulator are dispersionless and act identically on every
//! tag.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ComplexAmp = Complex64;

/// Largest modulation depth for which the truncated sideband model is
/// accepted.
pub const MAX_ALPHA: f64 = 0.5;

/// Name of one spatial segment of the circuit.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModeId(String);

impl ModeId {
    pub fn new(name: impl Into<String>) -> Self {
        ModeId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ModeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ModeId {
    fn from(s: &str) -> Self {
        ModeId::new(s)
    }
}

/// Which modulator a sideband belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EomLabel {
    A,
    B,
    C,
    E,
    F,
}

impl EomLabel {
    pub const ALL: [EomLabel; 5] = [EomLabel::A, EomLabel::B, EomLabel::C, EomLabel::E, EomLabel::F];

    pub fn as_str(self) -> &'static str {
        match self {
            EomLabel::A => "A",
            EomLabel::B => "B",
            EomLabel::C => "C",
            EomLabel::E => "E",
            EomLabel::F => "F",
        }
    }
}

impl fmt::Display for EomLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EomLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" => Ok(EomLabel::A),
            "B" => Ok(EomLabel::B),
            "C" => Ok(EomLabel::C),
            "E" => Ok(EomLabel::E),
            "F" => Ok(EomLabel::F),
            other => Err(Error::Config(format!("unknown EOM label {other:?}"))),
        }
    }
}

/// One modulator pass: the label plus which physical traversal created it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EomInstance {
    pub label: EomLabel,
    pub pass: u8,
}

/// A frequency shift of `harmonic · Ω` imprinted by one modulator pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Shift {
    pub instance: EomInstance,
    pub harmonic: i8,
}

/// Spectral component of the photon. An empty shift list is the carrier;
/// a first-order sideband carries exactly one shift with harmonic ±1.
/// Higher-order components only arise in [`Expansion::SecondOrder`].
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SidebandTag {
    shifts: Vec<Shift>,
}

impl SidebandTag {
    pub fn carrier() -> Self {
        SidebandTag { shifts: Vec::new() }
    }

    pub fn shifted(label: EomLabel, sign: i8, pass: u8) -> Self {
        SidebandTag {
            shifts: vec![Shift {
                instance: EomInstance { label, pass },
                harmonic: sign.signum(),
            }],
        }
    }

    pub fn is_carrier(&self) -> bool {
        self.shifts.is_empty()
    }

    pub fn shifts(&self) -> &[Shift] {
        &self.shifts
    }

    /// Total perturbative order (sum of |harmonic|).
    pub fn order(&self) -> u32 {
        self.shifts.iter().map(|s| s.harmonic.unsigned_abs() as u32).sum()
    }

    /// The single first-order shift, if this is a first-order sideband.
    pub fn first_order(&self) -> Option<Shift> {
        match self.shifts.as_slice() {
            [s] if s.harmonic.abs() == 1 => Some(*s),
            _ => None,
        }
    }

    /// Detuning from the carrier given per-label modulation frequencies.
    pub fn detuning_ghz(&self, freq_of: impl Fn(EomLabel) -> f64) -> f64 {
        self.shifts
            .iter()
            .map(|s| s.harmonic as f64 * freq_of(s.instance.label))
            .sum()
    }

    fn with_shift(&self, instance: EomInstance, harmonic: i8) -> Option<Self> {
        let mut shifts = self.shifts.clone();
        match shifts.iter_mut().find(|s| s.instance == instance) {
            Some(s) => {
                s.harmonic += harmonic;
                if s.harmonic == 0 {
                    shifts.retain(|s| s.instance != instance);
                }
            }
            None => shifts.push(Shift { instance, harmonic }),
        }
        shifts.sort();
        let tag = SidebandTag { shifts };
        // Pure carrier recombination is not a sideband of this pass.
        (!tag.is_carrier()).then_some(tag)
    }
}

impl fmt::Display for SidebandTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.shifts.is_empty() {
            return f.write_str("carrier");
        }
        for (i, s) in self.shifts.iter().enumerate() {
            if i > 0 {
                f.write_str("+")?;
            }
            write!(f, "{}{}#{}", s.harmonic, s.instance.label, s.instance.pass)?;
        }
        Ok(())
    }
}

/// How modulator action is expanded in `α`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Expansion {
    /// Carrier passes unchanged and gains `±1` sidebands of amplitude `α`;
    /// existing sidebands are not re-modulated.
    #[default]
    FirstOrder,
    /// All terms through `α²`: carrier `(1-α²)`, `±1` sidebands `α`, `±2`
    /// sidebands `α²/2`, and re-modulation of first-order sidebands.
    SecondOrder,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Element {
    /// Symmetric beamsplitter with power reflectivity `reflectivity`:
    /// `out1 = t·in1 + i r·in2`, `out2 = i r·in1 + t·in2`.
    Beamsplitter {
        inputs: [ModeId; 2],
        outputs: [ModeId; 2],
        reflectivity: f64,
    },
    PhaseShift {
        mode: ModeId,
        radians: f64,
    },
    /// Amplitude transmission `transmission`; the deficit `√(1-t²)` goes to
    /// `loss`, which must be a fresh mode.
    Attenuator {
        mode: ModeId,
        transmission: f64,
        loss: ModeId,
    },
    Eom {
        mode: ModeId,
        instance: EomInstance,
        freq_ghz: f64,
        alpha: f64,
    },
    /// Absorbs everything on `mode`, carrier and sidebands alike.
    Block {
        mode: ModeId,
        loss: ModeId,
    },
    /// Lossless redirection of one segment into the next.
    Mirror {
        input: ModeId,
        output: ModeId,
    },
    Detector {
        mode: ModeId,
        name: String,
    },
}

impl Element {
    /// Modes that must be live before this element acts.
    pub fn consumed(&self) -> Vec<&ModeId> {
        match self {
            Element::Beamsplitter { inputs, .. } => inputs.iter().collect(),
            Element::PhaseShift { mode, .. }
            | Element::Attenuator { mode, .. }
            | Element::Eom { mode, .. }
            | Element::Block { mode, .. }
            | Element::Detector { mode, .. } => vec![mode],
            Element::Mirror { input, .. } => vec![input],
        }
    }

    /// Modes that become live after this element acts.
    pub fn produced(&self) -> Vec<&ModeId> {
        match self {
            Element::Beamsplitter { outputs, .. } => outputs.iter().collect(),
            Element::PhaseShift { mode, .. }
            | Element::Eom { mode, .. }
            | Element::Detector { mode, .. } => vec![mode],
            Element::Attenuator { mode, loss, .. } | Element::Block { mode, loss } => {
                vec![mode, loss]
            }
            Element::Mirror { output, .. } => vec![output],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Element::Beamsplitter { reflectivity, inputs, outputs } => {
                if !(0.0..=1.0).contains(reflectivity) {
                    return Err(Error::Config(format!(
                        "beamsplitter reflectivity {reflectivity} outside [0, 1]"
                    )));
                }
                if inputs[0] == inputs[1] || outputs[0] == outputs[1] {
                    return Err(Error::Topology("beamsplitter ports must be distinct".into()));
                }
            }
            Element::PhaseShift { radians, .. } if !radians.is_finite() => {
                return Err(Error::Config("non-finite phase".into()));
            }
            Element::Attenuator { transmission, mode, loss } => {
                if !(0.0..=1.0).contains(transmission) {
                    return Err(Error::Config(format!(
                        "attenuator transmission {transmission} outside [0, 1]"
                    )));
                }
                if mode == loss {
                    return Err(Error::Topology("attenuator loss mode equals its input".into()));
                }
            }
            Element::Eom { alpha, freq_ghz, .. } => {
                if !(0.0..=MAX_ALPHA).contains(alpha) {
                    return Err(Error::Config(format!(
                        "EOM alpha {alpha} outside [0, {MAX_ALPHA}]"
                    )));
                }
                if !(freq_ghz.is_finite() && *freq_ghz > 0.0) {
                    return Err(Error::Config(format!("EOM frequency {freq_ghz} must be positive")));
                }
            }
            Element::Block { mode, loss } if mode == loss => {
                return Err(Error::Topology("block loss mode equals its input".into()));
            }
            Element::Mirror { input, output } if input == output => {
                return Err(Error::Topology("mirror output equals its input".into()));
            }
            _ => {}
        }
        Ok(())
    }
}

/// Complex amplitudes over (mode, tag), plus the set of modes that exist at
/// this cut of the circuit (zero-amplitude modes included).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PhotonState {
    live: BTreeSet<ModeId>,
    amps: BTreeMap<(ModeId, SidebandTag), ComplexAmp>,
}

impl PhotonState {
    /// Empty state over the given live modes.
    pub fn vacuum<'a>(modes: impl IntoIterator<Item = &'a ModeId>) -> Self {
        PhotonState {
            live: modes.into_iter().cloned().collect(),
            amps: BTreeMap::new(),
        }
    }

    /// Carrier amplitude `amp` on `mode`, all other `modes` empty.
    pub fn single<'a>(
        modes: impl IntoIterator<Item = &'a ModeId>,
        mode: &ModeId,
        amp: ComplexAmp,
    ) -> Self {
        let mut s = Self::vacuum(modes);
        s.live.insert(mode.clone());
        s.add(mode, SidebandTag::carrier(), amp);
        s
    }

    pub fn live_modes(&self) -> impl Iterator<Item = &ModeId> {
        self.live.iter()
    }

    pub fn is_live(&self, mode: &ModeId) -> bool {
        self.live.contains(mode)
    }

    pub fn amplitudes(&self) -> impl Iterator<Item = (&ModeId, &SidebandTag, ComplexAmp)> {
        self.amps.iter().map(|((m, t), a)| (m, t, *a))
    }

    pub fn amp(&self, mode: &ModeId, tag: &SidebandTag) -> ComplexAmp {
        self.amps
            .get(&(mode.clone(), tag.clone()))
            .copied()
            .unwrap_or_default()
    }

    pub fn carrier(&self, mode: &ModeId) -> ComplexAmp {
        self.amp(mode, &SidebandTag::carrier())
    }

    pub fn add(&mut self, mode: &ModeId, tag: SidebandTag, amp: ComplexAmp) {
        if amp == ComplexAmp::default() {
            return;
        }
        *self.amps.entry((mode.clone(), tag)).or_default() += amp;
    }

    pub fn norm(&self) -> f64 {
        self.amps.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn carrier_norm(&self) -> f64 {
        self.amps
            .iter()
            .filter(|((_, t), _)| t.is_carrier())
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    /// Probability on one mode summed over every tag.
    pub fn mode_prob(&self, mode: &ModeId) -> f64 {
        self.components_on(mode).map(|(_, a)| a.norm_sqr()).sum()
    }

    /// First-order sideband probability of `label` on `mode`: both signs
    /// and every pass, added incoherently.
    pub fn tag_prob(&self, mode: &ModeId, label: EomLabel) -> f64 {
        self.components_on(mode)
            .filter(|(t, _)| t.first_order().is_some_and(|s| s.instance.label == label))
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    /// Same quantity as [`tag_prob`](Self::tag_prob) but with an explicit
    /// random RF phase per modulator pass, averaged over `draws` draws.
    /// Passes of the same label are summed coherently within a draw.
    pub fn tag_prob_random_phases<R: Rng>(
        &self,
        mode: &ModeId,
        label: EomLabel,
        draws: usize,
        rng: &mut R,
    ) -> f64 {
        let mut per_sign: BTreeMap<i8, Vec<(u8, ComplexAmp)>> = BTreeMap::new();
        for (t, a) in self.components_on(mode) {
            if let Some(s) = t.first_order().filter(|s| s.instance.label == label) {
                per_sign.entry(s.harmonic).or_default().push((s.instance.pass, a));
            }
        }
        let passes: BTreeSet<u8> = per_sign.values().flatten().map(|(p, _)| *p).collect();
        let mut acc = 0.0;
        for _ in 0..draws {
            let phase: BTreeMap<u8, f64> = passes
                .iter()
                .map(|p| (*p, rng.random::<f64>() * std::f64::consts::TAU))
                .collect();
            for (sign, comps) in &per_sign {
                let total: ComplexAmp = comps
                    .iter()
                    .map(|(p, a)| a * ComplexAmp::from_polar(1.0, *sign as f64 * phase[p]))
                    .sum();
                acc += total.norm_sqr();
            }
        }
        acc / draws.max(1) as f64
    }

    /// `Σ conj(self)·other` over matching (mode, tag) keys.
    pub fn inner(&self, other: &PhotonState) -> ComplexAmp {
        self.amps
            .iter()
            .map(|(k, a)| a.conj() * other.amps.get(k).copied().unwrap_or_default())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.amps.values().all(|a| a.re.is_finite() && a.im.is_finite())
    }

    fn components_on<'a>(
        &'a self,
        mode: &'a ModeId,
    ) -> impl Iterator<Item = (&'a SidebandTag, ComplexAmp)> + 'a {
        self.amps
            .range((mode.clone(), SidebandTag::carrier())..)
            .take_while(move |((m, _), _)| m == mode)
            .map(|((_, t), a)| (t, *a))
    }

    /// Removes and returns every component on `mode`.
    fn take_mode(&mut self, mode: &ModeId) -> Vec<(SidebandTag, ComplexAmp)> {
        let keys: Vec<_> = self
            .components_on(mode)
            .map(|(t, _)| (mode.clone(), t.clone()))
            .collect();
        keys.into_iter()
            .map(|k| {
                let a = self.amps.remove(&k).unwrap_or_default();
                (k.1, a)
            })
            .collect()
    }

    fn require_live(&self, mode: &ModeId) -> Result<()> {
        if self.live.contains(mode) {
            Ok(())
        } else {
            Err(Error::Topology(format!("mode {mode} is not present at this cut")))
        }
    }

    fn require_fresh(&self, mode: &ModeId) -> Result<()> {
        if self.live.contains(mode) {
            Err(Error::Topology(format!("mode {mode} is already in use")))
        } else {
            Ok(())
        }
    }
}

fn bs_coeffs(reflectivity: f64) -> (ComplexAmp, ComplexAmp) {
    let t = ComplexAmp::new((1.0 - reflectivity).sqrt(), 0.0);
    let ir = ComplexAmp::new(0.0, reflectivity.sqrt());
    (t, ir)
}

/// Forward action of one element with the first-order modulator model.
pub fn apply_element(state: &PhotonState, e: &Element) -> Result<PhotonState> {
    apply_element_with(state, e, Expansion::FirstOrder)
}

pub fn apply_element_with(
    state: &PhotonState,
    e: &Element,
    expansion: Expansion,
) -> Result<PhotonState> {
    e.validate()?;
    let mut out = state.clone();
    match e {
        Element::Beamsplitter { inputs, outputs, reflectivity } => {
            for m in inputs {
                out.require_live(m)?;
            }
            let (t, ir) = bs_coeffs(*reflectivity);
            let a = out.take_mode(&inputs[0]);
            let b = out.take_mode(&inputs[1]);
            for m in inputs {
                out.live.remove(m);
            }
            for m in outputs {
                out.require_fresh(m)?;
                out.live.insert(m.clone());
            }
            for (tag, amp) in a {
                out.add(&outputs[0], tag.clone(), t * amp);
                out.add(&outputs[1], tag, ir * amp);
            }
            for (tag, amp) in b {
                out.add(&outputs[0], tag.clone(), ir * amp);
                out.add(&outputs[1], tag, t * amp);
            }
        }
        Element::PhaseShift { mode, radians } => {
            out.require_live(mode)?;
            let f = ComplexAmp::from_polar(1.0, *radians);
            for (tag, amp) in out.take_mode(mode) {
                out.add(mode, tag, f * amp);
            }
        }
        Element::Attenuator { mode, transmission, loss } => {
            route_to_loss(&mut out, mode, loss, *transmission)?;
        }
        Element::Block { mode, loss } => {
            route_to_loss(&mut out, mode, loss, 0.0)?;
        }
        Element::Mirror { input, output } => {
            out.require_live(input)?;
            out.require_fresh(output)?;
            let comps = out.take_mode(input);
            out.live.remove(input);
            out.live.insert(output.clone());
            for (tag, amp) in comps {
                out.add(output, tag, amp);
            }
        }
        Element::Eom { mode, instance, alpha, .. } => {
            out.require_live(mode)?;
            let alpha = *alpha;
            let comps = out.take_mode(mode);
            for (tag, amp) in comps {
                match (expansion, tag.order()) {
                    (Expansion::FirstOrder, 0) => {
                        for sign in [1, -1] {
                            out.add(mode, SidebandTag::shifted(instance.label, sign, instance.pass), alpha * amp);
                        }
                        out.add(mode, tag, amp);
                    }
                    (Expansion::FirstOrder, _) => out.add(mode, tag, amp),
                    (Expansion::SecondOrder, 0) => {
                        for sign in [1i8, -1] {
                            if let Some(t1) = tag.with_shift(*instance, sign) {
                                out.add(mode, t1, alpha * amp);
                            }
                            if let Some(t2) = tag.with_shift(*instance, 2 * sign) {
                                out.add(mode, t2, 0.5 * alpha * alpha * amp);
                            }
                        }
                        out.add(mode, tag, (1.0 - alpha * alpha) * amp);
                    }
                    (Expansion::SecondOrder, 1) => {
                        for sign in [1i8, -1] {
                            if let Some(t1) = tag.with_shift(*instance, sign) {
                                if t1.order() <= 2 {
                                    out.add(mode, t1, alpha * amp);
                                }
                            }
                        }
                        out.add(mode, tag, amp);
                    }
                    (Expansion::SecondOrder, _) => out.add(mode, tag, amp),
                }
            }
        }
        Element::Detector { mode, .. } => out.require_live(mode)?,
    }
    debug_assert!(out.is_finite());
    Ok(out)
}

fn route_to_loss(out: &mut PhotonState, mode: &ModeId, loss: &ModeId, t: f64) -> Result<()> {
    out.require_live(mode)?;
    out.require_fresh(loss)?;
    out.live.insert(loss.clone());
    let s = (1.0 - t * t).max(0.0).sqrt();
    for (tag, amp) in out.take_mode(mode) {
        out.add(mode, tag.clone(), t * amp);
        out.add(loss, tag, s * amp);
    }
    Ok(())
}

/// Adjoint action on a backward-evolving state (carrier only). Modulators
/// act as the identity: sidebands are forward bookkeeping.
pub fn apply_adjoint(state: &PhotonState, e: &Element) -> Result<PhotonState> {
    e.validate()?;
    let mut out = state.clone();
    match e {
        Element::Beamsplitter { inputs, outputs, reflectivity } => {
            for m in outputs {
                out.require_live(m)?;
            }
            let (t, ir) = bs_coeffs(*reflectivity);
            let (t, ir) = (t.conj(), ir.conj());
            let a = out.take_mode(&outputs[0]);
            let b = out.take_mode(&outputs[1]);
            for m in outputs {
                out.live.remove(m);
            }
            for m in inputs {
                out.require_fresh(m)?;
                out.live.insert(m.clone());
            }
            for (tag, amp) in a {
                out.add(&inputs[0], tag.clone(), t * amp);
                out.add(&inputs[1], tag, ir * amp);
            }
            for (tag, amp) in b {
                out.add(&inputs[0], tag.clone(), ir * amp);
                out.add(&inputs[1], tag, t * amp);
            }
        }
        Element::PhaseShift { mode, radians } => {
            out.require_live(mode)?;
            let f = ComplexAmp::from_polar(1.0, -radians);
            for (tag, amp) in out.take_mode(mode) {
                out.add(mode, tag, f * amp);
            }
        }
        Element::Attenuator { mode, transmission, loss } => {
            unroute_from_loss(&mut out, mode, loss, *transmission)?;
        }
        Element::Block { mode, loss } => {
            unroute_from_loss(&mut out, mode, loss, 0.0)?;
        }
        Element::Mirror { input, output } => {
            out.require_live(output)?;
            out.require_fresh(input)?;
            let comps = out.take_mode(output);
            out.live.remove(output);
            out.live.insert(input.clone());
            for (tag, amp) in comps {
                out.add(input, tag, amp);
            }
        }
        Element::Eom { mode, .. } | Element::Detector { mode, .. } => out.require_live(mode)?,
    }
    Ok(out)
}

fn unroute_from_loss(out: &mut PhotonState, mode: &ModeId, loss: &ModeId, t: f64) -> Result<()> {
    out.require_live(mode)?;
    out.require_live(loss)?;
    let s = (1.0 - t * t).max(0.0).sqrt();
    let on_mode = out.take_mode(mode);
    let on_loss = out.take_mode(loss);
    out.live.remove(loss);
    for (tag, amp) in on_mode {
        out.add(mode, tag, t * amp);
    }
    for (tag, amp) in on_loss {
        out.add(mode, tag, s * amp);
    }
    Ok(())
}
