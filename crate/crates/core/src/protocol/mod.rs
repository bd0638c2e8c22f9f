//! The communication protocol: imperfect per-photon trials, time-binned
//! bits, and bitmap transmission.
//!
//! Bob's bit is his shutter setting; Alice reads the bit from which detector
//! clicks (D0 for 0, D1 for 1). The modulators are only inserted for trace
//! measurements, so the channel uses the modulator-free device.

mod image;
mod send;

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::circuit::{build_from_optics, Circuit, DetectionProbs, DeviceOptics, Preset, Tuning};
use crate::config::{DeviceConfig, ImperfectionSetting};
use crate::error::{Error, Result};
use crate::optics::Element;

pub use image::{parse_pbm, raster_decode, raster_encode, transmit_image, write_pbm, Bitmap, TransmitStats, Transmission};
pub use send::{run_bin, sample_trial, send_bit, BinSchedule, BitReport, Policy, ReceivedBit, TrialOutcome};

/// Points per phase in the dephasing average. Port probabilities are
/// trigonometric polynomials of degree one in each phase, so an equispaced
/// rule with more than two points is exact.
const PHASE_POINTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Bit {
    Zero,
    One,
}

impl Bit {
    pub fn from_value(v: u8) -> Self {
        if v == 0 {
            Bit::Zero
        } else {
            Bit::One
        }
    }

    pub fn value(self) -> u8 {
        match self {
            Bit::Zero => 0,
            Bit::One => 1,
        }
    }

    pub fn preset(self) -> Preset {
        match self {
            Bit::Zero => Preset::Bit0,
            Bit::One => Preset::Bit1,
        }
    }
}

/// Visibilities and detector/source noise.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ImperfectionModel {
    pub v_inner: f64,
    pub v_outer: f64,
    /// Probability that a trial without a photon click still produces a
    /// (dark) click, split evenly between the detectors.
    #[serde(default)]
    pub dark_rate: f64,
    #[serde(default = "one")]
    pub heralding_efficiency: f64,
}

fn one() -> f64 {
    1.0
}

impl ImperfectionModel {
    pub const IDEAL: ImperfectionModel = ImperfectionModel {
        v_inner: 1.0,
        v_outer: 1.0,
        dark_rate: 0.0,
        heralding_efficiency: 1.0,
    };

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("v_inner", self.v_inner), ("v_outer", self.v_outer), ("dark_rate", self.dark_rate)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} = {v} outside [0, 1]")));
            }
        }
        if !(self.heralding_efficiency > 0.0 && self.heralding_efficiency <= 1.0) {
            return Err(Error::Config(format!(
                "heralding_efficiency = {} outside (0, 1]",
                self.heralding_efficiency
            )));
        }
        Ok(())
    }
}

/// Outcome probabilities of one heralded trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialProbs {
    pub d0: f64,
    pub d1: f64,
    pub lost: f64,
}

impl TrialProbs {
    pub fn click(&self) -> f64 {
        self.d0 + self.d1
    }

    /// Probability that a click names the wrong bit.
    pub fn error_rate(&self, bit: Bit) -> f64 {
        let wrong = match bit {
            Bit::Zero => self.d1,
            Bit::One => self.d0,
        };
        if self.click() > 0.0 {
            wrong / self.click()
        } else {
            0.0
        }
    }
}

/// Detection probabilities of one tuning with each interferometer either
/// coherent or fully dephased.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DephasingComponents {
    pub coherent: DetectionProbs,
    pub inner_dephased: DetectionProbs,
    pub outer_dephased: DetectionProbs,
    pub both_dephased: DetectionProbs,
}

fn shift_phase(c: &mut Circuit, idx: usize, by: f64) {
    if let Some(Element::PhaseShift { radians, .. }) = c.elements.get_mut(idx) {
        *radians += by;
    }
}

/// Detection probabilities averaged over independent uniform phases on the
/// shifters at `slots`.
pub fn phase_averaged_probs(c: &Circuit, slots: &[usize]) -> Result<DetectionProbs> {
    let combos = PHASE_POINTS.pow(slots.len() as u32);
    let mut acc = DetectionProbs { d0: 0.0, d1: 0.0, lost: 0.0 };
    for k in 0..combos {
        let mut shifted = c.clone();
        let mut rest = k;
        for &idx in slots {
            let j = rest % PHASE_POINTS;
            rest /= PHASE_POINTS;
            shift_phase(&mut shifted, idx, TAU * j as f64 / PHASE_POINTS as f64);
        }
        let p = shifted.detection_probs()?;
        acc.d0 += p.d0;
        acc.d1 += p.d1;
        acc.lost += p.lost;
    }
    let n = combos as f64;
    Ok(DetectionProbs { d0: acc.d0 / n, d1: acc.d1 / n, lost: acc.lost / n })
}

impl DephasingComponents {
    /// Inner dephasing randomizes each inner pass's B-arm phase
    /// independently; outer dephasing randomizes the C-arm phase.
    pub fn from_circuit(c: &Circuit) -> Result<Self> {
        let inner = c.slots.inner.clone();
        let outer: Vec<usize> = c.slots.outer.into_iter().collect();
        let both: Vec<usize> = inner.iter().chain(&outer).copied().collect();
        Ok(DephasingComponents {
            coherent: c.detection_probs()?,
            inner_dephased: phase_averaged_probs(c, &inner)?,
            outer_dephased: phase_averaged_probs(c, &outer)?,
            both_dephased: phase_averaged_probs(c, &both)?,
        })
    }

    /// Convex mixture with weights `V_i V_o`, `(1−V_i) V_o`, `V_i (1−V_o)`,
    /// `(1−V_i)(1−V_o)`.
    pub fn mix(&self, v_inner: f64, v_outer: f64) -> DetectionProbs {
        let w = [
            (v_inner * v_outer, &self.coherent),
            ((1.0 - v_inner) * v_outer, &self.inner_dephased),
            (v_inner * (1.0 - v_outer), &self.outer_dephased),
            ((1.0 - v_inner) * (1.0 - v_outer), &self.both_dephased),
        ];
        let mut p = DetectionProbs { d0: 0.0, d1: 0.0, lost: 0.0 };
        for (weight, c) in w {
            if weight != 0.0 {
                p.d0 += weight * c.d0;
                p.d1 += weight * c.d1;
                p.lost += weight * c.lost;
            }
        }
        p
    }
}

/// Applies heralding efficiency and dark clicks to photon probabilities.
pub fn with_noise(p: DetectionProbs, model: &ImperfectionModel) -> TrialProbs {
    let eta = model.heralding_efficiency;
    let photon_d0 = eta * p.d0;
    let photon_d1 = eta * p.d1;
    let silent = 1.0 - photon_d0 - photon_d1;
    let d0 = photon_d0 + silent * model.dark_rate / 2.0;
    let d1 = photon_d1 + silent * model.dark_rate / 2.0;
    TrialProbs { d0, d1, lost: 1.0 - d0 - d1 }
}

/// The two bit settings of the modulator-free device.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub bit0: DephasingComponents,
    pub bit1: DephasingComponents,
}

impl Channel {
    pub fn from_config(cfg: &DeviceConfig) -> Result<Self> {
        let optics = DeviceOptics::from_config(cfg).without_eoms();
        let comps = |bit: Bit| -> Result<DephasingComponents> {
            DephasingComponents::from_circuit(&build_from_optics(&optics, Tuning::preset(bit.preset()))?)
        };
        Ok(Channel { bit0: comps(Bit::Zero)?, bit1: comps(Bit::One)? })
    }

    pub fn components(&self, bit: Bit) -> &DephasingComponents {
        match bit {
            Bit::Zero => &self.bit0,
            Bit::One => &self.bit1,
        }
    }

    pub fn trial_probs(&self, bit: Bit, model: &ImperfectionModel) -> TrialProbs {
        with_noise(self.components(bit).mix(model.v_inner, model.v_outer), model)
    }

    /// `(P(1 | click, bit 0), P(0 | click, bit 1))`.
    pub fn error_rates(&self, model: &ImperfectionModel) -> (f64, f64) {
        (
            self.trial_probs(Bit::Zero, model).error_rate(Bit::Zero),
            self.trial_probs(Bit::One, model).error_rate(Bit::One),
        )
    }
}

/// Per-trial outcome probabilities for one bit setting of the device.
pub fn trial_probs(cfg: &DeviceConfig, bit: Bit, model: &ImperfectionModel) -> Result<TrialProbs> {
    model.validate()?;
    Ok(Channel::from_config(cfg)?.trial_probs(bit, model))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum FitResult {
    Fit { model: ImperfectionModel, err0: f64, err1: f64 },
    Infeasible { reason: String },
}

impl FitResult {
    pub fn into_result(self) -> Result<ImperfectionModel> {
        match self {
            FitResult::Fit { model, .. } => Ok(model),
            FitResult::Infeasible { reason } => Err(Error::Config(format!("imperfection fit infeasible: {reason}"))),
        }
    }
}

/// Tolerance on the fitted conditional error rates.
pub const FIT_TOLERANCE: f64 = 1e-4;

/// Root of a non-increasing `f` on `[0, 1]`, or `None` when `target` lies
/// outside `[f(1), f(0)]`.
fn bisect_decreasing(f: impl Fn(f64) -> f64, target: f64) -> Option<f64> {
    if f(1.0) >= target {
        return (f(1.0) - target <= FIT_TOLERANCE / 10.0).then_some(1.0);
    }
    if f(0.0) < target {
        return None;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Visibilities reproducing the target conditional error rates, with the
/// given dark rate and heralding efficiency held fixed.
///
/// Nested bisection: for each outer visibility the inner one is solved from
/// the bit-0 error, then the outer one from the bit-1 error.
pub fn fit_channel(channel: &Channel, dark_rate: f64, heralding_efficiency: f64, err0: f64, err1: f64) -> FitResult {
    for (name, v) in [("err0", err0), ("err1", err1)] {
        if !(0.0..0.5).contains(&v) {
            return FitResult::Infeasible { reason: format!("{name} = {v} is outside [0, 0.5)") };
        }
    }
    let model = |v_inner: f64, v_outer: f64| ImperfectionModel { v_inner, v_outer, dark_rate, heralding_efficiency };
    let inner_for = |v_outer: f64| bisect_decreasing(|vi| channel.error_rates(&model(vi, v_outer)).0, err0);
    let err1_at = |v_outer: f64| inner_for(v_outer).map(|vi| channel.error_rates(&model(vi, v_outer)).1);

    // Outer visibilities for which the bit-0 target is reachable at all.
    let reachable = |vo: f64| inner_for(vo).is_some();
    if !reachable(1.0) && !reachable(0.0) {
        return FitResult::Infeasible { reason: format!("no inner visibility gives err0 = {err0}") };
    }
    let v_outer = bisect_decreasing(|vo| err1_at(vo).unwrap_or(f64::INFINITY), err1);
    let Some(v_outer) = v_outer else {
        return FitResult::Infeasible { reason: format!("no outer visibility gives err1 = {err1} together with err0 = {err0}") };
    };
    let Some(v_inner) = inner_for(v_outer) else {
        return FitResult::Infeasible { reason: format!("no inner visibility gives err0 = {err0}") };
    };
    let m = model(v_inner, v_outer);
    let (e0, e1) = channel.error_rates(&m);
    if (e0 - err0).abs() > FIT_TOLERANCE || (e1 - err1).abs() > FIT_TOLERANCE {
        return FitResult::Infeasible {
            reason: format!("best fit gives ({e0:.6}, {e1:.6}) for targets ({err0}, {err1})"),
        };
    }
    FitResult::Fit { model: m, err0: e0, err1: e1 }
}

/// Fits visibilities for a device, taking dark rate and heralding
/// efficiency from its configuration.
pub fn fit_model(cfg: &DeviceConfig, err0: f64, err1: f64) -> Result<FitResult> {
    let (dark, eta) = match cfg.imperfections {
        ImperfectionSetting::Fit { dark_rate, heralding_efficiency, .. } => (dark_rate, heralding_efficiency),
        ImperfectionSetting::Explicit(m) => (m.dark_rate, m.heralding_efficiency),
    };
    Ok(fit_channel(&Channel::from_config(cfg)?, dark, eta, err0, err1))
}
