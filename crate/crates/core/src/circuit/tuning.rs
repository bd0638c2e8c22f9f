//! Solving the preset's port conditions for phases and attenuator.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use super::modes::{D0, M1};
use super::{Circuit, PhaseSet, Preset, Tuning};
use crate::config::{AttenuatorSetting, DeviceConfig};
use crate::error::{Error, Result};
use crate::optics::ModeId;

/// Residual allowed on a dark port after solving.
pub const DARK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PortCondition {
    Dark,
    Bright,
}

/// Phase `φ` that makes `amp(φ)` dark or bright.
///
/// A single phase shifter enters a port amplitude as `a + b·e^{iφ}`, so two
/// probes at `0` and `π` pin down `a` and `b`; the dark root is where
/// `b·e^{iφ}` points opposite to `a`.
pub(crate) fn solve_phase(
    amp: impl Fn(f64) -> Result<Complex64>,
    condition: PortCondition,
) -> Result<f64> {
    let p0 = amp(0.0)?;
    let ppi = amp(PI)?;
    let a = (p0 + ppi) / 2.0;
    let b = (p0 - ppi) / 2.0;
    if b.norm() < 1e-14 {
        return Err(Error::Config("phase shifter does not reach the port being tuned".into()));
    }
    let phi = match condition {
        PortCondition::Dark => (-a).arg() - b.arg(),
        PortCondition::Bright => a.arg() - b.arg(),
    }
    .rem_euclid(TAU);
    let expected = match condition {
        PortCondition::Dark => (a.norm() - b.norm()).abs(),
        PortCondition::Bright => a.norm() + b.norm(),
    };
    let got = amp(phi)?.norm();
    if (got - expected).abs() > DARK_TOLERANCE {
        return Err(Error::Config(format!(
            "port amplitude is not affine in the tuning phase ({got} vs {expected})"
        )));
    }
    Ok(phi)
}

fn with_t(c: Circuit, t: f64) -> Circuit {
    let mut c = c;
    c.set_attenuator(t);
    c
}

/// Alice's phases for `preset`.
///
/// Inner: the first inner pass is dark toward the connecting mirror (bits)
/// or bright toward it (calibration); the second pass shares the phase.
/// Outer: dark at D0 with the shutters in (bits) or bright at D0 unblocked
/// (calibration).
pub fn solve_phases(
    skeleton: &dyn Fn(bool) -> Result<Circuit>,
    attenuator_t: f64,
    preset: Preset,
) -> Result<PhaseSet> {
    let open = with_t(skeleton(false)?, attenuator_t);
    let inner_cond = match preset {
        Preset::Calibration => PortCondition::Bright,
        Preset::Bit0 | Preset::Bit1 => PortCondition::Dark,
    };
    let mirror = ModeId::new(M1);
    let inner = solve_phase(
        |phi| {
            let mut c = open.clone();
            c.set_phases(PhaseSet { inner: phi, outer: 0.0 });
            c.carrier_after_creation(&mirror)
        },
        inner_cond,
    )?;

    let (outer_circuit, outer_cond) = match preset {
        Preset::Calibration => (open, PortCondition::Bright),
        Preset::Bit0 | Preset::Bit1 => (with_t(skeleton(true)?, attenuator_t), PortCondition::Dark),
    };
    let d0 = ModeId::new(D0);
    let outer = solve_phase(
        |phi| {
            let mut c = outer_circuit.clone();
            c.set_phases(PhaseSet { inner, outer: phi });
            Ok(c.propagate()?.carrier(&d0))
        },
        outer_cond,
    )?;
    Ok(PhaseSet { inner, outer })
}

/// Attenuator transmission that nulls D0 in a blocked circuit.
///
/// Root of `|a_arms| − |a_C(t)|` on `(0, 1]`, where `a_C(t)` is the part
/// of the D0 amplitude that travels through the attenuator.
pub fn balance_attenuator_on(blocked: &Circuit) -> Result<f64> {
    if blocked.slots.attenuator.is_none() {
        return Err(Error::Config("circuit has no attenuator".into()));
    }
    let d0 = blocked.detector_mode(D0)?.clone();
    let amp = |t: f64| -> Result<Complex64> {
        let mut c = blocked.clone();
        c.set_attenuator(t);
        Ok(c.propagate()?.carrier(&d0))
    };
    let other = amp(0.0)?;
    let through = |t: f64| -> Result<f64> { Ok(other.norm() - (amp(t)? - other).norm()) };
    if other.norm() < 1e-15 {
        return Err(Error::Config("no amplitude reaches D0 outside the attenuated arm; no balancing root in (0, 1]".into()));
    }
    if through(1.0)? > 0.0 {
        return Err(Error::Config(
            "attenuated arm is too weak to cancel D0 even at t = 1; no balancing root in (0, 1]".into(),
        ));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if through(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);

    // With the arm amplitudes matched, one outer phase must null D0.
    let mut check = blocked.clone();
    check.set_attenuator(t);
    let outer = solve_phase(
        |phi| {
            let mut c = check.clone();
            if let Some(idx) = c.slots.outer {
                c.set_phase(idx, phi);
            }
            Ok(c.propagate()?.carrier(&d0))
        },
        PortCondition::Dark,
    )?;
    if let Some(idx) = check.slots.outer {
        check.set_phase(idx, outer);
    }
    let residual = check.propagate()?.carrier(&d0).norm();
    if residual > DARK_TOLERANCE {
        return Err(Error::Config(format!("balanced attenuator leaves |amp(D0)| = {residual}")));
    }
    Ok(t)
}

/// Balanced attenuator for the device in the blocked (bit 1) configuration.
pub fn balance_attenuator(cfg: &DeviceConfig, tuning: Tuning) -> Result<f64> {
    if !tuning.blocked {
        return Err(Error::Config("attenuator balancing needs the shutters inserted".into()));
    }
    let optics = super::DeviceOptics::from_config(cfg);
    balance_attenuator_on(&super::unfolded_skeleton(&optics, true)?)
}

/// Fills a skeleton's attenuator and phases according to `tuning`.
pub(crate) fn tune(
    skeleton: &dyn Fn(bool) -> Result<Circuit>,
    attenuator: AttenuatorSetting,
    tuning: Tuning,
) -> Result<Circuit> {
    tuning.validate()?;
    let t = match (tuning.attenuator_t, attenuator) {
        (Some(t), _) | (None, AttenuatorSetting::Fixed(t)) => t,
        (None, AttenuatorSetting::Auto) => balance_attenuator_on(&skeleton(true)?)?,
    };
    let phases = match tuning.phases {
        Some(p) => p,
        None => solve_phases(skeleton, t, tuning.preset)?,
    };
    let mut c = skeleton(tuning.blocked)?;
    c.set_attenuator(t);
    c.set_phases(phases);
    Ok(c)
}
