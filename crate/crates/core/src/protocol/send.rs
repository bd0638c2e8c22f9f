use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Serialize, Serializer};

use super::{Bit, Channel, ImperfectionModel, TrialProbs};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TrialOutcome {
    D0,
    D1,
    Lost,
}

pub fn sample_trial<R: Rng>(p: &TrialProbs, rng: &mut R) -> TrialOutcome {
    let u: f64 = rng.random();
    if u < p.d0 {
        TrialOutcome::D0
    } else if u < p.d0 + p.d1 {
        TrialOutcome::D1
    } else {
        TrialOutcome::Lost
    }
}

/// How the clicks in one time bin become a bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Policy {
    /// The first click decides.
    #[default]
    FirstClick,
    /// Majority over the first `K` clicks (fewer if the bin runs out).
    Majority(u32),
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "first-click" {
            return Ok(Policy::FirstClick);
        }
        let k = s
            .strip_prefix("majority:")
            .ok_or_else(|| Error::Config(format!("unknown policy {s:?}; use first-click or majority:K")))?;
        let k: u32 = k
            .parse()
            .map_err(|_| Error::Config(format!("majority needs a positive odd click count, got {k:?}")))?;
        if k == 0 || k % 2 == 0 {
            return Err(Error::Config(format!("majority needs a positive odd click count, got {k}")));
        }
        Ok(Policy::Majority(k))
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::FirstClick => f.write_str("first-click"),
            Policy::Majority(k) => write!(f, "majority:{k}"),
        }
    }
}

impl Serialize for Policy {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BinSchedule {
    pub bin_duration_s: f64,
    pub photon_rate_hz: f64,
    pub policy: Policy,
}

impl BinSchedule {
    pub fn trials_per_bin(&self) -> u64 {
        (self.bin_duration_s * self.photon_rate_hz).floor() as u64
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials_per_bin() < 1 {
            return Err(Error::Config(format!(
                "a bin of {} s at {} Hz holds no trials",
                self.bin_duration_s, self.photon_rate_hz
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ReceivedBit {
    Zero,
    One,
    Erasure,
}

impl ReceivedBit {
    pub fn value(self) -> Option<u8> {
        match self {
            ReceivedBit::Zero => Some(0),
            ReceivedBit::One => Some(1),
            ReceivedBit::Erasure => None,
        }
    }
}

/// What happened in one bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BitReport {
    pub received: ReceivedBit,
    /// Trials consumed before the bit was decided (or the bin ended).
    pub trials: u64,
    pub clicks: u64,
    /// Trials whose photon reached no detector.
    pub lost: u64,
}

/// Trials until the next click, drawn in one step: `Some(k)` means `k`
/// silent trials and then a click, `None` that the remaining `budget`
/// trials are all silent.
fn next_click<R: Rng>(p_click: f64, budget: u64, rng: &mut R) -> Option<u64> {
    if p_click <= 0.0 {
        return None;
    }
    let silent = if p_click >= 1.0 {
        0
    } else {
        Geometric::new(p_click).map(|g| g.sample(rng)).unwrap_or(u64::MAX)
    };
    (silent < budget).then_some(silent)
}

/// Sends one bit: Bob sets his shutters for `bit` and Alice collects one bin.
pub fn send_bit<R: Rng>(
    bit: Bit,
    channel: &Channel,
    model: &ImperfectionModel,
    schedule: &BinSchedule,
    rng: &mut R,
) -> BitReport {
    run_bin(&channel.trial_probs(bit, model), schedule, rng)
}

/// One bin of `schedule` with per-trial probabilities `p`.
pub fn run_bin<R: Rng>(p: &TrialProbs, schedule: &BinSchedule, rng: &mut R) -> BitReport {
    let budget = schedule.trials_per_bin();
    let p_click = p.click();
    let one_given_click = if p_click > 0.0 { p.d1 / p_click } else { 0.0 };
    let wanted = match schedule.policy {
        Policy::FirstClick => 1,
        Policy::Majority(k) => k as u64,
    };

    let mut report = BitReport { received: ReceivedBit::Erasure, trials: 0, clicks: 0, lost: 0 };
    let (mut zeros, mut ones) = (0u64, 0u64);
    while report.clicks < wanted {
        let remaining = budget - report.trials;
        match next_click(p_click, remaining, rng) {
            Some(silent) => {
                report.trials += silent + 1;
                report.lost += silent;
                report.clicks += 1;
                if rng.random::<f64>() < one_given_click {
                    ones += 1;
                } else {
                    zeros += 1;
                }
            }
            None => {
                report.trials += remaining;
                report.lost += remaining;
                break;
            }
        }
    }
    report.received = match zeros.cmp(&ones) {
        std::cmp::Ordering::Greater => ReceivedBit::Zero,
        std::cmp::Ordering::Less => ReceivedBit::One,
        std::cmp::Ordering::Equal => ReceivedBit::Erasure,
    };
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Domain};

    #[test]
    fn policy_parsing() {
        assert_eq!("first-click".parse::<Policy>().unwrap(), Policy::FirstClick);
        assert_eq!("majority:101".parse::<Policy>().unwrap(), Policy::Majority(101));
        assert!("majority:4".parse::<Policy>().is_err());
        assert!("majority:x".parse::<Policy>().is_err());
        assert!("vote".parse::<Policy>().is_err());
        assert_eq!(Policy::Majority(7).to_string(), "majority:7");
    }

    #[test]
    fn certain_click_decides_immediately() {
        let p = TrialProbs { d0: 1.0, d1: 0.0, lost: 0.0 };
        let s = BinSchedule { bin_duration_s: 1.0, photon_rate_hz: 10.0, policy: Policy::FirstClick };
        for i in 0..100 {
            let r = run_bin(&p, &s, &mut substream(1, Domain::Bit, i));
            assert_eq!(r.received, ReceivedBit::Zero);
            assert_eq!(r.trials, 1);
        }
    }

    #[test]
    fn silent_channel_erases() {
        let p = TrialProbs { d0: 0.0, d1: 0.0, lost: 1.0 };
        let s = BinSchedule { bin_duration_s: 1.0, photon_rate_hz: 10.0, policy: Policy::Majority(3) };
        let r = run_bin(&p, &s, &mut substream(1, Domain::Bit, 0));
        assert_eq!(r, BitReport { received: ReceivedBit::Erasure, trials: 10, clicks: 0, lost: 10 });
    }

    #[test]
    fn sampled_trials_follow_probabilities() {
        let p = TrialProbs { d0: 0.2, d1: 0.3, lost: 0.5 };
        let mut rng = substream(3, Domain::Bit, 0);
        let n = 100_000;
        let d1 = (0..n).filter(|_| sample_trial(&p, &mut rng) == TrialOutcome::D1).count() as f64 / n as f64;
        let sigma = (0.3f64 * 0.7 / n as f64).sqrt();
        assert!((d1 - 0.3).abs() < 4.0 * sigma);
    }
}
