//! Transition schedules mapping a training iteration to the BC weight
//! `w_i ∈ [0, 1]` that blends the cloning loss with the RL loss.
//!
//! `constant(1)` is the pure-BC baseline, `constant(0)` pure RL. The decayed
//! forms all start at 1 and fall toward 0, so the child leans on its parents
//! early and explores on its own later.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// First iteration at which a schedule's weight drops below this threshold is
/// reported as its "transition step".
pub const TRANSITION_THRESHOLD: f64 = 0.01;

/// Sentinel transition step for schedules that never cross the threshold.
pub const TRANSITION_NEVER: i64 = -1;

#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    #[error("constant weight {0} outside [0, 1]")]
    WeightOutOfRange(f64),
    #[error("decay rate {0} outside (0, 1)")]
    DecayOutOfRange(f64),
}

/// Rule mapping training iteration `i` (0-based) to the BC weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum TransitionSchedule {
    /// Fixed weight; 1 = pure BC, 0 = pure RL.
    Constant { w: f64 },
    /// `lambda^i` geometric decay with `lambda ∈ (0, 1)`.
    Geometric { lambda: f64 },
    /// 1 before `switch_at`, 0 from it onward.
    Step { switch_at: u32 },
    /// `max(0, 1 - i / end)` linear ramp down.
    Linear { end: u32 },
    /// Hold at 1 for `hold` iterations, then decay as `lambda^(i - hold)`.
    GeometricHold { lambda: f64, hold: u32 },
}

impl TransitionSchedule {
    /// Checks parameter ranges so every emitted weight lands in `[0, 1]`.
    pub fn validate(&self) -> Result<(), ScheduleError> {
        match *self {
            TransitionSchedule::Constant { w } => {
                if !(0.0..=1.0).contains(&w) || !w.is_finite() {
                    return Err(ScheduleError::WeightOutOfRange(w));
                }
            }
            TransitionSchedule::Geometric { lambda }
            | TransitionSchedule::GeometricHold { lambda, .. } => {
                if !(lambda > 0.0 && lambda < 1.0) {
                    return Err(ScheduleError::DecayOutOfRange(lambda));
                }
            }
            TransitionSchedule::Step { .. } | TransitionSchedule::Linear { .. } => {}
        }
        Ok(())
    }

    /// BC weight at iteration `i`.
    pub fn bc_weight(&self, i: u32) -> f64 {
        match *self {
            TransitionSchedule::Constant { w } => w,
            TransitionSchedule::Geometric { lambda } => libm::pow(lambda, f64::from(i)),
            TransitionSchedule::Step { switch_at } => {
                if i < switch_at {
                    1.0
                } else {
                    0.0
                }
            }
            TransitionSchedule::Linear { end } => {
                if end == 0 {
                    0.0
                } else {
                    (1.0 - f64::from(i) / f64::from(end)).max(0.0)
                }
            }
            TransitionSchedule::GeometricHold { lambda, hold } => {
                if i < hold {
                    1.0
                } else {
                    libm::pow(lambda, f64::from(i - hold))
                }
            }
        }
    }

    /// First iteration with weight below [`TRANSITION_THRESHOLD`], or
    /// [`TRANSITION_NEVER`] if the weight never crosses it.
    pub fn transition_step(&self) -> i64 {
        match *self {
            TransitionSchedule::Constant { w } => {
                if w < TRANSITION_THRESHOLD {
                    0
                } else {
                    TRANSITION_NEVER
                }
            }
            TransitionSchedule::Step { switch_at } => i64::from(switch_at),
            TransitionSchedule::Linear { end } => {
                // First i with 1 - i/end < threshold; scan the analytic
                // candidate's neighborhood to absorb rounding.
                let guess = (1.0 - TRANSITION_THRESHOLD) * f64::from(end);
                self.scan_from(libm::floor(guess.max(0.0)) as u32)
            }
            TransitionSchedule::Geometric { lambda } => self.scan_from(geometric_guess(lambda, 0)),
            TransitionSchedule::GeometricHold { lambda, hold } => {
                self.scan_from(geometric_guess(lambda, hold))
            }
        }
    }

    /// Linear scan from a lower bound; all non-constant forms are
    /// non-increasing so the first hit is the answer.
    fn scan_from(&self, start: u32) -> i64 {
        let mut i = start;
        // Walk back in case the analytic guess overshot.
        while i > 0 && self.bc_weight(i - 1) < TRANSITION_THRESHOLD {
            i -= 1;
        }
        loop {
            if self.bc_weight(i) < TRANSITION_THRESHOLD {
                return i64::from(i);
            }
            i = match i.checked_add(1) {
                Some(next) => next,
                None => return TRANSITION_NEVER,
            };
        }
    }
}

fn geometric_guess(lambda: f64, hold: u32) -> u32 {
    // lambda^k < t  <=>  k > ln t / ln lambda (ln lambda < 0).
    let k = libm::log(TRANSITION_THRESHOLD) / libm::log(lambda);
    let k = if k.is_finite() { k.max(0.0) } else { 0.0 };
    hold.saturating_add(libm::floor(k) as u32)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geo(lambda: f64) -> TransitionSchedule {
        TransitionSchedule::Geometric { lambda }
    }

    #[test]
    fn geometric_weights() {
        assert_eq!(geo(0.99).bc_weight(0), 1.0);
        let w100 = geo(0.99).bc_weight(100);
        assert!((w100 - 0.366032).abs() < 1e-6, "0.99^100 = {w100}");
        assert_eq!(w100, libm::pow(0.99, 100.0));
    }

    #[test]
    fn constant_endpoints() {
        let bc = TransitionSchedule::Constant { w: 1.0 };
        let rl = TransitionSchedule::Constant { w: 0.0 };
        for i in [0, 1, 10, 1000] {
            assert_eq!(bc.bc_weight(i), 1.0);
            assert_eq!(rl.bc_weight(i), 0.0);
        }
        assert_eq!(bc.transition_step(), TRANSITION_NEVER);
        assert_eq!(rl.transition_step(), 0);
    }

    #[test]
    fn step_and_linear_forms() {
        let step = TransitionSchedule::Step { switch_at: 5 };
        assert_eq!(step.bc_weight(4), 1.0);
        assert_eq!(step.bc_weight(5), 0.0);
        assert_eq!(step.transition_step(), 5);

        let lin = TransitionSchedule::Linear { end: 10 };
        assert_eq!(lin.bc_weight(0), 1.0);
        assert_eq!(lin.bc_weight(5), 0.5);
        assert_eq!(lin.bc_weight(10), 0.0);
        assert_eq!(lin.bc_weight(20), 0.0);
        assert_eq!(lin.transition_step(), 10);
    }

    #[test]
    fn geometric_hold_holds_then_decays() {
        let s = TransitionSchedule::GeometricHold {
            lambda: 0.9,
            hold: 3,
        };
        assert_eq!(s.bc_weight(0), 1.0);
        assert_eq!(s.bc_weight(2), 1.0);
        assert_eq!(s.bc_weight(3), 1.0); // 0.9^0
        assert_eq!(s.bc_weight(4), 0.9);
        // 0.9^k < 0.01 first at k = 44, so i = 3 + 44.
        assert_eq!(s.transition_step(), 47);
        assert_eq!(geo(0.9).transition_step(), 44);
    }

    #[test]
    fn transition_step_is_first_crossing() {
        for s in [
            geo(0.9),
            geo(0.99),
            geo(0.999),
            TransitionSchedule::GeometricHold {
                lambda: 0.95,
                hold: 100,
            },
            TransitionSchedule::Linear { end: 333 },
        ] {
            let t = s.transition_step();
            assert!(t >= 0);
            let t = t as u32;
            assert!(s.bc_weight(t) < TRANSITION_THRESHOLD);
            if t > 0 {
                assert!(s.bc_weight(t - 1) >= TRANSITION_THRESHOLD);
            }
        }
    }

    #[test]
    fn weights_monotone_and_in_range() {
        for s in [
            geo(0.93),
            TransitionSchedule::Step { switch_at: 17 },
            TransitionSchedule::Linear { end: 40 },
            TransitionSchedule::GeometricHold {
                lambda: 0.97,
                hold: 25,
            },
        ] {
            let mut prev = f64::INFINITY;
            for i in 0..500 {
                let w = s.bc_weight(i);
                assert!((0.0..=1.0).contains(&w));
                assert!(w <= prev);
                prev = w;
            }
        }
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        assert!(TransitionSchedule::Constant { w: 1.2 }.validate().is_err());
        assert!(geo(1.0).validate().is_err());
        assert!(geo(0.0).validate().is_err());
        assert!(TransitionSchedule::GeometricHold {
            lambda: 1.5,
            hold: 0
        }
        .validate()
        .is_err());
        assert!(geo(0.5).validate().is_ok());
    }
}
