//! CUBIC window growth and loss reaction, in MSS units and seconds.

use serde::{Deserialize, Serialize};

use crate::sim::{SimDuration, SimTime};

pub const DEFAULT_C: f64 = 0.4;
pub const DEFAULT_BETA: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubicState {
    /// Window at the last congestion event (the plateau of the curve).
    pub w_max: f64,
    /// Plateau before the last congestion event.
    pub w_max_last: f64,
    pub epoch_start: Option<SimTime>,
    /// Seconds from epoch start until the curve reaches `w_max`.
    pub k: f64,
    pub c_scale: f64,
    pub beta: f64,
    /// Reno-friendly window estimate.
    pub w_est: f64,
    pub reno_friendly: bool,
}

impl Default for CubicState {
    fn default() -> Self {
        CubicState::new(DEFAULT_C, DEFAULT_BETA, true)
    }
}

impl CubicState {
    pub fn new(c_scale: f64, beta: f64, reno_friendly: bool) -> Self {
        assert!(c_scale > 0.0);
        assert!(beta > 0.0 && beta < 1.0, "beta must lie in (0, 1)");
        CubicState {
            w_max: 0.0,
            w_max_last: 0.0,
            epoch_start: None,
            k: 0.0,
            c_scale,
            beta,
            w_est: 0.0,
            reno_friendly,
        }
    }

    /// Additive-increase factor that makes the estimate track Reno.
    pub fn alpha_aimd(&self) -> f64 {
        3.0 * (1.0 - self.beta) / (1.0 + self.beta)
    }

    /// `K = cbrt(W_max * (1 - beta) / C)`: time for the curve to climb back
    /// from `beta * W_max` to `W_max`.
    pub fn k_after_reduction(&self) -> f64 {
        (self.w_max * (1.0 - self.beta) / self.c_scale).cbrt()
    }

    /// Starts a growth epoch at `now` from window `cwnd`.
    pub fn begin_epoch(&mut self, now: SimTime, cwnd: f64) {
        self.epoch_start = Some(now);
        if cwnd < self.w_max {
            self.k = ((self.w_max - cwnd) / self.c_scale).cbrt();
        } else {
            self.k = 0.0;
            self.w_max = cwnd;
        }
        self.w_est = cwnd;
    }

    /// Window growth for `acked_segments` newly acknowledged in congestion
    /// avoidance. `rtt` is the smoothed round-trip estimate.
    pub fn on_ack_avoidance(&mut self, cwnd: f64, acked_segments: f64, now: SimTime, rtt: SimDuration) -> f64 {
        if self.epoch_start.is_none() {
            self.begin_epoch(now, cwnd);
        }
        let start = self.epoch_start.expect("epoch started");
        let t = now.since(start) + rtt;
        let mut target = cubic_target_window(t.as_secs_f64(), self);
        if self.reno_friendly {
            self.w_est += self.alpha_aimd() * acked_segments / cwnd;
            target = target.max(self.w_est);
        }
        // Growth per RTT is capped at 50%.
        let target = target.min(1.5 * cwnd);
        let next = if target > cwnd {
            // A stretch ACK may not carry the window past the target.
            cwnd + ((target - cwnd) / cwnd * acked_segments).min(target - cwnd)
        } else {
            cwnd + 0.01 * acked_segments / cwnd
        };
        next.max(1.0)
    }
}

/// `W(t) = C * (t - K)^3 + W_max`, with `t` in seconds since epoch start.
pub fn cubic_target_window(t_since_epoch: f64, cs: &CubicState) -> f64 {
    cs.c_scale * (t_since_epoch - cs.k).powi(3) + cs.w_max
}

/// Multiplicative decrease with fast convergence. Returns the new
/// `(cwnd, ssthresh)`, both in MSS.
pub fn cubic_on_loss(cs: &mut CubicState, cwnd: f64) -> (f64, f64) {
    let previous = cs.w_max;
    cs.w_max = if cwnd < previous {
        cwnd * (1.0 + cs.beta) / 2.0
    } else {
        cwnd
    };
    cs.w_max_last = previous;
    let cwnd = (cwnd * cs.beta).max(1.0);
    cs.epoch_start = None;
    cs.k = cs.k_after_reduction();
    (cwnd, cwnd)
}
