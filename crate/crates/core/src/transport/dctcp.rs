//! DCTCP marked-fraction estimator and window reaction.

use serde::{Deserialize, Serialize};

/// Default EWMA gain for the marked-fraction estimate.
pub const DEFAULT_G: f64 = 1.0 / 16.0;

/// `alpha <- (1 - g) * alpha + g * f`, clamped to `[0, 1]`.
pub fn dctcp_update_alpha(alpha: f64, f: f64, g: f64) -> f64 {
    ((1.0 - g) * alpha + g * f).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DctcpState {
    pub alpha: f64,
    pub g: f64,
    pub bytes_acked_epoch: u64,
    pub bytes_marked_epoch: u64,
    /// The epoch ends once the cumulative ACK reaches this offset.
    pub epoch_end_seq: u64,
    /// Set when the window was already reduced during this epoch.
    pub ce_cut_done_this_window: bool,
}

impl Default for DctcpState {
    fn default() -> Self {
        DctcpState::new(DEFAULT_G)
    }
}

impl DctcpState {
    /// Starts with alpha = 1, the conservative choice.
    pub fn new(g: f64) -> Self {
        assert!(g > 0.0 && g <= 1.0, "gain must lie in (0, 1]");
        DctcpState {
            alpha: 1.0,
            g,
            bytes_acked_epoch: 0,
            bytes_marked_epoch: 0,
            epoch_end_seq: 0,
            ce_cut_done_this_window: false,
        }
    }

    /// Accounts newly acknowledged bytes, marked or not.
    pub fn on_acked(&mut self, bytes: u64, ece: bool) {
        self.bytes_acked_epoch += bytes;
        if ece {
            self.bytes_marked_epoch += bytes;
        }
    }

    pub fn marked_fraction(&self) -> f64 {
        if self.bytes_acked_epoch == 0 {
            0.0
        } else {
            self.bytes_marked_epoch as f64 / self.bytes_acked_epoch as f64
        }
    }
}

/// Outcome of closing one observation window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochOutcome {
    pub cwnd: f64,
    /// Whether the window was cut because of marks.
    pub reduced: bool,
}

/// Closes the current epoch: folds the marked fraction into alpha and, if
/// any mark was seen and no reduction happened yet in this window, scales
/// the window by `1 - alpha / 2`. `send_front` becomes the next epoch end.
pub fn dctcp_on_epoch_end(cwnd: f64, d: &mut DctcpState, send_front: u64) -> EpochOutcome {
    let f = d.marked_fraction();
    d.alpha = dctcp_update_alpha(d.alpha, f, d.g);
    let marked = d.bytes_marked_epoch > 0;
    let reduce = marked && !d.ce_cut_done_this_window;
    let cwnd = if reduce {
        (cwnd * (1.0 - d.alpha / 2.0)).max(1.0)
    } else {
        cwnd
    };
    d.bytes_acked_epoch = 0;
    d.bytes_marked_epoch = 0;
    d.ce_cut_done_this_window = false;
    d.epoch_end_seq = send_front;
    EpochOutcome { cwnd, reduced: reduce }
}
