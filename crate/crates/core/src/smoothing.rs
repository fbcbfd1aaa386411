/// Exponentially smoothed RSSI: `alpha * new + (1 - alpha) * historic`.
///
/// `alpha = 1` tracks the newest sample only, `alpha = 0` never moves.
#[inline]
pub fn smooth_rssi(alpha: f64, new_rssi: f64, historic: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&alpha), "alpha {alpha} outside [0, 1]");
    alpha * new_rssi + (1.0 - alpha) * historic
}
