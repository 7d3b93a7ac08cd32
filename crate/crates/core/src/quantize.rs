/// `Q_Δ(x)`: `+Δ` for `x >= 0` (zero included), `-Δ` otherwise.
#[inline]
pub fn quantize(x: f64, delta: f64) -> f64 {
    debug_assert!(delta > 0.0);
    if x >= 0.0 {
        delta
    } else {
        -delta
    }
}

/// Sign bit of the binarized value: `true` iff `Q_Δ(x) = +Δ`.
#[inline]
pub fn quantized_bit(x: f32) -> bool {
    x >= 0.0
}
