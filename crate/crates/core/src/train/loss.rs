//! Sigmoid and logistic loss in overflow-free form.

/// `1 / (1 + e^-x)`, evaluated without overflowing `exp` for large `|x|`.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)`.
#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// `-x log σ(θ) - (1 - x) log(1 - σ(θ))`.
///
/// Uses `-log σ(θ) = softplus(-θ)` and `-log(1 - σ(θ)) = softplus(θ)`.
#[inline]
pub fn logistic_loss(theta: f64, label: f64) -> f64 {
    let mut loss = 0.0;
    if label != 0.0 {
        loss += label * softplus(-theta);
    }
    if label != 1.0 {
        loss += (1.0 - label) * softplus(theta);
    }
    loss
}

/// `∂ℓ/∂θ = σ(θ) - x`.
///
/// Equal to `-x e^{-θ} σ(θ) + (1 - x) σ(θ)` for `x ∈ {0, 1}`.
#[inline]
pub fn loss_slope(theta: f64, label: f64) -> f64 {
    sigmoid(theta) - label
}
