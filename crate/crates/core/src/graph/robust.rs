//! Huber kernel on whitened squared residuals.

/// χ² 95% quantile for 2 degrees of freedom.
pub const CHI2_95_2DOF: f64 = 5.99;
/// χ² 95% quantile for 1 degree of freedom.
pub const CHI2_95_1DOF: f64 = 3.84;

/// IRLS weight: 1 inside the quadratic zone, `δ/√s` outside.
pub fn huber_weight(r_sq_weighted: f64, delta: f64) -> f64 {
    let r = r_sq_weighted.sqrt();
    if r <= delta {
        1.0
    } else {
        delta / r
    }
}

/// Robust cost `ρ(s)`: `s` inside, `2δ√s − δ²` outside.
pub fn huber_cost(r_sq_weighted: f64, delta: f64) -> f64 {
    let r = r_sq_weighted.sqrt();
    if r <= delta {
        r_sq_weighted
    } else {
        2.0 * delta * r - delta * delta
    }
}

/// Cost and IRLS weight for an optional kernel.
pub fn robustify(r_sq_weighted: f64, delta: Option<f64>) -> (f64, f64) {
    match delta {
        Some(d) => (huber_cost(r_sq_weighted, d), huber_weight(r_sq_weighted, d)),
        None => (r_sq_weighted, 1.0),
    }
}
