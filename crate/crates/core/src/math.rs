//! Scalar math routed through `libm` so results do not depend on whether
//! `std` is linked.

pub use libm::{cos, exp, fabs as abs, floor, log as ln, pow, sin, sqrt};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    ln(p / (1.0 - p))
}

pub fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}

pub fn log10(x: f64) -> f64 {
    libm::log10(x)
}
