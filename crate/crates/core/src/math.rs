//! Scalar math routed through `libm` so results are identical with and
//! without `std`.

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn log2(x: f64) -> f64 {
    libm::log2(x)
}

#[inline]
pub fn log10(x: f64) -> f64 {
    libm::log10(x)
}

#[inline]
pub fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

#[inline]
pub fn round(x: f64) -> f64 {
    libm::round(x)
}

#[inline]
pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

#[inline]
pub fn atan2(y: f64, x: f64) -> f64 {
    libm::atan2(y, x)
}

#[inline]
pub fn tanh(x: f64) -> f64 {
    libm::tanh(x)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub fn hypot(x: f64, y: f64) -> f64 {
    libm::hypot(x, y)
}

/// Decibels to a linear power ratio.
#[inline]
pub fn db_to_linear(db: f64) -> f64 {
    powf(10.0, db / 10.0)
}

/// Linear power ratio to decibels.
#[inline]
pub fn linear_to_db(x: f64) -> f64 {
    10.0 * log10(x)
}

/// dBm to watts.
#[inline]
pub fn dbm_to_watts(dbm: f64) -> f64 {
    powf(10.0, (dbm - 30.0) / 10.0)
}

/// Watts to dBm.
#[inline]
pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * log10(w) + 30.0
}

/// Logistic sigmoid, evaluated without overflow on either tail.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_conversions() {
        assert!((db_to_linear(30.0) - 1000.0).abs() < 1e-9);
        assert!((dbm_to_watts(-50.0) - 1e-8).abs() < 1e-20);
        assert!((dbm_to_watts(0.0) - 1e-3).abs() < 1e-15);
        assert!((watts_to_dbm(1.0) - 30.0).abs() < 1e-12);
        assert!((linear_to_db(db_to_linear(-73.2)) + 73.2).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_tails() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!(sigmoid(800.0) <= 1.0);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
    }
}
