//! Ultrasonic time-of-flight ranging.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RangingError {
    #[error("echo duration {0} s is negative or not a number")]
    NegativeDuration(f64),
}

/// Speed of sound in air, m/s, linear in temperature (deg C).
pub fn speed_of_sound(temperature: f64) -> f64 {
    331.3 + 0.606 * temperature
}

/// Distance to the reflector in meters. The echo-high time covers the round
/// trip, hence the halving.
pub fn ultrasonic_distance(echo_high_duration: f64, temperature: f64) -> Result<f64, RangingError> {
    if echo_high_duration.is_nan() || echo_high_duration < 0.0 {
        return Err(RangingError::NegativeDuration(echo_high_duration));
    }
    Ok(speed_of_sound(temperature) * echo_high_duration / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        assert_eq!(ultrasonic_distance(0.0, 20.0).unwrap(), 0.0);
        let d = ultrasonic_distance(0.002, 20.0).unwrap();
        assert!((d - 0.34342).abs() < 1e-12);
        assert!((speed_of_sound(20.0) - 343.0).abs() < 0.5);
        assert!(ultrasonic_distance(0.002, 0.0).unwrap() < d);
        assert!(ultrasonic_distance(-1e-6, 20.0).is_err());
    }
}
