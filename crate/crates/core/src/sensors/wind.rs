//! Deflection-type anemometer: accelerometer counts to wind speed through a
//! calibration table, after removing the chassis tilt.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WindError {
    #[error("calibration table needs at least two entries")]
    EmptyTable,
    #[error("calibration table is not monotone at entry {0}")]
    NonMonotoneTable(usize),
}

/// `(deflection counts, speed m/s)` knots, strictly increasing in deflection
/// and nondecreasing in speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct WindTable(Vec<(f64, f64)>);

impl WindTable {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self, WindError> {
        if knots.len() < 2 {
            return Err(WindError::EmptyTable);
        }
        for (i, w) in knots.windows(2).enumerate() {
            if !(w[1].0 > w[0].0 && w[1].1 >= w[0].1) {
                return Err(WindError::NonMonotoneTable(i + 1));
            }
        }
        Ok(WindTable(knots))
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.0
    }

    /// Piecewise-linear lookup, clamped at both ends.
    pub fn lookup(&self, deflection: f64) -> f64 {
        let k = &self.0;
        if deflection <= k[0].0 {
            return k[0].1;
        }
        let last = k[k.len() - 1];
        if deflection >= last.0 {
            return last.1;
        }
        let i = k.partition_point(|(d, _)| *d <= deflection);
        let (d0, s0) = k[i - 1];
        let (d1, s1) = k[i];
        s0 + (deflection - d0) / (d1 - d0) * (s1 - s0)
    }
}

impl TryFrom<Vec<(f64, f64)>> for WindTable {
    type Error = WindError;

    fn try_from(v: Vec<(f64, f64)>) -> Result<Self, Self::Error> {
        WindTable::new(v)
    }
}

impl From<WindTable> for Vec<(f64, f64)> {
    fn from(t: WindTable) -> Self {
        t.0
    }
}

pub fn wind_speed(deflection: f64, tilt_correction: f64, table: &WindTable) -> f64 {
    table.lookup(deflection - tilt_correction)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> WindTable {
        WindTable::new(vec![(0.0, 0.0), (100.0, 5.0), (150.0, 12.0)]).unwrap()
    }

    #[test]
    fn knots_midpoints_and_clamping() {
        let t = table();
        assert_eq!(wind_speed(100.0, 0.0, &t), 5.0);
        assert_eq!(wind_speed(60.0, 10.0, &t), 2.5);
        assert_eq!(wind_speed(125.0, 0.0, &t), 8.5);
        assert_eq!(wind_speed(-20.0, 0.0, &t), 0.0);
        assert_eq!(wind_speed(400.0, 0.0, &t), 12.0);
    }

    #[test]
    fn table_validation() {
        assert_eq!(WindTable::new(vec![(0.0, 0.0)]), Err(WindError::EmptyTable));
        assert_eq!(
            WindTable::new(vec![(0.0, 0.0), (0.0, 1.0)]),
            Err(WindError::NonMonotoneTable(1))
        );
        assert_eq!(
            WindTable::new(vec![(0.0, 0.0), (10.0, 3.0), (20.0, 2.0)]),
            Err(WindError::NonMonotoneTable(2))
        );
    }
}
