//! Tipping-cup rain gauge with its snow-melt heater rule.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RainGauge {
    pub mm_per_tip: f64,
    pub tips: u32,
}

impl RainGauge {
    pub fn new(mm_per_tip: f64) -> Self {
        RainGauge { mm_per_tip, tips: 0 }
    }

    pub fn tip(&mut self) {
        self.tips = self.tips.wrapping_add(1);
    }

    pub fn rainfall_mm(&self) -> f64 {
        self.tips as f64 * self.mm_per_tip
    }
}

/// The funnel heater runs whenever it is freezing outside.
pub fn rain_heater_on(external_temperature: f64) -> bool {
    external_temperature < 0.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heater_threshold() {
        assert!(rain_heater_on(-0.1));
        assert!(!rain_heater_on(0.0));
        assert!(!rain_heater_on(4.0));
    }

    #[test]
    fn tips_accumulate() {
        let mut g = RainGauge::new(0.3);
        for _ in 0..10 {
            g.tip();
        }
        assert!((g.rainfall_mm() - 3.0).abs() < 1e-12);
    }
}
