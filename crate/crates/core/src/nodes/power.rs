//! Two isolated batteries, their solar chargers, brown-out detection and
//! the emergency bridge between them.

use serde::{Deserialize, Serialize};

use crate::bus::Ticks;

pub const BROWN_OUT_VOLTS: f64 = 11.0;
pub const WAKE_VOLTS: f64 = 11.5;
pub const FULL_VOLTS: f64 = 12.7;
pub const EMPTY_VOLTS: f64 = 10.5;
const NOMINAL_VOLTS: f64 = 12.0;

/// Lead-acid battery with open-circuit voltage linear in state of charge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Battery {
    pub capacity_ah: f64,
    pub charge_ah: f64,
}

impl Battery {
    pub fn new(capacity_ah: f64, soc: f64) -> Self {
        Battery {
            capacity_ah,
            charge_ah: capacity_ah * soc.clamp(0.0, 1.0),
        }
    }

    pub fn soc(&self) -> f64 {
        if self.capacity_ah > 0.0 {
            self.charge_ah / self.capacity_ah
        } else {
            0.0
        }
    }

    pub fn volts(&self) -> f64 {
        EMPTY_VOLTS + self.soc() * (FULL_VOLTS - EMPTY_VOLTS)
    }

    fn apply(&mut self, net_watts: f64, dt_s: f64) {
        let delta = net_watts / NOMINAL_VOLTS * dt_s / 3600.0;
        self.charge_ah = (self.charge_ah + delta).clamp(0.0, self.capacity_ah);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerState {
    pub logic: Battery,
    pub power: Battery,
    pub bridged: bool,
    /// Ohms of the bridge resistor.
    pub bridge_resistance: f64,
    pub hibernating: bool,
    /// Logic-side draw at the last step; sets the bridge drop.
    pub logic_load_w: f64,
}

impl PowerState {
    pub fn new(capacity_ah: f64, logic_soc: f64, power_soc: f64, bridge_resistance: f64) -> Self {
        PowerState {
            logic: Battery::new(capacity_ah, logic_soc),
            power: Battery::new(capacity_ah, power_soc),
            bridged: false,
            bridge_resistance,
            hibernating: false,
            logic_load_w: 0.0,
        }
    }

    /// Voltage seen by the logic rail.
    pub fn battery_logic(&self) -> f64 {
        if self.bridged {
            let v = self.power.volts();
            let current = if v > 0.0 { self.logic_load_w / v } else { 0.0 };
            (v - current * self.bridge_resistance).max(0.0)
        } else {
            self.logic.volts().max(0.0)
        }
    }

    pub fn battery_power(&self) -> f64 {
        self.power.volts().max(0.0)
    }

    /// Close the contingency relays. Irreversible within a run.
    pub fn bridge(&mut self) {
        self.bridged = true;
    }
}

/// Instantaneous draw or harvest, per battery, in watts.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Rails {
    pub logic: f64,
    pub power: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PowerEvent {
    BrownOut { logic: f64, power: f64 },
    Recovered { logic: f64, power: f64 },
}

/// Integrate one step of charge and report threshold crossings. Once
/// tripped, hibernation holds until the logic rail passes the wake level.
pub fn power_step(p: &PowerState, load: Rails, solar: Rails, dt: Ticks) -> (PowerState, Vec<PowerEvent>) {
    let mut next = *p;
    let dt_s = dt as f64 / 1e6;
    next.logic_load_w = load.logic;
    if next.bridged {
        next.power
            .apply(solar.power + solar.logic - load.power - load.logic, dt_s);
        next.logic.apply(0.0, dt_s);
    } else {
        next.logic.apply(solar.logic - load.logic, dt_s);
        next.power.apply(solar.power - load.power, dt_s);
    }
    let mut events = Vec::new();
    let v = next.battery_logic();
    let rails = (v, next.battery_power());
    if !next.hibernating && v < BROWN_OUT_VOLTS {
        next.hibernating = true;
        events.push(PowerEvent::BrownOut {
            logic: rails.0,
            power: rails.1,
        });
    } else if next.hibernating && v > WAKE_VOLTS {
        next.hibernating = false;
        events.push(PowerEvent::Recovered {
            logic: rails.0,
            power: rails.1,
        });
    }
    (next, events)
}
