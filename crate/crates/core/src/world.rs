//! The physical surroundings the sensors observe: chassis attitude, the
//! geomagnetic field and the arm's soft-iron disturbance, weather signals,
//! distances, the supply rails and position.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bus::Ticks;
use crate::nodes::outputs::ArmActuator;
use crate::nodes::power::PowerState;
use crate::sensors::{
    decode_segments, glyph_mask, ultrasonic_distance, wind_speed, BiasCalibration, SegmentPattern, SensorKind,
    SensorValue, Vec3, WindTable,
};

/// A scalar quantity as a function of simulation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum Signal {
    Constant {
        value: f64,
    },
    Sine {
        mean: f64,
        amplitude: f64,
        period_s: f64,
        #[serde(default)]
        phase_s: f64,
    },
    Ramp {
        start: f64,
        slope_per_s: f64,
    },
    Sawtooth {
        lo: f64,
        hi: f64,
        period_s: f64,
    },
}

impl Signal {
    pub fn at(&self, now: Ticks) -> f64 {
        let t = now as f64 / 1e6;
        match *self {
            Signal::Constant { value } => value,
            Signal::Sine {
                mean,
                amplitude,
                period_s,
                phase_s,
            } => mean + amplitude * (std::f64::consts::TAU * (t + phase_s) / period_s).sin(),
            Signal::Ramp { start, slope_per_s } => start + slope_per_s * t,
            Signal::Sawtooth { lo, hi, period_s } => lo + (hi - lo) * (t / period_s).fract(),
        }
    }

    pub fn validate(&self) -> Result<(), &'static str> {
        match *self {
            Signal::Sine { period_s, .. } | Signal::Sawtooth { period_s, .. } if !(period_s > 0.0) => {
                Err("period_s must be positive")
            }
            _ => Ok(()),
        }
    }
}

/// How one attached sensor turns the world into a raw value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SensorModel {
    /// Direct analog or digital reading of a signal.
    Signal {
        signal: Signal,
        #[serde(default)]
        noise: f64,
    },
    /// Reading captured from a handheld meter's seven-segment display.
    Display {
        signal: Signal,
        digits: u8,
        decimals: u8,
    },
    Ultrasonic {
        distance_m: Signal,
        air_temperature: Signal,
    },
    Anemometer {
        speed: Signal,
        #[serde(default)]
        tilt_counts: f64,
    },
    Rain {
        tips_per_hour: f64,
    },
    Accelerometer {
        #[serde(default)]
        noise: f64,
    },
    Magnetometer {
        #[serde(default)]
        noise: f64,
    },
    Gyro {
        #[serde(default)]
        noise: f64,
    },
    ArmPotentiometer {
        #[serde(default)]
        noise: f64,
    },
    BatteryMonitor,
}

impl SensorModel {
    /// Whether this model can feed a sensor of `kind`.
    pub fn supports(&self, kind: SensorKind) -> bool {
        use SensorKind as K;
        match self {
            SensorModel::Signal { .. } | SensorModel::Display { .. } => {
                !kind.is_vector() && !matches!(kind, K::Rainfall | K::Battery)
            }
            SensorModel::Ultrasonic { .. } => kind == K::Distance,
            SensorModel::Anemometer { .. } => kind == K::Wind,
            SensorModel::Rain { .. } => kind == K::Rainfall,
            SensorModel::Accelerometer { .. } => kind == K::Accel,
            SensorModel::Magnetometer { .. } => kind == K::Mag,
            SensorModel::Gyro { .. } => kind == K::Gyro,
            SensorModel::ArmPotentiometer { .. } => kind == K::ArmAngle,
            SensorModel::BatteryMonitor => kind == K::Battery,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub pitch_deg: f64,
    pub roll_deg: f64,
    pub heading_deg: f64,
    /// Geomagnetic field in the local frame (north, east, down), microtesla.
    pub field_ut: Vec3,
    /// Arm-induced soft-iron bias actually present on the chassis.
    pub soft_iron: BiasCalibration,
    pub arm_rate_deg_s: f64,
    pub arm_initial_deg: f64,
    pub latitude: f64,
    pub longitude: f64,
    /// Position change per second of driving, degrees on each axis.
    pub drive_step_deg: f64,
    pub gps_noise_deg: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        let field = [18.0, 1.5, 50.0];
        WorldConfig {
            pitch_deg: 0.0,
            roll_deg: 0.0,
            heading_deg: 0.0,
            field_ut: field,
            soft_iron: BiasCalibration {
                bias_raised: [4.0, -2.0, 6.0],
                bias_lowered: [1.0, 0.5, -3.0],
                reference_free_field: field,
            },
            arm_rate_deg_s: 6.0,
            arm_initial_deg: 0.0,
            latitude: 49.25,
            longitude: -123.1,
            drive_step_deg: 0.0001,
            gps_noise_deg: 0.0,
        }
    }
}

/// Passive rotation of a local-frame vector into the body frame: heading
/// about z, then pitch about y, then roll about x.
pub fn world_to_body(v: Vec3, heading_deg: f64, pitch_deg: f64, roll_deg: f64) -> Vec3 {
    let (sy, cy) = heading_deg.to_radians().sin_cos();
    let (sp, cp) = pitch_deg.to_radians().sin_cos();
    let (sr, cr) = roll_deg.to_radians().sin_cos();
    let a = [cy * v[0] + sy * v[1], -sy * v[0] + cy * v[1], v[2]];
    let b = [cp * a[0] - sp * a[2], a[1], sp * a[0] + cp * a[2]];
    [b[0], cr * b[1] + sr * b[2], -sr * b[1] + cr * b[2]]
}

/// Masks a display would show for `value`, right aligned over `digits`
/// positions, and the decimal-point mask.
pub fn display_segments(value: f64, digits: u8, decimals: u8) -> (Vec<SegmentPattern>, u32) {
    let scaled = (value.abs() * 10f64.powi(decimals as i32)).round() as u64;
    let mut body: Vec<u8> = scaled.to_string().bytes().map(|b| b - b'0').collect();
    while body.len() < decimals as usize + 1 {
        body.insert(0, 0);
    }
    let negative = value < 0.0 && scaled != 0;
    let width = body.len() + negative as usize;
    let n = (digits as usize).max(width);
    let mut out = vec![SegmentPattern(0); n - width];
    if negative {
        out.push(SegmentPattern(0x40));
    }
    out.extend(body.iter().map(|d| glyph_mask(*d).unwrap()));
    let dp = if decimals > 0 {
        1u32 << (n - 1 - decimals as usize)
    } else {
        0
    };
    (out, dp)
}

/// The environment at large; mutated only by actuators and scripted events.
#[derive(Debug, Clone)]
pub struct Environment {
    pub config: WorldConfig,
    pub arm: ArmActuator,
    pub latitude: f64,
    pub longitude: f64,
    pub wind_table: Option<WindTable>,
    /// True unix time at simulation start, microseconds.
    pub epoch_unix_us: i64,
}

pub struct SampleCtx<'a, R: Rng> {
    pub now: Ticks,
    pub env: &'a Environment,
    pub power: &'a PowerState,
    pub rng: &'a mut R,
}

fn noisy<R: Rng>(rng: &mut R, v: f64, sigma: f64) -> f64 {
    if sigma > 0.0 {
        v + Normal::new(0.0, sigma).expect("sigma positive").sample(rng)
    } else {
        v
    }
}

impl Environment {
    pub fn new(config: WorldConfig, wind_table: Option<WindTable>) -> Self {
        Environment {
            arm: ArmActuator::new(config.arm_rate_deg_s, config.arm_initial_deg),
            latitude: config.latitude,
            longitude: config.longitude,
            config,
            wind_table,
            epoch_unix_us: 0,
        }
    }

    pub fn arm_angle(&self, now: Ticks) -> f64 {
        self.arm.angle_at(now)
    }

    pub fn gravity_body(&self) -> Vec3 {
        let c = &self.config;
        world_to_body([0.0, 0.0, 1.0], c.heading_deg, c.pitch_deg, c.roll_deg)
    }

    /// Field at the magnetometer: rotated geomagnetic field plus the arm's
    /// soft-iron bias at its present angle.
    pub fn field_body(&self, now: Ticks) -> Vec3 {
        let c = &self.config;
        let f = world_to_body(c.field_ut, c.heading_deg, c.pitch_deg, c.roll_deg);
        let b = c.soft_iron.bias_at(self.arm_angle(now)).expect("arm angle clamped");
        [f[0] + b[0], f[1] + b[1], f[2] + b[2]]
    }

    pub fn unix_us(&self, now: Ticks) -> i64 {
        self.epoch_unix_us + now as i64
    }

    pub fn drive(&mut self, seconds: f64) {
        let d = self.config.drive_step_deg * seconds;
        self.latitude += d;
        self.longitude += d;
    }

    pub fn sample<R: Rng>(&self, model: &SensorModel, ctx: &mut SampleCtx<'_, R>) -> SensorValue {
        let now = ctx.now;
        match model {
            SensorModel::Signal { signal, noise } => SensorValue::Scalar(noisy(ctx.rng, signal.at(now), *noise)),
            SensorModel::Display {
                signal,
                digits,
                decimals,
            } => {
                let (masks, dp) = display_segments(signal.at(now), *digits, *decimals);
                let v = decode_segments(&masks, dp).expect("display encodes valid glyphs");
                SensorValue::Scalar(v.to_f64())
            }
            SensorModel::Ultrasonic {
                distance_m,
                air_temperature,
            } => {
                let t = air_temperature.at(now);
                let echo = 2.0 * distance_m.at(now).max(0.0) / crate::sensors::speed_of_sound(t);
                SensorValue::Scalar(ultrasonic_distance(echo, t).expect("echo non-negative"))
            }
            SensorModel::Anemometer { speed, tilt_counts } => {
                let table = self
                    .wind_table
                    .as_ref()
                    .expect("validated: anemometer needs a wind table");
                let deflection = inverse_lookup(table, speed.at(now)) + tilt_counts;
                SensorValue::Scalar(wind_speed(deflection, *tilt_counts, table))
            }
            SensorModel::Rain { tips_per_hour } => {
                SensorValue::Count((tips_per_hour * now as f64 / 3.6e9).floor() as u32)
            }
            SensorModel::Accelerometer { noise } => {
                let g = self.gravity_body();
                SensorValue::Vector(g.map(|a| noisy(ctx.rng, a, *noise)))
            }
            SensorModel::Magnetometer { noise } => {
                let m = self.field_body(now);
                SensorValue::Vector(m.map(|a| noisy(ctx.rng, a, *noise)))
            }
            SensorModel::Gyro { noise } => SensorValue::Vector([0.0; 3].map(|a| noisy(ctx.rng, a, *noise))),
            SensorModel::ArmPotentiometer { noise } => {
                SensorValue::Scalar(noisy(ctx.rng, self.arm_angle(now), *noise).clamp(0.0, 90.0))
            }
            SensorModel::BatteryMonitor => SensorValue::Rails {
                logic: ctx.power.battery_logic(),
                power: ctx.power.battery_power(),
            },
        }
    }
}

/// Smallest deflection giving `speed`, clamped to the table.
fn inverse_lookup(table: &WindTable, speed: f64) -> f64 {
    let k = table.knots();
    if speed <= k[0].1 {
        return k[0].0;
    }
    for w in k.windows(2) {
        let ((d0, s0), (d1, s1)) = (w[0], w[1]);
        if speed <= s1 && s1 > s0 {
            return d0 + (speed - s0) / (s1 - s0) * (d1 - d0);
        }
    }
    k[k.len() - 1].0
}
