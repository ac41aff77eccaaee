//! The smaller sensor decoders: ultrasonic ranging, anemometer calibration,
//! rain gauge and a seven-segment display read optically.

use dori::sensors::{
    decode_segments, glyph_mask, rain_heater_on, speed_of_sound, ultrasonic_distance, wind_speed, RainGauge,
    SegmentPattern, WindTable,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for t in [-10.0, 0.0, 25.0] {
        println!(
            "echo 5.8 ms at {t:>5.1} C: c = {:.1} m/s, distance {:.3} m",
            speed_of_sound(t),
            ultrasonic_distance(0.0058, t)?
        );
    }

    let table = WindTable::new(vec![(0.0, 0.0), (100.0, 10.0), (400.0, 30.0)])?;
    for hz in [50.0, 250.0, 500.0] {
        println!("anemometer {hz:>5.1} Hz -> {:.2} m/s", wind_speed(hz, 0.0, &table));
    }

    let mut gauge = RainGauge::new(0.2);
    (0..37).for_each(|_| gauge.tip());
    println!(
        "37 tips -> {:.1} mm; heater on at -2 C: {}",
        gauge.rainfall_mm(),
        rain_heater_on(-2.0)
    );

    // "-12.5" on a four-digit display, point after the third position
    let digits = [
        SegmentPattern(0x40),
        glyph_mask(1).unwrap(),
        glyph_mask(2).unwrap(),
        glyph_mask(5).unwrap(),
    ];
    let v = decode_segments(&digits, 1 << 2)?;
    println!("display {:?} -> {}", v, v.to_f64());
    Ok(())
}
