//! Parse RMC sentences: a valid fix, a damaged one and one without a fix.

use dori::sensors::{average_position, format_rmc, parse_nmea_rmc};

fn main() {
    let good = "$GPRMC,123519.00,A,4807.0380,N,01131.0000,E,0.4,84.4,230394,,,A*4F";
    let line = {
        let body = &good[1..good.find('*').unwrap()];
        let cs = body.bytes().fold(0u8, |a, b| a ^ b);
        format!("${body}*{cs:02X}")
    };
    for s in [
        line.as_str(),
        &line.replace("4807", "4808"),
        &format_rmc(1_600_000_000_000_000, 0.0, 0.0, false),
    ] {
        match parse_nmea_rmc(s) {
            Ok(fix) => println!(
                "{s}\n  -> t={} lat={:?} lon={:?} valid={}",
                fix.unix_seconds(),
                fix.latitude,
                fix.longitude,
                fix.valid
            ),
            Err(e) => println!("{s}\n  -> rejected: {e}"),
        }
    }
    let fixes = [(48.1173, 11.5167), (48.1175, 11.5165), (48.1171, 11.5168)];
    println!("average of three fixes: {:?}", average_position(&fixes));
}
