//! NMEA 0183 RMC decoding and the matching encoder used by the simulated
//! GPS receiver.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NmeaError {
    #[error("checksum mismatch: computed {computed:02X}, sentence says {stated}")]
    BadChecksum { computed: u8, stated: String },
    #[error("malformed field `{0}`")]
    MalformedField(&'static str),
    #[error("unsupported sentence type {0}")]
    UnsupportedSentenceType(String),
    #[error("no fixes to average")]
    EmptyInput,
}

/// Decoded recommended-minimum sentence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmcFix {
    pub unix_us: i64,
    pub latitude: Option<f64>,
    pub longitude: Option<f64>,
    pub valid: bool,
}

impl RmcFix {
    pub fn unix_seconds(&self) -> f64 {
        self.unix_us as f64 / 1e6
    }
}

fn xor(body: &[u8]) -> u8 {
    body.iter().fold(0, |acc, b| acc ^ b)
}

/// Verify the checksum then decode an RMC sentence from any talker.
pub fn parse_nmea_rmc(sentence: &str) -> Result<RmcFix, NmeaError> {
    let line = sentence.trim_end_matches(['\r', '\n']).as_bytes();
    if line.first() != Some(&b'$') {
        return Err(NmeaError::MalformedField("start"));
    }
    let star = line
        .iter()
        .rposition(|&b| b == b'*')
        .ok_or(NmeaError::MalformedField("checksum"))?;
    let body = &line[1..star];
    let stated = &line[star + 1..];
    let computed = xor(body);
    let stated_str = String::from_utf8_lossy(stated).into_owned();
    let stated_val = std::str::from_utf8(stated)
        .ok()
        .filter(|s| s.len() == 2)
        .and_then(|s| u8::from_str_radix(s, 16).ok());
    if stated_val != Some(computed) {
        return Err(NmeaError::BadChecksum {
            computed,
            stated: stated_str,
        });
    }
    let body = std::str::from_utf8(body).map_err(|_| NmeaError::MalformedField("encoding"))?;
    let fields: Vec<&str> = body.split(',').collect();
    let header = fields[0];
    if header.len() != 5 || !header.is_ascii() {
        return Err(NmeaError::MalformedField("address"));
    }
    if &header[2..] != "RMC" {
        return Err(NmeaError::UnsupportedSentenceType(header.to_string()));
    }
    if fields.len() < 10 {
        return Err(NmeaError::MalformedField("field count"));
    }
    let valid = match fields[2] {
        "A" => true,
        "V" => false,
        _ => return Err(NmeaError::MalformedField("status")),
    };
    let tod_us = parse_time(fields[1])?;
    let days = parse_date(fields[9])?;
    let latitude = parse_coord(fields[3], fields[4], 2, 'N', 'S', "latitude")?;
    let longitude = parse_coord(fields[5], fields[6], 3, 'E', 'W', "longitude")?;
    Ok(RmcFix {
        unix_us: days * 86_400_000_000 + tod_us,
        latitude,
        longitude,
        valid,
    })
}

fn digits(s: &str, field: &'static str) -> Result<i64, NmeaError> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(NmeaError::MalformedField(field));
    }
    s.parse().map_err(|_| NmeaError::MalformedField(field))
}

/// `hhmmss[.sss]` to microseconds since midnight.
fn parse_time(s: &str) -> Result<i64, NmeaError> {
    let (whole, frac) = s.split_once('.').unwrap_or((s, ""));
    if whole.len() != 6 {
        return Err(NmeaError::MalformedField("time"));
    }
    let h = digits(&whole[0..2], "time")?;
    let m = digits(&whole[2..4], "time")?;
    let sec = digits(&whole[4..6], "time")?;
    if h > 23 || m > 59 || sec > 60 {
        return Err(NmeaError::MalformedField("time"));
    }
    let mut us = 0;
    if !frac.is_empty() {
        if frac.len() > 6 {
            return Err(NmeaError::MalformedField("time"));
        }
        us = digits(frac, "time")? * 10i64.pow(6 - frac.len() as u32);
    }
    Ok(((h * 60 + m) * 60 + sec) * 1_000_000 + us)
}

/// `ddmmyy` to days since the unix epoch.
fn parse_date(s: &str) -> Result<i64, NmeaError> {
    if s.len() != 6 {
        return Err(NmeaError::MalformedField("date"));
    }
    let d = digits(&s[0..2], "date")?;
    let m = digits(&s[2..4], "date")?;
    let yy = digits(&s[4..6], "date")?;
    let year = if yy < 80 { 2000 + yy } else { 1900 + yy };
    if !(1..=12).contains(&m) || d < 1 || d > days_in_month(year, m) {
        return Err(NmeaError::MalformedField("date"));
    }
    Ok(days_from_civil(year, m, d))
}

fn days_in_month(y: i64, m: i64) -> i64 {
    match m {
        4 | 6 | 9 | 11 => 30,
        2 if (y % 4 == 0 && y % 100 != 0) || y % 400 == 0 => 29,
        2 => 28,
        _ => 31,
    }
}

// Howard Hinnant's civil calendar conversions.
pub(crate) fn days_from_civil(y: i64, m: i64, d: i64) -> i64 {
    let y = if m <= 2 { y - 1 } else { y };
    let era = y.div_euclid(400);
    let yoe = y - era * 400;
    let mp = (m + 9) % 12;
    let doy = (153 * mp + 2) / 5 + d - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

pub(crate) fn civil_from_days(z: i64) -> (i64, i64, i64) {
    let z = z + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = doy - (153 * mp + 2) / 5 + 1;
    let m = if mp < 10 { mp + 3 } else { mp - 9 };
    let y = yoe + era * 400 + i64::from(m <= 2);
    (y, m, d)
}

/// `ddmm.mmmm` (or `dddmm.mmmm`) with hemisphere to signed decimal degrees.
fn parse_coord(
    value: &str,
    hemi: &str,
    deg_digits: usize,
    pos: char,
    neg: char,
    field: &'static str,
) -> Result<Option<f64>, NmeaError> {
    if value.is_empty() && hemi.is_empty() {
        return Ok(None);
    }
    let (whole, frac) = value.split_once('.').unwrap_or((value, ""));
    if whole.len() != deg_digits + 2 || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return Err(NmeaError::MalformedField(field));
    }
    let deg = digits(&whole[..deg_digits], field)? as f64;
    let minutes: f64 = value[deg_digits..]
        .parse()
        .map_err(|_| NmeaError::MalformedField(field))?;
    if minutes >= 60.0 {
        return Err(NmeaError::MalformedField(field));
    }
    let magnitude = deg + minutes / 60.0;
    let limit = if deg_digits == 2 { 90.0 } else { 180.0 };
    if magnitude > limit {
        return Err(NmeaError::MalformedField(field));
    }
    match hemi.chars().next() {
        Some(c) if c == pos && hemi.len() == 1 => Ok(Some(magnitude)),
        Some(c) if c == neg && hemi.len() == 1 => Ok(Some(-magnitude)),
        _ => Err(NmeaError::MalformedField(field)),
    }
}

fn format_coord(deg: f64, deg_digits: usize, pos: char, neg: char) -> String {
    let hemi = if deg < 0.0 { neg } else { pos };
    let a = deg.abs();
    let mut d = a.trunc();
    let mut minutes = ((a - d) * 60.0 * 10_000.0).round() / 10_000.0;
    if minutes >= 60.0 {
        d += 1.0;
        minutes -= 60.0;
    }
    format!("{:0dw$}{:07.4},{}", d as u32, minutes, hemi, dw = deg_digits)
}

/// Build a checksummed `$GPRMC` sentence. Speed and course are reported as
/// zero; a stationary instrument has no use for them.
pub fn format_rmc(unix_us: i64, latitude: f64, longitude: f64, valid: bool) -> String {
    let days = unix_us.div_euclid(86_400_000_000);
    let tod = unix_us.rem_euclid(86_400_000_000);
    let (y, m, d) = civil_from_days(days);
    let secs = tod / 1_000_000;
    let centis = (tod % 1_000_000) / 10_000;
    let body = format!(
        "GPRMC,{:02}{:02}{:02}.{:02},{},{},{},0.0,0.0,{:02}{:02}{:02},,,A",
        secs / 3600,
        secs / 60 % 60,
        secs % 60,
        centis,
        if valid { 'A' } else { 'V' },
        format_coord(latitude, 2, 'N', 'S'),
        format_coord(longitude, 3, 'E', 'W'),
        d,
        m,
        y % 100
    );
    format!("${}*{:02X}", body, xor(body.as_bytes()))
}

/// Component-wise mean of fixes taken at one site.
pub fn average_position(fixes: &[(f64, f64)]) -> Result<(f64, f64), NmeaError> {
    if fixes.is_empty() {
        return Err(NmeaError::EmptyInput);
    }
    let n = fixes.len() as f64;
    let (lat, lon) = fixes.iter().fold((0.0, 0.0), |(a, b), (la, lo)| (a + la, b + lo));
    Ok((lat / n, lon / n))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_checksum(body: &str) -> String {
        format!("${}*{:02X}", body, xor(body.as_bytes()))
    }

    #[test]
    fn epoch_sentence() {
        let s = with_checksum("GPRMC,120000.00,A,0000.0000,N,00000.0000,E,0.0,0.0,010120,,,A");
        let fix = parse_nmea_rmc(&s).unwrap();
        assert_eq!(fix.unix_us, 1_577_880_000 * 1_000_000);
        assert_eq!(fix.latitude, Some(0.0));
        assert_eq!(fix.longitude, Some(0.0));
        assert!(fix.valid);
    }

    #[test]
    fn classic_example_sentence() {
        let s = "$GPRMC,225446,A,4916.45,N,12311.12,W,000.5,054.7,191194,020.3,E*68";
        let fix = parse_nmea_rmc(s).unwrap();
        assert!((fix.latitude.unwrap() - 49.274_166_666).abs() < 1e-6);
        assert!((fix.longitude.unwrap() + 123.185_333_333).abs() < 1e-6);
    }

    #[test]
    fn corrupted_checksum() {
        let s = "$GPRMC,225446,A,4916.45,N,12311.12,W,000.5,054.7,191194,020.3,E*69";
        assert!(matches!(parse_nmea_rmc(s), Err(NmeaError::BadChecksum { .. })));
    }

    #[test]
    fn other_sentences_unsupported() {
        let s = with_checksum("GPGGA,123519,4807.038,N,01131.000,E,1,08,0.9,545.4,M,46.9,M,,");
        assert_eq!(
            parse_nmea_rmc(&s),
            Err(NmeaError::UnsupportedSentenceType("GPGGA".into()))
        );
    }

    #[test]
    fn void_without_position() {
        let s = with_checksum("GPRMC,000001.00,V,,,,,,,020100,,,N");
        let fix = parse_nmea_rmc(&s).unwrap();
        assert!(!fix.valid);
        assert_eq!(fix.latitude, None);
        assert_eq!(fix.unix_us, 10_958 * 86_400_000_000 + 1_000_000);
    }

    #[test]
    fn bad_fields() {
        for body in [
            "GPRMC,250000,A,4916.45,N,12311.12,W,0,0,191194,,",
            "GPRMC,225446,A,4916.45,Q,12311.12,W,0,0,191194,,",
            "GPRMC,225446,A,4976.45,N,12311.12,W,0,0,191194,,",
            "GPRMC,225446,A,4916.45,N,12311.12,W,0,0,311194,,",
            "GPRMC,225446,X,4916.45,N,12311.12,W,0,0,191194,,",
        ] {
            assert!(
                matches!(parse_nmea_rmc(&with_checksum(body)), Err(NmeaError::MalformedField(_))),
                "{body}"
            );
        }
    }

    #[test]
    fn formatter_round_trips() {
        let t = 1_600_000_123_450_000;
        let s = format_rmc(t, 48.117_3, -11.516_667, true);
        let fix = parse_nmea_rmc(&s).unwrap();
        assert_eq!(fix.unix_us, t);
        assert!((fix.latitude.unwrap() - 48.117_3).abs() < 1e-6);
        assert!((fix.longitude.unwrap() + 11.516_667).abs() < 1e-6);
    }

    #[test]
    fn civil_round_trip() {
        for z in [-719_468, -1, 0, 10_957, 18_262, 2_932_896] {
            let (y, m, d) = civil_from_days(z);
            assert_eq!(days_from_civil(y, m, d), z);
        }
    }

    #[test]
    fn averaging() {
        assert_eq!(average_position(&[]), Err(NmeaError::EmptyInput));
        assert_eq!(average_position(&[(1.0, 2.0)]).unwrap(), (1.0, 2.0));
        assert_eq!(average_position(&[(1.0, 2.0), (3.0, 6.0)]).unwrap(), (2.0, 4.0));
    }
}
