//! Seven-segment display capture: segment masks sampled from an LCD drive
//! signal back to the number shown.
//!
//! Bit 0 is segment `a`, bit 6 is segment `g`.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SegmentError {
    #[error("unknown glyph mask {0:#09b}")]
    UnknownGlyph(u16),
    #[error("display shows no digits")]
    Blank,
    #[error("glyph at position {0} cannot appear there")]
    Misplaced(usize),
    #[error("more than one decimal point lit")]
    MultipleDecimalPoints,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentPattern(pub u16);

const DIGITS: [u16; 10] = [0x3F, 0x06, 0x5B, 0x4F, 0x66, 0x6D, 0x7D, 0x07, 0x7F, 0x6F];
const BLANK: u16 = 0x00;
const MINUS: u16 = 0x40;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Glyph {
    Digit(u8),
    Blank,
    Minus,
}

fn glyph(mask: u16) -> Option<Glyph> {
    match mask {
        BLANK => Some(Glyph::Blank),
        MINUS => Some(Glyph::Minus),
        m => DIGITS.iter().position(|d| *d == m).map(|d| Glyph::Digit(d as u8)),
    }
}

/// Segment mask of a decimal digit.
pub fn glyph_mask(digit: u8) -> Option<SegmentPattern> {
    DIGITS.get(digit as usize).map(|m| SegmentPattern(*m))
}

/// Exact displayed value: `mantissa * 10^-decimals`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DisplayValue {
    pub mantissa: i64,
    pub decimals: u32,
}

impl DisplayValue {
    pub fn to_f64(self) -> f64 {
        self.mantissa as f64 / 10f64.powi(self.decimals as i32)
    }
}

/// Decode digit masks, most significant first. Bit `i` of
/// `decimal_point_mask` lights the point after digit `i`. Blanks may pad
/// either side; a minus sign may only lead.
pub fn decode_segments(digits: &[SegmentPattern], decimal_point_mask: u32) -> Result<DisplayValue, SegmentError> {
    let glyphs = digits
        .iter()
        .map(|p| glyph(p.0).ok_or(SegmentError::UnknownGlyph(p.0)))
        .collect::<Result<Vec<_>, _>>()?;
    if decimal_point_mask.count_ones() > 1 {
        return Err(SegmentError::MultipleDecimalPoints);
    }
    let first = glyphs
        .iter()
        .position(|g| *g != Glyph::Blank)
        .ok_or(SegmentError::Blank)?;
    let last = glyphs.iter().rposition(|g| *g != Glyph::Blank).unwrap();
    let mut negative = false;
    let mut mantissa: i64 = 0;
    let mut seen_digit = false;
    let mut decimals = 0;
    let mut after_point = false;
    for (pos, g) in glyphs.iter().enumerate().take(last + 1).skip(first) {
        match g {
            Glyph::Minus if pos == first => negative = true,
            Glyph::Digit(d) => {
                mantissa = mantissa * 10 + *d as i64;
                seen_digit = true;
                if after_point {
                    decimals += 1;
                }
            }
            _ => return Err(SegmentError::Misplaced(pos)),
        }
        if decimal_point_mask & (1 << pos) != 0 {
            if !seen_digit {
                return Err(SegmentError::Misplaced(pos));
            }
            after_point = true;
        }
    }
    if !seen_digit {
        return Err(SegmentError::Blank);
    }
    if decimal_point_mask != 0 && !after_point {
        return Err(SegmentError::Misplaced(decimal_point_mask.trailing_zeros() as usize));
    }
    Ok(DisplayValue {
        mantissa: if negative { -mantissa } else { mantissa },
        decimals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(d: u8) -> SegmentPattern {
        glyph_mask(d).unwrap()
    }

    #[test]
    fn eight_lights_everything() {
        assert_eq!(p(8), SegmentPattern(0b111_1111));
        assert_eq!(decode_segments(&[p(8)], 0).unwrap().to_f64(), 8.0);
    }

    #[test]
    fn twelve_point_five() {
        let v = decode_segments(&[p(1), p(2), p(5)], 0b10).unwrap();
        assert_eq!(
            v,
            DisplayValue {
                mantissa: 125,
                decimals: 1
            }
        );
        assert_eq!(v.to_f64(), 12.5);
    }

    #[test]
    fn sign_and_padding() {
        let v = decode_segments(&[SegmentPattern(0), SegmentPattern(MINUS), p(3), p(0)], 0b100).unwrap();
        assert_eq!(v.to_f64(), -3.0);
        assert_eq!(v.decimals, 1);
    }

    #[test]
    fn rejects() {
        assert_eq!(
            decode_segments(&[SegmentPattern(0b1111_1111)], 0),
            Err(SegmentError::UnknownGlyph(0xFF))
        );
        assert_eq!(decode_segments(&[SegmentPattern(0)], 0), Err(SegmentError::Blank));
        assert_eq!(
            decode_segments(&[p(1), SegmentPattern(MINUS)], 0),
            Err(SegmentError::Misplaced(1))
        );
        assert_eq!(
            decode_segments(&[p(1), p(2)], 0b11),
            Err(SegmentError::MultipleDecimalPoints)
        );
        assert_eq!(
            decode_segments(&[p(1), SegmentPattern(0), p(2)], 0),
            Err(SegmentError::Misplaced(1))
        );
    }
}
