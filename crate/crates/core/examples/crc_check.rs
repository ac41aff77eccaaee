//! CRC-16 over a whole buffer and piecewise, and the zero residue.

use dori::crc::{crc16, Crc16};

fn main() {
    let data = b"123456789";
    println!("crc16(\"123456789\") = {:#06x}", crc16(data));

    let mut c = Crc16::new();
    for piece in data.chunks(4) {
        c.update(piece);
    }
    println!("piecewise           = {:#06x}", c.finish());

    let mut framed = data.to_vec();
    framed.extend_from_slice(&crc16(data).to_le_bytes());
    println!("crc of data+crc     = {:#06x}", crc16(&framed));
}
