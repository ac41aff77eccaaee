//! Upload a log file over an in-process gateway: a corrupted transfer is
//! refused and the file stays on the card until a clean retry.

use dori::gateway::{Archive, Gateway};
use dori::nodes::storage::SdCard;
use dori::uplink::{upload_log, LinkFault, MainModem, UplinkError, UploadSession, UploadSink};

struct Direct(Gateway);

impl UploadSink for Direct {
    fn deliver(&mut self, wire: &[u8], at_ms: u64) -> Result<Vec<u8>, UplinkError> {
        Ok(self.0.receive_upload(wire, at_ms))
    }
    fn deliver_partial(&mut self, _prefix: &[u8]) {}
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut sd = SdCard::new(1 << 16);
    sd.write("LOG0.BIN", (0..200u8).collect())?;
    let modem = MainModem::new(1200.0, 0);
    let mut gw = Direct(Gateway::new(Archive::in_memory()));
    let mut session = UploadSession::new("LOG0.BIN", &[]);

    let bad = LinkFault {
        corrupt_body_byte: Some(17),
        ..LinkFault::default()
    };
    let first = upload_log(&mut session, &mut sd, &modem, &mut gw, bad, 1_000)?;
    println!(
        "first attempt: {first:?}; file still on card: {}",
        sd.read("LOG0.BIN").is_some()
    );

    let second = upload_log(&mut session, &mut sd, &modem, &mut gw, LinkFault::default(), 2_000)?;
    println!(
        "retry:         {second:?}; file still on card: {}",
        sd.read("LOG0.BIN").is_some()
    );
    for f in gw.0.archive().files() {
        println!(
            "archived {} ({} bytes, crc {:#06x}, verified {})",
            f.name,
            f.bytes.len(),
            f.crc,
            f.verify()
        );
    }
    Ok(())
}
