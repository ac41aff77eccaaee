//! Split a message into 8-byte frames and put it back together.

use dori::bus::NodeId;
use dori::transport::{fragment, Reassembler, TransferKind, TransportMessage};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let text = b"GPRMC fix, battery 12.4 V, three thermistors and a wind reading".to_vec();
    for kind in [TransferKind::Broadcast, TransferKind::LargeTransfer] {
        let msg = TransportMessage::new(kind, 3, text.clone(), NodeId(2));
        let frames = fragment(&msg)?;
        println!("{kind:?}: {} bytes in {} frames", text.len(), frames.len());
        for f in frames.iter().take(3) {
            println!("  id {}  {:02x?}", f.id(), f.payload());
        }
        let mut r = Reassembler::default();
        let mut out = None;
        for (i, f) in frames.iter().enumerate() {
            out = out.or(r.handle(f, i as u64 * 200)?);
        }
        let back = out.expect("all frames delivered");
        assert_eq!(back, msg);
        println!("  reassembled: {}", String::from_utf8_lossy(&back.payload));
    }
    Ok(())
}
