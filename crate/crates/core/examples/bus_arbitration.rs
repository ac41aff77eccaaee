//! Three nodes offer frames in the same instant; the bus sends them in
//! identifier order and a later low-id frame jumps the queue.

use dori::bus::{frame_time, Bus, BusConfig, Frame, FrameId, NodeId};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = BusConfig::default();
    let mut bus = Bus::new(cfg)?;
    for n in 1..=3 {
        bus.register(NodeId(n));
    }
    bus.enable_slot_log();

    bus.offer(Frame::new(FrameId::standard(0x401)?, &[1, 2], NodeId(1))?, NodeId(1), 0)?;
    bus.offer(Frame::new(FrameId::standard(0x205)?, &[3], NodeId(2))?, NodeId(2), 0)?;
    bus.offer(Frame::new(FrameId::standard(0x300)?, &[], NodeId(3))?, NodeId(3), 0)?;
    // arrives while 0x205 is on the wire and beats both leftovers
    bus.offer(
        Frame::new(FrameId::standard(0x010)?, &[0xAA], NodeId(3))?,
        NodeId(3),
        50,
    )?;

    for ev in bus.drain() {
        println!(
            "{:>6} us  node {}  id {}  ({} us on the wire)",
            ev.time,
            ev.frame.source(),
            ev.frame.id(),
            frame_time(&ev.frame, &cfg)
        );
    }
    for slot in bus.take_slot_log() {
        let c: Vec<String> = slot.contenders.iter().map(|c| c.to_string()).collect();
        println!("slot at {:>4} us: [{}] -> {}", slot.start, c.join(", "), slot.winner);
    }
    Ok(())
}
