//! Enumerate a chain of 1-Wire temperature sensors by ROM search.

use dori::sensors::{onewire_search, OneWireId, OneWireNetwork};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(28);
    // family code 0x28 in the low byte
    let ids: Vec<OneWireId> = (0..12).map(|_| OneWireId(rng.gen::<u64>() & !0xFF | 0x28)).collect();
    let mut net = OneWireNetwork::new(ids.iter().copied());
    let found = onewire_search(&mut net);
    for d in &found.devices {
        println!("{:016x}", d.0);
    }
    println!("{} devices, {} bit-pair queries", found.devices.len(), found.queries);
}
