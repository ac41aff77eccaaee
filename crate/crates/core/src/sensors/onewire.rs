//! 1-Wire ROM search over a simulated shared data wire.
//!
//! At each of the 64 bit positions every still-selected device answers with
//! its bit and then its complement, both wired-AND on the bus. The two reads
//! together tell the master whether all devices agree (and on what) or
//! whether the population splits. On a split the master takes the 0 branch
//! first and remembers the deepest untried split for the next pass, so each
//! pass enumerates exactly one new device.

use std::collections::BTreeSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OneWireId(pub u64);

impl OneWireId {
    pub fn family(self) -> u8 {
        (self.0 & 0xFF) as u8
    }

    fn bit(self, i: u32) -> bool {
        self.0 >> i & 1 == 1
    }
}

/// Devices sharing one wire, with a counter of bit-pair queries.
#[derive(Debug, Clone)]
pub struct OneWireNetwork {
    devices: Vec<OneWireId>,
    selected: Vec<bool>,
    queries: u64,
}

impl OneWireNetwork {
    pub fn new(devices: impl IntoIterator<Item = OneWireId>) -> Self {
        let devices: Vec<OneWireId> = devices.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let n = devices.len();
        OneWireNetwork {
            devices,
            selected: vec![false; n],
            queries: 0,
        }
    }

    pub fn queries(&self) -> u64 {
        self.queries
    }

    /// Reset pulse; returns the presence flag.
    fn reset(&mut self) -> bool {
        self.selected.iter_mut().for_each(|s| *s = true);
        !self.devices.is_empty()
    }

    /// Read the bit and its complement at position `i` from every selected
    /// device. An open wire floats high, so a bit reads 1 unless some device
    /// pulls it low.
    fn read_pair(&mut self, i: u32) -> (bool, bool) {
        self.queries += 1;
        let mut bit = true;
        let mut complement = true;
        for (d, sel) in self.devices.iter().zip(&self.selected) {
            if *sel {
                bit &= d.bit(i);
                complement &= !d.bit(i);
            }
        }
        (bit, complement)
    }

    /// Master writes its chosen direction; mismatching devices go idle.
    fn write_direction(&mut self, i: u32, direction: bool) {
        for (d, sel) in self.devices.iter().zip(self.selected.iter_mut()) {
            if d.bit(i) != direction {
                *sel = false;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchOutcome {
    pub devices: Vec<OneWireId>,
    pub queries: u64,
}

/// Enumerate every device on the wire. The result is sorted; `queries`
/// counts bit-pair reads for this search.
pub fn onewire_search(net: &mut OneWireNetwork) -> SearchOutcome {
    let start = net.queries;
    let mut found = Vec::new();
    let mut last_discrepancy: Option<u32> = None;
    let mut rom: u64 = 0;
    loop {
        if !net.reset() {
            break;
        }
        let mut new_discrepancy: Option<u32> = None;
        let mut lost = false;
        for i in 0..64u32 {
            let (bit, complement) = net.read_pair(i);
            let direction = match (bit, complement) {
                (true, true) => {
                    // Every selected device dropped out; cannot happen on
                    // a static network.
                    lost = true;
                    break;
                }
                (b, c) if b != c => b,
                _ => {
                    let dir = match last_discrepancy {
                        Some(ld) if i < ld => rom >> i & 1 == 1,
                        Some(ld) if i == ld => true,
                        _ => false,
                    };
                    if !dir {
                        new_discrepancy = Some(i);
                    }
                    dir
                }
            };
            if direction {
                rom |= 1 << i;
            } else {
                rom &= !(1 << i);
            }
            net.write_direction(i, direction);
        }
        if lost {
            break;
        }
        found.push(OneWireId(rom));
        last_discrepancy = new_discrepancy;
        if last_discrepancy.is_none() {
            break;
        }
    }
    found.sort();
    SearchOutcome {
        devices: found,
        queries: net.queries - start,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_wire() {
        let mut net = OneWireNetwork::new([]);
        let out = onewire_search(&mut net);
        assert!(out.devices.is_empty());
        assert_eq!(out.queries, 0);
    }

    #[test]
    fn single_device_takes_64_queries() {
        let id = OneWireId(0x2800_0004_5A3B_C128);
        let mut net = OneWireNetwork::new([id]);
        let out = onewire_search(&mut net);
        assert_eq!(out.devices, vec![id]);
        assert_eq!(out.queries, 64);
    }

    #[test]
    fn complementary_pair() {
        let ids = [OneWireId(0), OneWireId(u64::MAX)];
        let mut net = OneWireNetwork::new(ids);
        let out = onewire_search(&mut net);
        assert_eq!(out.devices, ids.to_vec());
        assert_eq!(out.queries, 128);
    }

    #[test]
    fn family_code_is_low_byte() {
        assert_eq!(OneWireId(0x1122_3344_5566_7728).family(), 0x28);
    }
}
