//! Identifier allocation table.
//!
//! Lower identifiers win arbitration, so emergency traffic sits at the
//! bottom of the range, commands in the middle and bulk transfers at the top.
//! All identifiers are 11-bit standard frames.
//!
//! | range         | class                                  |
//! |---------------|----------------------------------------|
//! | `0x010-0x01F` | power and storage alarms               |
//! | `0x020`       | clear-to-send                          |
//! | `0x040-0x05F` | commands                               |
//! | `0x060-0x06F` | file management (request, delete)     |
//! | `0x070-0x07F` | GPS clock and position                 |
//! | `0x100-0x1FF` | broadcast transport announce + type    |
//! | `0x200-0x2FF` | broadcast transport data + type        |
//! | `0x400-0x4FF` | periodic sensor readings + sensor kind |
//! | `0x500-0x5FF` | large transfer announce + type         |
//! | `0x600-0x6FF` | large transfer data + type             |

use crate::bus::FrameId;

pub const POWER_ALARM: u32 = 0x010;
pub const SD_FULL_ALARM: u32 = 0x011;
pub const CTS: u32 = 0x020;

pub const CMD_REFLASH_ENTER: u32 = 0x040;
pub const CMD_REFLASH_FINALIZE: u32 = 0x041;
pub const CMD_REFLASH_ABORT: u32 = 0x042;
pub const CMD_DISABLE_PERIODIC: u32 = 0x050;
pub const CMD_ENABLE_PERIODIC: u32 = 0x051;
pub const CMD_START_FORWARDING: u32 = 0x052;
pub const CMD_STOP_FORWARDING: u32 = 0x053;
pub const CMD_DRIVE: u32 = 0x054;
pub const CMD_SENSOR_REQUEST: u32 = 0x055;
pub const CMD_BRIDGE_BATTERIES: u32 = 0x056;
pub const CMD_OUTPUT: u32 = 0x057;

pub const FILE_REQUEST: u32 = 0x060;
pub const FILE_DELETE: u32 = 0x061;

pub const GPS_CLOCK: u32 = 0x070;
pub const GPS_POSITION: u32 = 0x071;

pub const BROADCAST_ANNOUNCE_BASE: u32 = 0x100;
pub const BROADCAST_DATA_BASE: u32 = 0x200;
pub const SENSOR_BASE: u32 = 0x400;
pub const LARGE_ANNOUNCE_BASE: u32 = 0x500;
pub const LARGE_DATA_BASE: u32 = 0x600;

/// Coarse class of a frame, derived from its identifier alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageClass {
    Alarm,
    Cts,
    Command,
    FileManagement,
    Gps,
    BroadcastAnnounce(u8),
    BroadcastData(u8),
    Sensor(u8),
    LargeAnnounce(u8),
    LargeData(u8),
    Unassigned,
}

pub fn classify(id: FrameId) -> MessageClass {
    let v = id.value();
    let low = (v & 0xFF) as u8;
    match v {
        0x010..=0x01F => MessageClass::Alarm,
        0x020 => MessageClass::Cts,
        0x040..=0x05F => MessageClass::Command,
        0x060..=0x06F => MessageClass::FileManagement,
        0x070..=0x07F => MessageClass::Gps,
        0x100..=0x1FF => MessageClass::BroadcastAnnounce(low),
        0x200..=0x2FF => MessageClass::BroadcastData(low),
        0x400..=0x4FF => MessageClass::Sensor(low),
        0x500..=0x5FF => MessageClass::LargeAnnounce(low),
        0x600..=0x6FF => MessageClass::LargeData(low),
        _ => MessageClass::Unassigned,
    }
}

/// File-transfer traffic never enters the data log: large-transfer
/// announce/data frames, clear-to-send tokens and file management commands.
pub fn is_file_transfer(id: FrameId) -> bool {
    matches!(
        classify(id),
        MessageClass::Cts | MessageClass::FileManagement | MessageClass::LargeAnnounce(_) | MessageClass::LargeData(_)
    )
}

pub fn std_id(value: u32) -> FrameId {
    FrameId::standard(value).expect("allocation table id out of 11-bit range")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification() {
        assert_eq!(classify(std_id(CTS)), MessageClass::Cts);
        assert_eq!(classify(std_id(SENSOR_BASE | 3)), MessageClass::Sensor(3));
        assert_eq!(classify(std_id(LARGE_DATA_BASE | 1)), MessageClass::LargeData(1));
        assert!(is_file_transfer(std_id(LARGE_ANNOUNCE_BASE | 2)));
        assert!(is_file_transfer(std_id(FILE_DELETE)));
        assert!(!is_file_transfer(std_id(BROADCAST_DATA_BASE | 2)));
        assert!(!is_file_transfer(std_id(CMD_REFLASH_ENTER)));
        assert!(!is_file_transfer(std_id(SENSOR_BASE | 1)));
    }

    const _: () = assert!(POWER_ALARM < CTS && CTS < CMD_REFLASH_ENTER && CMD_OUTPUT < SENSOR_BASE);
}
