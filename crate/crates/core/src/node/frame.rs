//! Command frame codec.
//!
//! ```text
//! +------+--------+---------+------+
//! | 0xAA | opcode | payload | crc8 |
//! +------+--------+---------+------+
//! ```
//!
//! The CRC covers opcode and payload, polynomial 0x07, initial value 0,
//! no reflection, no final xor.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SYNC: u8 = 0xAA;
pub const FRAME_LEN: usize = 4;
pub const FRAME_BITS: u32 = (FRAME_LEN * 8) as u32;

const CRC8_POLY: u8 = 0x07;

const CRC8_TABLE: [u8; 256] = {
    let mut table = [0u8; 256];
    let mut i = 0;
    while i < 256 {
        let mut crc = i as u8;
        let mut bit = 0;
        while bit < 8 {
            crc = if crc & 0x80 != 0 { (crc << 1) ^ CRC8_POLY } else { crc << 1 };
            bit += 1;
        }
        table[i] = crc;
        i += 1;
    }
    table
};

pub fn crc8(bytes: &[u8]) -> u8 {
    bytes.iter().fold(0u8, |crc, &b| CRC8_TABLE[(crc ^ b) as usize])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Command {
    SensorOn(u8),
    SensorOff(u8),
    SendData,
    Retransmit,
}

impl Command {
    pub fn opcode(&self) -> u8 {
        match self {
            Command::SensorOn(_) => 0x01,
            Command::SensorOff(_) => 0x02,
            Command::SendData => 0x03,
            Command::Retransmit => 0x04,
        }
    }

    pub fn payload(&self) -> u8 {
        match self {
            Command::SensorOn(id) | Command::SensorOff(id) => *id,
            Command::SendData | Command::Retransmit => 0x00,
        }
    }

    /// Parses the script notation used in scenario files: `SensorOn(3)`,
    /// `SensorOff(1)`, `SendData`, `Retransmit`.
    pub fn parse(text: &str) -> Option<Command> {
        let text = text.trim();
        match text {
            "SendData" => return Some(Command::SendData),
            "Retransmit" => return Some(Command::Retransmit),
            _ => {}
        }
        let (name, rest) = text.split_once('(')?;
        let id: u8 = rest.strip_suffix(')')?.trim().parse().ok()?;
        match name.trim() {
            "SensorOn" => Some(Command::SensorOn(id)),
            "SensorOff" => Some(Command::SensorOff(id)),
            _ => None,
        }
    }
}

impl std::fmt::Display for Command {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Command::SensorOn(id) => write!(f, "SensorOn({id})"),
            Command::SensorOff(id) => write!(f, "SensorOff({id})"),
            Command::SendData => f.write_str("SendData"),
            Command::Retransmit => f.write_str("Retransmit"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("frame is {0} bytes, expected {FRAME_LEN}")]
    BadLength(usize),
    #[error("bad sync byte {0:#04x}")]
    BadSync(u8),
    #[error("crc mismatch: frame carries {found:#04x}, computed {expected:#04x}")]
    CrcMismatch { expected: u8, found: u8 },
    #[error("unknown opcode {0:#04x}")]
    UnknownOpcode(u8),
    #[error("opcode {opcode:#04x} takes no payload but frame carries {payload:#04x}")]
    UnexpectedPayload { opcode: u8, payload: u8 },
}

pub fn encode_raw(opcode: u8, payload: u8) -> [u8; FRAME_LEN] {
    [SYNC, opcode, payload, crc8(&[opcode, payload])]
}

/// Checks framing and CRC, returning `(opcode, payload)`.
pub fn decode_raw(bytes: &[u8]) -> Result<(u8, u8), FrameError> {
    let [sync, opcode, payload, crc] = <[u8; FRAME_LEN]>::try_from(bytes)
        .map_err(|_| FrameError::BadLength(bytes.len()))?;
    if sync != SYNC {
        return Err(FrameError::BadSync(sync));
    }
    let expected = crc8(&[opcode, payload]);
    if crc != expected {
        return Err(FrameError::CrcMismatch { expected, found: crc });
    }
    Ok((opcode, payload))
}

pub fn encode_command(cmd: Command) -> [u8; FRAME_LEN] {
    encode_raw(cmd.opcode(), cmd.payload())
}

pub fn decode_command(bytes: &[u8]) -> Result<Command, FrameError> {
    let (opcode, payload) = decode_raw(bytes)?;
    match opcode {
        0x01 => Ok(Command::SensorOn(payload)),
        0x02 => Ok(Command::SensorOff(payload)),
        0x03 | 0x04 if payload != 0 => Err(FrameError::UnexpectedPayload { opcode, payload }),
        0x03 => Ok(Command::SendData),
        0x04 => Ok(Command::Retransmit),
        other => Err(FrameError::UnknownOpcode(other)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Bit-at-a-time CRC-8 (poly 0x07), independent of the table above.
    fn crc8_bitwise(bytes: &[u8]) -> u8 {
        let mut crc = 0u8;
        for &b in bytes {
            crc ^= b;
            for _ in 0..8 {
                crc = if crc & 0x80 != 0 { (crc << 1) ^ 0x07 } else { crc << 1 };
            }
        }
        crc
    }

    #[test]
    fn crc_check_value() {
        // Catalogued check value of CRC-8/SMBUS over "123456789".
        assert_eq!(crc8(b"123456789"), 0xF4);
        assert_eq!(crc8_bitwise(b"123456789"), 0xF4);
    }

    #[test]
    fn table_matches_bitwise_reference() {
        for a in 0..=255u8 {
            for b in 0..=255u8 {
                assert_eq!(crc8(&[a, b]), crc8_bitwise(&[a, b]));
            }
        }
    }

    #[test]
    fn known_frames() {
        let on = encode_command(Command::SensorOn(1));
        assert_eq!(&on[..3], &[0xAA, 0x01, 0x01]);
        assert_eq!(on[3], crc8_bitwise(&[0x01, 0x01]));
        assert_eq!(decode_command(&on).unwrap(), Command::SensorOn(1));

        let send = encode_command(Command::SendData);
        assert_eq!(send, [0xAA, 0x03, 0x00, crc8_bitwise(&[0x03, 0x00])]);
        assert_eq!(send, [0xAA, 0x03, 0x00, 0x3F]);
    }

    #[test]
    fn exhaustive_raw_round_trip() {
        for opcode in 1..=4u8 {
            for payload in 0..=255u8 {
                assert_eq!(decode_raw(&encode_raw(opcode, payload)).unwrap(), (opcode, payload));
            }
        }
    }

    #[test]
    fn every_command_round_trips() {
        let mut all = vec![Command::SendData, Command::Retransmit];
        for id in 0..=255u8 {
            all.push(Command::SensorOn(id));
            all.push(Command::SensorOff(id));
        }
        for cmd in all {
            assert_eq!(decode_command(&encode_command(cmd)).unwrap(), cmd);
            assert_eq!(Command::parse(&cmd.to_string()), Some(cmd));
        }
    }

    #[test]
    fn single_bit_flips_are_rejected() {
        for cmd in [Command::SensorOn(1), Command::SendData, Command::SensorOff(200)] {
            let frame = encode_command(cmd);
            for bit in 0..32 {
                let mut bad = frame;
                bad[bit / 8] ^= 1 << (bit % 8);
                let err = decode_command(&bad).unwrap_err();
                if bit < 8 {
                    assert!(matches!(err, FrameError::BadSync(_)));
                } else {
                    assert!(matches!(err, FrameError::CrcMismatch { .. }), "bit {bit}: {err}");
                }
            }
        }
    }

    #[test]
    fn malformed_frames() {
        assert_eq!(decode_command(&[0xAA, 0x01]), Err(FrameError::BadLength(2)));
        assert_eq!(decode_command(&encode_raw(0x09, 0)), Err(FrameError::UnknownOpcode(0x09)));
        assert!(matches!(
            decode_command(&encode_raw(0x03, 7)),
            Err(FrameError::UnexpectedPayload { .. })
        ));
    }

    #[test]
    fn script_parsing() {
        assert_eq!(Command::parse(" SensorOn( 4 ) "), Some(Command::SensorOn(4)));
        assert_eq!(Command::parse("SensorOn(256)"), None);
        assert_eq!(Command::parse("Reboot"), None);
    }
}
