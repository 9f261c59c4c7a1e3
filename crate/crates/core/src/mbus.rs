//! M-Bus long-frame codec for the local meter link.
//!
//! Layout: `68 L L 68 C A CI data.. CS 16` where `L = 3 + len(data)` and
//! `CS` is the byte sum of `C A CI data..` modulo 256.

use std::fmt;

use thiserror::Error;

use crate::telemetry::{Temperature, TemperatureError};

pub const START: u8 = 0x68;
pub const STOP: u8 = 0x16;
/// Single-character link-level acknowledgement.
pub const ACK: u8 = 0xE5;

/// REQ_UD2: request class 2 user data.
pub const C_REQ_UD2: u8 = 0x5B;
/// RSP_UD: user data response.
pub const C_RSP_UD: u8 = 0x08;
pub const CI_REQUEST: u8 = 0x51;
/// Variable-data response; here carries the fixed 8-byte meter payload.
pub const CI_RESPONSE: u8 = 0x72;

pub const MAX_USER_DATA: usize = 252;
/// Bytes a long frame adds around its user data.
pub const FRAME_OVERHEAD: usize = 9;

pub fn checksum(bytes: &[u8]) -> u8 {
    bytes.iter().fold(0u8, |acc, b| acc.wrapping_add(*b))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MbusFrame {
    pub control: u8,
    pub address: u8,
    pub ci: u8,
    user_data: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("user data of {0} bytes exceeds {MAX_USER_DATA}")]
pub struct UserDataTooLong(pub usize);

impl MbusFrame {
    pub fn new(control: u8, address: u8, ci: u8, user_data: Vec<u8>) -> Result<Self, UserDataTooLong> {
        if user_data.len() > MAX_USER_DATA {
            return Err(UserDataTooLong(user_data.len()));
        }
        Ok(MbusFrame {
            control,
            address,
            ci,
            user_data,
        })
    }

    pub fn user_data(&self) -> &[u8] {
        &self.user_data
    }

    pub fn into_user_data(self) -> Vec<u8> {
        self.user_data
    }

    /// The L field.
    pub fn length_field(&self) -> u8 {
        (3 + self.user_data.len()) as u8
    }

    fn body_checksum(&self) -> u8 {
        checksum(&[self.control, self.address, self.ci]).wrapping_add(checksum(&self.user_data))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let len = self.length_field();
        let mut out = Vec::with_capacity(self.user_data.len() + FRAME_OVERHEAD);
        out.extend_from_slice(&[START, len, len, START, self.control, self.address, self.ci]);
        out.extend_from_slice(&self.user_data);
        out.push(self.body_checksum());
        out.push(STOP);
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, FrameError> {
        parse_long_frame(bytes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("bad start byte at offset {offset}")]
    BadStart { offset: usize },
    #[error("length field mismatch at offset {offset}")]
    LengthMismatch { offset: usize },
    #[error("checksum mismatch at offset {offset}: expected {expected:#04x}, found {found:#04x}")]
    BadChecksum { offset: usize, expected: u8, found: u8 },
    #[error("bad stop byte at offset {offset}")]
    BadStop { offset: usize },
    #[error("frame truncated at offset {offset}")]
    Truncated { offset: usize },
}

impl FrameError {
    pub fn offset(&self) -> usize {
        match *self {
            FrameError::BadStart { offset }
            | FrameError::LengthMismatch { offset }
            | FrameError::BadChecksum { offset, .. }
            | FrameError::BadStop { offset }
            | FrameError::Truncated { offset } => offset,
        }
    }
}

pub fn build_long_frame(frame: &MbusFrame) -> Vec<u8> {
    frame.to_bytes()
}

pub fn parse_long_frame(bytes: &[u8]) -> Result<MbusFrame, FrameError> {
    match bytes.first() {
        None => return Err(FrameError::Truncated { offset: 0 }),
        Some(&b) if b != START => return Err(FrameError::BadStart { offset: 0 }),
        _ => {}
    }
    if bytes.len() < 4 {
        return Err(FrameError::Truncated { offset: bytes.len() });
    }
    if bytes[3] != START {
        return Err(FrameError::BadStart { offset: 3 });
    }
    if bytes[1] != bytes[2] {
        return Err(FrameError::LengthMismatch { offset: 2 });
    }
    let len = bytes[1] as usize;
    if len < 3 {
        return Err(FrameError::LengthMismatch { offset: 1 });
    }
    let total = len + 6;
    if bytes.len() < total {
        return Err(FrameError::Truncated { offset: bytes.len() });
    }
    if bytes.len() > total {
        return Err(FrameError::LengthMismatch { offset: total });
    }

    let body = &bytes[4..4 + len];
    let cs_offset = 4 + len;
    let expected = checksum(body);
    let found = bytes[cs_offset];
    if expected != found {
        return Err(FrameError::BadChecksum {
            offset: cs_offset,
            expected,
            found,
        });
    }
    if bytes[cs_offset + 1] != STOP {
        return Err(FrameError::BadStop { offset: cs_offset + 1 });
    }

    Ok(MbusFrame {
        control: body[0],
        address: body[1],
        ci: body[2],
        user_data: body[3..].to_vec(),
    })
}

/// Minimal heat-meter register set carried in RSP_UD user data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct MeterReading {
    pub energy_wh: u32,
    pub flow_temp: Temperature,
    pub return_temp: Temperature,
}

pub const METER_PAYLOAD_LEN: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PayloadError {
    #[error("meter payload must be {METER_PAYLOAD_LEN} bytes, got {0}")]
    WrongLength(usize),
    #[error("{field} out of range: {source}")]
    OutOfRange {
        field: &'static str,
        source: TemperatureError,
    },
}

pub fn encode_meter_payload(reading: &MeterReading) -> [u8; METER_PAYLOAD_LEN] {
    let mut out = [0u8; METER_PAYLOAD_LEN];
    out[0..4].copy_from_slice(&reading.energy_wh.to_le_bytes());
    out[4..6].copy_from_slice(&reading.flow_temp.tenths().to_le_bytes());
    out[6..8].copy_from_slice(&reading.return_temp.tenths().to_le_bytes());
    out
}

pub fn decode_meter_payload(bytes: &[u8]) -> Result<MeterReading, PayloadError> {
    let bytes: &[u8; METER_PAYLOAD_LEN] = bytes.try_into().map_err(|_| PayloadError::WrongLength(bytes.len()))?;
    let temp = |field: &'static str, lo: u8, hi: u8| {
        Temperature::from_tenths(i16::from_le_bytes([lo, hi]) as i64)
            .map_err(|source| PayloadError::OutOfRange { field, source })
    };
    Ok(MeterReading {
        energy_wh: u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]),
        flow_temp: temp("flow_temp", bytes[4], bytes[5])?,
        return_temp: temp("return_temp", bytes[6], bytes[7])?,
    })
}

/// Accepts hex with optional whitespace, `:` or `-` separators and an optional `0x` prefix.
pub fn parse_hex(text: &str) -> Result<Vec<u8>, hex::FromHexError> {
    let trimmed = text.trim();
    let trimmed = trimmed
        .strip_prefix("0x")
        .or_else(|| trimmed.strip_prefix("0X"))
        .unwrap_or(trimmed);
    let digits: String = trimmed
        .chars()
        .filter(|c| !c.is_whitespace() && *c != ':' && *c != '-')
        .collect();
    hex::decode(digits)
}

/// Space-separated uppercase hex.
pub struct HexDump<'a>(pub &'a [u8]);

impl fmt::Display for HexDump<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, b) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{b:02X}")?;
        }
        Ok(())
    }
}

/// Multi-line annotated dump of a raw frame, used by the frame inspector.
pub fn describe(bytes: &[u8]) -> String {
    use std::fmt::Write;

    let mut out = String::new();
    let _ = writeln!(out, "raw       {}", HexDump(bytes));
    match parse_long_frame(bytes) {
        Ok(frame) => {
            let _ = writeln!(
                out,
                "L         {} (0x{:02X})",
                frame.length_field(),
                frame.length_field()
            );
            let _ = writeln!(out, "C         0x{:02X}{}", frame.control, control_name(frame.control));
            let _ = writeln!(out, "A         0x{:02X}", frame.address);
            let _ = writeln!(out, "CI        0x{:02X}", frame.ci);
            let _ = writeln!(
                out,
                "data      [{}] {}",
                frame.user_data.len(),
                HexDump(&frame.user_data)
            );
            let _ = writeln!(out, "checksum  0x{:02X} ok", frame.body_checksum());
            if frame.ci == CI_RESPONSE {
                match decode_meter_payload(&frame.user_data) {
                    Ok(r) => {
                        let _ = writeln!(
                            out,
                            "meter     energy={} Wh flow={} C return={} C",
                            r.energy_wh, r.flow_temp, r.return_temp
                        );
                    }
                    Err(e) => {
                        let _ = writeln!(out, "meter     undecodable: {e}");
                    }
                }
            }
        }
        Err(e) => {
            let _ = writeln!(out, "error     {e}");
        }
    }
    out
}

fn control_name(c: u8) -> &'static str {
    match c {
        C_REQ_UD2 => " (REQ_UD2)",
        0x7B => " (REQ_UD2, FCB)",
        C_RSP_UD => " (RSP_UD)",
        0x53 | 0x73 => " (SND_UD)",
        0x40 => " (SND_NKE)",
        _ => "",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(c: u8, a: u8, ci: u8, data: &[u8]) -> MbusFrame {
        MbusFrame::new(c, a, ci, data.to_vec()).unwrap()
    }

    #[test]
    fn checksum_examples() {
        assert_eq!(checksum(&[]), 0x00);
        assert_eq!(checksum(&[0x53, 0x01, 0x51]), 0xA5);
        assert_eq!(checksum(&[0xFF, 0x01]), 0x00);
    }

    #[test]
    fn builds_empty_snd_ud() {
        assert_eq!(
            frame(0x53, 0x01, 0x51, &[]).to_bytes(),
            [0x68, 0x03, 0x03, 0x68, 0x53, 0x01, 0x51, 0xA5, 0x16]
        );
    }

    #[test]
    fn builds_one_byte_payload() {
        let bytes = frame(0x08, 0x05, 0x72, &[0x01]).to_bytes();
        assert_eq!(bytes, [0x68, 0x04, 0x04, 0x68, 0x08, 0x05, 0x72, 0x01, 0x80, 0x16]);
    }

    #[test]
    fn parses_reference_frame() {
        let parsed = parse_long_frame(&[0x68, 0x03, 0x03, 0x68, 0x53, 0x01, 0x51, 0xA5, 0x16]).unwrap();
        assert_eq!(parsed, frame(0x53, 0x01, 0x51, &[]));
    }

    #[test]
    fn parse_errors() {
        let good = [0x68, 0x03, 0x03, 0x68, 0x53, 0x01, 0x51, 0xA5, 0x16];

        let mut c = good;
        c[4] = 0x54;
        assert!(matches!(
            parse_long_frame(&c),
            Err(FrameError::BadChecksum {
                offset: 7,
                expected: 0xA6,
                found: 0xA5
            })
        ));
        assert_eq!(parse_long_frame(&good[..6]), Err(FrameError::Truncated { offset: 6 }));
        assert_eq!(parse_long_frame(&[]), Err(FrameError::Truncated { offset: 0 }));
        assert_eq!(parse_long_frame(&good[..2]), Err(FrameError::Truncated { offset: 2 }));

        let mut s = good;
        s[0] = 0x10;
        assert_eq!(parse_long_frame(&s), Err(FrameError::BadStart { offset: 0 }));
        let mut s = good;
        s[3] = 0x10;
        assert_eq!(parse_long_frame(&s), Err(FrameError::BadStart { offset: 3 }));

        let mut l = good;
        l[2] = 0x04;
        assert_eq!(parse_long_frame(&l), Err(FrameError::LengthMismatch { offset: 2 }));

        let short_l = [0x68, 0x02, 0x02, 0x68, 0x53, 0x01, 0x54, 0x16];
        assert_eq!(
            parse_long_frame(&short_l),
            Err(FrameError::LengthMismatch { offset: 1 })
        );

        let mut long = good.to_vec();
        long.push(0x00);
        assert_eq!(parse_long_frame(&long), Err(FrameError::LengthMismatch { offset: 9 }));

        let mut stop = good;
        stop[8] = 0x17;
        assert_eq!(parse_long_frame(&stop), Err(FrameError::BadStop { offset: 8 }));
    }

    #[test]
    fn user_data_limit() {
        assert!(MbusFrame::new(0, 0, 0, vec![0; 252]).is_ok());
        assert_eq!(MbusFrame::new(0, 0, 0, vec![0; 253]), Err(UserDataTooLong(253)));
        let max = frame(0x08, 0xFE, 0x72, &[0xAB; 252]);
        let bytes = max.to_bytes();
        assert_eq!(bytes.len(), 252 + FRAME_OVERHEAD);
        assert_eq!(bytes[1], 0xFF);
        assert_eq!(parse_long_frame(&bytes).unwrap(), max);
    }

    #[test]
    fn meter_payload_examples() {
        let zero = MeterReading::default();
        assert_eq!(encode_meter_payload(&zero), [0u8; 8]);
        assert_eq!(decode_meter_payload(&[0u8; 8]).unwrap(), zero);

        let r = MeterReading {
            energy_wh: 1,
            flow_temp: "20.5".parse().unwrap(),
            return_temp: "-1.0".parse().unwrap(),
        };
        assert_eq!(
            encode_meter_payload(&r),
            [0x01, 0x00, 0x00, 0x00, 0xCD, 0x00, 0xF6, 0xFF]
        );
        assert_eq!(decode_meter_payload(&encode_meter_payload(&r)).unwrap(), r);
    }

    #[test]
    fn meter_payload_errors() {
        assert_eq!(decode_meter_payload(&[0u8; 7]), Err(PayloadError::WrongLength(7)));
        assert_eq!(decode_meter_payload(&[0u8; 9]), Err(PayloadError::WrongLength(9)));
        // 2000 tenths = 200.0 C
        let hot = [0, 0, 0, 0, 0xD0, 0x07, 0, 0];
        assert!(matches!(
            decode_meter_payload(&hot),
            Err(PayloadError::OutOfRange { field: "flow_temp", .. })
        ));
        let cold = [0, 0, 0, 0, 0, 0, 0x30, 0xF8];
        assert!(matches!(
            decode_meter_payload(&cold),
            Err(PayloadError::OutOfRange {
                field: "return_temp",
                ..
            })
        ));
    }

    #[test]
    fn hex_input_forms() {
        let expected = vec![0x68, 0x03, 0x03, 0x68];
        assert_eq!(parse_hex("68 03 03 68").unwrap(), expected);
        assert_eq!(parse_hex("0x68030368").unwrap(), expected);
        assert_eq!(parse_hex("68:03:03:68\n").unwrap(), expected);
        assert!(parse_hex("6").is_err());
        assert!(parse_hex("zz").is_err());
        assert_eq!(HexDump(&expected).to_string(), "68 03 03 68");
    }

    #[test]
    fn describe_reports_fields_and_errors() {
        let resp = frame(
            C_RSP_UD,
            3,
            CI_RESPONSE,
            &[0x01, 0x00, 0x00, 0x00, 0xCD, 0x00, 0xF6, 0xFF],
        );
        let text = describe(&resp.to_bytes());
        assert!(text.contains("RSP_UD"), "{text}");
        assert!(text.contains("energy=1 Wh flow=20.5 C return=-1.0 C"), "{text}");
        let text = describe(&[0x68, 0x03]);
        assert!(text.contains("truncated"), "{text}");
    }
}
