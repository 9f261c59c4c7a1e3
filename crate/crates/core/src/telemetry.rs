//! Station telemetry types and their text wire grammar.
//!
//! A frame travels as a single ASCII line:
//!
//! ```text
//! <station>;<seq>;<timestamp>;<t1>,...,<t8>;<p1>,...,<p8>;<mode>
//! ```
//!
//! Temperatures carry exactly one fractional digit, pumps are `0`/`1` and the
//! mode is one of `AUTO`, `MANUAL`, `OFF`. No whitespace is allowed anywhere.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of temperature sensors and pump actuators on every station.
pub const CHANNELS: usize = 8;

const SECTION_SEP: char = ';';
const LIST_SEP: char = ',';
const STATION_ID_MAX: usize = 32;

/// Station identity: 1 to 32 characters from `[A-Za-z0-9_-]`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct StationId(String);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid station id {0:?}")]
pub struct InvalidStationId(pub String);

impl StationId {
    pub fn new(id: impl Into<String>) -> Result<Self, InvalidStationId> {
        let id = id.into();
        if Self::is_valid(&id) {
            Ok(StationId(id))
        } else {
            Err(InvalidStationId(id))
        }
    }

    pub fn is_valid(id: &str) -> bool {
        !id.is_empty()
            && id.len() <= STATION_ID_MAX
            && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for StationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for StationId {
    type Err = InvalidStationId;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StationId::new(s)
    }
}

impl TryFrom<String> for StationId {
    type Error = InvalidStationId;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        StationId::new(value)
    }
}

impl From<StationId> for String {
    fn from(id: StationId) -> Self {
        id.0
    }
}

/// Temperature in tenths of a degree Celsius, bounded to -50.0..=150.0 °C.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Temperature(i16);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemperatureError {
    #[error("temperature {0} tenths outside -500..=1500")]
    OutOfRange(i64),
    #[error("malformed temperature {0:?}")]
    Malformed(String),
}

impl Temperature {
    pub const MIN_TENTHS: i16 = -500;
    pub const MAX_TENTHS: i16 = 1500;
    pub const MIN: Temperature = Temperature(Self::MIN_TENTHS);
    pub const MAX: Temperature = Temperature(Self::MAX_TENTHS);

    pub fn from_tenths(tenths: i64) -> Result<Self, TemperatureError> {
        if (Self::MIN_TENTHS as i64..=Self::MAX_TENTHS as i64).contains(&tenths) {
            Ok(Temperature(tenths as i16))
        } else {
            Err(TemperatureError::OutOfRange(tenths))
        }
    }

    /// Rounds to the nearest tenth, half away from zero, and clamps into range.
    pub fn from_celsius_clamped(celsius: f64) -> Self {
        let tenths = if celsius.is_nan() {
            0.0
        } else {
            (celsius * 10.0).round()
        };
        let tenths = tenths.clamp(Self::MIN_TENTHS as f64, Self::MAX_TENTHS as f64);
        Temperature(tenths as i16)
    }

    pub fn tenths(self) -> i16 {
        self.0
    }

    pub fn celsius(self) -> f64 {
        self.0 as f64 / 10.0
    }
}

impl fmt::Display for Temperature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{}{}.{}", sign, abs / 10, abs % 10)
    }
}

impl FromStr for Temperature {
    type Err = TemperatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let malformed = || TemperatureError::Malformed(s.to_owned());
        let (negative, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        let (int_part, frac_part) = body.split_once('.').ok_or_else(malformed)?;
        if int_part.is_empty()
            || frac_part.len() != 1
            || !int_part.bytes().all(|b| b.is_ascii_digit())
            || !frac_part.bytes().all(|b| b.is_ascii_digit())
        {
            return Err(malformed());
        }
        let significant = int_part.trim_start_matches('0');
        // anything with more than 5 integer digits is far outside the bounds
        if significant.len() > 5 {
            return Err(TemperatureError::OutOfRange(if negative { i64::MIN } else { i64::MAX }));
        }
        let whole: i64 = if significant.is_empty() {
            0
        } else {
            significant.parse().map_err(|_| malformed())?
        };
        let frac = (frac_part.as_bytes()[0] - b'0') as i64;
        let tenths = whole * 10 + frac;
        Temperature::from_tenths(if negative { -tenths } else { tenths })
    }
}

impl Serialize for Temperature {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Temperature {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum PumpState {
    #[default]
    Off,
    On,
}

impl PumpState {
    pub fn is_on(self) -> bool {
        self == PumpState::On
    }

    pub fn as_bit(self) -> u8 {
        match self {
            PumpState::Off => 0,
            PumpState::On => 1,
        }
    }

    pub fn from_bit(bit: u8) -> Option<Self> {
        match bit {
            0 => Some(PumpState::Off),
            1 => Some(PumpState::On),
            _ => None,
        }
    }
}

impl From<bool> for PumpState {
    fn from(on: bool) -> Self {
        if on {
            PumpState::On
        } else {
            PumpState::Off
        }
    }
}

impl Serialize for PumpState {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_u8(self.as_bit())
    }
}

impl<'de> Deserialize<'de> for PumpState {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let bit = u8::deserialize(deserializer)?;
        PumpState::from_bit(bit)
            .ok_or_else(|| serde::de::Error::custom(format!("pump state must be 0 or 1, got {bit}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum OperatingMode {
    /// Pumps thermostat themselves around their setpoints.
    #[default]
    Auto,
    /// Pumps only change on dispatcher command.
    Manual,
    /// Pumps are forced off; telemetry continues.
    Off,
}

impl OperatingMode {
    pub const ALL: [OperatingMode; 3] = [OperatingMode::Auto, OperatingMode::Manual, OperatingMode::Off];

    pub fn as_str(self) -> &'static str {
        match self {
            OperatingMode::Auto => "AUTO",
            OperatingMode::Manual => "MANUAL",
            OperatingMode::Off => "OFF",
        }
    }
}

impl fmt::Display for OperatingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown operating mode {0:?}")]
pub struct UnknownMode(pub String);

impl FromStr for OperatingMode {
    type Err = UnknownMode;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "AUTO" => Ok(OperatingMode::Auto),
            "MANUAL" => Ok(OperatingMode::Manual),
            "OFF" => Ok(OperatingMode::Off),
            other => Err(UnknownMode(other.to_owned())),
        }
    }
}

/// One station report.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TelemetryFrame {
    pub station: StationId,
    pub seq: u32,
    /// Unix seconds from the station clock.
    pub timestamp: u64,
    pub temps: [Temperature; CHANNELS],
    pub pumps: [PumpState; CHANNELS],
    pub mode: OperatingMode,
}

/// Sections of the wire grammar, in order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Field {
    Station,
    Seq,
    Timestamp,
    Temps,
    Pumps,
    Mode,
}

impl Field {
    pub const ALL: [Field; 6] = [
        Field::Station,
        Field::Seq,
        Field::Timestamp,
        Field::Temps,
        Field::Pumps,
        Field::Mode,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Field::Station => "station",
            Field::Seq => "seq",
            Field::Timestamp => "timestamp",
            Field::Temps => "temps",
            Field::Pumps => "pumps",
            Field::Mode => "mode",
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn element_suffix(element: &Option<usize>) -> String {
    element.map(|i| format!("[{i}]")).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("malformed {field}{} (section {})", element_suffix(.element), .field.index())]
    MalformedSyntax { field: Field, element: Option<usize> },
    #[error("{field}{} out of range (section {})", element_suffix(.element), .field.index())]
    OutOfRange { field: Field, element: Option<usize> },
}

impl DecodeError {
    pub fn field(&self) -> Field {
        match self {
            DecodeError::MalformedSyntax { field, .. } | DecodeError::OutOfRange { field, .. } => *field,
        }
    }

    pub fn element(&self) -> Option<usize> {
        match self {
            DecodeError::MalformedSyntax { element, .. } | DecodeError::OutOfRange { element, .. } => *element,
        }
    }

    fn malformed(field: Field) -> Self {
        DecodeError::MalformedSyntax { field, element: None }
    }

    fn out_of_range(field: Field) -> Self {
        DecodeError::OutOfRange { field, element: None }
    }
}

impl TelemetryFrame {
    /// Canonical wire form.
    pub fn encode(&self) -> String {
        let mut out = String::with_capacity(96);
        self.encode_into(&mut out);
        out
    }

    pub fn encode_into(&self, out: &mut String) {
        use std::fmt::Write;

        // writing to a String cannot fail
        let _ = write!(out, "{};{};{};", self.station, self.seq, self.timestamp);
        for (i, t) in self.temps.iter().enumerate() {
            if i > 0 {
                out.push(LIST_SEP);
            }
            let _ = write!(out, "{t}");
        }
        out.push(SECTION_SEP);
        for (i, p) in self.pumps.iter().enumerate() {
            if i > 0 {
                out.push(LIST_SEP);
            }
            out.push(if p.is_on() { '1' } else { '0' });
        }
        out.push(SECTION_SEP);
        out.push_str(self.mode.as_str());
    }

    pub fn decode(text: &str) -> Result<Self, DecodeError> {
        let sections: Vec<&str> = text.split(SECTION_SEP).collect();
        if sections.len() != Field::ALL.len() {
            // name the first missing section, or the last one when there is trailing data
            let field = Field::ALL[sections.len().min(Field::ALL.len() - 1)];
            return Err(DecodeError::malformed(field));
        }

        let station = StationId::new(sections[0]).map_err(|_| DecodeError::out_of_range(Field::Station))?;
        let seq = parse_unsigned::<u32>(sections[1], Field::Seq)?;
        let timestamp = parse_unsigned::<u64>(sections[2], Field::Timestamp)?;

        let mut temps = [Temperature::default(); CHANNELS];
        for_each_element(sections[3], Field::Temps, |i, item| {
            temps[i] = item.parse().map_err(|e| match e {
                TemperatureError::OutOfRange(_) => DecodeError::OutOfRange {
                    field: Field::Temps,
                    element: Some(i),
                },
                TemperatureError::Malformed(_) => DecodeError::MalformedSyntax {
                    field: Field::Temps,
                    element: Some(i),
                },
            })?;
            Ok(())
        })?;

        let mut pumps = [PumpState::Off; CHANNELS];
        for_each_element(sections[4], Field::Pumps, |i, item| {
            pumps[i] = match item {
                "0" => PumpState::Off,
                "1" => PumpState::On,
                s if !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()) => {
                    return Err(DecodeError::OutOfRange {
                        field: Field::Pumps,
                        element: Some(i),
                    })
                }
                _ => {
                    return Err(DecodeError::MalformedSyntax {
                        field: Field::Pumps,
                        element: Some(i),
                    })
                }
            };
            Ok(())
        })?;

        let mode = sections[5]
            .parse()
            .map_err(|_| DecodeError::out_of_range(Field::Mode))?;

        Ok(TelemetryFrame {
            station,
            seq,
            timestamp,
            temps,
            pumps,
            mode,
        })
    }
}

fn parse_unsigned<T: FromStr>(text: &str, field: Field) -> Result<T, DecodeError> {
    if text.is_empty() || !text.bytes().all(|b| b.is_ascii_digit()) {
        return Err(DecodeError::malformed(field));
    }
    // only digits remain, so a parse failure is an overflow
    text.parse().map_err(|_| DecodeError::out_of_range(field))
}

fn for_each_element(
    section: &str,
    field: Field,
    mut f: impl FnMut(usize, &str) -> Result<(), DecodeError>,
) -> Result<(), DecodeError> {
    let mut count = 0;
    for (i, item) in section.split(LIST_SEP).enumerate() {
        if i >= CHANNELS {
            return Err(DecodeError::MalformedSyntax {
                field,
                element: Some(i),
            });
        }
        f(i, item)?;
        count += 1;
    }
    if count != CHANNELS {
        return Err(DecodeError::MalformedSyntax {
            field,
            element: Some(count),
        });
    }
    Ok(())
}

impl fmt::Display for TelemetryFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.encode())
    }
}

impl FromStr for TelemetryFrame {
    type Err = DecodeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TelemetryFrame::decode(s)
    }
}

pub fn encode_frame(frame: &TelemetryFrame) -> String {
    frame.encode()
}

pub fn decode_frame(text: &str) -> Result<TelemetryFrame, DecodeError> {
    TelemetryFrame::decode(text)
}
