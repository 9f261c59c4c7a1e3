//! Local M-Bus link between a station gateway and its heat meter.
//!
//! The gateway sends REQ_UD2, the meter answers RSP_UD with an 8-byte
//! register block. Both telegrams are serialized to bytes and parsed back on
//! the other side, so every exchange goes through the codec.

use std::fmt;

use heatdispatch_core::mbus::{
    self, decode_meter_payload, encode_meter_payload, FrameError, MbusFrame, PayloadError, CI_REQUEST, CI_RESPONSE,
    C_REQ_UD2, C_RSP_UD,
};
use heatdispatch_core::MeterReading;
use thiserror::Error;

use crate::plant::PlantState;

/// Energy credited per pump-second of running time.
pub const WH_PER_PUMP_SECOND: u32 = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinkError {
    #[error("meter sent no reply")]
    NoReply,
    #[error("reply frame rejected: {0}")]
    Frame(#[from] FrameError),
    #[error("unexpected reply header C={control:#04x} A={address:#04x} CI={ci:#04x}")]
    Header { control: u8, address: u8, ci: u8 },
    #[error("reply payload rejected: {0}")]
    Payload(#[from] PayloadError),
}

type Fault = Box<dyn FnMut(&mut Vec<u8>) + Send>;

/// The byte channel to one meter plus the meter itself.
pub struct MeterLink {
    address: u8,
    reply_fault: Option<Fault>,
}

impl fmt::Debug for MeterLink {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MeterLink")
            .field("address", &self.address)
            .field("reply_fault", &self.reply_fault.is_some())
            .finish()
    }
}

impl MeterLink {
    pub fn new(address: u8) -> Self {
        MeterLink {
            address,
            reply_fault: None,
        }
    }

    pub fn address(&self) -> u8 {
        self.address
    }

    /// Installs a hook that may tamper with reply bytes in flight.
    pub fn set_reply_fault(&mut self, fault: impl FnMut(&mut Vec<u8>) + Send + 'static) {
        self.reply_fault = Some(Box::new(fault));
    }

    pub fn clear_reply_fault(&mut self) {
        self.reply_fault = None;
    }

    pub fn exchange(&mut self, state: &PlantState) -> Result<MeterReading, LinkError> {
        let request = MbusFrame::new(C_REQ_UD2, self.address, CI_REQUEST, Vec::new())
            .expect("empty user data")
            .to_bytes();
        let mut reply = meter_respond(self.address, &request, state).ok_or(LinkError::NoReply)?;
        if let Some(fault) = self.reply_fault.as_mut() {
            fault(&mut reply);
        }
        let frame = mbus::parse_long_frame(&reply)?;
        if frame.control != C_RSP_UD || frame.address != self.address || frame.ci != CI_RESPONSE {
            return Err(LinkError::Header {
                control: frame.control,
                address: frame.address,
                ci: frame.ci,
            });
        }
        Ok(decode_meter_payload(frame.user_data())?)
    }
}

/// Register values the meter reports for `state`.
pub fn meter_reading(state: &PlantState) -> MeterReading {
    let temps = state.reported_temps();
    let pump_seconds = state.pump_on_ms / 1000;
    let energy = pump_seconds.saturating_mul(WH_PER_PUMP_SECOND as u64);
    MeterReading {
        energy_wh: energy.min(u32::MAX as u64) as u32,
        flow_temp: temps[0],
        return_temp: temps[1],
    }
}

/// Meter side: answers a valid REQ_UD2 addressed to it, ignores anything else.
fn meter_respond(address: u8, request: &[u8], state: &PlantState) -> Option<Vec<u8>> {
    let req = mbus::parse_long_frame(request).ok()?;
    if req.control != C_REQ_UD2 || req.ci != CI_REQUEST || req.address != address {
        return None;
    }
    let payload = encode_meter_payload(&meter_reading(state)).to_vec();
    let reply = MbusFrame::new(C_RSP_UD, address, CI_RESPONSE, payload).expect("8-byte payload");
    Some(reply.to_bytes())
}

/// One gateway/meter exchange over a fresh, fault-free link.
pub fn meter_exchange(address: u8, state: &PlantState) -> Result<MeterReading, LinkError> {
    MeterLink::new(address).exchange(state)
}
