//! The self-powered sensor node.
//!
//! The node wakes when light reaches its cell and checks the store voltage.
//! Below the threshold it samples its sensors to the memory card and goes
//! back to sleep; at or above it, the cell becomes a receiver, commands are
//! taken and executed, and the cell returns to harvesting until the store
//! is full.

mod frame;
mod load;

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::ops::Range;

use serde::Serialize;
use thiserror::Error;

use crate::harvester::CellMode;

pub use frame::{
    crc8, decode_command, decode_raw, encode_command, encode_raw, Command, FrameError, FRAME_BITS,
    FRAME_LEN, SYNC,
};
pub use load::{load_power, LoadCatalog, LoadProfile, UnknownProfile};

pub const DEFAULT_V_THRESHOLD: f64 = 3.6;

pub type SensorId = u8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Phase {
    Sleep,
    WakeCheck,
    SenseSave,
    CommandRx,
    Harvest,
}

impl Phase {
    pub const ALL: [Phase; 5] =
        [Phase::Sleep, Phase::WakeCheck, Phase::SenseSave, Phase::CommandRx, Phase::Harvest];

    /// Whether the device electronics are awake and drawing their load.
    pub fn draws_load(self) -> bool {
        !matches!(self, Phase::Sleep | Phase::Harvest)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Sleep => "Sleep",
            Phase::WakeCheck => "WakeCheck",
            Phase::SenseSave => "SenseSave",
            Phase::CommandRx => "CommandRx",
            Phase::Harvest => "Harvest",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Stimulus {
    /// Light on the cell; carries the store voltage measured at that moment.
    LightDetected(f64),
    SenseComplete,
    CommandsComplete,
    FullCharge,
    Timeout,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    MeasureVoltage,
    SwitchCell(CellMode),
    StartSensing(Vec<SensorId>),
    ReceiveCommands,
    Sleep,
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("stimulus {stimulus:?} is not valid in phase {phase}")]
pub struct ProtocolError {
    pub phase: Phase,
    pub stimulus: Stimulus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SensorRecord {
    pub timestamp: f64,
    pub sensor_id: SensorId,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum RecordError {
    #[error("sensor {0} is disabled")]
    SensorDisabled(SensorId),
    #[error("timestamp {timestamp} precedes last stored record at {last}")]
    OutOfOrder { timestamp: f64, last: f64 },
}

/// Side effect of executing one received command.
#[derive(Debug, Clone, PartialEq)]
pub enum CommandEffect {
    None,
    /// Send the given slice of storage over the uplink.
    Transmit { records: Range<usize>, retransmission: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub phase: Phase,
    pub v_threshold: f64,
    pub pending_commands: VecDeque<Command>,
    pub storage: Vec<SensorRecord>,
    pub enabled_sensors: BTreeSet<SensorId>,
    pub active_load: LoadProfile,
    /// Voltage observed by the most recent wake check.
    pub last_wake_voltage: Option<f64>,
    sent_upto: usize,
    last_batch: Range<usize>,
}

impl NodeState {
    pub fn new(v_threshold: f64, active_load: LoadProfile) -> Self {
        NodeState {
            phase: Phase::Sleep,
            v_threshold,
            pending_commands: VecDeque::new(),
            storage: Vec::new(),
            enabled_sensors: BTreeSet::new(),
            active_load,
            last_wake_voltage: None,
            sent_upto: 0,
            last_batch: 0..0,
        }
    }

    /// Advances the protocol. On an invalid stimulus the node stays in its
    /// current phase and the error is returned for the trace.
    pub fn step(&mut self, stimulus: Stimulus) -> Result<Vec<Action>, ProtocolError> {
        use Phase::*;
        use Stimulus::*;

        let (next, actions) = match (self.phase, stimulus) {
            (Sleep, LightDetected(_) | Timeout) => (WakeCheck, vec![Action::MeasureVoltage]),
            (WakeCheck, LightDetected(v_b)) => {
                self.last_wake_voltage = Some(v_b);
                if v_b >= self.v_threshold {
                    (
                        CommandRx,
                        vec![Action::SwitchCell(CellMode::Photoconductive), Action::ReceiveCommands],
                    )
                } else {
                    (SenseSave, vec![Action::StartSensing(self.enabled_sensors.iter().copied().collect())])
                }
            }
            (WakeCheck, Timeout) | (SenseSave, SenseComplete) | (Harvest, FullCharge | Timeout) => {
                (Sleep, vec![Action::Sleep])
            }
            (CommandRx, CommandsComplete | Timeout) => {
                (Harvest, vec![Action::SwitchCell(CellMode::Photovoltaic)])
            }
            (phase, stimulus) => return Err(ProtocolError { phase, stimulus }),
        };
        self.phase = next;
        Ok(actions)
    }

    /// Forced shutdown when the store cannot power the current phase.
    pub fn brown_out(&mut self) -> Vec<Action> {
        self.phase = Phase::Sleep;
        self.pending_commands.clear();
        vec![Action::SwitchCell(CellMode::Photovoltaic), Action::Sleep]
    }

    pub fn record_sensor(
        &mut self,
        sensor_id: SensorId,
        value: f64,
        timestamp: f64,
    ) -> Result<(), RecordError> {
        if !self.enabled_sensors.contains(&sensor_id) {
            return Err(RecordError::SensorDisabled(sensor_id));
        }
        if let Some(last) = self.storage.last() {
            if timestamp < last.timestamp {
                return Err(RecordError::OutOfOrder { timestamp, last: last.timestamp });
            }
        }
        self.storage.push(SensorRecord { timestamp, sensor_id, value });
        Ok(())
    }

    pub fn apply_command(&mut self, cmd: Command) -> CommandEffect {
        match cmd {
            Command::SensorOn(id) => {
                self.enabled_sensors.insert(id);
                CommandEffect::None
            }
            Command::SensorOff(id) => {
                self.enabled_sensors.remove(&id);
                CommandEffect::None
            }
            Command::SendData => {
                let batch = self.sent_upto..self.storage.len();
                self.sent_upto = self.storage.len();
                self.last_batch = batch.clone();
                CommandEffect::Transmit { records: batch, retransmission: false }
            }
            Command::Retransmit => {
                CommandEffect::Transmit { records: self.last_batch.clone(), retransmission: true }
            }
        }
    }

    /// Number of records that have been sent at least once.
    pub fn delivered_records(&self) -> usize {
        self.sent_upto
    }
}
