//! Decentralized MAC-address anonymization for probe-request crowd counting.
//!
//! Sensors hash each source MAC together with a per-minute server pepper and
//! a fixed sensor pepper, keep the first 64 bits, and upload only those
//! identifiers. A central service distributes the rolling server peppers; an
//! aggregator counts distinct identifiers per one-minute frame.

pub mod aggregator;
pub mod anonymizer;
pub mod clock;
pub mod http;
pub mod pepper_service;
pub mod sensor_agent;
pub mod wire;

pub use anonymizer::{
    anonymize, build_global_pepper, frame_index, FrameIndex, GlobalPepper, MacAddress, SaIdentifier,
    SensorPepper, ServerPepper,
};
pub use clock::{Clock, ManualClock, OffsetClock, SystemClock};
