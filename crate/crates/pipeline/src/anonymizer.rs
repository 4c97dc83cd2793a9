//! MAC address to 64-bit identifier mapping: SHA-256 over
//! `server_pepper || sensor_pepper || mac`, truncated to the first 8 digest
//! bytes read big-endian.

use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};
use thiserror::Error;
use zeroize::{Zeroize, ZeroizeOnDrop};

pub const PEPPER_LEN: usize = 16;
pub const GLOBAL_PEPPER_LEN: usize = 2 * PEPPER_LEN;
pub const MAC_LEN: usize = 6;
pub const FRAME_SECONDS: u64 = 60;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("expected {expected} hex digits, got {got}")]
    Length { expected: usize, got: usize },
    /// The offending text is not echoed; it may be a MAC.
    #[error("invalid hex digit")]
    Hex,
}

fn decode_hex<const N: usize>(s: &str) -> Result<[u8; N], ParseError> {
    if s.len() != 2 * N {
        return Err(ParseError::Length { expected: 2 * N, got: s.len() });
    }
    let mut out = [0u8; N];
    hex::decode_to_slice(s, &mut out).map_err(|_| ParseError::Hex)?;
    Ok(out)
}

/// A 48-bit MAC address in transmission order. `Debug` never prints the
/// octets.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct MacAddress([u8; MAC_LEN]);

impl MacAddress {
    pub fn new(octets: [u8; MAC_LEN]) -> Self {
        Self(octets)
    }

    pub fn octets(&self) -> &[u8; MAC_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for MacAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("MacAddress(..)")
    }
}

/// Accepts `aabbccddeeff` or `aa:bb:cc:dd:ee:ff` (either case).
impl FromStr for MacAddress {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let compact: String = if s.len() == 17 { s.split(':').collect() } else { s.to_string() };
        decode_hex::<MAC_LEN>(&compact).map(Self)
    }
}

/// One-minute frame number, `floor(unix_seconds / 60)`.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FrameIndex(pub u64);

impl FrameIndex {
    pub fn value(self) -> u64 {
        self.0
    }

    pub fn next(self) -> FrameIndex {
        FrameIndex(self.0 + 1)
    }

    pub fn start_seconds(self) -> u64 {
        self.0 * FRAME_SECONDS
    }
}

impl fmt::Display for FrameIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

pub fn frame_index(unix_seconds: u64) -> FrameIndex {
    FrameIndex(unix_seconds / FRAME_SECONDS)
}

/// 128 secret bits, wiped on drop.
#[derive(Clone, PartialEq, Eq, Zeroize, ZeroizeOnDrop)]
pub struct PepperBytes([u8; PEPPER_LEN]);

impl PepperBytes {
    pub fn new(bytes: [u8; PEPPER_LEN]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; PEPPER_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// Parses exactly 32 lowercase hex digits.
    pub fn from_hex(s: &str) -> Result<Self, ParseError> {
        if s.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(ParseError::Hex);
        }
        decode_hex::<PEPPER_LEN>(s).map(Self)
    }
}

impl fmt::Debug for PepperBytes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PepperBytes(..)")
    }
}

/// Fixed per-deployment half of the global pepper. Only sensors hold it.
#[derive(Clone, PartialEq, Eq, Debug, Zeroize, ZeroizeOnDrop)]
pub struct SensorPepper(PepperBytes);

impl SensorPepper {
    pub fn new(bytes: [u8; PEPPER_LEN]) -> Self {
        Self(PepperBytes::new(bytes))
    }

    pub fn from_hex(s: &str) -> Result<Self, ParseError> {
        PepperBytes::from_hex(s.trim()).map(Self)
    }

    pub fn bytes(&self) -> &PepperBytes {
        &self.0
    }
}

/// Time-varying half of the global pepper, valid for a single frame.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ServerPepper {
    pub frame: FrameIndex,
    pub bytes: PepperBytes,
}

impl ServerPepper {
    pub fn new(frame: FrameIndex, bytes: [u8; PEPPER_LEN]) -> Self {
        Self { frame, bytes: PepperBytes::new(bytes) }
    }
}

#[derive(Clone, Zeroize, ZeroizeOnDrop)]
pub struct GlobalPepper([u8; GLOBAL_PEPPER_LEN]);

impl GlobalPepper {
    pub fn as_bytes(&self) -> &[u8; GLOBAL_PEPPER_LEN] {
        &self.0
    }
}

impl fmt::Debug for GlobalPepper {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("GlobalPepper(..)")
    }
}

/// Truncated digest identifying one device within one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SaIdentifier(pub u64);

impl SaIdentifier {
    pub fn to_hex(self) -> String {
        format!("{:016x}", self.0)
    }

    /// Parses exactly 16 lowercase hex digits.
    pub fn from_hex(s: &str) -> Result<Self, ParseError> {
        if s.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(ParseError::Hex);
        }
        decode_hex::<8>(s).map(|b| Self(u64::from_be_bytes(b)))
    }
}

/// Server pepper first, sensor pepper second.
pub fn build_global_pepper(server: &ServerPepper, sensor: &SensorPepper) -> GlobalPepper {
    let mut out = [0u8; GLOBAL_PEPPER_LEN];
    out[..PEPPER_LEN].copy_from_slice(server.bytes.as_bytes());
    out[PEPPER_LEN..].copy_from_slice(sensor.bytes().as_bytes());
    GlobalPepper(out)
}

pub fn anonymize(pepper: &GlobalPepper, mac: &MacAddress) -> SaIdentifier {
    let mut message = [0u8; GLOBAL_PEPPER_LEN + MAC_LEN];
    message[..GLOBAL_PEPPER_LEN].copy_from_slice(pepper.as_bytes());
    message[GLOBAL_PEPPER_LEN..].copy_from_slice(mac.octets());
    let digest = Sha256::digest(message);
    message.zeroize();
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    SaIdentifier(u64::from_be_bytes(head))
}
