//! Command implementations behind the `probeanon` binary. Each command returns
//! a serializable report so it can be printed for humans, emitted as JSON, or
//! checked from tests.

pub mod levelset;
pub mod numbers;
pub mod rate;
pub mod serve;
pub mod simulation;
pub mod verify;
