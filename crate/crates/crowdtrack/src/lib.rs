//! Standard-library companion to `crowdtrack-core`: text file formats, the
//! benchmark harness, brute-force oracles and the `crowdtrack` binary.

pub mod bench;
pub mod io;
pub mod oracle;

pub use crowdtrack_core as core;
