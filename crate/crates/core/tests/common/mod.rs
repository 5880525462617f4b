//! Checks shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

pub mod corpora;
pub mod gradcheck;
pub mod oracle;
pub mod properties;
pub mod scenario;
pub mod split;
