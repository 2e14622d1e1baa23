//! Shared fixtures for the integration-test targets. Each target compiles
//! this module independently, so not every item is used everywhere.
#![allow(dead_code)]

pub mod corpus;
pub mod goldens;
pub mod mock_server;
pub mod synth;
