//! Real-time bridge between a [`Session`](teleop_core::harness::Session)
//! and an operator UI over a WebSocket.

pub mod frames;
mod server;

pub use server::{serve, GatewayConfig, GatewayError, GatewayHandle, SNAPSHOT_RATE};
