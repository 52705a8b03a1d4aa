//! HTTP transport for dialhub: the portal API, the remote agent protocol
//! server, and the client the engine uses to reach HTTP agents.

pub mod agent_server;
pub mod http_client;
pub mod portal_server;
pub mod server;

pub use agent_server::agent_router;
pub use http_client::{http_fallback, HttpAgent};
pub use portal_server::portal_router;
pub use server::{serve_until_interrupted, spawn, ServerHandle};
