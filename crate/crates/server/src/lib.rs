//! HTTP service and command-line front end for a `warebus` catalog.
//!
//! [`api::Service`] answers requests independently of the transport, which
//! keeps the routing testable without sockets; [`http`] puts it on the wire
//! and [`cli`] wraps everything in the `warebus` binary.

pub mod api;
pub mod cli;
pub mod error;
pub mod http;

pub use api::{ApiRequest, ApiResponse, Method, Service};
pub use error::{ApiError, ErrorCode};
pub use http::{ServerConfig, ServeError};
