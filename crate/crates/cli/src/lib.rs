//! Command-line and HTTP front end for the audit engine. Both paths go
//! through [`store::SessionStore`], so they write identical session files.

pub mod error;
pub mod server;
pub mod store;

pub use error::ApiError;
pub use store::{CreateSession, SessionStore};
