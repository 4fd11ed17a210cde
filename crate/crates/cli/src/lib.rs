//! Operator surfaces over the kernel: request types and error mapping
//! shared by the CLI and the HTTP service, bearer-token credentials, and
//! the service itself.

pub mod api;
pub mod creds;
pub mod server;
