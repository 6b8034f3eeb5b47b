//! Operator entry points for EvoGit runs: the `evogit` command line and
//! the HTTP API it can serve.

pub mod api;
pub mod commands;
pub mod output;
