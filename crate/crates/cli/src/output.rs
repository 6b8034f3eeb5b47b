//! Canonical JSON documents shared by the CLI and the HTTP API, so a read
//! available both ways yields identical bytes.

use evogit_core::canonical;
use evogit_core::graph::GraphError;
use evogit_core::run::{frontier_view, graph_view, notes_view, tree_view, Run, RunError};
use evogit_core::VersionId;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReadError {
    #[error("unknown version {0:?}")]
    NotFound(String),
    #[error("{0}")]
    BadRequest(String),
    #[error(transparent)]
    Run(#[from] RunError),
}

/// Serializes canonically, newline-terminated.
pub fn document<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = canonical::to_string(value).expect("views serialize to JSON");
    s.push('\n');
    s
}

/// Resolves a full digest or unique prefix.
pub fn resolve(run: &Run, hex: &str) -> Result<VersionId, ReadError> {
    run.state().graph.resolve(hex).map_err(|e| match e {
        GraphError::AmbiguousPrefix(_) => ReadError::BadRequest(e.to_string()),
        _ => ReadError::NotFound(hex.to_owned()),
    })
}

pub fn graph(run: &Run) -> String {
    document(&graph_view(&run.state()))
}

pub fn frontier(run: &Run) -> Result<String, ReadError> {
    Ok(document(&frontier_view(run)?))
}

pub fn tree(run: &Run, id: &str) -> Result<String, ReadError> {
    let id = resolve(run, id)?;
    Ok(document(&tree_view(run, &id)?))
}

pub fn notes(run: &Run, id: &str) -> Result<String, ReadError> {
    let id = resolve(run, id)?;
    Ok(document(&notes_view(run, &id)?))
}

pub fn diff(run: &Run, a: &str, b: &str) -> Result<String, ReadError> {
    let (a, b) = (resolve(run, a)?, resolve(run, b)?);
    let changes = run.store().diff(&a, &b).map_err(RunError::from)?;
    Ok(document(&changes))
}
