//! Request/response seam between stations and the ingest service.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reply {
    pub status: u16,
    pub body: String,
}

impl Reply {
    pub fn is_success(&self) -> bool {
        self.status == 200
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("transport failure: {0}")]
pub struct TransportError(pub String);

/// Issues a GET for `path_and_query` (e.g. `/commands/poll?station=ST01`).
///
/// Any HTTP status is a successful exchange; only network-level failures
/// are errors.
pub trait Transport: Send + Sync {
    fn get(&self, path_and_query: &str) -> Result<Reply, TransportError>;
}

impl<T: Transport + ?Sized> Transport for std::sync::Arc<T> {
    fn get(&self, path_and_query: &str) -> Result<Reply, TransportError> {
        (**self).get(path_and_query)
    }
}

impl<T: Transport + ?Sized> Transport for &T {
    fn get(&self, path_and_query: &str) -> Result<Reply, TransportError> {
        (**self).get(path_and_query)
    }
}
