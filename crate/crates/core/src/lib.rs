//! Sector correlation networks: centrality, spanning trees, embeddings,
//! size regressions and minimum-variance portfolios built on log returns.

pub mod centrality;
pub mod coremap;
pub mod error;
pub mod ingest;
pub mod mds;
pub mod model;
pub mod mst;
pub mod network;
pub mod pipeline;
pub mod portfolio;
pub mod regression;
pub mod synthetic;

pub use error::{Error, ErrorClass, Result};
pub use model::{CorrelationNet, PanelData, PanelKind, SectorFundamentals, SectorId, SizeMetric};
