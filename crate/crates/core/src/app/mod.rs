//! Application layer: data ingestion, transformations, rolling forecasts,
//! network extraction and the experiment runner behind the command line.

pub mod experiment;
pub mod forecast;
pub mod ingest;
pub mod network;
pub mod stores;
pub mod transform;
