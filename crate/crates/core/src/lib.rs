//! Mobility knowledge graph and pandemic analytics.
//!
//! The crate is organised around a temporal knowledge graph ([`pkg::Pkg`]) of
//! interval-stamped mobility facts. Around it sit:
//!
//! * [`geo`]: grids, regions, places, the six adjacency metrics and the
//!   connectivity index,
//! * [`mining`]: cascading and co-occurrence pattern mining with a
//!   participation-index filter, plus an exhaustive reference miner,
//! * [`spatial`]: Moran-style spatial correlation of weekly case counts,
//! * [`embed`]: skip-gram location embeddings and bucketed temporal vectors,
//! * [`net`]: the bi-LSTM / attention / GRU hotspot classifier with exact
//!   backpropagation,
//! * [`fog`]: closed-form delay and handset energy models for fog and
//!   cloud-only reporting,
//! * [`health`]: range checks of body readings against a user profile,
//! * [`io`]: loaders, persistence and a seeded scenario generator.

pub mod embed;
pub mod fog;
pub mod geo;
pub mod health;
pub mod io;
pub mod mining;
pub mod net;
pub mod pkg;
pub mod spatial;

pub use geo::{BBox, LatLon, Place, PoiType, Region};
pub use pkg::{Entity, Interval, Pkg, PkgQuery, Relation, TemporalFact};
