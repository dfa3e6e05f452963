//! Core library for a post-disaster recovery simulator on a three-layer
//! network of households (human), businesses (social), and infrastructure
//! (physical).
//!
//! Module map:
//! - [`geo`]: validated coordinates, haversine distance, uniform grid index
//! - [`net`]: three-layer network construction and structural summaries
//! - [`behavior`]: household return-decision model (logistic) and survey fitting
//! - [`dynamics`]: recovery update rules for all three layers
//! - [`estimation`]: curve fitting and MAP estimation of dynamic parameters
//! - [`engine`]: day-stepped simulation loop and scenario handling
//! - [`synth`]: synthetic input generation
//! - [`io`]: CSV/JSON input loading and result export
//! - [`rng`]: counter-based per-(node, day) random draws

pub mod behavior;
pub mod dynamics;
pub mod engine;
pub mod estimation;
pub mod geo;
pub mod io;
pub mod net;
pub mod rng;
pub mod synth;

pub use behavior::{Feature, FeatureVector, LogitModel};
pub use dynamics::{DynamicParams, HumanUpdateMode, LogisticCurve};
pub use engine::{RunOutput, Scenario, SimulationConfig};
pub use geo::GeoPoint;
pub use net::{CountyId, Layer, MultilayerNetwork, NodeId};
