//! Trip records to grid map, geographical adjacency, OD-graph sequence and
//! per-slot feature matrices.

pub mod features;
pub mod grid;
pub mod od;
pub mod trips;
pub mod workspace;

pub use features::{build_features, feature_dim, FeatureLayout};
pub use grid::{haversine_km, Bounds, GeoAdjacency, GridSpec, OutOfBounds};
pub use od::{build_od_sequence, demand_vector, OdGraph, OdSequence};
pub use trips::{parse_trips, ParsedTrips, Request, TripFormat};
pub use workspace::{Manifest, Workspace};
