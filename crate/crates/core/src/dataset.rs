//! In-memory view of a workspace: per-slot features, demand vectors, OD
//! graphs and neighborhoods, indexed by 1-based slot.

use std::sync::Arc;

use crate::autodiff::Mat;
use crate::error::{OdpError, Result};
use crate::neighborhoods::{geo_view, NeighborView, SlotNeighborhoods};
use crate::preprocess::{demand_vector, GeoAdjacency, OdGraph, Workspace};
use crate::temporal::{slice_indices, SliceIndices};
use crate::transfer::{ha_slots, HaMode};

#[derive(Debug, Clone)]
pub struct Dataset {
    pub n: usize,
    /// Slots per day.
    pub l: usize,
    graphs: Vec<OdGraph>,
    features: Vec<Mat>,
    demand: Vec<Mat>,
    neighborhoods: Vec<SlotNeighborhoods>,
}

impl Dataset {
    /// Builds per-slot neighborhoods as well when `with_neighborhoods` is
    /// set; baselines do not need them.
    pub fn from_workspace(ws: &Workspace, geo_threshold_km: f64, epsilon: f64, with_neighborhoods: bool) -> Self {
        let spec = &ws.manifest.spec;
        let neighborhoods = if with_neighborhoods {
            let geo = Arc::new(geo_view(&GeoAdjacency::build(spec), geo_threshold_km));
            ws.graphs
                .iter()
                .map(|g| SlotNeighborhoods::build(g, &geo, epsilon))
                .collect()
        } else {
            Vec::new()
        };
        Dataset {
            n: spec.n(),
            l: spec.slots_per_day(),
            demand: ws.graphs.iter().map(demand_vector).collect(),
            graphs: ws.graphs.clone(),
            features: ws.features.clone(),
            neighborhoods,
        }
    }

    /// Assembles a dataset from parts; every slot needs a graph, a feature
    /// matrix and (optionally) neighborhoods.
    pub fn from_parts(
        l: usize,
        graphs: Vec<OdGraph>,
        features: Vec<Mat>,
        geo: Arc<NeighborView>,
        epsilon: f64,
    ) -> Result<Self> {
        let n = geo.len();
        if graphs.len() != features.len() || graphs.iter().any(|g| g.n() != n) || features.iter().any(|f| f.nrows() != n) {
            return Err(OdpError::Shape("graphs, features and geography disagree".into()));
        }
        Ok(Dataset {
            n,
            l,
            demand: graphs.iter().map(demand_vector).collect(),
            neighborhoods: graphs.iter().map(|g| SlotNeighborhoods::build(g, &geo, epsilon)).collect(),
            graphs,
            features,
        })
    }

    pub fn slots(&self) -> usize {
        self.graphs.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.first().map_or(0, |f| f.ncols())
    }

    pub fn has_neighborhoods(&self) -> bool {
        !self.neighborhoods.is_empty()
    }

    fn check(&self, slot: usize) -> Result<usize> {
        if slot == 0 || slot > self.slots() {
            Err(OdpError::InvalidTarget(format!("slot {slot} is outside 1..={}", self.slots())))
        } else {
            Ok(slot - 1)
        }
    }

    pub fn graph(&self, slot: usize) -> &OdGraph {
        &self.graphs[slot - 1]
    }

    pub fn features(&self, slot: usize) -> &Mat {
        &self.features[slot - 1]
    }

    pub fn demand(&self, slot: usize) -> &Mat {
        &self.demand[slot - 1]
    }

    pub fn od(&self, slot: usize) -> Mat {
        self.graphs[slot - 1].to_dense()
    }

    pub fn neighborhoods(&self, slot: usize) -> &SlotNeighborhoods {
        &self.neighborhoods[slot - 1]
    }

    /// Slices for predicting `target` from the slots before it.
    pub fn slices(&self, target: usize, p: usize) -> Result<SliceIndices> {
        if target == 0 || target > self.slots() + 1 {
            return Err(OdpError::InvalidTarget(format!(
                "target {target} is outside 1..={}",
                self.slots() + 1
            )));
        }
        slice_indices(target - 1, self.l, p)
    }

    /// Ground truth `(demand, OD)` for an observed slot.
    pub fn truth(&self, slot: usize) -> Result<(Mat, Mat)> {
        let i = self.check(slot)?;
        Ok((self.demand[i].clone(), self.graphs[i].to_dense()))
    }

    /// Mean demand vector and OD matrix over `slots`, with repeats.
    pub fn average(&self, slots: &[usize]) -> Result<(Mat, Mat)> {
        let mut d = Mat::zeros((self.n, 1));
        let mut g = Mat::zeros((self.n, self.n));
        for &s in slots {
            let i = self.check(s)?;
            d += &self.demand[i];
            for (a, b, c) in self.graphs[i].iter() {
                g[[a, b]] += c as f64;
            }
        }
        let k = slots.len().max(1) as f64;
        Ok((d / k, g / k))
    }

    pub fn ha_reference(&self, target: usize, p: usize, mode: HaMode) -> Result<(Mat, Mat)> {
        let idx = self.slices(target, p)?;
        self.average(&ha_slots(&idx, mode))
    }
}
