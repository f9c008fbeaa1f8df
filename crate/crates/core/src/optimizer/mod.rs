//! Cache placement: the sample-average objective, vertex search, the
//! exhaustive oracle and the fixed baselines.

mod polytope;
mod search;

use serde::Serialize;

pub use polytope::{
    adjacent, enumerate_vertices, neighbors, Block, Polyhedron, Vertex, ENUMERATION_LIMIT,
    FACET_TOLERANCE,
};
pub use search::{
    global_opt_bruteforce, global_opt_with, vertex_walk, vertex_walk_with, OptimumOutcome,
    WalkOutcome,
};

use crate::analytics::{PreparedUrp, RelayLayout};
use crate::error::{Error, Result};
use crate::model::{CacheVector, NetworkConfig, Urp};

/// Sample-average cooperation probability.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ObjectiveEstimate {
    pub value: f64,
    pub n_samples: usize,
}

/// Request profiles prepared for repeated evaluation of the mean
/// cooperative fraction under different placements.
#[derive(Clone, Debug)]
pub struct SampleObjective {
    prepared: Vec<PreparedUrp>,
    /// Distinct requested files of each sample.
    requested: Vec<Vec<usize>>,
    /// For each file, `(sample, position in requested[sample])`.
    requesters: Vec<Vec<(usize, usize)>>,
    layout: RelayLayout,
}

impl SampleObjective {
    pub fn new(
        config: &NetworkConfig,
        samples: &[Urp],
        layout: RelayLayout,
    ) -> Result<SampleObjective> {
        if samples.is_empty() {
            return Err(Error::config("objective needs at least one request sample"));
        }
        let prepared = samples
            .iter()
            .map(|pi| PreparedUrp::new(config, pi, layout))
            .collect::<Result<Vec<_>>>()?;
        let requested: Vec<Vec<usize>> = prepared.iter().map(|p| p.requested_files()).collect();
        let mut requesters = vec![Vec::new(); config.files()];
        for (s, files) in requested.iter().enumerate() {
            for (bit, &l) in files.iter().enumerate() {
                requesters[l].push((s, bit));
            }
        }
        Ok(SampleObjective {
            prepared,
            requested,
            requesters,
            layout,
        })
    }

    pub fn len(&self) -> usize {
        self.prepared.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prepared.is_empty()
    }

    pub fn files(&self) -> usize {
        self.requesters.len()
    }

    pub fn layout(&self) -> RelayLayout {
        self.layout
    }

    /// Mean cooperative fraction at `q`; the budget is not checked.
    pub fn evaluate(&self, q: &[f64]) -> ObjectiveEstimate {
        let values = self.per_sample(q);
        ObjectiveEstimate {
            value: values.iter().sum::<f64>() / values.len() as f64,
            n_samples: values.len(),
        }
    }

    pub fn per_sample(&self, q: &[f64]) -> Vec<f64> {
        assert_eq!(q.len(), self.files(), "placement length");
        let mut scratch = Vec::new();
        self.prepared
            .iter()
            .map(|p| p.coop(q, &mut scratch))
            .collect()
    }

    pub(crate) fn sample_value(&self, sample: usize, q: &[f64], scratch: &mut Vec<f64>) -> f64 {
        self.prepared[sample].coop(q, scratch)
    }

    pub(crate) fn requested(&self, sample: usize) -> &[usize] {
        &self.requested[sample]
    }

    pub(crate) fn requesters(&self, file: usize) -> &[(usize, usize)] {
        &self.requesters[file]
    }
}

/// Mean shared-relay cooperation probability of a feasible `q` over `samples`.
pub fn saa_objective(
    q: &CacheVector,
    samples: &[Urp],
    config: &NetworkConfig,
) -> Result<ObjectiveEstimate> {
    saa_objective_layout(q, samples, config, RelayLayout::Shared)
}

/// As [`saa_objective`], with feasibility checked against the layout's
/// polyhedron.
pub fn saa_objective_layout(
    q: &CacheVector,
    samples: &[Urp],
    config: &NetworkConfig,
    layout: RelayLayout,
) -> Result<ObjectiveEstimate> {
    config.check_feasible(q)?;
    let poly = match layout {
        RelayLayout::Shared => Polyhedron::shared(config),
        RelayLayout::Separate => Polyhedron::separate(config),
    };
    if !poly.contains(q.as_slice()) {
        return Err(Error::domain("placement violates a relay cache budget"));
    }
    Ok(SampleObjective::new(config, samples, layout)?.evaluate(q.as_slice()))
}

/// Same fraction of every file, scaled to fill the budget (capped at 1).
pub fn uniform_placement(config: &NetworkConfig) -> CacheVector {
    let level = (config.cache_budget() / config.catalog_size()).clamp(0.0, 1.0);
    CacheVector::new(vec![level; config.files()]).expect("level lies in [0,1]")
}

/// Every file fully cached. Ignores the budget.
pub fn infinite_placement(config: &NetworkConfig) -> CacheVector {
    CacheVector::ones(config.files())
}
