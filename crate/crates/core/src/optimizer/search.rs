//! Vertex walk and exhaustive search over the vertices of the placement
//! polyhedron.

use std::cmp::Ordering;

use serde::Serialize;

use super::polytope::{
    for_each_fractional_completion, lex_cmp, neighbors, Polyhedron, Vertex, ENUMERATION_LIMIT,
};
use super::{ObjectiveEstimate, SampleObjective};
use crate::analytics::RelayLayout;
use crate::error::{Error, Result};
use crate::model::{CacheVector, NetworkConfig, Urp};

/// Minimum gain for a move, and the width of a value tie.
const IMPROVEMENT: f64 = 1e-12;

#[derive(Clone, Debug, Serialize)]
pub struct WalkOutcome {
    pub placement: CacheVector,
    pub estimate: ObjectiveEstimate,
    pub steps: usize,
    /// Objective value after each step, starting with the origin.
    pub trajectory: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct OptimumOutcome {
    pub placement: CacheVector,
    pub estimate: ObjectiveEstimate,
    pub vertices_evaluated: usize,
}

/// Steepest-ascent walk on the shared-relay polyhedron starting from the
/// empty cache.
pub fn vertex_walk(
    samples: &[Urp],
    poly: &Polyhedron,
    config: &NetworkConfig,
) -> Result<WalkOutcome> {
    let objective = SampleObjective::new(config, samples, RelayLayout::Shared)?;
    vertex_walk_with(&objective, poly)
}

/// Steepest-ascent vertex walk: from the origin, move to the adjacent vertex
/// with the largest objective while that strictly improves it. Equal values
/// go to the lexicographically smallest vertex.
pub fn vertex_walk_with(objective: &SampleObjective, poly: &Polyhedron) -> Result<WalkOutcome> {
    check_dims(objective, poly)?;
    let n = objective.len() as f64;
    let mut current = Vertex::origin(poly.dim());
    let mut values = objective.per_sample(current.as_slice());
    let mut total: f64 = values.iter().sum();
    let mut trajectory = vec![total / n];
    let mut scratch = Vec::new();
    let mut affected = Vec::new();
    let mut seen = vec![false; objective.len()];
    loop {
        let mut best: Option<(f64, Vertex)> = None;
        for candidate in neighbors(&current, poly) {
            collect_affected(
                objective,
                current.as_slice(),
                candidate.as_slice(),
                &mut seen,
                &mut affected,
            );
            let delta: f64 = affected
                .iter()
                .map(|&s| objective.sample_value(s, candidate.as_slice(), &mut scratch) - values[s])
                .sum();
            let value = (total + delta) / n;
            let better = match &best {
                None => true,
                Some((v, w)) => {
                    value > v + IMPROVEMENT
                        || ((value - v).abs() <= IMPROVEMENT
                            && candidate.lex_cmp(w) == Ordering::Less)
                }
            };
            if better {
                best = Some((value, candidate));
            }
        }
        match best {
            Some((value, next)) if value > total / n + IMPROVEMENT => {
                current = next;
                values = objective.per_sample(current.as_slice());
                total = values.iter().sum();
                trajectory.push(total / n);
            }
            _ => break,
        }
    }
    Ok(WalkOutcome {
        placement: current.to_cache_vector(),
        estimate: objective.evaluate(current.as_slice()),
        steps: trajectory.len() - 1,
        trajectory,
    })
}

fn collect_affected(
    objective: &SampleObjective,
    from: &[f64],
    to: &[f64],
    seen: &mut [bool],
    out: &mut Vec<usize>,
) {
    out.clear();
    for l in 0..from.len() {
        if from[l] != to[l] {
            for &(s, _) in objective.requesters(l) {
                if !seen[s] {
                    seen[s] = true;
                    out.push(s);
                }
            }
        }
    }
    for &s in out.iter() {
        seen[s] = false;
    }
}

fn check_dims(objective: &SampleObjective, poly: &Polyhedron) -> Result<()> {
    if objective.files() != poly.dim() {
        return Err(Error::config(format!(
            "objective has {} files but polyhedron has dimension {}",
            objective.files(),
            poly.dim()
        )));
    }
    Ok(())
}

/// Exhaustive maximum of the shared-relay objective over all vertices.
pub fn global_opt_bruteforce(
    samples: &[Urp],
    poly: &Polyhedron,
    config: &NetworkConfig,
) -> Result<OptimumOutcome> {
    let objective = SampleObjective::new(config, samples, RelayLayout::Shared)?;
    global_opt_with(&objective, poly)
}

/// Per-sample values on binary patterns are tabulated once when the sample
/// requests at most this many distinct files.
const TABLE_BITS: usize = 16;

/// Exhaustive maximum over every vertex of `poly`, ties to the
/// lexicographically smallest vertex.
///
/// Binary patterns are visited in Gray-code order so that each move flips a
/// single coordinate and only the samples requesting it are re-evaluated.
/// Fractional completions of each pattern are evaluated on top of it.
pub fn global_opt_with(objective: &SampleObjective, poly: &Polyhedron) -> Result<OptimumOutcome> {
    check_dims(objective, poly)?;
    let dim = poly.dim();
    if dim > ENUMERATION_LIMIT {
        return Err(Error::DimensionGuard {
            dim,
            limit: ENUMERATION_LIMIT,
        });
    }
    let samples = objective.len();
    let n = samples as f64;
    let mut scratch = Vec::new();
    let mut q = vec![0.0; dim];

    let tables: Vec<Option<Vec<f64>>> = (0..samples)
        .map(|s| {
            let files = objective.requested(s);
            (files.len() <= TABLE_BITS).then(|| {
                let table = (0..1usize << files.len())
                    .map(|mask| {
                        for (bit, &l) in files.iter().enumerate() {
                            q[l] = ((mask >> bit) & 1) as f64;
                        }
                        objective.sample_value(s, &q, &mut scratch)
                    })
                    .collect();
                for &l in files {
                    q[l] = 0.0;
                }
                table
            })
        })
        .collect();

    let mut index = vec![0usize; samples];
    let mut values: Vec<f64> = tables
        .iter()
        .enumerate()
        .map(|(s, t)| match t {
            Some(t) => t[0],
            None => objective.sample_value(s, &q, &mut scratch),
        })
        .collect();
    let mut total: f64 = values.iter().sum();
    let mut used: Vec<f64> = vec![0.0; poly.blocks().len()];

    let mut best_value = f64::NEG_INFINITY;
    let mut best_point = q.clone();
    let mut evaluated = 0usize;
    let mut seen = vec![false; samples];
    let mut affected = Vec::new();

    // Low Gray-code bits flip most often; give them the least requested files.
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by_key(|&l| objective.requesters(l).len());

    let patterns = 1u64 << dim;
    for step in 0..patterns {
        if step > 0 {
            let l = order[step.trailing_zeros() as usize];
            let b = poly.block_of(l);
            let sign = if q[l] == 0.0 { 1.0 } else { -1.0 };
            q[l] = 1.0 - q[l];
            used[b] += sign * poly.sizes()[l];
            for &(s, bit) in objective.requesters(l) {
                let new = match &tables[s] {
                    Some(t) => {
                        index[s] ^= 1 << bit;
                        t[index[s]]
                    }
                    None => objective.sample_value(s, &q, &mut scratch),
                };
                total += new - values[s];
                values[s] = new;
            }
            if step % 1024 == 0 {
                total = values.iter().sum();
            }
        }
        let feasible = poly
            .blocks()
            .iter()
            .zip(&used)
            .all(|(block, u)| *u <= block.budget() + super::FACET_TOLERANCE);
        if !feasible {
            continue;
        }
        for_each_fractional_completion(poly, &q, |point| {
            evaluated += 1;
            let value = if point == q.as_slice() {
                total / n
            } else {
                collect_affected(objective, &q, point, &mut seen, &mut affected);
                let delta: f64 = affected
                    .iter()
                    .map(|&s| objective.sample_value(s, point, &mut scratch) - values[s])
                    .sum();
                (total + delta) / n
            };
            let better = value > best_value + IMPROVEMENT
                || ((value - best_value).abs() <= IMPROVEMENT
                    && lex_cmp(point, &best_point) == Ordering::Less);
            if better {
                best_value = value;
                best_point.copy_from_slice(point);
            }
        });
    }
    Ok(OptimumOutcome {
        estimate: objective.evaluate(&best_point),
        placement: CacheVector::new(best_point).expect("vertex entries lie in [0,1]"),
        vertices_evaluated: evaluated,
    })
}
