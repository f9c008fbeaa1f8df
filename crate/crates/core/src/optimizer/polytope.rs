//! Geometry of the placement polyhedron: a unit box cut by one knapsack row
//! per cache. A shared relay has a single row over all files; separate relays
//! have one row per gateway over that gateway's files.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::model::{Bs, CacheVector, NetworkConfig};

/// Tolerance for facet tightness, binary snapping and duplicate detection.
pub const FACET_TOLERANCE: f64 = 1e-9;

/// Largest dimension accepted by exhaustive enumeration.
pub const ENUMERATION_LIMIT: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    members: Vec<usize>,
    budget: f64,
}

impl Block {
    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Polyhedron {
    sizes: Vec<f64>,
    blocks: Vec<Block>,
    block_of: Vec<usize>,
}

impl Polyhedron {
    /// `{q ∈ [0,1]^L : Σ F̃_l q_l ≤ budget}`.
    pub fn new(sizes: Vec<f64>, budget: f64) -> Result<Polyhedron> {
        let members = (0..sizes.len()).collect();
        Polyhedron::from_blocks(sizes, vec![(members, budget)])
    }

    /// One knapsack row per gateway, each with `budget_each`.
    pub fn per_gateway(sizes: Vec<f64>, ownership: &[Bs], budget_each: f64) -> Result<Polyhedron> {
        if ownership.len() != sizes.len() {
            return Err(Error::config("ownership and file sizes differ in length"));
        }
        let blocks = Bs::BOTH
            .iter()
            .map(|&bs| {
                let members = (0..sizes.len()).filter(|&l| ownership[l] == bs).collect();
                (members, budget_each)
            })
            .collect();
        Polyhedron::from_blocks(sizes, blocks)
    }

    /// Shared-relay feasible set of a scenario.
    pub fn shared(config: &NetworkConfig) -> Polyhedron {
        Polyhedron::new(config.file_sizes().to_vec(), config.cache_budget())
            .expect("validated scenario")
    }

    /// Two relays with half the scenario budget each.
    pub fn separate(config: &NetworkConfig) -> Polyhedron {
        Polyhedron::per_gateway(
            config.file_sizes().to_vec(),
            config.ownership(),
            config.cache_budget() / 2.0,
        )
        .expect("validated scenario")
    }

    fn from_blocks(sizes: Vec<f64>, blocks: Vec<(Vec<usize>, f64)>) -> Result<Polyhedron> {
        if let Some(bad) = sizes.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::config(format!(
                "file sizes must be positive, got {bad}"
            )));
        }
        let mut block_of = vec![usize::MAX; sizes.len()];
        let mut kept = Vec::new();
        for (members, budget) in blocks {
            if !(budget.is_finite() && budget >= 0.0) {
                return Err(Error::config(format!(
                    "cache budget must be non-negative, got {budget}"
                )));
            }
            if members.is_empty() {
                continue;
            }
            for &l in &members {
                block_of[l] = kept.len();
            }
            kept.push(Block { members, budget });
        }
        debug_assert!(block_of.iter().all(|&b| b != usize::MAX));
        Ok(Polyhedron {
            sizes,
            blocks: kept,
            block_of,
        })
    }

    pub fn dim(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[f64] {
        &self.sizes
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block_of(&self, coordinate: usize) -> usize {
        self.block_of[coordinate]
    }

    pub fn used(&self, q: &[f64], block: usize) -> f64 {
        self.blocks[block]
            .members
            .iter()
            .map(|&l| self.sizes[l] * q[l])
            .sum()
    }

    pub fn slack(&self, q: &[f64], block: usize) -> f64 {
        self.blocks[block].budget - self.used(q, block)
    }

    pub fn is_tight(&self, q: &[f64], block: usize) -> bool {
        self.slack(q, block).abs() <= FACET_TOLERANCE
    }

    pub fn contains(&self, q: &[f64]) -> bool {
        q.len() == self.dim()
            && q.iter().all(|x| (0.0..=1.0).contains(x))
            && (0..self.blocks.len()).all(|b| self.slack(q, b) >= -FACET_TOLERANCE)
    }

    /// Value of coordinate `l` that makes its row tight with the others fixed.
    fn saturating_value(&self, q: &[f64], l: usize) -> f64 {
        let b = self.block_of[l];
        (self.slack(q, b) + self.sizes[l] * q[l]) / self.sizes[l]
    }
}

fn is_fractional(x: f64) -> bool {
    x > FACET_TOLERANCE && x < 1.0 - FACET_TOLERANCE
}

fn snap(x: f64) -> f64 {
    if x.abs() <= FACET_TOLERANCE {
        0.0
    } else if (1.0 - x).abs() <= FACET_TOLERANCE {
        1.0
    } else {
        x
    }
}

/// Extreme point of a [`Polyhedron`]: binary except for at most one
/// fractional coordinate per tight knapsack row.
#[derive(Clone, Debug, PartialEq)]
pub struct Vertex {
    values: Vec<f64>,
}

impl Vertex {
    pub fn origin(dim: usize) -> Vertex {
        Vertex {
            values: vec![0.0; dim],
        }
    }

    /// Validates `values` as a vertex of `poly`, snapping near-binary entries.
    pub fn from_values(poly: &Polyhedron, values: &[f64]) -> Option<Vertex> {
        if values.len() != poly.dim() {
            return None;
        }
        let values: Vec<f64> = values.iter().map(|&x| snap(x)).collect();
        if !poly.contains(&values) {
            return None;
        }
        for (b, block) in poly.blocks.iter().enumerate() {
            let fractional = block
                .members
                .iter()
                .filter(|&&l| is_fractional(values[l]))
                .count();
            if fractional > 1 || (fractional == 1 && !poly.is_tight(&values, b)) {
                return None;
            }
        }
        Some(Vertex { values })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Coordinates at 1.
    pub fn ones(&self) -> Vec<usize> {
        (0..self.values.len())
            .filter(|&l| self.values[l] == 1.0)
            .collect()
    }

    /// Fractional coordinates and their values, ascending by coordinate.
    pub fn fractional(&self) -> Vec<(usize, f64)> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &x)| is_fractional(x))
            .map(|(l, &x)| (l, x))
            .collect()
    }

    pub fn to_cache_vector(&self) -> CacheVector {
        CacheVector::new(self.values.clone()).expect("vertex entries lie in [0,1]")
    }

    pub fn lex_cmp(&self, other: &Vertex) -> Ordering {
        lex_cmp(&self.values, &other.values)
    }
}

pub(crate) fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    a.len().cmp(&b.len())
}

/// All vertices of `poly`, in lexicographic order. Refused above
/// [`ENUMERATION_LIMIT`] coordinates.
pub fn enumerate_vertices(poly: &Polyhedron) -> Result<Vec<Vertex>> {
    let dim = poly.dim();
    if dim > ENUMERATION_LIMIT {
        return Err(Error::DimensionGuard {
            dim,
            limit: ENUMERATION_LIMIT,
        });
    }
    let mut out = Vec::new();
    let mut q = vec![0.0; dim];
    for pattern in 0u32..(1u32 << dim) {
        for (l, x) in q.iter_mut().enumerate() {
            *x = f64::from((pattern >> l) & 1);
        }
        if !poly.contains(&q) {
            continue;
        }
        for_each_fractional_completion(poly, &q, |point| {
            out.push(Vertex {
                values: point.to_vec(),
            })
        });
    }
    out.sort_by(|a, b| a.lex_cmp(b));
    out.dedup_by(|a, b| {
        a.values
            .iter()
            .zip(&b.values)
            .all(|(x, y)| (x - y).abs() <= FACET_TOLERANCE)
    });
    Ok(out)
}

/// Calls `visit` with the binary point `q` itself and with every vertex that
/// adds budget-saturating fractional coordinates to it (at most one per row).
pub(crate) fn for_each_fractional_completion(
    poly: &Polyhedron,
    q: &[f64],
    mut visit: impl FnMut(&[f64]),
) {
    let options: Vec<Vec<(usize, f64)>> = (0..poly.blocks.len())
        .map(|b| {
            let slack = poly.slack(q, b);
            poly.blocks[b]
                .members
                .iter()
                .filter(|&&j| q[j] == 0.0)
                .map(|&j| (j, slack / poly.sizes[j]))
                .filter(|&(_, x)| is_fractional(x))
                .collect()
        })
        .collect();
    let mut point = q.to_vec();
    // Odometer over "no fractional coordinate" (digit 0) or option digit-1.
    let mut digits = vec![0usize; options.len()];
    loop {
        visit(&point);
        let mut b = 0;
        loop {
            if b == digits.len() {
                return;
            }
            if digits[b] > 0 {
                point[options[b][digits[b] - 1].0] = 0.0;
            }
            digits[b] += 1;
            if digits[b] <= options[b].len() {
                let (j, x) = options[b][digits[b] - 1];
                point[j] = x;
                break;
            }
            digits[b] = 0;
            b += 1;
        }
    }
}

/// Whether two distinct vertices span an edge: the constraints tight at
/// both must have rank `L − 1`.
pub fn adjacent(poly: &Polyhedron, u: &Vertex, v: &Vertex) -> bool {
    if u == v {
        return false;
    }
    let common = |l: usize| {
        let (a, b) = (u.values[l], v.values[l]);
        a == b && (a == 0.0 || a == 1.0)
    };
    let fixed = (0..poly.dim()).filter(|&l| common(l)).count();
    let rows = (0..poly.blocks.len())
        .filter(|&b| {
            poly.is_tight(&u.values, b)
                && poly.is_tight(&v.values, b)
                && poly.blocks[b].members.iter().any(|&l| !common(l))
        })
        .count();
    fixed + rows + 1 == poly.dim()
}

/// Vertices adjacent to `v`, in lexicographic order.
///
/// Candidates change one coordinate (to 0, 1 or its saturating value) or,
/// on a tight row, set one coordinate binary and re-saturate another of the
/// same row. Each candidate is kept only if it is a vertex and passes
/// [`adjacent`].
pub fn neighbors(v: &Vertex, poly: &Polyhedron) -> Vec<Vertex> {
    let mut out: Vec<Vertex> = Vec::new();
    let push = |candidate: &[f64], out: &mut Vec<Vertex>| {
        if let Some(w) = Vertex::from_values(poly, candidate) {
            if adjacent(poly, v, &w) && !out.contains(&w) {
                out.push(w);
            }
        }
    };
    let mut q = v.values.clone();
    for l in 0..poly.dim() {
        let original = q[l];
        let saturating = poly.saturating_value(&v.values, l);
        for x in [0.0, 1.0, saturating] {
            if x != original && (0.0..=1.0).contains(&x) {
                q[l] = x;
                push(&q, &mut out);
            }
        }
        q[l] = original;
    }
    for (b, block) in poly.blocks.iter().enumerate() {
        if !poly.is_tight(&v.values, b) {
            continue;
        }
        for &l in &block.members {
            for x in [0.0, 1.0] {
                if x == v.values[l] {
                    continue;
                }
                q[l] = x;
                for &j in &block.members {
                    if j == l {
                        continue;
                    }
                    let original_j = q[j];
                    let resaturated = poly.saturating_value(&q, j);
                    if (-FACET_TOLERANCE..=1.0 + FACET_TOLERANCE).contains(&resaturated) {
                        q[j] = resaturated.clamp(0.0, 1.0);
                        push(&q, &mut out);
                    }
                    q[j] = original_j;
                }
                q[l] = v.values[l];
            }
        }
    }
    out.sort_by(|a, b| a.lex_cmp(b));
    out
}
