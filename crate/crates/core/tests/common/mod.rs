//! Fixtures and independent oracles shared by the integration tests and the
//! acceptance harness.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relaycache::optimizer::Polyhedron;
use relaycache::{Bs, CacheVector, NetworkConfig, Urp};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// 20 files split 10/10, 12 users, two antennas per BS.
pub fn worked_config(budget: f64) -> NetworkConfig {
    NetworkConfig::split_catalog(2, 12, 20, budget, 1.0, 0).unwrap()
}

pub fn worked_urp() -> Urp {
    Urp::from_indices(&[2, 17, 19, 7, 9, 3, 5, 2, 20, 1, 7, 6]).unwrap()
}

/// Gathers to `[0.3,0.1,0.4,0.05,0.6,0.3,0.4,0.1,0.2]` on BS1 and
/// `[0.1,0.2,0.4]` on BS2 under [`worked_urp`].
pub fn worked_placement() -> CacheVector {
    let mut q = vec![0.0; 20];
    for (file, value) in [
        (1, 0.4),
        (2, 0.3),
        (3, 0.05),
        (5, 0.6),
        (6, 0.2),
        (7, 0.1),
        (9, 0.4),
        (17, 0.1),
        (19, 0.2),
        (20, 0.4),
    ] {
        q[file - 1] = value;
    }
    CacheVector::new(q).unwrap()
}

/// Cooperative fraction when both BSs have at least M users, written out as
/// a plain rational function of the two masses.
pub fn coop_fraction_reference(m1: f64, m2: f64) -> f64 {
    let num = m1 + m2 - 2.0 * m1 * m2;
    let den = 6.0 + 4.0 * m1 * m2 - 5.0 * (m1 + m2);
    num / den
}

/// Uniformly random request profile over `files` files.
pub fn random_urp<R: Rng>(rng: &mut R, users: usize, files: usize) -> Urp {
    let picks: Vec<usize> = (0..users).map(|_| rng.random_range(1..=files)).collect();
    Urp::from_indices(&picks).unwrap()
}

/// Random placement scaled to use at most `budget` units of equal-size files.
pub fn random_placement<R: Rng>(rng: &mut R, files: usize, budget: f64) -> CacheVector {
    let raw: Vec<f64> = (0..files).map(|_| rng.random::<f64>()).collect();
    let used: f64 = raw.iter().sum();
    let scale = if used > budget { budget / used } else { 1.0 };
    CacheVector::new(raw.into_iter().map(|x| (x * scale).min(1.0)).collect()).unwrap()
}

/// Small optimizer instance: 3 to 8 files with random sizes, ownership and
/// budget, plus N training profiles.
pub struct SmallInstance {
    pub config: NetworkConfig,
    pub samples: Vec<Urp>,
}

pub fn small_instance<R: Rng>(rng: &mut R) -> SmallInstance {
    let files = rng.random_range(3..=8);
    let sizes: Vec<f64> = if rng.random::<bool>() {
        vec![1.0; files]
    } else {
        (0..files).map(|_| rng.random_range(0.5..2.0)).collect()
    };
    let mut ownership: Vec<Bs> = (0..files)
        .map(|l| if l % 2 == 0 { Bs::One } else { Bs::Two })
        .collect();
    ownership.shuffle(rng);
    let catalog: f64 = sizes.iter().sum();
    let budget = rng.random_range(0.1..0.9) * catalog;
    let antennas = rng.random_range(1..=2);
    let users = 6 * antennas;
    let gamma = rng.random_range(0.5..2.0);
    let config = NetworkConfig::new(
        antennas,
        users,
        sizes,
        budget,
        ownership,
        gamma,
        rng.random(),
    )
    .unwrap();
    let n = rng.random_range(5..=50);
    let model = relaycache::sampler::PopularityModel::from_config(&config).unwrap();
    let samples = relaycache::sampler::sample_batch(&model, n, rng.random()).unwrap();
    SmallInstance { config, samples }
}

/// Inequality rows `a·q ≤ b` of a polyhedron: box bounds then knapsack rows.
pub fn constraint_rows(poly: &Polyhedron) -> Vec<(Vec<f64>, f64)> {
    let n = poly.dim();
    let mut rows = Vec::new();
    for l in 0..n {
        let mut lower = vec![0.0; n];
        lower[l] = -1.0;
        rows.push((lower, 0.0));
        let mut upper = vec![0.0; n];
        upper[l] = 1.0;
        rows.push((upper, 1.0));
    }
    for block in poly.blocks() {
        let mut row = vec![0.0; n];
        for &l in block.members() {
            row[l] = poly.sizes()[l];
        }
        rows.push((row, block.budget()));
    }
    rows
}

fn satisfies(rows: &[(Vec<f64>, f64)], x: &[f64], tol: f64) -> bool {
    rows.iter()
        .all(|(a, b)| a.iter().zip(x).map(|(ai, xi)| ai * xi).sum::<f64>() <= b + tol)
}

fn tight_rows(rows: &[(Vec<f64>, f64)], x: &[f64], tol: f64) -> Vec<usize> {
    rows.iter()
        .enumerate()
        .filter(|(_, (a, b))| {
            (a.iter().zip(x).map(|(ai, xi)| ai * xi).sum::<f64>() - b).abs() <= tol
        })
        .map(|(i, _)| i)
        .collect()
}

fn matrix_rank(rows: &[(Vec<f64>, f64)], pick: &[usize], n: usize) -> usize {
    if pick.is_empty() {
        return 0;
    }
    let a = DMatrix::from_fn(pick.len(), n, |r, c| rows[pick[r]].0[c]);
    a.rank(1e-9)
}

fn combinations(n: usize, k: usize, visit: &mut impl FnMut(&[usize])) {
    fn go(
        start: usize,
        n: usize,
        k: usize,
        cur: &mut Vec<usize>,
        visit: &mut impl FnMut(&[usize]),
    ) {
        if cur.len() == k {
            visit(cur);
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            go(i + 1, n, k, cur, visit);
            cur.pop();
        }
    }
    go(0, n, k, &mut Vec::with_capacity(k), visit);
}

/// Extreme points by brute force: every basis of `dim` linearly independent
/// constraint rows is solved as a linear system and kept when feasible.
pub fn lp_extreme_points(poly: &Polyhedron) -> Vec<Vec<f64>> {
    let n = poly.dim();
    let rows = constraint_rows(poly);
    let mut found: Vec<Vec<f64>> = Vec::new();
    combinations(rows.len(), n, &mut |pick| {
        let a = DMatrix::from_fn(n, n, |r, c| rows[pick[r]].0[c]);
        let b = DVector::from_fn(n, |r, _| rows[pick[r]].1);
        let Some(x) = a.lu().solve(&b) else { return };
        let x: Vec<f64> = x.iter().copied().collect();
        if x.iter().any(|v| !v.is_finite()) || !satisfies(&rows, &x, 1e-9) {
            return;
        }
        if !found.iter().any(|y| same_point(y, &x)) {
            found.push(x);
        }
    });
    found
}

/// Two extreme points are adjacent when the rows tight at both have rank
/// `dim − 1`.
pub fn rank_adjacent(poly: &Polyhedron, u: &[f64], v: &[f64]) -> bool {
    let rows = constraint_rows(poly);
    let tu = tight_rows(&rows, u, 1e-9);
    let tv = tight_rows(&rows, v, 1e-9);
    let common: Vec<usize> = tu.into_iter().filter(|i| tv.contains(i)).collect();
    !same_point(u, v) && matrix_rank(&rows, &common, poly.dim()) == poly.dim() - 1
}

pub fn same_point(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-9)
}

/// Objective value by evaluating each profile through the public per-profile
/// closed form.
pub fn mean_coop(config: &NetworkConfig, q: &CacheVector, samples: &[Urp]) -> f64 {
    samples
        .iter()
        .map(|pi| {
            relaycache::analytics::per_urp_coop(config, q, pi)
                .unwrap()
                .p_coop
        })
        .sum::<f64>()
        / samples.len() as f64
}
