//! Closed-form cooperation analysis.
//!
//! For one request profile, each base station's requested placements are
//! packed into cooperative streams ([`pack_streams`]); the smallest packed
//! load gives the cooperation mass `m_i`, and the two masses determine the
//! long-run fraction of BS-RS cooperative slots ([`coop_probability`]). The
//! per-priority terms ([`priority_probability`]) and the flow-balance form
//! ([`flow_balance_probability`]) are independent routes to the same value.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{gather_placement, partition_users, Bs, CacheVector, NetworkConfig, Urp};

/// Threshold under which numerator and denominator are treated as zero.
const SINGULAR: f64 = 1e-12;

/// How the relay hardware is arranged relative to the two base stations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelayLayout {
    /// One 2M-antenna relay shared by both BSs: cooperative slots carry 3M streams.
    Shared,
    /// One M-antenna relay per BS, each caching only its own gateway's files:
    /// cooperative slots carry 2M streams.
    Separate,
}

impl RelayLayout {
    /// Streams in a cooperative slot per BS antenna.
    pub fn stream_gain(self) -> usize {
        match self {
            RelayLayout::Shared => 3,
            RelayLayout::Separate => 2,
        }
    }

    pub fn coop_streams(self, antennas: usize) -> usize {
        self.stream_gain() * antennas
    }
}

/// Assignment of a BS's per-user placements onto cooperative streams.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamPacking {
    /// Total cached mass carried by each stream.
    pub loads: Vec<f64>,
    /// Positions (into the packed input) assigned to each stream, in service order.
    pub bins: Vec<Vec<usize>>,
}

/// Greedy max-min packing of `values` onto `streams` bins.
///
/// With fewer values than streams every value gets its own bin and the rest
/// stay empty. Otherwise the `streams` largest values seed the bins and each
/// remaining value, largest first, is added to the currently lightest bin.
/// Ties go to the lowest position / lowest bin.
pub fn pack_streams(values: &[f64], streams: usize) -> StreamPacking {
    let mut bins: Vec<Vec<usize>> = vec![Vec::new(); streams];
    let mut loads = vec![0.0; streams];
    if values.len() < streams {
        for (pos, &v) in values.iter().enumerate() {
            loads[pos] = v;
            bins[pos].push(pos);
        }
        return StreamPacking { loads, bins };
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    for (slot, &pos) in order[..streams].iter().enumerate() {
        loads[slot] = values[pos];
        bins[slot].push(pos);
    }
    for &pos in &order[streams..] {
        let lightest = argmin(&loads);
        loads[lightest] += values[pos];
        bins[lightest].push(pos);
    }
    StreamPacking { loads, bins }
}

fn argmin(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x < xs[best] {
            best = i;
        }
    }
    best
}

/// Smallest stream load of [`pack_streams`], computed in place on `scratch`
/// (which is reordered).
pub(crate) fn min_packed_load(scratch: &mut [f64], streams: usize) -> f64 {
    if scratch.len() < streams {
        return 0.0;
    }
    scratch.sort_unstable_by(|a, b| b.total_cmp(a));
    let (seeds, rest) = scratch.split_at_mut(streams);
    for &v in rest.iter() {
        let lightest = argmin(seeds);
        seeds[lightest] += v;
    }
    seeds.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Per-stream packed placement of one BS (length `3M` for the shared relay).
#[derive(Clone, Debug, PartialEq)]
pub struct ModifiedPlacement(Vec<f64>);

impl ModifiedPlacement {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn streams(&self) -> usize {
        self.0.len()
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// Shared-relay packing of one BS's gathered placements onto `3M` streams.
pub fn modify_placement(q_i: &[f64], antennas: usize) -> ModifiedPlacement {
    ModifiedPlacement(pack_streams(q_i, 3 * antennas).loads)
}

/// Cooperation mass `(streams / |K_i|) · min(q̃)`; zero for a BS with no users.
pub fn coop_mass(qt: &ModifiedPlacement, k_size: usize) -> Result<f64> {
    mass_from_min(qt.min(), qt.streams(), k_size)
}

fn mass_from_min(min_load: f64, streams: usize, k_size: usize) -> Result<f64> {
    if k_size == 0 {
        return Ok(0.0);
    }
    let m = streams as f64 / k_size as f64 * min_load;
    if !(-1e-9..=1.0 + 1e-9).contains(&m) {
        return Err(Error::domain(format!("cooperation mass {m} outside [0,1]")));
    }
    Ok(m.clamp(0.0, 1.0))
}

fn check_masses(m: [f64; 2], few: [bool; 2]) -> Result<()> {
    for (i, (&mi, &fi)) in m.iter().zip(&few).enumerate() {
        if !(0.0..=1.0).contains(&mi) {
            return Err(Error::domain(format!("m{} = {mi} outside [0,1]", i + 1)));
        }
        if fi && mi != 0.0 {
            return Err(Error::domain(format!(
                "BS{} has fewer than M users but cooperation mass {mi}",
                i + 1
            )));
        }
    }
    Ok(())
}

fn ind(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// `f_i = 3 − 3I_i − (5 − 3I_{3−i}) m_i`.
pub fn balance_term(m: [f64; 2], few: [bool; 2], bs: Bs) -> f64 {
    let i = bs.index();
    let j = bs.other().index();
    3.0 - 3.0 * ind(few[i]) - (5.0 - 3.0 * ind(few[j])) * m[i]
}

/// Long-run fraction of cooperative slots for cooperation masses `m1, m2`;
/// `few_i` flags a BS with fewer than M requesting users.
///
/// The `0/0` corner `m1 = m2 = 1` evaluates to its limit 1; two starved
/// base stations never cooperate.
pub fn coop_probability(m1: f64, m2: f64, few1: bool, few2: bool) -> Result<f64> {
    let m = [m1, m2];
    let few = [few1, few2];
    check_masses(m, few)?;
    if few1 && few2 {
        return Ok(0.0);
    }
    let (num, den) = if !few1 && !few2 {
        // Same ratio written in the complements, exact near m = 1.
        let x = 1.0 - m1;
        let y = 1.0 - m2;
        (x + y - 2.0 * x * y, x + y + 4.0 * x * y)
    } else {
        (
            m1 + m2 - 2.0 * m1 * m2,
            balance_term(m, few, Bs::One) + balance_term(m, few, Bs::Two) + 4.0 * m1 * m2,
        )
    };
    if num.abs() < SINGULAR && den.abs() < SINGULAR {
        return Ok(1.0);
    }
    Ok((num / den).clamp(0.0, 1.0))
}

/// Cooperative fractions under a static priority in the cooperative mode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PriorityProbs {
    /// Fraction of slots with BS1's cache state on.
    pub p1: f64,
    pub p2: f64,
    /// `p1 + p2 − p1·p2`.
    pub p_total: f64,
}

pub fn priority_probability(
    m1: f64,
    m2: f64,
    few1: bool,
    few2: bool,
    priority: Bs,
) -> Result<PriorityProbs> {
    let m = [m1, m2];
    let few = [few1, few2];
    check_masses(m, few)?;
    let hi = priority.index();
    let lo = priority.other().index();
    let (i_hi, i_lo) = (ind(few[hi]), ind(few[lo]));

    let p_lo = m[lo] / (6.0 - 3.0 * i_hi - (5.0 - 3.0 * i_hi) * m[lo]);
    let num = m[hi] * (1.0 - p_lo);
    let den = 6.0 - 3.0 * i_lo - (5.0 - 3.0 * i_lo + p_lo) * m[hi];
    // den vanishes only at m1 = m2 = 1; take the limit along the diagonal.
    let p_hi = if den.abs() < SINGULAR { 0.5 } else { num / den };

    let mut p = [0.0; 2];
    p[hi] = p_hi.clamp(0.0, 1.0);
    p[lo] = p_lo.clamp(0.0, 1.0);
    let p_total = (p[0] + p[1] - p[0] * p[1]).clamp(0.0, 1.0);
    Ok(PriorityProbs {
        p1: p[0],
        p2: p[1],
        p_total,
    })
}

/// Cooperative fraction from per-BS flow balance.
///
/// BS i must deliver the fraction `m_i` of its users' bits from the cache;
/// a cooperative slot carries `stream_gain` times the streams of a BS-only
/// slot, and BS-only slots are split by coin (or go entirely to the only BS
/// with at least M users). Solving the balance for both BSs gives the
/// cooperative fraction. With `stream_gain = 3` this reproduces
/// [`coop_probability`]; `stream_gain = 2` models separate relays.
pub fn flow_balance_probability(m: [f64; 2], few: [bool; 2], stream_gain: f64) -> Result<f64> {
    check_masses(m, few)?;
    let share = |i: usize| -> f64 {
        match (few[i], few[1 - i]) {
            (true, _) => 0.0,
            (false, true) => 1.0,
            (false, false) => 0.5,
        }
    };
    let idle = [1.0 - m[0], 1.0 - m[1]];
    let num = m[0] * share(0) * idle[1] + m[1] * share(1) * idle[0];
    let den = stream_gain * idle[0] * idle[1] + num;
    if num.abs() < SINGULAR && den.abs() < SINGULAR {
        return Ok(if few[0] && few[1] { 0.0 } else { 1.0 });
    }
    Ok((num / den).clamp(0.0, 1.0))
}

/// Degrees of freedom `M(1 + 2·E{P(S=1)})` of the shared-relay network.
pub fn dof(mean_coop: f64, antennas: usize) -> f64 {
    antennas as f64 * (1.0 + 2.0 * mean_coop)
}

/// Degrees of freedom for a layout: 3M streams (shared) or 2M streams
/// (separate) in cooperative slots, M otherwise.
pub fn dof_for_layout(mean_coop: f64, antennas: usize, layout: RelayLayout) -> f64 {
    antennas as f64 * (1.0 + (layout.stream_gain() as f64 - 1.0) * mean_coop)
}

/// Cooperation quantities for one request profile.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoopStats {
    pub m: [f64; 2],
    /// `|K_i| < M` indicators.
    pub few: [bool; 2],
    pub f: [f64; 2],
    pub p_coop: f64,
}

impl CoopStats {
    pub fn m(&self, bs: Bs) -> f64 {
        self.m[bs.index()]
    }
}

/// Shared-relay cooperation statistics of `q` under the request profile `pi`.
pub fn per_urp_coop(config: &NetworkConfig, q: &CacheVector, pi: &Urp) -> Result<CoopStats> {
    per_urp_coop_layout(config, q, pi, RelayLayout::Shared)
}

pub fn per_urp_coop_layout(
    config: &NetworkConfig,
    q: &CacheVector,
    pi: &Urp,
    layout: RelayLayout,
) -> Result<CoopStats> {
    config.check_urp(pi)?;
    if q.len() != config.files() {
        return Err(Error::domain("placement length differs from catalog size"));
    }
    let part = partition_users(pi, config.ownership())?;
    let antennas = config.antennas();
    let streams = layout.coop_streams(antennas);
    let mut m = [0.0; 2];
    let mut few = [false; 2];
    for bs in Bs::BOTH {
        let size = part.size(bs);
        few[bs.index()] = size < antennas;
        let gathered = gather_placement(pi, q, &part, bs);
        let packed = ModifiedPlacement(pack_streams(&gathered, streams).loads);
        m[bs.index()] = coop_mass(&packed, size)?;
    }
    let f = [balance_term(m, few, Bs::One), balance_term(m, few, Bs::Two)];
    let p_coop = match layout {
        RelayLayout::Shared => coop_probability(m[0], m[1], few[0], few[1])?,
        RelayLayout::Separate => flow_balance_probability(m, few, 2.0)?,
    };
    Ok(CoopStats { m, few, f, p_coop })
}

/// A request profile preprocessed for repeated objective evaluation.
#[derive(Clone, Debug)]
pub struct PreparedUrp {
    /// 0-based file index requested by each user of BS1 / BS2.
    files: [Vec<usize>; 2],
    few: [bool; 2],
    streams: usize,
    layout: RelayLayout,
}

impl PreparedUrp {
    pub fn new(config: &NetworkConfig, pi: &Urp, layout: RelayLayout) -> Result<PreparedUrp> {
        config.check_urp(pi)?;
        let part = partition_users(pi, config.ownership())?;
        let files = Bs::BOTH.map(|bs| {
            part.members(bs)
                .iter()
                .map(|&u| pi.file(u).index())
                .collect::<Vec<_>>()
        });
        let few = [
            files[0].len() < config.antennas(),
            files[1].len() < config.antennas(),
        ];
        Ok(PreparedUrp {
            files,
            few,
            streams: layout.coop_streams(config.antennas()),
            layout,
        })
    }

    /// Distinct 0-based file indices requested in this profile, ascending.
    pub fn requested_files(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.files.iter().flatten().copied().collect();
        all.sort_unstable();
        all.dedup();
        all
    }

    pub(crate) fn masses(&self, q: &[f64], scratch: &mut Vec<f64>) -> [f64; 2] {
        let mut m = [0.0; 2];
        for (i, files) in self.files.iter().enumerate() {
            if files.is_empty() {
                continue;
            }
            scratch.clear();
            scratch.extend(files.iter().map(|&l| q[l]));
            let min_load = min_packed_load(scratch, self.streams);
            m[i] = (self.streams as f64 / files.len() as f64 * min_load).clamp(0.0, 1.0);
        }
        m
    }

    /// Cooperative fraction for the placement values `q` (indexed by file).
    pub fn coop(&self, q: &[f64], scratch: &mut Vec<f64>) -> f64 {
        let m = self.masses(q, scratch);
        let p = match self.layout {
            RelayLayout::Shared => coop_probability(m[0], m[1], self.few[0], self.few[1]),
            RelayLayout::Separate => flow_balance_probability(m, self.few, 2.0),
        };
        p.expect("masses of a prepared profile are admissible")
    }
}

/// One diagonal block of the Hessian of the cooperative fraction with
/// respect to `(m1, m2)` when both BSs have at least M users.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HessianBlock {
    pub d11: f64,
    pub d12: f64,
    pub d22: f64,
    pub det: f64,
}

impl HessianBlock {
    pub fn min_eigenvalue(&self) -> f64 {
        let tr = self.d11 + self.d22;
        let gap = ((self.d11 - self.d22).powi(2) + 4.0 * self.d12 * self.d12).sqrt();
        0.5 * (tr - gap)
    }
}

/// Hessian block scaled by the profile probability `weight`.
///
/// The off-diagonal entry is `−12·w(1−m1)(1−m2)/D³` with
/// `D = 6 + 4m1m2 − 5m1 − 5m2`, and `det = 576·w²(1−m1)²(1−m2)²/D⁵`.
pub fn hessian_block(m1: f64, m2: f64, weight: f64) -> Result<HessianBlock> {
    if !(0.0..=1.0).contains(&m1) || !(0.0..=1.0).contains(&m2) {
        return Err(Error::domain(format!("masses ({m1}, {m2}) outside [0,1]")));
    }
    let d = 6.0 + 4.0 * m1 * m2 - 5.0 * m1 - 5.0 * m2;
    if d <= 0.0 {
        return Err(Error::domain(format!("denominator {d} is not positive")));
    }
    let (a, b) = (1.0 - m1, 1.0 - m2);
    let d3 = d * d * d;
    Ok(HessianBlock {
        d11: 12.0 * weight * (5.0 - 4.0 * m2) * b * b / d3,
        d12: -12.0 * weight * a * b / d3,
        d22: 12.0 * weight * (5.0 - 4.0 * m1) * a * a / d3,
        det: 576.0 * weight * weight * a * a * b * b / (d3 * d * d),
    })
}
