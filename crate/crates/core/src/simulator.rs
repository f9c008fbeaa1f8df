//! Slot-level simulation of cooperative and BS-only transmission.
//!
//! Segment sizes are normalized to 1 and every scheduled user receives at
//! most `delta` of its segment per slot. A user can be served cooperatively
//! only from cached parity (at most `q` of each segment); the BS alone can
//! complete any segment.
//!
//! Two schedulers are provided:
//! - [`Scheduling::Aligned`] packs each BS's users onto cooperative streams
//!   with [`pack_streams`](crate::analytics::pack_streams) and serves the
//!   head of every stream in lockstep. A BS is cooperation-ready while every
//!   stream still has a head user with cached parity left. Users of a BS
//!   start new segments together once all of them have finished. This is the
//!   schedule whose long-run cooperative fraction the closed form describes.
//! - [`Scheduling::Uniform`] draws users uniformly from the eligible sets
//!   and restarts each user independently.

use std::io::Write;

use rand::seq::index::sample;
use rand::Rng;
use serde::Serialize;

use crate::analytics::{dof_for_layout, pack_streams, RelayLayout};
use crate::error::{Error, Result};
use crate::model::{partition_users, Bs, CacheVector, FileId, NetworkConfig, Urp};
use crate::optimizer::Polyhedron;
use crate::rng::substream;

/// Completion slack for segment and cache accounting.
const EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoopPolicy {
    /// Coin flip when both BSs are cooperation-ready.
    FairCoin,
    /// The given BS cooperates whenever it is ready.
    Priority(Bs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheduling {
    Aligned,
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SlotPolicy {
    pub mode: CoopPolicy,
    pub delta: f64,
    pub scheduling: Scheduling,
}

impl SlotPolicy {
    pub fn new(mode: CoopPolicy, delta: f64) -> Result<SlotPolicy> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::config(format!(
                "per-slot delivery must lie in (0,1], got {delta}"
            )));
        }
        Ok(SlotPolicy {
            mode,
            delta,
            scheduling: Scheduling::Aligned,
        })
    }

    pub fn with_scheduling(mut self, scheduling: Scheduling) -> SlotPolicy {
        self.scheduling = scheduling;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UserProgress {
    /// 0-based user index.
    pub user: usize,
    pub file: FileId,
    /// Cached share of the requested file, `q_{π_k}`.
    pub placement: f64,
    pub cached: f64,
    pub noncached: f64,
    pub segments_completed: u64,
    pub cached_total: f64,
    pub noncached_total: f64,
}

impl UserProgress {
    /// Parity usage state: cached parity of the current segment is still useful.
    pub fn parity_usage(&self) -> bool {
        self.cached < self.placement - EPS && !self.finished()
    }

    pub fn remaining(&self) -> f64 {
        (1.0 - self.cached - self.noncached).max(0.0)
    }

    pub fn finished(&self) -> bool {
        self.cached + self.noncached >= 1.0 - EPS
    }

    fn restart(&mut self) {
        self.cached = 0.0;
        self.noncached = 0.0;
        self.segments_completed += 1;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SlotMode {
    Cooperative,
    BsOnly,
    Idle,
}

impl SlotMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SlotMode::Cooperative => "coop",
            SlotMode::BsOnly => "bs-only",
            SlotMode::Idle => "idle",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlotRecord {
    pub slot: u64,
    pub mode: SlotMode,
    pub serving_bs: Option<Bs>,
    /// 0-based user indices.
    pub scheduled: Vec<usize>,
    pub delivered: f64,
}

/// Mutable state of one simulation.
#[derive(Clone, Debug)]
pub struct SimState {
    antennas: usize,
    layout: RelayLayout,
    users: Vec<UserProgress>,
    members: [Vec<usize>; 2],
    /// Aligned scheduling: users of each BS per cooperative stream.
    streams: [Vec<Vec<usize>>; 2],
    slot: u64,
}

/// Fresh shared-relay state: every user at the start of a segment.
pub fn init_state(config: &NetworkConfig, q: &CacheVector, pi: &Urp) -> Result<SimState> {
    config.check_feasible(q)?;
    build_state(config, q, pi, RelayLayout::Shared)
}

fn build_state(
    config: &NetworkConfig,
    q: &CacheVector,
    pi: &Urp,
    layout: RelayLayout,
) -> Result<SimState> {
    config.check_urp(pi)?;
    let part = partition_users(pi, config.ownership())?;
    let users = (0..pi.len())
        .map(|k| {
            let file = pi.file(k);
            UserProgress {
                user: k,
                file,
                placement: q.get(file),
                cached: 0.0,
                noncached: 0.0,
                segments_completed: 0,
                cached_total: 0.0,
                noncached_total: 0.0,
            }
        })
        .collect::<Vec<_>>();
    let members = Bs::BOTH.map(|bs| part.members(bs).to_vec());
    let count = layout.coop_streams(config.antennas());
    let streams = Bs::BOTH.map(|bs| {
        let ks = &members[bs.index()];
        let values: Vec<f64> = ks.iter().map(|&k| users[k].placement).collect();
        pack_streams(&values, count)
            .bins
            .into_iter()
            .map(|bin| bin.into_iter().map(|pos| ks[pos]).collect())
            .collect()
    });
    Ok(SimState {
        antennas: config.antennas(),
        layout,
        users,
        members,
        streams,
        slot: 0,
    })
}

impl SimState {
    pub fn users(&self) -> &[UserProgress] {
        &self.users
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    pub fn coop_streams(&self) -> usize {
        self.layout.coop_streams(self.antennas)
    }

    /// Users of `bs` whose cached parity is still useful.
    pub fn coop_candidates(&self, bs: Bs) -> Vec<usize> {
        self.members[bs.index()]
            .iter()
            .copied()
            .filter(|&k| self.users[k].parity_usage())
            .collect()
    }

    fn stream_heads(&self, bs: Bs) -> Option<Vec<usize>> {
        self.streams[bs.index()]
            .iter()
            .map(|bin| bin.iter().copied().find(|&k| self.users[k].parity_usage()))
            .collect()
    }

    /// Cache state of `bs`: whether it can serve a full cooperative slot.
    pub fn cache_state(&self, bs: Bs, scheduling: Scheduling) -> bool {
        match scheduling {
            Scheduling::Aligned => self.stream_heads(bs).is_some(),
            Scheduling::Uniform => self.coop_candidates(bs).len() >= self.coop_streams(),
        }
    }

    fn has_enough_users(&self, bs: Bs) -> bool {
        self.members[bs.index()].len() >= self.antennas
    }
}

/// Picks one of two qualifying BSs by the policy, or the only one.
fn choose_bs<R: Rng + ?Sized>(ready: [bool; 2], mode: CoopPolicy, rng: &mut R) -> Option<Bs> {
    match ready {
        [false, false] => None,
        [true, false] => Some(Bs::One),
        [false, true] => Some(Bs::Two),
        [true, true] => Some(match mode {
            CoopPolicy::Priority(bs) => bs,
            CoopPolicy::FairCoin => coin(rng),
        }),
    }
}

fn coin<R: Rng + ?Sized>(rng: &mut R) -> Bs {
    if rng.random::<bool>() {
        Bs::One
    } else {
        Bs::Two
    }
}

/// Advances one slot.
pub fn step<R: Rng + ?Sized>(state: &mut SimState, policy: &SlotPolicy, rng: &mut R) -> SlotRecord {
    let ready = Bs::BOTH.map(|bs| state.cache_state(bs, policy.scheduling));
    let slot = state.slot;
    state.slot += 1;
    let delta = policy.delta;

    let (mode, serving, scheduled) = if let Some(bs) = choose_bs(ready, policy.mode, rng) {
        let scheduled = match policy.scheduling {
            Scheduling::Aligned => state.stream_heads(bs).expect("ready BS has stream heads"),
            Scheduling::Uniform => {
                let pool = state.coop_candidates(bs);
                let mut picked: Vec<usize> = sample(rng, pool.len(), state.coop_streams())
                    .into_iter()
                    .map(|i| pool[i])
                    .collect();
                picked.sort_unstable();
                picked
            }
        };
        (SlotMode::Cooperative, Some(bs), scheduled)
    } else {
        let eligible = Bs::BOTH.map(|bs| state.has_enough_users(bs));
        // BS-only slots always use the coin; priority applies to cooperation.
        match choose_bs(eligible, CoopPolicy::FairCoin, rng) {
            None => (SlotMode::Idle, None, Vec::new()),
            Some(bs) => {
                let pool = &state.members[bs.index()];
                let scheduled = match policy.scheduling {
                    Scheduling::Aligned => {
                        let mut order = pool.clone();
                        // Largest remaining need first; stable sort keeps ties by index.
                        order.sort_by(|&a, &b| {
                            state.users[b]
                                .remaining()
                                .total_cmp(&state.users[a].remaining())
                        });
                        order.truncate(state.antennas);
                        order.sort_unstable();
                        order
                    }
                    Scheduling::Uniform => {
                        let mut picked: Vec<usize> = sample(rng, pool.len(), state.antennas)
                            .into_iter()
                            .map(|i| pool[i])
                            .collect();
                        picked.sort_unstable();
                        picked
                    }
                };
                (SlotMode::BsOnly, Some(bs), scheduled)
            }
        }
    };

    let mut delivered = 0.0;
    for &k in &scheduled {
        let u = &mut state.users[k];
        let amount = match mode {
            SlotMode::Cooperative => delta
                .min(u.placement - u.cached)
                .min(u.remaining())
                .max(0.0),
            _ => delta.min(u.remaining()),
        };
        if mode == SlotMode::Cooperative {
            u.cached += amount;
            u.cached_total += amount;
        } else {
            u.noncached += amount;
            u.noncached_total += amount;
        }
        delivered += amount;
    }

    match policy.scheduling {
        Scheduling::Uniform => {
            for &k in &scheduled {
                if state.users[k].finished() {
                    state.users[k].restart();
                }
            }
        }
        Scheduling::Aligned => {
            if let Some(bs) = serving {
                let ks = &state.members[bs.index()];
                if ks.iter().all(|&k| state.users[k].finished()) {
                    for &k in ks {
                        state.users[k].restart();
                    }
                }
            }
        }
    }

    SlotRecord {
        slot,
        mode,
        serving_bs: serving,
        scheduled,
        delivered,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimResult {
    pub slots_total: u64,
    /// Cooperative slots served by BS1 / BS2.
    pub coop_slots: [u64; 2],
    pub bsonly_slots: [u64; 2],
    pub idle_slots: u64,
    pub empirical_coop: f64,
    /// Completed segments per slot, by user.
    pub throughput: Vec<f64>,
    pub dof_count: f64,
    pub users: Vec<UserProgress>,
}

impl SimResult {
    pub fn coop_total(&self) -> u64 {
        self.coop_slots.iter().sum()
    }

    pub fn bsonly_total(&self) -> u64 {
        self.bsonly_slots.iter().sum()
    }
}

/// Runs `slots` slots of the shared-relay protocol.
pub fn run(
    config: &NetworkConfig,
    q: &CacheVector,
    pi: &Urp,
    policy: &SlotPolicy,
    slots: u64,
    seed: u64,
) -> Result<SimResult> {
    let state = init_state(config, q, pi)?;
    simulate(state, policy, slots, seed, None)
}

/// Runs the two-relay baseline: each BS has its own M-antenna relay caching
/// only that gateway's files within half the budget, so cooperative slots
/// carry 2M streams.
pub fn run_separate_rs(
    config: &NetworkConfig,
    q: &CacheVector,
    pi: &Urp,
    policy: &SlotPolicy,
    slots: u64,
    seed: u64,
) -> Result<SimResult> {
    config.check_feasible(q)?;
    if !Polyhedron::separate(config).contains(q.as_slice()) {
        return Err(Error::domain("placement exceeds a per-relay cache budget"));
    }
    let state = build_state(config, q, pi, RelayLayout::Separate)?;
    simulate(state, policy, slots, seed, None)
}

/// Runs either layout without the budget check (for budget-exempt baselines).
pub(crate) fn run_unchecked(
    config: &NetworkConfig,
    q: &CacheVector,
    pi: &Urp,
    policy: &SlotPolicy,
    slots: u64,
    seed: u64,
    layout: RelayLayout,
) -> Result<SimResult> {
    let state = build_state(config, q, pi, layout)?;
    simulate(state, policy, slots, seed, None)
}

/// As [`run`], also writing one CSV row per slot to `trace`.
pub fn run_with_trace(
    config: &NetworkConfig,
    q: &CacheVector,
    pi: &Urp,
    policy: &SlotPolicy,
    slots: u64,
    seed: u64,
    trace: &mut dyn Write,
) -> Result<SimResult> {
    let state = init_state(config, q, pi)?;
    simulate(state, policy, slots, seed, Some(trace))
}

pub const TRACE_HEADER: &str = "slot,mode,serving_bs,scheduled_users,delivered_bits";

/// One trace row; users are reported 1-based and joined by `;`.
pub fn trace_row(record: &SlotRecord) -> String {
    let users: Vec<String> = record
        .scheduled
        .iter()
        .map(|k| (k + 1).to_string())
        .collect();
    format!(
        "{},{},{},{},{}",
        record.slot,
        record.mode.as_str(),
        record.serving_bs.map_or(0, Bs::number),
        users.join(";"),
        record.delivered
    )
}

fn io_error(source: std::io::Error) -> Error {
    Error::Io {
        path: "slot trace".into(),
        source,
    }
}

fn simulate(
    mut state: SimState,
    policy: &SlotPolicy,
    slots: u64,
    seed: u64,
    mut trace: Option<&mut dyn Write>,
) -> Result<SimResult> {
    if slots == 0 {
        return Err(Error::config("simulation needs at least one slot"));
    }
    let mut rng = substream(seed, 0);
    let mut coop = [0u64; 2];
    let mut bsonly = [0u64; 2];
    let mut idle = 0u64;
    if let Some(w) = trace.as_mut() {
        writeln!(w, "{TRACE_HEADER}").map_err(io_error)?;
    }
    for _ in 0..slots {
        let record = step(&mut state, policy, &mut rng);
        match (record.mode, record.serving_bs) {
            (SlotMode::Cooperative, Some(bs)) => coop[bs.index()] += 1,
            (SlotMode::BsOnly, Some(bs)) => bsonly[bs.index()] += 1,
            _ => idle += 1,
        }
        if let Some(w) = trace.as_mut() {
            writeln!(w, "{}", trace_row(&record)).map_err(io_error)?;
        }
    }
    let empirical_coop = (coop[0] + coop[1]) as f64 / slots as f64;
    Ok(SimResult {
        slots_total: slots,
        coop_slots: coop,
        bsonly_slots: bsonly,
        idle_slots: idle,
        empirical_coop,
        throughput: state
            .users
            .iter()
            .map(|u| u.segments_completed as f64 / slots as f64)
            .collect(),
        dof_count: dof_for_layout(empirical_coop, state.antennas, state.layout),
        users: state.users,
    })
}
