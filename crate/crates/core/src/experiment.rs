//! Capacity sweeps comparing placement schemes on shared request samples.
//!
//! Placements are optimized on training profiles and scored on a disjoint
//! set of evaluation profiles drawn from an independent seed. The exception
//! is `optimal`, the exhaustive maximum over the evaluation profiles
//! themselves, which serves as the distribution-aware reference.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::analytics::{dof_for_layout, RelayLayout};
use crate::error::{Error, Result};
use crate::model::{CacheVector, NetworkConfig, Urp};
use crate::optimizer::{
    global_opt_with, infinite_placement, uniform_placement, vertex_walk_with, Polyhedron,
    SampleObjective, ENUMERATION_LIMIT,
};
use crate::rng::derive_seed;
use crate::sampler::{sample_batch, PopularityModel};
use crate::simulator::{run_unchecked, CoopPolicy, SlotPolicy};

const TRAIN_STREAM: u64 = 1;
const EVAL_STREAM: u64 = 2;
const SIM_STREAM: u64 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Optimal,
    SaaWalk,
    Uniform,
    Infinite,
    SeparateRs,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::Optimal,
        Scheme::SaaWalk,
        Scheme::Uniform,
        Scheme::Infinite,
        Scheme::SeparateRs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Optimal => "optimal",
            Scheme::SaaWalk => "saa-walk",
            Scheme::Uniform => "uniform",
            Scheme::Infinite => "infinite",
            Scheme::SeparateRs => "separate-rs",
        }
    }

    pub fn layout(self) -> RelayLayout {
        match self {
            Scheme::SeparateRs => RelayLayout::Separate,
            _ => RelayLayout::Shared,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Scheme> {
        Scheme::ALL
            .into_iter()
            .find(|scheme| scheme.name() == s)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown scheme {s:?}; expected one of optimal, saa-walk, uniform, infinite, separate-rs"
                ))
            })
    }
}

/// Slot-simulation settings of a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SimulationSpec {
    pub slots: u64,
    pub delta: f64,
    /// Evaluation profiles simulated per capacity (the first `runs` of them).
    pub runs: usize,
}

#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    pub config: NetworkConfig,
    pub schemes: Vec<Scheme>,
    pub capacities: Vec<f64>,
    pub n_samples: usize,
    pub n_eval_samples: usize,
    pub simulation: Option<SimulationSpec>,
    pub seed: u64,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.schemes.is_empty() {
            return Err(Error::config("no scheme selected"));
        }
        if self.capacities.is_empty() {
            return Err(Error::config("capacity grid is empty"));
        }
        if self.capacities.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("capacity grid must be strictly increasing"));
        }
        for &c in &self.capacities {
            self.config.with_budget(c)?;
        }
        if self.n_samples == 0 || self.n_eval_samples == 0 {
            return Err(Error::config("sample counts must be at least 1"));
        }
        if self.schemes.contains(&Scheme::Optimal) && self.config.files() > ENUMERATION_LIMIT {
            return Err(Error::DimensionGuard {
                dim: self.config.files(),
                limit: ENUMERATION_LIMIT,
            });
        }
        if let Some(sim) = &self.simulation {
            SlotPolicy::new(CoopPolicy::FairCoin, sim.delta)?;
            if sim.slots == 0 || sim.runs == 0 {
                return Err(Error::config(
                    "simulation needs at least one slot and one run",
                ));
            }
        }
        Ok(())
    }
}

/// One (scheme, capacity) point of a sweep.
#[derive(Clone, Debug, Serialize)]
pub struct ResultRow {
    pub scheme: Scheme,
    pub capacity: f64,
    pub dof_analytic: f64,
    pub dof_sim: Option<f64>,
    pub dof_sim_ci: Option<f64>,
    /// Mean cooperative probability over the evaluation profiles.
    pub coop_prob: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub q: CacheVector,
    /// Objective value the placement was selected by (training profiles for
    /// the walks, evaluation profiles for `optimal`).
    pub objective: Option<f64>,
    pub steps: Option<usize>,
}

/// Training and evaluation profiles of a spec.
pub fn experiment_samples(spec: &ExperimentSpec) -> Result<(Vec<Urp>, Vec<Urp>)> {
    let model = PopularityModel::from_config(&spec.config)?;
    Ok((
        sample_batch(&model, spec.n_samples, derive_seed(spec.seed, TRAIN_STREAM))?,
        sample_batch(
            &model,
            spec.n_eval_samples,
            derive_seed(spec.seed, EVAL_STREAM),
        )?,
    ))
}

/// Rows ordered by scheme (as listed in the spec), then capacity.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let (train, eval) = experiment_samples(spec)?;
    let mut rows = Vec::new();
    for &scheme in &spec.schemes {
        let layout = scheme.layout();
        let train_obj = SampleObjective::new(&spec.config, &train, layout)?;
        let eval_obj = SampleObjective::new(&spec.config, &eval, layout)?;
        for &capacity in &spec.capacities {
            let config = spec.config.with_budget(capacity)?;
            let (q, objective, steps) = match scheme {
                Scheme::Optimal => {
                    let out = global_opt_with(&eval_obj, &Polyhedron::shared(&config))?;
                    (out.placement, Some(out.estimate.value), None)
                }
                Scheme::SaaWalk => {
                    let out = vertex_walk_with(&train_obj, &Polyhedron::shared(&config))?;
                    (out.placement, Some(out.estimate.value), Some(out.steps))
                }
                Scheme::SeparateRs => {
                    let out = vertex_walk_with(&train_obj, &Polyhedron::separate(&config))?;
                    (out.placement, Some(out.estimate.value), Some(out.steps))
                }
                Scheme::Uniform => (uniform_placement(&config), None, None),
                Scheme::Infinite => (infinite_placement(&config), None, None),
            };
            let coop_prob = eval_obj.evaluate(q.as_slice()).value;
            let antennas = config.antennas();
            let (dof_sim, dof_sim_ci) = match &spec.simulation {
                None => (None, None),
                Some(sim) => {
                    let (mean, ci) = simulate_point(&config, &q, &eval, sim, layout, spec.seed)?;
                    (Some(mean), Some(ci))
                }
            };
            rows.push(ResultRow {
                scheme,
                capacity,
                dof_analytic: dof_for_layout(coop_prob, antennas, layout),
                dof_sim,
                dof_sim_ci,
                coop_prob,
                n_samples: spec.n_samples,
                seed: spec.seed,
                q,
                objective,
                steps,
            });
        }
    }
    Ok(rows)
}

/// Mean simulated DoF over the first `runs` evaluation profiles and its
/// normal-approximation 95% half-width.
fn simulate_point(
    config: &NetworkConfig,
    q: &CacheVector,
    eval: &[Urp],
    sim: &SimulationSpec,
    layout: RelayLayout,
    seed: u64,
) -> Result<(f64, f64)> {
    let policy = SlotPolicy::new(CoopPolicy::FairCoin, sim.delta)?;
    let base = derive_seed(seed, SIM_STREAM);
    let dofs = (0..sim.runs)
        .map(|r| {
            let pi = &eval[r % eval.len()];
            run_unchecked(
                config,
                q,
                pi,
                &policy,
                sim.slots,
                base.wrapping_add(r as u64),
                layout,
            )
            .map(|out| out.dof_count)
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = dofs.len() as f64;
    let mean = dofs.iter().sum::<f64>() / n;
    let ci = if dofs.len() > 1 {
        let var = dofs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
        1.96 * (var / n).sqrt()
    } else {
        0.0
    };
    Ok((mean, ci))
}

pub const CSV_HEADER: &str =
    "scheme,capacity,dof_analytic,dof_sim,dof_sim_ci,coop_prob,n_samples,seed";

fn optional(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_csv(rows: &[ResultRow], out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.scheme,
            r.capacity,
            r.dof_analytic,
            optional(r.dof_sim),
            optional(r.dof_sim_ci),
            r.coop_prob,
            r.n_samples,
            r.seed
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SidecarEntry<'a> {
    scheme: Scheme,
    capacity: f64,
    q: &'a CacheVector,
    objective: Option<f64>,
    n_samples: usize,
    steps: Option<usize>,
}

/// Path of the placement sidecar written next to a results CSV.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("placements.json")
}

/// Runs the sweep, writes the CSV to `out` and the placements to
/// [`sidecar_path`]`(out)`.
pub fn sweep_and_emit(spec: &ExperimentSpec, out: &Path) -> Result<Vec<ResultRow>> {
    let rows = run_experiment(spec)?;
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| Error::Io { path, source }
    };
    let file = File::create(out).map_err(io(out))?;
    let mut w = BufWriter::new(file);
    write_csv(&rows, &mut w)
        .and_then(|_| w.flush())
        .map_err(io(out))?;

    let sidecar = sidecar_path(out);
    let entries: Vec<SidecarEntry> = rows
        .iter()
        .map(|r| SidecarEntry {
            scheme: r.scheme,
            capacity: r.capacity,
            q: &r.q,
            objective: r.objective,
            n_samples: r.n_samples,
            steps: r.steps,
        })
        .collect();
    let file = File::create(&sidecar).map_err(io(&sidecar))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, &entries).map_err(|source| Error::Json {
        path: sidecar.clone(),
        source,
    })?;
    w.flush().map_err(io(&sidecar))?;
    Ok(rows)
}

/// The larger catalog profile (L = 100, K = 24, M = 4). Long-running; the
/// exhaustive scheme is unavailable at this size.
pub fn large_profile(seed: u64) -> Result<ExperimentSpec> {
    let config = NetworkConfig::split_catalog(4, 24, 100, 0.0, 1.0, seed)?;
    Ok(ExperimentSpec {
        config,
        schemes: vec![
            Scheme::SaaWalk,
            Scheme::Uniform,
            Scheme::Infinite,
            Scheme::SeparateRs,
        ],
        capacities: vec![0.0, 10.0, 20.0, 30.0, 40.0, 50.0],
        n_samples: 10_000,
        n_eval_samples: 10_000,
        simulation: None,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(schemes: Vec<Scheme>, capacities: Vec<f64>) -> ExperimentSpec {
        ExperimentSpec {
            config: NetworkConfig::split_catalog(2, 12, 10, 0.0, 2.0, 0).unwrap(),
            schemes,
            capacities,
            n_samples: 40,
            n_eval_samples: 60,
            simulation: None,
            seed: 17,
        }
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
        }
        assert!("best".parse::<Scheme>().unwrap_err().is_config());
    }

    #[test]
    fn zero_capacity_gives_m() {
        let rows = run_experiment(&spec(
            vec![
                Scheme::Optimal,
                Scheme::SaaWalk,
                Scheme::Uniform,
                Scheme::SeparateRs,
            ],
            vec![0.0, 2.0],
        ))
        .unwrap();
        for r in rows.iter().filter(|r| r.capacity == 0.0) {
            assert_eq!(r.dof_analytic, 2.0, "{}", r.scheme);
        }
    }

    #[test]
    fn samples_are_split_and_paired() {
        let s = spec(vec![Scheme::Uniform], vec![1.0]);
        let (train, eval) = experiment_samples(&s).unwrap();
        assert_eq!((train.len(), eval.len()), (40, 60));
        assert_ne!(train[..], eval[..40]);
        let again = experiment_samples(&s).unwrap();
        assert_eq!(train, again.0);
    }

    #[test]
    fn validation() {
        assert!(spec(vec![Scheme::Uniform], vec![1.0, 1.0])
            .validate()
            .is_err());
        assert!(spec(vec![Scheme::Uniform], vec![]).validate().is_err());
        assert!(spec(vec![Scheme::Uniform], vec![11.0]).validate().is_err());
        let mut big = spec(vec![Scheme::Optimal], vec![1.0]);
        big.config = NetworkConfig::split_catalog(2, 12, 30, 0.0, 2.0, 0).unwrap();
        assert!(matches!(
            big.validate(),
            Err(Error::DimensionGuard { dim: 30, .. })
        ));
        big.schemes = vec![Scheme::SaaWalk];
        assert!(big.validate().is_ok());
    }

    #[test]
    fn emitted_files() {
        let dir = std::env::temp_dir().join(format!("relaycache-exp-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let out = dir.join("sweep.csv");
        let mut s = spec(
            vec![Scheme::SaaWalk, Scheme::Uniform, Scheme::Infinite],
            vec![0.0, 1.0, 2.0, 3.0, 4.0],
        );
        s.simulation = Some(SimulationSpec {
            slots: 2000,
            delta: 1.0 / 16.0,
            runs: 3,
        });
        let rows = sweep_and_emit(&s, &out).unwrap();
        let text = std::fs::read_to_string(&out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 16);
        assert!(rows
            .iter()
            .all(|r| r.dof_sim.is_some_and(|d| (2.0..=6.0).contains(&d))));
        sweep_and_emit(&s, &out).unwrap();
        assert_eq!(std::fs::read_to_string(&out).unwrap(), text);
        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(sidecar_path(&out)).unwrap()).unwrap();
        assert_eq!(json.as_array().unwrap().len(), 15);
        assert_eq!(json[0]["scheme"], "saa-walk");
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
