//! Scenario configuration, user request profiles and the placement-gathering
//! algebra shared by the analytic engine, the optimizer and the simulator.
//!
//! File identifiers are 1-based ([`FileId`]) to match the usual notation for
//! catalogs; user indices are plain 0-based `usize` positions into the request
//! profile.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute slack allowed when checking the cache budget.
pub const BUDGET_TOLERANCE: f64 = 1e-9;

/// One of the two non-cooperative base stations (and its content gateway).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Bs {
    One,
    Two,
}

impl Bs {
    pub const BOTH: [Bs; 2] = [Bs::One, Bs::Two];

    /// 0 for BS1, 1 for BS2.
    pub fn index(self) -> usize {
        match self {
            Bs::One => 0,
            Bs::Two => 1,
        }
    }

    /// 1 or 2, as used in scenario files and traces.
    pub fn number(self) -> u8 {
        self.index() as u8 + 1
    }

    pub fn other(self) -> Bs {
        match self {
            Bs::One => Bs::Two,
            Bs::Two => Bs::One,
        }
    }

    pub fn from_number(n: u8) -> Result<Bs> {
        match n {
            1 => Ok(Bs::One),
            2 => Ok(Bs::Two),
            _ => Err(Error::config(format!(
                "gateway index must be 1 or 2, got {n}"
            ))),
        }
    }
}

impl Serialize for Bs {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_u8(self.number())
    }
}

impl fmt::Display for Bs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BS{}", self.number())
    }
}

/// 1-based catalog index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FileId(usize);

impl FileId {
    pub fn new(one_based: usize) -> Result<FileId> {
        if one_based == 0 {
            return Err(Error::config("file indices are 1-based; got 0"));
        }
        Ok(FileId(one_based))
    }

    pub(crate) fn from_index(index: usize) -> FileId {
        FileId(index + 1)
    }

    pub fn get(self) -> usize {
        self.0
    }

    /// 0-based position in per-file vectors.
    pub fn index(self) -> usize {
        self.0 - 1
    }
}

/// Static scenario description.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkConfig {
    antennas: usize,
    users: usize,
    file_sizes: Vec<f64>,
    cache_budget: f64,
    ownership: Vec<Bs>,
    gamma: f64,
    seed: u64,
}

impl NetworkConfig {
    pub fn new(
        antennas: usize,
        users: usize,
        file_sizes: Vec<f64>,
        cache_budget: f64,
        ownership: Vec<Bs>,
        gamma: f64,
        seed: u64,
    ) -> Result<NetworkConfig> {
        let config = NetworkConfig {
            antennas,
            users,
            file_sizes,
            cache_budget,
            ownership,
            gamma,
            seed,
        };
        config.validate()?;
        Ok(config)
    }

    /// Equal unit-size files; the first `ceil(L/2)` files belong to BS1 and
    /// the rest to BS2.
    pub fn split_catalog(
        antennas: usize,
        users: usize,
        files: usize,
        cache_budget: f64,
        gamma: f64,
        seed: u64,
    ) -> Result<NetworkConfig> {
        let half = files.div_ceil(2);
        let ownership = (0..files)
            .map(|l| if l < half { Bs::One } else { Bs::Two })
            .collect();
        NetworkConfig::new(
            antennas,
            users,
            vec![1.0; files],
            cache_budget,
            ownership,
            gamma,
            seed,
        )
    }

    fn validate(&self) -> Result<()> {
        if self.antennas == 0 {
            return Err(Error::config("M (antennas per BS) must be positive"));
        }
        if self.users < 3 * self.antennas {
            return Err(Error::config(format!(
                "K = {} users violates K >= 3M = {}",
                self.users,
                3 * self.antennas
            )));
        }
        if self.file_sizes.is_empty() {
            return Err(Error::config("catalog must contain at least one file"));
        }
        if let Some(bad) = self
            .file_sizes
            .iter()
            .find(|s| !(s.is_finite() && **s > 0.0))
        {
            return Err(Error::config(format!(
                "file sizes must be positive, got {bad}"
            )));
        }
        if self.ownership.len() != self.file_sizes.len() {
            return Err(Error::config(format!(
                "ownership has {} entries for L = {} files",
                self.ownership.len(),
                self.file_sizes.len()
            )));
        }
        if !(self.cache_budget.is_finite() && self.cache_budget >= 0.0) {
            return Err(Error::config(format!(
                "cache budget must be non-negative, got {}",
                self.cache_budget
            )));
        }
        let catalog = self.catalog_size();
        if self.cache_budget > catalog + BUDGET_TOLERANCE {
            return Err(Error::config(format!(
                "cache budget {} exceeds the total catalog size {catalog}",
                self.cache_budget
            )));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::config(format!(
                "gamma must be non-negative, got {}",
                self.gamma
            )));
        }
        Ok(())
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn files(&self) -> usize {
        self.file_sizes.len()
    }

    pub fn file_sizes(&self) -> &[f64] {
        &self.file_sizes
    }

    /// Normalized total cache budget of the shared relay.
    pub fn cache_budget(&self) -> f64 {
        self.cache_budget
    }

    pub fn ownership(&self) -> &[Bs] {
        &self.ownership
    }

    pub fn owner(&self, file: FileId) -> Bs {
        self.ownership[file.index()]
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn catalog_size(&self) -> f64 {
        self.file_sizes.iter().sum()
    }

    pub fn has_equal_sizes(&self) -> bool {
        let first = self.file_sizes[0];
        self.file_sizes
            .iter()
            .all(|s| (s - first).abs() <= 1e-12 * first)
    }

    pub fn with_budget(&self, cache_budget: f64) -> Result<NetworkConfig> {
        let mut c = self.clone();
        c.cache_budget = cache_budget;
        c.validate()?;
        Ok(c)
    }

    pub fn with_seed(&self, seed: u64) -> NetworkConfig {
        let mut c = self.clone();
        c.seed = seed;
        c
    }

    /// Checks that `q` lies in the feasible placement set of this scenario.
    pub fn check_feasible(&self, q: &CacheVector) -> Result<()> {
        if q.len() != self.files() {
            return Err(Error::domain(format!(
                "placement has {} entries for L = {} files",
                q.len(),
                self.files()
            )));
        }
        let used = q.used(&self.file_sizes);
        if used > self.cache_budget + BUDGET_TOLERANCE {
            return Err(Error::domain(format!(
                "placement uses {used} of cache budget {}",
                self.cache_budget
            )));
        }
        Ok(())
    }

    pub fn check_urp(&self, pi: &Urp) -> Result<()> {
        if pi.len() != self.users {
            return Err(Error::config(format!(
                "request profile has {} entries for K = {} users",
                pi.len(),
                self.users
            )));
        }
        if let Some(f) = pi.files().iter().find(|f| f.get() > self.files()) {
            return Err(Error::config(format!(
                "request for file {} outside catalog of {} files",
                f.get(),
                self.files()
            )));
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> std::result::Result<NetworkConfig, ScenarioError> {
        let raw: RawScenario = serde_json::from_str(text).map_err(ScenarioError::Parse)?;
        raw.into_config().map_err(ScenarioError::Invalid)
    }

    pub fn load(path: &Path) -> Result<NetworkConfig> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        NetworkConfig::from_json_str(&text).map_err(|e| match e {
            ScenarioError::Parse(source) => Error::Json {
                path: path.to_path_buf(),
                source,
            },
            ScenarioError::Invalid(err) => err,
        })
    }

    pub fn to_json(&self) -> serde_json::Value {
        let file_sizes = if self.has_equal_sizes() && self.file_sizes[0] == 1.0 {
            FileSizes::Named("uniform".into())
        } else {
            FileSizes::Explicit(self.file_sizes.clone())
        };
        serde_json::to_value(RawScenario {
            antennas: self.antennas,
            users: self.users,
            files: self.files(),
            file_sizes,
            cache_budget: self.cache_budget,
            ownership: self.ownership.iter().map(|b| b.number()).collect(),
            gamma: self.gamma,
            seed: self.seed,
        })
        .expect("scenario serializes")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("malformed scenario: {0}")]
    Parse(serde_json::Error),
    #[error(transparent)]
    Invalid(Error),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum FileSizes {
    Named(String),
    Explicit(Vec<f64>),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(rename = "M")]
    antennas: usize,
    #[serde(rename = "K")]
    users: usize,
    #[serde(rename = "L")]
    files: usize,
    file_sizes: FileSizes,
    cache_budget: f64,
    ownership: Vec<u8>,
    gamma: f64,
    seed: u64,
}

impl RawScenario {
    fn into_config(self) -> Result<NetworkConfig> {
        let file_sizes = match self.file_sizes {
            FileSizes::Named(name) if name == "uniform" => vec![1.0; self.files],
            FileSizes::Named(other) => {
                return Err(Error::config(format!(
                    "file_sizes must be an array or \"uniform\", got {other:?}"
                )))
            }
            FileSizes::Explicit(sizes) => {
                if sizes.len() != self.files {
                    return Err(Error::config(format!(
                        "file_sizes has {} entries for L = {}",
                        sizes.len(),
                        self.files
                    )));
                }
                sizes
            }
        };
        let ownership = self
            .ownership
            .into_iter()
            .map(Bs::from_number)
            .collect::<Result<Vec<_>>>()?;
        NetworkConfig::new(
            self.antennas,
            self.users,
            file_sizes,
            self.cache_budget,
            ownership,
            self.gamma,
            self.seed,
        )
    }
}

/// Cache content placement: fraction `q_l ∈ [0,1]` of each file's parity
/// stored at the relay. Budget feasibility is checked against a scenario with
/// [`NetworkConfig::check_feasible`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CacheVector(Vec<f64>);

impl CacheVector {
    pub fn new(values: Vec<f64>) -> Result<CacheVector> {
        if let Some(bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::domain(format!(
                "placement entries must lie in [0,1], got {bad}"
            )));
        }
        Ok(CacheVector(values))
    }

    pub fn zeros(files: usize) -> CacheVector {
        CacheVector(vec![0.0; files])
    }

    pub fn ones(files: usize) -> CacheVector {
        CacheVector(vec![1.0; files])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, file: FileId) -> f64 {
        self.0[file.index()]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Normalized cache space occupied, `Σ F̃_l q_l`.
    pub fn used(&self, file_sizes: &[f64]) -> f64 {
        self.0.iter().zip(file_sizes).map(|(q, f)| q * f).sum()
    }
}

/// User request profile: the file requested by each of the K users.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Urp(Vec<FileId>);

impl Urp {
    /// Builds a profile from 1-based file indices.
    pub fn from_indices(files: &[usize]) -> Result<Urp> {
        files
            .iter()
            .map(|&f| FileId::new(f))
            .collect::<Result<Vec<_>>>()
            .map(Urp)
    }

    pub fn new(files: Vec<FileId>) -> Urp {
        Urp(files)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn files(&self) -> &[FileId] {
        &self.0
    }

    pub fn file(&self, user: usize) -> FileId {
        self.0[user]
    }
}

/// Users grouped by the gateway that owns their requested file, each group
/// in ascending user order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UserPartition {
    members: [Vec<usize>; 2],
}

impl UserPartition {
    pub fn members(&self, bs: Bs) -> &[usize] {
        &self.members[bs.index()]
    }

    pub fn size(&self, bs: Bs) -> usize {
        self.members[bs.index()].len()
    }
}

pub fn partition_users(pi: &Urp, ownership: &[Bs]) -> Result<UserPartition> {
    let mut members = [Vec::new(), Vec::new()];
    for (user, file) in pi.files().iter().enumerate() {
        let owner = ownership
            .get(file.index())
            .ok_or_else(|| Error::config(format!("file {} has no owning gateway", file.get())))?;
        members[owner.index()].push(user);
    }
    Ok(UserPartition { members })
}

/// Placement values of the files requested by the users of `bs`, in
/// ascending user order.
pub fn gather_placement(pi: &Urp, q: &CacheVector, partition: &UserPartition, bs: Bs) -> Vec<f64> {
    partition
        .members(bs)
        .iter()
        .map(|&user| q.get(pi.file(user)))
        .collect()
}
