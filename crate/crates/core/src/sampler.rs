//! Request-profile sampling from per-gateway Zipf popularity.
//!
//! Each user independently picks a gateway (BS1 with probability
//! `gateway_prob`), then a file from that gateway's catalog by Zipf rank.
//! Rank 1 is the lowest file index owned by the gateway.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{Bs, FileId, NetworkConfig, Urp};
use crate::rng::substream;

/// `p_r ∝ r^(−γ)` for ranks `1..=n`, normalized in log space.
pub fn zipf_pmf(n: usize, gamma: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::domain("Zipf catalog must contain at least one file"));
    }
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::domain(format!(
            "Zipf skewness must be non-negative, got {gamma}"
        )));
    }
    let logw: Vec<f64> = (1..=n).map(|r| -gamma * (r as f64).ln()).collect();
    // logw[0] = 0 is the maximum.
    let total: f64 = logw.iter().map(|w| w.exp()).sum();
    Ok(logw.iter().map(|w| w.exp() / total).collect())
}

#[derive(Clone, Debug)]
pub struct PopularityModel {
    catalogs: [Vec<FileId>; 2],
    pmfs: [Vec<f64>; 2],
    cdfs: [Vec<f64>; 2],
    gamma: f64,
    gateway_prob: f64,
    users: usize,
}

impl PopularityModel {
    /// Popularity model of a scenario with the even gateway split.
    pub fn from_config(config: &NetworkConfig) -> Result<PopularityModel> {
        PopularityModel::with_gateway_prob(config, 0.5)
    }

    pub fn with_gateway_prob(config: &NetworkConfig, gateway_prob: f64) -> Result<PopularityModel> {
        if !(0.0..=1.0).contains(&gateway_prob) {
            return Err(Error::domain(format!(
                "gateway probability {gateway_prob} outside [0,1]"
            )));
        }
        let mut catalogs = [Vec::new(), Vec::new()];
        for (l, owner) in config.ownership().iter().enumerate() {
            catalogs[owner.index()].push(FileId::from_index(l));
        }
        // A gateway without files is never chosen.
        let gateway_prob = match (catalogs[0].is_empty(), catalogs[1].is_empty()) {
            (true, true) => return Err(Error::config("catalog is empty")),
            (true, false) => 0.0,
            (false, true) => 1.0,
            (false, false) => gateway_prob,
        };
        let mut pmfs = [Vec::new(), Vec::new()];
        let mut cdfs = [Vec::new(), Vec::new()];
        for i in 0..2 {
            if catalogs[i].is_empty() {
                continue;
            }
            pmfs[i] = zipf_pmf(catalogs[i].len(), config.gamma())?;
            let mut acc = 0.0;
            cdfs[i] = pmfs[i]
                .iter()
                .map(|p| {
                    acc += p;
                    acc
                })
                .collect();
        }
        Ok(PopularityModel {
            catalogs,
            pmfs,
            cdfs,
            gamma: config.gamma(),
            gateway_prob,
            users: config.users(),
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn gateway_prob(&self) -> f64 {
        self.gateway_prob
    }

    pub fn catalog(&self, bs: Bs) -> &[FileId] {
        &self.catalogs[bs.index()]
    }

    pub fn pmf(&self, bs: Bs) -> &[f64] {
        &self.pmfs[bs.index()]
    }

    /// Marginal probability that a single user requests `file`.
    pub fn file_probability(&self, file: FileId) -> f64 {
        for bs in Bs::BOTH {
            if let Some(rank) = self.catalog(bs).iter().position(|&f| f == file) {
                let g = match bs {
                    Bs::One => self.gateway_prob,
                    Bs::Two => 1.0 - self.gateway_prob,
                };
                return g * self.pmf(bs)[rank];
            }
        }
        0.0
    }

    fn draw_file<R: Rng + ?Sized>(&self, rng: &mut R) -> FileId {
        let bs = if rng.random::<f64>() < self.gateway_prob {
            Bs::One
        } else {
            Bs::Two
        };
        let cdf = &self.cdfs[bs.index()];
        let u: f64 = rng.random();
        let rank = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
        self.catalogs[bs.index()][rank]
    }
}

/// One request profile: K independent draws.
pub fn sample_urp<R: Rng + ?Sized>(model: &PopularityModel, rng: &mut R) -> Urp {
    Urp::new((0..model.users).map(|_| model.draw_file(rng)).collect())
}

fn substream_urp(model: &PopularityModel, seed: u64, index: u64) -> Urp {
    let mut rng: ChaCha8Rng = substream(seed, index);
    sample_urp(model, &mut rng)
}

/// `n` profiles; profile `i` is drawn from substream `i` of `seed`.
pub fn sample_batch(model: &PopularityModel, n: usize, seed: u64) -> Result<Vec<Urp>> {
    if n == 0 {
        return Err(Error::config("sample count must be at least 1"));
    }
    Ok((0..n as u64)
        .map(|i| substream_urp(model, seed, i))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn config(gamma: f64) -> NetworkConfig {
        NetworkConfig::split_catalog(2, 12, 20, 4.0, gamma, 3).unwrap()
    }

    #[test]
    fn zipf_examples() {
        let p = zipf_pmf(3, 2.0).unwrap();
        for (a, b) in p.iter().zip([36.0 / 49.0, 9.0 / 49.0, 4.0 / 49.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        let u = zipf_pmf(4, 0.0).unwrap();
        assert!(u.iter().all(|&x| (x - 0.25).abs() < 1e-15));
        assert_eq!(zipf_pmf(1, 5.0).unwrap(), vec![1.0]);
        assert!(zipf_pmf(0, 1.0).is_err());
        let s: f64 = zipf_pmf(1000, 0.8).unwrap().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn steep_popularity_picks_top_files() {
        let model = PopularityModel::from_config(&config(60.0)).unwrap();
        assert!(model.pmf(Bs::One)[0] >= 1.0 - 1e-9);
        let mut rng = substream(11, 0);
        for _ in 0..50 {
            let pi = sample_urp(&model, &mut rng);
            assert!(pi.files().iter().all(|f| f.get() == 1 || f.get() == 11));
        }
    }

    #[test]
    fn batches_are_deterministic_and_seed_dependent() {
        let model = PopularityModel::from_config(&config(2.0)).unwrap();
        let a = sample_batch(&model, 400, 5).unwrap();
        assert_eq!(a.len(), 400);
        assert_eq!(a, sample_batch(&model, 400, 5).unwrap());
        assert_ne!(a, sample_batch(&model, 400, 6).unwrap());
        let single = sample_batch(&model, 1, 5).unwrap();
        let mut rng = substream(5, 0);
        assert_eq!(single[0], sample_urp(&model, &mut rng));
        assert!(sample_batch(&model, 0, 5).is_err());
    }

    #[test]
    fn rank_one_frequency_matches_pmf() {
        let c = NetworkConfig::split_catalog(1, 3, 60, 1.0, 2.0, 0).unwrap();
        let model = PopularityModel::from_config(&c).unwrap();
        let mut rng = substream(99, 0);
        let n = 100_000;
        let top = FileId::new(1).unwrap();
        let hits = (0..n).filter(|_| model.draw_file(&mut rng) == top).count();
        let freq = hits as f64 / n as f64;
        let expect = model.file_probability(top);
        assert!((freq - expect).abs() < 0.01, "{freq} vs {expect}");
    }

    #[test]
    fn empty_gateway_is_never_chosen() {
        let c = NetworkConfig::new(1, 3, vec![1.0; 3], 1.0, vec![Bs::Two; 3], 1.0, 0).unwrap();
        let model = PopularityModel::from_config(&c).unwrap();
        assert_eq!(model.gateway_prob(), 0.0);
        let batch = sample_batch(&model, 20, 1).unwrap();
        assert!(batch
            .iter()
            .flat_map(|p| p.files())
            .all(|f| c.owner(*f) == Bs::Two));
    }
}
