//! Channel-level check of the stream counting: Rayleigh block fading,
//! zero-forcing beamformers for BS-only and BS-relay cooperative slots, and
//! high-SNR rate slopes.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::analytics::per_urp_coop;
use crate::error::{Error, Result};
use crate::model::{Bs, CacheVector, NetworkConfig, Urp};
use crate::rng::substream;

/// Condition number above which a stacked channel is redrawn.
pub const MAX_CONDITION: f64 = 1e8;

const REDRAWS: usize = 64;

/// Transmit power limits of a BS and of the relay.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PowerBudget {
    pub bs: f64,
    pub relay: f64,
}

impl PowerBudget {
    pub fn equal(power: f64) -> PowerBudget {
        PowerBudget {
            bs: power,
            relay: power,
        }
    }

    pub fn total(&self) -> f64 {
        self.bs + self.relay
    }
}

/// One slot's channels from every transmitter to every user.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSet {
    /// `K × M` per BS.
    bs: [DMatrix<Complex64>; 2],
    /// `K × 2M`.
    relay: DMatrix<Complex64>,
}

impl ChannelSet {
    pub fn users(&self) -> usize {
        self.relay.nrows()
    }

    pub fn antennas(&self) -> usize {
        self.bs[0].ncols()
    }

    pub fn bs(&self, bs: Bs) -> &DMatrix<Complex64> {
        &self.bs[bs.index()]
    }

    pub fn relay(&self) -> &DMatrix<Complex64> {
        &self.relay
    }

    /// Rows `[H_{k,BS}, H_{k,RS}]` of the given users, `|users| × 3M`.
    fn augmented(&self, bs: Bs, users: &[usize]) -> DMatrix<Complex64> {
        let m = self.antennas();
        DMatrix::from_fn(users.len(), 3 * m, |r, c| {
            let k = users[r];
            if c < m {
                self.bs[bs.index()][(k, c)]
            } else {
                self.relay[(k, c - m)]
            }
        })
    }

    fn rows(&self, bs: Bs, users: &[usize]) -> DMatrix<Complex64> {
        let h = &self.bs[bs.index()];
        DMatrix::from_fn(users.len(), h.ncols(), |r, c| h[(users[r], c)])
    }
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Independent `CN(0,1)` entries for all links of the scenario.
pub fn sample_channels<R: Rng + ?Sized>(config: &NetworkConfig, rng: &mut R) -> ChannelSet {
    let (k, m) = (config.users(), config.antennas());
    let mut draw = |cols: usize| DMatrix::from_fn(k, cols, |_, _| complex_normal(rng));
    let bs = [draw(m), draw(m)];
    let relay = draw(2 * m);
    ChannelSet { bs, relay }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BeamMode {
    BsOnly,
    Cooperative,
}

/// Beamformers of one slot: column `j` serves `users[j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BeamformerSet {
    pub mode: BeamMode,
    pub bs: Bs,
    pub users: Vec<usize>,
    /// `M × n` (BS-only) or `3M × n` (cooperative; first M rows at the BS).
    pub vectors: DMatrix<Complex64>,
    pub bs_power: f64,
    pub relay_power: f64,
}

/// Unit-norm columns of the pseudo-inverse of a square stacked channel.
fn zf_directions(h: DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let svd = h.svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.max();
    let smin = sv.min();
    let condition = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    if condition.is_nan() || condition > MAX_CONDITION {
        return Err(Error::IllConditioned(condition));
    }
    let mut pinv = svd
        .pseudo_inverse(smax * f64::EPSILON)
        .map_err(|e| Error::domain(e.to_string()))?;
    for mut col in pinv.column_iter_mut() {
        let norm = col.norm();
        col /= Complex64::from(norm);
    }
    Ok(pinv)
}

fn check_users(users: &[usize], expected: usize, channels: &ChannelSet) -> Result<()> {
    if users.len() != expected {
        return Err(Error::domain(format!(
            "expected {expected} scheduled users, got {}",
            users.len()
        )));
    }
    let mut sorted = users.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != users.len() || sorted.last().is_some_and(|&k| k >= channels.users()) {
        return Err(Error::domain(
            "scheduled users must be distinct and within range",
        ));
    }
    Ok(())
}

/// BS-only zero-forcing to exactly M users with power `P_S/M` per stream.
pub fn zf_bs_only(
    channels: &ChannelSet,
    bs: Bs,
    users: &[usize],
    bs_power: f64,
) -> Result<BeamformerSet> {
    let m = channels.antennas();
    check_users(users, m, channels)?;
    let scale = (bs_power / m as f64).sqrt();
    let vectors = zf_directions(channels.rows(bs, users))? * Complex64::from(scale);
    Ok(BeamformerSet {
        mode: BeamMode::BsOnly,
        bs,
        users: users.to_vec(),
        bs_power: vectors.norm_squared(),
        relay_power: 0.0,
        vectors,
    })
}

/// Joint BS-relay zero-forcing to exactly 3M users. All streams share one
/// power level, the largest that keeps both the BS block and the relay block
/// within their limits.
pub fn zf_coop(
    channels: &ChannelSet,
    bs: Bs,
    users: &[usize],
    power: PowerBudget,
) -> Result<BeamformerSet> {
    let m = channels.antennas();
    check_users(users, 3 * m, channels)?;
    let dirs = zf_directions(channels.augmented(bs, users))?;
    let bs_part = dirs.rows(0, m).norm_squared();
    let relay_part = dirs.rows(m, 2 * m).norm_squared();
    let level = (power.bs / bs_part).min(power.relay / relay_part);
    let vectors = dirs * Complex64::from(level.sqrt());
    Ok(BeamformerSet {
        mode: BeamMode::Cooperative,
        bs,
        users: users.to_vec(),
        bs_power: vectors.rows(0, m).norm_squared(),
        relay_power: vectors.rows(m, 2 * m).norm_squared(),
        vectors,
    })
}

fn effective_rows(bf: &BeamformerSet, channels: &ChannelSet) -> DMatrix<Complex64> {
    match bf.mode {
        BeamMode::BsOnly => channels.rows(bf.bs, &bf.users),
        BeamMode::Cooperative => channels.augmented(bf.bs, &bf.users),
    }
}

/// Largest `|h_{k'} v_k| / (‖h_{k'}‖ ‖v_k‖)` over scheduled pairs `k' ≠ k`.
pub fn nulling_residual(bf: &BeamformerSet, channels: &ChannelSet) -> f64 {
    let h = effective_rows(bf, channels);
    let gains = &h * &bf.vectors;
    let mut worst: f64 = 0.0;
    for r in 0..gains.nrows() {
        for c in 0..gains.ncols() {
            if r != c {
                let denom = h.row(r).norm() * bf.vectors.column(c).norm();
                if denom > 0.0 {
                    worst = worst.max(gains[(r, c)].norm() / denom);
                }
            }
        }
    }
    worst
}

/// `log2(1 + SINR)` for every user of the channel set; 0 when unscheduled.
/// Residual interference from the other streams counts as noise.
pub fn stream_rates(bf: &BeamformerSet, channels: &ChannelSet) -> Vec<f64> {
    let h = effective_rows(bf, channels);
    let gains = &h * &bf.vectors;
    let mut rates = vec![0.0; channels.users()];
    for (r, &k) in bf.users.iter().enumerate() {
        let signal = gains[(r, r)].norm_sqr();
        let interference: f64 = (0..gains.ncols())
            .filter(|&c| c != r)
            .map(|c| gains[(r, c)].norm_sqr())
            .sum();
        rates[k] = (1.0 + signal / (1.0 + interference)).log2();
    }
    rates
}

fn pick_users<R: Rng + ?Sized>(rng: &mut R, users: usize, count: usize) -> Vec<usize> {
    let mut picked = sample(rng, users, count).into_vec();
    picked.sort_unstable();
    picked
}

/// Draws channels until both zero-forcing problems of a slot are well
/// conditioned.
fn with_channels<R: Rng + ?Sized, T>(
    config: &NetworkConfig,
    rng: &mut R,
    mut f: impl FnMut(&ChannelSet, &mut R) -> Result<T>,
) -> Result<T> {
    let mut last = Error::IllConditioned(f64::INFINITY);
    for _ in 0..REDRAWS {
        let channels = sample_channels(config, rng);
        match f(&channels, rng) {
            Err(e @ Error::IllConditioned(_)) => last = e,
            other => return other,
        }
    }
    Err(last)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LadderRung {
    pub power: f64,
    /// Mean cooperative per-stream rate over mean BS-only per-stream rate.
    pub ratio_mean: f64,
    /// Spread of the per-trial ratios.
    pub ratio_std: f64,
    pub dof_estimate: f64,
}

/// Per-stream rate of cooperative slots relative to BS-only slots at each
/// rung of a power ladder, plus the slope estimate at cooperative
/// probability `p_coop`.
pub fn rate_ratio_ladder(
    config: &NetworkConfig,
    ladder: &[PowerBudget],
    n_trials: usize,
    p_coop: f64,
    seed: u64,
) -> Result<Vec<LadderRung>> {
    if n_trials == 0 {
        return Err(Error::config("ladder needs at least one trial per rung"));
    }
    let m = config.antennas();
    ladder
        .iter()
        .enumerate()
        .map(|(i, &power)| {
            if power.relay > power.bs {
                return Err(Error::config("relay power must not exceed BS power"));
            }
            let mut rng = substream(seed, 2 * i as u64);
            let mut coop_sum = 0.0;
            let mut solo_sum = 0.0;
            let mut ratios = Vec::with_capacity(n_trials);
            for _ in 0..n_trials {
                let (coop, solo) = with_channels(config, &mut rng, |ch, rng| {
                    let solo_users = pick_users(rng, config.users(), m);
                    let coop_users = pick_users(rng, config.users(), 3 * m);
                    let solo = zf_bs_only(ch, Bs::One, &solo_users, power.bs)?;
                    let coop = zf_coop(ch, Bs::One, &coop_users, power)?;
                    let solo_rate = stream_rates(&solo, ch).iter().sum::<f64>() / m as f64;
                    let coop_rate = stream_rates(&coop, ch).iter().sum::<f64>() / (3 * m) as f64;
                    Ok((coop_rate, solo_rate))
                })?;
                coop_sum += coop;
                solo_sum += solo;
                ratios.push(coop / solo);
            }
            let n = n_trials as f64;
            let mean_ratio = ratios.iter().sum::<f64>() / n;
            let var =
                ratios.iter().map(|r| (r - mean_ratio).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            let dof = dof_estimate_with_probability(
                config,
                p_coop,
                power,
                n_trials,
                seed ^ (2 * i as u64 + 1),
            )?;
            Ok(LadderRung {
                power: power.bs,
                ratio_mean: coop_sum / solo_sum,
                ratio_std: var.sqrt(),
                dof_estimate: dof,
            })
        })
        .collect()
}

/// Mean per-slot zero-forcing sum rate over `log2(P_S + P_R)`, with each
/// slot cooperative with probability `p_coop`.
pub fn dof_estimate_with_probability(
    config: &NetworkConfig,
    p_coop: f64,
    power: PowerBudget,
    n_slots: usize,
    seed: u64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_coop) {
        return Err(Error::domain(format!(
            "cooperative probability {p_coop} outside [0,1]"
        )));
    }
    if n_slots == 0 {
        return Err(Error::config("slope estimate needs at least one slot"));
    }
    let m = config.antennas();
    let mut rng = substream(seed, 1);
    let mut total = 0.0;
    for _ in 0..n_slots {
        let cooperative = rng.random::<f64>() < p_coop;
        let bs = if rng.random::<bool>() {
            Bs::One
        } else {
            Bs::Two
        };
        total += with_channels(config, &mut rng, |ch, rng| {
            let bf = if cooperative {
                zf_coop(ch, bs, &pick_users(rng, config.users(), 3 * m), power)?
            } else {
                zf_bs_only(ch, bs, &pick_users(rng, config.users(), m), power.bs)?
            };
            Ok(stream_rates(&bf, ch).iter().sum::<f64>())
        })?;
    }
    Ok(total / n_slots as f64 / power.total().log2())
}

/// Slope estimate at `P_S = P_R = power` with the cooperative probability of
/// `q` under `pi`.
pub fn dof_estimate(
    config: &NetworkConfig,
    q: &CacheVector,
    pi: &Urp,
    power: f64,
    n_slots: usize,
    seed: u64,
) -> Result<f64> {
    config.check_feasible(q)?;
    let p = per_urp_coop(config, q, pi)?.p_coop;
    dof_estimate_with_probability(config, p, PowerBudget::equal(power), n_slots, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(m: usize) -> NetworkConfig {
        NetworkConfig::split_catalog(m, 12, 20, 3.0, 1.0, 0).unwrap()
    }

    #[test]
    fn channel_shapes_and_moments() {
        let c = config(2);
        let ch = sample_channels(&c, &mut substream(1, 0));
        assert_eq!(ch.bs(Bs::One).shape(), (12, 2));
        assert_eq!(ch.relay().shape(), (12, 4));
        assert_eq!(ch, sample_channels(&c, &mut substream(1, 0)));
        let mut rng = substream(2, 0);
        let n = 100_000;
        let re: Vec<f64> = (0..n).map(|_| complex_normal(&mut rng).re).collect();
        let mean = re.iter().sum::<f64>() / n as f64;
        let var = re.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((var - 0.5).abs() < 0.02, "{var}");
    }

    #[test]
    fn single_antenna_matches_closed_form() {
        let c = NetworkConfig::split_catalog(1, 3, 2, 1.0, 1.0, 0).unwrap();
        let ch = sample_channels(&c, &mut substream(3, 0));
        let p = 100.0;
        let bf = zf_bs_only(&ch, Bs::One, &[1], p).unwrap();
        let h = ch.bs(Bs::One)[(1, 0)];
        let expected = bf.vectors[(0, 0)] - h.conj() / h.norm() * p.sqrt();
        assert!(expected.norm() < 1e-9);
        let rate = stream_rates(&bf, &ch)[1];
        assert!((rate - (1.0 + p * h.norm_sqr()).log2()).abs() < 1e-12);
        assert_eq!(stream_rates(&bf, &ch)[0], 0.0);
    }

    #[test]
    fn orthogonal_users_get_matched_filters() {
        let scenario = NetworkConfig::split_catalog(2, 6, 2, 1.0, 1.0, 0).unwrap();
        let mut ch = sample_channels(&scenario, &mut substream(4, 0));
        let (a, b) = (Complex64::new(0.0, 2.0), Complex64::new(1.5, 0.0));
        ch.bs[0].fill(Complex64::from(0.0));
        ch.bs[0][(0, 0)] = a;
        ch.bs[0][(1, 1)] = b;
        let bf = zf_bs_only(&ch, Bs::One, &[0, 1], 2.0).unwrap();
        assert!((bf.vectors[(0, 0)] - a.conj() / a.norm()).norm() < 1e-12);
        assert!((bf.vectors[(1, 1)] - b.conj() / b.norm()).norm() < 1e-12);
        assert!(bf.vectors[(1, 0)].norm() < 1e-12);
    }

    #[test]
    fn zero_forcing_nulls_and_respects_power() {
        let c = config(2);
        let mut rng = substream(5, 0);
        for _ in 0..50 {
            let ch = sample_channels(&c, &mut rng);
            let solo = zf_bs_only(&ch, Bs::Two, &[3, 7], 10.0).unwrap();
            assert!(nulling_residual(&solo, &ch) < 1e-9);
            assert!(solo.bs_power <= 10.0 * (1.0 + 1e-9));
            let power = PowerBudget {
                bs: 10.0,
                relay: 4.0,
            };
            let coop = zf_coop(&ch, Bs::One, &[0, 2, 4, 5, 8, 11], power).unwrap();
            assert!(nulling_residual(&coop, &ch) < 1e-9);
            assert!(coop.bs_power <= 10.0 * (1.0 + 1e-9));
            assert!(coop.relay_power <= 4.0 * (1.0 + 1e-9));
            let binding = (coop.bs_power / 10.0).max(coop.relay_power / 4.0);
            assert!((binding - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn wrong_user_counts_are_rejected() {
        let c = config(2);
        let ch = sample_channels(&c, &mut substream(6, 0));
        assert!(zf_bs_only(&ch, Bs::One, &[0], 1.0).is_err());
        assert!(zf_bs_only(&ch, Bs::One, &[0, 0], 1.0).is_err());
        assert!(zf_coop(&ch, Bs::One, &[0, 1, 2, 3], PowerBudget::equal(1.0)).is_err());
    }

    #[test]
    fn singular_channels_are_flagged() {
        let c = config(2);
        let mut ch = sample_channels(&c, &mut substream(7, 0));
        let row = ch.bs[0].row(0).into_owned();
        ch.bs[0].set_row(1, &row);
        assert!(matches!(
            zf_bs_only(&ch, Bs::One, &[0, 1], 1.0),
            Err(Error::IllConditioned(_))
        ));
    }

    #[test]
    fn cooperative_snr_grows_with_power() {
        let c = config(2);
        let users = [0, 1, 2, 3, 4, 5];
        let mut rng = substream(8, 0);
        for _ in 0..20 {
            let ch = sample_channels(&c, &mut rng);
            let low = zf_coop(&ch, Bs::One, &users, PowerBudget::equal(1e4)).unwrap();
            let high = zf_coop(&ch, Bs::One, &users, PowerBudget::equal(1e6)).unwrap();
            let gain = |bf: &BeamformerSet| {
                let h = effective_rows(bf, &ch);
                (&h * &bf.vectors)[(0, 0)].norm_sqr()
            };
            assert!((gain(&high) / gain(&low) - 100.0).abs() < 1e-6);
        }
    }

    #[test]
    fn forced_modes_have_the_expected_slopes() {
        let c = config(1);
        let solo =
            dof_estimate_with_probability(&c, 0.0, PowerBudget::equal(1e10), 300, 1).unwrap();
        assert!((solo - 1.0).abs() < 0.1, "{solo}");
        let zero = dof_estimate_with_probability(&c, 0.0, PowerBudget::equal(1e2), 50, 1).unwrap();
        assert!(zero < solo);
        assert!(dof_estimate_with_probability(&c, 1.5, PowerBudget::equal(1.0), 1, 1).is_err());
    }

    #[test]
    fn ladder_ratios_stay_below_one() {
        let c = config(1);
        let ladder: Vec<PowerBudget> = [1e2, 1e4, 1e6]
            .iter()
            .map(|&p| PowerBudget::equal(p))
            .collect();
        let rungs = rate_ratio_ladder(&c, &ladder, 200, 0.5, 3).unwrap();
        assert_eq!(rungs.len(), 3);
        for w in rungs.windows(2) {
            assert!(w[1].ratio_mean >= w[0].ratio_mean);
        }
        assert!(rungs.iter().all(|r| r.ratio_mean <= 1.0));
        let over = [PowerBudget {
            bs: 1.0,
            relay: 2.0,
        }];
        assert!(rate_ratio_ladder(&c, &over, 10, 0.5, 3).is_err());
    }
}
