mod common;

use common::{random_placement, random_urp, rng, worked_config, worked_placement, worked_urp};
use proptest::prelude::*;
use relaycache::analytics::{per_urp_coop, priority_probability};
use relaycache::simulator::{
    init_state, run, run_separate_rs, step, CoopPolicy, Scheduling, SlotMode, SlotPolicy,
};
use relaycache::{Bs, CacheVector, NetworkConfig, Urp};

fn check_slots(
    config: &NetworkConfig,
    q: &CacheVector,
    pi: &Urp,
    policy: &SlotPolicy,
    slots: u64,
    seed: u64,
) -> Result<(), TestCaseError> {
    let m = config.antennas();
    let mut state = init_state(config, q, pi).unwrap();
    let mut r = rng(seed);
    for t in 0..slots {
        let record = step(&mut state, policy, &mut r);
        prop_assert_eq!(record.slot, t);
        let mut distinct = record.scheduled.clone();
        distinct.sort_unstable();
        distinct.dedup();
        prop_assert_eq!(distinct.len(), record.scheduled.len());
        match record.mode {
            SlotMode::Cooperative => prop_assert_eq!(record.scheduled.len(), 3 * m),
            SlotMode::BsOnly => prop_assert_eq!(record.scheduled.len(), m),
            SlotMode::Idle => prop_assert!(record.scheduled.is_empty()),
        }
        if let Some(bs) = record.serving_bs {
            for &k in &record.scheduled {
                prop_assert_eq!(config.owner(pi.file(k)), bs);
            }
        }
        for u in state.users() {
            let started = (u.segments_completed + 1) as f64;
            prop_assert!(u.cached <= u.placement + 1e-9);
            prop_assert!(u.cached + u.noncached <= 1.0 + 1e-9);
            prop_assert!(u.cached_total <= u.placement * started + 1e-6);
            prop_assert!(u.cached_total + u.noncached_total <= started + 1e-6);
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn slot_invariants(seed in any::<u64>(), budget in 0.0f64..10.0, coin in 0u8..3, uniform in any::<bool>()) {
        let config = worked_config(budget);
        let mut r = rng(seed);
        let pi = random_urp(&mut r, 12, 20);
        let q = random_placement(&mut r, 20, budget);
        let mode = match coin {
            0 => CoopPolicy::FairCoin,
            1 => CoopPolicy::Priority(Bs::One),
            _ => CoopPolicy::Priority(Bs::Two),
        };
        let scheduling = if uniform { Scheduling::Uniform } else { Scheduling::Aligned };
        let policy = SlotPolicy::new(mode, 1.0 / 16.0).unwrap().with_scheduling(scheduling);
        check_slots(&config, &q, &pi, &policy, 400, seed)?;
    }

    #[test]
    fn slot_counts_add_up(seed in any::<u64>()) {
        let config = worked_config(6.0);
        let mut r = rng(seed);
        let pi = random_urp(&mut r, 12, 20);
        let q = random_placement(&mut r, 20, 6.0);
        let policy = SlotPolicy::new(CoopPolicy::FairCoin, 1.0 / 32.0).unwrap();
        let res = run(&config, &q, &pi, &policy, 2000, seed).unwrap();
        prop_assert_eq!(res.coop_total() + res.bsonly_total() + res.idle_slots, res.slots_total);
        prop_assert_eq!(res.empirical_coop, res.coop_total() as f64 / res.slots_total as f64);
        // Both gateways have at least M users or one has all K >= 3M users.
        prop_assert_eq!(res.idle_slots, 0);
        let again = run(&config, &q, &pi, &policy, 2000, seed).unwrap();
        prop_assert_eq!(res, again);
    }
}

#[test]
fn separate_relays_schedule_two_m_streams() {
    let config = worked_config(8.0);
    let pi = Urp::from_indices(&[1, 2, 3, 4, 5, 1, 2, 3, 11, 12, 13, 14]).unwrap();
    let mut q = vec![0.0; 20];
    for l in [0, 1, 2, 3, 10, 11, 12, 13] {
        q[l] = 1.0;
    }
    let q = CacheVector::new(q).unwrap();
    let policy = SlotPolicy::new(CoopPolicy::FairCoin, 1.0 / 64.0).unwrap();
    let res = run_separate_rs(&config, &q, &pi, &policy, 5000, 1).unwrap();
    assert!(res.coop_total() > 0);
    assert!(res.dof_count <= 4.0 + 1e-9 && res.dof_count >= 2.0 - 1e-9);
}

/// Mean absolute error of priority-j simulation against the closed form on
/// a fixed set of instances.
fn priority_error(delta: f64, instances: &[(CacheVector, Urp)], priority: Bs) -> f64 {
    let config = worked_config(20.0);
    let policy = SlotPolicy::new(CoopPolicy::Priority(priority), delta).unwrap();
    let slots = (400.0 / delta) as u64;
    instances
        .iter()
        .enumerate()
        .map(|(i, (q, pi))| {
            let stats = per_urp_coop(&config, q, pi).unwrap();
            let expected =
                priority_probability(stats.m[0], stats.m[1], stats.few[0], stats.few[1], priority)
                    .unwrap()
                    .p_total;
            let got = run(&config, q, pi, &policy, slots, i as u64)
                .unwrap()
                .empirical_coop;
            (got - expected).abs()
        })
        .sum::<f64>()
        / instances.len() as f64
}

#[test]
fn priority_simulation_converges_as_delta_shrinks() {
    let mut r = rng(5);
    let mut instances = vec![(worked_placement(), worked_urp())];
    while instances.len() < 4 {
        let pi = random_urp(&mut r, 12, 20);
        let q = random_placement(&mut r, 20, 8.0);
        instances.push((q, pi));
    }
    for priority in [Bs::One, Bs::Two] {
        let errors: Vec<f64> = [1.0 / 64.0, 1.0 / 256.0, 1.0 / 1024.0]
            .iter()
            .map(|&d| priority_error(d, &instances, priority))
            .collect();
        assert!(
            errors[0] >= errors[1] && errors[1] >= errors[2],
            "{priority:?}: {errors:?}"
        );
        assert!(errors[2] < 0.01, "{errors:?}");
    }
}
