//! Shared fixtures for unit tests: the 20-file, 12-user worked scenario.

use crate::model::{CacheVector, NetworkConfig, Urp};

pub fn worked_config(budget: f64) -> NetworkConfig {
    NetworkConfig::split_catalog(2, 12, 20, budget, 1.0, 0).unwrap()
}

pub fn worked_urp() -> Urp {
    Urp::from_indices(&[2, 17, 19, 7, 9, 3, 5, 2, 20, 1, 7, 6]).unwrap()
}

/// Placement whose gathered vectors are `[0.3,0.1,0.4,0.05,0.6,0.3,0.4,0.1,0.2]`
/// for BS1 and `[0.1,0.2,0.4]` for BS2 under [`worked_urp`]. Uses 2.75 units.
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
