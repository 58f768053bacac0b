#![allow(dead_code)]

pub mod schema;

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use morse_core::critical::{choose_orientations, find_rest_points, SearchConfig};
use morse_core::derham::{build_fibers, Bridge, QuadratureConfig};
use morse_core::moduli::{FiberSet, ModuliConfig, Skeleton};
use morse_core::scenario::{builtin, Scenario};

pub struct Setup {
    pub s: Scenario,
    pub sk: Skeleton,
    pub fibers: Vec<FiberSet>,
}

impl Setup {
    pub fn bridge(&self) -> Bridge<'_> {
        Bridge::new(&self.s, &self.sk, &self.fibers, QuadratureConfig::default()).unwrap()
    }

    /// Rest point whose home coordinates are within `1e-6` of `coords`.
    pub fn at(&self, coords: &[f64]) -> usize {
        self.sk
            .rest
            .iter()
            .find(|r| r.point.coords.iter().zip(coords).all(|(a, b)| (a - b).abs() < 1e-6))
            .unwrap_or_else(|| panic!("no rest point at {coords:?}"))
            .id
    }

    pub fn of_index(&self, r: usize) -> Vec<usize> {
        self.sk.of_index(r)
    }
}

pub fn build(name: &str) -> Setup {
    let s = builtin(name).unwrap();
    let rest = find_rest_points(&s, &SearchConfig::default()).unwrap();
    let o = choose_orientations(&rest);
    let sk = Skeleton::build(&s, rest, o, ModuliConfig::default()).unwrap();
    let fibers = build_fibers(&s, &sk, &QuadratureConfig::default()).unwrap();
    Setup { s, sk, fibers }
}

/// Pipeline up to the fibers, built once per scenario and test binary.
pub fn setup(name: &str) -> &'static Setup {
    static CACHE: OnceLock<Mutex<HashMap<String, &'static Setup>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(s) = cache.lock().unwrap().get(name) {
        return s;
    }
    let built: &'static Setup = Box::leak(Box::new(build(name)));
    cache.lock().unwrap().entry(name.to_string()).or_insert(built)
}
