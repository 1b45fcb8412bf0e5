//! Small cascade systems whose whole path space can be enumerated, and the
//! exact risk computed over it.
//!
//! A tiny system states its physics directly: the loading ratio of each
//! component and the shed are functions of the set of failed components.

use std::sync::Arc;

use crate::cascade::StageModel;
use crate::error::{Error, Result};
use crate::failure::PhiParams;
use crate::network::BranchId;

/// Largest number of paths [`enumerate_paths`] will visit.
pub const PATH_CAP: u128 = 10_000_000;

pub type LoadingFn = Arc<dyn Fn(u32, usize) -> f64 + Send + Sync>;
pub type ShedFn = Arc<dyn Fn(u32) -> f64 + Send + Sync>;

/// Component `k` is bit `k` of a failure mask.
#[derive(Clone)]
pub struct TinySystem {
    pub ids: Vec<BranchId>,
    /// Loading ratio of component `k` given the mask of failed components.
    pub loading: LoadingFn,
    /// Load shed given the mask of failed components, MW.
    pub shed: ShedFn,
    pub stage_cap: u32,
}

impl TinySystem {
    pub fn model(&self) -> TinyCascade<'_> {
        TinyCascade { system: self, failed: 0 }
    }
}

#[derive(Clone)]
pub struct TinyCascade<'a> {
    system: &'a TinySystem,
    failed: u32,
}

impl StageModel for TinyCascade<'_> {
    fn component_ids(&self) -> &[BranchId] {
        &self.system.ids
    }

    fn reset(&mut self) {
        self.failed = 0;
    }

    fn evaluate(&mut self, in_service: &[bool]) -> Result<Vec<f64>> {
        self.failed = in_service
            .iter()
            .enumerate()
            .filter(|(_, &on)| !on)
            .fold(0, |m, (k, _)| m | 1 << k);
        Ok((0..self.system.ids.len()).map(|k| (self.system.loading)(self.failed, k)).collect())
    }

    fn shed(&self) -> f64 {
        (self.system.shed)(self.failed)
    }
}

/// One complete cascade path: the mask of components tripping at each stage.
#[derive(Clone, Debug, PartialEq)]
pub struct TinyPath {
    pub stages: Vec<u32>,
    pub truncated: bool,
    pub probability: f64,
    pub shed: f64,
}

fn count_paths(system: &TinySystem, failed: u32, stage: u32, n: usize) -> u128 {
    if stage >= system.stage_cap {
        return 1;
    }
    let alive = !failed & ((1u32 << n) - 1);
    let mut total = 1u128;
    let mut sub = alive;
    while sub != 0 {
        total += count_paths(system, failed | sub, stage + 1, n);
        if total > PATH_CAP {
            return total;
        }
        sub = (sub - 1) & alive;
    }
    total
}

/// Every cascade path with its exact probability under `params`.
pub fn enumerate_paths(system: &TinySystem, params: &[PhiParams]) -> Result<Vec<TinyPath>> {
    let n = system.ids.len();
    if n > 20 || params.len() != n {
        return Err(Error::Domain(format!("{n} components with {} parameter sets", params.len())));
    }
    let count = count_paths(system, 0, 0, n);
    if count > PATH_CAP {
        return Err(Error::Refused { count, cap: PATH_CAP });
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut stages = Vec::new();
    walk(system, params, 0, 1.0, &mut stages, &mut out);
    Ok(out)
}

fn walk(
    system: &TinySystem,
    params: &[PhiParams],
    failed: u32,
    prob: f64,
    stages: &mut Vec<u32>,
    out: &mut Vec<TinyPath>,
) {
    let n = system.ids.len();
    if stages.len() as u32 >= system.stage_cap {
        out.push(TinyPath { stages: stages.clone(), truncated: true, probability: prob, shed: (system.shed)(failed) });
        return;
    }
    let alive = !failed & ((1u32 << n) - 1);
    let phi: Vec<f64> = (0..n).map(|k| params[k].probability((system.loading)(failed, k))).collect();
    let step = |trip: u32| -> f64 {
        (0..n)
            .filter(|k| alive >> k & 1 == 1)
            .map(|k| if trip >> k & 1 == 1 { phi[k] } else { 1.0 - phi[k] })
            .product()
    };
    out.push(TinyPath { stages: stages.clone(), truncated: false, probability: prob * step(0), shed: (system.shed)(failed) });
    let mut sub = alive;
    while sub != 0 {
        let p = step(sub);
        if p > 0.0 {
            stages.push(sub);
            walk(system, params, failed | sub, prob * p, stages, out);
            stages.pop();
        }
        sub = (sub - 1) & alive;
    }
}

/// Exact `E[h · 1{h >= y0}]` over the whole path space.
pub fn exact_risk_tiny(system: &TinySystem, params: &[PhiParams], y0: f64) -> Result<f64> {
    Ok(enumerate_paths(system, params)?
        .iter()
        .filter(|p| p.shed >= y0)
        .map(|p| p.probability * p.shed)
        .sum())
}

/// Three components A, B, C. B is only stressed once A is out; C is an
/// independent random failure. Shed: 20 MW for A, 80 MW more for B, 10 MW for C.
pub fn chain_fixture() -> (TinySystem, Vec<PhiParams>) {
    let system = TinySystem {
        ids: vec![BranchId(1), BranchId(2), BranchId(3)],
        loading: Arc::new(|failed, k| if k == 1 && failed & 1 == 1 { 1.5 } else { 0.5 }),
        shed: Arc::new(|failed| {
            [20.0, 80.0, 10.0]
                .iter()
                .enumerate()
                .filter(|(k, _)| failed >> k & 1 == 1)
                .map(|(_, v)| v)
                .sum()
        }),
        stage_cap: 10,
    };
    let params = vec![
        PhiParams::constant(0.2),
        PhiParams { p_base: 0.02, p_peak: 0.6, ell_knee: 1.0, ell_sat: 1.4 },
        PhiParams::constant(0.1),
    ];
    (system, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(p: f64) -> (TinySystem, Vec<PhiParams>) {
        let s = TinySystem {
            ids: vec![BranchId(1)],
            loading: Arc::new(|_, _| 0.0),
            shed: Arc::new(|f| if f == 1 { 100.0 } else { 0.0 }),
            stage_cap: 1,
        };
        (s, vec![PhiParams::constant(p)])
    }

    #[test]
    fn single_component_half() {
        let (s, p) = single(0.5);
        assert_eq!(exact_risk_tiny(&s, &p, 0.0).unwrap(), 50.0);
        assert_eq!(exact_risk_tiny(&s, &p, 150.0).unwrap(), 0.0);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let (s, p) = chain_fixture();
        let total: f64 = enumerate_paths(&s, &p).unwrap().iter().map(|p| p.probability).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chain_regression() {
        let (s, p) = chain_fixture();
        let r = exact_risk_tiny(&s, &p, 0.0).unwrap();
        assert!((r - CHAIN_RISK).abs() < 1e-10, "{r}");
    }

    const CHAIN_RISK: f64 = 17.8891888;
    const CHAIN_RISK_50: f64 = 15.500184;

    #[test]
    fn chain_regression_with_threshold() {
        let (s, p) = chain_fixture();
        let r = exact_risk_tiny(&s, &p, 50.0).unwrap();
        assert!((r - CHAIN_RISK_50).abs() < 1e-10, "{r}");
    }

    #[test]
    fn refuses_large_systems() {
        let s = TinySystem {
            ids: (1..=12).map(BranchId).collect(),
            loading: Arc::new(|_, _| 0.0),
            shed: Arc::new(|_| 0.0),
            stage_cap: 12,
        };
        let p = vec![PhiParams::constant(0.5); 12];
        assert!(matches!(enumerate_paths(&s, &p), Err(Error::Refused { .. })));
    }
}
