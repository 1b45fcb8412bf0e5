//! Cascade sampling as a Markov sequence of outage stages, and the
//! per-component probability factors of a sampled path.
//!
//! At every stage each in-service component trips independently with its
//! failure probability at the current loading. A stage without trips ends the
//! cascade. A component's loading trace therefore holds one entry for every
//! stage at which it was exposed: up to and including its failure stage, or up
//! to and including the final (trip-free) stage if it survived. With that
//! convention the product of per-component factors is exactly the path
//! probability, terminating stage included.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::failure::{FailureModel, PhiParams};
use crate::network::BranchId;

/// Default upper bound on cascade stages.
pub const DEFAULT_STAGE_CAP: u32 = 100;

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
pub struct Outage {
    pub stage: u32,
    pub branch: BranchId,
}

/// Identifies the random substream a sample was drawn from.
#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedPath {
    pub master_seed: u64,
    pub stream: u64,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct CascadeSample {
    /// Index of the trip-free stage that ended the cascade (the cap if truncated).
    pub stages: u32,
    /// Unserved demand at the end of the cascade, MW.
    pub shed: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub truncated: bool,
    pub events: Vec<Outage>,
    /// Loading ratio per exposed stage, for every traced component.
    pub traces: BTreeMap<BranchId, Vec<f64>>,
    pub fail_stage: BTreeMap<BranchId, u32>,
    pub seed_path: SeedPath,
}

impl CascadeSample {
    pub fn index(&self) -> u64 {
        self.seed_path.stream
    }

    /// Structural consistency of events, failure stages and traces.
    pub fn check(&self, stage_cap: u32) -> Result<()> {
        let bad = |msg: String| Err(Error::Format(format!("sample {}: {msg}", self.index())));
        if !(self.shed >= 0.0) {
            return bad(format!("negative shed {}", self.shed));
        }
        if self.stages > stage_cap {
            return bad(format!("{} stages exceed the cap {stage_cap}", self.stages));
        }
        if self.events.len() != self.fail_stage.len() {
            return bad("events and failure stages disagree".into());
        }
        for e in &self.events {
            if self.fail_stage.get(&e.branch) != Some(&e.stage) {
                return bad(format!("event for branch {} has no matching failure stage", e.branch));
            }
        }
        for (id, trace) in &self.traces {
            let expected = match self.fail_stage.get(id) {
                Some(&s) => s as usize + 1,
                None if self.truncated => self.stages as usize,
                None => self.stages as usize + 1,
            };
            if trace.len() != expected {
                return bad(format!("trace of branch {id} has {} points, expected {expected}", trace.len()));
            }
        }
        Ok(())
    }
}

/// The physics behind a cascade: maps the current in-service set to the
/// loading ratio of every component and tracks the resulting load shed.
pub trait StageModel {
    /// Component ids, in the order used by the `in_service` and loading slices.
    fn component_ids(&self) -> &[BranchId];

    /// Restores the initial state.
    fn reset(&mut self);

    /// Moves to the state with the given in-service set and returns every
    /// component's loading ratio there (entries for out-of-service components
    /// are ignored).
    fn evaluate(&mut self, in_service: &[bool]) -> Result<Vec<f64>>;

    /// Unserved demand at the current state, MW.
    fn shed(&self) -> f64;
}

/// Samples one cascade.
///
/// `params[k]` and `traced[k]` follow `model.component_ids()`.
pub fn simulate_cascade<M: StageModel + ?Sized, R: Rng + ?Sized>(
    model: &mut M,
    params: &[PhiParams],
    traced: &[bool],
    stage_cap: u32,
    seed_path: SeedPath,
    rng: &mut R,
) -> Result<CascadeSample> {
    let ids = model.component_ids().to_vec();
    let n = ids.len();
    debug_assert_eq!(params.len(), n);
    model.reset();

    let mut in_service = vec![true; n];
    let mut traces: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut events = Vec::new();
    let mut fail_stage = BTreeMap::new();
    let mut truncated = false;
    let mut stage = 0u32;
    let mut tripped = Vec::new();

    loop {
        let loading = model.evaluate(&in_service)?;
        if stage >= stage_cap {
            truncated = true;
            break;
        }
        tripped.clear();
        for k in 0..n {
            if !in_service[k] {
                continue;
            }
            let ell = loading[k];
            if traced[k] {
                traces[k].push(ell);
            }
            let p = params[k].probability(ell);
            if rng.random::<f64>() < p {
                tripped.push(k);
            }
        }
        if tripped.is_empty() {
            break;
        }
        for &k in &tripped {
            in_service[k] = false;
            events.push(Outage { stage, branch: ids[k] });
            fail_stage.insert(ids[k], stage);
        }
        stage += 1;
    }

    Ok(CascadeSample {
        stages: stage,
        shed: model.shed(),
        truncated,
        events,
        traces: ids
            .iter()
            .zip(traces)
            .zip(traced)
            .filter(|(_, &t)| t)
            .map(|((&id, tr), _)| (id, tr))
            .collect(),
        fail_stage,
        seed_path,
    })
}

/// Component factor from per-stage probabilities along its trace: survival
/// at every exposed stage, or survival up to the last entry and failure there.
pub fn gamma_from_probabilities(probabilities: &[f64], failed: bool) -> f64 {
    match probabilities.split_last() {
        None => 1.0,
        Some((&last, head)) => {
            let survive: f64 = head.iter().map(|p| 1.0 - p).product();
            survive * if failed { last } else { 1.0 - last }
        }
    }
}

/// The factor of `sample`'s path probability owed to component `k` under the
/// given failure parameters.
pub fn gamma_factor(params: &PhiParams, sample: &CascadeSample, k: BranchId) -> Result<f64> {
    let trace = sample.traces.get(&k).ok_or(Error::MissingTrace { sample: sample.index(), branch: k })?;
    let failed = sample.fail_stage.contains_key(&k);
    let mut survive = 1.0;
    for (j, &ell) in trace.iter().enumerate() {
        let p = params.probability(ell);
        if failed && j + 1 == trace.len() {
            return Ok(survive * p);
        }
        survive *= 1.0 - p;
    }
    Ok(survive)
}

/// Path probability of a fully traced sample, accumulated stage by stage:
/// the product over stages of trip probabilities of that stage's failures
/// and survival probabilities of everything else in service.
pub fn sample_probability(sample: &CascadeSample, model: &FailureModel) -> Result<f64> {
    let mut rows = Vec::new();
    for (id, params) in model.branches() {
        let trace = sample.traces.get(id).ok_or(Error::MissingTrace {
            sample: sample.index(),
            branch: *id,
        })?;
        rows.push((params, trace, sample.fail_stage.get(id).copied()));
    }
    let depth = rows.iter().map(|(_, t, _)| t.len()).max().unwrap_or(0);
    let mut g = 1.0;
    for j in 0..depth {
        for (params, trace, failed_at) in &rows {
            if let Some(&ell) = trace.get(j) {
                let p = params.probability(ell);
                g *= if *failed_at == Some(j as u32) { p } else { 1.0 - p };
            }
        }
    }
    Ok(g)
}
