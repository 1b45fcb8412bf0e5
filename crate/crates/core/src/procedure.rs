//! The adaptive loop: optimize, check credibility of the winner, grow the
//! sample set to the required size and optimize again until the bound holds.

use std::sync::Arc;

use crate::error::Result;
use crate::failure::{FailureModel, MaintenanceEffect};
use crate::network::{BranchId, Network};
use crate::optimizer::{run, Algorithm, OptimizationResult, OptimizerConfig, RoundRecord};
use crate::risk::{build_factors, RiskMatrices};
use crate::sampling::{SampleSet, Simulator};
use crate::config::SimulationConfig;

/// Runs the loop over `set`, growing it with `extend(set, target)`.
///
/// A round whose winner has zero estimated risk doubles the sample count.
#[allow(clippy::too_many_arguments)]
pub fn adaptive_loop<F>(
    set: &mut SampleSet,
    mut extend: F,
    baseline: &FailureModel,
    effect: &MaintenanceEffect,
    components: &[BranchId],
    cfg: &OptimizerConfig,
    algorithm: Algorithm,
) -> Result<OptimizationResult>
where
    F: FnMut(&mut SampleSet, u64) -> Result<()>,
{
    cfg.check(algorithm, components.len())?;
    if (set.len() as u64) < cfg.n0 {
        extend(set, cfg.n0)?;
    }
    let mut history: Vec<RoundRecord> = Vec::new();
    let mut round = 1;
    loop {
        let n = set.len() as u64;
        let factors = build_factors(set, baseline, effect, components)?;
        let m = RiskMatrices::new(Arc::new(factors), cfg.y0);
        let mut result = run(&m, cfg, algorithm)?;
        let cred = &result.credibility;
        history.push(RoundRecord {
            round,
            n,
            strategy: result.strategy.clone(),
            risk: result.risk,
            epsilon_hat: cred.epsilon_hat,
            required_n: cred.required_n,
        });
        let target = match cred.required_n {
            Some(req) if req <= n => None,
            Some(req) => Some(req),
            None => Some(2 * n),
        };
        match target {
            None => {
                result.history = history;
                result.converged = true;
                return Ok(result);
            }
            Some(_) if round >= cfg.max_rounds => {
                log::warn!("credibility target not met after {round} rounds at {n} samples");
                result.history = history;
                result.converged = false;
                return Ok(result);
            }
            Some(t) => {
                log::info!("round {round}: {n} samples insufficient, growing to {t}");
                extend(set, t)?;
                round += 1;
            }
        }
    }
}

/// The loop on a network, starting from a fresh sample set.
pub fn procedure_one(
    network: &Network,
    baseline: &FailureModel,
    sim_config: &SimulationConfig,
    cfg: &OptimizerConfig,
    algorithm: Algorithm,
    master_seed: u64,
) -> Result<(OptimizationResult, SampleSet)> {
    let sim = Simulator::new(network, baseline, sim_config)?;
    let mut set = sim.generate(0, master_seed)?;
    let result = adaptive_loop(
        &mut set,
        |s, t| sim.extend(s, t),
        baseline,
        &sim_config.maintenance,
        &network.maintainable_ids(),
        cfg,
        algorithm,
    )?;
    Ok((result, set))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{tiny_model, tiny_samples};
    use crate::tiny::chain_fixture;

    fn run_tiny(eps_bar: f64, seed: u64) -> OptimizationResult {
        let (system, params) = chain_fixture();
        let model = tiny_model(&system, &params).unwrap();
        let mut set = tiny_samples(&system, &params, seed, 0..0).unwrap();
        let cfg = OptimizerConfig { m_max: 1, m_k: 2, n0: 200, eps_bar, ..Default::default() };
        adaptive_loop(
            &mut set,
            |s, t| {
                let more = tiny_samples(&system, &params, seed, s.len() as u64..t)?;
                s.samples.extend(more.samples);
                s.header.count = s.samples.len() as u64;
                Ok(())
            },
            &model,
            &MaintenanceEffect::default(),
            &system.ids,
            &cfg,
            Algorithm::Two,
        )
        .unwrap()
    }

    #[test]
    fn loose_target_stops_after_one_round() {
        let r = run_tiny(1.0, 5);
        assert_eq!(r.history.len(), 1);
        assert!(r.converged);
    }

    #[test]
    fn tight_target_grows_and_replays() {
        let r = run_tiny(0.05, 5);
        assert!(r.history.len() >= 2);
        assert!(r.history.windows(2).all(|w| w[0].n <= w[1].n));
        assert!(r.converged);
        assert!(r.credibility.epsilon_hat.unwrap() <= 0.05);
        assert_eq!(r, run_tiny(0.05, 5));
    }
}
