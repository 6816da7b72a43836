//! Uniform entry point that runs any scheme on one coefficient set.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::allocator::{score_topology, IbParams};
use crate::baselines::{
    direct_topology, exhaustive_topology, greedy_topology, mst_topology, SchemeId, DEFAULT_EXHAUSTIVE_CAP,
};
use crate::error::Result;
use crate::gmga::{gmga_run_observed, GaParams, GenerationReport};
use crate::network::{LinkCoefficients, SlotAllocation, Topology};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub ib: IbParams,
    pub ga: GaParams,
    pub max_exhaustive: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { ib: IbParams::default(), ga: GaParams::default(), max_exhaustive: DEFAULT_EXHAUSTIVE_CAP }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub scheme: SchemeId,
    pub topology: Topology,
    pub slots: SlotAllocation,
    /// Full-precision max-min budget, bits/Hz.
    pub r_min: f64,
    pub converged: bool,
    /// GA only.
    pub generations: Option<usize>,
    /// Number of slot-allocation runs spent on the search.
    pub evals: usize,
    pub cache_hits: usize,
    /// GA only: best tolerant score per population.
    pub history: Vec<f64>,
    pub wall_ms: f64,
}

/// Runs `scheme`. `seed` drives the greedy visiting order and the GA;
/// `ga_seeds` join the GA's first population and are ignored otherwise.
pub fn solve(
    scheme: SchemeId,
    coef: &LinkCoefficients,
    frame: f64,
    settings: &SolverSettings,
    seed: u64,
    ga_seeds: &[Topology],
) -> Result<Solution> {
    solve_observed(scheme, coef, frame, settings, seed, ga_seeds, |_| {})
}

pub fn solve_observed(
    scheme: SchemeId,
    coef: &LinkCoefficients,
    frame: f64,
    settings: &SolverSettings,
    seed: u64,
    ga_seeds: &[Topology],
    observer: impl FnMut(&GenerationReport),
) -> Result<Solution> {
    let n = coef.n_d();
    let ib = &settings.ib;
    let start = Instant::now();
    let plain = |topology: Topology, evals: usize| -> Result<Solution> {
        let res = score_topology(&topology, coef, frame, ib)?;
        Ok(Solution {
            scheme,
            topology,
            converged: res.converged(),
            slots: res.slots,
            r_min: res.r_min,
            generations: None,
            evals,
            cache_hits: 0,
            history: Vec::new(),
            wall_ms: 0.0,
        })
    };
    let mut sol = match scheme {
        SchemeId::Direct => plain(direct_topology(n), 1)?,
        SchemeId::Mst => plain(mst_topology(coef, &SlotAllocation::uniform(n, frame)), 1)?,
        SchemeId::Greedy => plain(greedy_topology(coef, frame, &mut ChaCha8Rng::seed_from_u64(seed)), 1)?,
        SchemeId::Exhaustive => {
            let (topology, res) = exhaustive_topology(coef, frame, ib, settings.max_exhaustive)?;
            let evals = (n + 1).pow(n as u32 - 1);
            Solution {
                scheme,
                topology,
                converged: res.converged(),
                slots: res.slots,
                r_min: res.r_min,
                generations: None,
                evals,
                cache_hits: 0,
                history: Vec::new(),
                wall_ms: 0.0,
            }
        }
        SchemeId::Gmga => {
            let params = GaParams { seed, ..settings.ga.clone() };
            let res = gmga_run_observed(coef, &params, frame, ib, ga_seeds, observer)?;
            Solution {
                scheme,
                topology: res.topology,
                slots: res.slots,
                r_min: res.r_min,
                converged: res.converged,
                generations: Some(res.generations),
                evals: res.evals,
                cache_hits: res.cache_hits,
                history: res.history,
                wall_ms: 0.0,
            }
        }
    };
    sol.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(sol)
}
