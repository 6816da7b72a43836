//! Genetic search over relay topologies with capacity-guided mutation.
//!
//! Chromosomes are parent vectors. Each generation keeps the best
//! `n_parent` topologies verbatim, fills the pool with repaired
//! crossover/mutation children and ranks everything by the tolerant
//! max-min budget. Mutation resamples a gene from `mu`, a per-node
//! categorical distribution proportional to link capacity.
//!
//! Scoring is memoized per run and children are warm started from the slot
//! vector of their first parent. Children are generated sequentially from a
//! single seeded RNG and scoring is a pure function of (topology, warm
//! start), so the parallel and sequential paths return identical results.

use std::collections::{HashMap, HashSet};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocator::{ib_evaluate_tolerant, score_topology, IbParams};
use crate::error::{Error, Result};
use crate::network::{link_capacity, Grid, LinkCoefficients, SlotAllocation, Topology};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaParams {
    pub n_origin: usize,
    pub n_parent: usize,
    /// Pool size per generation, parents included.
    pub n_offspring: usize,
    pub n_crossover_points: usize,
    pub p_mutation: f64,
    /// Generations without improvement before stopping; `None` derives it
    /// from `n_d` via [`default_stop_period`].
    pub stop_period: Option<usize>,
    pub max_generations: usize,
    /// Cycle re-mutation attempts before cycle members go to the sink.
    pub repair_retries: usize,
    /// Convergence threshold used when ranking candidates.
    pub epsilon1_prime: f64,
    #[serde(skip)]
    pub seed: u64,
    pub parallel: bool,
}

impl Default for GaParams {
    fn default() -> Self {
        Self {
            n_origin: 5,
            n_parent: 5,
            n_offspring: 50,
            n_crossover_points: 2,
            p_mutation: 0.05,
            stop_period: None,
            max_generations: 10_000,
            repair_retries: 8,
            epsilon1_prime: 1e-3,
            seed: 0,
            parallel: true,
        }
    }
}

impl GaParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(1 <= self.n_parent && self.n_parent <= self.n_origin && self.n_origin <= self.n_offspring) {
            return bad(format!(
                "need 1 <= n_parent ({}) <= n_origin ({}) <= n_offspring ({})",
                self.n_parent, self.n_origin, self.n_offspring
            ));
        }
        if !(self.p_mutation > 0.0 && self.p_mutation < 1.0) {
            return bad(format!("p_mutation must lie in (0, 1), got {}", self.p_mutation));
        }
        if self.n_crossover_points == 0 {
            return bad("n_crossover_points must be at least 1".into());
        }
        if self.stop_period == Some(0) || self.max_generations == 0 {
            return bad("stop_period and max_generations must be positive".into());
        }
        if !(self.epsilon1_prime > 0.0) {
            return bad(format!("epsilon1_prime must be positive, got {}", self.epsilon1_prime));
        }
        Ok(())
    }

    pub fn stop_period_for(&self, n_d: usize) -> usize {
        self.stop_period.unwrap_or_else(|| default_stop_period(n_d))
    }
}

/// `max(1, round(200 / n_d - 4))`.
pub fn default_stop_period(n_d: usize) -> usize {
    (200.0 / n_d as f64 - 4.0).round().max(1.0) as usize
}

/// Row `i` is node `i`'s distribution over parents `0..=n_d`.
#[derive(Debug, Clone)]
pub struct MutationGuide {
    mu: Grid,
    samplers: Vec<WeightedIndex<f64>>,
}

impl MutationGuide {
    pub fn new(coef: &LinkCoefficients, slots: &SlotAllocation) -> Result<Self> {
        let n = coef.n_d();
        if slots.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: slots.len() });
        }
        let mut mu = Grid::zeros(n, n + 1);
        for i in 0..n {
            let t = slots.t[i];
            if !(t > 0.0) {
                return Err(Error::NonPositiveSlot { index: i, value: t });
            }
            let caps: Vec<f64> = (0..=n).map(|j| if j == i { 0.0 } else { link_capacity(coef.a(i, j), t) }).collect();
            let total: f64 = caps.iter().sum();
            for j in (0..=n).filter(|&j| j != i) {
                let v = if total > 0.0 { caps[j] / total } else { 1.0 / n as f64 };
                mu.set(i, j, v);
            }
        }
        Ok(Self::from_grid(mu))
    }

    fn from_grid(mu: Grid) -> Self {
        let samplers = (0..mu.rows())
            .map(|i| WeightedIndex::new(mu.row(i).iter().copied()).expect("row has positive mass"))
            .collect();
        Self { mu, samplers }
    }

    /// Builds a guide from explicit rows (self entries are zeroed and rows
    /// renormalized).
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut mu = Grid::from_rows(rows)?;
        if mu.cols() != n + 1 {
            return Err(Error::DimensionMismatch { expected: n + 1, got: mu.cols() });
        }
        for i in 0..n {
            mu.set(i, i, 0.0);
            let total: f64 = mu.row(i).iter().sum();
            if !(total > 0.0) || mu.row(i).iter().any(|&v| v < 0.0) {
                return Err(Error::InvalidParameter(format!("guide row {i} has no positive mass")));
            }
            for j in 0..=n {
                mu.set(i, j, mu.get(i, j) / total);
            }
        }
        Ok(Self::from_grid(mu))
    }

    pub fn n_d(&self) -> usize {
        self.mu.rows()
    }

    pub fn mu(&self, i: usize, j: usize) -> f64 {
        self.mu.get(i, j)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.mu.row(i)
    }

    pub fn sample<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> usize {
        self.samplers[i].sample(rng)
    }

    /// A tree with every gene drawn from the guide, then repaired.
    pub fn random_tree<R: Rng + ?Sized>(&self, rng: &mut R, retries: usize) -> Topology {
        let topo = Topology::new((0..self.n_d()).map(|i| self.sample(i, rng)).collect());
        repair_or_reject(topo, self, rng, retries)
    }
}

/// Multi-point crossover. Cuts are drawn as `c1` in `1..=n`, then each next
/// cut in `prev..=n`; segments alternate between `a` and `b`, starting with
/// `a`. The child may contain cycles.
pub fn crossover<R: Rng + ?Sized>(a: &Topology, b: &Topology, n_points: usize, rng: &mut R) -> Topology {
    let n = a.n_d();
    assert_eq!(n, b.n_d(), "parents differ in length");
    let mut genes = a.parents().to_vec();
    let mut lo = 0;
    let mut from_b = false;
    let mut cut = 1.min(n);
    for _ in 0..n_points {
        let next = rng.random_range(cut..=n);
        if from_b {
            genes[lo..next].copy_from_slice(&b.parents()[lo..next]);
        }
        lo = next;
        cut = next;
        from_b = !from_b;
    }
    if from_b {
        genes[lo..].copy_from_slice(&b.parents()[lo..]);
    }
    Topology::new(genes)
}

/// Each gene independently resamples from its guide row with probability
/// `p_m`. The result may contain cycles.
pub fn mutate<R: Rng + ?Sized>(topo: &Topology, guide: &MutationGuide, p_m: f64, rng: &mut R) -> Topology {
    let mut out = topo.clone();
    for i in 0..topo.n_d() {
        if rng.random::<f64>() < p_m {
            out.set_parent(i, guide.sample(i, rng));
        }
    }
    out
}

/// Returns a valid topology: cycle members are re-mutated up to `retries`
/// times, and any that remain are attached to the sink.
pub fn repair_or_reject<R: Rng + ?Sized>(
    mut topo: Topology,
    guide: &MutationGuide,
    rng: &mut R,
    retries: usize,
) -> Topology {
    for _ in 0..retries {
        let members = topo.cycle_members();
        if members.is_empty() {
            return topo;
        }
        for k in members {
            topo.set_parent(k, guide.sample(k, rng));
        }
    }
    let sink = topo.sink();
    for k in topo.cycle_members() {
        topo.set_parent(k, sink);
    }
    topo
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidate {
    pub topo: Topology,
    pub r_min: f64,
    pub slots: SlotAllocation,
}

#[derive(Debug, Clone, PartialEq)]
struct CacheEntry {
    r_min: f64,
    slots: SlotAllocation,
}

/// Tolerant scores keyed by parent vector. Valid for one coefficient set.
#[derive(Debug, Default)]
pub struct ScoreCache {
    map: HashMap<Vec<usize>, CacheEntry>,
    hits: usize,
    misses: usize,
}

impl ScoreCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn hits(&self) -> usize {
        self.hits
    }

    /// Number of scoring computations performed.
    pub fn misses(&self) -> usize {
        self.misses
    }

    pub fn get(&mut self, topo: &Topology) -> Option<(f64, SlotAllocation)> {
        let e = self.map.get(topo.parents())?;
        self.hits += 1;
        Some((e.r_min, e.slots.clone()))
    }

    fn insert(&mut self, topo: &Topology, r_min: f64, slots: SlotAllocation) {
        self.misses += 1;
        let prev = self.map.insert(topo.parents().to_vec(), CacheEntry { r_min, slots });
        debug_assert!(prev.is_none(), "topology scored twice");
    }

    /// Cached score of `topo`, computing it with `score` on a miss.
    pub fn lookup_or_insert(
        &mut self,
        topo: &Topology,
        score: impl FnOnce() -> Result<(f64, SlotAllocation)>,
    ) -> Result<(f64, SlotAllocation)> {
        if let Some(hit) = self.get(topo) {
            return Ok(hit);
        }
        let (r, s) = score()?;
        self.insert(topo, r, s.clone());
        Ok((r, s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationReport {
    /// 0 for the first population.
    pub generation: usize,
    pub best_r_min: f64,
    pub evals: usize,
    pub cache_hits: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaResult {
    pub topology: Topology,
    pub slots: SlotAllocation,
    /// Full-precision score of `topology`.
    pub r_min: f64,
    /// The tolerant score the search ranked it by.
    pub tolerant_r_min: f64,
    /// Whether the full-precision rescore converged.
    pub converged: bool,
    /// Generations run after the first population.
    pub generations: usize,
    pub evals: usize,
    pub cache_hits: usize,
    /// Best tolerant score after each population, first population included.
    pub history: Vec<f64>,
}

pub fn gmga_run(
    coef: &LinkCoefficients,
    params: &GaParams,
    frame: f64,
    ib: &IbParams,
    seeds: &[Topology],
) -> Result<GaResult> {
    gmga_run_observed(coef, params, frame, ib, seeds, |_| {})
}

pub fn gmga_run_observed(
    coef: &LinkCoefficients,
    params: &GaParams,
    frame: f64,
    ib: &IbParams,
    seeds: &[Topology],
    mut observer: impl FnMut(&GenerationReport),
) -> Result<GaResult> {
    params.validate()?;
    let n = coef.n_d();
    for s in seeds {
        if s.n_d() != n || !s.is_valid() {
            return Err(Error::InvalidTopology(format!("seed topology {:?} is not a valid tree", s.parents())));
        }
    }
    let uniform = SlotAllocation::uniform(n, frame);
    if n == 1 {
        let topology = Topology::direct(1);
        let res = score_topology(&topology, coef, frame, ib)?;
        observer(&GenerationReport { generation: 0, best_r_min: res.r_min, evals: 1, cache_hits: 0 });
        return Ok(GaResult {
            topology,
            converged: res.converged(),
            slots: res.slots,
            r_min: res.r_min,
            tolerant_r_min: res.r_min,
            generations: 0,
            evals: 1,
            cache_hits: 0,
            history: vec![res.r_min],
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut cache = ScoreCache::new();
    let stop_period = params.stop_period_for(n);
    let score_batch = |batch: &[(Topology, &SlotAllocation)]| -> Result<Vec<(f64, SlotAllocation)>> {
        let one = |(topo, warm): &(Topology, &SlotAllocation)| {
            ib_evaluate_tolerant(topo, coef, warm, ib, params.epsilon1_prime).map(|r| (r.r_min, r.slots))
        };
        if params.parallel {
            batch.par_iter().map(one).collect()
        } else {
            batch.iter().map(one).collect()
        }
    };
    // scores the unseen members of `batch` and returns every member scored,
    // in batch order
    let evaluate = |batch: Vec<(Topology, &SlotAllocation)>, cache: &mut ScoreCache| -> Result<Vec<ScoredCandidate>> {
        let mut known = Vec::with_capacity(batch.len());
        let mut missing = Vec::new();
        for (idx, (topo, warm)) in batch.iter().enumerate() {
            match cache.get(topo) {
                Some(hit) => known.push((idx, hit)),
                None => missing.push((idx, (topo.clone(), *warm))),
            }
        }
        let fresh_in: Vec<_> = missing.iter().map(|(_, c)| c.clone()).collect();
        let fresh = score_batch(&fresh_in)?;
        for ((idx, (topo, _)), (r, s)) in missing.into_iter().zip(fresh) {
            cache.insert(&topo, r, s.clone());
            known.push((idx, (r, s)));
        }
        known.sort_by_key(|(idx, _)| *idx);
        Ok(batch
            .into_iter()
            .zip(known)
            .map(|((topo, _), (_, (r_min, slots)))| ScoredCandidate { topo, r_min, slots })
            .collect())
    };

    // first population: direct connect, the seeds, then guided random trees
    let start_guide = MutationGuide::new(coef, &uniform)?;
    let mut first: Vec<Topology> = Vec::new();
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    for topo in std::iter::once(Topology::direct(n)).chain(seeds.iter().cloned()) {
        if seen.insert(topo.parents().to_vec()) {
            first.push(topo);
        }
    }
    let mut attempts = 0;
    while first.len() < params.n_origin && attempts < 20 * params.n_origin {
        attempts += 1;
        let topo = start_guide.random_tree(&mut rng, params.repair_retries);
        if seen.insert(topo.parents().to_vec()) {
            first.push(topo);
        }
    }
    let mut parents = evaluate(first.into_iter().map(|t| (t, &uniform)).collect(), &mut cache)?;
    select(&mut parents, params.n_parent);
    let mut best = parents[0].r_min;
    let mut history = vec![best];
    observer(&GenerationReport { generation: 0, best_r_min: best, evals: cache.misses(), cache_hits: cache.hits() });

    let mut stall = 0;
    let mut generations = 0;
    while stall < stop_period && generations < params.max_generations {
        generations += 1;
        let guide = MutationGuide::new(coef, &parents[0].slots)?;
        let mut in_pool: HashSet<Vec<usize>> = parents.iter().map(|c| c.topo.parents().to_vec()).collect();
        let mut children: Vec<(Topology, usize)> = Vec::new();
        let want = params.n_offspring - parents.len();
        let mut attempts = 0;
        while children.len() < want && attempts < 20 * params.n_offspring {
            attempts += 1;
            let r1 = rng.random_range(0..parents.len());
            let r2 = rng.random_range(0..parents.len());
            let child = crossover(&parents[r1].topo, &parents[r2].topo, params.n_crossover_points, &mut rng);
            let child = mutate(&child, &guide, params.p_mutation, &mut rng);
            let child = repair_or_reject(child, &guide, &mut rng, params.repair_retries);
            if in_pool.insert(child.parents().to_vec()) {
                children.push((child, r1));
            }
        }
        let batch = children.into_iter().map(|(t, r1)| (t, &parents[r1].slots)).collect();
        let scored = evaluate(batch, &mut cache)?;
        let mut pool = parents.clone();
        pool.extend(scored);
        select(&mut pool, params.n_parent);
        parents = pool;

        let gen_best = parents[0].r_min;
        assert!(gen_best >= best, "elitism violated: {gen_best} < {best}");
        if gen_best > best {
            best = gen_best;
            stall = 0;
        } else {
            stall += 1;
        }
        history.push(gen_best);
        observer(&GenerationReport {
            generation: generations,
            best_r_min: gen_best,
            evals: cache.misses(),
            cache_hits: cache.hits(),
        });
    }

    // survivors are re-ranked at full precision; the first one wins ties
    let mut finals = Vec::with_capacity(parents.len());
    for cand in parents {
        let res = score_topology(&cand.topo, coef, frame, ib)?;
        finals.push((cand, res));
    }
    let best_idx = (0..finals.len()).fold(0, |b, i| if finals[i].1.r_min > finals[b].1.r_min { i } else { b });
    let (winner, res) = finals.swap_remove(best_idx);
    Ok(GaResult {
        converged: res.converged(),
        topology: winner.topo,
        slots: res.slots,
        r_min: res.r_min,
        tolerant_r_min: winner.r_min,
        generations,
        evals: cache.misses(),
        cache_hits: cache.hits(),
        history,
    })
}

/// Stable descending sort by score, truncated to `keep`. Parents come first
/// in the pool, so they win ties.
fn select(pool: &mut Vec<ScoredCandidate>, keep: usize) {
    pool.sort_by(|a, b| b.r_min.total_cmp(&a.r_min));
    pool.truncate(keep);
}
