//! Max-min fair TDMA slot allocation by iterative balancing.
//!
//! For a fixed topology, airtime is repeatedly moved from the node with the
//! largest rate budget to the node with the smallest one. Because a relay's
//! budget depends on its children's slots, a transfer is spread along the
//! uplink paths of both nodes so that, to first order, only those two
//! budgets move. A transfer is kept only if it shrinks the spread
//! `max R - min R` (or keeps it and reduces the variance); otherwise it is
//! undone and the step halves. Two accepted transfers in a row double the
//! step again, up to its initial value. Equal budgets maximize the minimum
//! budget, so a converged run is max-min optimal for that topology.
//!
//! Slots are held internally as integer ticks of `T / 2^44`, which makes
//! every transfer exactly conserve the frame.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{link_capacity, rate_budget, LinkCoefficients, SlotAllocation, Topology};

const TICKS_PER_FRAME: u64 = 1 << 44;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IbParams {
    /// Convergence threshold on `max R - min R`, bits/Hz.
    pub epsilon1: f64,
    /// Minimum allocatable slot, seconds.
    pub epsilon2: f64,
    /// Initial transfer step in seconds; `None` means `T / (2 n_d)`.
    pub delta0: Option<f64>,
    pub max_iters: usize,
}

impl Default for IbParams {
    fn default() -> Self {
        Self { epsilon1: 1e-6, epsilon2: 1e-7, delta0: None, max_iters: 100_000 }
    }
}

impl IbParams {
    pub fn with_epsilon1(self, epsilon1: f64) -> Self {
        Self { epsilon1, ..self }
    }

    /// Checks the thresholds against a frame split among `n_d` slots.
    pub fn validate(&self, frame: f64, n_d: usize) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be positive".into()));
        }
        if !(self.epsilon1 > 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon1 must be positive, got {}", self.epsilon1)));
        }
        if !(self.epsilon2 > 0.0 && self.epsilon2 < frame / n_d as f64) {
            return Err(Error::InvalidParameter(format!(
                "epsilon2 must lie in (0, T/n_d), got {}",
                self.epsilon2
            )));
        }
        if let Some(d) = self.delta0 {
            if !(d > 0.0 && d < frame) {
                return Err(Error::InvalidParameter(format!("delta0 must lie in (0, T), got {d}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    Converged,
    /// Step shrank to nothing before the spread closed.
    StepExhausted,
    IterationCap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IbResult {
    pub slots: SlotAllocation,
    pub r_min: f64,
    pub gap: f64,
    pub iters: usize,
    pub stop: StopReason,
}

impl IbResult {
    pub fn converged(&self) -> bool {
        self.stop == StopReason::Converged
    }
}

/// Balances slots for `topo`, starting from `init`. The frame length is the
/// sum of `init`.
pub fn ib_allocate(
    topo: &Topology,
    coef: &LinkCoefficients,
    init: &SlotAllocation,
    params: &IbParams,
) -> Result<IbResult> {
    run(topo, coef, init, params, |_| {})
}

/// Same as [`ib_allocate`] with the looser threshold `epsilon1_prime`, used
/// to rank candidate topologies quickly.
pub fn ib_evaluate_tolerant(
    topo: &Topology,
    coef: &LinkCoefficients,
    init: &SlotAllocation,
    params: &IbParams,
    epsilon1_prime: f64,
) -> Result<IbResult> {
    ib_allocate(topo, coef, init, &params.with_epsilon1(epsilon1_prime))
}

/// Like [`ib_allocate`], also returning the spread after every accepted
/// transfer (preceded by the initial spread).
pub fn ib_allocate_traced(
    topo: &Topology,
    coef: &LinkCoefficients,
    init: &SlotAllocation,
    params: &IbParams,
) -> Result<(IbResult, Vec<f64>)> {
    let mut trace = Vec::new();
    let res = run(topo, coef, init, params, |gap| trace.push(gap))?;
    Ok((res, trace))
}

struct Balancer<'a> {
    topo: &'a Topology,
    coef: &'a LinkCoefficients,
    quantum: f64,
    floor: u64,
    ticks: Vec<u64>,
    /// Uplink capacity of each node at its current slot.
    uplink: Vec<f64>,
    budget: Vec<f64>,
}

impl Balancer<'_> {
    fn slot(&self, k: usize) -> f64 {
        self.ticks[k] as f64 * self.quantum
    }

    fn refresh_uplink(&mut self, k: usize) {
        self.uplink[k] = link_capacity(self.coef.a(k, self.topo.parent(k)), self.slot(k));
    }

    fn refresh_budget(&mut self) {
        let n = self.ticks.len();
        self.budget.copy_from_slice(&self.uplink);
        for k in 0..n {
            let p = self.topo.parent(k);
            if p < n {
                self.budget[p] -= self.uplink[k];
            }
        }
    }

    /// (argmin, spread, sum of squared deviations) with lowest-index
    /// tie-breaking.
    fn spread(&self) -> (usize, f64, f64) {
        let mut lo = 0;
        let mut hi = 0;
        for (k, &r) in self.budget.iter().enumerate().skip(1) {
            if r < self.budget[lo] {
                lo = k;
            }
            if r > self.budget[hi] {
                hi = k;
            }
        }
        let mean = self.budget.iter().sum::<f64>() / self.budget.len() as f64;
        let dev = self.budget.iter().map(|r| (r - mean) * (r - mean)).sum();
        (lo, self.budget[hi] - self.budget[lo], dev)
    }

    /// Uplink path from `k` up to (excluding) the sink, each node paired with
    /// the seconds of airtime it needs per extra bit/Hz of uplink capacity.
    fn path_weights(&self, k: usize) -> Vec<(usize, f64)> {
        let n = self.ticks.len();
        let mut out = Vec::new();
        let mut cur = k;
        while cur < n {
            let a = self.coef.a(cur, self.topo.parent(cur));
            let slope = capacity_slope(a, self.slot(cur));
            let w = if slope > 0.0 { 1.0 / slope } else { f64::INFINITY };
            out.push((cur, w));
            cur = self.topo.parent(cur);
        }
        out
    }

    /// Plans a transfer of `delta` ticks of net airtime that lowers the
    /// budget of `donor` and raises the budget of `recv` while, to first
    /// order, leaving every other budget unchanged. Returns the signed tick
    /// change per node, or `None` when the donor side has nothing to give.
    fn plan(&self, donor: usize, recv: usize, delta: u64) -> Option<Vec<(usize, i64)>> {
        let dp = self.path_weights(donor);
        let rp = self.path_weights(recv);
        let w_d: f64 = dp.iter().map(|p| p.1).sum();
        let w_r: f64 = rp.iter().map(|p| p.1).sum();
        if !(w_d.is_finite() && w_r.is_finite()) {
            return None;
        }
        // donor budget drops by x, receiver budget rises by ratio * x
        let ratio = w_d / w_r;
        let mut coeff: Vec<(usize, f64)> = dp.iter().map(|&(a, w)| (a, -w)).collect();
        for &(a, w) in &rp {
            match coeff.iter_mut().find(|c| c.0 == a) {
                Some(c) => c.1 += ratio * w,
                None => coeff.push((a, ratio * w)),
            }
        }
        let moved: f64 = coeff.iter().map(|c| c.1.max(0.0)).sum();
        if !(moved > 0.0) {
            return None;
        }
        let mut x = delta as f64 / moved;
        for &(a, c) in &coeff {
            if c < 0.0 {
                let head = (self.ticks[a] - self.floor) as f64;
                x = x.min(head / -c);
            }
        }
        let mut change: Vec<(usize, i64)> = coeff
            .iter()
            .map(|&(a, c)| (a, if c < 0.0 { -((-c * x).floor() as i64) } else { (c * x).floor() as i64 }))
            .collect();
        if change.iter().all(|c| c.1 >= 0) {
            return None;
        }
        // settle rounding on the receiver so ticks are exactly conserved
        let net: i64 = change.iter().map(|c| c.1).sum();
        let slot = change.iter().position(|c| c.0 == recv)?;
        change[slot].1 -= net;
        if (self.ticks[recv] as i64) + change[slot].1 < self.floor as i64 {
            return None;
        }
        Some(change)
    }

    fn apply(&mut self, change: &[(usize, i64)]) {
        for &(a, c) in change {
            self.ticks[a] = (self.ticks[a] as i64 + c) as u64;
            self.refresh_uplink(a);
        }
        self.refresh_budget();
    }
}

/// d/dt of `t log2(1 + a/t)`.
fn capacity_slope(a: f64, t: f64) -> f64 {
    let x = a / t;
    (x.ln_1p() - x / (1.0 + x)) * std::f64::consts::LOG2_E
}

fn run(
    topo: &Topology,
    coef: &LinkCoefficients,
    init: &SlotAllocation,
    params: &IbParams,
    mut on_accept: impl FnMut(f64),
) -> Result<IbResult> {
    let n = topo.n_d();
    if n == 0 {
        return Err(Error::InvalidTopology("topology has no nodes".into()));
    }
    if init.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: init.len() });
    }
    if coef.n_d() != n {
        return Err(Error::DimensionMismatch { expected: n, got: coef.n_d() });
    }
    if !topo.is_valid() {
        return Err(Error::InvalidTopology(format!("{:?} is not a tree rooted at the sink", topo.parents())));
    }
    let frame = init.total();
    if !(frame > 0.0 && frame.is_finite()) {
        return Err(Error::InvalidSlots(format!("frame length {frame} is not positive")));
    }
    params.validate(frame, n)?;
    init.check(frame, params.epsilon2)?;

    let quantum = frame / TICKS_PER_FRAME as f64;
    let floor = (params.epsilon2 / quantum).ceil() as u64 + 1;
    let ticks = to_ticks(&init.t, frame, floor);

    let mut bal = Balancer {
        topo,
        coef,
        quantum,
        floor,
        ticks,
        uplink: vec![0.0; n],
        budget: vec![0.0; n],
    };
    for k in 0..n {
        bal.refresh_uplink(k);
    }
    bal.refresh_budget();

    let delta0 = params.delta0.unwrap_or(frame / (2.0 * n as f64));
    let max_delta = ((delta0 / quantum).round() as u64).max(1);
    let mut delta = max_delta;
    let mut streak = 0;

    let (_, mut gap, mut dev) = bal.spread();
    on_accept(gap);
    let mut iters = 0;
    let mut order: Vec<usize> = (0..n).collect();
    let stop = loop {
        if gap <= params.epsilon1 {
            break StopReason::Converged;
        }
        if delta == 0 {
            break StopReason::StepExhausted;
        }
        if iters >= params.max_iters {
            break StopReason::IterationCap;
        }
        iters += 1;

        let (lo, _, _) = bal.spread();
        // donors in descending budget order, lowest index first on ties
        order.sort_by(|&x, &y| bal.budget[y].total_cmp(&bal.budget[x]).then(x.cmp(&y)));
        let plan = order.iter().filter(|&&k| k != lo).find_map(|&k| bal.plan(k, lo, delta));
        let Some(change) = plan else {
            delta /= 2;
            continue;
        };

        let saved = bal.uplink.clone();
        bal.apply(&change);
        let (_, new_gap, new_dev) = bal.spread();
        if new_gap < gap || (new_gap == gap && new_dev < dev) {
            gap = new_gap;
            dev = new_dev;
            on_accept(gap);
            streak += 1;
            if streak >= 2 {
                delta = (delta * 2).min(max_delta);
                streak = 0;
            }
        } else {
            streak = 0;
            for &(a, c) in &change {
                bal.ticks[a] = (bal.ticks[a] as i64 - c) as u64;
            }
            bal.uplink = saved;
            bal.refresh_budget();
            delta /= 2;
        }
    };

    let slots = SlotAllocation::new((0..n).map(|k| bal.slot(k)).collect());
    let r_min = rate_budget(topo, &slots, coef)?.into_iter().fold(f64::INFINITY, f64::min);
    Ok(IbResult { slots, r_min, gap, iters, stop })
}

/// Rounds slots onto the tick lattice, lifting any below `floor` and
/// settling the rounding residue on the largest slot so the ticks sum to
/// exactly one frame.
fn to_ticks(t: &[f64], frame: f64, floor: u64) -> Vec<u64> {
    let scale = TICKS_PER_FRAME as f64 / frame;
    let mut ticks: Vec<u64> = t.iter().map(|&v| ((v * scale).round() as u64).max(floor)).collect();
    let sum: u64 = ticks.iter().sum();
    let largest = (0..ticks.len()).fold(0, |b, k| if ticks[k] > ticks[b] { k } else { b });
    if sum > TICKS_PER_FRAME {
        ticks[largest] -= sum - TICKS_PER_FRAME;
    } else {
        ticks[largest] += TICKS_PER_FRAME - sum;
    }
    ticks
}

/// Full-precision score of a topology from uniform slots. Every scheme's
/// reported minimum budget goes through this so identical topologies score
/// identically.
pub fn score_topology(topo: &Topology, coef: &LinkCoefficients, frame: f64, params: &IbParams) -> Result<IbResult> {
    ib_allocate(topo, coef, &SlotAllocation::uniform(topo.n_d(), frame), params)
}
