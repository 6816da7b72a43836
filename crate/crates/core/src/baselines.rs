//! Comparison schemes: direct connect, MST, greedy and exhaustive search.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocator::{score_topology, IbParams, IbResult};
use crate::error::{Error, Result};
use crate::network::{link_capacity, LinkCoefficients, SlotAllocation, Topology};

/// Default largest `n_d` the exhaustive search accepts.
pub const DEFAULT_EXHAUSTIVE_CAP: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeId {
    Direct,
    Mst,
    Greedy,
    Exhaustive,
    Gmga,
}

impl SchemeId {
    pub const ALL: [SchemeId; 5] = [
        SchemeId::Direct,
        SchemeId::Mst,
        SchemeId::Greedy,
        SchemeId::Exhaustive,
        SchemeId::Gmga,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeId::Direct => "direct",
            SchemeId::Mst => "mst",
            SchemeId::Greedy => "greedy",
            SchemeId::Exhaustive => "exhaustive",
            SchemeId::Gmga => "gmga",
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeId::ALL
            .into_iter()
            .find(|id| id.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown scheme '{s}'")))
    }
}

pub fn direct_topology(n_d: usize) -> Topology {
    Topology::direct(n_d)
}

/// Arborescence grown from the sink, Prim style, over link cost
/// `1 / (t_i log2(1 + A_ij / t_i))` at the given (uniform) slots.
///
/// A node's key only changes on a strictly cheaper link, and the cheapest
/// key wins with the lowest node index on ties. Nodes reachable only over
/// dead links are attached to the sink.
pub fn mst_topology(coef: &LinkCoefficients, slots: &SlotAllocation) -> Topology {
    let n = coef.n_d();
    let cost = |i: usize, j: usize| 1.0 / link_capacity(coef.a(i, j), slots.t[i]);
    let mut topo = Topology::direct(n);
    let mut key: Vec<f64> = (0..n).map(|i| cost(i, n)).collect();
    let mut in_tree = vec![false; n];
    for _ in 0..n {
        let next = (0..n)
            .filter(|&i| !in_tree[i])
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if key[b] <= key[i] => Some(b),
                _ => Some(i),
            });
        let Some(u) = next else { break };
        in_tree[u] = true;
        if key[u].is_infinite() {
            topo.set_parent(u, n);
            continue;
        }
        for i in 0..n {
            if !in_tree[i] {
                let c = cost(i, u);
                if c < key[i] {
                    key[i] = c;
                    topo.set_parent(i, u);
                }
            }
        }
    }
    topo
}

/// Bottleneck own-transmit capacity on the path from `j` to the sink.
fn bottleneck(topo: &Topology, caps: &dyn Fn(usize, usize) -> f64, j: usize) -> f64 {
    let n = topo.n_d();
    let mut cur = j;
    let mut b = f64::INFINITY;
    while cur < n {
        let p = topo.parent(cur);
        b = b.min(caps(cur, p));
        cur = p;
    }
    b
}

/// Starts from direct connect and visits every node once in a random order,
/// re-parenting it to the target with the best `min(link rate, B_j)`, where
/// `B_j` is the bottleneck capacity of `j`'s current route to the sink.
/// Targets that would close a cycle are skipped.
pub fn greedy_topology<R: Rng + ?Sized>(coef: &LinkCoefficients, frame: f64, rng: &mut R) -> Topology {
    let n = coef.n_d();
    let t = frame / n as f64;
    let caps = |i: usize, j: usize| link_capacity(coef.a(i, j), t);
    let mut topo = Topology::direct(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    for i in order {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..=n {
            if j == i || (j < n && topo.path_contains(j, i)) {
                continue;
            }
            let value = caps(i, j).min(bottleneck(&topo, &caps, j));
            if best.is_none_or(|(_, v)| value > v) {
                best = Some((j, value));
            }
        }
        if let Some((j, _)) = best {
            topo.set_parent(i, j);
        }
    }
    topo
}

/// Every valid parent vector for `n` nodes in lexicographic order, packed
/// `n` genes per entry. Partial assignments that already close a cycle are
/// pruned.
pub fn enumerate_trees(n: usize) -> Vec<u8> {
    assert!(n < u8::MAX as usize, "too many nodes to enumerate");
    let mut out = Vec::new();
    let mut genes = vec![0u8; n];
    fn closes_cycle(genes: &[u8], k: usize, p: usize, n: usize) -> bool {
        let mut cur = p;
        // genes below k are assigned; anything else is open or the sink
        while cur < k {
            cur = genes[cur] as usize;
        }
        cur == k && cur < n
    }
    fn go(genes: &mut Vec<u8>, k: usize, n: usize, out: &mut Vec<u8>) {
        if k == n {
            out.extend_from_slice(genes);
            return;
        }
        for p in 0..=n {
            if p == k || closes_cycle(genes, k, p, n) {
                continue;
            }
            genes[k] = p as u8;
            go(genes, k + 1, n, out);
        }
    }
    go(&mut genes, 0, n, &mut out);
    out
}

/// Scores every tree at full precision and returns the best (lowest
/// lexicographic parent vector on ties).
pub fn exhaustive_topology(
    coef: &LinkCoefficients,
    frame: f64,
    params: &IbParams,
    cap: usize,
) -> Result<(Topology, IbResult)> {
    let n = coef.n_d();
    if n > cap {
        return Err(Error::ExhaustiveTooLarge { n_d: n, cap });
    }
    let trees = enumerate_trees(n);
    let best = trees
        .par_chunks(n)
        .enumerate()
        .map(|(idx, genes)| {
            let topo = Topology::new(genes.iter().map(|&g| g as usize).collect());
            score_topology(&topo, coef, frame, params).map(|res| (res.r_min, idx))
        })
        .try_reduce(
            || (f64::NEG_INFINITY, usize::MAX),
            |a, b| Ok(if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a }),
        )?;
    let genes = &trees[best.1 * n..(best.1 + 1) * n];
    let topo = Topology::new(genes.iter().map(|&g| g as usize).collect());
    let res = score_topology(&topo, coef, frame, params)?;
    Ok((topo, res))
}
