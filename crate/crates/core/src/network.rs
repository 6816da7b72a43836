//! Physical network snapshot: geometry, RF energy harvesting, per-link SNR
//! coefficients, rate budgets and relay-topology validity.
//!
//! Indices are zero-based. With `n_d` nodes, nodes are `0..n_d` and the sink
//! is index `n_d`.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum separation enforced when sampling positions, in meters.
pub const MIN_SEPARATION: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Uniform-area sample inside the disk of `radius` around `center`.
    pub fn sample_in_disk<R: Rng + ?Sized>(center: Point, radius: f64, rng: &mut R) -> Point {
        let r = radius * rng.random::<f64>().sqrt();
        let theta = std::f64::consts::TAU * rng.random::<f64>();
        Point::new(center.x + r * theta.cos(), center.y + r * theta.sin())
    }
}

/// Physical-layer constants shared by every instance of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Physics {
    /// Deployment radius in meters.
    pub radius: f64,
    /// Power-beacon transmit power in watts.
    pub pb_power: f64,
    /// TDMA frame length in seconds.
    pub frame: f64,
    pub path_loss_exponent: f64,
    pub bandwidth_hz: f64,
    pub noise_figure_db: f64,
    /// Fraction of the delivered RF energy the node actually stores.
    pub eh_efficiency: f64,
}

impl Default for Physics {
    fn default() -> Self {
        Self {
            radius: 500.0,
            pb_power: 1.0,
            frame: 0.1,
            path_loss_exponent: 3.0,
            bandwidth_hz: 125e3,
            noise_figure_db: 6.0,
            eh_efficiency: 0.7,
        }
    }
}

impl Physics {
    pub fn noise_power(&self) -> f64 {
        noise_power(self.noise_figure_db, self.bandwidth_hz)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("radius", self.radius),
            ("pb_power", self.pb_power),
            ("frame", self.frame),
            ("path_loss_exponent", self.path_loss_exponent),
            ("bandwidth_hz", self.bandwidth_hz),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.noise_figure_db.is_finite() {
            return Err(Error::InvalidParameter("noise_figure_db must be finite".into()));
        }
        if !(self.eh_efficiency > 0.0 && self.eh_efficiency <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "eh_efficiency must lie in (0, 1], got {}",
                self.eh_efficiency
            )));
        }
        Ok(())
    }
}

/// Thermal noise floor `-174 + NF + 10 log10(BW)` in dBm.
pub fn noise_power_dbm(noise_figure_db: f64, bandwidth_hz: f64) -> f64 {
    -174.0 + noise_figure_db + 10.0 * bandwidth_hz.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Noise power in watts.
pub fn noise_power(noise_figure_db: f64, bandwidth_hz: f64) -> f64 {
    dbm_to_watts(noise_power_dbm(noise_figure_db, bandwidth_hz))
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|row| row.len() != c) {
            return Err(Error::DimensionMismatch { expected: c, got: bad.len() });
        }
        Ok(Self { rows: r, cols: c, data: rows.into_iter().flatten().collect() })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }
}

/// One frame's snapshot of the deployment.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkInstance {
    pub node_positions: Vec<Point>,
    pub pb_positions: Vec<Point>,
    pub sink_position: Point,
    pub radius: f64,
    /// `|h_{k,n}|^2`, shape `n_d x (n_d + 1)`; last column is the sink.
    pub channel_node: Grid,
    /// `|h_{b,k}|^2`, shape `n_b x n_d`.
    pub channel_pb: Grid,
    pub frame: f64,
    pub pb_power: f64,
    pub path_loss_exponent: f64,
    pub noise: f64,
    pub eh_efficiency: f64,
}

impl NetworkInstance {
    /// Places `n_b` beacons and `n_d` nodes uniformly in the disk around the
    /// sink (beacons first, then nodes), then draws channels.
    pub fn sample<R: Rng + ?Sized>(physics: &Physics, n_d: usize, n_b: usize, rng: &mut R) -> Self {
        let sink = Point::ORIGIN;
        let pbs: Vec<Point> = (0..n_b).map(|_| Point::sample_in_disk(sink, physics.radius, rng)).collect();
        let mut nodes: Vec<Point> = Vec::with_capacity(n_d);
        while nodes.len() < n_d {
            let p = Point::sample_in_disk(sink, physics.radius, rng);
            let clear = std::iter::once(&sink)
                .chain(pbs.iter())
                .chain(nodes.iter())
                .all(|q| p.distance(q) >= MIN_SEPARATION);
            if clear {
                nodes.push(p);
            }
        }
        Self::with_positions(physics, nodes, pbs, rng)
    }

    /// Builds an instance at fixed positions with freshly drawn `Exp(1)`
    /// channel gains. Node-to-node gains are symmetric.
    pub fn with_positions<R: Rng + ?Sized>(
        physics: &Physics,
        nodes: Vec<Point>,
        pbs: Vec<Point>,
        rng: &mut R,
    ) -> Self {
        let n_d = nodes.len();
        let n_b = pbs.len();
        let mut channel_node = Grid::zeros(n_d, n_d + 1);
        for k in 0..n_d {
            for n in (k + 1)..n_d {
                let h: f64 = Exp1.sample(rng);
                channel_node.set(k, n, h);
                channel_node.set(n, k, h);
            }
            let h: f64 = Exp1.sample(rng);
            channel_node.set(k, n_d, h);
        }
        let mut channel_pb = Grid::zeros(n_b, n_d);
        for b in 0..n_b {
            for k in 0..n_d {
                let h: f64 = Exp1.sample(rng);
                channel_pb.set(b, k, h);
            }
        }
        Self {
            node_positions: nodes,
            pb_positions: pbs,
            sink_position: Point::ORIGIN,
            radius: physics.radius,
            channel_node,
            channel_pb,
            frame: physics.frame,
            pb_power: physics.pb_power,
            path_loss_exponent: physics.path_loss_exponent,
            noise: physics.noise_power(),
            eh_efficiency: physics.eh_efficiency,
        }
    }

    pub fn n_d(&self) -> usize {
        self.node_positions.len()
    }

    pub fn n_b(&self) -> usize {
        self.pb_positions.len()
    }

    /// Position of node `k`, or of the sink when `k == n_d`.
    pub fn position(&self, k: usize) -> Point {
        if k == self.n_d() {
            self.sink_position
        } else {
            self.node_positions[k]
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n_d = self.n_d();
        let n_b = self.n_b();
        if self.channel_node.rows() != n_d || self.channel_node.cols() != n_d + 1 {
            return Err(Error::InvalidInstance(format!(
                "node channel matrix is {}x{}, expected {}x{}",
                self.channel_node.rows(),
                self.channel_node.cols(),
                n_d,
                n_d + 1
            )));
        }
        if self.channel_pb.rows() != n_b || self.channel_pb.cols() != n_d {
            return Err(Error::InvalidInstance(format!(
                "beacon channel matrix is {}x{}, expected {}x{}",
                self.channel_pb.rows(),
                self.channel_pb.cols(),
                n_b,
                n_d
            )));
        }
        if !(self.frame > 0.0 && self.pb_power > 0.0 && self.noise > 0.0) {
            return Err(Error::InvalidInstance("frame, pb_power and noise must be positive".into()));
        }
        // small slack for points placed by floating-point motion
        let limit = self.radius * (1.0 + 1e-9);
        for p in self.node_positions.iter().chain(self.pb_positions.iter()) {
            if p.distance(&self.sink_position) > limit {
                return Err(Error::InvalidInstance(format!("point {p:?} lies outside the disk")));
            }
        }
        let gains = self.channel_node.values().iter().chain(self.channel_pb.values());
        if gains.clone().any(|&h| !(h >= 0.0 && h.is_finite())) {
            return Err(Error::InvalidInstance("channel gains must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// FNV-1a over the bit patterns of every position and gain. Equal
    /// instances give equal fingerprints.
    pub fn fingerprint(&self) -> u64 {
        let points = self.node_positions.iter().chain(&self.pb_positions).flat_map(|p| [p.x, p.y]);
        let gains = self.channel_node.values().iter().chain(self.channel_pb.values()).copied();
        points.chain(gains).fold(0xcbf2_9ce4_8422_2325u64, |h, v| {
            v.to_bits().to_le_bytes().iter().fold(h, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
        })
    }
}

/// Energy stored by each node over one frame:
/// `eff * T * sum_b P_b |h_{b,k}|^2 d_{b,k}^-alpha`.
pub fn compute_harvested_energy(inst: &NetworkInstance) -> Result<Vec<f64>> {
    let n_d = inst.n_d();
    let mut energy = vec![0.0; n_d];
    for (k, e) in energy.iter_mut().enumerate() {
        let node = inst.node_positions[k];
        let mut delivered = 0.0;
        for (b, pb) in inst.pb_positions.iter().enumerate() {
            let d = node.distance(pb);
            if d <= 0.0 {
                return Err(Error::CoincidentPositions { what: "beacon/node", a: b, b: k });
            }
            delivered += inst.pb_power * inst.channel_pb.get(b, k) * d.powf(-inst.path_loss_exponent);
        }
        *e = inst.eh_efficiency * inst.frame * delivered;
    }
    Ok(energy)
}

/// Per-link received-SNR coefficients `A_{k,n}`: the SNR of link `k -> n`
/// is `A_{k,n} / t_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkCoefficients {
    pub energy: Vec<f64>,
    a: Grid,
}

impl LinkCoefficients {
    /// Wraps a precomputed `n_d x (n_d + 1)` coefficient matrix.
    pub fn from_matrix(energy: Vec<f64>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let a = Grid::from_rows(rows)?;
        let n_d = a.rows();
        if a.cols() != n_d + 1 {
            return Err(Error::DimensionMismatch { expected: n_d + 1, got: a.cols() });
        }
        if energy.len() != n_d {
            return Err(Error::DimensionMismatch { expected: n_d, got: energy.len() });
        }
        if a.values().iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidInstance("link coefficients must be non-negative".into()));
        }
        let mut a = a;
        for k in 0..n_d {
            a.set(k, k, 0.0);
        }
        Ok(Self { energy, a })
    }

    /// Coefficients with energy left unspecified (zeros); convenient for
    /// synthetic instances.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        Self::from_matrix(vec![0.0; n], rows)
    }

    pub fn n_d(&self) -> usize {
        self.a.rows()
    }

    pub fn sink(&self) -> usize {
        self.a.rows()
    }

    #[inline]
    pub fn a(&self, from: usize, to: usize) -> f64 {
        self.a.get(from, to)
    }

    pub fn row(&self, from: usize) -> &[f64] {
        self.a.row(from)
    }

    pub fn matrix(&self) -> &Grid {
        &self.a
    }

    /// Multiplies every coefficient by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut a = self.a.clone();
        a.data.iter_mut().for_each(|v| *v *= factor);
        Self { energy: self.energy.clone(), a }
    }
}

/// `A_{k,n} = E_k |h_{k,n}|^2 d_{k,n}^-alpha / N` for every node `k` and
/// every node-or-sink target `n != k`.
pub fn compute_link_coefficients(inst: &NetworkInstance, energy: &[f64]) -> Result<LinkCoefficients> {
    let n_d = inst.n_d();
    if energy.len() != n_d {
        return Err(Error::DimensionMismatch { expected: n_d, got: energy.len() });
    }
    let mut a = Grid::zeros(n_d, n_d + 1);
    for k in 0..n_d {
        let from = inst.node_positions[k];
        for n in 0..=n_d {
            if n == k {
                continue;
            }
            let d = from.distance(&inst.position(n));
            if d <= 0.0 {
                return Err(Error::CoincidentPositions { what: "node/node", a: k, b: n });
            }
            let v = energy[k] * inst.channel_node.get(k, n) * d.powf(-inst.path_loss_exponent) / inst.noise;
            a.set(k, n, v);
        }
    }
    Ok(LinkCoefficients { energy: energy.to_vec(), a })
}

/// Harvested energy followed by link coefficients.
pub fn derive_coefficients(inst: &NetworkInstance) -> Result<LinkCoefficients> {
    let energy = compute_harvested_energy(inst)?;
    compute_link_coefficients(inst, &energy)
}

/// Shannon capacity `t log2(1 + a / t)` in bits/Hz of a link used for `t`
/// seconds with SNR coefficient `a`.
#[inline]
pub fn link_capacity(a: f64, t: f64) -> f64 {
    t * (a / t).ln_1p() * std::f64::consts::LOG2_E
}

/// Relay topology: one uplink parent per node. `parent[k] == n_d` is the sink.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Topology {
    parent: Vec<usize>,
}

impl Topology {
    pub fn new(parent: Vec<usize>) -> Self {
        Self { parent }
    }

    /// Every node uplinks straight to the sink.
    pub fn direct(n_d: usize) -> Self {
        Self { parent: vec![n_d; n_d] }
    }

    pub fn n_d(&self) -> usize {
        self.parent.len()
    }

    pub fn sink(&self) -> usize {
        self.parent.len()
    }

    #[inline]
    pub fn parent(&self, k: usize) -> usize {
        self.parent[k]
    }

    pub fn set_parent(&mut self, k: usize, p: usize) {
        self.parent[k] = p;
    }

    pub fn parents(&self) -> &[usize] {
        &self.parent
    }

    pub fn into_parents(self) -> Vec<usize> {
        self.parent
    }

    pub fn is_valid(&self) -> bool {
        validate_topology(self, self.n_d())
    }

    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_d()];
        for (k, &p) in self.parent.iter().enumerate() {
            if p < self.n_d() {
                out[p].push(k);
            }
        }
        out
    }

    /// Nodes lying on cycles (empty for a valid tree).
    pub fn cycle_members(&self) -> Vec<usize> {
        let n = self.n_d();
        // 0 = unvisited, 1 = on current walk, 2 = resolved
        let mut state = vec![0u8; n];
        let mut on_cycle = vec![false; n];
        for start in 0..n {
            if state[start] != 0 {
                continue;
            }
            let mut walk = Vec::new();
            let mut cur = start;
            while cur < n && state[cur] == 0 {
                state[cur] = 1;
                walk.push(cur);
                cur = self.parent[cur];
            }
            if cur < n && state[cur] == 1 {
                let pos = walk.iter().position(|&w| w == cur).unwrap_or(0);
                for &w in &walk[pos..] {
                    on_cycle[w] = true;
                }
            }
            for w in walk {
                state[w] = 2;
            }
        }
        (0..n).filter(|&k| on_cycle[k]).collect()
    }

    /// Whether `ancestor` lies on the uplink path from `node` (inclusive).
    pub fn path_contains(&self, node: usize, ancestor: usize) -> bool {
        let n = self.n_d();
        let mut cur = node;
        for _ in 0..=n {
            if cur == ancestor {
                return true;
            }
            if cur >= n {
                return false;
            }
            cur = self.parent[cur];
        }
        false
    }
}

impl From<Vec<usize>> for Topology {
    fn from(parent: Vec<usize>) -> Self {
        Self::new(parent)
    }
}

/// True iff `topo` has `n_d` genes in range, no self-parents, and every
/// node's uplink chain reaches the sink within `n_d` hops.
pub fn validate_topology(topo: &Topology, n_d: usize) -> bool {
    if topo.n_d() != n_d {
        return false;
    }
    if topo.parents().iter().enumerate().any(|(k, &p)| p > n_d || p == k) {
        return false;
    }
    // 0 = unknown, 1 = on current walk, 2 = reaches sink
    let mut state = vec![0u8; n_d];
    for start in 0..n_d {
        let mut walk = Vec::new();
        let mut cur = start;
        while cur < n_d && state[cur] == 0 {
            state[cur] = 1;
            walk.push(cur);
            cur = topo.parent(cur);
        }
        if cur < n_d && state[cur] == 1 {
            return false;
        }
        for w in walk {
            state[w] = 2;
        }
    }
    true
}

/// Per-node TDMA transmit durations in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotAllocation {
    pub t: Vec<f64>,
}

impl SlotAllocation {
    pub fn new(t: Vec<f64>) -> Self {
        Self { t }
    }

    pub fn uniform(n_d: usize, frame: f64) -> Self {
        Self { t: vec![frame / n_d as f64; n_d] }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.t.iter().sum()
    }

    /// Checks the floor and frame-sum invariants.
    pub fn check(&self, frame: f64, min_slot: f64) -> Result<()> {
        if let Some((k, &v)) = self.t.iter().enumerate().find(|(_, v)| !(**v >= min_slot)) {
            return Err(Error::InvalidSlots(format!("slot {k} = {v} is below the floor {min_slot}")));
        }
        let total = self.total();
        if (total - frame).abs() > 1e-12 * frame {
            return Err(Error::InvalidSlots(format!("slots sum to {total}, frame is {frame}")));
        }
        Ok(())
    }
}

/// Net own-data budget of each node: uplink capacity minus the capacity its
/// children consume. Values may be negative for overloaded relays.
pub fn rate_budget(topo: &Topology, slots: &SlotAllocation, coef: &LinkCoefficients) -> Result<Vec<f64>> {
    let n_d = topo.n_d();
    if slots.len() != n_d {
        return Err(Error::DimensionMismatch { expected: n_d, got: slots.len() });
    }
    if coef.n_d() != n_d {
        return Err(Error::DimensionMismatch { expected: n_d, got: coef.n_d() });
    }
    if let Some((index, &value)) = slots.t.iter().enumerate().find(|(_, t)| !(**t > 0.0)) {
        return Err(Error::NonPositiveSlot { index, value });
    }
    let mut r = vec![0.0; n_d];
    for k in 0..n_d {
        let p = topo.parent(k);
        if p > n_d || p == k {
            return Err(Error::InvalidTopology(format!("node {k} has parent {p}")));
        }
        let uplink = link_capacity(coef.a(k, p), slots.t[k]);
        r[k] += uplink;
        if p < n_d {
            r[p] -= uplink;
        }
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single_node_instance(d_pb: f64, h_pb: f64) -> NetworkInstance {
        let mut channel_pb = Grid::zeros(1, 1);
        channel_pb.set(0, 0, h_pb);
        let mut channel_node = Grid::zeros(1, 2);
        channel_node.set(0, 1, 1.0);
        NetworkInstance {
            node_positions: vec![Point::new(0.0, 200.0)],
            pb_positions: vec![Point::new(0.0, 200.0 - d_pb)],
            sink_position: Point::ORIGIN,
            radius: 500.0,
            channel_node,
            channel_pb,
            frame: 0.1,
            pb_power: 1.0,
            path_loss_exponent: 3.0,
            noise: noise_power(6.0, 125e3),
            eh_efficiency: 0.7,
        }
    }

    #[test]
    fn harvested_energy_hand_value() {
        let inst = single_node_instance(100.0, 1.0);
        let e = compute_harvested_energy(&inst).unwrap();
        assert_relative_eq!(e[0], 7e-8, max_relative = 1e-12);
    }

    #[test]
    fn zero_beacon_channel_gives_zero_energy() {
        let inst = single_node_instance(100.0, 0.0);
        let e = compute_harvested_energy(&inst).unwrap();
        assert_eq!(e, vec![0.0]);
        let coef = compute_link_coefficients(&inst, &e).unwrap();
        assert_eq!(coef.a(0, 1), 0.0);
    }

    #[test]
    fn efficiency_scales_energy() {
        let mut inst = single_node_instance(80.0, 1.3);
        inst.eh_efficiency = 1.0;
        let raw = compute_harvested_energy(&inst).unwrap()[0];
        inst.eh_efficiency = 0.7;
        let stored = compute_harvested_energy(&inst).unwrap()[0];
        assert_relative_eq!(stored, 0.7 * raw, max_relative = 1e-15);
    }

    #[test]
    fn coincident_beacon_rejected() {
        let inst = single_node_instance(0.0, 1.0);
        assert!(matches!(compute_harvested_energy(&inst), Err(Error::CoincidentPositions { .. })));
    }

    #[test]
    fn coincident_nodes_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let physics = Physics::default();
        let p = Point::new(10.0, 10.0);
        let inst = NetworkInstance::with_positions(&physics, vec![p, p], vec![Point::new(-50.0, 0.0)], &mut rng);
        let e = compute_harvested_energy(&inst).unwrap();
        assert!(matches!(compute_link_coefficients(&inst, &e), Err(Error::CoincidentPositions { .. })));
    }

    #[test]
    fn link_coefficient_hand_value() {
        // node at 200 m from the sink, unit gain, E = 7e-8 J
        let inst = single_node_instance(100.0, 1.0);
        let coef = compute_link_coefficients(&inst, &[7e-8]).unwrap();
        let expected = 7e-8 * 200f64.powi(-3) / noise_power(6.0, 125e3);
        assert_relative_eq!(coef.a(0, 1), expected, max_relative = 1e-12);
        assert_relative_eq!(coef.a(0, 1), 4.4167, max_relative = 1e-4);
    }

    #[test]
    fn doubling_noise_halves_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut inst = NetworkInstance::sample(&Physics::default(), 4, 2, &mut rng);
        let a1 = derive_coefficients(&inst).unwrap();
        inst.noise *= 2.0;
        let a2 = derive_coefficients(&inst).unwrap();
        for (x, y) in a1.matrix().values().iter().zip(a2.matrix().values()) {
            assert_relative_eq!(*y, x / 2.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn noise_power_values() {
        assert_relative_eq!(noise_power_dbm(6.0, 125e3), -117.0309, epsilon = 1e-4);
        assert_relative_eq!(noise_power(6.0, 125e3), 1.982e-15, max_relative = 1e-3);
        assert_eq!(noise_power_dbm(0.0, 1.0), -174.0);
    }

    #[test]
    fn validity_examples() {
        assert!(validate_topology(&Topology::new(vec![3, 3, 3]), 3));
        assert!(!validate_topology(&Topology::new(vec![1, 0, 3]), 3));
        assert!(validate_topology(&Topology::new(vec![1, 2, 3]), 3));
        assert!(!validate_topology(&Topology::new(vec![0, 3, 3]), 3));
        assert!(!validate_topology(&Topology::new(vec![4, 3, 3]), 3));
        assert!(!validate_topology(&Topology::new(vec![3, 3]), 3));
    }

    #[test]
    fn cycle_members_found() {
        let t = Topology::new(vec![1, 0, 3]);
        assert_eq!(t.cycle_members(), vec![0, 1]);
        // 3 hangs off the 0-1-2 cycle
        let t = Topology::new(vec![1, 2, 0, 0, 5]);
        assert_eq!(t.cycle_members(), vec![0, 1, 2]);
        assert!(Topology::direct(4).cycle_members().is_empty());
    }

    #[test]
    fn leaf_and_star_budgets() {
        let coef = LinkCoefficients::from_rows(vec![vec![0.0, 2.0, 3.0], vec![1.0, 0.0, 5.0]]).unwrap();
        let slots = SlotAllocation::new(vec![0.04, 0.06]);
        let star = rate_budget(&Topology::direct(2), &slots, &coef).unwrap();
        assert_eq!(star[0], link_capacity(3.0, 0.04));
        assert_eq!(star[1], link_capacity(5.0, 0.06));
        let chain = rate_budget(&Topology::new(vec![1, 2]), &slots, &coef).unwrap();
        assert_eq!(chain[0], link_capacity(2.0, 0.04));
        assert_relative_eq!(chain[1], link_capacity(5.0, 0.06) - link_capacity(2.0, 0.04), max_relative = 1e-15);
    }

    #[test]
    fn equal_chain_relay_budget_is_zero() {
        let a = 0.3;
        let coef = LinkCoefficients::from_rows(vec![vec![0.0, a, 0.1], vec![0.2, 0.0, a]]).unwrap();
        let slots = SlotAllocation::uniform(2, 0.1);
        let r = rate_budget(&Topology::new(vec![1, 2]), &slots, &coef).unwrap();
        assert_eq!(r[1], 0.0);
    }

    #[test]
    fn non_positive_slot_is_domain_error() {
        let coef = LinkCoefficients::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap_err();
        assert!(matches!(coef, Error::DimensionMismatch { .. }));
        let coef = LinkCoefficients::from_rows(vec![vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 1.0]]).unwrap();
        let slots = SlotAllocation::new(vec![0.1, 0.0]);
        assert!(matches!(
            rate_budget(&Topology::direct(2), &slots, &coef),
            Err(Error::NonPositiveSlot { index: 1, .. })
        ));
    }

    #[test]
    fn sampled_instances_respect_invariants() {
        let physics = Physics::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let inst = NetworkInstance::sample(&physics, 12, 3, &mut rng);
            inst.validate().unwrap();
            for i in 0..inst.n_d() {
                assert!(inst.node_positions[i].distance(&inst.sink_position) >= MIN_SEPARATION);
                for j in 0..i {
                    assert!(inst.node_positions[i].distance(&inst.node_positions[j]) >= MIN_SEPARATION);
                }
                for j in 0..inst.n_d() {
                    assert_eq!(inst.channel_node.get(i, j), inst.channel_node.get(j, i));
                }
            }
        }
    }
}
