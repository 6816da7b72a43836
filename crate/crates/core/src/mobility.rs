//! Random-waypoint motion and the per-frame relaying loop for mobile nodes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::SchemeId;
use crate::error::{Error, Result};
use crate::network::{derive_coefficients, NetworkInstance, Physics, Point, Topology};
use crate::seeding::substream;
use crate::solver::{solve, Solution, SolverSettings};

#[derive(Debug, Clone, PartialEq)]
pub struct MobilityState {
    pub positions: Vec<Point>,
    pub waypoints: Vec<Point>,
    pub speed: f64,
}

impl MobilityState {
    /// Fresh uniform waypoints for every node.
    pub fn new<R: Rng + ?Sized>(positions: Vec<Point>, speed: f64, radius: f64, rng: &mut R) -> Self {
        let waypoints = positions.iter().map(|_| Point::sample_in_disk(Point::ORIGIN, radius, rng)).collect();
        Self { positions, waypoints, speed }
    }
}

fn clamp_to_disk(p: Point, radius: f64) -> Point {
    let d = p.distance(&Point::ORIGIN);
    if d > radius {
        Point::new(p.x * radius / d, p.y * radius / d)
    } else {
        p
    }
}

/// Moves every node `speed * dt` toward its waypoint, stopping on arrival.
/// Nodes that sit on their waypoint at the end of the step draw a new one.
pub fn rwm_step<R: Rng + ?Sized>(state: &mut MobilityState, dt: f64, radius: f64, rng: &mut R) {
    assert!(dt > 0.0, "dt must be positive");
    let reach = state.speed * dt;
    for (p, w) in state.positions.iter_mut().zip(state.waypoints.iter_mut()) {
        let d = p.distance(w);
        *p = if d <= reach {
            *w
        } else {
            let f = reach / d;
            clamp_to_disk(Point::new(p.x + (w.x - p.x) * f, p.y + (w.y - p.y) * f), radius)
        };
        if *p == *w {
            *w = Point::sample_in_disk(Point::ORIGIN, radius, rng);
        }
    }
}

/// `(v * Tu / R)^2`, the fraction of the disk a node can sweep in one unit.
pub fn positional_uncertainty(speed: f64, unit: f64, radius: f64) -> f64 {
    (speed * unit / radius).powi(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameSchedule {
    /// Total simulated time, seconds.
    pub total: f64,
    /// Time between topology updates, seconds.
    pub unit: f64,
    /// TDMA frame, seconds.
    pub frame: f64,
}

impl Default for FrameSchedule {
    fn default() -> Self {
        Self { total: 180.0, unit: 20.0, frame: 0.1 }
    }
}

fn integer_ratio(a: f64, b: f64) -> Option<usize> {
    let r = a / b;
    ((r - r.round()).abs() <= 1e-9 * r.max(1.0) && r.round() >= 1.0).then(|| r.round() as usize)
}

impl FrameSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.total > 0.0 && self.unit > 0.0 && self.frame > 0.0) {
            return Err(Error::InvalidParameter("schedule times must be positive".into()));
        }
        if integer_ratio(self.unit, self.frame).is_none() {
            return Err(Error::InvalidParameter(format!(
                "unit time {} is not an integer multiple of the frame {}",
                self.unit, self.frame
            )));
        }
        if integer_ratio(self.total, self.unit).is_none() {
            return Err(Error::InvalidParameter(format!(
                "total time {} is not an integer multiple of the unit time {}",
                self.total, self.unit
            )));
        }
        Ok(())
    }

    /// Evaluated topology frames: the initial one plus one per unit step.
    pub fn n_frames(&self) -> usize {
        integer_ratio(self.total, self.unit).map_or(1, |k| k + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MobilitySetup {
    pub physics: Physics,
    pub schedule: FrameSchedule,
    pub speed: f64,
    pub n_d: usize,
    pub n_b: usize,
    /// Seed the GA of frame `k` with frame `k - 1`'s answer.
    pub inherit: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame: usize,
    pub instance_hash: u64,
    pub outcome: std::result::Result<Solution, Error>,
}

const GEOMETRY: u64 = 0;
const MOTION: u64 = 1;
const CHANNELS: u64 = 2;
const SOLVER: u64 = 3;

/// Runs `scheme` on every frame of a random-waypoint trajectory. Geometry,
/// motion, channels and solver seeds come from separate streams of `seed`,
/// so all schemes, with or without inheritance, see identical instances.
/// Channels are redrawn every frame; beacons stay put.
pub fn run_mobility_experiment(
    setup: &MobilitySetup,
    scheme: SchemeId,
    settings: &SolverSettings,
    seed: u64,
) -> Result<Vec<FrameRecord>> {
    setup.physics.validate()?;
    setup.schedule.validate()?;
    if !(setup.speed >= 0.0) {
        return Err(Error::InvalidParameter(format!("speed must be non-negative, got {}", setup.speed)));
    }
    let physics = Physics { frame: setup.schedule.frame, ..setup.physics.clone() };
    let radius = physics.radius;
    let start = NetworkInstance::sample(&physics, setup.n_d, setup.n_b, &mut substream(seed, GEOMETRY));
    let mut motion = substream(seed, MOTION);
    let mut channels = substream(seed, CHANNELS);
    let mut solver_seeds = substream(seed, SOLVER);
    let pbs = start.pb_positions.clone();
    let mut state = MobilityState::new(start.node_positions, setup.speed, radius, &mut motion);
    let mut previous: Option<Topology> = None;
    let mut records = Vec::with_capacity(setup.schedule.n_frames());

    for frame in 0..setup.schedule.n_frames() {
        if frame > 0 {
            rwm_step(&mut state, setup.schedule.unit, radius, &mut motion);
        }
        let inst = NetworkInstance::with_positions(&physics, state.positions.clone(), pbs.clone(), &mut channels);
        let frame_seed: u64 = solver_seeds.random();
        let ga_seeds: Vec<Topology> = match (&previous, setup.inherit) {
            (Some(t), true) => vec![t.clone()],
            _ => Vec::new(),
        };
        let outcome = derive_coefficients(&inst)
            .and_then(|coef| solve(scheme, &coef, physics.frame, settings, frame_seed, &ga_seeds));
        match &outcome {
            Ok(sol) => previous = Some(sol.topology.clone()),
            Err(e) => log::warn!("frame {frame} of {scheme} failed: {e}"),
        }
        records.push(FrameRecord { frame, instance_hash: inst.fingerprint(), outcome });
    }
    Ok(records)
}
