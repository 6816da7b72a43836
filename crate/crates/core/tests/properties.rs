use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use relaynet::allocator::{ib_allocate, ib_allocate_traced, ib_evaluate_tolerant, score_topology, IbParams};
use relaynet::baselines::{direct_topology, exhaustive_topology, greedy_topology, mst_topology};
use relaynet::gmga::{crossover, gmga_run, mutate, repair_or_reject, GaParams, MutationGuide};
use relaynet::mobility::{rwm_step, MobilityState};
use relaynet::network::{
    derive_coefficients, link_capacity, rate_budget, validate_topology, LinkCoefficients, NetworkInstance, Physics,
    Point, SlotAllocation, Topology,
};

const T: f64 = 0.1;

fn coefficients(seed: u64, n_d: usize, n_b: usize) -> LinkCoefficients {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    derive_coefficients(&NetworkInstance::sample(&Physics::default(), n_d, n_b, &mut rng)).unwrap()
}

/// Random recursive tree: nodes in shuffled order attach to the sink or to
/// an earlier node.
fn random_tree<R: Rng>(n: usize, rng: &mut R) -> Topology {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut parent = vec![n; n];
    for (i, &k) in order.iter().enumerate() {
        let pick = rng.random_range(0..=i);
        parent[k] = if pick == i { n } else { order[pick] };
    }
    Topology::new(parent)
}

fn random_slots<R: Rng>(n: usize, rng: &mut R) -> SlotAllocation {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = w.iter().sum();
    SlotAllocation::new(w.iter().map(|x| x / s * T).collect())
}

/// Reachability by matrix power: with the sink absorbing, the `n`-th power of the
/// parent adjacency sends every node to the sink.
fn matrix_power_valid(parent: &[usize]) -> bool {
    let n = parent.len();
    let m = n + 1;
    let mut c = vec![vec![0u32; m]; m];
    for (k, &p) in parent.iter().enumerate() {
        c[k][p] = 1;
    }
    c[n][n] = 1;
    let mut acc = c.clone();
    for _ in 1..n {
        let mut next = vec![vec![0u32; m]; m];
        for i in 0..m {
            for k in 0..m {
                if acc[i][k] != 0 {
                    for j in 0..m {
                        next[i][j] += acc[i][k] * c[k][j];
                    }
                }
            }
        }
        acc = next;
    }
    (0..n).all(|k| acc[k][n] == 1)
}

#[test]
fn validity_matches_matrix_power_for_small_n() {
    for n in 1..=4usize {
        let total = (n + 1).pow(n as u32);
        let mut valid = 0;
        for code in 0..total {
            let mut parent = Vec::with_capacity(n);
            let mut c = code;
            for _ in 0..n {
                parent.push(c % (n + 1));
                c /= n + 1;
            }
            let topo = Topology::new(parent.clone());
            let v = validate_topology(&topo, n);
            assert_eq!(v, matrix_power_valid(&parent), "{parent:?}");
            assert_eq!(v, topo.cycle_members().is_empty() && parent.iter().enumerate().all(|(k, &p)| p != k));
            valid += v as usize;
        }
        assert_eq!(valid, (n + 1).pow(n as u32 - 1));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn budgets_conserve_sink_traffic(seed in any::<u64>(), n in 1usize..12, n_b in 1usize..4) {
        let coef = coefficients(seed, n, n_b);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let topo = random_tree(n, &mut rng);
        let slots = random_slots(n, &mut rng);
        let r = rate_budget(&topo, &slots, &coef).unwrap();
        let total: f64 = r.iter().sum();
        let sink: f64 = (0..n).filter(|&k| topo.parent(k) == n).map(|k| link_capacity(coef.a(k, n), slots.t[k])).sum();
        prop_assert!((total - sink).abs() <= 1e-9 * sink.abs().max(f64::MIN_POSITIVE), "{total} vs {sink}");
    }

    #[test]
    fn own_slot_growth_raises_own_budget(seed in any::<u64>(), n in 1usize..10) {
        let coef = coefficients(seed, n, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        let topo = random_tree(n, &mut rng);
        let slots = random_slots(n, &mut rng);
        let base = rate_budget(&topo, &slots, &coef).unwrap();
        for k in 0..n {
            let mut t = slots.t.clone();
            t[k] += 1e-6 * T;
            let bumped = rate_budget(&topo, &SlotAllocation::new(t), &coef).unwrap();
            if coef.a(k, topo.parent(k)) > 0.0 {
                prop_assert!(bumped[k] > base[k]);
            }
        }
    }

    #[test]
    fn stronger_links_never_lower_budgets(seed in any::<u64>(), n in 1usize..10, gamma in 1.0001f64..50.0) {
        let coef = coefficients(seed, n, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
        let topo = random_tree(n, &mut rng);
        let slots = random_slots(n, &mut rng);
        let base = rate_budget(&topo, &slots, &coef).unwrap();
        let scaled = rate_budget(&topo, &slots, &coef.scaled(gamma)).unwrap();
        // relays also carry more child traffic; own capacity still grows,
        // so check the own-link part and the conservation totals
        for k in 0..n {
            let own = |c: &LinkCoefficients| link_capacity(c.a(k, topo.parent(k)), slots.t[k]);
            prop_assert!(own(&coef.scaled(gamma)) >= own(&coef));
        }
        let (a, b): (f64, f64) = (base.iter().sum(), scaled.iter().sum());
        prop_assert!(b >= a - 1e-15);
    }

    #[test]
    fn link_capacity_is_monotone(a in 1e-6f64..1e3, t in 1e-6f64..0.1, f in 1.001f64..10.0) {
        prop_assert!(link_capacity(a * f, t) > link_capacity(a, t));
        prop_assert!(link_capacity(a, t * f) > link_capacity(a, t));
    }

    #[test]
    fn allocator_invariants(seed in any::<u64>(), n in 2usize..9, n_b in 1usize..4) {
        let coef = coefficients(seed, n, n_b);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 4);
        let topo = random_tree(n, &mut rng);
        let params = IbParams::default();
        let init = random_slots(n, &mut rng);
        let (res, trace) = ib_allocate_traced(&topo, &coef, &init, &params).unwrap();
        prop_assert!((res.slots.total() - T).abs() <= 1e-12 * T);
        prop_assert!(res.slots.t.iter().all(|&t| t >= params.epsilon2));
        prop_assert!(trace.windows(2).all(|w| w[1] <= w[0]));
        let r = rate_budget(&topo, &res.slots, &coef).unwrap();
        prop_assert_eq!(res.r_min, r.iter().cloned().fold(f64::INFINITY, f64::min));
        if res.converged() {
            prop_assert!(res.gap <= params.epsilon1);
            let again = ib_allocate(&topo, &coef, &res.slots, &params).unwrap();
            prop_assert!(again.iters <= 4, "rerun took {} iterations", again.iters);
        }
    }

    #[test]
    fn tolerant_scoring_is_cheaper_and_close(seed in any::<u64>(), n in 2usize..9) {
        let coef = coefficients(seed, n, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 5);
        let topo = random_tree(n, &mut rng);
        let params = IbParams::default();
        let init = SlotAllocation::uniform(n, T);
        let precise = ib_allocate(&topo, &coef, &init, &params).unwrap();
        let loose = ib_evaluate_tolerant(&topo, &coef, &init, &params, 1e-3).unwrap();
        prop_assert!(loose.iters <= precise.iters);
        if precise.converged() && loose.converged() {
            prop_assert!((precise.r_min - loose.r_min).abs() <= 1e-3);
        }
    }

    #[test]
    fn schemes_emit_valid_trees(seed in any::<u64>(), n in 1usize..15, n_b in 1usize..4) {
        let coef = coefficients(seed, n, n_b);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 6);
        prop_assert!(direct_topology(n).is_valid());
        prop_assert!(mst_topology(&coef, &SlotAllocation::uniform(n, T)).is_valid());
        prop_assert!(greedy_topology(&coef, T, &mut rng).is_valid());
    }

    #[test]
    fn genetic_operators_stay_repairable(seed in any::<u64>(), n in 2usize..12) {
        let coef = coefficients(seed, n, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 7);
        let guide = MutationGuide::new(&coef, &random_slots(n, &mut rng)).unwrap();
        let a = random_tree(n, &mut rng);
        let b = random_tree(n, &mut rng);
        let child = crossover(&a, &b, 2, &mut rng);
        for k in 0..n {
            prop_assert!(child.parent(k) == a.parent(k) || child.parent(k) == b.parent(k));
        }
        let child = mutate(&child, &guide, 0.3, &mut rng);
        prop_assert!(repair_or_reject(child, &guide, &mut rng, 3).is_valid());
    }
}

#[test]
fn repair_fuzz() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for trial in 0..10_000 {
        let n = 2 + trial % 10;
        let rows = (0..n).map(|_| (0..=n).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let guide = MutationGuide::from_rows(rows).unwrap();
        let topo = Topology::new((0..n).map(|_| rng.random_range(0..=n)).collect());
        let retries = trial % 4;
        let out = repair_or_reject(topo.clone(), &guide, &mut rng, retries);
        assert!(validate_topology(&out, n), "{:?} -> {:?}", topo.parents(), out.parents());
        if validate_topology(&topo, n) {
            assert_eq!(out, topo);
        }
    }
}

#[test]
fn exhaustive_dominates_on_small_instances() {
    let params = IbParams::default();
    for seed in 0..12u64 {
        let n = 2 + (seed as usize % 5);
        let coef = coefficients(seed + 100, n, 1 + seed as usize % 3);
        let (best_topo, best) = exhaustive_topology(&coef, T, &params, 8).unwrap();
        assert!(best_topo.is_valid());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ga = gmga_run(&coef, &GaParams { seed, ..GaParams::default() }, T, &params, &[]).unwrap();
        let others = [
            direct_topology(n),
            mst_topology(&coef, &SlotAllocation::uniform(n, T)),
            greedy_topology(&coef, T, &mut rng),
            ga.topology,
        ];
        for topo in others {
            let r = score_topology(&topo, &coef, T, &params).unwrap();
            assert!(best.r_min >= r.r_min - 1e-9, "n={n}: {} < {}", best.r_min, r.r_min);
        }
    }
}

#[test]
fn random_waypoint_stays_in_bounds() {
    let radius = 500.0;
    let (speed, unit) = (6.42, 20.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let start: Vec<Point> = (0..20).map(|_| Point::sample_in_disk(Point::ORIGIN, radius, &mut rng)).collect();
    let mut state = MobilityState::new(start, speed, radius, &mut rng);
    for _ in 0..1000 {
        let before = state.positions.clone();
        rwm_step(&mut state, unit, radius, &mut rng);
        for (p, q) in before.iter().zip(&state.positions) {
            assert!(p.distance(q) <= speed * unit * (1.0 + 1e-12));
            assert!(q.distance(&Point::ORIGIN) <= radius);
        }
        assert!(state.waypoints.iter().all(|w| w.distance(&Point::ORIGIN) <= radius));
    }
}
