use omega_core::belief::{entropy_bits, CellBelief};
use omega_core::grid::{CellId, GridSpec};
use omega_core::planner::{
    assign_general, brute_force_select, brute_force_select_with, conditioned, entropy_gain,
    greedy_select, match_uavs_to_cells, policy_max_avg_prob, team_gain, temporal_entropy,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_belief(rng: &mut impl Rng, n: usize) -> CellBelief {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    CellBelief::new(raw.into_iter().map(|x| x / total).collect())
}

fn ids(v: &[usize]) -> Vec<CellId> {
    v.iter().map(|&c| CellId(c)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn gain_identity(seed in any::<u64>(), n in 2usize..20, p in 0.05f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cb = random_belief(&mut rng, n);
        let s: Vec<CellId> = (0..n).filter(|_| rng.gen_bool(0.3)).map(CellId).collect();
        let miss: f64 = s.iter().map(|&c| 1.0 - p * cb.get(c)).product();
        let got = entropy_gain(&cb, &s, p).unwrap();
        let want = match temporal_entropy(&cb, &s, p) {
            Ok(te) => cb.entropy() - miss * te,
            Err(_) => cb.entropy(),
        };
        prop_assert!((got - want).abs() < 1e-12);
        if let Ok(q) = conditioned(&cb, &s, p) {
            prop_assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn certain_detection_first_pick_is_argmax(seed in any::<u64>(), n in 3usize..=50) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cb = random_belief(&mut rng, n);
        let pick = greedy_select(std::slice::from_ref(&cb), 1, 1.0, &[]).unwrap();
        prop_assert_eq!(pick, vec![cb.argmax()]);
    }

    #[test]
    fn policies_are_pure(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<CellBelief> = (0..3).map(|_| random_belief(&mut rng, 12)).collect();
        prop_assert_eq!(assign_general(&b, 4, 0.7).unwrap(), assign_general(&b, 4, 0.7).unwrap());
        prop_assert_eq!(greedy_select(&b, 3, 0.6, &[]).unwrap(), greedy_select(&b, 3, 0.6, &[]).unwrap());
    }
}

#[test]
fn greedy_within_bound_of_optimum_on_ten_cells() {
    let bound = 1.0 - (-1.0f64).exp();
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = vec![random_belief(&mut rng, 10)];
        let p = [0.5, 0.7, 0.9, 1.0][seed as usize % 4];
        let g = team_gain(&b, &greedy_select(&b, 2, p, &[]).unwrap(), p).unwrap();
        let opt = team_gain(&b, &brute_force_select(&b, 2, p).unwrap(), p).unwrap();
        assert!(g >= bound * opt - 1e-12, "seed {seed}: {g} < {bound}·{opt}");
    }
}

#[test]
fn single_target_general_assignment_against_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let b = vec![random_belief(&mut rng, 10)];
    let top = b[0].argmax();
    let got = assign_general(&b, 3, 0.8).unwrap();
    assert_eq!(got[0], top);
    let rest = brute_force_select_with(&b, 2, 0.8, &[top]).unwrap();
    let mut with_greedy = vec![top];
    with_greedy.extend(&got[1..]);
    let mut with_oracle = vec![top];
    with_oracle.extend(&rest);
    let g = team_gain(&b, &with_greedy, 0.8).unwrap() - team_gain(&b, &[top], 0.8).unwrap();
    let o = team_gain(&b, &with_oracle, 0.8).unwrap() - team_gain(&b, &[top], 0.8).unwrap();
    assert!(g >= (1.0 - (-1.0f64).exp()) * o);
}

#[test]
fn average_probability_top_two_on_dominated_instance() {
    let a = CellBelief::new(vec![0.6, 0.1, 0.1, 0.1, 0.05, 0.05]);
    let b = CellBelief::new(vec![0.05, 0.05, 0.1, 0.1, 0.1, 0.6]);
    let beliefs = [a, b];
    // every pair, scored by summed average mass
    let avg: Vec<f64> = (0..6).map(|c| (beliefs[0].mass[c] + beliefs[1].mass[c]) / 2.0).collect();
    let mut best = (0, 1);
    for i in 0..6 {
        for j in i + 1..6 {
            if avg[i] + avg[j] > avg[best.0] + avg[best.1] {
                best = (i, j);
            }
        }
    }
    assert_eq!(best, (0, 5));
    let mut got = policy_max_avg_prob(&beliefs, 2);
    got.sort();
    assert_eq!(got, ids(&[0, 5]));
}

#[test]
fn crossed_matching_is_not_worse_than_swapped() {
    let grid = GridSpec {
        cell_side: 100.0,
        origin: (0.0, 0.0),
        n_rows: 1,
        n_cols: 4,
    };
    // UAV 0 sits right of UAV 1 while cell 0 is left of cell 3
    let uavs = [(330.0, 50.0), (80.0, 50.0)];
    let a = match_uavs_to_cells(&uavs, &ids(&[0, 3]), &grid, None);
    let d = |u: (f64, f64), c: usize| {
        let (x, y) = grid.center(CellId(c));
        (u.0 - x).hypot(u.1 - y)
    };
    let swapped = d(uavs[0], 0) + d(uavs[1], 3);
    assert!(a.total_distance(&uavs, &grid) <= swapped);
    assert_eq!(a.cells[&0], CellId(3));
}

#[test]
fn greedy_matching_takes_the_globally_closest_pair_first() {
    let grid = GridSpec {
        cell_side: 100.0,
        origin: (0.0, 0.0),
        n_rows: 4,
        n_cols: 4,
    };
    for seed in 0..200 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..=4);
        let uavs: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.gen_range(0.0..400.0), rng.gen_range(0.0..400.0)))
            .collect();
        let mut cells: Vec<CellId> = (0..16).map(CellId).collect();
        cells.sort_by_key(|_| rng.gen::<u32>());
        cells.truncate(rng.gen_range(1..=4));
        let a = match_uavs_to_cells(&uavs, &cells, &grid, None);
        assert_eq!(a.cells.len(), n.min(cells.len()));
        let dist = |u: usize, c: CellId| {
            let (x, y) = grid.center(c);
            (uavs[u].0 - x).hypot(uavs[u].1 - y)
        };
        let min = (0..n)
            .flat_map(|u| cells.iter().map(move |&c| (u, c)))
            .map(|(u, c)| dist(u, c))
            .fold(f64::INFINITY, f64::min);
        assert!(a.cells.iter().any(|(&u, &c)| dist(u, c) == min));
    }
}

/// Product-form team gain of one belief.
fn gain(cb: &CellBelief, s: &[usize], p: f64) -> f64 {
    entropy_gain(cb, &ids(s), p).unwrap()
}

/// Gain with the non-detection branch weighted by the miss probability
/// `η = 1 − p·Σ_S P(c)` of a single target.
fn eta_gain(cb: &CellBelief, s: &[usize], p: f64) -> f64 {
    let eta = 1.0 - p * s.iter().map(|&c| cb.mass[c]).sum::<f64>();
    match conditioned(cb, &ids(s), p) {
        Ok(q) => cb.entropy() - eta * entropy_bits(&q),
        Err(_) => cb.entropy(),
    }
}

/// Fraction of sampled `(S ⊆ S′, c)` triples with
/// `f(S ∪ c) − f(S) < f(S′ ∪ c) − f(S′)`.
fn diminishing_returns_violations(f: fn(&CellBelief, &[usize], f64) -> f64) -> (usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(2718);
    let (mut bad, mut total) = (0, 0);
    for _ in 0..4000 {
        let n = rng.gen_range(3..=8);
        let cb = random_belief(&mut rng, n);
        let p = [0.5, 0.7, 0.9, 1.0][rng.gen_range(0..4)];
        let mut cells: Vec<usize> = (0..n).collect();
        cells.sort_by_key(|_| rng.gen::<u32>());
        let c = cells[0];
        let big = rng.gen_range(0..n - 1);
        let small = rng.gen_range(0..=big);
        let s_big = &cells[1..1 + big];
        let s_small = &cells[1..1 + small];
        let with = |s: &[usize]| [s, &[c]].concat();
        let a = f(&cb, &with(s_small), p) - f(&cb, s_small, p);
        let b = f(&cb, &with(s_big), p) - f(&cb, s_big, p);
        total += 1;
        if b > a + 1e-9 {
            bad += 1;
        }
    }
    (bad, total)
}

#[test]
#[ignore = "the product-weighted gain is not submodular; see product_gain_counterexample"]
fn product_gain_has_diminishing_returns() {
    let (bad, total) = diminishing_returns_violations(gain);
    assert_eq!(bad, 0, "{bad}/{total} sampled triples violate diminishing returns");
}

#[test]
fn product_gain_counterexample() {
    let cb = CellBelief::new(vec![0.01, 0.02, 0.7, 0.27]);
    let small = gain(&cb, &[3, 2], 1.0) - gain(&cb, &[3], 1.0);
    let large = gain(&cb, &[3, 0, 2], 1.0) - gain(&cb, &[3, 0], 1.0);
    assert!((small - 0.00697).abs() < 5e-5, "{small}");
    assert!((large - 0.13234).abs() < 5e-5, "{large}");
    assert!(large > small);
}

#[test]
fn miss_weighted_gain_has_diminishing_returns() {
    let (bad, total) = diminishing_returns_violations(eta_gain);
    assert_eq!(bad, 0, "{bad}/{total}");
}
