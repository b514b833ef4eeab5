//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::path::{Path, PathBuf};
use std::process::Command;

use omega_core::batch::BatchStats;
use omega_core::belief::{Belief, CellBelief, MASS_TOL};
use omega_core::experiment::{cmd_sweep, SweepRow, SweepSpec};
use omega_core::grid::CellId;
use omega_core::planner::{
    brute_force_select, conditioned, entropy_gain, greedy_select, team_gain, PolicyConfig,
    PolicyKind,
};
use omega_core::scenario::Scenario;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TRIALS: usize = 200;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn random_belief(rng: &mut impl Rng, n: usize) -> CellBelief {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    CellBelief::new(raw.into_iter().map(|x| x / total).collect())
}

fn two_cell_example() -> Verdict {
    let cb = CellBelief::new(vec![0.9, 0.1]);
    let hi = entropy_gain(&cb, &[CellId(0)], 0.9).unwrap();
    let lo = entropy_gain(&cb, &[CellId(1)], 0.9).unwrap();
    verdict(
        (hi - 0.28).abs() <= 0.005 && (lo - 0.39).abs() <= 0.005,
        format!("G(c1) = {hi:.4} (want 0.28), G(c2) = {lo:.4} (want 0.39), tol 0.005"),
    )
}

fn first_pick_is_argmax() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut agree = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(3..=50);
        let cb = random_belief(&mut rng, n);
        let pick = greedy_select(std::slice::from_ref(&cb), 1, 1.0, &[]).unwrap();
        agree += usize::from(pick == vec![cb.argmax()]);
    }
    verdict(agree == 1000, format!("{agree}/1000 first picks equal the max-probability cell"))
}

fn normalization(scn: &Scenario) -> Verdict {
    let model = &scn.classes[0].model;
    let o = &scn.overlay;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let entries = scn.refined.original.entries();
    let restart = |rng: &mut ChaCha8Rng| {
        let e = entries[rng.gen_range(0..entries.len())];
        Belief::init(&scn.refined.graph, 0, scn.refined.pieces(e)[0]).unwrap()
    };
    let mut b = restart(&mut rng);
    let mut worst: f64 = 0.0;
    let mut certain = 0;
    for step in 0..10_000 {
        if step % 2 == 0 {
            b = b.propagate(model).unwrap();
        } else {
            let cells = b.cell_marginal(o);
            let live: Vec<usize> = (0..cells.n_cells()).filter(|&c| cells.mass[c] > 0.0).collect();
            let mut searched: Vec<(CellId, f64)> = Vec::new();
            for &c in &live {
                if rng.gen_bool(0.2) {
                    searched.push((CellId(c), rng.gen_range(0.05..=1.0)));
                }
            }
            match b.negative_update_weighted(&searched, o) {
                Ok(next) => b = next,
                Err(_) => {
                    certain += 1;
                    b = restart(&mut rng);
                }
            }
        }
        worst = worst.max((b.total() - 1.0).abs());
        worst = worst.max((b.cell_marginal(o).total() - 1.0).abs());
    }
    let mut worst_temp: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.gen_range(2..=60);
        let cb = random_belief(&mut rng, n);
        let p = rng.gen_range(0.01..=1.0);
        let s: Vec<CellId> = (0..n).filter(|_| rng.gen_bool(0.3)).map(CellId).collect();
        let q = conditioned(&cb, &s, p).unwrap();
        worst_temp = worst_temp.max((q.iter().sum::<f64>() - 1.0).abs());
    }
    verdict(
        worst < MASS_TOL && worst_temp < 1e-9,
        format!(
            "max |mass - 1| = {worst:.2e} over 10^4 steps ({certain} restarts after certain detection), \
             max |P_temp - 1| = {worst_temp:.2e} over 1000 triples, tol 1e-9"
        ),
    )
}

fn greedy_vs_oracle() -> Verdict {
    let bound = 1.0 - (-1.0f64).exp();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut ratios = Vec::new();
    let mut failures = 0;
    for _ in 0..100 {
        let n = rng.gen_range(3..=12);
        let targets = rng.gen_range(1..=3);
        let k = rng.gen_range(1..=3.min(n));
        let p = [0.5, 0.7, 0.9, 1.0][rng.gen_range(0..4)];
        let beliefs: Vec<CellBelief> = (0..targets).map(|_| random_belief(&mut rng, n)).collect();
        let g = team_gain(&beliefs, &greedy_select(&beliefs, k, p, &[]).unwrap(), p).unwrap();
        let opt = team_gain(&beliefs, &brute_force_select(&beliefs, k, p).unwrap(), p).unwrap();
        if g < bound * opt - 1e-12 {
            failures += 1;
        }
        ratios.push(if opt > 0.0 { g / opt } else { 1.0 });
    }
    ratios.sort_by(f64::total_cmp);
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let optimal = ratios.iter().filter(|&&r| r >= 1.0 - 1e-12).count();
    verdict(
        failures == 0,
        format!(
            "{failures}/100 below (1-1/e)·opt; ratio min {:.4}, p10 {:.4}, median {:.4}, mean {mean:.4}; {optimal}/100 optimal",
            ratios[0], ratios[10], ratios[50]
        ),
    )
}

fn overlap(a: &BatchStats, b: &BatchStats) -> bool {
    a.ci_low <= b.ci_high && b.ci_low <= a.ci_high
}

fn sweep(name: &str) -> Vec<SweepRow> {
    let path = fixtures().join(name);
    let spec = SweepSpec::load(&path).unwrap();
    assert!(spec.trials >= TRIALS);
    cmd_sweep(&spec, path.parent().unwrap(), 0).unwrap()
}

/// Adjacent points may move against `dir` only while their intervals overlap.
fn monotone(rows: &[SweepRow], dir: f64) -> (bool, String) {
    let ok = rows.windows(2).all(|w| {
        let (a, b) = (&w[0].stats, &w[1].stats);
        dir * (b.success_rate - a.success_rate) >= 0.0 || overlap(a, b)
    });
    // the swept axis is the one whose value changes between rows
    let axis = (0..rows[0].point.len())
        .find(|&k| rows.iter().any(|r| r.point[k].1 != rows[0].point[k].1))
        .unwrap_or(0);
    let shown: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{}={}: {:.3} [{:.3}, {:.3}]",
                r.point[axis].0.as_str(),
                r.point[axis].1,
                r.stats.success_rate,
                r.stats.ci_low,
                r.stats.ci_high
            )
        })
        .collect();
    (ok, shown.join("; "))
}

fn trends() -> Verdict {
    let (a, da) = monotone(&sweep("sweep_uavs.toml"), 1.0);
    let (b, db) = monotone(&sweep("sweep_targets.toml"), -1.0);
    let (c, dc) = monotone(&sweep("sweep_delay.toml"), -1.0);
    let tag = |ok: bool| if ok { "ok" } else { "VIOLATED" };
    verdict(
        a && b && c,
        format!(
            "(a) UAVs {}: {da}\n      (b) targets {}: {db}\n      (c) delay {}: {dc}",
            tag(a),
            tag(b),
            tag(c)
        ),
    )
}

fn with_policy(base: &Scenario, kind: PolicyKind) -> Scenario {
    let mut s = base.clone();
    s.set_policy(PolicyConfig {
        policy: kind,
        ..s.config.policy.clone()
    })
    .unwrap();
    s
}

fn rate(scn: &Scenario, kind: PolicyKind, seed: u64) -> BatchStats {
    omega_core::batch::run_batch(&with_policy(scn, kind), TRIALS, seed, 0)
        .unwrap()
        .stats
}

fn dominance(
    scn: &Scenario,
    ours: PolicyKind,
    baselines: &[PolicyKind],
    seed: u64,
) -> Verdict {
    let mine = rate(scn, ours, seed);
    let mut pass = true;
    let mut parts = vec![format!(
        "{} {:.3} [{:.3}, {:.3}]",
        ours.as_str(),
        mine.success_rate,
        mine.ci_low,
        mine.ci_high
    )];
    for &b in baselines {
        let other = rate(scn, b, seed);
        let ok = mine.success_rate >= other.success_rate - other.half_width();
        pass &= ok;
        parts.push(format!(
            "{} {:.3} ± {:.3}{}",
            b.as_str(),
            other.success_rate,
            other.half_width(),
            if ok { "" } else { " (NOT dominated)" }
        ));
    }
    parts.push(format!("{TRIALS} trials each, common seeds"));
    verdict(pass, parts.join("; "))
}

fn omega(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_omega"))
        .args(args)
        .output()
        .expect("omega binary runs");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let known = fixtures().join("known.toml");
    let sweep_file = dir.path().join("sweep.toml");
    std::fs::write(
        &sweep_file,
        format!(
            "scenario = {:?}\ntrials = 12\nseed = 5\n[axes]\nn_uavs = [1, 3]\ndelay_km = [5.0, 8.0]\n",
            known.display().to_string()
        ),
    )
    .unwrap();
    let read = |p: &Path| std::fs::read(p).unwrap();
    let mut runs = Vec::new();
    let mut sweeps = Vec::new();
    for (i, jobs) in ["1", "8", "1"].into_iter().enumerate() {
        let run_csv = dir.path().join(format!("run_{i}.csv"));
        omega(&[
            "run",
            known.to_str().unwrap(),
            "--trials",
            "24",
            "--seed",
            "42",
            "--jobs",
            jobs,
            "--out",
            run_csv.to_str().unwrap(),
        ]);
        runs.push(read(&run_csv));
        let out = dir.path().join(format!("sweep_{i}"));
        omega(&[
            "sweep",
            sweep_file.to_str().unwrap(),
            "--seed",
            "42",
            "--jobs",
            jobs,
            "--out",
            out.to_str().unwrap(),
        ]);
        sweeps.push(read(&out.join("sweep.csv")));
    }
    let same = |v: &[Vec<u8>]| v.iter().all(|x| x == &v[0]);
    verdict(
        same(&runs) && same(&sweeps) && !runs[0].is_empty(),
        format!(
            "run CSV ({} bytes) and sweep CSV ({} bytes) identical across --jobs 1, 8, 1",
            runs[0].len(),
            sweeps[0].len()
        ),
    )
}

fn main() {
    let known = Scenario::load(&fixtures().join("known.toml")).expect("known fixture");
    let mut all = true;
    let mut report = |n: usize, name: &str, v: Verdict| {
        all &= v.pass;
        println!(
            "{} [{n}] {name}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
    };
    report(1, "two-cell example gains", two_cell_example());
    report(2, "certain-detection first pick", first_pick_is_argmax());
    report(3, "normalization", normalization(&known));
    report(4, "greedy vs exhaustive optimum", greedy_vs_oracle());
    report(5, "success-rate trends", trends());
    report(
        6,
        "policy dominance, known strategy",
        dominance(
            &known,
            PolicyKind::OmegaGeneral,
            &[PolicyKind::MaxAvgProb, PolicyKind::EntropyOnly],
            606,
        ),
    );
    let unknown = Scenario::load(&fixtures().join("unknown.toml")).expect("unknown fixture");
    report(
        7,
        "held-out strategies",
        dominance(&unknown, PolicyKind::Adaptive, &[PolicyKind::EntropyOnly], 707),
    );
    report(8, "determinism across invocations and workers", determinism());
    if !all {
        std::process::exit(1);
    }
}
