//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::HashMap;
use std::path::Path;
use std::time::Instant;

use harq_qac::{ChannelModel, Digraph, HaltConfig, MassPair, NodeId, PacketKind, Schedule, World};
use harq_qac_cli::config::{seeded_rng, stream};
use harq_qac_cli::schedule::{example1_world, CONSENSUS_DEADLINE, EXAMPLE1_TAU_BAR};
use harq_qac_cli::{
    compare_lambda, derive_example1_schedule, run_scenario, run_sweep, ScenarioConfig, SweepConfig,
};
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::Rng;
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

const NODES: [usize; 3] = [4, 10, 20];
const RATES: [f64; 3] = [0.3, 0.6, 0.8];
const LAMBDAS: [f64; 3] = [0.0, 0.3, 1.0];
const TAU_BARS: [u32; 3] = [1, 2, 3];
const MAX_ROUNDS: u64 = 20_000;

/// One configuration of the convergence grid.
#[derive(Debug, Clone, Copy)]
struct GridPoint {
    n: usize,
    p: f64,
    lambda: f64,
    tau_bar: u32,
}

fn grid() -> Vec<GridPoint> {
    let mut out = Vec::new();
    for n in NODES {
        for p in RATES {
            for lambda in LAMBDAS {
                for tau_bar in TAU_BARS {
                    out.push(GridPoint {
                        n,
                        p,
                        lambda,
                        tau_bar,
                    });
                }
            }
        }
    }
    out
}

/// A random strongly connected world for grid point `g`.
fn random_world(g: GridPoint, seed: u64) -> World {
    let graph =
        Digraph::random_strongly_connected(g.n, 0.2, &mut seeded_rng(seed, stream::GRAPH)).unwrap();
    let mut rng = seeded_rng(seed, stream::VALUES);
    let values: Vec<i64> = (0..g.n).map(|_| rng.random_range(-50..=100)).collect();
    World::new(
        graph,
        &values,
        ChannelModel::harq(g.p, g.lambda, g.tau_bar).unwrap(),
    )
    .unwrap()
}

fn mass_conservation() -> Check {
    let points = grid();
    let violations: Vec<String> = (0..1000u64)
        .into_par_iter()
        .filter_map(|i| {
            let g = points[i as usize % points.len()];
            let seed = 0xC0FFEE + i;
            let mut world = random_world(g, seed);
            let target = world.target();
            let mut rng = seeded_rng(seed, stream::CHANNEL);
            let mut extra = 0;
            while world.round() < MAX_ROUNDS && extra < 5 {
                if world.total_mass() != target {
                    return Some(format!(
                        "run {i} round {}: {:?} != {:?}",
                        world.round(),
                        world.total_mass(),
                        target
                    ));
                }
                world.step(&mut rng).unwrap();
                if world.converged() {
                    extra += 1;
                }
            }
            (world.total_mass() != target).then(|| format!("run {i} final round"))
        })
        .collect();
    if violations.is_empty() {
        Ok("1000 runs, exact at every round".into())
    } else {
        Err(format!(
            "{} runs violated: {}",
            violations.len(),
            violations[0]
        ))
    }
}

fn convergence() -> Check {
    let points = grid();
    let jobs: Vec<(usize, u64)> = (0..points.len())
        .flat_map(|c| (0..100u64).map(move |s| (c, s)))
        .collect();
    let results: Vec<(usize, Option<u64>)> = jobs
        .par_iter()
        .map(|&(c, s)| {
            let seed = ((c as u64) << 32) | s;
            let mut world = random_world(points[c], seed);
            let trace = world
                .run(
                    HaltConfig::new(MAX_ROUNDS, 0).unwrap(),
                    &mut seeded_rng(seed, stream::CHANNEL),
                )
                .unwrap();
            let exact = trace.first_converged().is_some()
                && world.nodes().iter().all(|n| n.state() == world.target());
            (c, exact.then(|| trace.first_converged().unwrap()))
        })
        .collect();
    let failures: Vec<&(usize, Option<u64>)> = results.iter().filter(|r| r.1.is_none()).collect();
    let worst = results.iter().filter_map(|r| r.1).max().unwrap_or(0);
    if failures.is_empty() {
        Ok(format!(
            "{} runs converged, slowest {worst} rounds",
            results.len()
        ))
    } else {
        Err(format!(
            "{} of {} runs failed, first at {:?}",
            failures.len(),
            results.len(),
            points[failures[0].0]
        ))
    }
}

fn example1_replay() -> Check {
    let derivation = derive_example1_schedule();
    let shipped = Schedule::load(Path::new(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/data/example1_schedule.csv"
    )))
    .map_err(|e| e.to_string())?;
    if shipped != derivation.schedule {
        return Err("shipped schedule differs from the derivation".into());
    }
    let mut world = example1_world(ChannelModel::Scripted {
        schedule: derivation.schedule,
        max_retx: EXAMPLE1_TAU_BAR,
    });
    let mut rng = seeded_rng(0, stream::CHANNEL);
    let mut problems = Vec::new();
    let mut consensus_at = None;
    while world.round() < CONSENSUS_DEADLINE {
        world.step(&mut rng).map_err(|e| e.to_string())?;
        match world.round() {
            1 if world.node(NodeId(3)).state() != MassPair::new(6, 1) => {
                problems.push(format!("v3 at k=1 is {:?}", world.node(NodeId(3)).state()))
            }
            2 if world.node(NodeId(1)).state() != MassPair::new(8, 2) => {
                problems.push(format!("v1 at k=2 is {:?}", world.node(NodeId(1)).state()))
            }
            _ => {}
        }
        let all_avg = world
            .nodes()
            .iter()
            .all(|n| n.state() == MassPair::new(16, 4) && n.output() == 4.into());
        if all_avg && consensus_at.is_none() {
            consensus_at = Some(world.round());
        }
    }
    if consensus_at.is_none() {
        problems.push("no consensus on (16,4) by k=8".into());
    }
    if problems.is_empty() {
        Ok(format!(
            "v3 (6,1) at k=1, v1 (8,2) at k=2, all (16,4) at k={}",
            consensus_at.unwrap()
        ))
    } else {
        Err(problems.join("; "))
    }
}

fn sc1_speed() -> Check {
    let cfg = ScenarioConfig::preset("sc1").map_err(|e| e.to_string())?;
    let (mut world, _) = harq_qac_cli::scenario::build_world(&cfg).map_err(|e| e.to_string())?;
    let mut rng = seeded_rng(cfg.seed, stream::CHANNEL);
    let mut first_zero = None;
    for _ in 0..60 {
        world.step(&mut rng).map_err(|e| e.to_string())?;
        let zero = world.consensus_error() == 0.0;
        match (first_zero, zero) {
            (None, true) => first_zero = Some(world.round()),
            (Some(k), false) => {
                return Err(format!(
                    "error 0 at k={k} but nonzero again at k={}",
                    world.round()
                ))
            }
            _ => {}
        }
    }
    match first_zero {
        Some(k) if k <= 6 => Ok(format!("error reaches 0 at k={k} and stays 0 through k=60")),
        Some(k) => Err(format!("error first reaches 0 at k={k}")),
        None => Err("error never reaches 0".into()),
    }
}

fn lambda_ordering() -> Check {
    let cfg = ScenarioConfig::preset("sc2").map_err(|e| e.to_string())?;
    let res = compare_lambda(&cfg, (0.3, 1.0), 200).map_err(|e| e.to_string())?;
    let (a, b) = (
        res.median_first().unwrap_or(f64::NAN),
        res.median_second().unwrap_or(f64::NAN),
    );
    if res.failures() != (0, 0) {
        return Err(format!("non-converged runs {:?}", res.failures()));
    }
    if a <= b {
        Ok(format!("median {a} (lambda 0.3) <= {b} (lambda 1)"))
    } else {
        Err(format!("median {a} (lambda 0.3) > {b} (lambda 1)"))
    }
}

fn table_trends() -> Check {
    let cfg = SweepConfig {
        error_rates: vec![0.0, 0.2, 0.4, 0.6, 0.8],
        lambdas: vec![0.0, 0.1, 0.5, 0.8, 1.0],
        tau_bar: 3,
        replicas: 100,
        base_seed: 2024,
        nodes: 20,
        extra_edge_prob: 0.2,
        value_low: 0,
        value_high: 100,
        max_rounds: MAX_ROUNDS,
        out: None,
    };
    let res = run_sweep(&cfg).map_err(|e| e.to_string())?;
    let mut problems = Vec::new();
    if res.total_failures() > 0 {
        problems.push(format!("{} runs did not converge", res.total_failures()));
    }
    // (a) the lossless row does not depend on lambda.
    let base = &res.get(0.0, 0.0).unwrap().iterations;
    for &l in &cfg.lambdas {
        if &res.get(0.0, l).unwrap().iterations != base {
            problems.push(format!("(a) rate 0 differs at lambda {l}"));
        }
    }
    // (b) at most one adjacent decrease per lambda column.
    for &l in &cfg.lambdas {
        let medians: Vec<f64> = cfg
            .error_rates
            .iter()
            .map(|&p| res.get(p, l).unwrap().median().unwrap())
            .collect();
        let drops = medians.windows(2).filter(|w| w[1] < w[0]).count();
        if drops > 1 {
            problems.push(format!(
                "(b) lambda {l} medians {medians:?} decrease {drops} times"
            ));
        }
    }
    // (c) the lambda gap at the highest rate beats both spreads.
    let lo = res.get(0.8, 0.0).unwrap();
    let hi = res.get(0.8, 1.0).unwrap();
    let gap = hi.median().unwrap() - lo.median().unwrap();
    let spread = lo.iqr().unwrap().max(hi.iqr().unwrap());
    let summary = format!(
        "rate 0.8: median {} (lambda 0) vs {} (lambda 1), IQRs {} and {}",
        lo.median().unwrap(),
        hi.median().unwrap(),
        lo.iqr().unwrap(),
        hi.iqr().unwrap()
    );
    if gap <= spread {
        problems.push(format!("(c) gap {gap} does not exceed IQR {spread}"));
    }
    if problems.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{}; {summary}", problems.join("; ")))
    }
}

/// Per-attempt success counts for `r = 0..=tau_bar`.
fn attempt_successes(model: &ChannelModel, tau_bar: u32, samples: u64, seed: u64) -> Vec<u64> {
    let g = Digraph::example1();
    let mut rng = seeded_rng(seed, stream::CHANNEL);
    (0..=tau_bar)
        .map(|r| {
            (0..samples)
                .filter(|&i| {
                    let key = harq_qac::DeliveryKey {
                        round: i,
                        src: NodeId(1),
                        dst: NodeId(2),
                        ordinal: 0,
                    };
                    model.resolve(&g, key, r, &mut rng).unwrap().success
                })
                .count() as u64
        })
        .collect()
}

fn arq_reduction() -> Check {
    const SAMPLES: u64 = 100_000;
    let tau_bar = 3;
    let arq = ChannelModel::harq(0.6, 1.0, tau_bar).unwrap();
    let ok = attempt_successes(&arq, tau_bar, SAMPLES, 7);
    // Homogeneity of success rate across r: 2 x (tau_bar + 1) contingency table.
    let total_ok: u64 = ok.iter().sum();
    let cols = ok.len() as f64;
    let pooled = total_ok as f64 / (SAMPLES as f64 * cols);
    let stat: f64 = ok
        .iter()
        .map(|&s| {
            let (eo, ef) = (SAMPLES as f64 * pooled, SAMPLES as f64 * (1.0 - pooled));
            let f = (SAMPLES - s) as f64;
            (s as f64 - eo).powi(2) / eo + (f - ef).powi(2) / ef
        })
        .sum();
    let p_value = 1.0 - ChiSquared::new(cols - 1.0).unwrap().cdf(stat);
    let mut problems = Vec::new();
    if p_value < 0.01 {
        problems.push(format!("lambda 1: chi-square {stat:.3}, p={p_value:.4}"));
    }
    let harq = ChannelModel::harq(0.6, 0.3, tau_bar).unwrap();
    let ok = attempt_successes(&harq, tau_bar, SAMPLES, 8);
    let mut freqs = Vec::new();
    for (r, &s) in ok.iter().enumerate() {
        let freq = s as f64 / SAMPLES as f64;
        let expected = 1.0 - 0.6 * 0.3f64.powi(r as i32);
        freqs.push(format!("{freq:.4}"));
        if (freq - expected).abs() > 0.01 {
            problems.push(format!("lambda 0.3, r={r}: {freq:.4} vs {expected:.4}"));
        }
    }
    if problems.is_empty() {
        Ok(format!(
            "lambda 1 chi-square p={p_value:.3}; lambda 0.3 frequencies {}",
            freqs.join(" ")
        ))
    } else {
        Err(problems.join("; "))
    }
}

fn determinism() -> Check {
    let mut checked = 0;
    for name in ["sc1", "sc2", "sc3", "example1"] {
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        for d in &dirs {
            let mut cfg = ScenarioConfig::preset(name).map_err(|e| e.to_string())?;
            cfg.seed = 31337;
            cfg.out = Some(d.path().to_path_buf());
            run_scenario(&cfg).map_err(|e| e.to_string())?;
        }
        for file in ["states.csv", "events.csv", "metrics.csv"] {
            let a = std::fs::read(dirs[0].path().join(file)).map_err(|e| e.to_string())?;
            let b = std::fs::read(dirs[1].path().join(file)).map_err(|e| e.to_string())?;
            if a != b || a.is_empty() {
                return Err(format!("{name}/{file} differs between runs"));
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} exports byte-identical across 4 presets"))
}

/// Steps a random world and checks the protocol invariants round by round.
fn check_invariants(
    n: usize,
    p: f64,
    lambda: f64,
    tau_bar: u32,
    seed: u64,
) -> Result<(), TestCaseError> {
    let g = GridPoint {
        n,
        p,
        lambda,
        tau_bar,
    };
    let mut world = random_world(g, seed);
    let target = world.target();
    let mut rng = seeded_rng(seed, stream::CHANNEL);
    let mut prev_zs: Vec<u64> = world.nodes().iter().map(|n| n.state().z).collect();
    // (src, entry) -> (first snapshot, attempts).
    let mut entries: HashMap<(NodeId, u64), (MassPair, u32)> = HashMap::new();
    let mut fresh: Vec<Vec<NodeId>> = vec![Vec::new(); n];
    let mut converged_at = None;
    while world.round() < MAX_ROUNDS {
        let events = world.step(&mut rng).unwrap();
        for e in &events {
            prop_assert!(
                e.r <= tau_bar,
                "attempt index {} beyond limit {}",
                e.r,
                tau_bar
            );
            let slot = entries.entry((e.src, e.entry)).or_insert((e.mass, 0));
            slot.1 += 1;
            prop_assert_eq!(slot.0, e.mass, "snapshot of entry {} changed", e.entry);
            prop_assert!(
                slot.1 <= tau_bar + 1,
                "entry {} sent {} times",
                e.entry,
                slot.1
            );
            match e.kind {
                PacketKind::Fresh => {
                    prop_assert_eq!(e.r, 0);
                    fresh[e.src.index()].push(e.dst);
                }
                PacketKind::Retx => prop_assert!(e.r >= 1),
            }
        }
        for (i, node) in world.nodes().iter().enumerate() {
            let zs = node.state().z;
            prop_assert!(
                zs >= prev_zs[i] && (1..=n as u64).contains(&zs),
                "z^s of node {} went {} -> {}",
                i + 1,
                prev_zs[i],
                zs
            );
            prev_zs[i] = zs;
        }
        match converged_at {
            Some(k) => prop_assert!(
                world.converged(),
                "converged at {} but not at {}",
                k,
                world.round()
            ),
            None if world.converged() => converged_at = Some(world.round()),
            None => {}
        }
        if converged_at.is_some_and(|k| world.round() >= k + 20) {
            break;
        }
    }
    prop_assert!(converged_at.is_some(), "no convergence");
    prop_assert!(world.nodes().iter().all(|n| n.state() == target));
    for node in world.nodes() {
        let seq = &fresh[node.id().index()];
        let ports = node.ports();
        for (i, dst) in seq.iter().enumerate() {
            prop_assert_eq!(
                *dst,
                ports[i % ports.len()],
                "node {} fresh packet {} skipped a port",
                node.id(),
                i
            );
        }
        let counts: Vec<usize> = ports
            .iter()
            .map(|p| seq.iter().filter(|d| *d == p).count())
            .collect();
        let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        prop_assert!(hi - lo <= 1, "node {} fresh counts {:?}", node.id(), counts);
    }
    Ok(())
}

fn protocol_invariants() -> Check {
    let mut runner = TestRunner::new(PropConfig {
        cases: 256,
        failure_persistence: None,
        ..PropConfig::default()
    });
    let strategy = (
        2usize..=12,
        0.0f64..0.9,
        prop_oneof![Just(0.0), Just(1.0), 0.0f64..=1.0],
        0u32..=4,
        any::<u64>(),
    );
    runner
        .run(&strategy, |(n, p, lambda, tau_bar, seed)| check_invariants(n, p, lambda, tau_bar, seed))
        .map(|()| "256 random worlds: z^s monotone in [1, n], snapshots immutable, attempts <= tau_bar+1, round-robin balanced, convergence persists".into())
        .map_err(|e| e.to_string())
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 mass conservation", mass_conservation),
        ("2 finite-time convergence", convergence),
        ("3 example replay", example1_replay),
        ("4 ideal channel speed", sc1_speed),
        ("5 lambda ordering", lambda_ordering),
        ("6 error-rate/lambda trends", table_trends),
        ("7 ARQ reduction", arq_reduction),
        ("8 determinism", determinism),
        ("9 protocol invariants", protocol_invariants),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("PASS  criterion {name} ({secs:.1}s): {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL  criterion {name} ({secs:.1}s): {msg}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
