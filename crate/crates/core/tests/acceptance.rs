//! End-to-end acceptance checks. Runs as a plain binary so every criterion
//! prints exactly one PASS/FAIL line, then exits non-zero if any failed.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spectral_consistency::consistency::{run_comparison_cycle, ConsistencyConfig, RobotConsistencyState};
use spectral_consistency::optimizer::{residual, residual_and_jacobians, OptimizationProblem, SolverConfig};
use spectral_consistency::pose_graph::{
    default_odometry_information, inject_drift, EdgeKind, PoseEdge, PoseNode, Stamped, Trajectory,
};
use spectral_consistency::se3::{exp_map, Pose, Twist};
use spectral_consistency::server::GlobalGraphMessage;
use spectral_consistency::sim::{emit_report, report_json, run_scenario, RunReport, ScenarioConfig};
use spectral_consistency::spectral::{
    build_graph, decompose, gft, kron_reduce, kron_reduce_nodes, laplacian, make_meyer_bank, reduction_keep_count,
    WeightedGraph, MAX_SCALES,
};

const ROW_SUM_TOL: f64 = 1e-10;
const PARSEVAL_TOL: f64 = 1e-8;
const FRAME_RATIO_MAX: f64 = 1.05;
const SCHUR_TOL: f64 = 1e-12;
const RESISTANCE_TOL: f64 = 1e-9;
const DRIFT_RATIO_MAX: f64 = 0.4;
const DEGENERACY_RATIO_MAX: f64 = 0.5;
const ADJACENT_SHARE_MIN: f64 = 0.5;
const REDUCED_RATIO_MAX: f64 = 0.7;
const BLAME_HOPS: usize = 2;
const BLAME_HIT_RATE: f64 = 0.9;
const TRIALS: usize = 20;
const JACOBIAN_TOL: f64 = 1e-5;
const SOLVE_TOL: f64 = 1e-8;

/// Robot whose odometry is corrupted in the drift and corridor scenarios.
const FAULTY_ROBOT: u32 = 1;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn scenario(name: &str) -> ScenarioConfig {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "scenarios", name].iter().collect();
    ScenarioConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn node(id: u64, t: f64, pose: Pose) -> PoseNode {
    PoseNode::new(id, 0, 0, t, pose)
}

fn random_pose(rng: &mut ChaCha8Rng, trans: f64, rot: f64) -> Pose {
    let v = Vector6::from_fn(|k, _| rng.random_range(-1.0..1.0) * if k < 3 { trans } else { rot });
    exp_map(&Twist::from_vector(&v))
}

/// Random weighted graph made of `parts` connected components.
fn random_graph(rng: &mut ChaCha8Rng, n: usize, parts: usize) -> WeightedGraph {
    let mut a = DMatrix::zeros(n, n);
    let part_of = |i: usize| i * parts / n;
    for i in 1..n {
        // Spanning tree inside each component, then a few chords.
        let first = (0..i).find(|&j| part_of(j) == part_of(i));
        if let Some(lo) = first {
            let j = rng.random_range(lo..i);
            let w = rng.random_range(0.1..2.0);
            a[(i, j)] = w;
            a[(j, i)] = w;
        }
    }
    for _ in 0..n {
        let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
        if i != j && part_of(i) == part_of(j) {
            let w = rng.random_range(0.1..2.0);
            a[(i, j)] = w;
            a[(j, i)] = w;
        }
    }
    let nodes = (0..n).map(|i| node(i as u64, i as f64, Pose::identity())).collect();
    WeightedGraph::new(a, nodes).expect("valid random graph")
}

fn a1_spectral() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut worst_row, mut worst_parseval, mut worst_frame) = (0.0f64, 0.0f64, 0.0f64);
    let mut min_eig = f64::INFINITY;
    let mut signals = 0;
    for g in 0..20 {
        let n = rng.random_range(20..=200);
        let parts = 1 + g % 3;
        let graph = random_graph(&mut rng, n, parts);
        let l = laplacian(&graph);
        for r in 0..n {
            worst_row = worst_row.max(l.row(r).sum().abs());
        }
        let d = decompose(&l).map_err(|e| e.to_string())?;
        let scale = d.lambda_max();
        min_eig = min_eig.min(d.eigenvalues.min() / scale);
        let zeros = d.eigenvalues.iter().filter(|&&v| v.abs() < 1e-9 * scale).count();
        if zeros != graph.component_count() || zeros != parts {
            return Err(format!("graph {g}: {zeros} zero eigenvalues for {parts} components"));
        }
        for _ in 0..5 {
            let x = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let xh = gft(&d, &x).map_err(|e| e.to_string())?;
            worst_parseval = worst_parseval.max((xh.norm() - x.norm()).abs());
            signals += 1;
        }
        let bank = make_meyer_bank(scale, MAX_SCALES).map_err(|e| e.to_string())?;
        let (lo, hi) = bank.frame_bounds(10_000);
        worst_frame = worst_frame.max(hi / lo);
    }
    check(
        worst_row < ROW_SUM_TOL && min_eig > -1e-12 && worst_parseval < PARSEVAL_TOL && worst_frame <= FRAME_RATIO_MAX,
        format!(
            "row sum {worst_row:.1e}, min eigenvalue/lambda_max {min_eig:.1e}, Parseval {worst_parseval:.1e} over {signals} signals, frame B/A {worst_frame:.4}"
        ),
    )
}

/// `(e_i - e_j)ᵀ L⁺ (e_i - e_j)`.
fn resistance(pinv: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    pinv[(i, i)] + pinv[(j, j)] - 2.0 * pinv[(i, j)]
}

fn a2_kron() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let (mut worst_schur, mut worst_res) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let n = rng.random_range(3..=10);
        let graph = random_graph(&mut rng, n, 1);
        let keep_count = rng.random_range(2..n);
        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let mut keep = order[..keep_count].to_vec();
        keep.sort_unstable();
        let drop: Vec<usize> = (0..n).filter(|i| !keep.contains(i)).collect();

        let l = laplacian(&graph);
        let pick = |rows: &[usize], cols: &[usize]| DMatrix::from_fn(rows.len(), cols.len(), |r, c| l[(rows[r], cols[c])]);
        let l_dd_inv = pick(&drop, &drop).try_inverse().ok_or("singular eliminated block")?;
        let schur = pick(&keep, &keep) - pick(&keep, &drop) * l_dd_inv * pick(&drop, &keep);

        let reduced = kron_reduce_nodes(&graph, &keep).map_err(|e| e.to_string())?;
        let lr = laplacian(&reduced);
        worst_schur = worst_schur.max((&lr - &schur).abs().max());

        let pinv_full = l.clone().pseudo_inverse(1e-10).map_err(|e| e.to_string())?;
        let pinv_red = lr.pseudo_inverse(1e-10).map_err(|e| e.to_string())?;
        for a in 0..keep.len() {
            for b in (a + 1)..keep.len() {
                let diff = resistance(&pinv_full, keep[a], keep[b]) - resistance(&pinv_red, a, b);
                worst_res = worst_res.max(diff.abs());
            }
        }
    }

    // A 192-node graph reduced by 20/40/60 percent.
    let poses: Vec<PoseNode> = (0..192)
        .map(|i| {
            let a = i as f64 * 0.05;
            node(i, i as f64, Pose::from_yaw(20.0 * a.cos(), 20.0 * a.sin(), 0.0, a))
        })
        .collect();
    let g = build_graph(&poses, 7.0, 3.0, &Default::default()).map_err(|e| e.to_string())?;
    let mut sizes = Vec::new();
    for fraction in [0.2, 0.4, 0.6] {
        let keep = reduction_keep_count(192, 0, fraction).ok_or("no reduction")?;
        sizes.push(kron_reduce(&g, keep).map_err(|e| e.to_string())?.len());
    }
    check(
        worst_schur < SCHUR_TOL && worst_res < RESISTANCE_TOL && sizes == [153, 115, 76],
        format!("Schur {worst_schur:.1e}, resistance {worst_res:.1e}, 192 nodes -> {sizes:?}"),
    )
}

fn run(cfg: &ScenarioConfig) -> RunReport {
    run_scenario(cfg).unwrap_or_else(|e| panic!("scenario seed {} failed: {e}", cfg.seed))
}

fn faulty(report: &RunReport) -> (f64, f64) {
    let r = report.robot(FAULTY_ROBOT).expect("faulty robot present");
    (r.onboard_rmse, r.corrected_rmse)
}

fn a3_drift() -> Outcome {
    let base = scenario("drift.toml");
    let drift = &base.robots[FAULTY_ROBOT as usize].drift[0];
    if base.robots.len() != 2
        || base.duration != 600.0
        || drift.end - drift.start != 60.0
        || base.comparison.period != 20.0
        || base.consistency.top_k != 15
    {
        return Err("drift scenario does not match the protocol".into());
    }
    let reports: Vec<RunReport> = std::thread::scope(|s| {
        let handles: Vec<_> = (1..=5u64)
            .map(|seed| {
                let cfg = ScenarioConfig { seed, ..base.clone() };
                s.spawn(move || run(&cfg))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("run thread")).collect()
    });
    let (on, co): (Vec<f64>, Vec<f64>) = reports.iter().map(faulty).unzip();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let ratio = mean(&co) / mean(&on);
    check(
        ratio <= DRIFT_RATIO_MAX,
        format!("onboard {:.3} m, corrected {:.3} m, ratio {ratio:.3} over 5 seeds", mean(&on), mean(&co)),
    )
}

fn a4_degeneracy() -> Outcome {
    let cfg = scenario("corridor.toml");
    let w = &cfg.robots[FAULTY_ROBOT as usize].degeneracy[0];
    if w.beta != 0.0 {
        return Err("corridor scenario must use beta = 0".into());
    }
    let report = run(&cfg);
    let (on, co) = faulty(&report);
    let census = report.census_in_window(FAULTY_ROBOT, w.start, w.end);
    let share = census.adjacent as f64 / census.total().max(1) as f64;
    check(
        co <= DEGENERACY_RATIO_MAX * on && census.total() > 0 && share >= ADJACENT_SHARE_MIN,
        format!(
            "onboard {on:.3} m, corrected {co:.3} m, ratio {:.3}; window constraints {} ({:.0}% adjacent)",
            co / on,
            census.total(),
            100.0 * share
        ),
    )
}

fn a5_reduction() -> Outcome {
    let base = scenario("drift.toml");
    let fractions = [0.0, 0.2, 0.4, 0.6];
    let reports: Vec<RunReport> = std::thread::scope(|s| {
        let handles: Vec<_> = fractions
            .iter()
            .map(|&fraction| {
                let mut cfg = base.clone();
                if fraction > 0.0 {
                    cfg.server.reduction_threshold = 0;
                    cfg.server.reduction_fraction = fraction;
                } else {
                    cfg.server.reduction_threshold = usize::MAX;
                }
                s.spawn(move || run(&cfg))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("run thread")).collect()
    });
    let counts: Vec<usize> = reports.iter().map(|r| r.census.total()).collect();
    let reduced_ok = reports[1..].iter().all(|r| r.broadcasts.iter().any(|b| b.reduced));
    let (on, co) = faulty(&reports[3]);
    check(
        counts.windows(2).all(|w| w[1] <= w[0]) && reduced_ok && co <= REDUCED_RATIO_MAX * on,
        format!("constraint counts {counts:?}; at 60% corrected/onboard {:.3}", co / on),
    )
}

/// Index of the node with the largest finest-band distance when odometry
/// starts drifting right after node `onset`.
fn blame(onset: usize, rng: &mut ChaCha8Rng) -> Result<usize, String> {
    let n = 100;
    let curvature = rng.random_range(-0.02..0.02);
    let rate = rng.random_range(0.03..0.08);
    let mut pose = Pose::identity();
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 {
            pose = pose.compose(&Pose::from_yaw(1.0, 0.0, 0.0, curvature));
        }
        samples.push(Stamped::new(i as f64, pose));
    }
    let truth = Trajectory::new(samples).map_err(|e| e.to_string())?;
    let bias = Twist::new(Vector3::new(rate, 0.5 * rate, 0.0), Vector3::zeros());
    let drifted = inject_drift(&truth, onset as f64, n as f64, &bias);
    let nodes = |t: &Trajectory| -> Vec<PoseNode> {
        t.samples().iter().enumerate().map(|(i, s)| node(i as u64, s.t, s.pose)).collect()
    };
    let msg = GlobalGraphMessage {
        version: 1,
        timestamp: n as f64,
        nodes: nodes(&truth),
    };
    let mut state = RobotConsistencyState::new(0);
    let out =
        run_comparison_cycle(&msg, &nodes(&drifted), &mut state, &ConsistencyConfig::default()).map_err(|e| e.to_string())?;
    let d = out.distances.ok_or("cycle produced no distances")?;
    Ok((0..d.num_nodes()).max_by(|&a, &b| d.get(a, 1).total_cmp(&d.get(b, 1))).unwrap_or(0))
}

fn a6_blame() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let trials = TRIALS;
    let mut hits = 0;
    let mut misses = Vec::new();
    for _ in 0..trials {
        let onset = rng.random_range(10..90);
        let peak = blame(onset, &mut rng)?;
        if peak.abs_diff(onset) <= BLAME_HOPS {
            hits += 1;
        } else {
            misses.push((onset, peak));
        }
    }
    let rate = hits as f64 / trials as f64;
    check(rate >= BLAME_HIT_RATE, format!("{hits}/{trials} within {BLAME_HOPS} hops; misses (onset, peak) {misses:?}"))
}

fn a7_optimizer() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let info = default_odometry_information();

    let mut worst_jac = 0.0f64;
    let h = 1e-6;
    for _ in 0..100 {
        let (xa, xb) = (random_pose(&mut rng, 5.0, 1.5), random_pose(&mut rng, 5.0, 1.5));
        let z = xa.between(&xb).compose(&random_pose(&mut rng, 0.3, 0.3));
        let f = PoseEdge::new(0, 1, EdgeKind::Odometry, z, info);
        let (_, ja, jb) = residual_and_jacobians(&f, &xa, &xb).map_err(|e| e.to_string())?;
        for k in 0..6 {
            let step = |s: f64| {
                let mut v = Vector6::zeros();
                v[k] = s;
                exp_map(&Twist::from_vector(&v))
            };
            let diff = |a: &Pose, b: &Pose| residual(&f, a, b).expect("finite residual");
            let num_a = (diff(&xa.compose(&step(h)), &xb) - diff(&xa.compose(&step(-h)), &xb)) / (2.0 * h);
            let num_b = (diff(&xa, &xb.compose(&step(h))) - diff(&xa, &xb.compose(&step(-h)))) / (2.0 * h);
            for (num, ana) in [(num_a, ja.column(k).into_owned()), (num_b, jb.column(k).into_owned())] {
                worst_jac = worst_jac.max((num - ana).norm() / ana.norm().max(1.0));
            }
        }
    }

    let mut worst_truth = 0.0f64;
    let mut monotone = true;
    let mut solves = 0;
    for trial in 0..10 {
        let n = 8 + trial;
        let truth: Vec<Pose> = (0..n).map(|_| random_pose(&mut rng, 10.0, 3.0)).collect();
        let mut p = OptimizationProblem::new();
        for (i, t) in truth.iter().enumerate() {
            let guess = if i == 0 { *t } else { t.compose(&random_pose(&mut rng, 0.3, 0.1)) };
            p.add_variable(i as u64, guess).map_err(|e| e.to_string())?;
        }
        for i in 1..n {
            for j in [i - 1, rng.random_range(0..i)] {
                let e = PoseEdge::new(j as u64, i as u64, EdgeKind::Odometry, truth[j].between(&truth[i]), info);
                p.add_factor(e).map_err(|e| e.to_string())?;
            }
        }
        p.anchor_components();
        let report = p.optimize(&SolverConfig::default()).map_err(|e| e.to_string())?;
        monotone &= report.cost_history.windows(2).all(|w| w[1] <= w[0]);
        solves += 1;
        for (i, t) in truth.iter().enumerate() {
            worst_truth = worst_truth.max(p.variable(i as u64).expect("variable").max_abs_diff(t));
        }

        // The same graph with noisy measurements only has to descend.
        let mut noisy = OptimizationProblem::new();
        for (i, t) in truth.iter().enumerate() {
            noisy.add_variable(i as u64, t.compose(&random_pose(&mut rng, 0.5, 0.2))).map_err(|e| e.to_string())?;
        }
        for f in p.factors() {
            let z = f.measurement.compose(&random_pose(&mut rng, 0.05, 0.01));
            noisy.add_factor(PoseEdge::new(f.from_id, f.to_id, f.kind, z, info)).map_err(|e| e.to_string())?;
        }
        noisy.anchor_components();
        let report = noisy.optimize(&SolverConfig::default()).map_err(|e| e.to_string())?;
        monotone &= report.cost_history.windows(2).all(|w| w[1] <= w[0]);
        solves += 1;
    }
    check(
        worst_jac < JACOBIAN_TOL && worst_truth < SOLVE_TOL && monotone,
        format!("Jacobian {worst_jac:.1e}, noiseless error {worst_truth:.1e}, monotone over {solves} solves: {monotone}"),
    )
}

fn a8_determinism() -> Outcome {
    let cfg = scenario("corridor.toml");
    let (a, b) = (run(&cfg), run(&cfg));
    let (ja, jb) = (report_json(&a).map_err(|e| e.to_string())?, report_json(&b).map_err(|e| e.to_string())?);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    emit_report(&a, dir.path().join("a")).map_err(|e| e.to_string())?;
    emit_report(&b, dir.path().join("b")).map_err(|e| e.to_string())?;
    let read = |sub: &str| std::fs::read(dir.path().join(sub).join("report.json")).expect("report.json written");
    check(
        ja == jb && read("a") == read("b") && a.solver.monotone,
        format!("{} bytes identical across two runs", ja.len()),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, &str, fn() -> Outcome, Duration); 8] = [
        ("A1", "spectral correctness", a1_spectral, Duration::from_secs(10)),
        ("A2", "Kron reduction oracle", a2_kron, Duration::from_secs(10)),
        ("A3", "drift recovery", a3_drift, Duration::from_secs(120)),
        ("A4", "degeneracy recovery", a4_degeneracy, Duration::from_secs(120)),
        ("A5", "reduction trade-off", a5_reduction, Duration::from_secs(300)),
        ("A6", "blame localization", a6_blame, Duration::from_secs(30)),
        ("A7", "optimizer sanity", a7_optimizer, Duration::from_secs(60)),
        ("A8", "determinism", a8_determinism, Duration::from_secs(120)),
    ];
    let mut failed = 0;
    for (id, name, f, budget) in criteria {
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) => (elapsed <= budget, d),
            Err(d) => (false, d),
        };
        let verdict = if ok { "PASS" } else { "FAIL" };
        println!("{id} {verdict} {name}: {detail} [{:.1}s of {}s]", elapsed.as_secs_f64(), budget.as_secs());
        if !ok {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
