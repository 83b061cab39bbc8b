//! Acceptance run: eight criteria, one PASS/FAIL line each. Exits nonzero
//! when any criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use nalgebra::DVector;
use pcc_cbf::dynamics::mass_matrix;
use pcc_cbf::sim::{run_scenario, Controller, ControllerMode, Scenario, TrajectoryLog};
use pcc_cbf_cli::commands;
use pcc_cbf_cli::config::{Overrides, ScenarioFile, WaypointSection};
use pcc_cbf_cli::csvlog::write_log;

struct Outcome {
    pass: bool,
    detail: String,
}

fn bundled() -> ScenarioFile {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../cli/scenarios/paper_sim.cfg");
    ScenarioFile::load(&path).expect("bundled scenario parses")
}

fn scenario(file: &ScenarioFile) -> Scenario {
    file.to_scenario().expect("valid scenario")
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn run(s: &Scenario) -> TrajectoryLog {
    run_scenario(s).unwrap_or_else(|e| panic!("{} run failed: {e}", s.mode.as_str()))
}

fn min_b(log: &TrajectoryLog) -> f64 {
    log.min_barrier().expect("non-empty log").0
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "ok"
    } else {
        "MISSED"
    }
}

fn criterion_1(log: &TrajectoryLog, elapsed: Duration) -> Outcome {
    let closest = log.records.iter().flat_map(|r| r.b.iter()).map(|b| b.abs()).fold(f64::INFINITY, f64::min);
    let lowest = min_b(log);
    let final_rate = log.final_rate_norm().unwrap();
    let a = closest <= 2e-3;
    let b = lowest >= -5e-4;
    let c = final_rate < 1e-3;
    let t = elapsed.as_secs_f64() < 30.0;
    Outcome {
        pass: a && b && c && t,
        detail: format!(
            "(a) closest |b| {closest:.3e} m <= 2e-3 {}; (b) min b {lowest:+.4e} m >= -5e-4 {}; \
             (c) final |qdot| {final_rate:.3e} < 1e-3 {}; runtime {:.1} s < 30 {}",
            verdict(a),
            verdict(b),
            verdict(c),
            elapsed.as_secs_f64(),
            verdict(t)
        ),
    }
}

fn temp_csv(tag: &str) -> PathBuf {
    std::env::temp_dir().join(format!("pcc-cbf-acceptance-{}-{tag}.csv", std::process::id()))
}

fn criterion_2(cbf: &TrajectoryLog, pd: &TrajectoryLog, n_segments: usize) -> Outcome {
    let lowest = min_b(pd);
    let pass = lowest < -2e-3;
    // the torque ratio goes through the same CSV files and comparison the
    // command line uses
    let paths = [temp_csv("cbf"), temp_csv("pd")];
    for (log, path) in [cbf, pd].into_iter().zip(&paths) {
        write_log(log, n_segments, std::fs::File::create(path).unwrap()).unwrap();
    }
    let mut sink = Vec::new();
    let ratio = commands::compare(&paths[0], &paths[1], &mut sink).map(|c| c.ratio);
    for p in &paths {
        let _ = std::fs::remove_file(p);
    }
    let ratio = match ratio {
        Ok(r) => format!("{r:.4}"),
        Err(e) => format!("unavailable ({e})"),
    };
    Outcome {
        pass,
        detail: format!(
            "pd_plus min b {lowest:+.4e} m < -2e-3 {}; steady-state |tau| ratio cbf_qp / pd_plus = {ratio}",
            verdict(pass)
        ),
    }
}

fn worst_torque_gap(file: &ScenarioFile) -> (f64, usize) {
    let mut cbf_file = file.clone();
    cbf_file.apply(&Overrides { mode: Some(ControllerMode::CbfQp), ..Overrides::default() });
    let mut pd_file = file.clone();
    pd_file.apply(&Overrides { mode: Some(ControllerMode::PdPlus), ..Overrides::default() });
    let cbf = run(&scenario(&cbf_file));
    let pd = run(&scenario(&pd_file));
    let gap = cbf.records.iter().zip(&pd.records).map(|(a, b)| (&a.tau - &b.tau).norm()).fold(0.0, f64::max);
    (gap, cbf.len())
}

fn criterion_3() -> Outcome {
    // a step to a compressed, unbent set point
    let mut step = bundled();
    step.reference.set_point = Some(vec![0.0, 0.0, -0.005, 0.0, 0.0, -0.005]);
    // a bent set point reached through a slow rest-to-rest profile
    let mut profile = bundled();
    profile.reference.set_point = None;
    profile.reference.waypoints = Some(vec![
        WaypointSection { t: 0.0, q: vec![0.0; 6] },
        WaypointSection { t: 4.0, q: vec![0.004, 0.0, -0.003, 0.0, 0.003, 0.001] },
    ]);
    profile.sim.t_final = 5.0;
    let (gap_step, n_step) = worst_torque_gap(&step);
    let (gap_profile, n_profile) = worst_torque_gap(&profile);
    let pass = gap_step <= 1e-8 && gap_profile <= 1e-8;
    Outcome {
        pass,
        detail: format!(
            "max |tau_cbf - tau_pd+| over {n_step} steps (axial step) {gap_step:.3e}, over {n_profile} steps \
             (bending profile) {gap_profile:.3e}; <= 1e-8 {}",
            verdict(pass)
        ),
    }
}

fn criterion_4() -> Outcome {
    let (r, elapsed) = timed(|| common::oracles::jacobian_report(1));
    let pass = r.configs >= 100
        && r.small_angle_configs > 0
        && r.worst_jacobian <= 1e-6
        && r.worst_jacobian_rate <= 1e-5
        && elapsed.as_secs_f64() < 5.0;
    Outcome {
        pass,
        detail: format!(
            "{} configs ({} with theta < 1e-6); J rel err {:.2e} <= 1e-6, Jdot rel err {:.2e} <= 1e-5; runtime {:.2} s < 5",
            r.configs,
            r.small_angle_configs,
            r.worst_jacobian,
            r.worst_jacobian_rate,
            elapsed.as_secs_f64()
        ),
    }
}

fn criterion_5() -> Outcome {
    let ((symmetric, spd, skew, residual, rise), elapsed) = timed(|| {
        let mut symmetric = true;
        let mut spd = true;
        let mut skew: f64 = 0.0;
        let mut residual: f64 = 0.0;
        for (n, seed) in [(2, 500), (3, 510)] {
            let (model, states) = common::oracles::dynamics_cases(n, seed);
            for (q, _) in &states {
                let m = mass_matrix(q, &model).unwrap();
                symmetric &= m == m.transpose();
                spd &= m.clone().cholesky().is_some();
            }
            skew = skew.max(common::oracles::worst_skew_ratio(&model, &states, seed + 1));
            residual = residual.max(common::oracles::worst_forward_residual(&model, &states, seed + 2));
        }
        (symmetric, spd, skew, residual, common::oracles::worst_energy_rise(520))
    });
    let pass = symmetric && spd && skew <= 1e-8 && residual <= 1e-10 && rise <= 0.0 && elapsed.as_secs_f64() < 10.0;
    Outcome {
        pass,
        detail: format!(
            "M symmetric {symmetric}, SPD {spd}; |x'(Mdot - 2C)x| scaled {skew:.2e} <= 1e-8; \
             forward residual {residual:.2e} <= 1e-10; largest energy step {rise:+.2e} J <= 0; runtime {:.2} s < 10",
            elapsed.as_secs_f64()
        ),
    }
}

fn criterion_6() -> Outcome {
    let (r, elapsed) = timed(|| common::oracles::qp_report(100, 1000));
    let pass = r.status_mismatches == 0
        && r.worst_objective_gap <= 1e-8
        && r.worst_kkt <= 1e-8
        && elapsed.as_secs_f64() < 60.0;
    Outcome {
        pass,
        detail: format!(
            "{} problems ({} optimal, {} infeasible), status mismatches {}; objective gap {:.2e} <= 1e-8; \
             KKT violation {:.2e} <= 1e-8; runtime {:.2} s < 60",
            r.problems,
            r.optimal,
            r.infeasible,
            r.status_mismatches,
            r.worst_objective_gap,
            r.worst_kkt,
            elapsed.as_secs_f64()
        ),
    }
}

fn criterion_7(coarse: &TrajectoryLog) -> Outcome {
    let mut file = bundled();
    file.apply(&Overrides { control_dt: Some(1e-4), ..Overrides::default() });
    let fine = run(&scenario(&file));
    let v_coarse = (-min_b(coarse)).max(0.0);
    let v_fine = (-min_b(&fine)).max(0.0);
    let pass = v_fine * 5.0 <= v_coarse;
    let shrink = if v_fine > 0.0 { format!("{:.2}x", v_coarse / v_fine) } else { "complete".into() };
    Outcome {
        pass,
        detail: format!(
            "worst violation {v_coarse:.4e} m at dt 1e-3, {v_fine:.4e} m at dt 1e-4; shrink {shrink} >= 5x {}",
            verdict(pass)
        ),
    }
}

fn criterion_8(s: &Scenario, log: &TrajectoryLog) -> Outcome {
    let mut controller = Controller::new();
    let mut times: Vec<f64> = log
        .records
        .iter()
        .step_by(10)
        .map(|r| {
            let start = Instant::now();
            controller.step(&r.q, &r.qdot, r.t, s).expect("control step");
            start.elapsed().as_secs_f64() * 1e3
        })
        .collect();
    times.sort_by(f64::total_cmp);
    let median = times[times.len() / 2];
    let pass = median <= 20.0;
    Outcome {
        pass,
        detail: format!(
            "median control step {median:.4} ms over {} states (max {:.4} ms); <= 20 ms {}",
            times.len(),
            times[times.len() - 1],
            verdict(pass)
        ),
    }
}

fn main() {
    let file = bundled();
    let cbf_scenario = scenario(&file);
    assert_eq!(cbf_scenario.mode, ControllerMode::CbfQp);
    assert_eq!(cbf_scenario.q0, DVector::zeros(6));
    let (cbf, cbf_time) = timed(|| run(&cbf_scenario));
    let mut pd_file = file.clone();
    pd_file.apply(&Overrides { mode: Some(ControllerMode::PdPlus), ..Overrides::default() });
    let pd = run(&scenario(&pd_file));

    let outcomes = [
        ("bundled scenario reproduction", criterion_1(&cbf, cbf_time)),
        ("unfiltered-controller contrast", criterion_2(&cbf, &pd, cbf_scenario.model.n_segments())),
        ("pass-through exactness", criterion_3()),
        ("Jacobian oracle suite", criterion_4()),
        ("dynamics structure suite", criterion_5()),
        ("QP oracle equivalence", criterion_6()),
        ("discretization-invariance trend", criterion_7(&cbf)),
        ("loop-rate budget", criterion_8(&cbf_scenario, &cbf)),
    ];
    let mut passed = 0;
    for (k, (name, o)) in outcomes.iter().enumerate() {
        passed += usize::from(o.pass);
        println!("criterion {} {name}: {} | {}", k + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("{passed}/{} criteria passed", outcomes.len());
    if passed != outcomes.len() {
        std::process::exit(1);
    }
}
