//! Exit criteria. Prints one PASS/FAIL line per criterion and fails if any
//! criterion fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use dirac_core::scenario::fixtures::{lv2, s1, zero_growth};
use dirac_core::*;

struct Outcome {
    passed: bool,
    detail: String,
}

type Check = fn() -> Outcome;

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn within_budget(elapsed: Duration, budget_s: f64) -> bool {
    elapsed.as_secs_f64() < budget_s
}

fn wkb_convergence() -> Outcome {
    let start = Instant::now();
    let s = s1();
    let study = run_study(&s, "S1", &[0.4, 0.2, 0.1, 0.05], 5.0, 0.01);
    let errors: Vec<f64> = study.rows.iter().map(|r| r.error.unwrap_or(f64::NAN)).collect();
    let decreasing = study.strictly_decreasing == Some(true);
    let last_ok = errors[3] <= 0.15;
    let elapsed = start.elapsed();
    let fast = within_budget(elapsed, 10.0);
    outcome(
        decreasing && last_ok && fast,
        format!(
            "e = {:.5?}, {}; e(0.05) <= 0.15: {last_ok}; {:.2} s",
            errors,
            study.monotonicity_note(),
            elapsed.as_secs_f64()
        ),
    )
}

fn sup_gap(s: &Scenario, vf: &ValueFunction, dt: f64) -> f64 {
    let grid = dp_solve(s, vf.t_max, dt).expect("dp oracle");
    let times: Vec<f64> = (0..=grid.steps).map(|k| grid.time(k)).collect();
    let values = vf.sample(&times);
    let mut worst: f64 = 0.0;
    for (row, w) in values.iter().zip(&grid.w) {
        for (a, b) in row.iter().zip(w) {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

fn hj_dp_agreement() -> Outcome {
    let start = Instant::now();
    let mut scenarios = vec![s1()];
    scenarios.extend(common::random_scenarios(20, 2024));
    let mut coarse: f64 = 0.0;
    let mut fine: f64 = 0.0;
    for s in &scenarios {
        let (vf, _) = evolve_hj(s, 5.0).expect("limit solve");
        coarse = coarse.max(sup_gap(s, &vf, 1e-3));
        fine = fine.max(sup_gap(s, &vf, 5e-4));
    }
    let ratio = coarse / fine;
    let elapsed = start.elapsed();
    outcome(
        coarse <= 5e-3 && ratio >= 1.8 && within_budget(elapsed, 30.0),
        format!(
            "{} scenarios, sup gap {coarse:.3e} (dt 1e-3), {fine:.3e} (dt 5e-4), ratio {ratio:.2}; {:.2} s",
            scenarios.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn hand_profile() -> Outcome {
    let s = s1();
    let (vf, log) = evolve_hj(&s, 5.0).expect("limit solve");
    let times = output_grid(5.0, 0.01);
    let mut worst: f64 = 0.0;
    for (t, v) in times.iter().zip(vf.sample(&times)) {
        worst = worst.max(v[0].abs());
        worst = worst.max((v[1] - (-0.5 - 0.2 * t).max(-1.0)).abs());
    }
    let active: Vec<f64> = log.of_kind(EventKind::ActiveSetChange).map(|e| e.time).collect();
    let one_event = active.len() == 1 && (active[0] - 2.5).abs() <= 1e-3;
    outcome(
        worst <= 1e-3 && one_event,
        format!("profile error {worst:.2e}, active-set events at {active:?}"),
    )
}

fn equilibria() -> Outcome {
    let s = s1();
    let expected = [(vec![0], 1.0), (vec![1], 0.6), (vec![0, 1], 1.0)];
    let mut f_err: f64 = 0.0;
    for (set, f) in &expected {
        let a = Subsystem::new(&s, Subset::from_indices(set.iter().copied())).unwrap();
        match equilibrium_f(&s, a) {
            Ok(v) => f_err = f_err.max((v[0] - f).abs()),
            Err(_) => f_err = f64::INFINITY,
        }
    }
    let lv = lv2();
    let rep = check_hypothesis_h(&lv, Subsystem::full(&lv));
    let lv_err = match &rep {
        Ok(r) => r
            .admissible()
            .map_or(f64::INFINITY, |e| e.u_star.iter().map(|u| (u - 2.0 / 3.0).abs()).fold(0.0, f64::max)),
        Err(_) => f64::INFINITY,
    };
    let twins = Scenario::new(
        TraitSpace::numbered(2).unwrap(),
        MutationCosts::uniform(2, 1.0).unwrap(),
        ResourceWeights::new(vec![vec![1.0, 1.0]]).unwrap(),
        GrowthModel::new(GrowthFamily::Chemostat {
            d: vec![1.0, 1.0],
            c: vec![2.0, 2.0],
            alpha: vec![1.0],
        }),
        InitialExponent::new(vec![0.0, 0.0]).unwrap(),
    )
    .unwrap();
    let degenerate = matches!(
        check_hypothesis_h(&twins, Subsystem::full(&twins)),
        Err(EquilibriumError::NonHyperbolic { .. })
    );
    outcome(
        f_err <= 1e-8 && lv_err <= 1e-10 && degenerate,
        format!("S1 F error {f_err:.1e}, LV2 error {lv_err:.1e}, symmetric twins non-hyperbolic: {degenerate}"),
    )
}

fn structural_invariants() -> Outcome {
    let mut scenarios = vec![s1(), lv2()];
    scenarios.extend(common::random_scenarios(20, 2024));
    let mut structure_fail = 0;
    let mut mass_runs = 0;
    let mut mass_fail = 0;
    let mut skipped = 0;
    let mut worst_max_zero: f64 = 0.0;
    let mut worst_cost: f64 = 0.0;
    for s in &scenarios {
        let (vf, _) = evolve_hj(s, 5.0).expect("limit solve");
        let rep = check_structure(&vf, s);
        worst_max_zero = worst_max_zero.max(rep.max_zero.worst);
        worst_cost = worst_cost.max(rep.cost_inequality.worst);
        if !rep.passed() {
            structure_fail += 1;
        }
        for eps in [0.2, 0.1] {
            if s.check_initial_mass(eps).is_err() {
                skipped += 1;
                continue;
            }
            let traj = simulate_finite(s, eps, 5.0, 0.01).expect("finite system");
            mass_runs += 1;
            if !check_mass_bounds(&traj, s).passed() {
                mass_fail += 1;
            }
        }
    }
    outcome(
        structure_fail == 0 && mass_fail == 0 && mass_runs > 0,
        format!(
            "{} scenarios: structure failures {structure_fail} (max-zero {worst_max_zero:.1e}, cost {worst_cost:.1e}); \
             mass sandwich {mass_fail}/{mass_runs} runs failed, {skipped} runs outside the initial window",
            scenarios.len()
        ),
    )
}

fn resource_plateau() -> Outcome {
    let s = s1();
    let traj = simulate_finite(&s, 0.05, 2.0, 0.01).expect("finite system");
    let f = equilibrium_f(&s, Subsystem::new(&s, Subset::singleton(0)).unwrap()).unwrap();
    let worst = traj
        .times
        .iter()
        .zip(&traj.v)
        .filter(|(t, _)| **t >= 1.0 - 1e-12)
        .map(|(_, v)| (v[0] - f[0]).abs())
        .fold(0.0, f64::max);
    outcome(worst <= 0.1, format!("sup |v - F| on [1, 2] = {worst:.4}"))
}

fn feynman_kac() -> Outcome {
    let start = Instant::now();
    let s = s1();
    let eps = 0.3;
    let traj = simulate_finite(&s, eps, 1.0, 0.001).expect("finite system");
    let sched = ResourceSchedule::from_trajectory(&traj);
    let last = traj.times.len() - 1;
    let mut ok = true;
    let mut parts = Vec::new();
    for i in 0..2 {
        let est = fk_estimate(&s, &sched, eps, 1.0, i, 100_000, 20_240).expect("estimator");
        let reference = traj.u[last][i];
        let z = (est.estimate - reference).abs() / est.std_err;
        ok &= z <= 3.0;
        parts.push(format!("trait {}: {:.5} +- {:.1e} vs {reference:.5} ({z:.2} SE)", i + 1, est.estimate, est.std_err));
    }
    let flat = zero_growth(2, 1.0, vec![0.0, 0.0]);
    let unit = fk_estimate(&flat, &ResourceSchedule::constant(vec![1.0], 1.0), eps, 1.0, 0, 100_000, 1).unwrap();
    let exact_one = unit.estimate == 1.0 && unit.std_err == 0.0;
    let elapsed = start.elapsed();
    outcome(
        ok && exact_one && within_budget(elapsed, 30.0),
        format!("{}; zero growth gives {}; {:.2} s", parts.join(", "), unit.estimate, elapsed.as_secs_f64()),
    )
}

fn ldp_slope() -> Outcome {
    let costs = MutationCosts::uniform(2, 1.0).unwrap();
    let phi = JumpPath {
        start: 0,
        jumps: vec![(0.5, 1)],
        horizon: 1.0,
    };
    let rows = ldp_point_check(&costs, &[0.05], &phi, 0.25).expect("quadrature");
    let rel = (rows[0].eps_log_p + 1.0).abs();
    let mut tails_ok = true;
    let mut parts = Vec::new();
    for n in [1, 2] {
        let tail = jump_tail(&costs, 0.5, 1.0, 0, n, 1_000_000, 77).expect("tail");
        tails_ok &= tail.frequency <= tail.bound;
        parts.push(format!("N = {n}: {:.5} <= {:.5}", tail.frequency, tail.bound));
    }
    outcome(
        rel <= 0.05 && tails_ok,
        format!("eps log P = {:.4} at eps 0.05 (rel. error {rel:.3}); {}", rows[0].eps_log_p, parts.join(", ")),
    )
}

fn hitting_time_scaling() -> Outcome {
    let s = s1();
    let a = Subsystem::full(&s);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for k in 2..=10 {
        let u1 = 10f64.powi(-k);
        match relax(&s, a, &[u1, 0.5], 0.01) {
            Ok(run) => {
                xs.push(-u1.ln());
                ys.push(run.hitting_time);
            }
            Err(e) => return outcome(false, format!("relaxation failed at u_1(0) = {u1:e}: {e}")),
        }
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r2 = sxy * sxy / (sxx * syy);
    outcome(r2 >= 0.99, format!("slope {:.4}, R^2 = {r2:.6}", sxy / sxx))
}

fn pde_sanity() -> Outcome {
    let start = Instant::now();
    let eps = 0.1;
    let run = |dx: f64| {
        let p = logistic_problem(4.0, dx, 0.075).expect("problem");
        let hist = simulate_pde(
            &p,
            PdeOptions {
                eps,
                t_max: 1.0,
                dt: 2e-4,
                dt_out: 0.01,
                diffusion: true,
            },
        )
        .expect("pde run");
        (p, hist)
    };
    let (p, hist) = run(0.02);
    let m0 = hist.mass(0);
    let logistic_err = (0..hist.times.len())
        .map(|k| (hist.mass(k) - logistic_mass(m0, eps, hist.times[k])).abs())
        .fold(0.0, f64::max);
    let bounds = check_pde_bounds(&hist, &p);
    let wkb = wkb_extract(&hist);
    let max_w_ok = wkb
        .times
        .iter()
        .zip(&wkb.max_w)
        .filter(|(t, _)| **t >= 0.5)
        .all(|(_, m)| m.abs() <= 5.0 * eps);
    let (_, fine) = run(0.01);
    let mut refine: f64 = 0.0;
    for k in 0..hist.times.len() {
        let coarse = hist.w(k);
        let finer = fine.w(k);
        for (j, w) in coarse.iter().enumerate() {
            refine = refine.max((w - finer[2 * j]).abs());
        }
    }
    let elapsed = start.elapsed();
    outcome(
        logistic_err <= 1e-3 && bounds.passed() && max_w_ok && refine < 1e-3 && within_budget(elapsed, 60.0),
        format!(
            "logistic error {logistic_err:.2e}, a priori bounds {}, max_w in [-5eps, 5eps]: {max_w_ok}, \
             grid halving {refine:.2e}; {:.2} s",
            if bounds.passed() { "hold" } else { "violated" },
            elapsed.as_secs_f64()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, Check); 10] = [
        ("WKB convergence on S1", wkb_convergence),
        ("limit solver vs dynamic programming", hj_dp_agreement),
        ("hand-derived S1 profile", hand_profile),
        ("equilibria and hypothesis H", equilibria),
        ("structural invariants", structural_invariants),
        ("resource plateau", resource_plateau),
        ("Feynman-Kac consistency", feynman_kac),
        ("large-deviation slope and jump tails", ldp_slope),
        ("hitting-time scaling", hitting_time_scaling),
        ("continuous-trait sanity", pde_sanity),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !result.passed {
            failed += 1;
        }
        println!(
            "criterion {:>2} {}: {} | {} [{:.2} s]",
            k + 1,
            if result.passed { "PASS" } else { "FAIL" },
            name,
            result.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
