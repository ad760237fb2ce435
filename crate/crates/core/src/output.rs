//! CSV writers. Every file starts with a header row.

use std::io::Write;

use csv::Writer;

use crate::equilibria::StabilityReport;
use crate::finite_ode::Trajectory;
use crate::hj::{EventLog, ValueFunction};
use crate::pde1d::{FieldHistory, WkbReport};
use crate::scenario::Scenario;
use crate::study::StudyResult;
use crate::variational::{DpGrid, JumpPath};

pub type CsvResult = Result<(), csv::Error>;

fn numbered(prefix: &str, r: usize) -> impl Iterator<Item = String> + '_ {
    (1..=r).map(move |l| format!("{prefix}_{l}"))
}

fn num(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        x.to_string()
    }
}

/// `t, trait, u, w, v_1..v_r`, one row per time and trait.
pub fn write_trajectory<W: Write>(out: W, traj: &Trajectory, s: &Scenario) -> CsvResult {
    let mut w = Writer::from_writer(out);
    let header: Vec<String> = ["t", "trait", "u", "w"].iter().map(|x| x.to_string()).chain(numbered("v", s.r())).collect();
    w.write_record(&header)?;
    for (k, &t) in traj.times.iter().enumerate() {
        for i in 0..s.n() {
            let mut row = vec![num(t), s.traits.labels()[i].clone(), num(traj.u[k][i]), num(traj.w[k][i])];
            row.extend(traj.v[k].iter().map(|&x| num(x)));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `t, kind, A_before, A_after`.
pub fn write_breakpoints<W: Write>(out: W, log: &EventLog, s: &Scenario) -> CsvResult {
    let mut w = Writer::from_writer(out);
    w.write_record(["t", "kind", "A_before", "A_after"])?;
    let labels = s.traits.labels();
    for e in &log.events {
        w.write_record([
            num(e.time),
            e.kind.as_str().to_string(),
            e.before.display_with(labels),
            e.after.display_with(labels),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `t, trait, V` on the given times.
pub fn write_value_function<W: Write>(out: W, vf: &ValueFunction, times: &[f64], s: &Scenario) -> CsvResult {
    let mut w = Writer::from_writer(out);
    w.write_record(["t", "trait", "V"])?;
    for (t, row) in times.iter().zip(vf.sample(times)) {
        for (i, v) in row.iter().enumerate() {
            w.write_record([num(*t), s.traits.labels()[i].clone(), num(*v)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `subset, trait, u_star, R_off_support, F_1..F_r`, one row per trait of
/// each subset's admissible equilibrium.
pub fn write_equilibria<W: Write>(out: W, reports: &[StabilityReport], s: &Scenario) -> CsvResult {
    let mut w = Writer::from_writer(out);
    let header: Vec<String> = ["subset", "trait", "u_star", "R_off_support"]
        .iter()
        .map(|x| x.to_string())
        .chain(numbered("F", s.r()))
        .collect();
    w.write_record(&header)?;
    let labels = s.traits.labels();
    for rep in reports {
        let Some(eq) = rep.admissible() else { continue };
        for i in rep.subset.iter() {
            let off = eq
                .off_support_rates
                .iter()
                .find(|(j, _)| *j == i)
                .map_or(String::new(), |(_, r)| num(*r));
            let mut row = vec![rep.subset.display_with(labels), labels[i].clone(), num(eq.u_star[i]), off];
            row.extend(eq.v.iter().map(|&x| num(x)));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `t, trait, W` on every `stride`-th grid row.
pub fn write_dp_grid<W: Write>(out: W, grid: &DpGrid, s: &Scenario, stride: usize) -> CsvResult {
    let mut w = Writer::from_writer(out);
    w.write_record(["t", "trait", "W"])?;
    for k in (0..=grid.steps).step_by(stride.max(1)) {
        for (i, x) in grid.w[k].iter().enumerate() {
            w.write_record([num(grid.time(k)), s.traits.labels()[i].clone(), num(*x)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `leg, state, entry_time`.
pub fn write_path<W: Write>(out: W, path: &JumpPath, s: &Scenario) -> CsvResult {
    let mut w = Writer::from_writer(out);
    w.write_record(["leg", "state", "entry_time"])?;
    let labels = s.traits.labels();
    w.write_record(["0".to_string(), labels[path.start].clone(), num(0.0)])?;
    for (k, &(t, x)) in path.jumps.iter().enumerate() {
        w.write_record([(k + 1).to_string(), labels[x].clone(), num(t)])?;
    }
    w.flush()?;
    Ok(())
}

/// `t, x, u, w` for every snapshot.
pub fn write_pde_snapshots<W: Write>(out: W, hist: &FieldHistory) -> CsvResult {
    let mut w = Writer::from_writer(out);
    w.write_record(["t", "x", "u", "w"])?;
    for (k, &t) in hist.times.iter().enumerate() {
        for (j, &x) in hist.x.iter().enumerate() {
            let u = hist.u[k][j];
            w.write_record([num(t), num(x), num(u), num(hist.eps * u.ln())])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `t, v_1..v_r, mass, max_w, argmax_x`.
pub fn write_pde_diagnostics<W: Write>(out: W, hist: &FieldHistory, wkb: &WkbReport) -> CsvResult {
    let mut w = Writer::from_writer(out);
    let r = hist.v.first().map_or(0, |v| v.len());
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain(numbered("v", r))
        .chain(["mass", "max_w", "argmax_x"].iter().map(|x| x.to_string()))
        .collect();
    w.write_record(&header)?;
    for (k, &t) in hist.times.iter().enumerate() {
        let mut row = vec![num(t)];
        row.extend(hist.v[k].iter().map(|&x| num(x)));
        row.extend([num(hist.mass(k)), num(wkb.max_w[k]), num(wkb.argmax_x[k])]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `scenario, eps, error, runtime_s, mass_bounds, failure`.
pub fn write_study<W: Write>(out: W, study: &StudyResult) -> CsvResult {
    let mut w = Writer::from_writer(out);
    w.write_record(["scenario", "eps", "error", "runtime_s", "mass_bounds", "failure"])?;
    for row in &study.rows {
        let bounds = match &row.mass_bounds {
            Some(b) if b.passed() => "pass",
            Some(_) => "fail",
            None => "",
        };
        w.write_record([
            study.scenario_id.clone(),
            num(row.eps),
            row.error.map_or(String::new(), num),
            num(row.runtime_s),
            bounds.to_string(),
            row.failure.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
