//! Adaptive Dormand-Prince 5(4) integrator with cubic Hermite dense output.

use std::ops::ControlFlow;

use crate::error::OdeError;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rtol: 1e-8,
            atol: 1e-10,
            h_max: f64::INFINITY,
            h_min: 1e-14,
            max_steps: 5_000_000,
        }
    }
}

/// One accepted step, with enough data to interpolate inside it.
pub(crate) struct Step<'a> {
    pub t0: f64,
    pub t1: f64,
    pub y0: &'a [f64],
    pub y1: &'a [f64],
    pub f0: &'a [f64],
    pub f1: &'a [f64],
}

impl Step<'_> {
    pub fn interpolate(&self, t: f64, out: &mut [f64]) {
        let h = self.t1 - self.t0;
        let s = ((t - self.t0) / h).clamp(0.0, 1.0);
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        for k in 0..out.len() {
            out[k] = h00 * self.y0[k] + h10 * h * self.f0[k] + h01 * self.y1[k] + h11 * h * self.f1[k];
        }
    }
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub max_step: f64,
    pub t_final: f64,
    pub y_final: Vec<f64>,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrates `y' = f(t, y)` from `t0` to `t_end`.
///
/// `f` returns `false` when the right-hand side cannot be evaluated
/// faithfully at the given state; the step is then rejected and retried with
/// a smaller step. The observer sees every accepted step and may stop the
/// integration early.
pub(crate) fn dopri5<F, O>(
    mut f: F,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    tol: Tolerances,
    mut observer: O,
) -> Result<Stats, OdeError>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> bool,
    O: FnMut(&Step<'_>) -> ControlFlow<()>,
{
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut stats = Stats::default();

    let mut t = t0;
    if !f(t, &y, &mut k1) {
        return Err(OdeError::StepFailure { t, h: 0.0 });
    }
    let span = t_end - t0;
    if span <= 0.0 {
        stats.t_final = t;
        stats.y_final = y;
        return Ok(stats);
    }
    let mut h = (1e-4 * span).min(tol.h_max).max(tol.h_min);
    let mut last_rejected = false;

    while t < t_end {
        if stats.accepted + stats.rejected >= tol.max_steps {
            return Err(OdeError::TooManySteps(tol.max_steps));
        }
        let mut last = false;
        if t + h >= t_end || (t_end - t - h) < 1e-12 * span {
            h = t_end - t;
            last = true;
        }
        let mut ok = true;
        macro_rules! stage {
            ($out:expr, $c:expr, $($a:expr, $k:expr),+) => {
                for i in 0..n {
                    ytmp[i] = y[i] + h * (0.0 $(+ $a * $k[i])+);
                }
                ok = ok && f(t + $c * h, &ytmp, &mut $out);
            };
        }
        stage!(k2, C2, A21, k1);
        stage!(k3, C3, A31, k1, A32, k2);
        stage!(k4, C4, A41, k1, A42, k2, A43, k3);
        stage!(k5, C5, A51, k1, A52, k2, A53, k3, A54, k4);
        stage!(k6, 1.0, A61, k1, A62, k2, A63, k3, A64, k4, A65, k5);
        for i in 0..n {
            ynew[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        ok = ok && f(t + h, &ynew, &mut k7);

        let err = if ok {
            let mut acc = 0.0;
            for i in 0..n {
                let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = tol.atol + tol.rtol * y[i].abs().max(ynew[i].abs());
                acc += (e / sc).powi(2);
            }
            (acc / n.max(1) as f64).sqrt()
        } else {
            f64::INFINITY
        };

        if err.is_finite() && err <= 1.0 {
            let step = Step {
                t0: t,
                t1: if last { t_end } else { t + h },
                y0: &y,
                y1: &ynew,
                f0: &k1,
                f1: &k7,
            };
            let flow = observer(&step);
            stats.accepted += 1;
            stats.max_step = stats.max_step.max(h);
            t = step.t1;
            std::mem::swap(&mut y, &mut ynew);
            std::mem::swap(&mut k1, &mut k7);
            if flow.is_break() {
                break;
            }
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            let fac = if last_rejected { fac.min(1.0) } else { fac };
            h = (h * fac).min(tol.h_max);
            last_rejected = false;
        } else {
            stats.rejected += 1;
            let fac = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.1, 0.9) } else { 0.25 };
            h *= fac;
            last_rejected = true;
            if h < tol.h_min {
                return Err(OdeError::StepFailure { t, h });
            }
        }
    }
    stats.t_final = t;
    stats.y_final = y;
    Ok(stats)
}
