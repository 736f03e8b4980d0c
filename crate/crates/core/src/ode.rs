//! Adaptive Dormand–Prince 5(4) integration with output at prescribed times.
//!
//! All systems in this crate are smooth, non-stiff linear ODEs, so a single
//! embedded explicit pair covers every use. Steps are truncated at each
//! requested output time, so no dense-output interpolant is needed. An
//! optional post-step projection hook supports invariant restoration
//! (frame re-orthonormalization).

use nalgebra::DVector;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OdeError {
    #[error("step count budget exceeded ({max_steps} steps) at t = {t}")]
    StepBudget { max_steps: usize, t: f64 },
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("non-finite state encountered at t = {t}")]
    NonFinite { t: f64 },
    #[error("output times must be finite and non-decreasing")]
    BadOutputTimes,
}

/// Tolerances and budgets for a single integration.
#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { rel_tol: 1e-10, abs_tol: 1e-12, max_steps: 50_000_000 }
    }
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        OdeOptions { rel_tol: tol, abs_tol: tol * 1e-2, ..Default::default() }
    }
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// 5th-order weights (same as last row of A; FSAL pair).
const B5: [f64; 7] =
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
// 4th-order embedded weights.
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrate `dy/dt = rhs(t, y)` from `t0`, returning the state at each time
/// in `t_out` (which must be non-decreasing and start at or after `t0`).
pub fn integrate_at<F>(
    mut rhs: F,
    t0: f64,
    y0: DVector<f64>,
    t_out: &[f64],
    opts: &OdeOptions,
) -> Result<Vec<DVector<f64>>, OdeError>
where
    F: FnMut(f64, &DVector<f64>) -> DVector<f64>,
{
    integrate_with_projection(&mut rhs, t0, y0, t_out, opts, |_, _| {})
}

/// Same as [`integrate_at`] but calls `project` on the state after every
/// accepted step (and at each output point) to restore invariants.
pub fn integrate_with_projection<F, P>(
    rhs: &mut F,
    t0: f64,
    y0: DVector<f64>,
    t_out: &[f64],
    opts: &OdeOptions,
    mut project: P,
) -> Result<Vec<DVector<f64>>, OdeError>
where
    F: FnMut(f64, &DVector<f64>) -> DVector<f64>,
    P: FnMut(f64, &mut DVector<f64>),
{
    if t_out.windows(2).any(|w| w[1] < w[0]) || t_out.iter().any(|t| !t.is_finite()) {
        return Err(OdeError::BadOutputTimes);
    }
    let n = y0.len();
    let mut out = Vec::with_capacity(t_out.len());
    let mut t = t0;
    let mut y = y0;
    let mut k: Vec<DVector<f64>> = (0..7).map(|_| DVector::zeros(n)).collect();
    k[0] = rhs(t, &y);
    let t_end = t_out.last().copied().unwrap_or(t0);
    let mut h = initial_step(t0, t_end, &y, &k[0], opts);
    let mut steps = 0usize;
    let mut out_idx = 0usize;

    // Emit any output points at or before t0.
    while out_idx < t_out.len() && t_out[out_idx] <= t {
        out.push(y.clone());
        out_idx += 1;
    }

    while out_idx < t_out.len() {
        if steps >= opts.max_steps {
            return Err(OdeError::StepBudget { max_steps: opts.max_steps, t });
        }
        steps += 1;

        let t_next_out = t_out[out_idx];
        let mut h_step = h.min(t_next_out - t);
        if h_step <= 0.0 {
            h_step = f64::EPSILON * t.abs().max(1.0);
        }

        // One DP5(4) attempt.
        for i in 1..7 {
            let mut yi = y.clone();
            for (j, kj) in k.iter().enumerate().take(i) {
                let a = A[i][j];
                if a != 0.0 {
                    yi.axpy(h_step * a, kj, 1.0);
                }
            }
            k[i] = rhs(t + C[i] * h_step, &yi);
        }
        let mut y5 = y.clone();
        let mut err_vec = DVector::zeros(n);
        for (i, ki) in k.iter().enumerate() {
            if B5[i] != 0.0 {
                y5.axpy(h_step * B5[i], ki, 1.0);
            }
            let d = B5[i] - B4[i];
            if d != 0.0 {
                err_vec.axpy(h_step * d, ki, 1.0);
            }
        }

        // Weighted RMS error norm.
        let mut acc = 0.0;
        for i in 0..n {
            let sc = opts.abs_tol + opts.rel_tol * y[i].abs().max(y5[i].abs());
            let e = err_vec[i] / sc;
            acc += e * e;
        }
        let err = (acc / n as f64).sqrt();
        if !err.is_finite() {
            return Err(OdeError::NonFinite { t });
        }

        if err <= 1.0 {
            t += h_step;
            y = y5;
            project(t, &mut y);
            k[0] = rhs(t, &y);
            while out_idx < t_out.len() && t_out[out_idx] <= t + 1e-12 * t.abs().max(1.0) {
                out.push(y.clone());
                out_idx += 1;
            }
        }

        // PI-free step-size update with the usual safety clamps.
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h = (h_step * factor).max(f64::EPSILON * t.abs().max(1.0) * 16.0);
        if h < f64::EPSILON * t.abs().max(1.0) * 4.0 {
            return Err(OdeError::StepUnderflow { t });
        }
    }
    Ok(out)
}

/// Merge mandatory stopping points (e.g. breakpoints of a piecewise-smooth
/// right-hand side) into a non-decreasing output-time list. Returns the
/// merged list and the index of each original output within it. Assumes
/// integration starts at `t = 0`; stops outside `(0, t_out.last())` are
/// dropped.
pub fn merge_stop_times(t_out: &[f64], stops: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let last = t_out.last().copied().unwrap_or(0.0);
    let mut stops: Vec<f64> = stops.iter().copied().filter(|&s| s > 0.0 && s < last).collect();
    stops.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut merged = Vec::with_capacity(t_out.len() + stops.len());
    let mut idx = Vec::with_capacity(t_out.len());
    let mut si = 0;
    for &t in t_out {
        while si < stops.len() && stops[si] < t {
            merged.push(stops[si]);
            si += 1;
        }
        while si < stops.len() && stops[si] == t {
            si += 1;
        }
        idx.push(merged.len());
        merged.push(t);
    }
    (merged, idx)
}

fn initial_step(
    t0: f64,
    t_end: f64,
    y0: &DVector<f64>,
    f0: &DVector<f64>,
    _opts: &OdeOptions,
) -> f64 {
    let span = (t_end - t0).abs().max(f64::EPSILON);
    let d0 = y0.norm().max(1e-8);
    let d1 = f0.norm().max(1e-8);
    (0.01 * d0 / d1).min(span / 10.0).max(span * 1e-10)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exponential_decay() {
        let y0 = DVector::from_vec(vec![1.0]);
        let t_out = [0.5, 1.0, 2.0];
        let sol = integrate_at(|_, y| -y.clone(), 0.0, y0, &t_out, &OdeOptions::default()).unwrap();
        for (t, y) in t_out.iter().zip(&sol) {
            assert_relative_eq!(y[0], (-t).exp(), epsilon = 1e-9);
        }
    }

    #[test]
    fn harmonic_oscillator_energy() {
        let y0 = DVector::from_vec(vec![1.0, 0.0]);
        let t_out: Vec<f64> = (1..=20).map(|i| i as f64).collect();
        let sol = integrate_at(
            |_, y| DVector::from_vec(vec![y[1], -y[0]]),
            0.0,
            y0,
            &t_out,
            &OdeOptions::with_tol(1e-10),
        )
        .unwrap();
        for (t, y) in t_out.iter().zip(&sol) {
            assert_relative_eq!(y[0], t.cos(), epsilon = 1e-8);
            assert_relative_eq!(y[1], -t.sin(), epsilon = 1e-8);
        }
    }

    #[test]
    fn output_at_t0_and_duplicates() {
        let y0 = DVector::from_vec(vec![2.0]);
        let t_out = [0.0, 0.0, 1.0];
        let sol = integrate_at(|_, y| y.clone(), 0.0, y0, &t_out, &OdeOptions::default()).unwrap();
        assert_eq!(sol.len(), 3);
        assert_relative_eq!(sol[0][0], 2.0);
        assert_relative_eq!(sol[1][0], 2.0);
        assert_relative_eq!(sol[2][0], 2.0 * 1.0f64.exp(), epsilon = 1e-8);
    }

    #[test]
    fn rejects_decreasing_output_times() {
        let y0 = DVector::from_vec(vec![1.0]);
        let res = integrate_at(|_, y| y.clone(), 0.0, y0, &[1.0, 0.5], &OdeOptions::default());
        assert!(matches!(res, Err(OdeError::BadOutputTimes)));
    }

    #[test]
    fn step_budget_enforced() {
        let y0 = DVector::from_vec(vec![1.0]);
        let opts = OdeOptions { max_steps: 3, ..OdeOptions::with_tol(1e-12) };
        let res = integrate_at(|_, y| y.clone(), 0.0, y0, &[100.0], &opts);
        assert!(matches!(res, Err(OdeError::StepBudget { .. })));
    }
}
