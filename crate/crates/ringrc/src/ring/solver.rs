//! Adaptive Dormand-Prince 5(4) integration of the ring state over a
//! sampled drive waveform.
//!
//! The stiffness of the problem comes from the timescale spread between
//! the photon lifetime (~5 ps) and the thermal relaxation (~100 ns).
//! The integrator substeps freely inside each input sample interval
//! (drive linearly interpolated), with the step capped at tau_ph/4 so the
//! cavity dynamics stay resolved, and records both output ports on the
//! input sample grid.

use super::{ModelCoeffs, RingError, RingOutput, RingParams, SolverSettings};
use crate::waveform::OpticalWaveform;
use num_complex::Complex64;

// Dormand-Prince 5(4) tableau. The last row of A equals the 5th-order
// weights, so the final stage of an accepted step is reused as the first
// stage of the next one (FSAL).
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [
    19372.0 / 6561.0,
    -25360.0 / 2187.0,
    64448.0 / 6561.0,
    -212.0 / 729.0,
];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const B: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
// 5th-order minus 4th-order weights, for the embedded error estimate.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const MIN_SCALE: f64 = 0.2;
const MAX_SCALE: f64 = 5.0;
const SAFETY: f64 = 0.9;

struct Stepper {
    coeffs: ModelCoeffs,
    rel_tol: f64,
    /// Per-component absolute tolerance floors derived from characteristic
    /// magnitudes, so the error norm is meaningful when a component sits
    /// near zero (e.g. carriers in the linear regime).
    atol: [f64; 4],
}

/// Running step counter with a hard cap, so pathological parameter
/// regions (probed e.g. during calibration bracketing) terminate with a
/// diagnosable error instead of stalling.
struct StepBudget {
    used: u64,
    cap: u64,
}

impl Stepper {
    /// One adaptive macro-interval: advance `y` from local time 0 to `dt`
    /// with the drive interpolating (s0 -> s1). `k1` carries the FSAL
    /// derivative from the previous call when the drive is continuous;
    /// we recompute it here because the interpolation slope changes at
    /// interval boundaries.
    #[allow(clippy::too_many_arguments)]
    fn advance_interval(
        &self,
        y: &mut [f64; 4],
        dt: f64,
        s0: Complex64,
        s1: Complex64,
        h_init: f64,
        max_step: f64,
        sample: usize,
        budget: &mut StepBudget,
    ) -> Result<f64, RingError> {
        let ds_re = (s1.re - s0.re) / dt;
        let ds_im = (s1.im - s0.im) / dt;
        let drive = |t: f64| (s0.re + ds_re * t, s0.im + ds_im * t);

        let mut t = 0.0f64;
        let mut h = h_init.min(max_step).min(dt);
        let mut k1 = {
            let (sr, si) = drive(0.0);
            self.coeffs.deriv(y, sr, si)
        };

        while t < dt {
            h = h.min(dt - t);
            if h < 1e-6 * max_step {
                return Err(RingError::StepUnderflow { sample });
            }
            budget.used += 1;
            if budget.used > budget.cap {
                return Err(RingError::StepBudgetExceeded { sample });
            }

            let mut k = [[0.0f64; 4]; 7];
            k[0] = k1;
            let stage = |k: &[[f64; 4]; 7], row: &[f64], y: &[f64; 4], h: f64| {
                let mut ys = *y;
                for (j, &a) in row.iter().enumerate() {
                    if a != 0.0 {
                        for d in 0..4 {
                            ys[d] += h * a * k[j][d];
                        }
                    }
                }
                ys
            };

            let a_rows: [&[f64]; 5] = [&A2, &A3, &A4, &A5, &A6];
            for (idx, row) in a_rows.iter().enumerate() {
                let i = idx + 1;
                let ys = stage(&k, row, y, h);
                let (sr, si) = drive(t + C[i] * h);
                k[i] = self.coeffs.deriv(&ys, sr, si);
            }

            // 5th-order solution (B row), which is also stage 7.
            let mut y_new = *y;
            for (j, &b) in B.iter().enumerate() {
                if b != 0.0 {
                    for d in 0..4 {
                        y_new[d] += h * b * k[j][d];
                    }
                }
            }
            let (sr, si) = drive(t + h);
            k[6] = self.coeffs.deriv(&y_new, sr, si);

            let mut err_sq = 0.0f64;
            for d in 0..4 {
                let mut e = 0.0;
                for (j, &w) in E.iter().enumerate() {
                    if w != 0.0 {
                        e += w * k[j][d];
                    }
                }
                e *= h;
                let w = self.atol[d] + self.rel_tol * y[d].abs().max(y_new[d].abs());
                err_sq += (e / w) * (e / w);
            }
            let err = (err_sq / 4.0).sqrt();

            if !err.is_finite() || !y_new.iter().all(|v| v.is_finite()) {
                return Err(RingError::NonFiniteState { sample });
            }

            if err <= 1.0 {
                t += h;
                *y = y_new;
                // Carriers cannot go negative; integrator error may briefly
                // undershoot, so clamp after every accepted step.
                if y[2] < 0.0 {
                    y[2] = 0.0;
                    let (sr, si) = drive(t);
                    k[6] = self.coeffs.deriv(y, sr, si);
                }
                k1 = k[6];
                let grow = if err == 0.0 {
                    MAX_SCALE
                } else {
                    (SAFETY * err.powf(-0.2)).clamp(MIN_SCALE, MAX_SCALE)
                };
                h = (h * grow).min(max_step);
            } else {
                h *= (SAFETY * err.powf(-0.2)).clamp(MIN_SCALE, 1.0);
            }
        }
        Ok(h)
    }
}

/// Integrate the ring response to a complex-field input trace.
///
/// The output traces share the input's sample grid: sample k is the port
/// field at the same instant as input sample k. Deterministic for fixed
/// inputs and settings.
pub fn integrate_trace(
    input: &OpticalWaveform,
    laser_detuning_hz: f64,
    params: &RingParams,
    solver: &SolverSettings,
) -> Result<RingOutput, RingError> {
    params.validate()?;
    solver.validate()?;
    let field = input.as_field()?;
    let dt = 1.0 / input.sample_rate;
    let max_step = solver.max_step_for(params);

    // Characteristic magnitudes at the trace's peak drive power, used as
    // absolute-tolerance floors. They scale linearly with the field, which
    // keeps the adaptive stepping (and therefore the response) scale
    // invariant in the linear regime.
    let p_peak = field.iter().map(|c| c.norm_sqr()).fold(0.0, f64::max);
    let u_char = 4.0 * params.eta_drop * params.tau_ph() * p_peak;
    let a_char = u_char.sqrt();
    let n_char = params.g_tpa * params.tau_fc * u_char * u_char;
    let t_char = params.h_abs * params.tau_th * u_char * (1.0 + n_char);
    let floor = 1e-300;
    let stepper = Stepper {
        coeffs: ModelCoeffs::new(params, laser_detuning_hz),
        rel_tol: solver.rel_tol,
        atol: [
            (1e-9 * a_char).max(floor),
            (1e-9 * a_char).max(floor),
            (1e-9 * n_char).max(floor),
            (1e-9 * t_char).max(floor),
        ],
    };

    let kappa = params.coupling_rate().sqrt();
    let mut y = [0.0f64; 4];
    let mut through = Vec::with_capacity(field.len());
    let mut drop = Vec::with_capacity(field.len());
    let record =
        |y: &[f64; 4], s: Complex64, through: &mut Vec<Complex64>, drop: &mut Vec<Complex64>| {
            let a = Complex64::new(y[0], y[1]);
            through.push(s - kappa * a);
            drop.push(kappa * a);
        };

    record(&y, field[0], &mut through, &mut drop);
    // Nominal plan is one max_step-capped march across the trace; allow
    // generous headroom for rejected steps and interval truncation before
    // declaring the integration pathological.
    let nominal = (field.len() as f64 * dt / max_step).ceil() as u64;
    let mut budget = StepBudget {
        used: 0,
        cap: 64 + field.len() as u64 + 8 * nominal,
    };
    let mut h = max_step;
    for k in 1..field.len() {
        h = stepper.advance_interval(
            &mut y,
            dt,
            field[k - 1],
            field[k],
            h,
            max_step,
            k,
            &mut budget,
        )?;
        record(&y, field[k], &mut through, &mut drop);
    }

    Ok(RingOutput {
        through: OpticalWaveform::field(through, input.sample_rate, input.t0)?,
        drop: OpticalWaveform::field(drop, input.sample_rate, input.t0)?,
    })
}
