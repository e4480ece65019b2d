//! Bessel low-pass filters for the modulator drive and the photodetector
//! front end.
//!
//! The analog prototype is derived from the reverse Bessel polynomial
//! (maximally flat group delay), renormalized so the -3 dB point lands on
//! the requested cutoff, then discretized with a prewarped bilinear
//! transform into a cascade of biquads. Deriving the poles numerically
//! avoids hardcoded pole tables and works for any order up to 8.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("filter order must be in 1..=8, got {0}")]
    BadOrder(u32),
    #[error("cutoff {cutoff_hz} Hz must be positive and below Nyquist ({nyquist_hz} Hz)")]
    BadCutoff { cutoff_hz: f64, nyquist_hz: f64 },
}

/// One second-order section, coefficients normalized so a0 = 1.
#[derive(Debug, Clone, Copy)]
struct Biquad {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
}

impl Biquad {
    /// Bilinear transform of the unity-DC-gain analog section
    /// c / (s^2 + beta s + c), with prewarp constant `k`.
    fn from_pole_pair(re: f64, norm_sqr: f64, k: f64) -> Self {
        let beta = -2.0 * re;
        let c = norm_sqr;
        let a0 = k * k + beta * k + c;
        Biquad {
            b0: c / a0,
            b1: 2.0 * c / a0,
            b2: c / a0,
            a1: (2.0 * c - 2.0 * k * k) / a0,
            a2: (k * k - beta * k + c) / a0,
        }
    }

    /// First-order section g / (s + g) embedded in biquad form.
    fn from_real_pole(pole: f64, k: f64) -> Self {
        let g = -pole;
        let a0 = k + g;
        Biquad {
            b0: g / a0,
            b1: g / a0,
            b2: 0.0,
            a1: (g - k) / a0,
            a2: 0.0,
        }
    }
}

/// Causal Bessel low-pass, applied as a cascade of direct-form-II-transposed
/// biquads.
#[derive(Debug, Clone)]
pub struct BesselLowPass {
    sections: Vec<Biquad>,
}

impl BesselLowPass {
    /// Design an `order`-pole Bessel low-pass with -3 dB point `cutoff_hz`
    /// for signals sampled at `sample_rate` Sa/s.
    pub fn design(order: u32, cutoff_hz: f64, sample_rate: f64) -> Result<Self, FilterError> {
        if order == 0 || order > 8 {
            return Err(FilterError::BadOrder(order));
        }
        let nyquist = sample_rate / 2.0;
        if !(cutoff_hz > 0.0) || !cutoff_hz.is_finite() || cutoff_hz >= nyquist {
            return Err(FilterError::BadCutoff {
                cutoff_hz,
                nyquist_hz: nyquist,
            });
        }

        let poly = reverse_bessel_poly(order as usize);
        let w3db = half_power_frequency(&poly);
        let roots = polynomial_roots(&poly);

        // Scale delay-normalized poles so the -3 dB point sits at cutoff_hz,
        // then prewarp the bilinear transform at the same frequency.
        let wc = 2.0 * std::f64::consts::PI * cutoff_hz;
        let pole_scale = wc / w3db;
        let k = wc / (std::f64::consts::PI * cutoff_hz / sample_rate).tan();

        let mut sections = Vec::new();
        for r in &roots {
            let p = r * pole_scale;
            if p.im > 1e-6 * p.norm() {
                sections.push(Biquad::from_pole_pair(p.re, p.norm_sqr(), k));
            } else if p.im.abs() <= 1e-6 * p.norm() {
                sections.push(Biquad::from_real_pole(p.re, k));
            }
            // Negative-imaginary roots are covered by their conjugates.
        }
        debug_assert_eq!(
            sections
                .iter()
                .map(|s| if s.b2 == 0.0 { 1 } else { 2 })
                .sum::<usize>(),
            order as usize
        );
        Ok(Self { sections })
    }

    /// Filter a trace. The internal state is warm-started to the DC steady
    /// state of the first sample, so constant inputs pass through unchanged
    /// and there is no artificial turn-on transient.
    pub fn filter_warm(&self, input: &[f64]) -> Vec<f64> {
        let mut out = input.to_vec();
        self.filter_warm_in_place(&mut out);
        out
    }

    pub fn filter_warm_in_place(&self, data: &mut [f64]) {
        if data.is_empty() {
            return;
        }
        for s in &self.sections {
            let x0 = data[0];
            // DC steady state of the DF2T registers for input x0.
            let mut z2 = (s.b2 - s.a2) * x0;
            let mut z1 = (s.b1 - s.a1) * x0 + z2;
            for x in data.iter_mut() {
                let y = s.b0 * *x + z1;
                z1 = s.b1 * *x - s.a1 * y + z2;
                z2 = s.b2 * *x - s.a2 * y;
                *x = y;
            }
        }
    }

    /// Group delay at DC, in seconds; useful in tests and diagnostics.
    pub fn dc_group_delay(&self, sample_rate: f64) -> f64 {
        // Numerical derivative of the phase at a very low frequency.
        let w = 1e-4;
        let phase = |w: f64| {
            let z = Complex64::from_polar(1.0, -w);
            let mut h = Complex64::new(1.0, 0.0);
            for s in &self.sections {
                let num = Complex64::new(s.b0, 0.0) + z * s.b1 + z * z * s.b2;
                let den = Complex64::new(1.0, 0.0) + z * s.a1 + z * z * s.a2;
                h *= num / den;
            }
            h.arg()
        };
        -(phase(w) - phase(w / 2.0)) / (w / 2.0) / sample_rate
    }
}

/// Coefficients of the reverse Bessel polynomial theta_n, ascending powers,
/// monic. theta_0 = 1, theta_1 = s + 1,
/// theta_n = (2n-1) theta_{n-1} + s^2 theta_{n-2}.
fn reverse_bessel_poly(order: usize) -> Vec<f64> {
    let mut prev = vec![1.0];
    if order == 0 {
        return prev;
    }
    let mut cur = vec![1.0, 1.0];
    for n in 2..=order {
        let mut next = vec![0.0; n + 1];
        for (k, &c) in cur.iter().enumerate() {
            next[k] += (2 * n - 1) as f64 * c;
        }
        for (k, &c) in prev.iter().enumerate() {
            next[k + 2] += c;
        }
        prev = cur;
        cur = next;
    }
    cur
}

fn poly_eval(coeffs: &[f64], z: Complex64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        acc = acc * z + c;
    }
    acc
}

/// Frequency (rad/s, delay-normalized units) where |theta_n(0)/theta_n(jw)|^2
/// crosses 1/2. The magnitude is strictly decreasing, so bisection suffices.
fn half_power_frequency(coeffs: &[f64]) -> f64 {
    let dc = coeffs[0];
    let gain_sqr = |w: f64| {
        let h = dc / poly_eval(coeffs, Complex64::new(0.0, w));
        h.norm_sqr()
    };
    let (mut lo, mut hi) = (1e-3, 2.0 * coeffs.len() as f64);
    debug_assert!(gain_sqr(lo) > 0.5 && gain_sqr(hi) < 0.5);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gain_sqr(mid) > 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Durand-Kerner root finder for a monic polynomial with real coefficients.
/// The Bessel roots are simple and well separated, which this handles easily.
fn polynomial_roots(coeffs: &[f64]) -> Vec<Complex64> {
    let n = coeffs.len() - 1;
    let mut roots: Vec<Complex64> = (0..n)
        .map(|i| Complex64::new(0.4, 0.9).powu(i as u32 + 1))
        .collect();
    for _ in 0..500 {
        let mut max_step = 0.0f64;
        for i in 0..n {
            let zi = roots[i];
            let mut denom = Complex64::new(1.0, 0.0);
            for (j, &zj) in roots.iter().enumerate() {
                if j != i {
                    denom *= zi - zj;
                }
            }
            let step = poly_eval(coeffs, zi) / denom;
            roots[i] = zi - step;
            max_step = max_step.max(step.norm());
        }
        if max_step < 1e-14 {
            break;
        }
    }
    roots
}
