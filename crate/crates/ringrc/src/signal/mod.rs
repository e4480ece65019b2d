//! Input-stage and receiver models: PRBS bit source, non-ideal on-off-keying
//! modulator, and photodetection with bandwidth, normalization, and noise.
//!
//! The modulator deliberately defaults to a non-ideal response (finite
//! bandwidth, finite extinction, Mach-Zehnder-like transfer), because the
//! whole point of training on both the input and output branches is to
//! separate what the ring contributes from what the input stage already
//! imprints on the signal.

pub mod filter;
pub mod prbs;

pub use filter::{BesselLowPass, FilterError};
pub use prbs::{prbs8_generate, BitSequence, PrbsError};

use crate::waveform::{OpticalWaveform, WaveformError};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("sample rate {sample_rate} Sa/s cannot carry bitrate {bitrate} bit/s")]
    InvalidRate { bitrate: f64, sample_rate: f64 },
    #[error("modulator model: {0}")]
    BadModulator(String),
    #[error("detector model: {0}")]
    BadDetector(String),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Waveform(#[from] WaveformError),
}

/// Optical transfer of the electro-optic modulator as a function of the
/// (filtered) normalized drive level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransferShape {
    /// Power linear in the drive.
    Linear,
    /// Mach-Zehnder-like sin^2 transfer; ringing past the rails folds back.
    Sinusoidal,
}

/// Electro-optic modulator + AWG drive chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModulatorModel {
    /// -3 dB bandwidth of the electrical drive path (Hz); infinite = ideal.
    pub bandwidth_3db: f64,
    /// Order of the Bessel low-pass modeling that bandwidth.
    pub filter_order: u32,
    /// Optical power ratio between the 1 and 0 levels (dB); infinite = ideal.
    pub extinction_ratio_db: f64,
    pub transfer_shape: TransferShape,
    /// AWG sample rate (Sa/s); bit edges are quantized to this grid.
    pub awg_sample_rate: f64,
}

impl Default for ModulatorModel {
    fn default() -> Self {
        Self {
            bandwidth_3db: 10e9,
            filter_order: 4,
            extinction_ratio_db: 20.0,
            transfer_shape: TransferShape::Sinusoidal,
            awg_sample_rate: 65e9,
        }
    }
}

impl ModulatorModel {
    /// Fully ideal modulator: rectangular waveform, infinite extinction.
    pub fn ideal() -> Self {
        Self {
            bandwidth_3db: f64::INFINITY,
            filter_order: 4,
            extinction_ratio_db: f64::INFINITY,
            transfer_shape: TransferShape::Linear,
            awg_sample_rate: f64::INFINITY,
        }
    }

    pub fn validate(&self) -> Result<(), SignalError> {
        if !(self.bandwidth_3db > 0.0) {
            return Err(SignalError::BadModulator(format!(
                "bandwidth_3db must be positive, got {}",
                self.bandwidth_3db
            )));
        }
        if !(self.extinction_ratio_db > 0.0) {
            return Err(SignalError::BadModulator(format!(
                "extinction_ratio_db must be positive, got {}",
                self.extinction_ratio_db
            )));
        }
        if !(self.awg_sample_rate > 0.0) {
            return Err(SignalError::BadModulator(format!(
                "awg_sample_rate must be positive, got {}",
                self.awg_sample_rate
            )));
        }
        Ok(())
    }
}

/// Photodetector + acquisition chain, including the receiver-side
/// normalization that keeps the average power constant across
/// configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorModel {
    /// -3 dB analog bandwidth of the detector (Hz); infinite = ideal.
    pub bandwidth_3db: f64,
    /// Acquisition sample rate (Sa/s).
    pub adc_sample_rate: f64,
    /// RMS additive Gaussian noise relative to `target_mean`.
    pub noise_rms_rel: f64,
    /// Normalized mean power level after the gain/attenuation stage.
    pub target_mean: f64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self {
            bandwidth_3db: 16e9,
            adc_sample_rate: 20e9,
            // Sized so the receiver chain, not the regression, decides
            // what survives: per-sample noise of a fast photodiode plus
            // oscilloscope front end. Much below this the readout starts
            // solving delay tasks from microscopic modulator edge
            // transients in the input branch alone, which the measured
            // maps only show at multi-Gbps rates.
            noise_rms_rel: 0.10,
            target_mean: 1.0,
        }
    }
}

impl DetectorModel {
    pub fn noiseless() -> Self {
        Self {
            noise_rms_rel: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SignalError> {
        if !(self.adc_sample_rate > 0.0) || !self.adc_sample_rate.is_finite() {
            return Err(SignalError::BadDetector(format!(
                "adc_sample_rate must be positive and finite, got {}",
                self.adc_sample_rate
            )));
        }
        if !(self.noise_rms_rel >= 0.0) {
            return Err(SignalError::BadDetector(format!(
                "noise_rms_rel must be >= 0, got {}",
                self.noise_rms_rel
            )));
        }
        if !(self.bandwidth_3db > 0.0) {
            return Err(SignalError::BadDetector(format!(
                "bandwidth_3db must be positive, got {}",
                self.bandwidth_3db
            )));
        }
        if !(self.target_mean > 0.0) || !self.target_mean.is_finite() {
            return Err(SignalError::BadDetector(format!(
                "target_mean must be positive and finite, got {}",
                self.target_mean
            )));
        }
        Ok(())
    }
}

/// Synthesize the on-off-keyed optical field for `repeats` periods of the
/// bit sequence at the given bitrate and mean optical power.
///
/// The rectangular 0/1 drive (edges quantized to the AWG grid) is low-pass
/// filtered by the modulator bandwidth, mapped through the optical transfer
/// shape onto the [P0, P1] power rails, and emitted as a constant-phase
/// field sqrt(P).
pub fn encode_ook(
    bits: &BitSequence,
    repeats: usize,
    bitrate: f64,
    avg_power: f64,
    modulator: &ModulatorModel,
    sample_rate: f64,
) -> Result<OpticalWaveform, SignalError> {
    modulator.validate()?;
    if !(bitrate > 0.0) || !(sample_rate >= bitrate) || !sample_rate.is_finite() {
        return Err(SignalError::InvalidRate {
            bitrate,
            sample_rate,
        });
    }
    if repeats == 0 || !(avg_power >= 0.0) {
        return Err(SignalError::BadModulator(
            "repeats must be >= 1 and avg_power >= 0".into(),
        ));
    }

    let stream = bits.repeated(repeats);
    let n_bits = stream.len();
    let n_samples = (n_bits as f64 * sample_rate / bitrate).round() as usize;

    // Rectangular drive with bit edges quantized to the AWG sample grid.
    let mut drive = vec![0.0f64; n_samples];
    for (j, &bit) in stream.iter().enumerate() {
        if bit == 0 {
            continue;
        }
        let start = quantized_edge(j as f64 / bitrate, modulator.awg_sample_rate);
        let end = quantized_edge((j + 1) as f64 / bitrate, modulator.awg_sample_rate);
        // Small bias so float roundoff never pushes an exact edge across a
        // sample boundary.
        let s0 = (start * sample_rate - 1e-6).ceil() as usize;
        let s1 = ((((end * sample_rate - 1e-6).ceil() as usize).min(n_samples)).max(s0)).max(s0);
        for d in &mut drive[s0.min(n_samples)..s1] {
            *d = 1.0;
        }
    }

    if modulator.bandwidth_3db.is_finite() {
        let lp =
            BesselLowPass::design(modulator.filter_order, modulator.bandwidth_3db, sample_rate)?;
        lp.filter_warm_in_place(&mut drive);
    }

    // Two-level power rails with the requested extinction ratio, solved so
    // the ideal rectangular waveform has exactly the requested mean power.
    let n_ones: usize = stream.iter().map(|&b| b as usize).sum();
    let n_zeros = n_bits - n_ones;
    let (p0, p1) = power_rails(
        avg_power,
        modulator.extinction_ratio_db,
        n_ones as f64 / n_bits as f64,
        n_zeros as f64 / n_bits as f64,
    );

    let field: Vec<Complex64> = drive
        .iter()
        .map(|&d| {
            let shaped = match modulator.transfer_shape {
                TransferShape::Linear => d,
                TransferShape::Sinusoidal => {
                    let s = (std::f64::consts::FRAC_PI_2 * d).sin();
                    s * s
                }
            };
            let p = (p0 + (p1 - p0) * shaped).max(0.0);
            Complex64::new(p.sqrt(), 0.0)
        })
        .collect();

    Ok(OpticalWaveform::field(field, sample_rate, 0.0)?)
}

fn quantized_edge(t: f64, awg_rate: f64) -> f64 {
    if awg_rate.is_finite() {
        (t * awg_rate).round() / awg_rate
    } else {
        t
    }
}

fn power_rails(avg: f64, extinction_db: f64, frac_ones: f64, frac_zeros: f64) -> (f64, f64) {
    if extinction_db.is_finite() {
        let ratio = 10f64.powf(extinction_db / 10.0);
        let p0 = avg / (frac_ones * ratio + frac_zeros);
        (p0, ratio * p0)
    } else {
        (0.0, avg / frac_ones)
    }
}

/// Detect a field-valued trace: square-law detection, analog bandwidth
/// limit, resampling to the ADC rate, normalization of the trace mean to
/// `target_mean` (the receiver gain/attenuation stage), then seeded
/// additive white Gaussian noise. Negative excursions are clamped at zero.
pub fn photodetect(
    optical: &OpticalWaveform,
    det: &DetectorModel,
    rng_seed: u64,
) -> Result<OpticalWaveform, SignalError> {
    det.validate()?;
    let field = optical.as_field()?;
    let mut p: Vec<f64> = field.iter().map(|c| c.norm_sqr()).collect();

    // A cutoff at or beyond the representable band leaves the sampled
    // signal untouched, so the filter only runs when it can matter.
    if det.bandwidth_3db.is_finite() && det.bandwidth_3db < 0.45 * optical.sample_rate {
        let lp = BesselLowPass::design(4, det.bandwidth_3db, optical.sample_rate)?;
        lp.filter_warm_in_place(&mut p);
    }

    let mut p = resample_linear(&p, optical.sample_rate, det.adc_sample_rate);

    let mean = p.iter().sum::<f64>() / p.len() as f64;
    if mean > 0.0 {
        let gain = det.target_mean / mean;
        for v in p.iter_mut() {
            *v *= gain;
        }
    }

    if det.noise_rms_rel > 0.0 {
        let sigma = det.noise_rms_rel * det.target_mean;
        let mut rng = ChaCha12Rng::seed_from_u64(rng_seed);
        let mut gauss = GaussianSource::new(&mut rng);
        for v in p.iter_mut() {
            *v += sigma * gauss.next(&mut rng);
        }
    }

    for v in p.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }

    Ok(OpticalWaveform::power(p, det.adc_sample_rate, optical.t0)?)
}

fn resample_linear(data: &[f64], src_rate: f64, dst_rate: f64) -> Vec<f64> {
    if src_rate == dst_rate {
        return data.to_vec();
    }
    let duration = data.len() as f64 / src_rate;
    let n_out = (duration * dst_rate).round() as usize;
    let mut out = Vec::with_capacity(n_out);
    for k in 0..n_out {
        let pos = k as f64 * src_rate / dst_rate;
        let i = pos.floor() as usize;
        if i + 1 >= data.len() {
            out.push(data[data.len() - 1]);
        } else {
            let frac = pos - i as f64;
            out.push(data[i] * (1.0 - frac) + data[i + 1] * frac);
        }
    }
    out
}

/// Box-Muller Gaussian sampler over a seeded uniform source; keeps the
/// noise reproducible without extra dependencies.
struct GaussianSource {
    spare: Option<f64>,
}

impl GaussianSource {
    fn new(_rng: &mut ChaCha12Rng) -> Self {
        Self { spare: None }
    }

    fn next(&mut self, rng: &mut ChaCha12Rng) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        loop {
            let u1: f64 = rng.gen::<f64>();
            let u2: f64 = rng.gen::<f64>();
            if u1 <= f64::MIN_POSITIVE {
                continue;
            }
            let r = (-2.0 * u1.ln()).sqrt();
            let theta = 2.0 * std::f64::consts::PI * u2;
            self.spare = Some(r * theta.sin());
            return r * theta.cos();
        }
    }
}
