//! Virtual-node extraction: detected waveforms -> per-bit node matrix ->
//! R-bit design matrices for the regression.

use crate::waveform::{OpticalWaveform, WaveformError};
use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NodeError {
    #[error("ADC rate {adc_rate} Sa/s is below the bitrate {bitrate} bit/s")]
    RateMismatch { bitrate: f64, adc_rate: f64 },
    #[error("trace holds no complete bit after the alignment offset")]
    EmptyTrace,
    #[error("n_v_desired must be >= 1")]
    ZeroNodes,
    #[error("need at least {need} bits for an R-bit window of {need}, got {got}")]
    TooFewBits { need: usize, got: usize },
    #[error(transparent)]
    Waveform(#[from] WaveformError),
}

/// Which arm of the experiment a node matrix came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    /// Detected directly after the modulator (PD1).
    Input,
    /// Detected after the ring (PD2).
    Output,
}

/// Raw acquisition samples available per bit.
pub fn samples_per_bit(bitrate: f64, adc_rate: f64) -> Result<usize, NodeError> {
    if !(adc_rate >= bitrate) || !(bitrate > 0.0) {
        return Err(NodeError::RateMismatch { bitrate, adc_rate });
    }
    Ok((adc_rate / bitrate).floor() as usize)
}

/// Per-bit virtual-node readings: one row per complete bit, one column per
/// desired node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeMatrix {
    /// n_bits x n_v_desired node values.
    pub values: DMatrix<f64>,
    pub bitrate: f64,
    pub n_v_desired: usize,
    /// Acquisition samples available in each bit before re-binning.
    pub samples_per_bit_raw: usize,
    pub branch: Branch,
    /// Absolute index of the bit described by row 0.
    pub first_bit_index: usize,
}

impl NodeMatrix {
    pub fn n_bits(&self) -> usize {
        self.values.nrows()
    }
}

/// Re-bin a detected power trace into per-bit virtual nodes.
///
/// Each bit window of `s` raw samples becomes `n_v_desired` nodes:
/// averaged over near-equal contiguous bins when s >= n_v (earlier bins
/// take the extra samples when it does not divide), passed through
/// unchanged when s == n_v, and zero-padded on the right when s < n_v.
/// `bit_alignment` is the sample index where bit 0 starts; the simulator
/// knows bit boundaries exactly, so no clock recovery is involved.
pub fn rebin_to_nodes(
    trace: &OpticalWaveform,
    bitrate: f64,
    n_v_desired: usize,
    bit_alignment: usize,
    branch: Branch,
) -> Result<NodeMatrix, NodeError> {
    if n_v_desired == 0 {
        return Err(NodeError::ZeroNodes);
    }
    let power = trace.as_power()?;
    let spb_exact = trace.sample_rate / bitrate;
    let s = samples_per_bit(bitrate, trace.sample_rate)?;
    if bit_alignment + s > power.len() {
        return Err(NodeError::EmptyTrace);
    }
    let n_bits = (((power.len() - bit_alignment) as f64) / spb_exact).floor() as usize;
    if n_bits == 0 {
        return Err(NodeError::EmptyTrace);
    }

    let mut values = DMatrix::zeros(n_bits, n_v_desired);
    for j in 0..n_bits {
        let start = bit_alignment + (j as f64 * spb_exact).floor() as usize;
        let window = &power[start..start + s];
        if s >= n_v_desired {
            let base = s / n_v_desired;
            let rem = s % n_v_desired;
            let mut pos = 0usize;
            for v in 0..n_v_desired {
                let len = base + usize::from(v < rem);
                let sum: f64 = window[pos..pos + len].iter().sum();
                values[(j, v)] = sum / len as f64;
                pos += len;
            }
        } else {
            for (v, &p) in window.iter().enumerate() {
                values[(j, v)] = p;
            }
            // Remaining columns stay exactly zero.
        }
    }

    Ok(NodeMatrix {
        values,
        bitrate,
        n_v_desired,
        samples_per_bit_raw: s,
        branch,
        first_bit_index: 0,
    })
}

/// Feature matrix for the regression: row j concatenates the node vectors
/// of the n2 most recent bits in time order plus a trailing bias column.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    /// n_rows x (n2 * n_v + 1); the last column is the constant 1 bias.
    pub x: DMatrix<f64>,
    /// Present-bit index of each row.
    pub row_bit_index: Vec<usize>,
}

pub fn assemble_design_matrix(nodes: &NodeMatrix, n2: usize) -> Result<DesignMatrix, NodeError> {
    if n2 == 0 {
        return Err(NodeError::TooFewBits { need: 1, got: 0 });
    }
    let n_bits = nodes.n_bits();
    if n_bits < n2 {
        return Err(NodeError::TooFewBits {
            need: n2,
            got: n_bits,
        });
    }
    let n_v = nodes.n_v_desired;
    let n_rows = n_bits - (n2 - 1);
    let mut x = DMatrix::zeros(n_rows, n2 * n_v + 1);
    let mut row_bit_index = Vec::with_capacity(n_rows);
    for (r, j) in ((n2 - 1)..n_bits).enumerate() {
        for (slot, bit) in ((j + 1 - n2)..=j).enumerate() {
            for v in 0..n_v {
                x[(r, slot * n_v + v)] = nodes.values[(bit, v)];
            }
        }
        x[(r, n2 * n_v)] = 1.0;
        row_bit_index.push(nodes.first_bit_index + j);
    }
    Ok(DesignMatrix { x, row_bit_index })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn power_trace(p: Vec<f64>, rate: f64) -> OpticalWaveform {
        OpticalWaveform::power(p, rate, 0.0).unwrap()
    }

    #[test]
    fn samples_per_bit_matches_the_acquisition_grid() {
        assert_eq!(samples_per_bit(20e6, 20e9).unwrap(), 1000);
        assert_eq!(samples_per_bit(2000e6, 20e9).unwrap(), 10);
        assert_eq!(samples_per_bit(4000e6, 20e9).unwrap(), 5);
        assert!(matches!(
            samples_per_bit(40e9, 20e9),
            Err(NodeError::RateMismatch { .. })
        ));
    }

    #[test]
    fn rebin_averages_contiguous_bins() {
        // 20 samples per bit, 10 nodes -> pairs averaged.
        let p: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let trace = power_trace(p, 20e9);
        let nodes = rebin_to_nodes(&trace, 1e9, 10, 0, Branch::Output).unwrap();
        assert_eq!(nodes.n_bits(), 2);
        assert_eq!(nodes.samples_per_bit_raw, 20);
        for v in 0..10 {
            assert_relative_eq!(nodes.values[(0, v)], (2 * v) as f64 + 0.5);
        }
    }

    #[test]
    fn rebin_1000_samples_into_10_nodes() {
        // 20 Mbps at 20 GSa/s: 1000 raw samples averaged into 10 bins of 100.
        let p: Vec<f64> = (0..2000).map(|i| (i % 1000) as f64).collect();
        let trace = power_trace(p, 20e9);
        let nodes = rebin_to_nodes(&trace, 20e6, 10, 0, Branch::Output).unwrap();
        assert_eq!(nodes.samples_per_bit_raw, 1000);
        assert_eq!(nodes.n_bits(), 2);
        for v in 0..10 {
            assert_relative_eq!(nodes.values[(0, v)], (100 * v) as f64 + 49.5);
        }
    }

    #[test]
    fn rebin_is_identity_when_counts_match() {
        let p: Vec<f64> = (0..30).map(|i| (i * i) as f64).collect();
        let trace = power_trace(p.clone(), 20e9);
        let nodes = rebin_to_nodes(&trace, 2e9, 10, 0, Branch::Input).unwrap();
        assert_eq!(nodes.n_bits(), 3);
        for j in 0..3 {
            for v in 0..10 {
                assert_eq!(nodes.values[(j, v)], p[j * 10 + v]);
            }
        }
    }

    #[test]
    fn rebin_zero_fills_when_samples_are_scarce() {
        let p: Vec<f64> = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
        let trace = power_trace(p, 20e9);
        let nodes = rebin_to_nodes(&trace, 4e9, 10, 0, Branch::Output).unwrap();
        assert_eq!(nodes.samples_per_bit_raw, 5);
        assert_eq!(nodes.n_bits(), 2);
        for j in 0..2 {
            for v in 0..5 {
                assert_eq!(nodes.values[(j, v)], (j * 5 + v) as f64 + 1.0);
            }
            for v in 5..10 {
                assert_eq!(nodes.values[(j, v)], 0.0);
            }
        }
    }

    #[test]
    fn uneven_bins_put_extra_samples_early() {
        // 7 samples into 3 nodes: bins of 3, 2, 2.
        let p = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        let trace = power_trace(p, 7e9);
        let nodes = rebin_to_nodes(&trace, 1e9, 3, 0, Branch::Output).unwrap();
        assert_relative_eq!(nodes.values[(0, 0)], 2.0);
        assert_relative_eq!(nodes.values[(0, 1)], 4.5);
        assert_relative_eq!(nodes.values[(0, 2)], 6.5);
    }

    #[test]
    fn rebin_conserves_the_per_bit_mean_when_divisible() {
        let p: Vec<f64> = (0..100).map(|i| (i as f64).sin().abs()).collect();
        let trace = power_trace(p.clone(), 20e9);
        let nodes = rebin_to_nodes(&trace, 0.2e9, 10, 0, Branch::Output).unwrap();
        let node_mean: f64 = (0..10).map(|v| nodes.values[(0, v)]).sum::<f64>() / 10.0;
        let raw_mean: f64 = p.iter().sum::<f64>() / 100.0;
        assert_relative_eq!(node_mean, raw_mean, epsilon = 1e-12);
    }

    #[test]
    fn alignment_offset_shifts_bit_zero() {
        let p: Vec<f64> = (0..25).map(|i| i as f64).collect();
        let trace = power_trace(p, 20e9);
        let nodes = rebin_to_nodes(&trace, 2e9, 10, 5, Branch::Output).unwrap();
        assert_eq!(nodes.n_bits(), 2);
        assert_eq!(nodes.values[(0, 0)], 5.0);
    }

    #[test]
    fn empty_trace_is_detected() {
        let trace = power_trace(vec![1.0; 5], 20e9);
        assert!(matches!(
            rebin_to_nodes(&trace, 2e9, 10, 0, Branch::Output),
            Err(NodeError::EmptyTrace)
        ));
    }

    #[test]
    fn design_matrix_has_bias_and_time_order() {
        let p: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let trace = power_trace(p, 20e9);
        let nodes = rebin_to_nodes(&trace, 2e9, 5, 0, Branch::Output).unwrap();
        let d = assemble_design_matrix(&nodes, 2).unwrap();
        assert_eq!(d.x.ncols(), 11);
        assert_eq!(d.x.nrows(), nodes.n_bits() - 1);
        assert_eq!(d.row_bit_index[0], 1);
        // First 5 entries are the previous bit's nodes, next 5 the present.
        for v in 0..5 {
            assert_eq!(d.x[(0, v)], nodes.values[(0, v)]);
            assert_eq!(d.x[(0, 5 + v)], nodes.values[(1, v)]);
        }
        assert_eq!(d.x[(0, 10)], 1.0);
    }

    #[test]
    fn design_matrix_n2_one_appends_bias_only() {
        let p: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let trace = power_trace(p, 20e9);
        let nodes = rebin_to_nodes(&trace, 2e9, 5, 0, Branch::Output).unwrap();
        let d = assemble_design_matrix(&nodes, 1).unwrap();
        assert_eq!(d.x.ncols(), 6);
        assert_eq!(d.x.nrows(), nodes.n_bits());
        for j in 0..nodes.n_bits() {
            for v in 0..5 {
                assert_eq!(d.x[(j, v)], nodes.values[(j, v)]);
            }
        }
    }

    #[test]
    fn design_matrix_rejects_short_inputs() {
        let trace = power_trace(vec![1.0; 10], 20e9);
        let nodes = rebin_to_nodes(&trace, 2e9, 10, 0, Branch::Output).unwrap();
        assert!(matches!(
            assemble_design_matrix(&nodes, 3),
            Err(NodeError::TooFewBits { .. })
        ));
    }

    #[test]
    fn constant_trace_gives_identical_rows() {
        let trace = power_trace(vec![2.5; 60], 20e9);
        let nodes = rebin_to_nodes(&trace, 2e9, 5, 0, Branch::Output).unwrap();
        let d = assemble_design_matrix(&nodes, 2).unwrap();
        for r in 1..d.x.nrows() {
            for c in 0..d.x.ncols() {
                assert_eq!(d.x[(r, c)], d.x[(0, c)]);
            }
        }
    }

    proptest! {
        #[test]
        fn rebin_row_means_conserved_for_divisible_windows(
            bits in 1usize..5,
            n_v in prop::sample::select(vec![1usize, 2, 4, 5, 10, 20]),
            seed in 0u64..1000,
        ) {
            // 20 samples per bit is divisible by every selected n_v.
            let spb = 20usize;
            let mut state = seed.wrapping_add(1);
            let mut p = Vec::with_capacity(bits * spb);
            for _ in 0..bits * spb {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                p.push((state >> 11) as f64 / (1u64 << 53) as f64);
            }
            let trace = power_trace(p.clone(), 20e9);
            let nodes = rebin_to_nodes(&trace, 1e9, n_v, 0, Branch::Output).unwrap();
            for j in 0..bits {
                let node_mean: f64 = (0..n_v).map(|v| nodes.values[(j, v)]).sum::<f64>() / n_v as f64;
                let raw_mean: f64 = p[j*spb..(j+1)*spb].iter().sum::<f64>() / spb as f64;
                prop_assert!((node_mean - raw_mean).abs() < 1e-12);
            }
        }
    }
}
