//! Ridge-regression readout: closed-form training with 5-fold
//! cross-validated regularization, thresholded prediction, and BER
//! bookkeeping with the zero-error statistical floor.

use crate::nodes::DesignMatrix;
use crate::tasks::Targets;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReadoutError {
    #[error("normal equations are singular; use lambda > 0 or drop collinear features")]
    SingularSystem,
    #[error("lambda grid is empty")]
    EmptyGrid,
    #[error("need at least {need} rows, got {got}")]
    TooFewRows { need: usize, got: usize },
    #[error("prediction and target lengths differ: {pred} vs {truth}")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("input is empty")]
    EmptyInput,
    #[error("train/test protocol selects no {0} rows on this trace")]
    EmptySplit(&'static str),
}

/// Trained readout: weight vector (bias last), the regularization it was
/// trained with, and the decision level.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutWeights {
    pub w: DVector<f64>,
    pub lambda: f64,
    pub threshold: f64,
}

/// BER bookkeeping for one evaluated branch. Zero test errors are reported
/// at the statistical floor 1/n_test and flagged, never as BER = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub errors: usize,
    pub n_test: usize,
    pub ber: f64,
    pub at_floor: bool,
}

impl Evaluation {
    pub fn from_errors(errors: usize, n_test: usize) -> Self {
        if errors == 0 {
            Self {
                errors,
                n_test,
                ber: statistical_floor(n_test),
                at_floor: true,
            }
        } else {
            Self {
                errors,
                n_test,
                ber: errors as f64 / n_test as f64,
                at_floor: false,
            }
        }
    }

    pub fn log10_ber(&self) -> f64 {
        self.ber.log10()
    }
}

/// BER assigned to an error-free test set.
pub fn statistical_floor(n_test: usize) -> f64 {
    1.0 / n_test as f64
}

/// Solve min_w ||Xw - y||^2 + lambda ||w_nobias||^2 through the normal
/// equations with a symmetric (Cholesky) solve. The last column of X is
/// the bias and is excluded from the penalty.
pub fn ridge_solve(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
) -> Result<DVector<f64>, ReadoutError> {
    let gram = x.transpose() * x;
    let rhs = x.transpose() * y;
    ridge_solve_gram(&gram, &rhs, lambda)
}

fn ridge_solve_gram(
    gram: &DMatrix<f64>,
    rhs: &DVector<f64>,
    lambda: f64,
) -> Result<DVector<f64>, ReadoutError> {
    let p = gram.nrows();
    let mut a = gram.clone();
    for i in 0..p.saturating_sub(1) {
        a[(i, i)] += lambda;
    }
    let chol = a.cholesky().ok_or(ReadoutError::SingularSystem)?;
    // Cholesky can numerically "succeed" on an exactly rank-deficient
    // Gram matrix; the collapsed pivot (~sqrt(machine eps) relative)
    // betrays it.
    let diag = chol.l_dirty().diagonal();
    let max = diag.iter().cloned().fold(0.0f64, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > 1e-7 * max) {
        return Err(ReadoutError::SingularSystem);
    }
    Ok(chol.solve(rhs))
}

/// Scale-aware geometric lambda grid spanning
/// [min_factor, max_factor] * trace(X^T X) / n_cols.
pub fn lambda_grid(x: &DMatrix<f64>, points: usize, min_factor: f64, max_factor: f64) -> Vec<f64> {
    let scale = (0..x.ncols())
        .map(|c| x.column(c).norm_squared())
        .sum::<f64>()
        / x.ncols() as f64
        / x.nrows().max(1) as f64
        * x.nrows() as f64;
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let lo = (min_factor * scale).ln();
    let hi = (max_factor * scale).ln();
    (0..points)
        .map(|i| {
            let f = if points == 1 {
                0.5
            } else {
                i as f64 / (points - 1) as f64
            };
            (lo + f * (hi - lo)).exp()
        })
        .collect()
}

/// Pick the regularization by contiguous-block k-fold cross-validation.
///
/// The blocks respect time order (no shuffling). For every candidate the
/// mean validation misclassification rate at threshold 0.5 is computed;
/// the minimizer wins, ties going to the larger lambda.
pub fn kfold_lambda_select(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    folds: usize,
    grid: &[f64],
) -> Result<f64, ReadoutError> {
    if grid.is_empty() {
        return Err(ReadoutError::EmptyGrid);
    }
    let n = x.nrows();
    if n < folds || folds < 2 {
        return Err(ReadoutError::TooFewRows {
            need: folds.max(2),
            got: n,
        });
    }

    // Per-fold Gram pieces so each lambda costs only a p x p solve.
    let bounds = fold_bounds(n, folds);
    let total_gram = x.transpose() * x;
    let total_rhs = x.transpose() * y;
    let fold_parts: Vec<(DMatrix<f64>, DVector<f64>)> = bounds
        .iter()
        .map(|&(a, b)| {
            let xs = x.rows(a, b - a);
            let ys = y.rows(a, b - a);
            (xs.transpose() * xs, xs.transpose() * ys)
        })
        .collect();

    let mut best: Option<(f64, f64)> = None; // (mean error rate, lambda)
    for &lambda in grid {
        let mut rate_sum = 0.0;
        let mut usable = true;
        for (f, &(a, b)) in bounds.iter().enumerate() {
            let gram = &total_gram - &fold_parts[f].0;
            let rhs = &total_rhs - &fold_parts[f].1;
            let w = match ridge_solve_gram(&gram, &rhs, lambda) {
                Ok(w) => w,
                Err(_) => {
                    usable = false;
                    break;
                }
            };
            let mut errors = 0usize;
            for r in a..b {
                let score = x.row(r).transpose().dot(&w);
                let bit = u8::from(score >= 0.5);
                let truth = u8::from(y[r] >= 0.5);
                errors += usize::from(bit != truth);
            }
            rate_sum += errors as f64 / (b - a) as f64;
        }
        if !usable {
            continue;
        }
        let mean_rate = rate_sum / folds as f64;
        // Grid is ascending, so <= keeps the largest lambda among ties.
        if best.is_none_or(|(e, _)| mean_rate <= e) {
            best = Some((mean_rate, lambda));
        }
    }
    best.map(|(_, l)| l).ok_or(ReadoutError::SingularSystem)
}

fn fold_bounds(n: usize, folds: usize) -> Vec<(usize, usize)> {
    let base = n / folds;
    let rem = n % folds;
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let len = base + usize::from(f < rem);
        out.push((start, start + len));
        start += len;
    }
    out
}

/// Binarize regression scores: bit = 1 iff x . w >= threshold.
pub fn threshold_predict(x: &DMatrix<f64>, w: &DVector<f64>, threshold: f64) -> Vec<u8> {
    (0..x.nrows())
        .map(|r| u8::from(x.row(r).transpose().dot(w) >= threshold))
        .collect()
}

/// Count prediction errors against the target bits.
pub fn bit_error_rate(pred: &[u8], truth: &[u8]) -> Result<Evaluation, ReadoutError> {
    if pred.len() != truth.len() {
        return Err(ReadoutError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(ReadoutError::EmptyInput);
    }
    let errors = pred.iter().zip(truth).filter(|(a, b)| a != b).count();
    Ok(Evaluation::from_errors(errors, pred.len()))
}

/// Readout hyperparameters exposed in the config file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadoutSettings {
    pub folds: usize,
    pub threshold: f64,
    pub lambda_points: usize,
    pub lambda_min_factor: f64,
    pub lambda_max_factor: f64,
}

impl Default for ReadoutSettings {
    fn default() -> Self {
        Self {
            folds: 5,
            threshold: 0.5,
            lambda_points: 25,
            lambda_min_factor: 1e-8,
            lambda_max_factor: 1e2,
        }
    }
}

/// Contiguous train/test layout over the generated bit stream, in bits.
///
/// One PRBS period of warm-up is discarded, ten periods train the readout,
/// and ten periods are held out for testing; a small guard gap at the
/// boundary prevents leakage through inter-symbol memory. The 2550-bit
/// test block is what puts the statistical floor at 1/2550 (log10 -3.41).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainTestProtocol {
    pub warmup_bits: usize,
    pub train_bits: usize,
    pub test_bits: usize,
}

impl Default for TrainTestProtocol {
    fn default() -> Self {
        Self {
            warmup_bits: 255,
            train_bits: 2550,
            test_bits: 2550,
        }
    }
}

impl TrainTestProtocol {
    /// Bits that must exist in the trace for a guard gap of `guard` bits.
    pub fn required_bits(&self, guard: usize) -> usize {
        self.warmup_bits + self.train_bits + guard + self.test_bits
    }

    /// PRBS periods to generate (constant for every task whose guard fits
    /// in the slack, so all tasks can share one physical trace).
    pub fn periods(&self, period_len: usize) -> usize {
        // Guard gaps are at most a few bits; one extra period covers them.
        self.required_bits(0).div_ceil(period_len) + 1
    }

    fn train_range(&self) -> (usize, usize) {
        (self.warmup_bits, self.warmup_bits + self.train_bits)
    }

    fn test_range(&self, guard: usize) -> (usize, usize) {
        let start = self.warmup_bits + self.train_bits + guard;
        (start, start + self.test_bits)
    }
}

/// Outcome of training one branch.
#[derive(Debug, Clone)]
pub struct BranchEvaluation {
    pub eval: Evaluation,
    pub weights: ReadoutWeights,
    /// Present-bit indices of the evaluated test rows.
    pub test_bit_index: Vec<usize>,
}

/// Full readout pass over one branch: split by bit index, cross-validate
/// the regularization on the training block, fit, and score the held-out
/// block. Weights never see test rows.
pub fn train_test_evaluate(
    design: &DesignMatrix,
    targets: &Targets,
    protocol: &TrainTestProtocol,
    guard: usize,
    settings: &ReadoutSettings,
) -> Result<BranchEvaluation, ReadoutError> {
    let (tr0, tr1) = protocol.train_range();
    let (te0, te1) = protocol.test_range(guard);
    let select = |lo: usize, hi: usize| -> Vec<usize> {
        design
            .row_bit_index
            .iter()
            .enumerate()
            .filter(|(_, &bit)| bit >= lo && bit < hi && bit >= targets.valid_from)
            .map(|(r, _)| r)
            .collect()
    };
    let train_rows = select(tr0, tr1);
    let test_rows = select(te0, te1);
    if train_rows.is_empty() {
        return Err(ReadoutError::EmptySplit("train"));
    }
    if test_rows.is_empty() {
        return Err(ReadoutError::EmptySplit("test"));
    }

    let gather = |rows: &[usize]| -> (DMatrix<f64>, DVector<f64>) {
        let x = DMatrix::from_fn(rows.len(), design.x.ncols(), |r, c| design.x[(rows[r], c)]);
        let y = DVector::from_fn(rows.len(), |r, _| {
            f64::from(targets.y[design.row_bit_index[rows[r]]])
        });
        (x, y)
    };
    let (x_train, y_train) = gather(&train_rows);
    let (x_test, y_test) = gather(&test_rows);

    let grid = lambda_grid(
        &x_train,
        settings.lambda_points,
        settings.lambda_min_factor,
        settings.lambda_max_factor,
    );
    let lambda = kfold_lambda_select(&x_train, &y_train, settings.folds, &grid)?;
    let w = ridge_solve(&x_train, &y_train, lambda)?;
    let pred = threshold_predict(&x_test, &w, settings.threshold);
    let truth: Vec<u8> = y_test.iter().map(|&v| u8::from(v >= 0.5)).collect();
    let eval = bit_error_rate(&pred, &truth)?;

    Ok(BranchEvaluation {
        eval,
        weights: ReadoutWeights {
            w,
            lambda,
            threshold: settings.threshold,
        },
        test_bit_index: test_rows.iter().map(|&r| design.row_bit_index[r]).collect(),
    })
}
