//! Accuracy metric, k-fold cross-validation, model selection and the
//! plot-data reductions built on them.
//!
//! The score of a series is `(1/N) Σ exp(-|y_t - ŷ_t| / m)` where `m` is the
//! mean of the ground truth being scored, or 1 when that mean is zero.

mod plots;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::ml::{self, Hyper, ModelError, TrainedModel};
use crate::scalar::Scalar;

pub use plots::{
    score_histogram, score_scatter, write_histogram_csv, write_scatter_csv, Histogram,
    ScatterRow, SectorResult,
};

/// At most this many ground-truth candidates per observation.
pub const MAX_CANDIDATES: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("index {index} has {count} ground-truth candidates (at most {MAX_CANDIDATES})")]
    TooManyCandidates { index: usize, count: usize },
    #[error("nothing to score")]
    Empty,
    #[error("bad cross-validation config: {0}")]
    BadConfig(String),
    #[error("bin count must be at least 1")]
    BadBinCount,
    #[error("every candidate model failed: {0:?}")]
    AllCandidatesFailed(Vec<String>),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Ground truth, optional alternative ground truths and predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSeries<T> {
    pub y: Vec<T>,
    /// Empty, or one (possibly empty) list of at most two alternatives per index.
    pub alt_y: Vec<Vec<T>>,
    pub predictions: Vec<T>,
}

impl<T: Scalar> EvaluationSeries<T> {
    pub fn new(y: Vec<T>, predictions: Vec<T>) -> Self {
        Self {
            y,
            alt_y: Vec::new(),
            predictions,
        }
    }

    pub fn with_alternatives(mut self, alt_y: Vec<Vec<T>>) -> Self {
        self.alt_y = alt_y;
        self
    }

    pub fn score(&self) -> Result<T, EvalError> {
        score(&self.y, &self.predictions)
    }

    pub fn score_ambiguous(&self) -> Result<T, EvalError> {
        score_ambiguous(&self.y, &self.alt_y, &self.predictions)
    }
}

fn check_lengths<T>(y: &[T], predictions: &[T]) -> Result<(), EvalError> {
    if y.len() != predictions.len() {
        return Err(EvalError::LengthMismatch {
            what: "predictions",
            got: predictions.len(),
            expected: y.len(),
        });
    }
    if y.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(())
}

/// `mean(y)`, or 1 when the mean is not positive.
pub fn denominator<T: Scalar>(y: &[T]) -> T {
    let m = y.iter().copied().sum::<T>() / T::from_usize_lossy(y.len().max(1));
    if m > T::zero() {
        m
    } else {
        T::one()
    }
}

/// Per-index terms `exp(-|y_t - ŷ_t| / m)`; their mean is [`score`].
pub fn score_terms<T: Scalar>(y: &[T], predictions: &[T]) -> Result<Vec<T>, EvalError> {
    check_lengths(y, predictions)?;
    let m = denominator(y);
    Ok(y.iter()
        .zip(predictions)
        .map(|(&a, &p)| (-(a - p).abs() / m).exp())
        .collect())
}

pub fn score<T: Scalar>(y: &[T], predictions: &[T]) -> Result<T, EvalError> {
    let terms = score_terms(y, predictions)?;
    Ok(terms.iter().copied().sum::<T>() / T::from_usize_lossy(terms.len()))
}

/// Ambiguity-balanced score: each index averages its term over the
/// candidate set `{y_t} ∪ alt_y[t]`; `m` comes from the primary `y` only.
/// With no alternatives this equals [`score`] exactly.
pub fn score_ambiguous<T: Scalar>(
    y: &[T],
    alt_y: &[Vec<T>],
    predictions: &[T],
) -> Result<T, EvalError> {
    if alt_y.is_empty() {
        return score(y, predictions);
    }
    check_lengths(y, predictions)?;
    if alt_y.len() != y.len() {
        return Err(EvalError::LengthMismatch {
            what: "alt_y",
            got: alt_y.len(),
            expected: y.len(),
        });
    }
    let m = denominator(y);
    let mut total = T::zero();
    for (index, ((&primary, alts), &p)) in y.iter().zip(alt_y).zip(predictions).enumerate() {
        let count = 1 + alts.len();
        if count > MAX_CANDIDATES {
            return Err(EvalError::TooManyCandidates { index, count });
        }
        let term = |v: T| (-(v - p).abs() / m).exp();
        let sum = alts.iter().fold(term(primary), |acc, &a| acc + term(a));
        total = total + sum / T::from_usize_lossy(count);
    }
    Ok(total / T::from_usize_lossy(y.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvConfig {
    pub k: usize,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self { k: 5, seed: 0 }
    }
}

/// Seeded uniform permutation of `0..n` cut into `k` contiguous chunks; the
/// first `n % k` folds get one extra index. Each fold is returned sorted.
pub fn kfold_split(n: usize, cfg: &CvConfig) -> Result<Vec<Vec<usize>>, EvalError> {
    if cfg.k < 2 || cfg.k > n {
        return Err(EvalError::BadConfig(format!(
            "k = {} must satisfy 2 <= k <= n = {n}",
            cfg.k
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let base = n / cfg.k;
    let extra = n % cfg.k;
    let mut folds = Vec::with_capacity(cfg.k);
    let mut start = 0;
    for f in 0..cfg.k {
        let len = base + usize::from(f < extra);
        let mut fold = perm[start..start + len].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += len;
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult<T> {
    pub fold_scores: Vec<T>,
    pub mean: T,
}

impl<T: Scalar> CvResult<T> {
    pub fn from_fold_scores(fold_scores: Vec<T>) -> Self {
        let mean = fold_scores.iter().copied().sum::<T>() / T::from_usize_lossy(fold_scores.len());
        Self { fold_scores, mean }
    }
}

/// Scores a trained model on `ds`, using the ambiguity-balanced score when
/// the dataset carries alternative targets.
pub fn evaluate_model<T: Scalar>(model: &TrainedModel<T>, ds: &Dataset<T>) -> Result<T, EvalError> {
    let predictions = ds
        .rows()
        .map(|r| model.predict(r))
        .collect::<Result<Vec<_>, _>>()?;
    score_ambiguous(ds.y(), ds.alt_y(), &predictions)
}

pub fn cross_validate<T: Scalar>(
    ds: &Dataset<T>,
    hyper: &Hyper,
    cfg: &CvConfig,
) -> Result<CvResult<T>, EvalError> {
    let folds = kfold_split(ds.n_rows(), cfg)?;
    let mut in_fold = vec![usize::MAX; ds.n_rows()];
    for (f, fold) in folds.iter().enumerate() {
        for &i in fold {
            in_fold[i] = f;
        }
    }
    let mut scores = Vec::with_capacity(folds.len());
    for (f, fold) in folds.iter().enumerate() {
        let train_idx: Vec<usize> = (0..ds.n_rows()).filter(|&i| in_fold[i] != f).collect();
        let model = ml::train(&ds.subset(&train_idx), hyper, cfg.seed)?;
        scores.push(evaluate_model(&model, &ds.subset(fold))?);
    }
    Ok(CvResult::from_fold_scores(scores))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry<T> {
    pub hyper: Hyper,
    pub result: Result<CvResult<T>, String>,
}

#[derive(Debug, Clone)]
pub struct Selection<T> {
    pub best: Hyper,
    pub cv: CvResult<T>,
    /// Winner retrained on the full dataset.
    pub model: TrainedModel<T>,
    /// One entry per candidate, in the order given.
    pub leaderboard: Vec<LeaderboardEntry<T>>,
}

/// Cross-validates every candidate and retrains the best on all rows.
///
/// The best candidate has the highest mean CV score; ties go to the kind
/// earlier in the registry (MEAN < RIDGE < KNN < GBM), then to the earlier
/// candidate.
pub fn select_model<T: Scalar>(
    ds: &Dataset<T>,
    candidates: &[Hyper],
    cfg: &CvConfig,
) -> Result<Selection<T>, EvalError> {
    if candidates.is_empty() {
        return Err(EvalError::AllCandidatesFailed(vec![
            "no candidates given".into(),
        ]));
    }
    let leaderboard: Vec<LeaderboardEntry<T>> = candidates
        .iter()
        .map(|h| LeaderboardEntry {
            hyper: *h,
            result: cross_validate(ds, h, cfg).map_err(|e| e.to_string()),
        })
        .collect();

    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by_key(|&i| (candidates[i].kind(), i));
    let mut best: Option<(usize, T)> = None;
    for i in order {
        if let Ok(cv) = &leaderboard[i].result {
            if best.is_none_or(|(_, s)| cv.mean > s) {
                best = Some((i, cv.mean));
            }
        }
    }
    let Some((winner, _)) = best else {
        return Err(EvalError::AllCandidatesFailed(
            leaderboard
                .iter()
                .map(|e| format!("{}: {}", e.hyper.kind(), e.result.as_ref().err().cloned().unwrap_or_default()))
                .collect(),
        ));
    };
    let model = ml::train(ds, &candidates[winner], cfg.seed)?;
    let cv = leaderboard[winner]
        .result
        .clone()
        .expect("winner has a CV result");
    Ok(Selection {
        best: candidates[winner],
        cv,
        model,
        leaderboard,
    })
}
