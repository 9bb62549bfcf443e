//! Agreement between predicted and subjective scores: PLCC, SRCC, KRCC,
//! RMSE and MAE.
//!
//! Constant inputs are errors, never silent zeros.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::shape("metrics", "vector lengths", x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 samples, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("metric inputs must be finite".into()));
    }
    Ok(())
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample Pearson correlation.
pub fn plcc(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateCorrelation("constant input to PLCC"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the average of their positions.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman correlation: Pearson correlation of average ranks.
pub fn srcc(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    plcc(&average_ranks(x), &average_ranks(y)).map_err(|_| Error::DegenerateCorrelation("constant input to SRCC"))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KendallVariant {
    /// Tie-corrected.
    #[default]
    TauB,
    /// `(C − D) / (n(n−1)/2)`.
    TauA,
}

/// Kendall tau-b.
pub fn krcc(x: &[f64], y: &[f64]) -> Result<f64> {
    krcc_with(x, y, KendallVariant::TauB)
}

fn tie_pairs(sorted: &[f64]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Merge sort returning the number of inversions.
fn sort_count_swaps(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = sort_count_swaps(&mut v[..mid], &mut buf[..mid]) + sort_count_swaps(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Kendall correlation in `O(n log n)` (Knight's algorithm).
pub fn krcc_with(x: &[f64], y: &[f64], variant: KendallVariant) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len() as u64;
    let n0 = n * (n - 1) / 2;
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));
    let xs: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
    let mut ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let n1 = tie_pairs(&xs);
    // Joint ties: runs equal in both coordinates.
    let mut n3 = 0u64;
    let mut run = 1u64;
    for k in 1..idx.len() {
        if xs[k] == xs[k - 1] && ys[k] == ys[k - 1] {
            run += 1;
        } else {
            n3 += run * (run - 1) / 2;
            run = 1;
        }
    }
    n3 += run * (run - 1) / 2;
    let mut buf = vec![0.0; ys.len()];
    let swaps = sort_count_swaps(&mut ys, &mut buf);
    let n2 = tie_pairs(&ys);
    let numer = n0 as i64 - n1 as i64 - n2 as i64 + n3 as i64 - 2 * swaps as i64;
    match variant {
        KendallVariant::TauB => {
            if n1 == n0 || n2 == n0 {
                return Err(Error::DegenerateCorrelation("all-tied input to KRCC"));
            }
            let denom = (((n0 - n1) as f64) * ((n0 - n2) as f64)).sqrt();
            Ok(numer as f64 / denom)
        }
        KendallVariant::TauA => {
            if n1 == n0 || n2 == n0 {
                return Err(Error::DegenerateCorrelation("all-tied input to KRCC"));
            }
            Ok(numer as f64 / n0 as f64)
        }
    }
}

pub fn rmse(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_pair(pred, target)?;
    let s: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((s / pred.len() as f64).sqrt())
}

pub fn mae(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_pair(pred, target)?;
    let s: f64 = pred.iter().zip(target).map(|(p, t)| (p - t).abs()).sum();
    Ok(s / pred.len() as f64)
}

/// Field order is the report column order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub plcc: f64,
    pub srcc: f64,
    pub krcc: f64,
    pub rmse: f64,
    pub mae: f64,
    pub n: usize,
}

impl EvalReport {
    pub const COLUMNS: [&'static str; 5] = ["PLCC", "SRCC", "KRCC", "RMSE", "MAE"];

    pub fn values(&self) -> [f64; 5] {
        [self.plcc, self.srcc, self.krcc, self.rmse, self.mae]
    }
}

pub fn evaluate(pred: &[f64], mos: &[f64]) -> Result<EvalReport> {
    evaluate_with(pred, mos, KendallVariant::TauB)
}

pub fn evaluate_with(pred: &[f64], mos: &[f64], kendall: KendallVariant) -> Result<EvalReport> {
    Ok(EvalReport {
        plcc: plcc(pred, mos)?,
        srcc: srcc(pred, mos)?,
        krcc: krcc_with(pred, mos, kendall)?,
        rmse: rmse(pred, mos)?,
        mae: mae(pred, mos)?,
        n: pred.len(),
    })
}
