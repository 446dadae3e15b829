//! Per-parameter posterior summaries.

use serde::{Deserialize, Serialize};

use super::sampler::PosteriorChain;
use crate::error::{Error, Result};
use crate::flatten::{Block, Flatten};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub block: Block,
    pub mean: f64,
    pub sd: f64,
    pub q05: f64,
    pub q95: f64,
    /// Batch-means effective sample size.
    pub ess: f64,
    /// Split-R̂; `None` when undefined (fewer than four draws or no
    /// within-half variation).
    pub rhat: Option<f64>,
}

/// Linear-interpolation quantile of sorted data (type 7).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = if xs.len() > 1 {
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, v)
}

fn batch_means_ess(xs: &[f64], var: f64) -> f64 {
    let n = xs.len();
    if var == 0.0 || n < 4 {
        return n as f64;
    }
    let size = (n as f64).sqrt().floor() as usize;
    let batches = n / size;
    let means: Vec<f64> = (0..batches)
        .map(|b| xs[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let (_, bvar) = mean_var(&means);
    if bvar == 0.0 {
        return n as f64;
    }
    (n as f64 * var / (size as f64 * bvar)).min(n as f64)
}

fn split_rhat(xs: &[f64]) -> Option<f64> {
    let half = xs.len() / 2;
    if half < 2 {
        return None;
    }
    let (a, b) = (&xs[..half], &xs[xs.len() - half..]);
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let w = 0.5 * (va + vb);
    if w <= 0.0 {
        return None;
    }
    let n = half as f64;
    let grand = 0.5 * (ma + mb);
    let between = n * ((ma - grand).powi(2) + (mb - grand).powi(2));
    let var_plus = (n - 1.0) / n * w + between / n;
    Some((var_plus / w).sqrt())
}

pub fn summarize_column(name: &str, block: Block, xs: &[f64]) -> ParamSummary {
    let (mean, var) = mean_var(xs);
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    ParamSummary {
        name: name.to_string(),
        block,
        mean,
        sd: var.sqrt(),
        q05: quantile_sorted(&sorted, 0.05),
        q95: quantile_sorted(&sorted, 0.95),
        ess: batch_means_ess(xs, var),
        rhat: split_rhat(xs),
    }
}

/// One summary per column of the draws, in column order.
pub fn diagnostics<S: Flatten>(chain: &PosteriorChain<S>) -> Result<Vec<ParamSummary>> {
    let first = chain.draws.first().ok_or(Error::EmptyChain)?;
    let template = first.columns(&chain.layout);
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(chain.draws.len()); template.len()];
    for draw in &chain.draws {
        for (k, c) in draw.columns(&chain.layout).into_iter().enumerate() {
            columns[k].push(c.value);
        }
    }
    Ok(template
        .iter()
        .zip(&columns)
        .map(|(c, xs)| summarize_column(&c.name, c.block, xs))
        .collect())
}
