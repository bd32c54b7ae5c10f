//! Coverage-risk estimation and bandwidth selection.
//!
//! Two estimators of the L1/L2 coverage risk of the ridge estimate:
//!
//! * **data splitting**: split the sample in halves, extract a ridge from each
//!   half and take the symmetric mean (squared) projection distance between
//!   the two ridges;
//! * **smoothed bootstrap**: draw samples from the KDE itself, extract a ridge
//!   from each, and average the losses against the ridge of the original data.
//!
//! The bandwidth is chosen as the minimizer of the estimated risk over a grid
//! capped by the normal reference rule.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coverage::{loss_pair, LossPair, Manifold};
use crate::error::{invalid, Result};
use crate::kde::{normal_reference_bandwidth, KernelModel, PointCloud};
use crate::scms::{extract_ridge, RidgeSet, ScmsConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Split,
    Bootstrap,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Split => "split",
            Method::Bootstrap => "bootstrap",
        })
    }
}

impl FromStr for Method {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "split" => Ok(Method::Split),
            "bootstrap" => Ok(Method::Bootstrap),
            _ => Err(invalid(format!(
                "unknown method '{s}' (valid: split, bootstrap)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    L1,
    L2,
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::L1 => "l1",
            Objective::L2 => "l2",
        })
    }
}

impl FromStr for Objective {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" | "L1" => Ok(Objective::L1),
            "l2" | "L2" => Ok(Objective::L2),
            _ => Err(invalid(format!("unknown objective '{s}' (valid: l1, l2)"))),
        }
    }
}

/// Default number of smoothed-bootstrap replicates.
pub const DEFAULT_REPLICATES: usize = 10;

/// Estimated L1/L2 coverage risk at one bandwidth. Both risks are `+inf`
/// when a ridge needed for the estimate came out empty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub h: f64,
    pub risk1: f64,
    pub risk2: f64,
    pub method: Method,
    pub replicates: usize,
}

impl RiskEstimate {
    fn sentinel(h: f64, method: Method, replicates: usize) -> Self {
        Self {
            h,
            risk1: f64::INFINITY,
            risk2: f64::INFINITY,
            method,
            replicates,
        }
    }

    pub fn is_sentinel(&self) -> bool {
        self.risk1.is_infinite()
    }

    pub fn value(&self, objective: Objective) -> f64 {
        match objective {
            Objective::L1 => self.risk1,
            Objective::L2 => self.risk2,
        }
    }
}

fn ridge_manifold(data: &PointCloud, h: f64, cfg: &ScmsConfig) -> Result<Option<Manifold>> {
    Ok(extract_ridge(data, h, cfg)?.to_manifold())
}

/// Split-risk from two given halves.
pub fn risk_from_halves(
    first: &PointCloud,
    second: &PointCloud,
    h: f64,
    cfg: &ScmsConfig,
) -> Result<RiskEstimate> {
    let (a, b) = rayon::join(
        || ridge_manifold(first, h, cfg),
        || ridge_manifold(second, h, cfg),
    );
    match (a?, b?) {
        (Some(a), Some(b)) => {
            let LossPair { loss1, loss2 } = loss_pair(&a, &b)?;
            Ok(RiskEstimate {
                h,
                risk1: loss1,
                risk2: loss2,
                method: Method::Split,
                replicates: 1,
            })
        }
        _ => Ok(RiskEstimate::sentinel(h, Method::Split, 1)),
    }
}

/// Random permutation split: the first half receives `ceil(n/2)` points.
pub fn split_halves<R: Rng + ?Sized>(
    data: &PointCloud,
    rng: &mut R,
) -> Result<(PointCloud, PointCloud)> {
    let mut perm: Vec<usize> = (0..data.len()).collect();
    perm.shuffle(rng);
    let mid = data.len().div_ceil(2);
    Ok((data.select(&perm[..mid])?, data.select(&perm[mid..])?))
}

/// Data-splitting risk estimate at bandwidth `h`.
pub fn risk_split<R: Rng + ?Sized>(
    data: &PointCloud,
    h: f64,
    cfg: &ScmsConfig,
    rng: &mut R,
) -> Result<RiskEstimate> {
    if data.len() < 4 {
        return Err(invalid("data splitting needs at least 4 points"));
    }
    let (a, b) = split_halves(data, rng)?;
    risk_from_halves(&a, &b, h, cfg)
}

/// Averages per-replicate losses in sorted order so the result does not
/// depend on replicate order.
fn average_losses(h: f64, losses: &[Option<LossPair>]) -> RiskEstimate {
    let b = losses.len();
    let Some(mut l): Option<Vec<LossPair>> = losses.iter().copied().collect() else {
        return RiskEstimate::sentinel(h, Method::Bootstrap, b);
    };
    if l.is_empty() {
        return RiskEstimate::sentinel(h, Method::Bootstrap, b);
    }
    l.sort_by(|x, y| x.loss1.total_cmp(&y.loss1).then(x.loss2.total_cmp(&y.loss2)));
    let r1 = l.iter().map(|p| p.loss1).sum::<f64>() / b as f64;
    let mut sq: Vec<f64> = l.iter().map(|p| p.loss2).collect();
    sq.sort_by(f64::total_cmp);
    let r2 = sq.iter().sum::<f64>() / b as f64;
    RiskEstimate {
        h,
        risk1: r1,
        risk2: r2,
        method: Method::Bootstrap,
        replicates: b,
    }
}

/// Bootstrap risk of the ridge of `data` against the ridges of the given
/// replicate samples.
pub fn risk_from_replicates(
    data: &PointCloud,
    replicates: &[PointCloud],
    h: f64,
    cfg: &ScmsConfig,
) -> Result<RiskEstimate> {
    if replicates.is_empty() {
        return Err(invalid("at least one bootstrap replicate is required"));
    }
    let Some(reference) = ridge_manifold(data, h, cfg)? else {
        return Ok(RiskEstimate::sentinel(h, Method::Bootstrap, replicates.len()));
    };
    let losses = replicates
        .par_iter()
        .map(|rep| match ridge_manifold(rep, h, cfg)? {
            Some(m) => loss_pair(&reference, &m).map(Some),
            None => Ok(None),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(average_losses(h, &losses))
}

/// Smoothed-bootstrap risk estimate at bandwidth `h` with `replicates` draws
/// of `n` points each from the KDE.
pub fn risk_bootstrap<R: Rng + ?Sized>(
    data: &PointCloud,
    h: f64,
    replicates: usize,
    cfg: &ScmsConfig,
    rng: &mut R,
) -> Result<RiskEstimate> {
    if data.len() < 2 {
        return Err(invalid("bootstrap needs at least 2 points"));
    }
    if replicates == 0 {
        return Err(invalid("replicate count must be at least 1"));
    }
    let model = KernelModel::new(data.clone(), h)?;
    let seeds: Vec<u64> = (0..replicates).map(|_| rng.next_u64()).collect();
    let samples = seeds
        .par_iter()
        .map(|&s| model.sample_smoothed(data.len(), &mut ChaCha8Rng::seed_from_u64(s)))
        .collect::<Result<Vec<_>>>()?;
    risk_from_replicates(data, &samples, h, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskCurve {
    /// One estimate per retained grid bandwidth, ascending in `h`.
    pub entries: Vec<RiskEstimate>,
    pub h_bar: f64,
    pub h_star: f64,
    pub objective: Objective,
    pub method: Method,
}

impl RiskCurve {
    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.value(self.objective)).collect()
    }

    pub fn bandwidths(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.h).collect()
    }
}

/// Index of the minimal value; ties go to the earliest entry.
pub fn argmin(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        match best {
            Some(b) if !(v.total_cmp(&values[b]).is_lt()) => {}
            _ => best = Some(i),
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Linear,
    Geometric,
}

/// `count` bandwidths from `lo` to `hi` inclusive.
pub fn bandwidth_grid(lo: f64, hi: f64, count: usize, spacing: Spacing) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) || count == 0 {
        return Err(invalid("grid needs 0 < min <= max and count >= 1"));
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    let step = |i: usize| i as f64 / (count - 1) as f64;
    Ok((0..count)
        .map(|i| match spacing {
            Spacing::Linear => lo + (hi - lo) * step(i),
            Spacing::Geometric => lo * (hi / lo).powf(step(i)),
        })
        .collect())
}

/// 12 geometric points on `[h_bar / 20, h_bar]`.
pub fn default_grid(data: &PointCloud) -> Result<Vec<f64>> {
    let h_bar = normal_reference_bandwidth(data)?;
    bandwidth_grid(h_bar / 20.0, h_bar, 12, Spacing::Geometric)
}

/// Options for [`select_bandwidth`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub method: Method,
    pub objective: Objective,
    pub replicates: usize,
    pub scms: ScmsConfig,
}

impl Default for Selection {
    fn default() -> Self {
        Self {
            method: Method::Split,
            objective: Objective::L1,
            replicates: DEFAULT_REPLICATES,
            scms: ScmsConfig::default(),
        }
    }
}

/// Estimates the risk at every grid bandwidth not above the normal reference
/// bandwidth and picks the minimizer (smallest `h` on ties).
pub fn select_bandwidth<R: Rng + ?Sized>(
    data: &PointCloud,
    grid: &[f64],
    opts: &Selection,
    rng: &mut R,
) -> Result<RiskCurve> {
    if grid.is_empty() {
        return Err(invalid("bandwidth grid is empty"));
    }
    if grid.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
        return Err(invalid("grid bandwidths must be positive and finite"));
    }
    let h_bar = normal_reference_bandwidth(data)?;
    let mut hs: Vec<f64> = grid.iter().copied().filter(|&h| h <= h_bar).collect();
    if hs.is_empty() {
        return Err(invalid(format!(
            "every grid bandwidth exceeds the normal reference bandwidth h_bar = {h_bar}"
        )));
    }
    hs.sort_by(f64::total_cmp);
    hs.dedup();
    // one seed per grid point keeps results independent of evaluation order
    let seeds: Vec<u64> = hs.iter().map(|_| rng.next_u64()).collect();
    let entries = hs
        .iter()
        .zip(&seeds)
        .map(|(&h, &seed)| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            match opts.method {
                Method::Split => risk_split(data, h, &opts.scms, &mut r),
                Method::Bootstrap => {
                    risk_bootstrap(data, h, opts.replicates, &opts.scms, &mut r)
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = entries.iter().map(|e| e.value(opts.objective)).collect();
    let h_star = entries[argmin(&values).expect("nonempty")].h;
    Ok(RiskCurve {
        entries,
        h_bar,
        h_star,
        objective: opts.objective,
        method: opts.method,
    })
}

/// L1/L2 loss of the ridge at `h` against a known ground truth; `+inf` for an
/// empty ridge.
pub fn oracle_loss(
    data: &PointCloud,
    truth: &Manifold,
    h: f64,
    cfg: &ScmsConfig,
) -> Result<LossPair> {
    Ok(match extract_ridge(data, h, cfg)?.to_manifold() {
        Some(m) => loss_pair(&m, truth)?,
        None => LossPair {
            loss1: f64::INFINITY,
            loss2: f64::INFINITY,
        },
    })
}

/// The ridge estimate at `h` together with its oracle loss.
pub fn ridge_with_oracle(
    data: &PointCloud,
    truth: &Manifold,
    h: f64,
    cfg: &ScmsConfig,
) -> Result<(RidgeSet, LossPair)> {
    let ridge = extract_ridge(data, h, cfg)?;
    let loss = match ridge.to_manifold() {
        Some(m) => loss_pair(&m, truth)?,
        None => LossPair {
            loss1: f64::INFINITY,
            loss2: f64::INFINITY,
        },
    };
    Ok((ridge, loss))
}
