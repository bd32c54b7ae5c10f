//! Comparing point-set discretizations of manifolds.
//!
//! A manifold is represented by a mesh of points and the uniform law on the
//! manifold by the uniform law on those points. For two sets `A` and `B` the
//! coverage variable `W_AB = d(U_A, B)` is the distance from a uniform point
//! of `A` to `B`; its CDF is the fraction of `A` inside the `r`-dilation of `B`,
//! and it never exceeds `Haus(A, B)`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kde::{check_dim, PointCloud};
use crate::spatial::{linear_min_sq, NearestIndex};

/// A mesh of points discretizing a set, with its declared intrinsic dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifold {
    points: PointCloud,
    intrinsic_dim: usize,
}

impl Manifold {
    pub fn new(points: PointCloud, intrinsic_dim: usize) -> Self {
        Self {
            points,
            intrinsic_dim,
        }
    }

    /// A one-dimensional mesh (curve).
    pub fn curve(points: PointCloud) -> Self {
        Self::new(points, 1)
    }

    pub fn points(&self) -> &PointCloud {
        &self.points
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.intrinsic_dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }
}

fn check_pair(a: &Manifold, b: &Manifold) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(())
}

/// Euclidean distance from `x` to the nearest mesh point of `set`.
pub fn distance_to_set(x: &[f64], set: &Manifold) -> Result<f64> {
    check_dim(set.dim(), x)?;
    Ok(linear_min_sq(set.points.as_flat(), set.dim(), x).sqrt())
}

/// Distances from every mesh point of `from` to `to`, in `from`'s order.
pub fn projection_distances(from: &Manifold, to: &Manifold) -> Result<Vec<f64>> {
    check_pair(from, to)?;
    let index = NearestIndex::new(to.points.as_flat(), to.dim());
    let queries: Vec<&[f64]> = from.points.iter().collect();
    Ok(queries
        .par_iter()
        .map(|q| index.nearest_sq(q).sqrt())
        .collect())
}

/// Draws `count` coverage samples `d(U_A, B)`, with `U_A` uniform over the
/// mesh of `a`. When `a` has no more than `count` points every mesh point is
/// used once, in order, instead of sampling.
pub fn coverage_samples<R: Rng + ?Sized>(
    a: &Manifold,
    b: &Manifold,
    count: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_pair(a, b)?;
    if count == 0 {
        return Err(invalid("coverage sample count must be at least 1"));
    }
    if a.len() <= count {
        return projection_distances(a, b);
    }
    let picks: Vec<usize> = (0..count).map(|_| rng.random_range(0..a.len())).collect();
    let index = NearestIndex::new(b.points.as_flat(), b.dim());
    Ok(picks
        .par_iter()
        .map(|&i| index.nearest_sq(a.points.point(i)).sqrt())
        .collect())
}

/// Empirical CDFs of both coverage variables over a radius grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageDiagram {
    pub radii: Vec<f64>,
    /// Fraction of `A` within `r` of `B`.
    pub cdf_12: Vec<f64>,
    /// Fraction of `B` within `r` of `A`.
    pub cdf_21: Vec<f64>,
}

fn empirical_cdf(mut dists: Vec<f64>, radii: &[f64]) -> Vec<f64> {
    dists.sort_by(f64::total_cmp);
    let n = dists.len() as f64;
    radii
        .iter()
        .map(|&r| dists.partition_point(|&d| d <= r) as f64 / n)
        .collect()
}

fn check_radii(radii: &[f64]) -> Result<()> {
    if radii.is_empty() {
        return Err(invalid("radius grid is empty"));
    }
    if radii.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
        return Err(invalid("radii must be finite and nonnegative"));
    }
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("radii must be strictly increasing"));
    }
    Ok(())
}

/// Coverage diagram using every mesh point of both sets.
pub fn coverage_cdf(a: &Manifold, b: &Manifold, radii: &[f64]) -> Result<CoverageDiagram> {
    check_radii(radii)?;
    let d12 = projection_distances(a, b)?;
    let d21 = projection_distances(b, a)?;
    Ok(CoverageDiagram {
        radii: radii.to_vec(),
        cdf_12: empirical_cdf(d12, radii),
        cdf_21: empirical_cdf(d21, radii),
    })
}

/// L1 and L2 losses between two sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPair {
    pub loss1: f64,
    pub loss2: f64,
}

fn mean(values: impl Iterator<Item = f64>, len: usize) -> f64 {
    values.sum::<f64>() / len as f64
}

/// `Loss1 = (E d(U_A,B) + E d(U_B,A)) / 2`, `Loss2` the same with squared
/// distances; expectations over all mesh points.
pub fn loss_pair(a: &Manifold, b: &Manifold) -> Result<LossPair> {
    let d12 = projection_distances(a, b)?;
    let d21 = projection_distances(b, a)?;
    Ok(losses_from_distances(&d12, &d21))
}

pub(crate) fn losses_from_distances(d12: &[f64], d21: &[f64]) -> LossPair {
    let m1 = mean(d12.iter().copied(), d12.len());
    let m2 = mean(d21.iter().copied(), d21.len());
    let s1 = mean(d12.iter().map(|d| d * d), d12.len());
    let s2 = mean(d21.iter().map(|d| d * d), d21.len());
    LossPair {
        loss1: (m1 + m2) / 2.0,
        loss2: (s1 + s2) / 2.0,
    }
}

/// Hausdorff distance between the two meshes.
pub fn hausdorff(a: &Manifold, b: &Manifold) -> Result<f64> {
    let d12 = projection_distances(a, b)?;
    let d21 = projection_distances(b, a)?;
    Ok(d12.into_iter().chain(d21).fold(0.0, f64::max))
}

/// Everything `compare` reports about a pair of sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub diagram: CoverageDiagram,
    pub losses: LossPair,
    pub hausdorff: f64,
}

/// Coverage diagram, losses and Hausdorff distance from one pair of distance
/// sweeps. An empty `radii` means 101 evenly spaced radii on `[0, Haus]`.
pub fn compare(a: &Manifold, b: &Manifold, radii: &[f64]) -> Result<Comparison> {
    let d12 = projection_distances(a, b)?;
    let d21 = projection_distances(b, a)?;
    let haus = d12.iter().chain(&d21).copied().fold(0.0, f64::max);
    let radii = if radii.is_empty() {
        if haus == 0.0 {
            vec![0.0]
        } else {
            (0..=100).map(|i| haus * i as f64 / 100.0).collect()
        }
    } else {
        radii.to_vec()
    };
    check_radii(&radii)?;
    let losses = losses_from_distances(&d12, &d21);
    Ok(Comparison {
        diagram: CoverageDiagram {
            cdf_12: empirical_cdf(d12, &radii),
            cdf_21: empirical_cdf(d21, &radii),
            radii,
        },
        losses,
        hausdorff: haus,
    })
}
