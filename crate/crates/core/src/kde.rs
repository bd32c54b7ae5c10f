//! Gaussian kernel density estimation with analytic first and second
//! derivatives.
//!
//! For data `X_1..X_n` in `R^d` and bandwidth `h` the estimator is
//!
//! ```text
//! p(x) = 1/(n h^d) * sum_i K((x - X_i) / h),    K(u) = (2π)^{-d/2} exp(-|u|²/2)
//! ```
//!
//! Every quantity (density, gradient, Hessian, mean-shift target) is derived
//! from the same three weighted moments of `X_i - x`, so SCMS gets all of them
//! from a single pass over the data via [`KernelModel::moments`].

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};

/// `n` points in `d` dimensions, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    coords: Vec<f64>,
    dim: usize,
}

impl PointCloud {
    pub fn new(coords: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("point dimension must be at least 1"));
        }
        if coords.is_empty() {
            return Err(invalid("point cloud must contain at least one point"));
        }
        if coords.len() % dim != 0 {
            return Err(invalid(format!(
                "{} coordinates do not form rows of dimension {dim}",
                coords.len()
            )));
        }
        if let Some(pos) = coords.iter().position(|c| !c.is_finite()) {
            return Err(invalid(format!(
                "non-finite coordinate in point {}",
                pos / dim
            )));
        }
        Ok(Self { coords, dim })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut coords = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(invalid(format!(
                    "row {i} has {} columns, expected {dim}",
                    row.len()
                )));
            }
            coords.extend_from_slice(row);
        }
        Self::new(coords, dim)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    /// Always false: a cloud holds at least one point.
    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.coords
    }

    /// Subset of rows in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut coords = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            coords.extend_from_slice(self.point(i));
        }
        Self::new(coords, self.dim)
    }

    pub fn translated(&self, shift: &[f64]) -> Result<Self> {
        check_dim(self.dim, shift)?;
        let coords = self
            .iter()
            .flat_map(|p| p.iter().zip(shift).map(|(a, s)| a + s))
            .collect();
        Self::new(coords, self.dim)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.coords.iter().map(|c| c * factor).collect(), self.dim)
    }

    /// Per-coordinate (min, max).
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = self.point(0).to_vec();
        let mut hi = lo.clone();
        for p in self.iter() {
            for k in 0..self.dim {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }

    /// Per-coordinate sample standard deviations (n - 1 denominator).
    pub fn coordinate_std(&self) -> Vec<f64> {
        let n = self.len() as f64;
        (0..self.dim)
            .map(|k| {
                let mean = self.iter().map(|p| p[k]).sum::<f64>() / n;
                let ss: f64 = self.iter().map(|p| (p[k] - mean).powi(2)).sum();
                (ss / (n - 1.0)).sqrt()
            })
            .collect()
    }
}

pub(crate) fn check_dim(expected: usize, x: &[f64]) -> Result<()> {
    if x.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: x.len(),
        });
    }
    if x.iter().any(|c| !c.is_finite()) {
        return Err(invalid("query point has non-finite coordinates"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Kernel {
    #[default]
    Gaussian,
}

/// Kernel-weighted moments of the displacements `X_i - x`, with weights
/// `w_i = exp(-|x - X_i|² / 2h²)`.
#[derive(Debug, Clone)]
pub struct LocalMoments {
    /// `sum_i w_i`
    pub weight: f64,
    /// `sum_i w_i (X_i - x)`, length d
    pub first: Vec<f64>,
    /// `sum_i w_i (X_i - x)(X_i - x)^T`, d×d row-major
    pub second: Vec<f64>,
}

/// A point cloud together with an isotropic bandwidth and kernel.
#[derive(Debug, Clone)]
pub struct KernelModel {
    data: PointCloud,
    bandwidth: f64,
    kernel: Kernel,
}

impl KernelModel {
    pub fn new(data: PointCloud, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(invalid(format!(
                "bandwidth must be positive and finite, got {bandwidth}"
            )));
        }
        Ok(Self {
            data,
            bandwidth,
            kernel: Kernel::Gaussian,
        })
    }

    pub fn data(&self) -> &PointCloud {
        &self.data
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn dim(&self) -> usize {
        self.data.dim()
    }

    /// `1 / (n h^d (2π)^{d/2})`: converts a raw weight sum into a density.
    pub fn normalization(&self) -> f64 {
        let d = self.dim() as f64;
        let n = self.data.len() as f64;
        1.0 / (n * self.bandwidth.powf(d) * (2.0 * PI).powf(d / 2.0))
    }

    /// Single pass over the data accumulating the weighted moments at `x`.
    /// `second` is only filled when `with_second` is set.
    pub fn moments(&self, x: &[f64], with_second: bool) -> Result<LocalMoments> {
        let d = self.dim();
        check_dim(d, x)?;
        let scale = -0.5 / (self.bandwidth * self.bandwidth);
        let flat = self.data.as_flat();
        let (weight, first, mut second) = match d {
            1 => fixed_moments::<1>(flat, x, scale, with_second),
            2 => fixed_moments::<2>(flat, x, scale, with_second),
            3 => fixed_moments::<3>(flat, x, scale, with_second),
            _ => dyn_moments(flat, d, x, scale, with_second),
        };
        if with_second {
            for a in 0..d {
                for b in 0..a {
                    second[a * d + b] = second[b * d + a];
                }
            }
        } else {
            second.clear();
        }
        Ok(LocalMoments {
            weight,
            first,
            second,
        })
    }

    pub fn density(&self, x: &[f64]) -> Result<f64> {
        Ok(self.moments(x, false)?.weight * self.normalization())
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let m = self.moments(x, false)?;
        Ok(self.gradient_from(&m))
    }

    pub fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let m = self.moments(x, true)?;
        Ok(self.hessian_from(&m))
    }

    pub fn gradient_from(&self, m: &LocalMoments) -> Vec<f64> {
        let c = self.normalization() / (self.bandwidth * self.bandwidth);
        m.first.iter().map(|f| c * f).collect()
    }

    /// `H = c/h² · (S₂/h² − S₀ I)` with `c` the normalization constant.
    pub fn hessian_from(&self, m: &LocalMoments) -> DMatrix<f64> {
        let d = self.dim();
        let h2 = self.bandwidth * self.bandwidth;
        let c = self.normalization() / h2;
        DMatrix::from_fn(d, d, |a, b| {
            let s = m.second[a * d + b] / h2;
            c * if a == b { s - m.weight } else { s }
        })
    }

    /// Draws `m` points from the density itself: a uniformly chosen data
    /// point plus `h` times a standard Gaussian vector.
    pub fn sample_smoothed<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<PointCloud> {
        self.sample_with_noise_scale(m, self.bandwidth, rng)
    }

    /// As [`sample_smoothed`](Self::sample_smoothed) with an explicit noise
    /// scale, e.g. a vanishing one for degenerate-bootstrap checks.
    pub fn sample_with_noise_scale<R: Rng + ?Sized>(
        &self,
        m: usize,
        noise_scale: f64,
        rng: &mut R,
    ) -> Result<PointCloud> {
        if m == 0 {
            return Err(invalid("sample size must be at least 1"));
        }
        if !(noise_scale >= 0.0 && noise_scale.is_finite()) {
            return Err(invalid("noise scale must be finite and nonnegative"));
        }
        let n = self.data.len();
        let d = self.dim();
        let mut coords = Vec::with_capacity(m * d);
        for _ in 0..m {
            let base = self.data.point(rng.random_range(0..n));
            for &b in base {
                let z: f64 = rng.sample(StandardNormal);
                coords.push(b + noise_scale * z);
            }
        }
        PointCloud::new(coords, d)
    }
}

/// Silverman's multivariate normal reference rule,
/// `σ̂ · (4 / ((d + 2) n))^{1/(d+4)}`, where `σ̂` is the mean of the
/// per-coordinate sample standard deviations.
///
/// Known to oversmooth; used as an upper cap on candidate bandwidths.
pub fn normal_reference_bandwidth(data: &PointCloud) -> Result<f64> {
    let n = data.len();
    if n < 2 {
        return Err(invalid("normal reference rule needs at least 2 points"));
    }
    let d = data.dim() as f64;
    let std = data.coordinate_std();
    if std.iter().all(|&s| s == 0.0) {
        return Err(invalid("data has zero variance in every coordinate"));
    }
    let sigma = std.iter().sum::<f64>() / d;
    Ok(sigma * (4.0 / ((d + 2.0) * n as f64)).powf(1.0 / (d + 4.0)))
}

/// Every `x < EXP_UNDERFLOW` has `exp(x) == 0.0` in `f64`.
const EXP_UNDERFLOW: f64 = -746.0;

/// `exp(x)` for `x <= 0`. The system `exp` takes a slower path for
/// `|x| >= 512`, common at small bandwidths, so such arguments are shifted
/// into the fast range and the factor is applied afterwards (within 2 ulp).
#[inline]
fn kernel_exp(x: f64) -> f64 {
    if x < -512.0 {
        (x + 512.0).exp() * EXP_MINUS_512
    } else {
        x.exp()
    }
}

const EXP_MINUS_512: f64 = 4.377491037053051e-223;

type RawMoments = (f64, Vec<f64>, Vec<f64>);

/// Moment accumulation with the dimension known at compile time; performs the
/// same floating-point operations in the same order as [`dyn_moments`].
fn fixed_moments<const D: usize>(
    flat: &[f64],
    x: &[f64],
    scale: f64,
    with_second: bool,
) -> RawMoments {
    let x: [f64; D] = x.try_into().expect("dimension checked");
    let mut weight = 0.0;
    let mut first = [0.0; D];
    let mut second = [[0.0; D]; D];
    for p in flat.chunks_exact(D) {
        let mut diff = [0.0; D];
        let mut r2 = 0.0;
        for k in 0..D {
            let t = p[k] - x[k];
            diff[k] = t;
            r2 += t * t;
        }
        let e = scale * r2;
        if e < EXP_UNDERFLOW {
            continue;
        }
        let w = kernel_exp(e);
        weight += w;
        for k in 0..D {
            first[k] += w * diff[k];
        }
        if with_second {
            for a in 0..D {
                let wa = w * diff[a];
                for b in a..D {
                    second[a][b] += wa * diff[b];
                }
            }
        }
    }
    (weight, first.to_vec(), second.concat())
}

fn dyn_moments(flat: &[f64], d: usize, x: &[f64], scale: f64, with_second: bool) -> RawMoments {
    let mut weight = 0.0;
    let mut first = vec![0.0; d];
    let mut second = vec![0.0; d * d];
    let mut diff = vec![0.0; d];
    for p in flat.chunks_exact(d) {
        let mut r2 = 0.0;
        for k in 0..d {
            let t = p[k] - x[k];
            diff[k] = t;
            r2 += t * t;
        }
        let e = scale * r2;
        if e < EXP_UNDERFLOW {
            continue;
        }
        let w = kernel_exp(e);
        weight += w;
        for k in 0..d {
            first[k] += w * diff[k];
        }
        if with_second {
            for a in 0..d {
                let wa = w * diff[a];
                for b in a..d {
                    second[a * d + b] += wa * diff[b];
                }
            }
        }
    }
    (weight, first, second)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cloud(rows: &[&[f64]]) -> PointCloud {
        PointCloud::from_rows(rows).unwrap()
    }

    #[test]
    fn shifted_exp_matches_system_exp() {
        assert_eq!(EXP_MINUS_512, (-512.0f64).exp());
        let mut x = -745.0;
        while x < 0.0 {
            let (a, b) = (kernel_exp(x), x.exp());
            assert!((a - b).abs() <= 4.0 * f64::EPSILON * b, "{x}: {a} vs {b}");
            x += 0.37;
        }
        assert_eq!((EXP_UNDERFLOW - 1e-9).exp(), 0.0);
    }

    /// Direct kernel sum, written independently of `moments`.
    fn oracle_density(data: &[Vec<f64>], h: f64, x: &[f64]) -> f64 {
        let d = x.len() as i32;
        let mut s = 0.0;
        for xi in data {
            let u2: f64 = xi.iter().zip(x).map(|(a, b)| ((b - a) / h).powi(2)).sum();
            s += (2.0 * PI).powf(-(d as f64) / 2.0) * (-u2 / 2.0).exp();
        }
        s / (data.len() as f64 * h.powi(d))
    }

    #[test]
    fn density_single_kernel_at_center() {
        let m = KernelModel::new(cloud(&[&[0.0]]), 1.0).unwrap();
        let v = m.density(&[0.0]).unwrap();
        assert!((v - 0.398_942_280_401_432_7).abs() < 1e-15);
    }

    #[test]
    fn density_symmetric_pair() {
        let m = KernelModel::new(cloud(&[&[-1.0], &[1.0]]), 1.0).unwrap();
        let phi1 = (-0.5f64).exp() / (2.0 * PI).sqrt();
        assert!((m.density(&[0.0]).unwrap() - phi1).abs() < 1e-15);
        assert!((phi1 - 0.241_970_7).abs() < 1e-7);
    }

    #[test]
    fn density_three_points_matches_oracle() {
        let data = vec![vec![-1.0], vec![0.0], vec![1.0]];
        let expected = oracle_density(&data, 0.5, &[0.2]);
        // Frozen from the oracle: (1/1.5)·Σ φ((0.2 - X_i)/0.5).
        assert!((expected - 0.334_390_336_851_747_85).abs() < 1e-12);
        let m = KernelModel::new(PointCloud::from_rows(&data).unwrap(), 0.5).unwrap();
        assert!((m.density(&[0.2]).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn gradient_zero_by_symmetry_and_at_single_point() {
        let m = KernelModel::new(cloud(&[&[-1.0], &[1.0]]), 1.0).unwrap();
        assert_eq!(m.gradient(&[0.0]).unwrap(), vec![0.0]);
        let m = KernelModel::new(cloud(&[&[0.3, -0.7]]), 0.4).unwrap();
        assert_eq!(m.gradient(&[0.3, -0.7]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn hessian_of_standard_normal_at_mode() {
        let m = KernelModel::new(cloud(&[&[0.0]]), 1.0).unwrap();
        let h = m.hessian(&[0.0]).unwrap();
        assert!((h[(0, 0)] + 0.398_942_280_401_432_7).abs() < 1e-15);
    }

    #[test]
    fn derivatives_match_finite_differences_2d() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let coords: Vec<f64> = (0..100).map(|_| rng.random_range(-2.0..2.0)).collect();
        let m = KernelModel::new(PointCloud::new(coords, 2).unwrap(), 0.6).unwrap();
        let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let step = 0.6e-4;
        let g = m.gradient(&x).unwrap();
        let hs = m.hessian(&x).unwrap();
        for k in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[k] += step;
            xm[k] -= step;
            let fd = (m.density(&xp).unwrap() - m.density(&xm).unwrap()) / (2.0 * step);
            assert!((fd - g[k]).abs() <= 1e-6 * g[k].abs().max(1e-3));
            let gp = m.gradient(&xp).unwrap();
            let gm = m.gradient(&xm).unwrap();
            for j in 0..2 {
                let fd = (gp[j] - gm[j]) / (2.0 * step);
                assert!((fd - hs[(j, k)]).abs() <= 1e-5 * hs[(j, k)].abs().max(1e-3));
            }
        }
        assert_eq!(hs[(0, 1)], hs[(1, 0)]);
    }

    #[test]
    fn dimension_mismatch_and_non_finite_query() {
        let m = KernelModel::new(cloud(&[&[0.0, 0.0]]), 1.0).unwrap();
        assert!(matches!(
            m.density(&[0.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
        assert!(matches!(
            m.gradient(&[f64::NAN, 0.0]),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn rejects_bad_bandwidth_and_clouds() {
        let c = cloud(&[&[0.0]]);
        assert!(KernelModel::new(c.clone(), 0.0).is_err());
        assert!(KernelModel::new(c.clone(), f64::INFINITY).is_err());
        assert!(KernelModel::new(c, -1.0).is_err());
        assert!(PointCloud::new(vec![], 2).is_err());
        assert!(PointCloud::new(vec![1.0, f64::NAN], 2).is_err());
        assert!(PointCloud::new(vec![1.0, 2.0, 3.0], 2).is_err());
    }

    #[test]
    fn smoothed_samples_degenerate_and_deterministic() {
        let data = cloud(&[&[0.0, 1.0], &[5.0, -2.0], &[3.0, 3.0]]);
        let m = KernelModel::new(data.clone(), 1e-12).unwrap();
        let s = m
            .sample_smoothed(50, &mut ChaCha8Rng::seed_from_u64(3))
            .unwrap();
        for p in s.iter() {
            let hit = data
                .iter()
                .any(|q| p.iter().zip(q).all(|(a, b)| (a - b).abs() < 1e-8));
            assert!(hit);
        }
        let m = KernelModel::new(data, 0.5).unwrap();
        let a = m.sample_smoothed(20, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = m.sample_smoothed(20, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert!(m.sample_smoothed(0, &mut ChaCha8Rng::seed_from_u64(9)).is_err());
    }

    #[test]
    fn smoothed_samples_of_single_point_are_standard_normal() {
        let m = KernelModel::new(cloud(&[&[0.0]]), 1.0).unwrap();
        let s = m
            .sample_smoothed(100_000, &mut ChaCha8Rng::seed_from_u64(5))
            .unwrap();
        let v = s.as_flat();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
        assert!(mean.abs() < 0.02);
        assert!((var - 1.0).abs() < 0.05);
    }

    #[test]
    fn normal_reference_rule() {
        // Two coordinates with unit sample std, n = 100.
        let mut rows = Vec::new();
        for i in 0..100 {
            let s = if i % 2 == 0 { 1.0 } else { -1.0 };
            rows.push(vec![s, -s]);
        }
        let data = PointCloud::from_rows(&rows).unwrap();
        let std = data.coordinate_std();
        let scale = 1.0 / std[0];
        let unit = data.scaled(scale).unwrap();
        let h = normal_reference_bandwidth(&unit).unwrap();
        assert!((h - 100f64.powf(-1.0 / 6.0)).abs() < 1e-12);
        assert!((h - 0.4642).abs() < 1e-4);

        let h3 = normal_reference_bandwidth(&unit.scaled(3.0).unwrap()).unwrap();
        assert!((h3 - 3.0 * h).abs() < 1e-12);

        let mut rows4 = Vec::new();
        for _ in 0..4 {
            rows4.extend(rows.iter().cloned());
        }
        let data4 = PointCloud::from_rows(&rows4).unwrap();
        let unit4 = data4.scaled(1.0 / data4.coordinate_std()[0]).unwrap();
        let h4 = normal_reference_bandwidth(&unit4).unwrap();
        assert!((h4 / h - 4f64.powf(-1.0 / 6.0)).abs() < 1e-12);
    }

    #[test]
    fn normal_reference_rule_errors() {
        assert!(normal_reference_bandwidth(&cloud(&[&[1.0, 2.0]])).is_err());
        assert!(normal_reference_bandwidth(&cloud(&[&[1.0, 2.0], &[1.0, 2.0]])).is_err());
    }
}
