//! Subspace constrained mean shift.
//!
//! Each mesh point is moved by the mean-shift vector projected onto the span
//! of the trailing Hessian eigenvectors `V = [v_2, .., v_d]`:
//!
//! ```text
//! x <- x + V V^T (m(x) - x),    m(x) = sum_i w_i X_i / sum_i w_i
//! ```
//!
//! until the projected displacement drops below the tolerance. Because
//! `m(x) - x = h² ∇p(x) / p(x)`, fixed points are exactly the points where the
//! projected gradient `V V^T ∇p` vanishes. A converged point belongs to the
//! ridge estimate if the second eigenvalue is negative and its density is
//! above the configured fraction of the maximum density.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coverage::Manifold;
use crate::error::{invalid, Error, Result};
use crate::kde::{check_dim, KernelModel, PointCloud};

/// Relative gap below which the two leading eigenvalues count as tied.
const EIGEN_TIE_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tolerance {
    Absolute(f64),
    /// Multiple of the bandwidth.
    Relative(f64),
}

impl Tolerance {
    pub fn resolve(self, h: f64) -> f64 {
        match self {
            Tolerance::Absolute(t) => t,
            Tolerance::Relative(r) => r * h,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mesh {
    /// Start one trajectory from every data point.
    DataPoints,
    /// Regular lattice over the data bounding box.
    Grid { resolution: f64 },
}

/// Matrix whose trailing eigenvectors span the subspace SCMS moves in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subspace {
    /// Hessian of the density, `H`.
    Density,
    /// Hessian of the log-density, `H/p - g g^T/p²` (negated local inverse
    /// covariance). Tail points, where the gradient dominates, get pulled
    /// toward the ridge instead of stalling on spurious radial ridges.
    #[default]
    LogDensity,
}

impl std::str::FromStr for Subspace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "density" => Ok(Subspace::Density),
            "log_density" | "log-density" => Ok(Subspace::LogDensity),
            _ => Err(invalid(format!(
                "unknown subspace '{s}' (valid: density, log_density)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScmsConfig {
    pub max_iterations: usize,
    pub tolerance: Tolerance,
    pub mesh: Mesh,
    pub density_threshold_fraction: f64,
    pub subspace: Subspace,
}

impl Default for ScmsConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            tolerance: Tolerance::Relative(1e-6),
            mesh: Mesh::DataPoints,
            density_threshold_fraction: 0.05,
            subspace: Subspace::LogDensity,
        }
    }
}

impl ScmsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(invalid("max_iterations must be at least 1"));
        }
        let t = match self.tolerance {
            Tolerance::Absolute(t) | Tolerance::Relative(t) => t,
        };
        if !(t > 0.0 && t.is_finite()) {
            return Err(invalid("tolerance must be positive and finite"));
        }
        if !(0.0..=1.0).contains(&self.density_threshold_fraction) {
            return Err(invalid("density_threshold_fraction must lie in [0, 1]"));
        }
        if let Mesh::Grid { resolution } = self.mesh {
            if !(resolution > 0.0 && resolution.is_finite()) {
                return Err(invalid("grid resolution must be positive and finite"));
            }
        }
        Ok(())
    }
}

/// Ordered eigen-decomposition of a symmetric matrix: eigenvalues descending,
/// each eigenvector's first nonzero coordinate positive. Eigenvectors are the
/// columns of `vectors`.
#[derive(Debug, Clone)]
pub struct OrderedEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

pub fn ordered_eigen(m: DMatrix<f64>) -> Result<OrderedEigen> {
    let d = m.nrows();
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite Hessian entry".into()));
    }
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("symmetric eigendecomposition did not converge".into()))?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(d, d);
    for (col, &i) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(i).into_owned();
        if let Some(first) = v.iter().find(|c| **c != 0.0) {
            if *first < 0.0 {
                v.neg_mut();
            }
        }
        vectors.set_column(col, &v);
    }
    Ok(OrderedEigen { values, vectors })
}

/// Everything one SCMS evaluation at `x` produces.
#[derive(Debug, Clone)]
pub struct StepState {
    /// `V V^T (m(x) - x)`
    pub displacement: Vec<f64>,
    pub density: f64,
    /// `|V V^T ∇p(x)|`
    pub projected_gradient: f64,
    pub eigenvalues: Vec<f64>,
}

impl StepState {
    pub fn lambda1(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// Second-largest Hessian eigenvalue; in one dimension the only one.
    pub fn lambda2(&self) -> f64 {
        *self.eigenvalues.get(1).unwrap_or(&self.eigenvalues[0])
    }

    pub fn displacement_norm(&self) -> f64 {
        norm(&self.displacement)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// Projects `v` onto span(columns 1.. of `vectors`).
fn project_normal(vectors: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    let d = v.len();
    let mut out = vec![0.0; d];
    for j in 1..d {
        let col = vectors.column(j);
        let coef: f64 = col.iter().zip(v).map(|(a, b)| a * b).sum();
        for k in 0..d {
            out[k] += coef * col[k];
        }
    }
    out
}

/// Evaluates the SCMS update at `x`. `eigenvalues` are always those of the
/// density Hessian; `subspace` only selects the projection.
pub fn scms_state(model: &KernelModel, x: &[f64], subspace: Subspace) -> Result<StepState> {
    check_dim(model.dim(), x)?;
    let m = model.moments(x, true)?;
    let density = m.weight * model.normalization();
    if !(density > 0.0) {
        return Err(Error::Divergence(format!(
            "density underflows to zero at {x:?}"
        )));
    }
    let hessian = model.hessian_from(&m);
    let grad = model.gradient_from(&m);
    let (values, vectors) = match subspace {
        Subspace::Density => {
            let eig = ordered_eigen(hessian)?;
            (eig.values, eig.vectors)
        }
        Subspace::LogDensity => {
            let d = grad.len();
            let log_h = DMatrix::from_fn(d, d, |a, b| {
                hessian[(a, b)] / density - grad[a] * grad[b] / (density * density)
            });
            let vectors = ordered_eigen(log_h)?.vectors;
            (ordered_eigen(hessian)?.values, vectors)
        }
    };
    let shift: Vec<f64> = m.first.iter().map(|f| f / m.weight).collect();
    let displacement = project_normal(&vectors, &shift);
    let projected_gradient = norm(&project_normal(&vectors, &grad));
    Ok(StepState {
        displacement,
        density,
        projected_gradient,
        eigenvalues: values,
    })
}

/// One SCMS update of `x` in the given subspace.
pub fn scms_step(model: &KernelModel, x: &[f64], subspace: Subspace) -> Result<Vec<f64>> {
    let s = scms_state(model, x, subspace)?;
    Ok(x.iter().zip(&s.displacement).map(|(a, b)| a + b).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgePoint {
    pub position: Vec<f64>,
    pub density: f64,
    /// Norm of the projected mean-shift displacement `|V V^T (m(x) - x)|`,
    /// i.e. the projected gradient in step units `h² |V V^T ∇p| / p`.
    pub projected_gradient_norm: f64,
    pub lambda2: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeSet {
    pub points: Vec<RidgePoint>,
    pub bandwidth: f64,
    pub density_threshold: f64,
    pub source_size: usize,
    pub dim: usize,
}

impl RidgeSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Ridge positions as a curve mesh; `None` when the ridge is empty.
    pub fn to_manifold(&self) -> Option<Manifold> {
        if self.points.is_empty() {
            return None;
        }
        let coords = self
            .points
            .iter()
            .flat_map(|p| p.position.iter().copied())
            .collect();
        PointCloud::new(coords, self.dim).ok().map(Manifold::curve)
    }
}

/// Result of following one mesh point.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub point: RidgePoint,
    /// Eigenvalues at the final position are tied (λ1 ≈ λ2).
    pub tied: bool,
}

pub fn follow(
    model: &KernelModel,
    start: &[f64],
    max_iterations: usize,
    tol: f64,
    subspace: Subspace,
) -> Trajectory {
    let mut x = start.to_vec();
    let mut last: Option<StepState> = None;
    for it in 1..=max_iterations {
        let state = match scms_state(model, &x, subspace) {
            Ok(s) => s,
            Err(_) => break,
        };
        let step = state.displacement_norm();
        if step < tol {
            let tied = state.eigenvalues.len() > 1
                && state.lambda1() - state.lambda2()
                    <= EIGEN_TIE_RTOL * state.lambda1().abs().max(state.lambda2().abs());
            return Trajectory {
                point: RidgePoint {
                    position: x,
                    density: state.density,
                    projected_gradient_norm: step,
                    lambda2: state.lambda2(),
                    iterations: it,
                    converged: true,
                },
                tied,
            };
        }
        for (a, b) in x.iter_mut().zip(&state.displacement) {
            *a += b;
        }
        last = Some(state);
        if it == max_iterations {
            break;
        }
    }
    let (density, pg, l2) = last
        .map(|s| (s.density, s.displacement_norm(), s.lambda2()))
        .unwrap_or((0.0, f64::INFINITY, f64::NAN));
    Trajectory {
        point: RidgePoint {
            position: x,
            density,
            projected_gradient_norm: pg,
            lambda2: l2,
            iterations: max_iterations,
            converged: false,
        },
        tied: false,
    }
}

/// Initial mesh for `data` under `mesh`.
pub fn build_mesh(data: &PointCloud, mesh: Mesh) -> Result<PointCloud> {
    match mesh {
        Mesh::DataPoints => Ok(data.clone()),
        Mesh::Grid { resolution } => {
            let (lo, hi) = data.bounding_box();
            let counts: Vec<usize> = lo
                .iter()
                .zip(&hi)
                .map(|(l, h)| ((h - l) / resolution).floor() as usize + 1)
                .collect();
            let total = counts
                .iter()
                .try_fold(1usize, |acc, &c| acc.checked_mul(c))
                .filter(|&t| t <= 50_000_000)
                .ok_or_else(|| invalid("grid mesh is too fine for the data extent"))?;
            let d = data.dim();
            let mut coords = Vec::with_capacity(total * d);
            let mut idx = vec![0usize; d];
            for _ in 0..total {
                for k in 0..d {
                    coords.push(lo[k] + idx[k] as f64 * resolution);
                }
                for k in (0..d).rev() {
                    idx[k] += 1;
                    if idx[k] < counts[k] {
                        break;
                    }
                    idx[k] = 0;
                }
            }
            PointCloud::new(coords, d)
        }
    }
}

/// Runs SCMS from every mesh point and keeps the converged, ridge-like,
/// sufficiently dense points. Output order follows the mesh order.
pub fn extract_ridge(data: &PointCloud, h: f64, cfg: &ScmsConfig) -> Result<RidgeSet> {
    cfg.validate()?;
    let model = KernelModel::new(data.clone(), h)?;
    let mesh = build_mesh(data, cfg.mesh)?;
    let tol = cfg.tolerance.resolve(h);
    let starts: Vec<&[f64]> = mesh.iter().collect();
    let trajectories: Vec<Trajectory> = starts
        .par_iter()
        .map(|s| follow(&model, s, cfg.max_iterations, tol, cfg.subspace))
        .collect();

    let norm = model.normalization();
    let data_max = data
        .iter()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|p| model.moments(p, false).map(|m| m.weight * norm).unwrap_or(0.0))
        .collect::<Vec<_>>()
        .into_iter()
        .fold(0.0, f64::max);
    let max_density = trajectories
        .iter()
        .filter(|t| t.point.converged)
        .map(|t| t.point.density)
        .fold(data_max, f64::max);
    let density_threshold = cfg.density_threshold_fraction * max_density;

    let points = trajectories
        .into_iter()
        .filter(|t| {
            t.point.converged
                && !t.tied
                && t.point.lambda2 < 0.0
                && t.point.density >= density_threshold
        })
        .map(|t| t.point)
        .collect();
    Ok(RidgeSet {
        points,
        bandwidth: h,
        density_threshold,
        source_size: data.len(),
        dim: data.dim(),
    })
}
