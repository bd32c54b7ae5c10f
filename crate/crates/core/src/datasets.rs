//! Synthetic point clouds with known ground-truth curves.
//!
//! Samples are drawn uniformly by arc length along the curve and then
//! perturbed by isotropic Gaussian noise. The ground truth is returned as a
//! curve mesh with uniform arc-length spacing.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::coverage::Manifold;
use crate::error::{invalid, Result};
use crate::kde::PointCloud;

/// Mesh points per ground-truth curve (arm).
pub const TRUTH_MESH_POINTS: usize = 1000;

/// Parameter samples used to tabulate arc length.
const ARC_TABLE_SIZE: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Spiral,
    ThreeSpirals,
    Helix,
    NoisyCircle,
}

impl Kind {
    pub const ALL: [Kind; 4] = [Kind::Spiral, Kind::ThreeSpirals, Kind::Helix, Kind::NoisyCircle];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Spiral => "spiral",
            Kind::ThreeSpirals => "three_spirals",
            Kind::Helix => "helix",
            Kind::NoisyCircle => "noisy_circle",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Kind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Kind::ALL.iter().map(|k| k.name()).collect();
                invalid(format!(
                    "unknown dataset kind '{s}' (valid kinds: {})",
                    names.join(", ")
                ))
            })
    }
}

/// Curve family with its shape parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    /// `r(t) = pitch · t`, `t ∈ [π/2, 4π]`.
    Spiral { pitch: f64 },
    /// The spiral plus two copies rotated by ±2π/3.
    ThreeSpirals { pitch: f64 },
    /// `(R cos t, R sin t, pitch · t)`, `t ∈ [0, 6π]`.
    Helix { radius: f64, pitch: f64 },
    NoisyCircle { radius: f64 },
}

impl Shape {
    pub fn default_for(kind: Kind) -> Self {
        match kind {
            Kind::Spiral => Shape::Spiral { pitch: 1.0 },
            Kind::ThreeSpirals => Shape::ThreeSpirals { pitch: 1.0 },
            Kind::Helix => Shape::Helix {
                radius: 1.0,
                pitch: 0.2,
            },
            Kind::NoisyCircle => Shape::NoisyCircle { radius: 2.0 },
        }
    }

    pub fn kind(&self) -> Kind {
        match self {
            Shape::Spiral { .. } => Kind::Spiral,
            Shape::ThreeSpirals { .. } => Kind::ThreeSpirals,
            Shape::Helix { .. } => Kind::Helix,
            Shape::NoisyCircle { .. } => Kind::NoisyCircle,
        }
    }

    fn validate(&self) -> Result<()> {
        let params: &[f64] = match self {
            Shape::Spiral { pitch } | Shape::ThreeSpirals { pitch } => &[*pitch],
            Shape::Helix { radius, pitch } => &[*radius, *pitch],
            Shape::NoisyCircle { radius } => &[*radius],
        };
        if params.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(invalid(format!("shape parameters must be positive: {self:?}")));
        }
        Ok(())
    }

    fn arms(&self) -> Vec<Arm> {
        match *self {
            Shape::Spiral { pitch } => vec![Arm::Spiral { pitch, rotation: 0.0 }],
            Shape::ThreeSpirals { pitch } => (0..3)
                .map(|k| Arm::Spiral {
                    pitch,
                    rotation: 2.0 * PI * k as f64 / 3.0,
                })
                .collect(),
            Shape::Helix { radius, pitch } => vec![Arm::Helix { radius, pitch }],
            Shape::NoisyCircle { radius } => vec![Arm::Circle { radius }],
        }
    }

    /// Largest side of the noise-free curve's bounding box.
    pub fn extent(&self) -> f64 {
        let truth = self.truth_mesh();
        let (lo, hi) = truth.points().bounding_box();
        lo.iter().zip(&hi).map(|(l, h)| h - l).fold(0.0, f64::max)
    }

    /// Default noise level: 5% of the curve extent.
    pub fn default_noise(&self) -> f64 {
        0.05 * self.extent()
    }

    pub fn truth_mesh(&self) -> Manifold {
        let arms = self.arms();
        let dim = arms[0].dim();
        let mut coords = Vec::new();
        for arm in &arms {
            let table = ArcTable::new(arm);
            for j in 0..TRUTH_MESH_POINTS {
                let s = table.total * j as f64 / (TRUTH_MESH_POINTS - 1) as f64;
                coords.extend(arm.eval(table.param_at(s)));
            }
        }
        Manifold::curve(PointCloud::new(coords, dim).expect("finite curve"))
    }
}

#[derive(Debug, Clone, Copy)]
enum Arm {
    Spiral { pitch: f64, rotation: f64 },
    Helix { radius: f64, pitch: f64 },
    Circle { radius: f64 },
}

impl Arm {
    fn dim(&self) -> usize {
        match self {
            Arm::Helix { .. } => 3,
            _ => 2,
        }
    }

    fn range(&self) -> (f64, f64) {
        match self {
            Arm::Spiral { .. } => (PI / 2.0, 4.0 * PI),
            Arm::Helix { .. } => (0.0, 6.0 * PI),
            Arm::Circle { .. } => (0.0, 2.0 * PI),
        }
    }

    fn eval(&self, t: f64) -> Vec<f64> {
        match *self {
            Arm::Spiral { pitch, rotation } => {
                let r = pitch * t;
                vec![r * (t + rotation).cos(), r * (t + rotation).sin()]
            }
            Arm::Helix { radius, pitch } => vec![radius * t.cos(), radius * t.sin(), pitch * t],
            Arm::Circle { radius } => vec![radius * t.cos(), radius * t.sin()],
        }
    }
}

/// Cumulative arc length on a fine parameter grid, for arc-length sampling.
struct ArcTable {
    params: Vec<f64>,
    cumulative: Vec<f64>,
    total: f64,
}

impl ArcTable {
    fn new(arm: &Arm) -> Self {
        let (t0, t1) = arm.range();
        let params: Vec<f64> = (0..=ARC_TABLE_SIZE)
            .map(|i| t0 + (t1 - t0) * i as f64 / ARC_TABLE_SIZE as f64)
            .collect();
        let mut cumulative = Vec::with_capacity(params.len());
        let mut acc = 0.0;
        let mut prev = arm.eval(params[0]);
        cumulative.push(0.0);
        for &t in &params[1..] {
            let p = arm.eval(t);
            acc += prev
                .iter()
                .zip(&p)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            cumulative.push(acc);
            prev = p;
        }
        Self {
            params,
            cumulative,
            total: acc,
        }
    }

    fn param_at(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, self.total);
        let j = self.cumulative.partition_point(|&c| c < s).max(1);
        let (c0, c1) = (self.cumulative[j - 1], self.cumulative[j]);
        let frac = if c1 > c0 { (s - c0) / (c1 - c0) } else { 0.0 };
        self.params[j - 1] + frac * (self.params[j] - self.params[j - 1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub shape: Shape,
    pub n: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(shape: Shape, n: usize, noise_sigma: f64, seed: u64) -> Self {
        Self {
            shape,
            n,
            noise_sigma,
            seed,
        }
    }
}

/// Noisy sample and noise-free ground-truth mesh for `spec`.
pub fn generate(spec: &SyntheticSpec) -> Result<(PointCloud, Manifold)> {
    if spec.n == 0 {
        return Err(invalid("sample size must be at least 1"));
    }
    if !(spec.noise_sigma >= 0.0 && spec.noise_sigma.is_finite()) {
        return Err(invalid("noise_sigma must be finite and nonnegative"));
    }
    spec.shape.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let arms = spec.shape.arms();
    let tables: Vec<ArcTable> = arms.iter().map(ArcTable::new).collect();
    let total: f64 = tables.iter().map(|t| t.total).sum();
    let dim = arms[0].dim();
    let mut coords = Vec::with_capacity(spec.n * dim);
    for _ in 0..spec.n {
        // arm chosen in proportion to its length
        let mut s = rng.random_range(0.0..total);
        let mut k = 0;
        while k + 1 < tables.len() && s >= tables[k].total {
            s -= tables[k].total;
            k += 1;
        }
        for c in arms[k].eval(tables[k].param_at(s)) {
            let z: f64 = rng.sample(StandardNormal);
            coords.push(c + spec.noise_sigma * z);
        }
    }
    Ok((PointCloud::new(coords, dim)?, spec.shape.truth_mesh()))
}

/// `count` evenly spaced points on the segment from `a` to `b`.
pub fn segment(a: &[f64], b: &[f64], count: usize) -> Result<Manifold> {
    if a.len() != b.len() || count < 2 {
        return Err(invalid("segment needs matching endpoints and at least 2 points"));
    }
    let coords = (0..count)
        .flat_map(|i| {
            let f = i as f64 / (count - 1) as f64;
            a.iter().zip(b).map(move |(x, y)| x + f * (y - x))
        })
        .collect();
    Ok(Manifold::curve(PointCloud::new(coords, a.len())?))
}
