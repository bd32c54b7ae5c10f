//! Prints the estimated coverage risk next to the true loss over a bandwidth
//! grid for a synthetic dataset.
//!
//! ```text
//! cargo run --release --example risk_sweep -- noisy_circle 2000 0.05 1.5 12 split
//! ```
//!
//! Arguments: kind, n, grid min, grid max, grid size, split|bootstrap, and
//! optionally the seed and the number of bootstrap replicates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ridgecov::datasets::{generate, Kind, Shape, SyntheticSpec};
use ridgecov::kde::normal_reference_bandwidth;
use ridgecov::risk::{
    bandwidth_grid, oracle_loss, risk_bootstrap, risk_split, Method, Spacing, DEFAULT_REPLICATES,
};
use ridgecov::scms::ScmsConfig;

fn arg<T: std::str::FromStr>(args: &[String], i: usize, default: Option<T>) -> T {
    match args.get(i) {
        Some(s) => s.parse().unwrap_or_else(|_| panic!("cannot parse argument {i}: {s}")),
        None => default.unwrap_or_else(|| panic!("missing argument {i}")),
    }
}

fn main() -> ridgecov::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let kind: Kind = arg(&args, 0, Some(Kind::NoisyCircle));
    let n: usize = arg(&args, 1, Some(1000));
    let lo: f64 = arg(&args, 2, Some(0.05));
    let hi: f64 = arg(&args, 3, Some(1.0));
    let count: usize = arg(&args, 4, Some(10));
    let method: Method = arg(&args, 5, Some(Method::Split));
    let seed: u64 = arg(&args, 6, Some(1));
    let replicates: usize = arg(&args, 7, Some(DEFAULT_REPLICATES));

    let shape = Shape::default_for(kind);
    let (cloud, truth) = generate(&SyntheticSpec::new(shape, n, shape.default_noise(), seed))?;
    let cfg = ScmsConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    println!("# {kind}, n = {n}, h_bar = {:.4}", normal_reference_bandwidth(&cloud)?);
    println!("h,risk1,risk2,true_loss1,true_loss2");
    for h in bandwidth_grid(lo, hi, count, Spacing::Geometric)? {
        let r = match method {
            Method::Split => risk_split(&cloud, h, &cfg, &mut rng)?,
            Method::Bootstrap => risk_bootstrap(&cloud, h, replicates, &cfg, &mut rng)?,
        };
        let o = oracle_loss(&cloud, &truth, h, &cfg)?;
        println!("{h:.4},{:.5},{:.6},{:.5},{:.6}", r.risk1, r.risk2, o.loss1, o.loss2);
    }
    Ok(())
}
