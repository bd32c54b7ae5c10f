//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs as a plain binary (`harness = false`) so the criteria share
//! one process and the Jensen check can see every estimate produced.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use ridgecov::coverage::{compare, coverage_cdf, coverage_samples, hausdorff, LossPair, Manifold};
use ridgecov::datasets::{generate, segment, Kind, Shape, SyntheticSpec};
use ridgecov::kde::{normal_reference_bandwidth, KernelModel, PointCloud};
use ridgecov::risk::{
    argmin, bandwidth_grid, oracle_loss, risk_bootstrap, risk_split, RiskEstimate, Spacing,
};
use ridgecov::scms::{extract_ridge, ScmsConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

/// Every (L1, L2) pair produced during the run, for the Jensen check.
#[derive(Default)]
struct Pairs {
    count: usize,
    worst_excess: f64,
}

impl Pairs {
    fn record(&mut self, first: f64, second: f64) {
        if first.is_infinite() && second.is_infinite() {
            return;
        }
        self.count += 1;
        self.worst_excess = self.worst_excess.max(first * first - second);
    }

    fn loss(&mut self, l: &LossPair) {
        self.record(l.loss1, l.loss2);
    }

    fn risk(&mut self, r: &RiskEstimate) {
        self.record(r.risk1, r.risk2);
    }
}

fn circle_data(n: usize, seed: u64) -> (PointCloud, Manifold) {
    generate(&SyntheticSpec::new(Shape::NoisyCircle { radius: 2.0 }, n, 0.2, seed)).unwrap()
}

fn timed(limit: Duration, start: Instant, mut out: Outcome) -> Outcome {
    let took = start.elapsed();
    if took > limit {
        out.pass = false;
        out.detail.push_str(&format!("; over time limit {limit:?}"));
    }
    out.detail.push_str(&format!(" [{:.1} s]", took.as_secs_f64()));
    out
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = a.iter().map(|x| x.abs()).fold(0.0, f64::max);
    diff / scale
}

fn derivatives() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut worst_g, mut worst_h) = (0.0f64, 0.0f64);
    for case in 0..200 {
        let d = 1 + case % 3;
        let n = rng.random_range(5..80);
        let spread: f64 = rng.random_range(0.5..3.0);
        let coords: Vec<f64> = (0..n * d)
            .map(|_| spread * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let cloud = PointCloud::new(coords, d).unwrap();
        let h = rng.random_range(0.3..1.5);
        let model = KernelModel::new(cloud.clone(), h).unwrap();
        let anchor = cloud.point(rng.random_range(0..n)).to_vec();
        let x: Vec<f64> = anchor
            .iter()
            .map(|a| a + 0.7 * h * rng.sample::<f64, _>(StandardNormal))
            .collect();

        let eps = 1e-5 * h;
        let grad = model.gradient(&x).unwrap();
        let hess = model.hessian(&x).unwrap();
        let mut fd_grad = vec![0.0; d];
        let mut fd_hess = vec![0.0; d * d];
        let mut an_hess = vec![0.0; d * d];
        for k in 0..d {
            let mut up = x.clone();
            let mut down = x.clone();
            up[k] += eps;
            down[k] -= eps;
            fd_grad[k] =
                (model.density(&up).unwrap() - model.density(&down).unwrap()) / (2.0 * eps);
            let (gu, gd) = (model.gradient(&up).unwrap(), model.gradient(&down).unwrap());
            for a in 0..d {
                fd_hess[a * d + k] = (gu[a] - gd[a]) / (2.0 * eps);
                an_hess[a * d + k] = hess[(a, k)];
            }
        }
        worst_g = worst_g.max(rel_err(&grad, &fd_grad));
        worst_h = worst_h.max(rel_err(&an_hess, &fd_hess));
    }
    let out = Outcome::new(
        worst_g <= 1e-6 && worst_h <= 1e-5,
        format!("200 cases, worst relative error gradient {worst_g:.2e}, Hessian {worst_h:.2e}"),
    );
    timed(Duration::from_secs(10), start, out)
}

fn random_manifold(rng: &mut ChaCha8Rng, d: usize) -> Manifold {
    let m = rng.random_range(1..300);
    if rng.random_bool(0.5) {
        let coords = (0..m * d).map(|_| rng.random_range(-2.0..2.0)).collect();
        Manifold::new(PointCloud::new(coords, d).unwrap(), d)
    } else {
        // noisy arc
        let r: f64 = rng.random_range(0.5..2.0);
        let coords = (0..m)
            .flat_map(|i| {
                let t = 3.0 * i as f64 / m as f64;
                let mut p = vec![0.0; d];
                p[0] = r * t.cos();
                if d > 1 {
                    p[1] = r * t.sin();
                }
                p
            })
            .map(|c| c + 0.05 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Manifold::curve(PointCloud::new(coords, d).unwrap())
    }
}

fn coverage_bounds(pairs: &mut Pairs) -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut failures = Vec::new();
    let mut samples = 0;
    for case in 0..50 {
        let d = 1 + case % 3;
        let a = random_manifold(&mut rng, d);
        let b = random_manifold(&mut rng, d);
        let haus = hausdorff(&a, &b).unwrap();
        let ws = coverage_samples(&a, &b, 200, &mut rng).unwrap();
        samples += ws.len();
        if ws.iter().any(|&w| w > haus) {
            failures.push(format!("case {case}: sample above Hausdorff"));
        }
        let mut radii: Vec<f64> = (0..60).map(|i| 1.5 * haus * i as f64 / 59.0).collect();
        radii.push(haus);
        radii.sort_by(f64::total_cmp);
        radii.dedup();
        let cd = coverage_cdf(&a, &b, &radii).unwrap();
        for cdf in [&cd.cdf_12, &cd.cdf_21] {
            if cdf.windows(2).any(|w| w[1] < w[0]) {
                failures.push(format!("case {case}: CDF decreases"));
            }
            if radii.iter().zip(cdf).any(|(r, c)| *r >= haus && *c != 1.0) {
                failures.push(format!("case {case}: CDF below 1 beyond Hausdorff"));
            }
        }
        pairs.loss(&ridgecov::coverage::loss_pair(&a, &b).unwrap());
    }
    let out = Outcome::new(
        failures.is_empty(),
        if failures.is_empty() {
            format!("50 pairs, {samples} coverage samples")
        } else {
            failures.join("; ")
        },
    );
    timed(Duration::from_secs(10), start, out)
}

fn circle_accuracy() -> Outcome {
    let start = Instant::now();
    let (cloud, truth) = circle_data(2000, 2015);
    let ridge = extract_ridge(&cloud, 0.25, &ScmsConfig::default()).unwrap();
    let out = match ridge.to_manifold() {
        Some(m) => {
            let d = hausdorff(&m, &truth).unwrap();
            Outcome::new(d < 0.15, format!("{} ridge points, Hausdorff {d:.4}", ridge.len()))
        }
        None => Outcome::new(false, "empty ridge"),
    };
    timed(Duration::from_secs(60), start, out)
}

/// Three-point running median; the endpoints are kept.
fn median3(v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    for i in 1..v.len().saturating_sub(1) {
        let mut w = [v[i - 1], v[i], v[i + 1]];
        w.sort_by(f64::total_cmp);
        out[i] = w[1];
    }
    out
}

/// Interior strict local minima, with plateaus of equal values counted once.
fn interior_minima(v: &[f64]) -> usize {
    let mut runs: Vec<f64> = Vec::new();
    for &x in v {
        if runs.last() != Some(&x) {
            runs.push(x);
        }
    }
    (1..runs.len().saturating_sub(1))
        .filter(|&i| runs[i] < runs[i - 1] && runs[i] < runs[i + 1])
        .count()
}

fn fmt_curve(hs: &[f64], v: &[f64]) -> String {
    hs.iter()
        .zip(v)
        .map(|(h, r)| format!("{h:.3}:{r:.4}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn split_curve(cloud: &PointCloud, grid: &[f64], seed: u64, pairs: &mut Pairs) -> Vec<f64> {
    let cfg = ScmsConfig::default();
    grid.iter()
        .enumerate()
        .map(|(i, &h)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed + i as u64);
            let r = risk_split(cloud, h, &cfg, &mut rng).unwrap();
            pairs.risk(&r);
            r.risk1
        })
        .collect()
}

fn u_shape(pairs: &mut Pairs) -> Outcome {
    let start = Instant::now();
    let spiral = Shape::default_for(Kind::Spiral);
    let datasets = [
        (
            "spiral",
            generate(&SyntheticSpec::new(spiral, 1000, spiral.default_noise(), 31)).unwrap().0,
        ),
        ("noisy_circle", circle_data(2000, 32).0),
    ];
    let mut pass = true;
    let mut notes = Vec::new();
    for (name, cloud) in &datasets {
        // from deep under-smoothing to past the normal reference rule, where
        // the structure starts to wash out
        let h_bar = normal_reference_bandwidth(cloud).unwrap();
        let grid = bandwidth_grid(h_bar / 20.0, 4.0 * h_bar, 12, Spacing::Geometric).unwrap();
        let risks = split_curve(cloud, &grid, 3100, pairs);
        let smooth = median3(&risks);
        let minima = interior_minima(&smooth);
        let min = risks.iter().copied().fold(f64::INFINITY, f64::min);
        let (left, right) = (risks[0] / min, risks[risks.len() - 1] / min);
        let ok = minima == 1 && left >= 2.0 && right >= 2.0;
        pass &= ok;
        notes.push(format!(
            "{name}: {minima} interior minima, endpoint ratios {left:.2}/{right:.2} ({})",
            fmt_curve(&grid, &risks)
        ));
    }
    timed(Duration::from_secs(300), start, Outcome::new(pass, notes.join("; ")))
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum();
    cov / (va * vb).sqrt()
}

fn bootstrap_consistency(pairs: &mut Pairs) -> Outcome {
    let start = Instant::now();
    let (cloud, truth) = circle_data(2000, 41);
    let cfg = ScmsConfig::default();
    let h_bar = normal_reference_bandwidth(&cloud).unwrap();
    let grid = bandwidth_grid(h_bar / 4.0, 2.0 * h_bar, 10, Spacing::Geometric).unwrap();
    let mut boot = Vec::new();
    let mut oracle = Vec::new();
    for (i, &h) in grid.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(4100 + i as u64);
        let r = risk_bootstrap(&cloud, h, 10, &cfg, &mut rng).unwrap();
        pairs.risk(&r);
        boot.push(r.risk1);
        let l = oracle_loss(&cloud, &truth, h, &cfg).unwrap();
        pairs.loss(&l);
        oracle.push(l.loss1);
    }
    let rho = pearson(&boot, &oracle);
    let (ib, io) = (argmin(&boot).unwrap(), argmin(&oracle).unwrap());
    let out = Outcome::new(
        rho >= 0.9 && ib.abs_diff(io) <= 1,
        format!(
            "correlation {rho:.3}, argmin h {:.3} vs oracle {:.3} (bootstrap {}; oracle {})",
            grid[ib],
            grid[io],
            fmt_curve(&grid, &boot),
            fmt_curve(&grid, &oracle)
        ),
    );
    timed(Duration::from_secs(600), start, out)
}

fn variance_regime(pairs: &mut Pairs) -> Outcome {
    let start = Instant::now();
    let cfg = ScmsConfig::default();
    let mut means = BTreeMap::new();
    for n in [1000usize, 4000] {
        let mut total = 0.0;
        for seed in 0..20u64 {
            let (cloud, truth) = circle_data(n, 7000 + seed);
            let l = oracle_loss(&cloud, &truth, 0.15, &cfg).unwrap();
            pairs.loss(&l);
            total += l.loss1;
        }
        means.insert(n, total / 20.0);
    }
    let (small, large) = (means[&1000], means[&4000]);
    let out = Outcome::new(
        large < small,
        format!("mean oracle loss1 at h = 0.15: n=1000 {small:.5}, n=4000 {large:.5}"),
    );
    timed(Duration::from_secs(600), start, out)
}

fn helix_representation(pairs: &mut Pairs) -> Outcome {
    let start = Instant::now();
    let shape = Shape::default_for(Kind::Helix);
    let (cloud, spiral) =
        generate(&SyntheticSpec::new(shape, 1000, shape.default_noise(), 51)).unwrap();
    let data = Manifold::new(cloud, 3);
    let top = match shape {
        Shape::Helix { pitch, .. } => 6.0 * std::f64::consts::PI * pitch,
        _ => unreachable!(),
    };
    let line = segment(&[0.0, 0.0, 0.0], &[0.0, 0.0, top], spiral.len()).unwrap();
    let reach = hausdorff(&data, &spiral)
        .unwrap()
        .max(hausdorff(&data, &line).unwrap());
    let radii: Vec<f64> = (0..=100).map(|i| reach * i as f64 / 100.0).collect();
    let with_spiral = compare(&data, &spiral, &radii).unwrap();
    let with_line = compare(&data, &line, &radii).unwrap();
    pairs.loss(&with_spiral.losses);
    pairs.loss(&with_line.losses);
    // coverage of the data by each curve decides; the reverse direction is reported only
    let (s, l) = (&with_spiral.diagram.cdf_12, &with_line.diagram.cdf_12);
    let dominated = s.iter().zip(l).all(|(a, b)| a >= b);
    let strict = s.iter().zip(l).filter(|(a, b)| a > b).count();
    let pass = dominated && 2 * strict >= radii.len();
    let (rs, rl) = (&with_spiral.diagram.cdf_21, &with_line.diagram.cdf_21);
    let reverse = rs.iter().zip(rl).all(|(a, b)| a >= b);
    let notes = [
        format!(
            "data coverage: spiral >= line at every radius: {dominated}, strictly at {strict}/{}",
            radii.len()
        ),
        format!("curve coverage: spiral >= line at every radius: {reverse}"),
    ];
    timed(Duration::from_secs(10), start, Outcome::new(pass, notes.join("; ")))
}

fn run_cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_ridgecov"))
        .args(args)
        .arg("--output-dir")
        .arg(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "{args:?} exited with {}: {}",
            out.status,
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(())
}

fn dir_contents(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

fn cli_determinism() -> Outcome {
    let start = Instant::now();
    let root = tempfile::tempdir().unwrap();
    let fixtures = root.path().join("fixtures");
    if let Err(e) = run_cli(&fixtures, &["gen", "--kind", "noisy_circle", "--n", "300", "--seed", "9"]) {
        return Outcome::new(false, e);
    }
    let sample = fixtures.join("sample.csv");
    let truth = fixtures.join("truth.csv");
    let sample = sample.to_str().unwrap();
    let truth = truth.to_str().unwrap();
    let commands: Vec<(&str, Vec<&str>)> = vec![
        ("gen", vec!["gen", "--kind", "three_spirals", "--n", "400", "--seed", "3"]),
        ("ridge", vec!["ridge", "--input", sample, "--h", "0.3"]),
        (
            "select-split",
            vec!["select", "--input", sample, "--grid", "0.1:0.5:4:geom", "--seed", "5", "--emit-ridge"],
        ),
        (
            "select-bootstrap",
            vec![
                "select", "--input", sample, "--grid", "0.15:0.45:3:lin", "--method", "bootstrap",
                "--replicates", "3", "--objective", "l2", "--seed", "6",
            ],
        ),
        ("compare", vec!["compare", "--input", sample, truth]),
    ];
    let mut failures = Vec::new();
    for (name, args) in &commands {
        let mut outputs = Vec::new();
        for (run, threads) in [(0, "1"), (1, "1"), (2, "4")] {
            let dir = root.path().join(format!("{name}-{run}"));
            let mut full: Vec<&str> = vec!["--threads", threads];
            full.extend(args.iter().copied());
            if let Err(e) = run_cli(&dir, &full) {
                failures.push(e);
                break;
            }
            outputs.push(dir_contents(&dir));
        }
        if outputs.len() == 3 && !(outputs[0] == outputs[1] && outputs[1] == outputs[2]) {
            failures.push(format!("{name}: outputs differ"));
        }
    }
    let out = Outcome::new(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{} commands, 3 runs each (threads 1, 1, 4), bit-identical", commands.len())
        } else {
            failures.join("; ")
        },
    );
    timed(Duration::from_secs(600), start, out)
}

fn main() {
    let mut pairs = Pairs::default();
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut report = |id: u32, name: &'static str, out: Outcome| {
        println!(
            "[{}] {id}. {name}: {}",
            if out.pass { "PASS" } else { "FAIL" },
            out.detail
        );
        results.push((id, name, out));
    };
    report(1, "derivative correctness", derivatives());
    report(2, "coverage bounded by Hausdorff", coverage_bounds(&mut pairs));
    report(4, "circle ridge accuracy", circle_accuracy());
    report(5, "split risk is U-shaped", u_shape(&mut pairs));
    report(6, "bootstrap risk tracks oracle loss", bootstrap_consistency(&mut pairs));
    report(7, "oracle loss falls with n", variance_regime(&mut pairs));
    report(8, "helix coverage diagram", helix_representation(&mut pairs));
    report(9, "CLI determinism", cli_determinism());
    let jensen = Outcome::new(
        pairs.worst_excess <= 1e-12,
        format!(
            "{} L1/L2 pairs, max(L1² - L2) = {:.2e}",
            pairs.count, pairs.worst_excess
        ),
    );
    report(3, "Jensen inequality on all estimates", jensen);
    let failed = results.iter().filter(|r| !r.2.pass).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
