//! Evaluation instruments.

use std::io::{Read, Write};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::harvest::HarvestModel;
use crate::ingest::{bin_counts, BinOptions, EventLog};
use crate::pipeline::{fit_and_evaluate, TaskConfig};
use crate::{Error, Result};

pub const DEFAULT_MAX_POINTS: usize = 512;

pub fn mean(y: &[f64]) -> f64 {
    y.iter().sum::<f64>() / y.len() as f64
}

/// Population standard deviation.
pub fn std_dev(y: &[f64]) -> f64 {
    let m = mean(y);
    (y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / y.len() as f64).sqrt()
}

/// Root-mean-square error divided by the population standard deviation of `actual`.
pub fn nrmse(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    if actual.len() != predicted.len() {
        return Err(Error::Dimension(format!(
            "{} actual values vs {} predictions",
            actual.len(),
            predicted.len()
        )));
    }
    if actual.len() < 2 {
        return Err(Error::Data("NRMSE needs at least two values".into()));
    }
    let sd = std_dev(actual);
    if !(sd > 0.0) {
        return Err(Error::Data("actual series has zero variance".into()));
    }
    let mse = predicted
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a).powi(2))
        .sum::<f64>()
        / actual.len() as f64;
    Ok(mse.sqrt() / sd)
}

/// Points in delay coordinates `(y(t), y(t − lag), …)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttractorCloud {
    pub points: Vec<Vec<f64>>,
    pub dim: usize,
    pub lag: usize,
    pub source_len: usize,
}

impl AttractorCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn from_points(points: Vec<Vec<f64>>) -> Result<Self> {
        let dim = points.first().map_or(0, Vec::len);
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::Dimension("points have different dimensions".into()));
        }
        let n = points.len();
        Ok(Self {
            points,
            dim,
            lag: 1,
            source_len: n,
        })
    }

    /// CSV with columns `x0, x1, …` (`x0` is the most recent coordinate).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record((0..self.dim).map(|k| format!("x{k}")))?;
        for p in &self.points {
            w.write_record(p.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(input);
        let mut points = Vec::new();
        for row in reader.records() {
            let row = row?;
            let line = row.position().map_or(0, |p| p.line());
            let p: std::result::Result<Vec<f64>, _> = row.iter().map(str::parse).collect();
            points.push(p.map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?);
        }
        Self::from_points(points)
    }
}

pub fn delay_embed(y: &[f64], dim: usize, lag: usize) -> Result<AttractorCloud> {
    if dim == 0 || lag == 0 {
        return Err(Error::InvalidParameter("embedding dimension and lag must be positive".into()));
    }
    let span = (dim - 1) * lag;
    if y.len() <= span {
        return Err(Error::Data(format!(
            "series of length {} is too short for dimension {dim}, lag {lag}",
            y.len()
        )));
    }
    let points = (0..y.len() - span)
        .map(|i| (0..dim).rev().map(|k| y[i + k * lag]).collect())
        .collect();
    Ok(AttractorCloud {
        points,
        dim,
        lag,
        source_len: y.len(),
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Minimum-cost perfect assignment of a square cost matrix (shortest augmenting
/// paths with row/column potentials). Returns `assignment[row] = col`.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // 1-based arrays; index 0 is the virtual unmatched column
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut matched_row = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        matched_row[0] = row;
        let mut col0 = 0;
        let mut min_v = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r0 = matched_row[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for col in 1..=n {
                if used[col] {
                    continue;
                }
                let cur = cost[r0 - 1][col - 1] - u[r0] - v[col];
                if cur < min_v[col] {
                    min_v[col] = cur;
                    way[col] = col0;
                }
                if min_v[col] < delta {
                    delta = min_v[col];
                    col1 = col;
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[matched_row[col]] += delta;
                    v[col] -= delta;
                } else {
                    min_v[col] -= delta;
                }
            }
            col0 = col1;
            if matched_row[col0] == 0 {
                break;
            }
        }
        loop {
            let col1 = way[col0];
            matched_row[col0] = matched_row[col1];
            col0 = col1;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for col in 1..=n {
        assignment[matched_row[col] - 1] = col - 1;
    }
    assignment
}

/// Exact optimal transport between uniform measures on `n` and `m` atoms.
///
/// Every source carries `m` units and every sink `n` units, so flows stay
/// integral; solved by successive shortest paths with Johnson potentials.
/// Returns the total cost divided by `n·m`.
pub fn uniform_transport_cost(cost: &[Vec<f64>]) -> f64 {
    let n = cost.len();
    let m = cost[0].len();
    let (src, sink) = (n + m, n + m + 1);
    let nodes = n + m + 2;
    let mut supply = vec![m as u64; n];
    let mut demand = vec![n as u64; m];
    let mut flow = vec![vec![0u64; m]; n];
    let mut pot = vec![0.0f64; nodes];
    let mut remaining = (n * m) as u64;

    while remaining > 0 {
        let mut dist = vec![f64::INFINITY; nodes];
        let mut prev = vec![usize::MAX; nodes];
        let mut done = vec![false; nodes];
        dist[src] = 0.0;
        loop {
            let mut cur = usize::MAX;
            let mut best = f64::INFINITY;
            for k in 0..nodes {
                if !done[k] && dist[k] < best {
                    best = dist[k];
                    cur = k;
                }
            }
            if cur == usize::MAX {
                break;
            }
            done[cur] = true;
            let relax = |to: usize, c: f64, dist: &mut Vec<f64>, prev: &mut Vec<usize>| {
                let reduced = (c + pot[cur] - pot[to]).max(0.0);
                if best + reduced < dist[to] {
                    dist[to] = best + reduced;
                    prev[to] = cur;
                }
            };
            if cur == src {
                for i in 0..n {
                    if supply[i] > 0 {
                        relax(i, 0.0, &mut dist, &mut prev);
                    }
                }
            } else if cur < n {
                for j in 0..m {
                    relax(n + j, cost[cur][j], &mut dist, &mut prev);
                }
            } else if cur < n + m {
                let j = cur - n;
                for i in 0..n {
                    if flow[i][j] > 0 {
                        relax(i, -cost[i][j], &mut dist, &mut prev);
                    }
                }
                if demand[j] > 0 {
                    relax(sink, 0.0, &mut dist, &mut prev);
                }
            }
        }
        let reach = dist[sink];
        debug_assert!(reach.is_finite(), "transport network disconnected");
        for k in 0..nodes {
            pot[k] += dist[k].min(reach);
        }

        // walk back to find the bottleneck, then push
        let mut path = vec![sink];
        while *path.last().unwrap() != src {
            path.push(prev[*path.last().unwrap()]);
        }
        path.reverse();
        let mut push = remaining;
        for e in path.windows(2) {
            let (a, b) = (e[0], e[1]);
            let cap = if a == src {
                supply[b]
            } else if b == sink {
                demand[a - n]
            } else if a >= n {
                flow[b][a - n]
            } else {
                u64::MAX
            };
            push = push.min(cap);
        }
        for e in path.windows(2) {
            let (a, b) = (e[0], e[1]);
            if a == src {
                supply[b] -= push;
            } else if b == sink {
                demand[a - n] -= push;
            } else if a >= n {
                flow[b][a - n] -= push;
            } else {
                flow[a][b - n] += push;
            }
        }
        remaining -= push;
    }

    let total: f64 = (0..n)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .map(|(i, j)| flow[i][j] as f64 * cost[i][j])
        .sum();
    total / (n * m) as f64
}

fn sample_indices(n: usize, max_points: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if n <= max_points {
        return (0..n).collect();
    }
    let mut idx = index::sample(rng, n, max_points).into_vec();
    idx.sort_unstable();
    idx
}

fn pick<'a>(cloud: &'a AttractorCloud, idx: &[usize]) -> Vec<&'a [f64]> {
    idx.iter().map(|&i| cloud.points[i].as_slice()).collect()
}

/// 2-Wasserstein distance between the uniform empirical measures of two clouds.
///
/// Clouds larger than `max_points` are subsampled without replacement using a
/// generator seeded with `seed`. Equal-sized clouds share one index draw, so
/// time-aligned clouds keep their pairing and a cloud is at distance 0 from itself.
pub fn wasserstein(a: &AttractorCloud, b: &AttractorCloud, max_points: usize, seed: u64) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Data("cannot compare an empty point cloud".into()));
    }
    if a.dim != b.dim {
        return Err(Error::Dimension(format!(
            "clouds live in dimensions {} and {}",
            a.dim, b.dim
        )));
    }
    if max_points == 0 {
        return Err(Error::InvalidParameter("max_points must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ia = sample_indices(a.len(), max_points, &mut rng);
    let pa = pick(a, &ia);
    let pb = if b.len() == a.len() {
        pick(b, &ia)
    } else {
        pick(b, &sample_indices(b.len(), max_points, &mut rng))
    };
    let cost: Vec<Vec<f64>> = pa
        .iter()
        .map(|x| pb.iter().map(|y| sq_dist(x, y)).collect())
        .collect();
    let mean_cost = if pa.len() == pb.len() {
        let assignment = min_cost_assignment(&cost);
        assignment.iter().enumerate().map(|(i, &j)| cost[i][j]).sum::<f64>() / pa.len() as f64
    } else {
        uniform_transport_cost(&cost)
    };
    Ok(mean_cost.max(0.0).sqrt())
}

/// One-sided power spectrum of the de-meaned series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Cycles per step.
    pub frequencies: Vec<f64>,
    pub power: Vec<f64>,
}

impl Spectrum {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["freq", "power"])?;
        for (f, p) in self.frequencies.iter().zip(&self.power) {
            w.write_record([f.to_string(), p.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `|X_k|²/N`, doubled for bins that stand for a ± frequency pair, so that the
/// powers add up to `Σ (y − ȳ)²`.
pub fn power_spectrum(y: &[f64]) -> Result<Spectrum> {
    let n = y.len();
    if n < 2 {
        return Err(Error::Data("power spectrum needs at least two values".into()));
    }
    let m = mean(y);
    let mut buf: Vec<Complex<f64>> = y.iter().map(|v| Complex::new(v - m, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let bins = n / 2 + 1;
    let mut frequencies = Vec::with_capacity(bins);
    let mut power = Vec::with_capacity(bins);
    for (k, c) in buf.iter().take(bins).enumerate() {
        let paired = k != 0 && !(n % 2 == 0 && k == n / 2);
        let scale = if paired { 2.0 } else { 1.0 };
        frequencies.push(k as f64 / n as f64);
        power.push(scale * c.norm_sqr() / n as f64);
    }
    Ok(Spectrum { frequencies, power })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub series: String,
    pub lag: usize,
    pub weight: f64,
}

/// Features ordered by decreasing `|weight|`, ties by (series, lag).
pub fn rank_features(model: &HarvestModel, top_k: usize) -> Vec<RankedFeature> {
    let mut ranked: Vec<RankedFeature> = model
        .feature_labels
        .iter()
        .zip(&model.weights)
        .map(|(l, &w)| RankedFeature {
            series: l.series.clone(),
            lag: l.lag,
            weight: w,
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.weight
            .abs()
            .total_cmp(&a.weight.abs())
            .then_with(|| a.series.cmp(&b.series))
            .then(a.lag.cmp(&b.lag))
    });
    ranked.truncate(top_k);
    ranked
}

/// Distinct series in ranking order, keeping each series' best rank.
pub fn top_series(model: &HarvestModel, k: usize) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for f in rank_features(model, usize::MAX) {
        if !out.contains(&f.series) {
            out.push(f.series);
        }
        if out.len() == k {
            break;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub tau: usize,
    pub interval_s: f64,
    pub nrmse: Option<f64>,
    /// `ok`, or the reason the cell failed.
    pub status: String,
}

/// Test NRMSE over a rectangular `(tau, interval)` grid, row-major in `tau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub taus: Vec<usize>,
    pub intervals: Vec<f64>,
    pub cells: Vec<SweepCell>,
    pub p: usize,
    pub r: f64,
    pub beta: f64,
}

impl SweepResult {
    pub fn cell(&self, tau_idx: usize, interval_idx: usize) -> &SweepCell {
        &self.cells[tau_idx * self.intervals.len() + interval_idx]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_sweep_cells(&self.cells, out)
    }
}

pub fn write_sweep_cells<W: Write>(cells: &[SweepCell], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["tau", "interval_s", "nrmse", "status"])?;
    for c in cells {
        w.write_record([
            c.tau.to_string(),
            c.interval_s.to_string(),
            c.nrmse.map(|v| v.to_string()).unwrap_or_default(),
            c.status.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep_cells<R: Read>(input: R) -> Result<Vec<SweepCell>> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["tau", "interval_s", "nrmse", "status"] {
        return Err(Error::Parse {
            line: 1,
            message: "expected header tau,interval_s,nrmse,status".into(),
        });
    }
    let mut cells = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |what: &str| Error::Parse {
            line,
            message: format!("malformed {what}"),
        };
        let nrmse = match &row[2] {
            "" => None,
            s => Some(s.parse::<f64>().map_err(|_| bad("nrmse"))?),
        };
        cells.push(SweepCell {
            tau: row[0].parse().map_err(|_| bad("tau"))?,
            interval_s: row[1].parse().map_err(|_| bad("interval_s"))?,
            nrmse,
            status: row[3].to_string(),
        });
    }
    Ok(cells)
}

/// Re-bins `log` at every interval and evaluates the test NRMSE of each
/// `(tau, interval)` cell. Failing cells are recorded, not fatal.
pub fn sweep(
    log: &EventLog,
    base: &TaskConfig,
    taus: &[usize],
    intervals: &[f64],
    bin: &BinOptions,
) -> Result<SweepResult> {
    if taus.is_empty() || intervals.is_empty() {
        return Err(Error::InvalidParameter("sweep ranges must be non-empty".into()));
    }
    let grid: Vec<(usize, f64)> = taus
        .iter()
        .flat_map(|&t| intervals.iter().map(move |&i| (t, i)))
        .collect();
    let cells: Vec<SweepCell> = grid
        .par_iter()
        .map(|&(tau, interval_s)| {
            let cfg = TaskConfig {
                tau,
                ..base.clone()
            };
            let outcome = bin_counts(log, interval_s, bin)
                .and_then(|m| fit_and_evaluate(&m, &cfg))
                .map(|(_, fit)| fit.nrmse_test);
            match outcome {
                Ok(v) => SweepCell {
                    tau,
                    interval_s,
                    nrmse: Some(v),
                    status: "ok".into(),
                },
                Err(e) => SweepCell {
                    tau,
                    interval_s,
                    nrmse: None,
                    status: e.to_string(),
                },
            }
        })
        .collect();
    if cells.iter().all(|c| c.nrmse.is_none()) {
        return Err(Error::Data(format!(
            "every sweep cell failed (first: {})",
            cells[0].status
        )));
    }
    Ok(SweepResult {
        taus: taus.to_vec(),
        intervals: intervals.to_vec(),
        cells,
        p: base.p,
        r: base.r,
        beta: base.beta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{FeatureLabel, NormStats};
    use rand::Rng;

    #[test]
    fn nrmse_examples() {
        let y = [0.0, 1.0, 0.0, 1.0];
        assert_eq!(nrmse(&y, &y).unwrap(), 0.0);
        assert_eq!(nrmse(&y, &[0.5; 4]).unwrap(), 1.0);
        assert_eq!(nrmse(&y, &[1.0, 0.0, 1.0, 0.0]).unwrap(), 2.0);
        assert!(nrmse(&[2.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(nrmse(&y, &y[..3]).is_err());
    }

    #[test]
    fn mean_predictor_scores_exactly_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 2..40 {
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            assert_eq!(nrmse(&y, &vec![mean(&y); n]).unwrap(), 1.0);
        }
    }

    #[test]
    fn embedding_examples() {
        assert_eq!(delay_embed(&[1.0, 2.0, 3.0], 3, 1).unwrap().len(), 1);
        let c = delay_embed(&[1.0, 2.0, 3.0, 4.0], 3, 1).unwrap();
        assert_eq!(c.points, vec![vec![3.0, 2.0, 1.0], vec![4.0, 3.0, 2.0]]);
        let flat = delay_embed(&[0.5; 10], 3, 1).unwrap();
        assert!(flat.points.iter().all(|p| p == &flat.points[0]));
        assert!(delay_embed(&[1.0, 2.0], 3, 1).is_err());
        for dim in 2..=3 {
            for lag in 1..=3 {
                let c = delay_embed(&[0.0; 20], dim, lag).unwrap();
                assert_eq!(c.len(), 20 - (dim - 1) * lag);
            }
        }
    }

    fn cloud(points: Vec<Vec<f64>>) -> AttractorCloud {
        AttractorCloud::from_points(points).unwrap()
    }

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> AttractorCloud {
        cloud((0..n).map(|_| (0..3).map(|_| rng.gen()).collect()).collect())
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for perm in permutations(n - 1) {
            for pos in 0..=perm.len() {
                let mut p = perm.clone();
                p.insert(pos, n - 1);
                out.push(p);
            }
        }
        out
    }

    /// Brute-force W2 between equal-size clouds.
    fn brute_w2(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
        permutations(a.len())
            .iter()
            .map(|p| p.iter().enumerate().map(|(i, &j)| sq_dist(&a[i], &b[j])).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
            / a.len() as f64
    }

    #[test]
    fn single_point_and_identity() {
        let a = cloud(vec![vec![0.0, 0.0, 0.0]]);
        let b = cloud(vec![vec![1.0, 0.0, 0.0]]);
        assert_eq!(wasserstein(&a, &b, 512, 0).unwrap(), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = random_cloud(&mut rng, 30);
        assert_eq!(wasserstein(&c, &c, 512, 0).unwrap(), 0.0);
        assert!(wasserstein(&c, &cloud(vec![]), 512, 0).is_err());
    }

    #[test]
    fn five_point_clouds_match_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let a = random_cloud(&mut rng, 5);
            let b = random_cloud(&mut rng, 5);
            let got = wasserstein(&a, &b, 512, 0).unwrap();
            let want = brute_w2(&a.points, &b.points).sqrt();
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
    }

    #[test]
    fn unequal_sizes_match_replicated_assignment() {
        // uniform measures on n and m atoms equal uniform measures on lcm copies
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for (n, m) in [(2, 4), (3, 2), (1, 5), (4, 6)] {
            let a = random_cloud(&mut rng, n);
            let b = random_cloud(&mut rng, m);
            let l = n * m / gcd(n, m);
            let rep = |c: &AttractorCloud, k: usize| -> Vec<Vec<f64>> {
                c.points.iter().flat_map(|p| std::iter::repeat(p.clone()).take(k)).collect()
            };
            let (ra, rb) = (rep(&a, l / n), rep(&b, l / m));
            let want = if l <= 6 {
                brute_w2(&ra, &rb)
            } else {
                let cost: Vec<Vec<f64>> =
                    ra.iter().map(|x| rb.iter().map(|y| sq_dist(x, y)).collect()).collect();
                let asg = min_cost_assignment(&cost);
                asg.iter().enumerate().map(|(i, &j)| cost[i][j]).sum::<f64>() / l as f64
            }
            .sqrt();
            let got = wasserstein(&a, &b, 512, 0).unwrap();
            assert!((got - want).abs() < 1e-10, "({n},{m}): {got} vs {want}");
        }
    }

    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }

    #[test]
    fn subsampling_is_seeded() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_cloud(&mut rng, 80);
        let b = random_cloud(&mut rng, 70);
        let x = wasserstein(&a, &b, 20, 9).unwrap();
        assert_eq!(x.to_bits(), wasserstein(&a, &b, 20, 9).unwrap().to_bits());
        assert!(x > 0.0);
    }

    #[test]
    fn spectrum_examples() {
        let flat = power_spectrum(&[2.0; 8]).unwrap();
        assert!(flat.power.iter().all(|&p| p == 0.0));
        let n = 32;
        let k = 4;
        let y: Vec<f64> = (0..n)
            .map(|t| (2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64).cos())
            .collect();
        let s = power_spectrum(&y).unwrap();
        assert_eq!(s.power.len(), n / 2 + 1);
        assert_eq!(s.frequencies[k], k as f64 / n as f64);
        for (i, p) in s.power.iter().enumerate() {
            if i == k {
                assert!((p - n as f64 / 2.0).abs() < 1e-9);
            } else {
                assert!(p.abs() < 1e-9, "bin {i} has {p}");
            }
        }
    }

    #[test]
    fn spectrum_satisfies_parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for n in [2, 3, 15, 16, 17, 100] {
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..5.0)).collect();
            let m = mean(&y);
            let energy: f64 = y.iter().map(|v| (v - m).powi(2)).sum();
            let total: f64 = power_spectrum(&y).unwrap().power.iter().sum();
            assert!((total - energy).abs() <= 1e-8 * energy, "n = {n}");
        }
        assert!(power_spectrum(&[1.0]).is_err());
    }

    fn model_with(weights: Vec<f64>, names: &[&str]) -> HarvestModel {
        HarvestModel {
            feature_labels: names
                .iter()
                .map(|s| {
                    let (series, lag) = s.split_once('@').unwrap();
                    FeatureLabel {
                        series: series.into(),
                        lag: lag.parse().unwrap(),
                    }
                })
                .collect(),
            weights,
            intercept: 100.0,
            beta: 0.0,
            fit_intercept: true,
            tau: 7,
            interval_s: 18.0,
            p: 1,
            norm_stats: NormStats {
                names: vec![],
                min: vec![],
                max: vec![],
            },
            target_name: "5e".into(),
        }
    }

    #[test]
    fn ranking_examples() {
        let m = model_with(vec![0.1, -0.5, 0.3], &["1e@0", "2e@0", "3e@0"]);
        let order: Vec<String> = rank_features(&m, 3).into_iter().map(|f| f.series).collect();
        assert_eq!(order, ["2e", "3e", "1e"]);
        assert_eq!(rank_features(&m, 1).len(), 1);
        let tied = model_with(vec![0.2, -0.2, 0.2, 0.2], &["9w@1", "9w@0", "10e@3", "2s@0"]);
        let order: Vec<(String, usize)> =
            rank_features(&tied, 4).into_iter().map(|f| (f.series, f.lag)).collect();
        assert_eq!(
            order,
            [("10e".into(), 3), ("2s".into(), 0), ("9w".into(), 0), ("9w".into(), 1)]
        );
        assert_eq!(top_series(&tied, 2), ["10e", "2s"]);
    }

    #[test]
    fn ranking_matches_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let names: Vec<String> = (0..20).map(|i| format!("{}n@{}", i % 7 + 1, i / 7)).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let weights: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let m = model_with(weights.clone(), &refs);
        // oracle: selection by repeated maximum
        let mut left: Vec<usize> = (0..20).collect();
        let mut expected = Vec::new();
        while !left.is_empty() {
            let (pos, _) = left
                .iter()
                .enumerate()
                .max_by(|(_, &a), (_, &b)| weights[a].abs().partial_cmp(&weights[b].abs()).unwrap())
                .unwrap();
            expected.push(weights[left.remove(pos)]);
        }
        let got: Vec<f64> = rank_features(&m, 20).iter().map(|f| f.weight).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn sweep_cells_round_trip_csv() {
        let cells = vec![
            SweepCell { tau: 3, interval_s: 18.0, nrmse: Some(0.75), status: "ok".into() },
            SweepCell { tau: 1, interval_s: 2.5, nrmse: None, status: "causality violation".into() },
        ];
        let mut buf = Vec::new();
        write_sweep_cells(&cells, &mut buf).unwrap();
        assert_eq!(read_sweep_cells(buf.as_slice()).unwrap(), cells);
    }
}
