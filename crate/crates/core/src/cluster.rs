//! K-means donor clustering on FPC scores.
//!
//! Lloyd's algorithm with Forgy initialization, a fixed iteration cap, and
//! deterministic seeded restarts. Cluster quality uses a center-distance
//! silhouette: per point, a(i) is the distance to its own center and b(i) the
//! distance to the closest other center.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

const MAX_LLOYD_ITERS: usize = 500;

/// Result of one K-means run (the best restart).
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub k: usize,
    /// Cluster index per point, in input order.
    pub assignment: Vec<usize>,
    /// Cluster centers, k x d.
    pub centers: DMatrix<f64>,
    /// Total within-cluster sum of squared distances.
    pub wss: f64,
    /// Center-distance silhouette; NaN when k = 1 (undefined there).
    pub silhouette: f64,
}

/// One row of the k-selection table.
#[derive(Debug, Clone, Serialize)]
pub struct KRow {
    pub k: usize,
    pub wss: f64,
    pub silhouette: f64,
}

/// Silhouette per candidate k, plus the selected k.
#[derive(Debug, Clone, Serialize)]
pub struct KTable {
    pub rows: Vec<KRow>,
    pub best_k: usize,
}

fn check_points(points: &DMatrix<f64>) -> Result<()> {
    if points.nrows() == 0 || points.ncols() == 0 {
        return Err(Error::invalid(format!(
            "need a non-empty point matrix, got {}x{}",
            points.nrows(),
            points.ncols()
        )));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("points contain non-finite values".to_string()));
    }
    Ok(())
}

pub(crate) fn count_distinct(points: &DMatrix<f64>) -> usize {
    let m = points.nrows();
    let mut distinct = 0;
    'outer: for i in 0..m {
        for j in 0..i {
            if points.row(i) == points.row(j) {
                continue 'outer;
            }
        }
        distinct += 1;
    }
    distinct
}

fn sq_dist(points: &DMatrix<f64>, i: usize, centers: &DMatrix<f64>, c: usize) -> f64 {
    let d = points.ncols();
    let mut acc = 0.0;
    for j in 0..d {
        let diff = points[(i, j)] - centers[(c, j)];
        acc += diff * diff;
    }
    acc
}

fn assign_all(points: &DMatrix<f64>, centers: &DMatrix<f64>, assignment: &mut [usize]) {
    let k = centers.nrows();
    for i in 0..points.nrows() {
        let mut best = 0;
        let mut best_d = sq_dist(points, i, centers, 0);
        for c in 1..k {
            let d = sq_dist(points, i, centers, c);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        assignment[i] = best;
    }
}

fn wss_of(points: &DMatrix<f64>, centers: &DMatrix<f64>, assignment: &[usize]) -> f64 {
    (0..points.nrows())
        .map(|i| sq_dist(points, i, centers, assignment[i]))
        .sum()
}

/// One seeded Lloyd run. Returns the clustering and the per-iteration WSS
/// trace (evaluated after each assignment step).
fn lloyd_run(points: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> (Clustering, Vec<f64>) {
    let m = points.nrows();
    let d = points.ncols();

    // Forgy: k data points sampled without replacement.
    let chosen = rand::seq::index::sample(rng, m, k);
    let mut centers = DMatrix::zeros(k, d);
    for (c, i) in chosen.iter().enumerate() {
        centers.row_mut(c).copy_from(&points.row(i));
    }

    let mut assignment = vec![0usize; m];
    let mut trace = Vec::new();
    assign_all(points, &centers, &mut assignment);
    trace.push(wss_of(points, &centers, &assignment));

    for _ in 0..MAX_LLOYD_ITERS {
        // Update step: centers move to assigned means.
        let mut counts = vec![0usize; k];
        let mut sums = DMatrix::<f64>::zeros(k, d);
        for (i, &c) in assignment.iter().enumerate() {
            counts[c] += 1;
            for j in 0..d {
                sums[(c, j)] += points[(i, j)];
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for j in 0..d {
                    centers[(c, j)] = sums[(c, j)] / counts[c] as f64;
                }
            }
        }
        // Empty clusters restart at the point farthest from its own center.
        let mut reseeded = Vec::new();
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let mut far = usize::MAX;
            let mut far_d = -1.0;
            for i in 0..m {
                if reseeded.contains(&i) {
                    continue;
                }
                let dist = sq_dist(points, i, &centers, assignment[i]);
                if dist > far_d {
                    far_d = dist;
                    far = i;
                }
            }
            if far != usize::MAX {
                centers.row_mut(c).copy_from(&points.row(far));
                reseeded.push(far);
            }
        }

        let mut next = vec![0usize; m];
        assign_all(points, &centers, &mut next);
        trace.push(wss_of(points, &centers, &next));
        let stable = next == assignment;
        assignment = next;
        if stable && reseeded.is_empty() {
            break;
        }
    }

    let wss = wss_of(points, &centers, &assignment);
    let clustering = Clustering {
        k,
        assignment,
        centers,
        wss,
        silhouette: f64::NAN,
    };
    (clustering, trace)
}

/// K-means, best of `restarts` seeded runs: lowest WSS, ties to the earliest
/// restart. Same seed and inputs give bit-identical results.
pub fn kmeans(points: &DMatrix<f64>, k: usize, restarts: usize, seed: u64) -> Result<Clustering> {
    kmeans_detailed(points, k, restarts, seed).map(|(c, _)| c)
}

/// As [`kmeans`], also returning the winning restart's per-iteration WSS
/// trace for diagnostics.
pub fn kmeans_detailed(
    points: &DMatrix<f64>,
    k: usize,
    restarts: usize,
    seed: u64,
) -> Result<(Clustering, Vec<f64>)> {
    check_points(points)?;
    if k == 0 {
        return Err(Error::invalid("k must be at least 1".to_string()));
    }
    if restarts == 0 {
        return Err(Error::invalid("need at least 1 restart".to_string()));
    }
    let distinct = count_distinct(points);
    if k > distinct {
        return Err(Error::invalid(format!(
            "k = {k} exceeds the {distinct} distinct points"
        )));
    }

    let mut best: Option<(Clustering, Vec<f64>)> = None;
    for r in 0..restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        let (run, trace) = lloyd_run(points, k, &mut rng);
        debug_assert!(
            trace.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-12),
            "WSS must not increase across Lloyd iterations: {trace:?}"
        );
        let better = match &best {
            None => true,
            Some((b, _)) => run.wss < b.wss,
        };
        if better {
            best = Some((run, trace));
        }
    }
    let (mut clustering, trace) = best.expect("restarts >= 1");
    if k >= 2 {
        clustering.silhouette = silhouette(points, &clustering)?;
    }
    Ok((clustering, trace))
}

/// Mean center-distance silhouette of a clustering. Needs k >= 2.
pub fn silhouette(points: &DMatrix<f64>, clustering: &Clustering) -> Result<f64> {
    check_points(points)?;
    if clustering.k < 2 {
        return Err(Error::invalid(
            "silhouette is undefined for a single cluster".to_string(),
        ));
    }
    if clustering.assignment.len() != points.nrows() {
        return Err(Error::invalid(format!(
            "assignment length {} does not match {} points",
            clustering.assignment.len(),
            points.nrows()
        )));
    }
    let m = points.nrows();
    let mut total = 0.0;
    for i in 0..m {
        let own = clustering.assignment[i];
        let a = sq_dist(points, i, &clustering.centers, own).sqrt();
        let mut b = f64::INFINITY;
        for c in 0..clustering.k {
            if c == own {
                continue;
            }
            let d = sq_dist(points, i, &clustering.centers, c).sqrt();
            if d < b {
                b = d;
            }
        }
        let denom = a.max(b);
        total += if denom == 0.0 { 0.0 } else { (b - a) / denom };
    }
    Ok(total / m as f64)
}

/// Runs [`kmeans`] for each k in the inclusive range and picks the k with the
/// highest silhouette, ties to the smaller k. Returns the table and the
/// winning clustering.
pub fn tune_k(
    points: &DMatrix<f64>,
    k_range: (usize, usize),
    restarts: usize,
    seed: u64,
) -> Result<(KTable, Clustering)> {
    let (lo, hi) = k_range;
    if lo < 2 {
        return Err(Error::invalid(format!(
            "k range must start at 2 (silhouette is undefined below), got {lo}"
        )));
    }
    if hi < lo {
        return Err(Error::invalid(format!("empty k range {lo}..={hi}")));
    }
    let mut rows = Vec::with_capacity(hi - lo + 1);
    let mut best: Option<Clustering> = None;
    for k in lo..=hi {
        let clustering = kmeans(points, k, restarts, seed)?;
        rows.push(KRow {
            k,
            wss: clustering.wss,
            silhouette: clustering.silhouette,
        });
        let better = match &best {
            None => true,
            Some(b) => clustering.silhouette > b.silhouette,
        };
        if better {
            best = Some(clustering);
        }
    }
    let best = best.expect("non-empty k range");
    Ok((
        KTable {
            rows,
            best_k: best.k,
        },
        best,
    ))
}

/// Units sharing the treated unit's cluster, excluding the treated unit, in
/// input order. Errors when the treated unit sits alone.
pub fn donor_pool(clustering: &Clustering, treated: usize) -> Result<Vec<usize>> {
    if treated >= clustering.assignment.len() {
        return Err(Error::invalid(format!(
            "treated index {treated} out of range for {} points",
            clustering.assignment.len()
        )));
    }
    let own = clustering.assignment[treated];
    let pool: Vec<usize> = clustering
        .assignment
        .iter()
        .enumerate()
        .filter(|&(i, &c)| i != treated && c == own)
        .map(|(i, _)| i)
        .collect();
    if pool.is_empty() {
        return Err(Error::invalid(
            "treated unit shares a cluster with no other unit; no donors available".to_string(),
        ));
    }
    Ok(pool)
}
