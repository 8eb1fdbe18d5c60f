//! Bootstrap comparison of the plain and flow-rectified fits on out-of-bag regions.

use std::thread;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::flow::build_flow_design;
use super::rectified_design;
use crate::data::{check_same_regions, FeatureMatrix, FlowPair, MortalityVector};
use crate::error::{Error, Result};
use crate::linalg::least_squares;
use crate::rng::indexed_stream;

pub const MIN_REPLICATES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Replicate {
    pub index: usize,
    pub mse_plain: f64,
    pub mse_rectified: f64,
    pub n_out_of_bag: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MseSummary {
    pub mean: f64,
    /// Sample standard deviation across replicates.
    pub std: f64,
}

impl MseSummary {
    fn of(values: &[f64]) -> Self {
        let m = values.len() as f64;
        let mean = values.iter().sum::<f64>() / m;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)
        } else {
            0.0
        };
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapResult {
    pub replicates: Vec<Replicate>,
    pub skipped: usize,
    pub plain: MseSummary,
    pub rectified: MseSummary,
}

impl BootstrapResult {
    /// `mean(rectified) − mean(plain)`.
    pub fn mean_difference(&self) -> f64 {
        self.rectified.mean - self.plain.mean
    }

    /// Standard error of the difference of the two means, `√((s_p² + s_r²)/m)`.
    pub fn pooled_standard_error(&self) -> f64 {
        let m = self.replicates.len() as f64;
        ((self.plain.std.powi(2) + self.rectified.std.powi(2)) / m).sqrt()
    }

    /// `replicate,mse_plain,mse_rectified` rows.
    pub fn csv_lines(&self) -> Vec<String> {
        let mut lines = vec!["replicate,mse_plain,mse_rectified".to_string()];
        lines.extend(self.replicates.iter().map(|r| {
            format!(
                "{},{},{}",
                r.index,
                crate::linalg::fmt_f64(r.mse_plain),
                crate::linalg::fmt_f64(r.mse_rectified)
            )
        }));
        lines
    }
}

fn rows_of(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

fn oob_mse(design: &DMatrix<f64>, z: &DVector<f64>, in_bag: &[usize], oob: &[usize]) -> Option<f64> {
    let names: Vec<String> = (0..design.ncols()).map(|j| format!("column_{j}")).collect();
    let yb = DVector::from_iterator(in_bag.len(), in_bag.iter().map(|&i| z[i]));
    let ls = least_squares(&rows_of(design, in_bag), &yb, &names).ok()?;
    let pred = rows_of(design, oob) * ls.coefficients;
    let err: f64 = oob.iter().zip(pred.iter()).map(|(&i, p)| (z[i] - p).powi(2)).sum();
    Some(err / oob.len() as f64)
}

fn replicate(
    index: usize,
    seed: u64,
    plain: &DMatrix<f64>,
    rect: &DMatrix<f64>,
    z: &DVector<f64>,
) -> Option<Replicate> {
    let n = z.len();
    let mut rng = indexed_stream(seed, "bootstrap", index as u64);
    let mut hit = vec![false; n];
    let in_bag: Vec<usize> = (0..n)
        .map(|_| {
            let i = rng.gen_range(0..n);
            hit[i] = true;
            i
        })
        .collect();
    let oob: Vec<usize> = (0..n).filter(|&i| !hit[i]).collect();
    if oob.is_empty() {
        return None;
    }
    Some(Replicate {
        index,
        mse_plain: oob_mse(plain, z, &in_bag, &oob)?,
        mse_rectified: oob_mse(rect, z, &in_bag, &oob)?,
        n_out_of_bag: oob.len(),
    })
}

/// Resamples regions with replacement `n_boot` times, fits both models on the
/// in-bag rows and scores them on the out-of-bag rows. The flow design is
/// evaluated once at the full observed `z`. Replicates whose out-of-bag set
/// is empty or whose in-bag design is rank deficient are skipped and counted.
pub fn bootstrap_cv(
    b: &FeatureMatrix,
    z: &MortalityVector,
    flows: &FlowPair,
    n_boot: usize,
    seed: u64,
) -> Result<BootstrapResult> {
    if n_boot < MIN_REPLICATES {
        return Err(Error::Config(format!(
            "bootstrap needs at least {MIN_REPLICATES} replicates, got {n_boot}"
        )));
    }
    check_same_regions(b.regions(), z.regions(), "bootstrap")?;
    let phi = build_flow_design(z, flows)?;
    let (rect, _) = rectified_design(b.matrix(), &phi.phi);
    let plain = b.matrix();
    let zv = z.z();

    let workers = thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(n_boot);
    let chunk = n_boot.div_ceil(workers);
    let results: Vec<Option<Replicate>> = thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let (plain, rect) = (plain, &rect);
                s.spawn(move || {
                    (w * chunk..((w + 1) * chunk).min(n_boot))
                        .map(|r| replicate(r, seed, plain, rect, zv))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("bootstrap worker panicked")).collect()
    });

    let skipped = results.iter().filter(|r| r.is_none()).count();
    let replicates: Vec<Replicate> = results.into_iter().flatten().collect();
    if replicates.len() < 2 {
        return Err(Error::Degenerate(format!(
            "only {} of {n_boot} bootstrap replicates were usable",
            replicates.len()
        )));
    }
    let plain_mse: Vec<f64> = replicates.iter().map(|r| r.mse_plain).collect();
    let rect_mse: Vec<f64> = replicates.iter().map(|r| r.mse_rectified).collect();
    Ok(BootstrapResult {
        plain: MseSummary::of(&plain_mse),
        rectified: MseSummary::of(&rect_mse),
        replicates,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world(n: usize) -> (FeatureMatrix, MortalityVector) {
        let regions: Vec<String> = (0..n).map(|i| format!("R{i}")).collect();
        let f = DMatrix::from_fn(n, 2, |i, j| ((i * (j + 5) + 3 * j) % 11) as f64 - 5.0);
        let b = FeatureMatrix::from_features(regions.clone(), &f).unwrap();
        let z = DVector::from_fn(n, |i, _| 0.3 * f[(i, 0)] - 0.1 * f[(i, 1)] + ((i * 13) % 7) as f64 * 0.05);
        (b, MortalityVector::from_scores(regions, z).unwrap())
    }

    #[test]
    fn deterministic_and_flow_free_equal() {
        let (b, z) = world(40);
        let flows = FlowPair::zeros(b.regions().to_vec());
        let r1 = bootstrap_cv(&b, &z, &flows, 100, 9).unwrap();
        let r2 = bootstrap_cv(&b, &z, &flows, 100, 9).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(r1.mean_difference(), 0.0);
        assert_eq!(r1.replicates.len() + r1.skipped, 100);
        assert_eq!(r1.csv_lines().len(), r1.replicates.len() + 1);
    }

    #[test]
    fn too_few_replicates_rejected() {
        let (b, z) = world(20);
        let flows = FlowPair::zeros(b.regions().to_vec());
        assert!(matches!(bootstrap_cv(&b, &z, &flows, 50, 1), Err(Error::Config(_))));
    }
}
