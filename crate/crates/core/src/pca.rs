//! Deflation PCA: each component is the leading eigenvector of `X₍ₖ₎ᵀX₍ₖ₎`,
//! found by power iteration, where `X₍ₖ₎` has the earlier components
//! projected out of the centered data.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::encode::Autoencoder;
use crate::error::{Error, Result};
use crate::rng;

pub const MAX_POWER_STEPS: usize = 10_000;
const POWER_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    /// `k × d`, orthonormal rows.
    pub components: DMatrix<f64>,
    /// Sample variance (divisor `n − 1`) along each component.
    pub explained_variance: Vec<f64>,
    pub mean: DVector<f64>,
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.nrows()
    }

    pub fn dim(&self) -> usize {
        self.components.ncols()
    }
}

fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.mean()))
}

fn center(x: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut c = x.clone();
    for (j, mut col) in c.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    c
}

fn orthogonalize(v: &mut DVector<f64>, basis: &[DVector<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let p = b.dot(v);
            v.axpy(-p, b, 1.0);
        }
    }
}

fn fix_sign(v: &mut DVector<f64>) {
    let pivot = v.iter().copied().fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
    if pivot < 0.0 {
        v.neg_mut();
    }
}

/// Leading unit eigenvector of the positive semidefinite `gram`, kept
/// orthogonal to `previous`. Returns `None` when no variance remains.
fn leading_eigenvector(gram: &DMatrix<f64>, previous: &[DVector<f64>], floor: f64, index: usize) -> Result<Option<DVector<f64>>> {
    let d = gram.nrows();
    let mut start_rng = rng::indexed_stream(0, "pca-start", index as u64);
    let mut v = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut start_rng));
    orthogonalize(&mut v, previous);
    v /= v.norm();
    for _ in 0..MAX_POWER_STEPS {
        let mut u = gram * &v;
        orthogonalize(&mut u, previous);
        let norm = u.norm();
        if norm <= floor {
            return Ok(None);
        }
        u /= norm;
        let change = (&u - &v).amax();
        v = u;
        if change < POWER_TOL {
            return Ok(Some(v));
        }
    }
    Err(Error::Numeric(format!(
        "power iteration for component {} did not converge in {MAX_POWER_STEPS} steps",
        index + 1
    )))
}

/// Extracts `k` principal components of the rows of `x`.
pub fn fit_pca(x: &DMatrix<f64>, k: usize) -> Result<PcaModel> {
    let (n, d) = x.shape();
    if k == 0 || k > n.min(d) {
        return Err(Error::Shape(format!("cannot extract {k} components from a {n}×{d} matrix")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("PCA input contains non-finite values".into()));
    }
    let mean = column_means(x);
    let xc = center(x, &mean);
    let total = xc.norm_squared();
    let floor = 1e-13 * total.max(f64::MIN_POSITIVE);
    let denom = (n.max(2) - 1) as f64;

    let mut comps: Vec<DVector<f64>> = Vec::with_capacity(k);
    let mut variances = Vec::with_capacity(k);
    for c in 0..k {
        // X₍c₎ = X − Σ X w wᵀ over the components found so far.
        let mut deflated = xc.clone();
        for w in &comps {
            let proj = &xc * w;
            deflated -= proj * w.transpose();
        }
        let gram = deflated.transpose() * &deflated;
        let mut w = match leading_eigenvector(&gram, &comps, floor, c)? {
            Some(w) => w,
            None => {
                // No variance left: complete the orthonormal basis deterministically.
                let mut e = DVector::zeros(d);
                let mut found = None;
                for j in 0..d {
                    e.fill(0.0);
                    e[j] = 1.0;
                    orthogonalize(&mut e, &comps);
                    if e.norm() > 1e-6 {
                        found = Some(&e / e.norm());
                        break;
                    }
                }
                found.ok_or_else(|| Error::Numeric("could not complete the component basis".into()))?
            }
        };
        fix_sign(&mut w);
        let variance = (gram.clone() * &w).dot(&w) / denom;
        variances.push(variance.max(0.0));
        comps.push(w);
    }

    let components = DMatrix::from_fn(k, d, |i, j| comps[i][j]);
    Ok(PcaModel {
        components,
        explained_variance: variances,
        mean,
    })
}

/// Scores `(x − mean) · componentsᵀ`.
pub fn transform(model: &PcaModel, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() != model.dim() {
        return Err(Error::Shape(format!("rows have width {}, model expects {}", x.ncols(), model.dim())));
    }
    Ok(center(x, &model.mean) * model.components.transpose())
}

pub fn inverse_transform(model: &PcaModel, scores: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if scores.ncols() != model.n_components() {
        return Err(Error::Shape(format!(
            "scores have {} columns, model has {} components",
            scores.ncols(),
            model.n_components()
        )));
    }
    let mut x = scores * &model.components;
    for (j, mut col) in x.column_iter_mut().enumerate() {
        col.add_scalar_mut(model.mean[j]);
    }
    Ok(x)
}

/// Mean squared error (over all entries) of the rank-`k` reconstruction for each `k`.
pub fn reconstruction_error_curve(x: &DMatrix<f64>, ks: &[usize]) -> Result<Vec<f64>> {
    let Some(&kmax) = ks.iter().max() else {
        return Ok(Vec::new());
    };
    let model = fit_pca(x, kmax)?;
    let xc = center(x, &model.mean);
    let scores = &xc * model.components.transpose();
    ks.iter()
        .map(|&k| {
            if k == 0 {
                return Ok(xc.norm_squared() / x.len() as f64);
            }
            let approx = scores.columns(0, k) * model.components.rows(0, k);
            Ok((&xc - approx).norm_squared() / x.len() as f64)
        })
        .collect()
}

fn mean_input_gradients(
    pca: &PcaModel,
    autoencoder: &Autoencoder,
    x: &DMatrix<f64>,
    f: fn(f64) -> f64,
) -> Result<Vec<DVector<f64>>> {
    if pca.dim() != autoencoder.bottleneck() {
        return Err(Error::Shape(format!(
            "PCA fitted on {} dims but the bottleneck has {}",
            pca.dim(),
            autoencoder.bottleneck()
        )));
    }
    (0..pca.n_components())
        .map(|c| {
            let v = pca.components.row(c).transpose();
            let grads = autoencoder.code_input_gradients(x, &v)?;
            let n = grads.nrows() as f64;
            Ok(DVector::from_iterator(
                grads.ncols(),
                grads.column_iter().map(|col| col.iter().map(|&g| f(g)).sum::<f64>() / n),
            ))
        })
        .collect()
}

/// Mean absolute input gradient of each PCA score, one vector per component
/// (indexed by input indicator).
pub fn attribution_vectors(pca: &PcaModel, autoencoder: &Autoencoder, x: &DMatrix<f64>) -> Result<Vec<DVector<f64>>> {
    mean_input_gradients(pca, autoencoder, x, f64::abs)
}

/// Mean signed input gradient of each PCA score; flips sign with the component.
pub fn signed_attribution_vectors(
    pca: &PcaModel,
    autoencoder: &Autoencoder,
    x: &DMatrix<f64>,
) -> Result<Vec<DVector<f64>>> {
    mean_input_gradients(pca, autoencoder, x, |g| g)
}

/// Per component, the `top_m` indicators ranked by attribution (descending).
pub fn attribute_features(
    pca: &PcaModel,
    autoencoder: &Autoencoder,
    x: &DMatrix<f64>,
    indicators: &[String],
    top_m: usize,
) -> Result<Vec<Vec<(String, f64)>>> {
    if indicators.len() != x.ncols() {
        return Err(Error::Shape(format!("{} names for {} indicators", indicators.len(), x.ncols())));
    }
    let vectors = attribution_vectors(pca, autoencoder, x)?;
    Ok(vectors
        .iter()
        .map(|v| {
            let mut ranked: Vec<(usize, f64)> = v.iter().copied().enumerate().collect();
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            ranked
                .into_iter()
                .take(top_m)
                .map(|(j, w)| (indicators[j].clone(), w))
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encode::Dense;

    #[test]
    fn axis_aligned_data() {
        let x = DMatrix::from_row_slice(4, 2, &[-3.0, 0.0, -1.0, 0.0, 1.0, 0.0, 3.0, 0.0]);
        let m = fit_pca(&x, 2).unwrap();
        assert!((m.components[(0, 0)].abs() - 1.0).abs() < 1e-12);
        assert!(m.components[(0, 1)].abs() < 1e-12);
        assert!(m.explained_variance[1].abs() < 1e-12);
    }

    #[test]
    fn too_many_components() {
        assert!(matches!(fit_pca(&DMatrix::zeros(3, 2), 3), Err(Error::Shape(_))));
    }

    #[test]
    fn mean_row_maps_to_zero_and_round_trip() {
        let x = DMatrix::from_fn(10, 3, |i, j| ((i * 5 + j * 7) % 11) as f64 + 0.1 * j as f64);
        let m = fit_pca(&x, 3).unwrap();
        let mean_row = DMatrix::from_row_slice(1, 3, m.mean.as_slice());
        assert!(transform(&m, &mean_row).unwrap().amax() < 1e-12);
        let back = inverse_transform(&m, &transform(&m, &x).unwrap()).unwrap();
        assert!((back - &x).amax() < 1e-9);
    }

    #[test]
    fn error_curve_is_nested() {
        let x = DMatrix::from_fn(12, 4, |i, j| ((i * 3 + j * j) % 7) as f64);
        let e = reconstruction_error_curve(&x, &[1, 2, 3, 4]).unwrap();
        assert!(e.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(e[3] < 1e-20);
    }

    #[test]
    fn identity_encoder_attribution_matches_components() {
        let d = 3;
        let eye = DMatrix::identity(d, d);
        let layers = vec![
            Dense { w: eye.clone(), b: DVector::zeros(d) },
            Dense { w: eye, b: DVector::zeros(d) },
        ];
        let ae = Autoencoder::from_layers(vec![d, d], layers, 0).unwrap();
        let x = DMatrix::from_fn(8, d, |i, j| ((i * 2 + j * 5) % 6) as f64 - 2.0);
        let pca = fit_pca(&x, 2).unwrap();
        let attr = attribution_vectors(&pca, &ae, &x).unwrap();
        for (c, a) in attr.iter().enumerate() {
            for j in 0..d {
                assert!((a[j] - pca.components[(c, j)].abs()).abs() < 1e-12);
            }
        }
        let names: Vec<String> = (0..d).map(|j| format!("i{j}")).collect();
        assert!(attribute_features(&pca, &ae, &x, &names, 0).unwrap().iter().all(Vec::is_empty));
    }
}
