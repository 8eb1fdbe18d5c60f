//! Seeded synthetic data with stored ground truth.
//!
//! Every generator is a pure function of its parameters and seed.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{
    normalize_flows, write_flow_matrix, write_labels, write_mortality, write_panel, write_text, write_weekly,
    FeatureMatrix, FlowPair, IndicatorPanel, KernelCoefficients, LabelVector, MortalityVector, WeeklySeries,
};
use crate::error::{Error, Result};
use crate::linalg::fmt_f64;
use crate::regress::{flow_operator, solve_fixed_point, FixedPointOptions};
use crate::rng::{stream, StreamRng};

/// `R000`, `R001`, ...
pub fn region_codes(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("R{i:03}")).collect()
}

/// `ind_0001`, `ind_0002`, ...
pub fn indicator_names(d: usize) -> Vec<String> {
    (1..=d).map(|j| format!("ind_{j:04}")).collect()
}

fn normal(rng: &mut StreamRng) -> f64 {
    StandardNormal.sample(rng)
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut StreamRng) -> DMatrix<f64> {
    // Fill row by row so the draw order does not depend on nalgebra's layout.
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = normal(rng);
        }
    }
    m
}

fn bernoulli_mask(rows: usize, cols: usize, p_observed: f64, rng: &mut StreamRng) -> DMatrix<bool> {
    let mut m = DMatrix::from_element(rows, cols, false);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = rng.gen::<f64>() < p_observed;
        }
    }
    m
}

/// `U Vᵀ` with standard-normal factors, optional Gaussian noise, and an
/// i.i.d. Bernoulli(`obs_frac`) observation mask. Returns the panel and the
/// full (noisy) matrix.
pub fn gen_low_rank(
    n: usize,
    d: usize,
    rank: usize,
    obs_frac: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<(IndicatorPanel, DMatrix<f64>)> {
    if rank > n.min(d) {
        return Err(Error::Config(format!("rank {rank} exceeds min({n}, {d})")));
    }
    if !(obs_frac > 0.0 && obs_frac <= 1.0) {
        return Err(Error::Config(format!("observation fraction {obs_frac} outside (0, 1]")));
    }
    if !(noise_sigma >= 0.0) {
        return Err(Error::Config("noise sigma must be non-negative".into()));
    }
    let u = gaussian_matrix(n, rank, &mut stream(seed, "low-rank-u"));
    let v = gaussian_matrix(d, rank, &mut stream(seed, "low-rank-v"));
    let mut full = &u * v.transpose();
    if noise_sigma > 0.0 {
        full += gaussian_matrix(n, d, &mut stream(seed, "low-rank-noise")) * noise_sigma;
    }
    let mask = bernoulli_mask(n, d, obs_frac, &mut stream(seed, "low-rank-mask"));
    let panel = IndicatorPanel::new(region_codes(n), indicator_names(d), full.clone(), mask)?;
    Ok((panel, full))
}

/// Weekly activity `c + A·sin(2πn/period + φ) + σε`, clipped at zero, with a
/// positive offset `c = A + 3σ + 1` and a seed-dependent phase.
pub fn gen_periodic_series(
    region: &str,
    n_weeks: usize,
    period: f64,
    amplitude: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<WeeklySeries> {
    if !(period >= 2.0 && period <= n_weeks as f64 / 2.0) {
        return Err(Error::Config(format!(
            "period {period} must lie in [2, {}]",
            n_weeks as f64 / 2.0
        )));
    }
    if !(amplitude >= 0.0 && noise_sigma >= 0.0) {
        return Err(Error::Config("amplitude and noise must be non-negative".into()));
    }
    let mut rng = stream(seed, "periodic");
    let phase = rng.gen::<f64>() * std::f64::consts::TAU;
    let offset = amplitude + 3.0 * noise_sigma + 1.0;
    let activity = (1..=n_weeks)
        .map(|n| {
            let tone = amplitude * (std::f64::consts::TAU * n as f64 / period + phase).sin();
            let noise = if noise_sigma > 0.0 { noise_sigma * normal(&mut rng) } else { 0.0 };
            (offset + tone + noise).max(0.0)
        })
        .collect();
    WeeklySeries::new(region, activity)
}

/// Monomials of `u` of degrees 1..=`degree` (each multiset of coordinates once).
fn monomials(u: &[f64], degree: usize) -> Vec<f64> {
    fn rec(u: &[f64], start: usize, left: usize, acc: f64, out: &mut Vec<f64>) {
        if left == 0 {
            out.push(acc);
            return;
        }
        for i in start..u.len() {
            rec(u, i, left - 1, acc * u[i], out);
        }
    }
    let mut out = Vec::new();
    for deg in 1..=degree {
        rec(u, 0, deg, 1.0, &mut out);
    }
    out
}

fn standardize_in_place(x: &mut DMatrix<f64>) {
    for mut col in x.column_iter_mut() {
        let n = col.len() as f64;
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
        let std = (col.norm_squared() / n).sqrt();
        if std > 0.0 {
            col /= std;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Embedding {
    /// `u·A` for a random Gaussian `A`.
    Linear,
    /// Random mixtures of all monomials of degree 1 to 3 in `u`.
    Polynomial,
}

/// Samples `u ~ U[−1, 1]^k`, embeds it in `ambient_d` dimensions and
/// standardizes every column (population std).
pub fn gen_manifold(n: usize, ambient_d: usize, intrinsic_k: usize, embedding: Embedding, seed: u64) -> Result<DMatrix<f64>> {
    if intrinsic_k == 0 || intrinsic_k >= ambient_d {
        return Err(Error::Config(format!(
            "intrinsic dimension {intrinsic_k} must lie in [1, {ambient_d})"
        )));
    }
    if n < 2 {
        return Err(Error::Config("manifold needs at least 2 samples".into()));
    }
    let mut rng = stream(seed, "manifold-latent");
    let latent: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..intrinsic_k).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let degree = match embedding {
        Embedding::Linear => 1,
        Embedding::Polynomial => 3,
    };
    let basis: Vec<Vec<f64>> = latent.iter().map(|u| monomials(u, degree)).collect();
    let width = basis[0].len();
    let mix = gaussian_matrix(width, ambient_d, &mut stream(seed, "manifold-mix"));
    let features = DMatrix::from_fn(n, width, |i, j| basis[i][j]);
    let mut x = features * mix;
    standardize_in_place(&mut x);
    Ok(x)
}

/// Polynomial embedding of a `k`-dimensional latent cube.
pub fn gen_nonlinear_manifold(n: usize, ambient_d: usize, intrinsic_k: usize, seed: u64) -> Result<DMatrix<f64>> {
    gen_manifold(n, ambient_d, intrinsic_k, Embedding::Polynomial, seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedConfig {
    pub n: usize,
    /// Number of indicator columns.
    pub d: usize,
    /// Features with nonzero planted weight.
    pub k_features: usize,
    /// Additional features with zero planted weight.
    pub n_null: usize,
    pub kernel_scale: f64,
    /// Probability that an off-diagonal flow entry is nonzero.
    pub flow_density: f64,
    /// Standard deviation of the noise added to the fixed point.
    pub noise_sigma: f64,
    pub missing_frac: f64,
    /// Weight of the quadratic terms in the indicator lift.
    pub nonlinearity: f64,
    /// Code `j` enters the indicator lift scaled by `code_spread^(−j)`, which
    /// separates the principal axes of the indicator cloud.
    pub code_spread: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            n: 183,
            d: 60,
            k_features: 3,
            n_null: 0,
            kernel_scale: 0.02,
            flow_density: 0.1,
            noise_sigma: 0.0,
            missing_frac: 0.3,
            nonlinearity: 0.3,
            code_spread: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedWorld {
    pub config: PlantedConfig,
    pub panel: IndicatorPanel,
    /// Indicator values before missingness was injected.
    pub full_indicators: DMatrix<f64>,
    /// `n × (k_features + n_null)`, centred, orthogonal, unit sample variance.
    pub true_codes: DMatrix<f64>,
    /// Planted design: intercept plus `true_codes`.
    pub features: FeatureMatrix,
    pub true_a: DVector<f64>,
    /// Planted kernel after any contraction rescaling.
    pub true_kernel: KernelCoefficients,
    /// Product of all rescaling factors applied to the drawn kernel.
    pub kernel_rescale: f64,
    pub flows: FlowPair,
    /// Exact fixed point of `z = Ba* + M(z)z`.
    pub z: MortalityVector,
    /// `z` plus observation noise; equal to `z` when `noise_sigma = 0`.
    pub z_observed: MortalityVector,
    pub labels: LabelVector,
    pub seed: u64,
}

/// Options used to solve the planted fixed point.
pub fn planted_fixed_point_options() -> FixedPointOptions {
    FixedPointOptions {
        damping: 0.5,
        tol: 1e-13,
        max_iter: 20_000,
    }
}

/// Largest contraction bound `‖M(z)‖∞` accepted for a planted world.
pub const MAX_PLANTED_NORM: f64 = 0.8;
pub const MAX_RESCALES: usize = 10;

fn orthogonal_codes(n: usize, p: usize, rng: &mut StreamRng) -> DMatrix<f64> {
    let mut g = gaussian_matrix(n, p, rng);
    for mut col in g.column_iter_mut() {
        let mean = col.sum() / n as f64;
        col.add_scalar_mut(-mean);
    }
    if p == 0 {
        return g;
    }
    let q = g.qr().q();
    q * (n as f64 - 1.0).sqrt()
}

fn random_flows(n: usize, density: f64, rng: &mut StreamRng) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let hit = rng.gen::<f64>() < density;
            let w = rng.gen::<f64>();
            if i != j && hit {
                m[(i, j)] = w;
            }
        }
    }
    m
}

/// Builds a complete planted world; see [`PlantedConfig`] for the knobs.
pub fn gen_planted_world(cfg: &PlantedConfig) -> Result<PlantedWorld> {
    let (n, d) = (cfg.n, cfg.d);
    let p = cfg.k_features + cfg.n_null;
    if cfg.k_features == 0 {
        return Err(Error::Config("planted world needs at least one real feature".into()));
    }
    if n <= p + 9 {
        return Err(Error::Config(format!("{n} regions is too few for {p} features")));
    }
    if d < 2 {
        return Err(Error::Config("planted world needs at least 2 indicators".into()));
    }
    if !(0.0..1.0).contains(&cfg.missing_frac) {
        return Err(Error::Config(format!("missing fraction {} outside [0, 1)", cfg.missing_frac)));
    }
    if !(0.0..=1.0).contains(&cfg.flow_density) {
        return Err(Error::Config(format!("flow density {} outside [0, 1]", cfg.flow_density)));
    }
    if !(cfg.kernel_scale >= 0.0 && cfg.noise_sigma >= 0.0 && cfg.nonlinearity >= 0.0) {
        return Err(Error::Config("kernel scale, noise and nonlinearity must be non-negative".into()));
    }
    if !(cfg.code_spread >= 1.0) {
        return Err(Error::Config(format!("code spread must be at least 1, got {}", cfg.code_spread)));
    }
    let seed = cfg.seed;
    let regions = region_codes(n);

    let codes = orthogonal_codes(n, p, &mut stream(seed, "planted-codes"));
    let features = FeatureMatrix::from_features(regions.clone(), &codes)?;

    let mut rng = stream(seed, "planted-weights");
    let intercept = rng.gen_range(-0.2..0.2);
    let mut true_a = DVector::zeros(p + 1);
    true_a[0] = intercept;
    for j in 0..cfg.k_features {
        let magnitude = rng.gen_range(0.4..1.0);
        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        true_a[j + 1] = sign * magnitude;
    }

    let raw_m = random_flows(n, cfg.flow_density, &mut stream(seed, "planted-migration"));
    let raw_t = random_flows(n, cfg.flow_density, &mut stream(seed, "planted-trade"));
    let flows = normalize_flows(regions.clone(), &raw_m, &raw_t)?;

    let mut rng = stream(seed, "planted-kernel");
    let drawn: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0) * cfg.kernel_scale).collect();
    let mut kernel = KernelCoefficients::from_slice(&drawn)?;
    let base = features.matrix() * &true_a;
    let opts = planted_fixed_point_options();
    let mut rescale = 1.0;
    let mut solution = None;
    for _ in 0..=MAX_RESCALES {
        if let Ok(fp) = solve_fixed_point(&base, &kernel, &flows, &base, &opts) {
            let op = flow_operator(&fp.z, &flows, &kernel)?;
            let norm = op.row_iter().map(|r| r.abs().sum()).fold(0.0, f64::max);
            if norm < MAX_PLANTED_NORM {
                solution = Some(fp.z);
                break;
            }
        }
        kernel = kernel.scaled(0.5);
        rescale *= 0.5;
    }
    let z = solution.ok_or_else(|| {
        Error::Config(format!(
            "flow map is not a contraction after {MAX_RESCALES} rescalings of the kernel"
        ))
    })?;

    let mut z_obs = z.clone();
    if cfg.noise_sigma > 0.0 {
        let mut rng = stream(seed, "planted-noise");
        for v in z_obs.iter_mut() {
            *v += cfg.noise_sigma * normal(&mut rng);
        }
    }

    let mut spread_codes = codes.clone();
    for (j, mut col) in spread_codes.column_iter_mut().enumerate() {
        col /= cfg.code_spread.powi(j as i32);
    }
    let full_indicators = lift_indicators(&spread_codes, d, cfg.nonlinearity, seed);
    let mask = planted_mask(n, d, cfg.missing_frac, seed);
    let panel = IndicatorPanel::new(regions.clone(), indicator_names(d), full_indicators.clone(), mask)?;

    let y: Vec<f64> = codes.column(0).iter().map(|&c| if c >= 0.0 { 1.0 } else { -1.0 }).collect();
    let labels = LabelVector::new(regions.clone(), y)?;

    Ok(PlantedWorld {
        config: cfg.clone(),
        panel,
        full_indicators,
        true_codes: codes,
        features,
        true_a,
        true_kernel: kernel,
        kernel_rescale: rescale,
        flows,
        z: MortalityVector::from_scores(regions.clone(), z)?,
        z_observed: MortalityVector::from_scores(regions, z_obs)?,
        labels,
        seed,
    })
}

/// Indicators as random mixtures of the codes and their pairwise products,
/// each column then given its own scale and offset.
fn lift_indicators(codes: &DMatrix<f64>, d: usize, nonlinearity: f64, seed: u64) -> DMatrix<f64> {
    let (n, p) = codes.shape();
    let mut basis_cols: Vec<DVector<f64>> = codes.column_iter().map(|c| c.into_owned()).collect();
    for a in 0..p {
        for b in a..p {
            let prod = codes.column(a).component_mul(&codes.column(b));
            let scale = if a == b { nonlinearity / 2f64.sqrt() } else { nonlinearity };
            basis_cols.push(prod * scale);
        }
    }
    let basis = DMatrix::from_columns(&basis_cols);
    let mix = gaussian_matrix(basis.ncols(), d, &mut stream(seed, "planted-lift")) / (basis.ncols() as f64).sqrt();
    let mut x = basis * mix;
    let mut rng = stream(seed, "planted-units");
    for mut col in x.column_iter_mut() {
        let scale = rng.gen_range(0.5..5.0);
        let offset = rng.gen_range(-10.0..10.0);
        col *= scale;
        col.add_scalar_mut(offset);
    }
    debug_assert_eq!(x.nrows(), n);
    x
}

/// MCAR mask; every row keeps at least one and every column at least two
/// observed cells so the panel stays completable.
fn planted_mask(n: usize, d: usize, missing_frac: f64, seed: u64) -> DMatrix<bool> {
    let mut rng = stream(seed, "planted-mask");
    let mut mask = bernoulli_mask(n, d, 1.0 - missing_frac, &mut rng);
    let mut rng = stream(seed, "planted-mask-repair");
    for i in 0..n {
        if !mask.row(i).iter().any(|&b| b) {
            mask[(i, rng.gen_range(0..d))] = true;
        }
    }
    for j in 0..d {
        while mask.column(j).iter().filter(|&&b| b).count() < 2 {
            mask[(rng.gen_range(0..n), j)] = true;
        }
    }
    mask
}

impl PlantedWorld {
    /// `‖z − Ba* − M(z)z‖∞` at the stored fixed point.
    pub fn fixed_point_residual(&self) -> Result<f64> {
        let z = self.z.z();
        let op = flow_operator(z, &self.flows, &self.true_kernel)?;
        let r = z - self.features.matrix() * &self.true_a - op * z;
        Ok(r.amax())
    }

    /// `key value` lines describing the planted parameters.
    pub fn truth_lines(&self) -> Vec<String> {
        let c = &self.config;
        let mut lines = vec![
            format!("seed {}", self.seed),
            format!("n {}", c.n),
            format!("d {}", c.d),
            format!("k_features {}", c.k_features),
            format!("n_null {}", c.n_null),
            format!("flow_density {}", fmt_f64(c.flow_density)),
            format!("noise_sigma {}", fmt_f64(c.noise_sigma)),
            format!("missing_frac {}", fmt_f64(c.missing_frac)),
            format!("kernel_rescale {}", fmt_f64(self.kernel_rescale)),
        ];
        lines.extend(
            self.features
                .names()
                .iter()
                .zip(self.true_a.iter())
                .map(|(name, v)| format!("{name} {}", fmt_f64(*v))),
        );
        lines.extend(
            KernelCoefficients::NAMES
                .iter()
                .zip(self.true_kernel.to_array())
                .map(|(name, v)| format!("{name} {}", fmt_f64(v))),
        );
        lines
    }

    /// Writes the standard input file set plus `truth.txt` into `dir`.
    /// Weekly activity carries a 52-week cycle for every region.
    pub fn write_files(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_panel(dir.join("indicators.csv"), &self.panel)?;
        write_mortality(dir.join("mortality.csv"), self.z_observed.regions(), self.z_observed.raw_rate())?;
        write_flow_matrix(dir.join("migration.csv"), self.flows.regions(), self.flows.migration())?;
        write_flow_matrix(dir.join("trade.csv"), self.flows.regions(), self.flows.trade())?;
        write_labels(dir.join("labels.csv"), &self.labels)?;
        let weekly = self
            .panel
            .regions()
            .iter()
            .enumerate()
            .map(|(i, r)| gen_periodic_series(r, 260, 52.0, 10.0, 1.0, self.seed ^ (i as u64).wrapping_mul(0x9e37)))
            .collect::<Result<Vec<_>>>()?;
        write_weekly(dir.join("weekly.csv"), &weekly)?;
        write_text(dir.join("truth.txt"), &self.truth_lines())
    }
}
