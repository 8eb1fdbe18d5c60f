//! Shared data model, CSV schemas and normalizations.
//!
//! CSV layouts (UTF-8, comma separated, `.` decimal point):
//!
//! * indicators: `region,<indicator>...`, an empty cell marks a missing value
//! * mortality: `region,death_rate`
//! * flows: square matrix with a `region,<r1>,<r2>...` header row and the
//!   region code in the first column; entry `(i, j)` is the flow from `j` into `i`
//! * weekly activity: `region,week,activity`
//! * labels: `region,label` with label `developed` or `developing`

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{fmt_f64, mean_std};

fn check_unique(names: &[String], what: &str) -> Result<()> {
    let mut seen = HashSet::new();
    for name in names {
        if !seen.insert(name.as_str()) {
            return Err(Error::Schema(format!("duplicate {what} {name:?}")));
        }
    }
    Ok(())
}

pub(crate) fn check_same_regions(a: &[String], b: &[String], what: &str) -> Result<()> {
    if a != b {
        return Err(Error::Schema(format!(
            "{what}: region ordering does not match ({} vs {} regions)",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Region × indicator matrix with an observed-entry mask.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorPanel {
    regions: Vec<String>,
    indicators: Vec<String>,
    values: DMatrix<f64>,
    mask: DMatrix<bool>,
}

impl IndicatorPanel {
    /// Builds a panel; unobserved positions are reset to the 0 placeholder.
    pub fn new(
        regions: Vec<String>,
        indicators: Vec<String>,
        mut values: DMatrix<f64>,
        mask: DMatrix<bool>,
    ) -> Result<Self> {
        if regions.len() < 2 {
            return Err(Error::Schema(format!(
                "panel needs at least 2 regions, got {}",
                regions.len()
            )));
        }
        if indicators.is_empty() {
            return Err(Error::Schema("panel needs at least 1 indicator".into()));
        }
        if values.shape() != (regions.len(), indicators.len()) || mask.shape() != values.shape() {
            return Err(Error::Shape(format!(
                "panel values {:?} / mask {:?} do not match {} regions × {} indicators",
                values.shape(),
                mask.shape(),
                regions.len(),
                indicators.len()
            )));
        }
        check_unique(&regions, "region")?;
        check_unique(&indicators, "indicator")?;
        for j in 0..values.ncols() {
            for i in 0..values.nrows() {
                if mask[(i, j)] {
                    if !values[(i, j)].is_finite() {
                        return Err(Error::Domain(format!(
                            "non-finite observed value for {} / {}",
                            regions[i], indicators[j]
                        )));
                    }
                } else {
                    values[(i, j)] = 0.0;
                }
            }
        }
        Ok(Self {
            regions,
            indicators,
            values,
            mask,
        })
    }

    pub fn fully_observed(regions: Vec<String>, indicators: Vec<String>, values: DMatrix<f64>) -> Result<Self> {
        let mask = DMatrix::from_element(values.nrows(), values.ncols(), true);
        Self::new(regions, indicators, values, mask)
    }

    pub fn regions(&self) -> &[String] {
        &self.regions
    }

    pub fn indicators(&self) -> &[String] {
        &self.indicators
    }

    /// Values with 0 at unobserved positions.
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn mask(&self) -> &DMatrix<bool> {
        &self.mask
    }

    pub fn n_regions(&self) -> usize {
        self.regions.len()
    }

    pub fn n_indicators(&self) -> usize {
        self.indicators.len()
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_fully_observed(&self) -> bool {
        self.mask.iter().all(|&m| m)
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.mask[(i, j)].then(|| self.values[(i, j)])
    }

    /// Appends an indicator column; `None` marks a missing entry.
    pub fn with_column(&self, name: &str, column: &[Option<f64>]) -> Result<Self> {
        if column.len() != self.n_regions() {
            return Err(Error::Shape(format!(
                "new column has {} entries for {} regions",
                column.len(),
                self.n_regions()
            )));
        }
        let (n, d) = self.values.shape();
        let mut values = self.values.clone().insert_column(d, 0.0);
        let mut mask = self.mask.clone().insert_column(d, false);
        for (i, v) in column.iter().enumerate() {
            if let Some(v) = v {
                values[(i, d)] = *v;
                mask[(i, d)] = true;
            }
        }
        debug_assert_eq!(values.nrows(), n);
        let mut indicators = self.indicators.clone();
        indicators.push(name.to_string());
        Self::new(self.regions.clone(), indicators, values, mask)
    }

    /// Appends a region row; `None` marks a missing entry.
    pub fn with_row(&self, region: &str, row: &[Option<f64>]) -> Result<Self> {
        if row.len() != self.n_indicators() {
            return Err(Error::Shape(format!(
                "new row has {} entries for {} indicators",
                row.len(),
                self.n_indicators()
            )));
        }
        let n = self.values.nrows();
        let mut values = self.values.clone().insert_row(n, 0.0);
        let mut mask = self.mask.clone().insert_row(n, false);
        for (j, v) in row.iter().enumerate() {
            if let Some(v) = v {
                values[(n, j)] = *v;
                mask[(n, j)] = true;
            }
        }
        let mut regions = self.regions.clone();
        regions.push(region.to_string());
        Self::new(regions, self.indicators.clone(), values, mask)
    }

    /// Restricts and reorders rows to `regions`.
    pub fn align_to(&self, regions: &[String]) -> Result<Self> {
        let idx = index_of(&self.regions, regions)?;
        let values = DMatrix::from_fn(idx.len(), self.n_indicators(), |i, j| self.values[(idx[i], j)]);
        let mask = DMatrix::from_fn(idx.len(), self.n_indicators(), |i, j| self.mask[(idx[i], j)]);
        Self::new(regions.to_vec(), self.indicators.clone(), values, mask)
    }
}

fn index_of(have: &[String], want: &[String]) -> Result<Vec<usize>> {
    let pos: HashMap<&str, usize> = have.iter().enumerate().map(|(i, r)| (r.as_str(), i)).collect();
    want.iter()
        .map(|r| pos.get(r.as_str()).copied().ok_or_else(|| Error::Lookup(r.clone())))
        .collect()
}

/// Weekly activity of one region; week indices run 0..N-1.
#[derive(Debug, Clone, PartialEq)]
pub struct WeeklySeries {
    pub region: String,
    pub activity: Vec<f64>,
}

impl WeeklySeries {
    pub fn new(region: impl Into<String>, activity: Vec<f64>) -> Result<Self> {
        if activity.len() < 4 {
            return Err(Error::Schema(format!(
                "weekly series needs at least 4 weeks, got {}",
                activity.len()
            )));
        }
        if let Some(w) = activity.iter().position(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::Domain(format!(
                "activity at week {w} must be finite and non-negative, got {}",
                activity[w]
            )));
        }
        Ok(Self {
            region: region.into(),
            activity,
        })
    }

    pub fn len(&self) -> usize {
        self.activity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.activity.is_empty()
    }

    /// Week-by-week sum over regions of equal length.
    pub fn global_sum(series: &[WeeklySeries]) -> Result<Self> {
        let first = series
            .first()
            .ok_or_else(|| Error::Schema("no weekly series to sum".into()))?;
        let n = first.len();
        let mut total = vec![0.0; n];
        for s in series {
            if s.len() != n {
                return Err(Error::Schema(format!(
                    "series for {} has {} weeks, expected {n}",
                    s.region,
                    s.len()
                )));
            }
            for (t, a) in total.iter_mut().zip(&s.activity) {
                *t += a;
            }
        }
        Self::new("GLOBAL", total)
    }
}

/// Standardized log death rate per region.
#[derive(Debug, Clone, PartialEq)]
pub struct MortalityVector {
    regions: Vec<String>,
    z: DVector<f64>,
    raw_rate: Vec<f64>,
}

impl MortalityVector {
    pub fn new(regions: Vec<String>, z: DVector<f64>, raw_rate: Vec<f64>) -> Result<Self> {
        if regions.len() != z.len() || raw_rate.len() != z.len() {
            return Err(Error::Shape(format!(
                "mortality vector: {} regions, {} scores, {} rates",
                regions.len(),
                z.len(),
                raw_rate.len()
            )));
        }
        check_unique(&regions, "region")?;
        if let Some(i) = raw_rate.iter().position(|r| !(*r > 0.0) || !r.is_finite()) {
            return Err(Error::Domain(format!(
                "death rate for {} must be positive, got {}",
                regions[i], raw_rate[i]
            )));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("mortality scores must be finite".into()));
        }
        Ok(Self { regions, z, raw_rate })
    }

    /// Scores without an observed rate; the stored rate is `exp(z)`.
    pub fn from_scores(regions: Vec<String>, z: DVector<f64>) -> Result<Self> {
        let raw = z.iter().map(|v| v.exp()).collect();
        Self::new(regions, z, raw)
    }

    pub fn regions(&self) -> &[String] {
        &self.regions
    }

    pub fn z(&self) -> &DVector<f64> {
        &self.z
    }

    pub fn raw_rate(&self) -> &[f64] {
        &self.raw_rate
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn align_to(&self, regions: &[String]) -> Result<Self> {
        let idx = index_of(&self.regions, regions)?;
        Self::new(
            regions.to_vec(),
            DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.z[i])),
            idx.iter().map(|&i| self.raw_rate[i]).collect(),
        )
    }

    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        Self::new(
            rows.iter().map(|&i| self.regions[i].clone()).collect(),
            DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.z[i])),
            rows.iter().map(|&i| self.raw_rate[i]).collect(),
        )
    }
}

/// Handling of non-positive death rates before taking logarithms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RateFloor {
    /// Non-positive rates are an error.
    #[default]
    Disabled,
    /// Non-positive rates become half the smallest positive observed rate.
    HalfMinPositive,
}

/// `z = (ln rate − mean) / std` with the population standard deviation.
pub fn normalize_mortality(raw: &[(String, f64)], floor: RateFloor) -> Result<MortalityVector> {
    if raw.len() < 2 {
        return Err(Error::Degenerate(format!(
            "need at least 2 regions to standardize, got {}",
            raw.len()
        )));
    }
    let min_positive = raw
        .iter()
        .map(|(_, r)| *r)
        .filter(|r| *r > 0.0 && r.is_finite())
        .fold(f64::INFINITY, f64::min);
    let mut rates = Vec::with_capacity(raw.len());
    for (region, rate) in raw {
        if !rate.is_finite() {
            return Err(Error::Domain(format!("death rate for {region} is not finite")));
        }
        if *rate <= 0.0 {
            match floor {
                RateFloor::Disabled => {
                    return Err(Error::Domain(format!(
                        "death rate for {region} is {rate}; enable rate_floor to replace non-positive rates"
                    )))
                }
                RateFloor::HalfMinPositive if min_positive.is_finite() => rates.push(0.5 * min_positive),
                RateFloor::HalfMinPositive => {
                    return Err(Error::Domain("no positive death rate to derive a floor from".into()))
                }
            }
        } else {
            rates.push(*rate);
        }
    }
    let logs: Vec<f64> = rates.iter().map(|r| r.ln()).collect();
    let (mean, std) = mean_std(&logs);
    if std <= f64::EPSILON * mean.abs().max(1.0) {
        return Err(Error::Degenerate("log death rates have zero variance".into()));
    }
    let z = DVector::from_iterator(logs.len(), logs.iter().map(|l| (l - mean) / std));
    let regions = raw.iter().map(|(r, _)| r.clone()).collect();
    MortalityVector::new(regions, z, rates)
}

/// Design matrix: intercept column of ones followed by feature columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    regions: Vec<String>,
    names: Vec<String>,
    b: DMatrix<f64>,
}

impl FeatureMatrix {
    pub fn new(regions: Vec<String>, names: Vec<String>, b: DMatrix<f64>) -> Result<Self> {
        if b.nrows() != regions.len() || b.ncols() != names.len() || b.ncols() == 0 {
            return Err(Error::Shape(format!(
                "feature matrix {:?} does not match {} regions / {} names",
                b.shape(),
                regions.len(),
                names.len()
            )));
        }
        check_unique(&regions, "region")?;
        if b.column(0).iter().any(|&v| v != 1.0) {
            return Err(Error::Schema("feature matrix column 0 must be the all-ones intercept".into()));
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("feature matrix must be finite".into()));
        }
        Ok(Self { regions, names, b })
    }

    /// Prepends the intercept to `features` and names columns `feature_1..`.
    pub fn from_features(regions: Vec<String>, features: &DMatrix<f64>) -> Result<Self> {
        let k = features.ncols();
        let b = features.clone().insert_column(0, 1.0);
        let mut names = vec!["intercept".to_string()];
        names.extend((1..=k).map(|i| format!("feature_{i}")));
        Self::new(regions, names, b)
    }

    pub fn regions(&self) -> &[String] {
        &self.regions
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn n_regions(&self) -> usize {
        self.b.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.b.ncols() - 1
    }

    /// Keeps the intercept plus the listed feature columns (indices into the full matrix).
    pub fn select_columns(&self, columns: &[usize]) -> Result<Self> {
        let mut keep = vec![0];
        keep.extend(columns.iter().copied().filter(|&c| c != 0));
        let b = DMatrix::from_fn(self.b.nrows(), keep.len(), |i, j| self.b[(i, keep[j])]);
        let names = keep.iter().map(|&c| self.names[c].clone()).collect();
        Self::new(self.regions.clone(), names, b)
    }

    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let b = DMatrix::from_fn(rows.len(), self.b.ncols(), |i, j| self.b[(rows[i], j)]);
        let regions = rows.iter().map(|&i| self.regions[i].clone()).collect();
        Self::new(regions, self.names.clone(), b)
    }
}

/// Normalized migration and trade matrices; `m[(i, j)]` is the flow from `j` into `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowPair {
    regions: Vec<String>,
    m: DMatrix<f64>,
    t: DMatrix<f64>,
}

impl FlowPair {
    pub fn new(regions: Vec<String>, m: DMatrix<f64>, t: DMatrix<f64>) -> Result<Self> {
        let n = regions.len();
        for (name, mat) in [("migration", &m), ("trade", &t)] {
            if mat.shape() != (n, n) {
                return Err(Error::Schema(format!(
                    "{name} matrix is {:?}, expected {n}×{n}",
                    mat.shape()
                )));
            }
            for i in 0..n {
                if mat[(i, i)] != 0.0 {
                    return Err(Error::Domain(format!("{name} matrix has nonzero diagonal at {}", regions[i])));
                }
            }
            if mat.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Domain(format!("{name} entries must lie in [0, 1]")));
            }
        }
        check_unique(&regions, "region")?;
        Ok(Self { regions, m, t })
    }

    pub fn zeros(regions: Vec<String>) -> Self {
        let n = regions.len();
        Self {
            regions,
            m: DMatrix::zeros(n, n),
            t: DMatrix::zeros(n, n),
        }
    }

    pub fn regions(&self) -> &[String] {
        &self.regions
    }

    pub fn migration(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn trade(&self) -> &DMatrix<f64> {
        &self.t
    }

    pub fn is_zero(&self) -> bool {
        self.m.iter().chain(self.t.iter()).all(|&v| v == 0.0)
    }

    pub fn align_to(&self, regions: &[String]) -> Result<Self> {
        let idx = index_of(&self.regions, regions)?;
        let pick = |mat: &DMatrix<f64>| DMatrix::from_fn(idx.len(), idx.len(), |i, j| mat[(idx[i], idx[j])]);
        Self::new(regions.to_vec(), pick(&self.m), pick(&self.t))
    }

    /// Adds a region with no incoming or outgoing flow.
    pub fn with_isolated_region(&self, region: &str) -> Result<Self> {
        let n = self.regions.len();
        let grow = |mat: &DMatrix<f64>| mat.clone().insert_row(n, 0.0).insert_column(n, 0.0);
        let mut regions = self.regions.clone();
        regions.push(region.to_string());
        Self::new(regions, grow(&self.m), grow(&self.t))
    }
}

/// Zeroes diagonals, then divides each matrix by its largest entry.
pub fn normalize_flows(regions: Vec<String>, raw_m: &DMatrix<f64>, raw_t: &DMatrix<f64>) -> Result<FlowPair> {
    let n = regions.len();
    let mut out = Vec::with_capacity(2);
    for (name, raw) in [("migration", raw_m), ("trade", raw_t)] {
        if raw.shape() != (n, n) {
            return Err(Error::Schema(format!(
                "{name} matrix is {:?}, expected {n}×{n}",
                raw.shape()
            )));
        }
        if let Some(pos) = raw.iter().position(|v| !v.is_finite() || *v < 0.0) {
            let (i, j) = (pos % n, pos / n);
            return Err(Error::Domain(format!(
                "{name} flow from {} into {} is {}; flows must be non-negative",
                regions[j], regions[i], raw[(i, j)]
            )));
        }
        let mut mat = raw.clone();
        mat.fill_diagonal(0.0);
        let max = mat.max();
        if max > 0.0 {
            mat /= max;
        }
        out.push(mat);
    }
    let t = out.pop().unwrap();
    let m = out.pop().unwrap();
    FlowPair::new(regions, m, t)
}

/// Flow-kernel coefficients `α₀..α₃` (migration) and `β₀..β₃` (trade); any
/// overall perturbation scale is folded into them.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KernelCoefficients {
    pub alpha: [f64; 4],
    pub beta: [f64; 4],
}

impl KernelCoefficients {
    pub const NAMES: [&'static str; 8] = [
        "alpha_0", "alpha_1", "alpha_2", "alpha_3", "beta_0", "beta_1", "beta_2", "beta_3",
    ];

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        if values.len() != 8 {
            return Err(Error::Shape(format!("kernel needs 8 coefficients, got {}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("kernel coefficients must be finite".into()));
        }
        let mut k = Self::zero();
        k.alpha.copy_from_slice(&values[..4]);
        k.beta.copy_from_slice(&values[4..]);
        Ok(k)
    }

    /// `[α₀, α₁, α₂, α₃, β₀, β₁, β₂, β₃]`.
    pub fn to_array(&self) -> [f64; 8] {
        let mut out = [0.0; 8];
        out[..4].copy_from_slice(&self.alpha);
        out[4..].copy_from_slice(&self.beta);
        out
    }

    pub fn norm(&self) -> f64 {
        self.to_array().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.to_array().iter().all(|&v| v == 0.0)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            alpha: self.alpha.map(|v| v * factor),
            beta: self.beta.map(|v| v * factor),
        }
    }
}

/// Developed (+1) / developing (−1) labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVector {
    regions: Vec<String>,
    y: Vec<f64>,
}

impl LabelVector {
    pub fn new(regions: Vec<String>, y: Vec<f64>) -> Result<Self> {
        if regions.len() != y.len() {
            return Err(Error::Shape(format!("{} regions but {} labels", regions.len(), y.len())));
        }
        if y.iter().any(|&v| v != 1.0 && v != -1.0) {
            return Err(Error::Domain("labels must be +1 or -1".into()));
        }
        if !(y.contains(&1.0) && y.contains(&-1.0)) {
            return Err(Error::Domain("both classes must be present".into()));
        }
        check_unique(&regions, "region")?;
        Ok(Self { regions, y })
    }

    pub fn regions(&self) -> &[String] {
        &self.regions
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn align_to(&self, regions: &[String]) -> Result<Self> {
        let idx = index_of(&self.regions, regions)?;
        Self::new(regions.to_vec(), idx.iter().map(|&i| self.y[i]).collect())
    }
}

/// Column statistics used by [`standardize_columns`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StandardizeReport {
    pub kept: Vec<String>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub dropped: Vec<String>,
}

/// Standardizes observed entries of every column (population std). Columns
/// with fewer than two observations or zero variance are dropped.
pub fn standardize_columns(panel: &IndicatorPanel) -> Result<(IndicatorPanel, StandardizeReport)> {
    let mut report = StandardizeReport::default();
    let mut keep = Vec::new();
    for j in 0..panel.n_indicators() {
        let observed: Vec<f64> = (0..panel.n_regions()).filter_map(|i| panel.get(i, j)).collect();
        let name = panel.indicators()[j].clone();
        if observed.len() < 2 {
            report.dropped.push(name);
            continue;
        }
        let (mean, std) = mean_std(&observed);
        if std <= 1e-12 * mean.abs().max(1.0) {
            report.dropped.push(name);
            continue;
        }
        keep.push(j);
        report.kept.push(name);
        report.means.push(mean);
        report.stds.push(std);
    }
    if keep.is_empty() {
        return Err(Error::Degenerate("every indicator column is constant or unobserved".into()));
    }
    let n = panel.n_regions();
    let mut values = DMatrix::zeros(n, keep.len());
    let mut mask = DMatrix::from_element(n, keep.len(), false);
    for (c, &j) in keep.iter().enumerate() {
        for i in 0..n {
            if let Some(v) = panel.get(i, j) {
                values[(i, c)] = (v - report.means[c]) / report.stds[c];
                mask[(i, c)] = true;
            }
        }
    }
    let out = IndicatorPanel::new(panel.regions().to_vec(), report.kept.clone(), values, mask)?;
    Ok((out, report))
}

/// Regions common to every list, in the order of the first; also returns the dropped ones.
pub fn intersect_regions(lists: &[&[String]]) -> (Vec<String>, Vec<String>) {
    let Some((first, rest)) = lists.split_first() else {
        return (Vec::new(), Vec::new());
    };
    let sets: Vec<HashSet<&str>> = rest.iter().map(|l| l.iter().map(String::as_str).collect()).collect();
    let mut kept = Vec::new();
    let mut dropped: Vec<String> = Vec::new();
    for r in first.iter() {
        if sets.iter().all(|s| s.contains(r.as_str())) {
            kept.push(r.clone());
        } else {
            dropped.push(r.clone());
        }
    }
    let kept_set: HashSet<&str> = kept.iter().map(String::as_str).collect();
    let mut extra: Vec<String> = rest
        .iter()
        .flat_map(|l| l.iter())
        .filter(|r| !kept_set.contains(r.as_str()))
        .cloned()
        .collect();
    extra.sort();
    extra.dedup();
    for r in extra {
        if !dropped.contains(&r) {
            dropped.push(r);
        }
    }
    (kept, dropped)
}

// ---------------------------------------------------------------------------
// CSV input

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    if let csv::ErrorKind::UnequalLengths { pos, expected_len, len } = e.kind() {
        return Error::Parse {
            path: path.display().to_string(),
            row: pos.as_ref().map(|p| p.line() as usize).unwrap_or(0),
            column: *len as usize,
            message: format!("expected {expected_len} fields, found {len}"),
        };
    }
    Error::Csv {
        path: path.to_path_buf(),
        source: e,
    }
}

fn parse_number(path: &Path, row: usize, column: usize, cell: &str) -> Result<f64> {
    let text = cell.trim();
    let parsed: Option<f64> = text.parse().ok().filter(|v: &f64| v.is_finite());
    // Rust accepts "NaN"/"inf"; those are rejected rather than coerced.
    parsed.ok_or_else(|| Error::Parse {
        path: path.display().to_string(),
        row,
        column,
        message: format!("not a finite number: {text:?}"),
    })
}

fn headers(path: &Path, rdr: &mut csv::Reader<File>) -> Result<Vec<String>> {
    Ok(rdr
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect())
}

/// Loads `region,<indicator>...`; empty cells become unobserved entries.
pub fn load_indicator_panel(path: impl AsRef<Path>) -> Result<IndicatorPanel> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    let header = headers(path, &mut rdr)?;
    if header.len() < 2 {
        return Err(Error::Schema(format!("{}: expected `region,<indicator>...` header", path.display())));
    }
    let indicators = header[1..].to_vec();
    let mut regions = Vec::new();
    let mut cells = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let row = r + 2;
        regions.push(record[0].trim().to_string());
        for (c, cell) in record.iter().enumerate().skip(1) {
            if cell.trim().is_empty() {
                cells.push(None);
            } else {
                cells.push(Some(parse_number(path, row, c + 1, cell)?));
            }
        }
    }
    let d = indicators.len();
    let n = regions.len();
    let values = DMatrix::from_fn(n, d, |i, j| cells[i * d + j].unwrap_or(0.0));
    let mask = DMatrix::from_fn(n, d, |i, j| cells[i * d + j].is_some());
    IndicatorPanel::new(regions, indicators, values, mask)
}

/// Loads `region,death_rate` pairs in file order.
pub fn load_mortality(path: impl AsRef<Path>) -> Result<Vec<(String, f64)>> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    let header = headers(path, &mut rdr)?;
    if header.len() != 2 {
        return Err(Error::Schema(format!("{}: expected `region,death_rate` header", path.display())));
    }
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let region = record[0].trim().to_string();
        if !seen.insert(region.clone()) {
            return Err(Error::Schema(format!("duplicate region {region:?} in {}", path.display())));
        }
        out.push((region, parse_number(path, r + 2, 2, &record[1])?));
    }
    Ok(out)
}

/// Loads a square flow CSV; returns its region order and raw matrix.
pub fn load_flow_matrix(path: impl AsRef<Path>) -> Result<(Vec<String>, DMatrix<f64>)> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    let header = headers(path, &mut rdr)?;
    let cols = header[1..].to_vec();
    let n = cols.len();
    let mut rows = Vec::new();
    let mut data = Vec::with_capacity(n * n);
    for (r, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        rows.push(record[0].trim().to_string());
        for (c, cell) in record.iter().enumerate().skip(1) {
            data.push(parse_number(path, r + 2, c + 1, cell)?);
        }
    }
    if rows != cols {
        return Err(Error::Schema(format!(
            "{}: row regions must match the header regions in the same order",
            path.display()
        )));
    }
    check_unique(&rows, "region")?;
    Ok((rows, DMatrix::from_row_slice(n, n, &data)))
}

/// Loads `region,week,activity`, one series per region in first-seen order.
pub fn load_weekly(path: impl AsRef<Path>) -> Result<Vec<WeeklySeries>> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    let header = headers(path, &mut rdr)?;
    if header.len() != 3 {
        return Err(Error::Schema(format!("{}: expected `region,week,activity` header", path.display())));
    }
    let mut order = Vec::new();
    let mut by_region: HashMap<String, BTreeMap<u64, f64>> = HashMap::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let row = r + 2;
        let region = record[0].trim().to_string();
        let week: u64 = record[1].trim().parse().map_err(|_| Error::Parse {
            path: path.display().to_string(),
            row,
            column: 2,
            message: format!("not a week index: {:?}", &record[1]),
        })?;
        let activity = parse_number(path, row, 3, &record[2])?;
        let entry = by_region.entry(region.clone()).or_insert_with(|| {
            order.push(region.clone());
            BTreeMap::new()
        });
        if entry.insert(week, activity).is_some() {
            return Err(Error::Schema(format!("duplicate week {week} for {region}")));
        }
    }
    order
        .into_iter()
        .map(|region| {
            let weeks = by_region.remove(&region).unwrap();
            if weeks.keys().enumerate().any(|(i, &w)| w != i as u64) {
                return Err(Error::Schema(format!("weeks for {region} are not consecutive from 0")));
            }
            WeeklySeries::new(region, weeks.into_values().collect())
        })
        .collect()
}

/// Loads `region,label` with `developed` → +1 and `developing` → −1.
pub fn load_labels(path: impl AsRef<Path>) -> Result<LabelVector> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    headers(path, &mut rdr)?;
    let mut regions = Vec::new();
    let mut y = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        regions.push(record[0].trim().to_string());
        y.push(match record[1].trim() {
            "developed" => 1.0,
            "developing" => -1.0,
            other => {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    row: r + 2,
                    column: 2,
                    message: format!("label must be developed or developing, got {other:?}"),
                })
            }
        });
    }
    LabelVector::new(regions, y)
}

// ---------------------------------------------------------------------------
// CSV output

fn create(path: &Path) -> Result<std::io::BufWriter<File>> {
    File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn write_rows<I, R>(path: &Path, header: Vec<String>, rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = writer(path)?;
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(row.into_iter().collect::<Vec<_>>())
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_panel(path: impl AsRef<Path>, panel: &IndicatorPanel) -> Result<()> {
    let path = path.as_ref();
    let mut header = vec!["region".to_string()];
    header.extend(panel.indicators().iter().cloned());
    let rows = (0..panel.n_regions()).map(|i| {
        std::iter::once(panel.regions()[i].clone()).chain(
            (0..panel.n_indicators()).map(move |j| panel.get(i, j).map(fmt_f64).unwrap_or_default()),
        )
    });
    write_rows(path, header, rows)
}

pub fn write_mortality(path: impl AsRef<Path>, regions: &[String], rates: &[f64]) -> Result<()> {
    let rows = regions.iter().zip(rates).map(|(r, v)| [r.clone(), fmt_f64(*v)]);
    write_rows(path.as_ref(), vec!["region".into(), "death_rate".into()], rows)
}

pub fn write_flow_matrix(path: impl AsRef<Path>, regions: &[String], matrix: &DMatrix<f64>) -> Result<()> {
    let mut header = vec!["region".to_string()];
    header.extend(regions.iter().cloned());
    let rows = (0..regions.len()).map(|i| {
        std::iter::once(regions[i].clone()).chain((0..regions.len()).map(move |j| fmt_f64(matrix[(i, j)])))
    });
    write_rows(path.as_ref(), header, rows)
}

pub fn write_weekly(path: impl AsRef<Path>, series: &[WeeklySeries]) -> Result<()> {
    let rows = series.iter().flat_map(|s| {
        s.activity
            .iter()
            .enumerate()
            .map(move |(w, a)| [s.region.clone(), w.to_string(), fmt_f64(*a)])
    });
    write_rows(path.as_ref(), vec!["region".into(), "week".into(), "activity".into()], rows)
}

pub fn write_labels(path: impl AsRef<Path>, labels: &LabelVector) -> Result<()> {
    let rows = labels.regions().iter().zip(labels.y()).map(|(r, y)| {
        [
            r.clone(),
            if *y > 0.0 { "developed" } else { "developing" }.to_string(),
        ]
    });
    write_rows(path.as_ref(), vec!["region".into(), "label".into()], rows)
}

/// Writes `lines` joined by newlines (with a trailing newline).
pub fn write_text(path: impl AsRef<Path>, lines: &[String]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    for line in lines {
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    fn names(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    #[test]
    fn panel_with_one_empty_cell() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ind.csv");
        std::fs::write(&p, "region,a,b\nJPN,1,2\nUSA,,4\nNGA,5,6\n").unwrap();
        let panel = load_indicator_panel(&p).unwrap();
        assert_eq!(panel.observed_count(), 5);
        assert!(!panel.mask()[(1, 0)]);
        assert_eq!(panel.values()[(1, 0)], 0.0);
    }

    #[test]
    fn duplicate_region_is_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ind.csv");
        std::fs::write(&p, "region,a\nJPN,1\nJPN,2\n").unwrap();
        assert!(matches!(load_indicator_panel(&p), Err(Error::Schema(_))));
    }

    #[test]
    fn na_strings_are_parse_errors_with_location() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ind.csv");
        std::fs::write(&p, "region,a,b\nJPN,1,2\nUSA,3,NA\n").unwrap();
        match load_indicator_panel(&p) {
            Err(Error::Parse { row, column, .. }) => assert_eq!((row, column), (3, 3)),
            other => panic!("{other:?}"),
        }
        std::fs::write(&p, "region,a\nJPN,NaN\nUSA,1\n").unwrap();
        assert!(matches!(load_indicator_panel(&p), Err(Error::Parse { .. })));
    }

    #[test]
    fn panel_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ind.csv");
        std::fs::write(&p, "region,a,b\nJPN,0.1,\nUSA,-3.25e-7,4\n").unwrap();
        let panel = load_indicator_panel(&p).unwrap();
        let q = dir.path().join("out.csv");
        write_panel(&q, &panel).unwrap();
        assert_eq!(load_indicator_panel(&q).unwrap(), panel);
    }

    #[test]
    fn mortality_two_point_and_zero_variance() {
        let z = normalize_mortality(&[("A".into(), E), ("B".into(), E.powi(3))], RateFloor::Disabled).unwrap();
        assert!((z.z()[0] + 1.0).abs() < 1e-12 && (z.z()[1] - 1.0).abs() < 1e-12);
        let flat = [("A".into(), E), ("B".into(), E), ("C".into(), E)];
        assert!(matches!(normalize_mortality(&flat, RateFloor::Disabled), Err(Error::Degenerate(_))));
        assert!(matches!(
            normalize_mortality(&[("A".into(), 1.0)], RateFloor::Disabled),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn zero_rate_needs_floor() {
        let raw = [("A".into(), 0.0), ("B".into(), 2.0), ("C".into(), 8.0)];
        match normalize_mortality(&raw, RateFloor::Disabled) {
            Err(Error::Domain(msg)) => assert!(msg.contains('A')),
            other => panic!("{other:?}"),
        }
        let z = normalize_mortality(&raw, RateFloor::HalfMinPositive).unwrap();
        assert_eq!(z.raw_rate()[0], 1.0);
    }

    #[test]
    fn mortality_rescaling_invariance() {
        let raw: Vec<(String, f64)> = [3.0, 17.0, 0.4, 120.0]
            .iter()
            .enumerate()
            .map(|(i, r)| (format!("R{i}"), *r))
            .collect();
        let scaled: Vec<(String, f64)> = raw.iter().map(|(r, v)| (r.clone(), v * 1234.5)).collect();
        let a = normalize_mortality(&raw, RateFloor::Disabled).unwrap();
        let b = normalize_mortality(&scaled, RateFloor::Disabled).unwrap();
        assert!((a.z() - b.z()).amax() < 1e-12);
        let (mean, std) = mean_std(a.z().as_slice());
        assert!(mean.abs() < 1e-9 && (std - 1.0).abs() < 1e-9);
    }

    #[test]
    fn flows_normalization_cases() {
        let regions = names("R", 3);
        let zero = DMatrix::zeros(3, 3);
        assert!(normalize_flows(regions.clone(), &zero, &zero).unwrap().is_zero());

        let m = DMatrix::from_row_slice(3, 3, &[0.0, 500.0, 100.0, 250.0, 0.0, 50.0, 5.0, 1.0, 0.0]);
        let f = normalize_flows(regions.clone(), &m, &zero).unwrap();
        assert!((f.migration() - &m / 500.0).amax() < 1e-15);

        let diag = DMatrix::from_diagonal_element(3, 3, 7.0);
        assert!(normalize_flows(regions.clone(), &diag, &diag).unwrap().is_zero());

        let mut neg = zero.clone();
        neg[(0, 1)] = -1.0;
        assert!(matches!(normalize_flows(regions.clone(), &neg, &zero), Err(Error::Domain(_))));
        assert!(matches!(
            normalize_flows(regions, &DMatrix::zeros(2, 2), &zero),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn flows_idempotent() {
        let regions = names("R", 3);
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 2.0, 3.0, 1.0, 9.0, 6.0, 0.5, 0.0, 1.0]);
        let t = m.transpose() * 3.0;
        let once = normalize_flows(regions.clone(), &m, &t).unwrap();
        let twice = normalize_flows(regions, once.migration(), once.trade()).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn standardize_arithmetic_and_constant() {
        let values = DMatrix::from_row_slice(3, 2, &[1.0, 5.0, 2.0, 5.0, 3.0, 5.0]);
        let panel = IndicatorPanel::fully_observed(names("R", 3), vec!["a".into(), "c".into()], values).unwrap();
        let (std, report) = standardize_columns(&panel).unwrap();
        assert_eq!(report.dropped, vec!["c".to_string()]);
        let expect = [-1.224_744_871_391_589, 0.0, 1.224_744_871_391_589];
        for (i, e) in expect.iter().enumerate() {
            assert!((std.values()[(i, 0)] - e).abs() < 1e-12);
        }
    }

    #[test]
    fn standardize_uses_observed_subset() {
        // Observed entries 2 and 6: mean 4, population std 2.
        let values = DMatrix::from_row_slice(4, 1, &[2.0, 0.0, 6.0, 0.0]);
        let mask = DMatrix::from_row_slice(4, 1, &[true, false, true, false]);
        let panel = IndicatorPanel::new(names("R", 4), vec!["a".into()], values, mask).unwrap();
        let (std, report) = standardize_columns(&panel).unwrap();
        assert_eq!((report.means[0], report.stds[0]), (4.0, 2.0));
        assert_eq!(std.get(0, 0), Some(-1.0));
        assert_eq!(std.get(2, 0), Some(1.0));
        assert_eq!(std.get(1, 0), None);
    }

    #[test]
    fn region_intersection_reports_drops() {
        let a = names("R", 4);
        let b = vec!["R3".to_string(), "R1".to_string(), "X".to_string(), "R0".to_string()];
        let (kept, dropped) = intersect_regions(&[&a, &b]);
        assert_eq!(kept, vec!["R0", "R1", "R3"]);
        assert_eq!(dropped, vec!["R2", "X"]);
    }

    #[test]
    fn mismatched_lengths_fail_construction() {
        assert!(MortalityVector::new(names("R", 3), DVector::zeros(2), vec![1.0; 3]).is_err());
        assert!(LabelVector::new(names("R", 2), vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn weekly_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.csv");
        let s = vec![
            WeeklySeries::new("JPN", vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
            WeeklySeries::new("USA", vec![0.0, 0.5, 0.25, 8.0]).unwrap(),
        ];
        write_weekly(&p, &s).unwrap();
        assert_eq!(load_weekly(&p).unwrap(), s);
        std::fs::write(&p, "region,week,activity\nJPN,0,1\nJPN,2,1\nJPN,3,1\nJPN,4,1\n").unwrap();
        assert!(matches!(load_weekly(&p), Err(Error::Schema(_))));
    }
}
