//! Age-pattern components of the historical survey schedules.
//!
//! Rows of the input matrix are region-years, columns are age groups, and
//! entries are log proportions. No centring is applied: the first
//! right-singular vector plays the role of a baseline log schedule and the
//! second captures the direction in which schedules age or rejuvenate.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{AgeGroup, MigrantPanel, Region, Source};

#[derive(Debug, Error)]
pub enum ComponentsError {
    #[error("no survey observations in the selected years")]
    EmptySelection,
    #[error("age group {0} has no observed entries")]
    EmptyColumn(AgeGroup),
    #[error("matrix has missing entries; impute before decomposing")]
    Incomplete,
    #[error("matrix must be at least 2x2, got {rows}x{cols}")]
    TooSmall { rows: usize, cols: usize },
    #[error("matrix has rank < 2 (second/first singular value = {ratio:e})")]
    DegenerateMatrix { ratio: f64 },
    #[error("invalid components: {0}")]
    InvalidComponents(String),
}

/// Region-year by age-group matrix of log proportions.
#[derive(Debug, Clone, PartialEq)]
pub struct LogScheduleMatrix {
    /// Row-major; missing entries are NaN until imputed.
    values: Vec<f64>,
    row_index: Vec<(Region, i32)>,
    col_index: Vec<AgeGroup>,
    missing_mask: Vec<bool>,
}

impl LogScheduleMatrix {
    /// Builds a complete matrix from row-major values (no missing cells).
    pub fn from_rows(row_index: Vec<(Region, i32)>, col_index: Vec<AgeGroup>, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), row_index.len() * col_index.len());
        let missing_mask = values.iter().map(|v| !v.is_finite()).collect();
        Self {
            values,
            row_index,
            col_index,
            missing_mask,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.row_index.len()
    }

    pub fn n_cols(&self) -> usize {
        self.col_index.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_cols() + col]
    }

    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        self.missing_mask[row * self.n_cols() + col]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row_index(&self) -> &[(Region, i32)] {
        &self.row_index
    }

    pub fn col_index(&self) -> &[AgeGroup] {
        &self.col_index
    }

    pub fn missing_mask(&self) -> &[bool] {
        &self.missing_mask
    }

    pub fn is_complete(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Collects survey log proportions for `first..=last` into a matrix with
/// one row per observed (region, year), sorted by region code then year.
pub fn build_log_matrix(panel: &MigrantPanel, first: i32, last: i32) -> Result<LogScheduleMatrix, ComponentsError> {
    if first > last {
        return Err(ComponentsError::EmptySelection);
    }
    let survey = panel.source_only(Source::Survey);
    let col_index: Vec<AgeGroup> = survey.ages().into_iter().collect();
    let selected = survey.in_years(first, last);
    if selected.is_empty() {
        return Err(ComponentsError::EmptySelection);
    }
    let mut rows: Vec<(Region, i32)> = selected
        .observations()
        .iter()
        .map(|o| (o.region.clone(), o.year))
        .collect();
    rows.sort_by(|a, b| (&a.0.code, a.1).cmp(&(&b.0.code, b.1)));
    rows.dedup();

    let row_of: HashMap<(&str, i32), usize> = rows
        .iter()
        .enumerate()
        .map(|(i, (r, y))| ((r.code.as_str(), *y), i))
        .collect();
    let g = col_index.len();
    let mut values = vec![f64::NAN; rows.len() * g];
    for o in selected.observations() {
        let i = row_of[&(o.region.code.as_str(), o.year)];
        let j = col_index.iter().position(|&a| a == o.age).expect("age from panel");
        values[i * g + j] = o.proportion.ln();
    }
    let missing_mask = values.iter().map(|v| v.is_nan()).collect();
    Ok(LogScheduleMatrix {
        values,
        row_index: rows,
        col_index,
        missing_mask,
    })
}

/// Fills missing cells with the mean of the same (region, age) series,
/// falling back to the column mean. The missing mask is kept.
pub fn impute_missing(matrix: &LogScheduleMatrix) -> Result<LogScheduleMatrix, ComponentsError> {
    let g = matrix.n_cols();
    let mut out = matrix.clone();
    for j in 0..g {
        let observed: Vec<f64> = (0..matrix.n_rows())
            .filter(|&i| !matrix.is_missing(i, j))
            .map(|i| matrix.get(i, j))
            .collect();
        if observed.is_empty() {
            return Err(ComponentsError::EmptyColumn(matrix.col_index[j]));
        }
        let column_mean = observed.iter().sum::<f64>() / observed.len() as f64;

        let mut series: HashMap<&str, (f64, usize)> = HashMap::new();
        for i in 0..matrix.n_rows() {
            if !matrix.is_missing(i, j) {
                let e = series.entry(matrix.row_index[i].0.code.as_str()).or_default();
                e.0 += matrix.get(i, j);
                e.1 += 1;
            }
        }
        for i in 0..matrix.n_rows() {
            if matrix.is_missing(i, j) {
                out.values[i * g + j] = match series.get(matrix.row_index[i].0.code.as_str()) {
                    Some(&(sum, n)) => sum / n as f64,
                    None => column_mean,
                };
            }
        }
    }
    Ok(out)
}

/// Thin singular value decomposition `A = U diag(s) V'` of an `n x g`
/// row-major matrix with `n >= g`, singular values sorted descending.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub n_rows: usize,
    pub n_cols: usize,
    /// `n x g`, row-major.
    pub u: Vec<f64>,
    pub singular_values: Vec<f64>,
    /// `g x g`, row-major; column `k` is the k-th right-singular vector.
    pub v: Vec<f64>,
}

impl ThinSvd {
    pub fn right_vector(&self, k: usize) -> Vec<f64> {
        (0..self.n_cols).map(|i| self.v[i * self.n_cols + k]).collect()
    }
}

/// One-sided Jacobi SVD. Columns of the working copy are rotated pairwise
/// until mutually orthogonal; the accumulated rotations form `V`.
pub fn thin_svd(values: &[f64], n_rows: usize, n_cols: usize) -> ThinSvd {
    assert_eq!(values.len(), n_rows * n_cols);
    let (n, g) = (n_rows, n_cols);
    // Column-major working copy for cache-friendly column sweeps.
    let mut a: Vec<f64> = (0..g).flat_map(|j| (0..n).map(move |i| (i, j))).map(|(i, j)| values[i * g + j]).collect();
    let mut v = vec![0.0; g * g];
    for k in 0..g {
        v[k * g + k] = 1.0;
    }
    let eps = f64::EPSILON;
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..g {
            for q in (p + 1)..g {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..n {
                    let ap = a[p * n + i];
                    let aq = a[q * n + i];
                    alpha += ap * ap;
                    beta += aq * aq;
                    gamma += ap * aq;
                }
                if gamma == 0.0 || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..n {
                    let ap = a[p * n + i];
                    let aq = a[q * n + i];
                    a[p * n + i] = c * ap - s * aq;
                    a[q * n + i] = s * ap + c * aq;
                }
                for i in 0..g {
                    let vp = v[i * g + p];
                    let vq = v[i * g + q];
                    v[i * g + p] = c * vp - s * vq;
                    v[i * g + q] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..g)
        .map(|j| a[j * n..(j + 1) * n].iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..g).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]).then(x.cmp(&y)));

    let mut u = vec![0.0; n * g];
    let mut v_sorted = vec![0.0; g * g];
    let mut singular_values = Vec::with_capacity(g);
    for (k, &j) in order.iter().enumerate() {
        let s = norms[j];
        singular_values.push(s);
        for i in 0..n {
            u[i * g + k] = if s > 0.0 { a[j * n + i] / s } else { 0.0 };
        }
        for i in 0..g {
            v_sorted[i * g + k] = v[i * g + j];
        }
    }
    ThinSvd {
        n_rows: n,
        n_cols: g,
        u,
        singular_values,
        v: v_sorted,
    }
}

/// First two right-singular vectors of the log schedule matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrincipalComponents {
    #[serde(rename = "ages")]
    pub age_index: Vec<AgeGroup>,
    pub z1: Vec<f64>,
    pub z2: Vec<f64>,
    /// NaN when the vectors were supplied rather than computed; written as
    /// `null` in JSON.
    #[serde(with = "nan_as_null")]
    pub singular_values: [f64; 2],
}

mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64; 2], s: S) -> Result<S::Ok, S::Error> {
        v.map(|x| x.is_finite().then_some(x)).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[f64; 2], D::Error> {
        Ok(<[Option<f64>; 2]>::deserialize(d)?.map(|x| x.unwrap_or(f64::NAN)))
    }
}

const ORTHONORMAL_TOLERANCE: f64 = 1e-9;

impl PrincipalComponents {
    /// Wraps externally supplied vectors, normalising signs. Vectors must
    /// already be orthonormal.
    pub fn new(age_index: Vec<AgeGroup>, z1: Vec<f64>, z2: Vec<f64>) -> Result<Self, ComponentsError> {
        let g = age_index.len();
        if z1.len() != g || z2.len() != g {
            return Err(ComponentsError::InvalidComponents(format!(
                "expected vectors of length {g}"
            )));
        }
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        if (dot(&z1, &z1) - 1.0).abs() > ORTHONORMAL_TOLERANCE
            || (dot(&z2, &z2) - 1.0).abs() > ORTHONORMAL_TOLERANCE
            || dot(&z1, &z2).abs() > ORTHONORMAL_TOLERANCE
        {
            return Err(ComponentsError::InvalidComponents(
                "z1 and z2 must be orthonormal".into(),
            ));
        }
        let mut pc = Self {
            age_index,
            z1,
            z2,
            singular_values: [f64::NAN, f64::NAN],
        };
        pc.normalise_signs();
        Ok(pc)
    }

    pub fn n_ages(&self) -> usize {
        self.age_index.len()
    }

    /// `sum(z1) <= 0`, then the last entry of `z2` is made non-negative.
    /// Near-zero sums fall back to the first (resp. last) non-negligible entry.
    pub fn normalise_signs(&mut self) {
        const TINY: f64 = 1e-12;
        let sum: f64 = self.z1.iter().sum();
        let flip1 = if sum.abs() > TINY {
            sum > 0.0
        } else {
            self.z1.iter().find(|v| v.abs() > TINY).is_some_and(|&v| v > 0.0)
        };
        if flip1 {
            self.z1.iter_mut().for_each(|v| *v = -*v);
        }
        let flip2 = self.z2.iter().rev().find(|v| v.abs() > TINY).is_some_and(|&v| v < 0.0);
        if flip2 {
            self.z2.iter_mut().for_each(|v| *v = -*v);
        }
    }
}

/// Extracts the first two right-singular vectors of a complete matrix.
pub fn compute_components(matrix: &LogScheduleMatrix) -> Result<PrincipalComponents, ComponentsError> {
    if !matrix.is_complete() {
        return Err(ComponentsError::Incomplete);
    }
    let (n, g) = (matrix.n_rows(), matrix.n_cols());
    if n < 2 || g < 2 {
        return Err(ComponentsError::TooSmall { rows: n, cols: g });
    }
    let svd = if n >= g {
        thin_svd(&matrix.values, n, g)
    } else {
        // Fewer rows than columns: pad with zero rows so the one-sided
        // sweep sees a tall matrix; right-singular vectors are unchanged.
        let mut padded = matrix.values.clone();
        padded.resize(g * g, 0.0);
        thin_svd(&padded, g, g)
    };
    let s = &svd.singular_values;
    let ratio = if s[0] > 0.0 { s[1] / s[0] } else { 0.0 };
    if ratio < 1e-12 {
        return Err(ComponentsError::DegenerateMatrix { ratio });
    }
    let mut pc = PrincipalComponents {
        age_index: matrix.col_index.clone(),
        z1: svd.right_vector(0),
        z2: svd.right_vector(1),
        singular_values: [s[0], s[1]],
    };
    pc.normalise_signs();
    Ok(pc)
}

/// Builds the log schedule matrix for `first..=last`, imputes gaps, and
/// extracts the components.
pub fn components_from_panel(panel: &MigrantPanel, first: i32, last: i32) -> Result<PrincipalComponents, ComponentsError> {
    let matrix = build_log_matrix(panel, first, last)?;
    let matrix = if matrix.is_complete() { matrix } else { impute_missing(&matrix)? };
    compute_components(&matrix)
}
