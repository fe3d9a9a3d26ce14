use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::RetargetError;

/// Principal components of a joint dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaBasis {
    /// `k × d`, rows are orthonormal principal directions.
    components: DMatrix<f64>,
    mean: DVector<f64>,
    /// All `d` covariance eigenvalues, descending.
    eigenvalues: DVector<f64>,
}

/// On-disk layout of a basis (`components` row-major).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcaBasisDoc {
    pub k: usize,
    pub dim: usize,
    pub components: Vec<f64>,
    pub mean: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub explained_variance_ratio: f64,
}

impl PcaBasis {
    pub fn from_parts(components: DMatrix<f64>, mean: DVector<f64>, eigenvalues: DVector<f64>) -> Result<Self, RetargetError> {
        let d = components.ncols();
        if mean.len() != d || eigenvalues.len() != d || components.nrows() > d {
            return Err(RetargetError::Shape(format!(
                "basis {}x{d} with mean {} and {} eigenvalues",
                components.nrows(),
                mean.len(),
                eigenvalues.len()
            )));
        }
        Ok(Self {
            components,
            mean,
            eigenvalues,
        })
    }

    pub fn components(&self) -> &DMatrix<f64> {
        &self.components
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn k(&self) -> usize {
        self.components.nrows()
    }

    pub fn dim(&self) -> usize {
        self.components.ncols()
    }

    pub fn explained_variance_ratio(&self) -> f64 {
        let total: f64 = self.eigenvalues.iter().map(|v| v.max(0.0)).sum();
        if total <= 0.0 {
            return 1.0;
        }
        let top: f64 = self.eigenvalues.iter().take(self.k()).map(|v| v.max(0.0)).sum();
        top / total
    }

    pub fn project(&self, sample: &DVector<f64>) -> DVector<f64> {
        &self.components * (sample - &self.mean)
    }

    pub fn reconstruct(&self, coords: &DVector<f64>) -> DVector<f64> {
        self.components.transpose() * coords + &self.mean
    }

    /// Mean squared reconstruction error per sample, `(1/N) Σ ‖x − x̂‖²`.
    pub fn reconstruction_error(&self, data: &DMatrix<f64>) -> f64 {
        let n = data.nrows();
        let mut total = 0.0;
        for r in 0..n {
            let x = data.row(r).transpose();
            total += (&x - self.reconstruct(&self.project(&x))).norm_squared();
        }
        total / n as f64
    }

    pub fn to_doc(&self) -> PcaBasisDoc {
        PcaBasisDoc {
            k: self.k(),
            dim: self.dim(),
            components: self.components.transpose().iter().copied().collect(),
            mean: self.mean.iter().copied().collect(),
            eigenvalues: self.eigenvalues.iter().copied().collect(),
            explained_variance_ratio: self.explained_variance_ratio(),
        }
    }

    pub fn from_doc(doc: &PcaBasisDoc) -> Result<Self, RetargetError> {
        if doc.components.len() != doc.k * doc.dim {
            return Err(RetargetError::Shape(format!(
                "expected {} component entries, found {}",
                doc.k * doc.dim,
                doc.components.len()
            )));
        }
        Self::from_parts(
            DMatrix::from_row_slice(doc.k, doc.dim, &doc.components),
            DVector::from_vec(doc.mean.clone()),
            DVector::from_vec(doc.eigenvalues.clone()),
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("basis serializes")
    }

    pub fn from_json_str(s: &str) -> Result<Self, RetargetError> {
        let doc: PcaBasisDoc = serde_json::from_str(s).map_err(|e| RetargetError::Format(e.to_string()))?;
        Self::from_doc(&doc)
    }
}

/// Mean-centred PCA of an `N × d` dataset keeping the top `k` components.
/// The covariance is normalised by `N`, so the per-sample reconstruction
/// error equals the sum of the discarded eigenvalues.
pub fn fit_pca(data: &DMatrix<f64>, k: usize) -> Result<PcaBasis, RetargetError> {
    let (n, d) = data.shape();
    if k == 0 || k > d {
        return Err(RetargetError::Shape(format!("cannot keep {k} of {d} components")));
    }
    if n < k {
        return Err(RetargetError::Shape(format!("{n} samples cannot support {k} components")));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(RetargetError::Format("dataset has non-finite entries".into()));
    }
    let mean: DVector<f64> = data.row_mean().transpose();
    let mut centered = data.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / n as f64;
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues = DVector::from_iterator(d, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut components = DMatrix::zeros(k, d);
    for (r, &i) in order.iter().take(k).enumerate() {
        let mut v = eig.eigenvectors.column(i).clone_owned();
        // deterministic sign: largest-magnitude entry positive
        let (imax, _) = v.iter().enumerate().fold((0, 0.0), |best, (j, x)| {
            if x.abs() > best.1 {
                (j, x.abs())
            } else {
                best
            }
        });
        if v[imax] < 0.0 {
            v = -v;
        }
        components.row_mut(r).copy_from(&v.transpose());
    }
    PcaBasis::from_parts(components, mean, eigenvalues)
}

/// Reads a dataset CSV: one header line, then one sample per row.
pub fn read_dataset_csv(text: &str) -> Result<DMatrix<f64>, RetargetError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| RetargetError::Format("empty dataset".into()))?;
    let d = header.split(',').count();
    let mut values = Vec::new();
    let mut rows = 0;
    for (i, line) in lines.enumerate() {
        let row: Result<Vec<f64>, _> = line.split(',').map(|s| s.trim().parse::<f64>()).collect();
        let row = row.map_err(|e| RetargetError::Format(format!("row {}: {e}", i + 1)))?;
        if row.len() != d {
            return Err(RetargetError::Format(format!("row {} has {} columns, expected {d}", i + 1, row.len())));
        }
        values.extend(row);
        rows += 1;
    }
    Ok(DMatrix::from_row_slice(rows, d, &values))
}

pub fn write_dataset_csv(data: &DMatrix<f64>) -> String {
    let mut out = (0..data.ncols()).map(|j| format!("q_{j}")).collect::<Vec<_>>().join(",");
    out.push('\n');
    for row in data.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}
