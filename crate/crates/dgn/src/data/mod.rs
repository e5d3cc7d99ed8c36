//! Multi-view brain network data: per-subject tensors, populations, and
//! the per-view statistics the loss weighting is built from.

pub mod folds;
pub mod io;
pub mod synthetic;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Largest max|A - A^T| a view matrix may have before loading fails.
/// Below this, symmetry is repaired by averaging with the transpose.
pub const SYMMETRY_TOLERANCE: f64 = 1e-8;

/// One subject's stack of connectivity views, shape (n_r, n_r, n_v).
///
/// Invariants, enforced at construction: every view slice is exactly
/// symmetric, non-negative, finite, with a zero diagonal. Inputs that only
/// hold these approximately go through [`SubjectTensor::from_views`], which
/// applies the documented repair rules first.
#[derive(Debug, Clone)]
pub struct SubjectTensor {
    subject_id: String,
    n_r: usize,
    n_v: usize,
    data: Tensor,
}

impl SubjectTensor {
    /// Validating constructor; `data` must already satisfy the invariants.
    pub fn new(subject_id: impl Into<String>, data: Tensor) -> Result<Self> {
        let subject_id = subject_id.into();
        let shape = data.shape();
        let (n_r, n_v) = match *shape {
            [a, b, v] if a == b => (a, v),
            _ => {
                return Err(Error::shape(
                    format!("subject {subject_id} tensor"),
                    &[0, 0, 0],
                    shape,
                ))
            }
        };
        if n_r < 2 {
            return Err(Error::InvalidConfig(format!(
                "subject {subject_id}: need at least 2 nodes, got {n_r}"
            )));
        }
        if n_v == 0 {
            return Err(Error::InvalidConfig(format!(
                "subject {subject_id}: need at least 1 view"
            )));
        }
        for v in 0..n_v {
            for i in 0..n_r {
                let d = data.at3(i, i, v);
                if d != 0.0 {
                    return Err(Error::InvalidConfig(format!(
                        "subject {subject_id} view {v}: diagonal entry ({i},{i}) is {d}, not 0"
                    )));
                }
                for j in 0..n_r {
                    let x = data.at3(i, j, v);
                    if !x.is_finite() {
                        return Err(Error::NonFinite {
                            context: format!("subject {subject_id} view {v} entry ({i},{j})"),
                        });
                    }
                    if x < 0.0 {
                        return Err(Error::InvalidConfig(format!(
                            "subject {subject_id} view {v}: negative entry {x} at ({i},{j})"
                        )));
                    }
                    if x != data.at3(j, i, v) {
                        return Err(Error::InvalidConfig(format!(
                            "subject {subject_id} view {v}: asymmetric at ({i},{j})"
                        )));
                    }
                }
            }
        }
        Ok(SubjectTensor {
            subject_id,
            n_r,
            n_v,
            data,
        })
    }

    /// Builds a subject from per-view square matrices, applying the repair
    /// rules: asymmetry up to [`SYMMETRY_TOLERANCE`] is averaged away (worse
    /// fails), the diagonal is zeroed, negative or non-finite entries fail.
    pub fn from_views(subject_id: impl Into<String>, views: &[Tensor]) -> Result<Self> {
        let subject_id = subject_id.into();
        if views.is_empty() {
            return Err(Error::EmptyInput(format!(
                "subject {subject_id}: no views given"
            )));
        }
        let n_r = match *views[0].shape() {
            [a, b] if a == b => a,
            _ => {
                return Err(Error::shape(
                    format!("subject {subject_id} view 0"),
                    &[0, 0],
                    views[0].shape(),
                ))
            }
        };
        let n_v = views.len();
        let mut data = Tensor::zeros(vec![n_r, n_r, n_v]);
        for (v, m) in views.iter().enumerate() {
            if m.shape() != [n_r, n_r] {
                return Err(Error::shape(
                    format!("subject {subject_id} view {v}"),
                    &[n_r, n_r],
                    m.shape(),
                ));
            }
            for i in 0..n_r {
                for j in 0..n_r {
                    let x = m.at2(i, j);
                    if !x.is_finite() {
                        return Err(Error::NonFinite {
                            context: format!("subject {subject_id} view {v} entry ({i},{j})"),
                        });
                    }
                    if x < 0.0 {
                        return Err(Error::InvalidConfig(format!(
                            "subject {subject_id} view {v}: negative entry {x} at ({i},{j})"
                        )));
                    }
                }
            }
            let mut worst = 0.0f64;
            for i in 0..n_r {
                for j in (i + 1)..n_r {
                    worst = worst.max((m.at2(i, j) - m.at2(j, i)).abs());
                }
            }
            if worst > SYMMETRY_TOLERANCE {
                return Err(Error::InvalidConfig(format!(
                    "subject {subject_id} view {v}: max asymmetry {worst:e} exceeds {SYMMETRY_TOLERANCE:e}"
                )));
            }
            for i in 0..n_r {
                for j in (i + 1)..n_r {
                    // (a+b)/2 == (b+a)/2, so the repaired matrix is exactly
                    // symmetric; the diagonal is dropped outright.
                    let avg = (m.at2(i, j) + m.at2(j, i)) / 2.0;
                    let vals = data.values_mut();
                    vals[(i * n_r + j) * n_v + v] = avg;
                    vals[(j * n_r + i) * n_v + v] = avg;
                }
            }
        }
        SubjectTensor::new(subject_id, data)
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn n_r(&self) -> usize {
        self.n_r
    }

    pub fn n_v(&self) -> usize {
        self.n_v
    }

    /// The full (n_r, n_r, n_v) stack.
    pub fn data(&self) -> &Tensor {
        &self.data
    }

    /// One view as an (n_r, n_r) matrix.
    pub fn view_matrix(&self, v: usize) -> Result<Tensor> {
        if v >= self.n_v {
            return Err(Error::InvalidConfig(format!(
                "view {v} out of range for {} views",
                self.n_v
            )));
        }
        let mut out = Vec::with_capacity(self.n_r * self.n_r);
        for i in 0..self.n_r {
            for j in 0..self.n_r {
                out.push(self.data.at3(i, j, v));
            }
        }
        Tensor::new(vec![self.n_r, self.n_r], out)
    }

    /// Edge attribute rows for every ordered off-diagonal pair, shape
    /// (n_r * (n_r - 1), n_v). Row order is source-major with targets
    /// ascending and the source itself skipped; [`neighbor_targets`] gives
    /// the matching target index per row.
    pub fn off_diagonal_edges(&self) -> Tensor {
        let mut out = Vec::with_capacity(self.n_r * (self.n_r - 1) * self.n_v);
        for i in 0..self.n_r {
            for j in 0..self.n_r {
                if i == j {
                    continue;
                }
                for v in 0..self.n_v {
                    out.push(self.data.at3(i, j, v));
                }
            }
        }
        Tensor::new(vec![self.n_r * (self.n_r - 1), self.n_v], out)
            .expect("edge row count is fixed by construction")
    }

    /// Relabels nodes: entry (i,j) of the result is entry (perm[i], perm[j])
    /// of the original. `perm` must be a permutation of 0..n_r.
    pub fn permuted(&self, perm: &[usize]) -> Result<SubjectTensor> {
        if perm.len() != self.n_r {
            return Err(Error::InvalidConfig(format!(
                "permutation length {} != {} nodes",
                perm.len(),
                self.n_r
            )));
        }
        let mut seen = vec![false; self.n_r];
        for &p in perm {
            if p >= self.n_r || seen[p] {
                return Err(Error::InvalidConfig(
                    "not a permutation of node indices".into(),
                ));
            }
            seen[p] = true;
        }
        let mut data = Tensor::zeros(vec![self.n_r, self.n_r, self.n_v]);
        for i in 0..self.n_r {
            for j in 0..self.n_r {
                for v in 0..self.n_v {
                    data.values_mut()[(i * self.n_r + j) * self.n_v + v] =
                        self.data.at3(perm[i], perm[j], v);
                }
            }
        }
        SubjectTensor::new(format!("{}_perm", self.subject_id), data)
    }
}

/// Target node index for each off-diagonal edge row, matching the row order
/// of [`SubjectTensor::off_diagonal_edges`].
pub fn neighbor_targets(n_r: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(n_r * (n_r.saturating_sub(1)));
    for i in 0..n_r {
        for j in 0..n_r {
            if i != j {
                out.push(j);
            }
        }
    }
    out
}

/// Per-view population statistics: mean off-diagonal connectivity and the
/// normalized inverse-mean loss weights derived from it.
#[derive(Debug, Clone)]
pub struct ViewStats {
    pub means: Vec<f64>,
    pub lambdas: Vec<f64>,
}

/// A population of subjects with identical node count and view set.
#[derive(Debug, Clone)]
pub struct Population {
    subjects: Vec<SubjectTensor>,
    view_names: Vec<String>,
    n_r: usize,
    n_v: usize,
    stats: ViewStats,
}

impl Population {
    pub fn new(subjects: Vec<SubjectTensor>, view_names: Option<Vec<String>>) -> Result<Self> {
        if subjects.is_empty() {
            return Err(Error::EmptyInput("population has no subjects".into()));
        }
        let n_r = subjects[0].n_r();
        let n_v = subjects[0].n_v();
        for s in &subjects {
            if s.n_r() != n_r || s.n_v() != n_v {
                return Err(Error::InvalidConfig(format!(
                    "subject {} has shape ({}, {}) but the population is ({}, {})",
                    s.subject_id(),
                    s.n_r(),
                    s.n_v(),
                    n_r,
                    n_v
                )));
            }
        }
        let mut ids: Vec<&str> = subjects.iter().map(|s| s.subject_id()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig(
                "duplicate subject ids in population".into(),
            ));
        }
        let view_names = match view_names {
            Some(names) => {
                if names.len() != n_v {
                    return Err(Error::InvalidConfig(format!(
                        "{} view names for {} views",
                        names.len(),
                        n_v
                    )));
                }
                names
            }
            None => (0..n_v).map(|v| format!("v{v}")).collect(),
        };
        let all: Vec<usize> = (0..subjects.len()).collect();
        let stats = view_stats(&subjects, &all)?;
        Ok(Population {
            subjects,
            view_names,
            n_r,
            n_v,
            stats,
        })
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn n_r(&self) -> usize {
        self.n_r
    }

    pub fn n_v(&self) -> usize {
        self.n_v
    }

    pub fn subjects(&self) -> &[SubjectTensor] {
        &self.subjects
    }

    pub fn subject(&self, i: usize) -> &SubjectTensor {
        &self.subjects[i]
    }

    pub fn view_names(&self) -> &[String] {
        &self.view_names
    }

    /// Mean off-diagonal connectivity per view, over the whole population.
    pub fn view_means(&self) -> &[f64] {
        &self.stats.means
    }

    /// Loss weights per view, over the whole population: the reciprocal of
    /// each view mean, normalized so the largest weight is exactly 1.
    pub fn view_lambdas(&self) -> &[f64] {
        &self.stats.lambdas
    }

    /// Same statistics restricted to a subset of subjects. Training uses
    /// this with the training fold only, so weights never see test data.
    pub fn view_stats_for(&self, indices: &[usize]) -> Result<ViewStats> {
        view_stats(&self.subjects, indices)
    }
}

fn view_stats(subjects: &[SubjectTensor], indices: &[usize]) -> Result<ViewStats> {
    if indices.is_empty() {
        return Err(Error::EmptyInput("view statistics over no subjects".into()));
    }
    let mut seen = vec![false; subjects.len()];
    for &i in indices {
        if i >= subjects.len() {
            return Err(Error::InvalidConfig(format!(
                "subject index {i} out of range for {} subjects",
                subjects.len()
            )));
        }
        if seen[i] {
            return Err(Error::InvalidConfig(format!(
                "subject index {i} repeated in statistics subset"
            )));
        }
        seen[i] = true;
    }
    let n_r = subjects[0].n_r();
    let n_v = subjects[0].n_v();
    let count = (indices.len() * n_r * (n_r - 1)) as f64;
    let mut means = vec![0.0f64; n_v];
    for v in 0..n_v {
        let mut sum = 0.0;
        for &s in indices {
            let t = subjects[s].data();
            for i in 0..n_r {
                for j in 0..n_r {
                    if i != j {
                        sum += t.at3(i, j, v);
                    }
                }
            }
        }
        means[v] = sum / count;
    }
    let lambdas = lambdas_from_means(&means)?;
    Ok(ViewStats { means, lambdas })
}

/// Normalized inverse-mean weights: 1/mean per view, divided by the largest
/// reciprocal. The view with the smallest mean gets weight exactly 1.
pub fn lambdas_from_means(means: &[f64]) -> Result<Vec<f64>> {
    for (v, &m) in means.iter().enumerate() {
        if m <= 0.0 {
            return Err(Error::DegenerateView {
                view: v,
                detail: format!("mean off-diagonal connectivity is {m}; weights are undefined"),
            });
        }
        if !m.is_finite() {
            return Err(Error::DegenerateView {
                view: v,
                detail: "mean off-diagonal connectivity is not finite".into(),
            });
        }
    }
    let recips: Vec<f64> = means.iter().map(|&m| 1.0 / m).collect();
    let max = recips.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    Ok(recips.iter().map(|&r| r / max).collect())
}
