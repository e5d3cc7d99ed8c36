//! Template refinement and evaluation: element-wise median refinement,
//! centeredness against held-out subjects, naive baselines, discriminative
//! node ranking, and seeded k-fold cross-validation.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::data::folds::{kfold_split, FoldSplit};
use crate::data::Population;
use crate::error::{Error, Result};
use crate::model::{CbtMatrix, DgnModel, ModelConfig};
use crate::train::{train, SnlConfig};

/// Per-entry median of a stack of templates. With an even count the two
/// middle values are averaged. The result inherits symmetry, zero diagonal
/// and non-negativity from its inputs.
pub fn median_template(stack: &[CbtMatrix]) -> Result<CbtMatrix> {
    if stack.is_empty() {
        return Err(Error::EmptyInput("median over no templates".into()));
    }
    let n_r = stack[0].n_r();
    for c in stack {
        if c.n_r() != n_r {
            return Err(Error::shape(
                "median stack",
                &[n_r, n_r],
                &[c.n_r(), c.n_r()],
            ));
        }
    }
    let mut out = vec![0.0f64; n_r * n_r];
    let mut buf = vec![0.0f64; stack.len()];
    for e in 0..n_r * n_r {
        for (b, c) in buf.iter_mut().zip(stack) {
            *b = c.values()[e];
        }
        out[e] = median_in_place(&mut buf);
    }
    CbtMatrix::new(n_r, out)
}

fn median_in_place(buf: &mut [f64]) -> f64 {
    buf.sort_unstable_by(f64::total_cmp);
    let n = buf.len();
    if n % 2 == 1 {
        buf[n / 2]
    } else {
        (buf[n / 2 - 1] + buf[n / 2]) / 2.0
    }
}

/// Refined template: the model maps every training subject to a template,
/// and the element-wise median over those collapses them into one.
pub fn refine_cbt(model: &DgnModel, pop: &Population, indices: &[usize]) -> Result<CbtMatrix> {
    if indices.is_empty() {
        return Err(Error::EmptyInput("refinement over no subjects".into()));
    }
    let mut templates = Vec::with_capacity(indices.len());
    for &i in indices {
        if i >= pop.len() {
            return Err(Error::InvalidConfig(format!(
                "subject index {i} out of range for {} subjects",
                pop.len()
            )));
        }
        templates.push(model.forward_cbt(pop.subject(i))?);
    }
    median_template(&templates)
}

/// Frobenius distance between a template and every (subject, view) pair in
/// `indices`, subject-major view-minor.
pub fn pairwise_distances(
    cbt: &CbtMatrix,
    pop: &Population,
    indices: &[usize],
) -> Result<Vec<f64>> {
    if indices.is_empty() {
        return Err(Error::EmptyInput("distances over no subjects".into()));
    }
    if cbt.n_r() != pop.n_r() {
        return Err(Error::shape(
            "template vs population",
            &[pop.n_r(), pop.n_r()],
            &[cbt.n_r(), cbt.n_r()],
        ));
    }
    let mut out = Vec::with_capacity(indices.len() * pop.n_v());
    for &i in indices {
        if i >= pop.len() {
            return Err(Error::InvalidConfig(format!(
                "subject index {i} out of range for {} subjects",
                pop.len()
            )));
        }
        let t = pop.subject(i).data();
        let n_r = pop.n_r();
        for v in 0..pop.n_v() {
            let mut sq = 0.0f64;
            for r in 0..n_r {
                for c in 0..n_r {
                    let d = cbt.at(r, c) - t.at3(r, c, v);
                    sq += d * d;
                }
            }
            out.push(sq.sqrt());
        }
    }
    Ok(out)
}

/// Centeredness score: mean Frobenius distance between the template and
/// every view of every listed subject. Lower is more representative.
pub fn representativeness(cbt: &CbtMatrix, pop: &Population, indices: &[usize]) -> Result<f64> {
    let d = pairwise_distances(cbt, pop, indices)?;
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}

/// Template construction methods compared by the evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CbtMethod {
    /// The trained model plus median refinement.
    Dgn,
    /// Element-wise mean over all (training subject, view) matrices.
    ElementwiseMean,
    /// Element-wise median over all (training subject, view) matrices.
    ElementwiseMedian,
}

impl CbtMethod {
    pub const ALL: [CbtMethod; 3] = [
        CbtMethod::Dgn,
        CbtMethod::ElementwiseMean,
        CbtMethod::ElementwiseMedian,
    ];
}

impl fmt::Display for CbtMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CbtMethod::Dgn => "dgn",
            CbtMethod::ElementwiseMean => "mean",
            CbtMethod::ElementwiseMedian => "median",
        })
    }
}

impl FromStr for CbtMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dgn" => Ok(CbtMethod::Dgn),
            "mean" => Ok(CbtMethod::ElementwiseMean),
            "median" => Ok(CbtMethod::ElementwiseMedian),
            other => Err(Error::InvalidConfig(format!(
                "unknown method {other:?} (expected dgn, mean or median)"
            ))),
        }
    }
}

/// Model-free template: element-wise mean or median over every view of
/// every listed subject, all (subject, view) pairs pooled together.
pub fn baseline_cbt(pop: &Population, indices: &[usize], method: CbtMethod) -> Result<CbtMatrix> {
    if indices.is_empty() {
        return Err(Error::EmptyInput("baseline over no subjects".into()));
    }
    for &i in indices {
        if i >= pop.len() {
            return Err(Error::InvalidConfig(format!(
                "subject index {i} out of range for {} subjects",
                pop.len()
            )));
        }
    }
    let n_r = pop.n_r();
    let n_v = pop.n_v();
    let mut out = vec![0.0f64; n_r * n_r];
    match method {
        CbtMethod::ElementwiseMean => {
            let count = (indices.len() * n_v) as f64;
            for e in 0..n_r * n_r {
                let (r, c) = (e / n_r, e % n_r);
                let mut sum = 0.0;
                for &i in indices {
                    for v in 0..n_v {
                        sum += pop.subject(i).data().at3(r, c, v);
                    }
                }
                out[e] = sum / count;
            }
        }
        CbtMethod::ElementwiseMedian => {
            let mut buf = vec![0.0f64; indices.len() * n_v];
            for e in 0..n_r * n_r {
                let (r, c) = (e / n_r, e % n_r);
                let mut w = 0;
                for &i in indices {
                    for v in 0..n_v {
                        buf[w] = pop.subject(i).data().at3(r, c, v);
                        w += 1;
                    }
                }
                out[e] = median_in_place(&mut buf);
            }
        }
        CbtMethod::Dgn => {
            return Err(Error::InvalidConfig(
                "the model-based template is not a baseline; train a model instead".into(),
            ));
        }
    }
    CbtMatrix::new(n_r, out)
}

/// Node ranking by how strongly two templates disagree: score of node j is
/// the column sum of |a - b|, ranked descending with ties broken by the
/// lower node index.
#[derive(Debug, Clone)]
pub struct RoiRanking {
    /// Per-node disagreement scores, indexed by node.
    pub scores: Vec<f64>,
    /// All nodes, most discriminative first.
    pub order: Vec<usize>,
    /// How many leading entries of `order` the caller asked for.
    pub k: usize,
}

impl RoiRanking {
    pub fn top(&self) -> &[usize] {
        &self.order[..self.k]
    }
}

pub fn discriminative_rois(a: &CbtMatrix, b: &CbtMatrix, k: usize) -> Result<RoiRanking> {
    let n_r = a.n_r();
    if b.n_r() != n_r {
        return Err(Error::shape(
            "template pair",
            &[n_r, n_r],
            &[b.n_r(), b.n_r()],
        ));
    }
    if k == 0 || k > n_r {
        return Err(Error::InvalidConfig(format!(
            "k must be in 1..={n_r}, got {k}"
        )));
    }
    let mut scores = vec![0.0f64; n_r];
    for (j, s) in scores.iter_mut().enumerate() {
        for i in 0..n_r {
            *s += (a.at(i, j) - b.at(i, j)).abs();
        }
    }
    let mut order: Vec<usize> = (0..n_r).collect();
    order.sort_by(|&p, &q| scores[q].total_cmp(&scores[p]).then(p.cmp(&q)));
    Ok(RoiRanking { scores, order, k })
}

/// Two-sample location test with unequal variances.
#[derive(Debug, Clone, Copy)]
pub struct WelchTest {
    pub t: f64,
    pub df: f64,
    pub p_two_sided: f64,
    pub n_a: usize,
    pub n_b: usize,
    pub mean_a: f64,
    pub mean_b: f64,
}

/// Welch's t-test. Degenerate inputs (both samples constant) collapse to
/// p = 1 when the means agree and p = 0 otherwise.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "t-test needs at least 2 samples per side, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "t-test sample".into(),
        });
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let var = |xs: &[f64], m: f64| {
        xs.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
    };
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (var(a, ma), var(b, mb));
    let se2 = va / na + vb / nb;
    if se2 == 0.0 {
        let equal = ma == mb;
        return Ok(WelchTest {
            t: if equal { 0.0 } else { f64::INFINITY * (ma - mb).signum() },
            df: 1.0,
            p_two_sided: if equal { 1.0 } else { 0.0 },
            n_a: a.len(),
            n_b: b.len(),
            mean_a: ma,
            mean_b: mb,
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2
        / ((va / na) * (va / na) / (na - 1.0) + (vb / nb) * (vb / nb) / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| {
        Error::InvalidConfig(format!("t distribution with df={df}: {e}"))
    })?;
    let p = (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0);
    Ok(WelchTest {
        t,
        df,
        p_two_sided: p,
        n_a: a.len(),
        n_b: b.len(),
        mean_a: ma,
        mean_b: mb,
    })
}

#[derive(Debug, Clone)]
pub struct MethodScores {
    pub method: CbtMethod,
    /// Mean distance to held-out views, one entry per fold.
    pub per_fold: Vec<f64>,
    /// Mean of the per-fold scores.
    pub mean: f64,
    /// Sample standard deviation of the per-fold scores.
    pub std: f64,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub n_subjects: usize,
    pub n_r: usize,
    pub n_v: usize,
    pub k: usize,
    pub seed: u64,
    pub model_dims: Vec<usize>,
    pub methods: Vec<MethodScores>,
    /// Only present when both the model and the mean baseline were run.
    pub welch_dgn_vs_mean: Option<WelchTest>,
}

impl EvalReport {
    /// One row per (method, fold); scores print with full round-trip
    /// precision, so identical runs serialize byte-identically.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,fold,score\n");
        for m in &self.methods {
            for (fold, score) in m.per_fold.iter().enumerate() {
                let _ = writeln!(out, "{},{},{}", m.method, fold, score);
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "Centeredness by {}-fold cross-validation (mean Frobenius distance to held-out views; lower is better)",
            self.k
        );
        let _ = writeln!(
            out,
            "subjects {}, nodes {}, views {}, seed {}, model dims {:?}",
            self.n_subjects, self.n_r, self.n_v, self.seed, self.model_dims
        );
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<8} {:>14} {:>14}  per-fold", "method", "mean", "std");
        for m in &self.methods {
            let folds = m
                .per_fold
                .iter()
                .map(|s| format!("{s:.6}"))
                .collect::<Vec<_>>()
                .join(" ");
            let _ = writeln!(
                out,
                "{:<8} {:>14.6} {:>14.6}  {folds}",
                m.method.to_string(),
                m.mean,
                m.std
            );
        }
        if let Some(w) = &self.welch_dgn_vs_mean {
            let _ = writeln!(out);
            let _ = writeln!(
                out,
                "Welch t-test over pooled per-view distances, dgn ({:.6}) vs mean ({:.6}): t = {:.4}, df = {:.2}, two-sided p = {:.6}",
                w.mean_a, w.mean_b, w.t, w.df, w.p_two_sided
            );
        }
        out
    }
}

/// Templates produced for one fold, for callers that want the artifacts.
#[derive(Debug, Clone)]
pub struct FoldTemplates {
    pub fold_id: usize,
    pub templates: Vec<(CbtMethod, CbtMatrix)>,
}

#[derive(Debug, Clone)]
pub struct CrossValOutcome {
    pub report: EvalReport,
    pub fold_templates: Vec<FoldTemplates>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-fold training seed, derived so folds are independent but the whole
/// run is reproducible from one seed.
pub fn derive_fold_seed(seed: u64, fold_id: usize) -> u64 {
    splitmix64(seed ^ (fold_id as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Seeded k-fold evaluation of the requested template methods.
///
/// Each fold trains on its training side only (including the loss weights)
/// and scores every method's template against the held-out views. Folds may
/// run on worker threads; results are assembled in fold order, so identical
/// inputs produce identical reports, byte for byte.
pub fn cross_validate(
    pop: &Population,
    k: usize,
    model_cfg: &ModelConfig,
    train_cfg: &SnlConfig,
    methods: &[CbtMethod],
) -> Result<CrossValOutcome> {
    if methods.is_empty() {
        return Err(Error::InvalidConfig("no methods requested".into()));
    }
    for (i, m) in methods.iter().enumerate() {
        if methods[..i].contains(m) {
            return Err(Error::InvalidConfig(format!("method {m} listed twice")));
        }
    }
    let folds = kfold_split(pop.len(), k, train_cfg.seed)?;

    struct FoldEval {
        templates: Vec<(CbtMethod, CbtMatrix)>,
        scores: Vec<f64>,
        distances: Vec<Vec<f64>>,
    }

    let eval_fold = |fold: &FoldSplit| -> Result<FoldEval> {
        let needs_model = methods.contains(&CbtMethod::Dgn);
        let dgn_cbt = if needs_model {
            let mut cfg = train_cfg.clone();
            cfg.seed = derive_fold_seed(train_cfg.seed, fold.fold_id);
            let outcome = train(pop, fold, model_cfg, &cfg)?;
            Some(refine_cbt(&outcome.model, pop, &fold.train_indices)?)
        } else {
            None
        };
        let mut templates = Vec::with_capacity(methods.len());
        let mut scores = Vec::with_capacity(methods.len());
        let mut distances = Vec::with_capacity(methods.len());
        for &m in methods {
            let cbt = match m {
                CbtMethod::Dgn => dgn_cbt.clone().expect("built when requested"),
                baseline => baseline_cbt(pop, &fold.train_indices, baseline)?,
            };
            let d = pairwise_distances(&cbt, pop, &fold.test_indices)?;
            scores.push(d.iter().sum::<f64>() / d.len() as f64);
            distances.push(d);
            templates.push((m, cbt));
        }
        Ok(FoldEval {
            templates,
            scores,
            distances,
        })
    };

    let fold_evals: Vec<FoldEval> = folds
        .par_iter()
        .map(eval_fold)
        .collect::<Result<Vec<_>>>()?;

    let mut method_scores = Vec::with_capacity(methods.len());
    for (mi, &m) in methods.iter().enumerate() {
        let per_fold: Vec<f64> = fold_evals.iter().map(|fe| fe.scores[mi]).collect();
        let mean = per_fold.iter().sum::<f64>() / per_fold.len() as f64;
        let std = (per_fold.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>()
            / (per_fold.len() - 1) as f64)
            .sqrt();
        method_scores.push(MethodScores {
            method: m,
            per_fold,
            mean,
            std,
        });
    }

    let welch = {
        let pos = |m: CbtMethod| methods.iter().position(|&x| x == m);
        match (pos(CbtMethod::Dgn), pos(CbtMethod::ElementwiseMean)) {
            (Some(di), Some(bi)) => {
                let pool = |i: usize| -> Vec<f64> {
                    fold_evals
                        .iter()
                        .flat_map(|fe| fe.distances[i].iter().copied())
                        .collect()
                };
                Some(welch_t_test(&pool(di), &pool(bi))?)
            }
            _ => None,
        }
    };

    let fold_templates = fold_evals
        .into_iter()
        .zip(&folds)
        .map(|(fe, f)| FoldTemplates {
            fold_id: f.fold_id,
            templates: fe.templates,
        })
        .collect();

    Ok(CrossValOutcome {
        report: EvalReport {
            n_subjects: pop.len(),
            n_r: pop.n_r(),
            n_v: pop.n_v(),
            k,
            seed: train_cfg.seed,
            model_dims: model_cfg.dims.clone(),
            methods: method_scores,
            welch_dgn_vs_mean: welch,
        },
        fold_templates,
    })
}
