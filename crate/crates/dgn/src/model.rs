//! The edge-conditioned graph convolutional model and the template matrix
//! it produces.
//!
//! Every node starts from the same scalar feature, so node identity plays
//! no role; everything the model learns comes from edge attributes. Each
//! layer runs a small filter network over the attribute vector of every
//! ordered node pair to generate that pair's weight matrix, averages the
//! resulting messages over the full neighborhood (the graph is complete),
//! and adds a learned self term and bias. After the last layer, each entry
//! (i, j) of the output template is the L1 distance between the embeddings
//! of nodes i and j, which is symmetric, non-negative and zero on the
//! diagonal by construction.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{NodeId, Tape};
use crate::data::{neighbor_targets, SubjectTensor, SYMMETRY_TOLERANCE};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub n_r: usize,
    pub n_v: usize,
    /// Node feature width per layer, including the input width up front.
    /// The input width must be 1 (identity features).
    pub dims: Vec<usize>,
    /// Hidden width of the per-edge filter networks; None keeps them linear.
    pub filter_hidden: Option<usize>,
}

impl ModelConfig {
    /// Convenience constructor from the output widths of the stacked
    /// layers; the leading input width of 1 is implied.
    pub fn with_dims(n_r: usize, n_v: usize, layer_dims: &[usize]) -> Self {
        let mut dims = Vec::with_capacity(layer_dims.len() + 1);
        dims.push(1);
        dims.extend_from_slice(layer_dims);
        ModelConfig {
            n_r,
            n_v,
            dims,
            filter_hidden: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_r < 2 {
            return Err(Error::InvalidConfig(format!(
                "model needs at least 2 nodes, got {}",
                self.n_r
            )));
        }
        if self.n_v == 0 {
            return Err(Error::InvalidConfig("model needs at least 1 view".into()));
        }
        if self.dims.len() < 2 {
            return Err(Error::InvalidConfig(
                "dims must list the input width and at least one layer".into(),
            ));
        }
        if self.dims[0] != 1 {
            return Err(Error::InvalidConfig(format!(
                "input feature width must be 1, got {}",
                self.dims[0]
            )));
        }
        if self.dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidConfig("zero-width layer".into()));
        }
        if self.filter_hidden == Some(0) {
            return Err(Error::InvalidConfig("filter hidden width must be >= 1".into()));
        }
        Ok(())
    }

    pub fn n_layers(&self) -> usize {
        self.dims.len() - 1
    }
}

/// Per-edge weight generator: a linear map (optionally with one hidden ReLU
/// layer) from the n_v edge attributes to a flattened (d_out, d_in) matrix.
#[derive(Debug, Clone)]
pub struct FilterNet {
    pub hidden: Option<FilterHidden>,
    /// (filter input width, d_out * d_in)
    pub out_weight: Tensor,
    /// (d_out * d_in)
    pub out_bias: Tensor,
}

#[derive(Debug, Clone)]
pub struct FilterHidden {
    /// (n_v, hidden width)
    pub weight: Tensor,
    /// (hidden width)
    pub bias: Tensor,
}

#[derive(Debug, Clone)]
pub struct DgnLayer {
    pub d_in: usize,
    pub d_out: usize,
    /// Self-connection weights, stored input-major: output = feats * root.
    pub root_weight: Tensor,
    pub bias: Tensor,
    pub filter: FilterNet,
}

#[derive(Debug, Clone)]
pub struct DgnModel {
    config: ModelConfig,
    seed: u64,
    layers: Vec<DgnLayer>,
}

/// Canonical parameter order: per layer, root weight, bias, then the filter
/// net (hidden weight/bias if present, output weight/bias). Everything that
/// walks parameters (init, checkpoints, gradients, the optimizer) follows
/// this layout.
fn param_layout(cfg: &ModelConfig) -> Vec<(String, Vec<usize>, usize)> {
    let mut out = Vec::new();
    for l in 0..cfg.n_layers() {
        let (d_in, d_out) = (cfg.dims[l], cfg.dims[l + 1]);
        let f_in = cfg.filter_hidden.unwrap_or(cfg.n_v);
        out.push((format!("layer{l}.root_weight"), vec![d_in, d_out], d_in));
        out.push((format!("layer{l}.bias"), vec![d_out], d_in));
        if let Some(h) = cfg.filter_hidden {
            out.push((format!("layer{l}.filter.hidden_weight"), vec![cfg.n_v, h], cfg.n_v));
            out.push((format!("layer{l}.filter.hidden_bias"), vec![h], cfg.n_v));
        }
        out.push((
            format!("layer{l}.filter.out_weight"),
            vec![f_in, d_out * d_in],
            f_in,
        ));
        out.push((format!("layer{l}.filter.out_bias"), vec![d_out * d_in], f_in));
    }
    out
}

impl DgnModel {
    /// Fresh model with parameters drawn uniformly from
    /// [-1/sqrt(fan_in), 1/sqrt(fan_in)), the usual linear-layer scheme.
    /// The same (config, seed) always yields identical parameters.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = Vec::new();
        for (_, shape, fan_in) in param_layout(&config) {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let n: usize = shape.iter().product();
            let vals = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
            tensors.push(Tensor::new(shape, vals)?);
        }
        DgnModel::from_parts(config, seed, tensors)
    }

    /// Assembles a model from parameter tensors in canonical order.
    pub fn from_parts(config: ModelConfig, seed: u64, tensors: Vec<Tensor>) -> Result<Self> {
        config.validate()?;
        let layout = param_layout(&config);
        if tensors.len() != layout.len() {
            return Err(Error::InvalidConfig(format!(
                "expected {} parameter tensors, got {}",
                layout.len(),
                tensors.len()
            )));
        }
        for ((name, shape, _), t) in layout.iter().zip(&tensors) {
            if t.shape() != shape.as_slice() {
                return Err(Error::shape(format!("parameter {name}"), shape, t.shape()));
            }
            if let Some(i) = t.first_non_finite() {
                return Err(Error::NonFinite {
                    context: format!("parameter {name} (element {i})"),
                });
            }
        }
        let mut iter = tensors.into_iter();
        let mut layers = Vec::with_capacity(config.n_layers());
        for l in 0..config.n_layers() {
            let (d_in, d_out) = (config.dims[l], config.dims[l + 1]);
            let root_weight = iter.next().expect("layout counted");
            let bias = iter.next().expect("layout counted");
            let hidden = if config.filter_hidden.is_some() {
                let weight = iter.next().expect("layout counted");
                let bias = iter.next().expect("layout counted");
                Some(FilterHidden { weight, bias })
            } else {
                None
            };
            let out_weight = iter.next().expect("layout counted");
            let out_bias = iter.next().expect("layout counted");
            layers.push(DgnLayer {
                d_in,
                d_out,
                root_weight,
                bias,
                filter: FilterNet {
                    hidden,
                    out_weight,
                    out_bias,
                },
            });
        }
        Ok(DgnModel {
            config,
            seed,
            layers,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn layers(&self) -> &[DgnLayer] {
        &self.layers
    }

    pub fn param_names(&self) -> Vec<String> {
        param_layout(&self.config)
            .into_iter()
            .map(|(n, _, _)| n)
            .collect()
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.push(&layer.root_weight);
            out.push(&layer.bias);
            if let Some(h) = &layer.filter.hidden {
                out.push(&h.weight);
                out.push(&h.bias);
            }
            out.push(&layer.filter.out_weight);
            out.push(&layer.filter.out_bias);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            out.push(&mut layer.root_weight);
            out.push(&mut layer.bias);
            if let Some(h) = &mut layer.filter.hidden {
                out.push(&mut h.weight);
                out.push(&mut h.bias);
            }
            out.push(&mut layer.filter.out_weight);
            out.push(&mut layer.filter.out_bias);
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Registers every parameter on the tape as a trainable leaf, in
    /// canonical order.
    pub fn insert_params(&self, tape: &mut Tape) -> Result<Vec<NodeId>> {
        self.params()
            .into_iter()
            .map(|t| tape.param(t.clone()))
            .collect()
    }

    /// Builds the full subject-to-template graph on `tape`, reading
    /// parameters from `param_ids` (as returned by [`DgnModel::insert_params`],
    /// or constants in the same order). Returns the (n_r, n_r) template node.
    pub fn forward_cbt_graph(
        &self,
        tape: &mut Tape,
        param_ids: &[NodeId],
        subject: &SubjectTensor,
    ) -> Result<NodeId> {
        let emb = self.embedding_graph(tape, param_ids, subject)?;
        cbt_graph(tape, emb, self.config.n_r, *self.config.dims.last().expect("non-empty dims"))
    }

    /// Same graph, stopping at the final (n_r, d_last) node embeddings.
    pub fn embedding_graph(
        &self,
        tape: &mut Tape,
        param_ids: &[NodeId],
        subject: &SubjectTensor,
    ) -> Result<NodeId> {
        if subject.n_r() != self.config.n_r || subject.n_v() != self.config.n_v {
            return Err(Error::shape(
                format!("subject {} vs model", subject.subject_id()),
                &[self.config.n_r, self.config.n_r, self.config.n_v],
                subject.data().shape(),
            ));
        }
        let expected = param_layout(&self.config).len();
        if param_ids.len() != expected {
            return Err(Error::InvalidConfig(format!(
                "expected {expected} parameter nodes, got {}",
                param_ids.len()
            )));
        }
        let n_r = self.config.n_r;
        let edges = tape.constant(subject.off_diagonal_edges())?;
        let targets = neighbor_targets(n_r);
        let mut feats = tape.constant(Tensor::ones(vec![n_r, 1]))?;
        let mut cursor = 0usize;
        let n_layers = self.config.n_layers();
        for (l, layer) in self.layers.iter().enumerate() {
            let ids = LayerParamIds::take(&self.config, param_ids, &mut cursor);
            feats = layer_graph(tape, &ids, feats, edges, &targets, n_r, layer.d_in, layer.d_out)?;
            if l + 1 < n_layers {
                feats = tape.relu(feats)?;
            }
        }
        Ok(feats)
    }

    /// Runs the model on one subject without recording gradients.
    pub fn forward_cbt(&self, subject: &SubjectTensor) -> Result<CbtMatrix> {
        let mut tape = Tape::new();
        let ids = self
            .params()
            .into_iter()
            .map(|t| tape.constant(t.clone()))
            .collect::<Result<Vec<_>>>()?;
        let out = self.forward_cbt_graph(&mut tape, &ids, subject)?;
        CbtMatrix::from_matrix(tape.value(out))
    }

    /// Final node embeddings for one subject, without gradients.
    pub fn embeddings(&self, subject: &SubjectTensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let ids = self
            .params()
            .into_iter()
            .map(|t| tape.constant(t.clone()))
            .collect::<Result<Vec<_>>>()?;
        let out = self.embedding_graph(&mut tape, &ids, subject)?;
        Ok(tape.value(out).clone())
    }

    /// Writes a text checkpoint: config, init seed, and every parameter
    /// tensor. Loading reproduces the model bit-exactly.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::from("checkpoint v1\n");
        let _ = writeln!(out, "nodes {}", self.config.n_r);
        let _ = writeln!(out, "views {}", self.config.n_v);
        let _ = writeln!(
            out,
            "dims {}",
            self.config
                .dims
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        );
        match self.config.filter_hidden {
            Some(h) => {
                let _ = writeln!(out, "filter_hidden {h}");
            }
            None => {
                let _ = writeln!(out, "filter_hidden none");
            }
        }
        let _ = writeln!(out, "seed {}", self.seed);
        for (name, t) in self.param_names().iter().zip(self.params()) {
            let dims = t
                .shape()
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(" ");
            let _ = writeln!(out, "tensor {name} {} {dims}", t.rank());
            let mut line = String::new();
            for (i, v) in t.values().iter().enumerate() {
                if i > 0 {
                    line.push(' ');
                }
                let _ = write!(line, "{v}");
            }
            out.push_str(&line);
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let bad = |detail: String| Error::InvalidData {
            path: path.to_path_buf(),
            detail,
        };
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("checkpoint v1") {
            return Err(bad("missing 'checkpoint v1' header".into()));
        }
        let mut field = |key: &str| -> Result<String> {
            let line = lines
                .next()
                .ok_or_else(|| bad(format!("missing '{key}' line")))?;
            let rest = line
                .strip_prefix(key)
                .ok_or_else(|| bad(format!("expected '{key}', found {line:?}")))?;
            Ok(rest.trim().to_string())
        };
        let n_r: usize = field("nodes")?
            .parse()
            .map_err(|_| bad("bad node count".into()))?;
        let n_v: usize = field("views")?
            .parse()
            .map_err(|_| bad("bad view count".into()))?;
        let dims = field("dims")?
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|_| bad("bad dims".into())))
            .collect::<Result<Vec<usize>>>()?;
        let fh = field("filter_hidden")?;
        let filter_hidden = if fh == "none" {
            None
        } else {
            Some(fh.parse::<usize>().map_err(|_| bad("bad filter_hidden".into()))?)
        };
        let seed: u64 = field("seed")?
            .parse()
            .map_err(|_| bad("bad seed".into()))?;
        let config = ModelConfig {
            n_r,
            n_v,
            dims,
            filter_hidden,
        };
        config.validate()?;

        let mut tensors = Vec::new();
        for (name, shape, _) in param_layout(&config) {
            let header = lines
                .next()
                .ok_or_else(|| bad(format!("missing tensor {name}")))?;
            let mut toks = header.split_whitespace();
            if toks.next() != Some("tensor") {
                return Err(bad(format!("expected tensor header, found {header:?}")));
            }
            if toks.next() != Some(name.as_str()) {
                return Err(bad(format!("expected tensor {name}, found {header:?}")));
            }
            let rank: usize = toks
                .next()
                .ok_or_else(|| bad(format!("tensor {name}: missing rank")))?
                .parse()
                .map_err(|_| bad(format!("tensor {name}: bad rank")))?;
            let got_shape = toks
                .map(|t| {
                    t.parse::<usize>()
                        .map_err(|_| bad(format!("tensor {name}: bad dim")))
                })
                .collect::<Result<Vec<usize>>>()?;
            if got_shape.len() != rank || got_shape != shape {
                return Err(bad(format!(
                    "tensor {name}: shape {got_shape:?} does not match expected {shape:?}"
                )));
            }
            let values_line = lines
                .next()
                .ok_or_else(|| bad(format!("tensor {name}: missing values")))?;
            let values = values_line
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| bad(format!("tensor {name}: bad value {t:?}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            tensors.push(Tensor::new(shape, values).map_err(|_| {
                bad(format!("tensor {name}: wrong number of values"))
            })?);
        }
        if lines.any(|l| !l.trim().is_empty()) {
            return Err(bad("trailing content after last tensor".into()));
        }
        DgnModel::from_parts(config, seed, tensors)
    }
}

struct LayerParamIds {
    root: NodeId,
    bias: NodeId,
    hidden: Option<(NodeId, NodeId)>,
    out_weight: NodeId,
    out_bias: NodeId,
}

impl LayerParamIds {
    fn take(cfg: &ModelConfig, ids: &[NodeId], cursor: &mut usize) -> Self {
        let mut next = || {
            let id = ids[*cursor];
            *cursor += 1;
            id
        };
        let root = next();
        let bias = next();
        let hidden = if cfg.filter_hidden.is_some() {
            Some((next(), next()))
        } else {
            None
        };
        let out_weight = next();
        let out_bias = next();
        LayerParamIds {
            root,
            bias,
            hidden,
            out_weight,
            out_bias,
        }
    }
}

/// One convolution layer as a tape graph.
///
/// `feats` is (n_r, d_in); `edges` is the (n_r*(n_r-1), n_v) off-diagonal
/// attribute block with `targets[e]` naming the neighbor each row points
/// at. The result is (n_r, d_out): per-edge generated weight matrices
/// applied to the neighbor features, averaged over each node's full
/// neighborhood, plus the self term and bias.
#[allow(clippy::too_many_arguments)]
fn layer_graph(
    tape: &mut Tape,
    ids: &LayerParamIds,
    feats: NodeId,
    edges: NodeId,
    targets: &[usize],
    n_r: usize,
    d_in: usize,
    d_out: usize,
) -> Result<NodeId> {
    let n_edges = n_r * (n_r - 1);
    let filter_in = match ids.hidden {
        Some((w, b)) => {
            let lin = tape.matmul(edges, w)?;
            let lin = tape.add(lin, b)?;
            tape.relu(lin)?
        }
        None => edges,
    };
    let theta_flat = tape.matmul(filter_in, ids.out_weight)?;
    let theta_flat = tape.add(theta_flat, ids.out_bias)?;
    let theta = tape.reshape(theta_flat, vec![n_edges, d_out, d_in])?;

    let neigh = tape.gather_rows(feats, targets.to_vec())?;
    let neigh = tape.reshape(neigh, vec![n_edges, d_in, 1])?;
    let msgs = tape.matmul(theta, neigh)?;
    let grouped = tape.reshape(msgs, vec![n_r, n_r - 1, d_out])?;
    let agg = tape.mean_axis(grouped, 1)?;

    let self_term = tape.matmul(feats, ids.root)?;
    let pre = tape.add(self_term, agg)?;
    tape.add(pre, ids.bias)
}

/// Template construction from embeddings as a tape graph: entry (i, j) is
/// the L1 distance between embedding rows i and j.
fn cbt_graph(tape: &mut Tape, emb: NodeId, n_r: usize, d: usize) -> Result<NodeId> {
    let zeros = tape.constant(Tensor::zeros(vec![n_r, n_r, d]))?;
    let cols = tape.add(zeros, emb)?; // [i, j, :] = emb[j]
    let rows = tape.transpose12(cols)?; // [i, j, :] = emb[i]
    let diff = tape.sub(rows, cols)?;
    let mag = tape.abs(diff)?;
    tape.sum_axis(mag, 2)
}

/// Runs one layer outside any training context; useful for checking the
/// vectorized graph against a plain per-edge implementation.
pub fn layer_forward(
    layer: &DgnLayer,
    feats: &Tensor,
    edge_attrs: &Tensor,
    n_r: usize,
) -> Result<Tensor> {
    if n_r < 2 {
        return Err(Error::InvalidConfig("layer needs at least 2 nodes".into()));
    }
    if feats.shape() != [n_r, layer.d_in] {
        return Err(Error::shape("layer features", &[n_r, layer.d_in], feats.shape()));
    }
    let n_edges = n_r * (n_r - 1);
    if edge_attrs.rank() != 2 || edge_attrs.shape()[0] != n_edges {
        return Err(Error::shape(
            "layer edge attributes",
            &[n_edges, 0],
            edge_attrs.shape(),
        ));
    }
    let mut tape = Tape::new();
    let f = tape.constant(feats.clone())?;
    let e = tape.constant(edge_attrs.clone())?;
    let mut push = |t: &Tensor| tape.constant(t.clone());
    let ids = LayerParamIds {
        root: push(&layer.root_weight)?,
        bias: push(&layer.bias)?,
        hidden: match &layer.filter.hidden {
            Some(h) => Some((push(&h.weight)?, push(&h.bias)?)),
            None => None,
        },
        out_weight: push(&layer.filter.out_weight)?,
        out_bias: push(&layer.filter.out_bias)?,
    };
    let out = layer_graph(
        &mut tape,
        &ids,
        f,
        e,
        &neighbor_targets(n_r),
        n_r,
        layer.d_in,
        layer.d_out,
    )?;
    Ok(tape.value(out).clone())
}

/// Template construction from explicit embeddings, without a model.
pub fn cbt_from_embeddings(emb: &Tensor) -> Result<CbtMatrix> {
    let &[n_r, d] = emb.shape() else {
        return Err(Error::shape("embeddings", &[0, 0], emb.shape()));
    };
    if n_r < 2 {
        return Err(Error::InvalidConfig("need at least 2 embedding rows".into()));
    }
    let mut tape = Tape::new();
    let e = tape.constant(emb.clone())?;
    let out = cbt_graph(&mut tape, e, n_r, d)?;
    CbtMatrix::from_matrix(tape.value(out))
}

/// A connectional template: square, exactly symmetric, non-negative,
/// finite, zero diagonal. The forward pass guarantees all of that
/// structurally; the constructor re-checks it anyway.
#[derive(Debug, Clone, PartialEq)]
pub struct CbtMatrix {
    n_r: usize,
    values: Vec<f64>,
}

impl CbtMatrix {
    pub fn new(n_r: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_r * n_r || n_r < 2 {
            return Err(Error::InvalidConfig(format!(
                "template wants n*n values for n >= 2, got n={n_r}, {} values",
                values.len()
            )));
        }
        for i in 0..n_r {
            if values[i * n_r + i] != 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "template diagonal entry ({i},{i}) is {}, not 0",
                    values[i * n_r + i]
                )));
            }
            for j in 0..n_r {
                let x = values[i * n_r + j];
                if !x.is_finite() {
                    return Err(Error::NonFinite {
                        context: format!("template entry ({i},{j})"),
                    });
                }
                if x < 0.0 {
                    return Err(Error::InvalidConfig(format!(
                        "template entry ({i},{j}) is negative: {x}"
                    )));
                }
                if x != values[j * n_r + i] {
                    return Err(Error::InvalidConfig(format!(
                        "template asymmetric at ({i},{j})"
                    )));
                }
            }
        }
        Ok(CbtMatrix { n_r, values })
    }

    pub fn from_matrix(t: &Tensor) -> Result<Self> {
        match *t.shape() {
            [a, b] if a == b => CbtMatrix::new(a, t.values().to_vec()),
            _ => Err(Error::shape("template matrix", &[0, 0], t.shape())),
        }
    }

    pub fn n_r(&self) -> usize {
        self.n_r
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_r + j]
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![self.n_r, self.n_r], self.values.clone())
            .expect("stored values match shape")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::data::io::write_matrix(path, &self.to_tensor())
    }

    /// Loads a template from a matrix file, applying the same repairs as
    /// population loading: asymmetry within tolerance is averaged away and
    /// the diagonal is zeroed.
    pub fn load(path: &Path) -> Result<Self> {
        let m = crate::data::io::read_square_matrix(path)?;
        let n = m.shape()[0];
        if n < 2 {
            return Err(Error::InvalidData {
                path: path.to_path_buf(),
                detail: "template needs at least 2 nodes".into(),
            });
        }
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((m.at2(i, j) - m.at2(j, i)).abs());
            }
        }
        if worst > SYMMETRY_TOLERANCE {
            return Err(Error::InvalidData {
                path: path.to_path_buf(),
                detail: format!(
                    "max asymmetry {worst:e} exceeds {SYMMETRY_TOLERANCE:e}"
                ),
            });
        }
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = (m.at2(i, j) + m.at2(j, i)) / 2.0;
                values[i * n + j] = avg;
                values[j * n + i] = avg;
            }
        }
        CbtMatrix::new(n, values).map_err(|e| Error::InvalidData {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })
    }
}
