//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for usage and configuration errors, 2 for
//! unreadable or malformed input files, 3 for numerical failures during
//! training. Every run that writes artifacts also writes a
//! `run_metadata.txt` recording the resolved settings and a sha256 digest
//! of each artifact, so runs can be compared without diffing the payloads.
//!
//! `train` and `cross-validate` optionally read a TOML config file; values
//! given as flags override the file, which overrides the defaults.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::data::folds::{kfold_split, FoldSplit};
use crate::data::io::{load_population, save_population};
use crate::data::synthetic::{generate_synthetic, SynthConfig};
use crate::data::Population;
use crate::error::{Error, Result};
use crate::eval::{
    cross_validate, discriminative_rois, refine_cbt, representativeness, CbtMethod,
};
use crate::model::{CbtMatrix, DgnModel, ModelConfig};
use crate::train::{train, SnlConfig};

#[derive(Parser, Debug)]
#[command(
    name = "dgn",
    version,
    about = "Learn a connectional brain template from multi-view brain networks"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a seeded synthetic population.
    Synth(SynthArgs),
    /// Train on a whole population and write the refined template.
    Train(TrainArgs),
    /// Compare template methods on held-out subjects by k-fold
    /// cross-validation.
    CrossValidate(CrossValidateArgs),
    /// Rank nodes by how strongly two templates disagree.
    RankRois(RankArgs),
    /// Score an existing template against a population.
    Evaluate(EvaluateArgs),
    /// Print a population summary.
    Inspect(InspectArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Directory the population is written into.
    #[arg(long, env = "DGN_OUT_DIR")]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    subjects: usize,
    /// Number of nodes (regions) per view.
    #[arg(long, default_value_t = 35)]
    rois: usize,
    #[arg(long, default_value_t = 4)]
    views: usize,
    /// Per-view scale factors, comma separated; defaults to all ones.
    #[arg(long, value_delimiter = ',')]
    scales: Option<Vec<f64>>,
    /// Rank of the latent factor shared across subjects.
    #[arg(long, default_value_t = 3)]
    latent_rank: usize,
    /// Subject- and edge-level noise level.
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    /// Nodes (0-based) whose incident edges are strengthened.
    #[arg(long, value_delimiter = ',')]
    plant: Option<Vec<usize>>,
    /// Strength added to each planted edge, in units of the view scale.
    #[arg(long, default_value_t = 0.0)]
    effect: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

/// Flags shared by `train` and `cross-validate`. Every optional flag falls
/// back to the config file, then to the built-in default.
#[derive(Args, Debug, Default)]
struct CommonTrainArgs {
    /// Population manifest, or the directory holding `manifest.txt`.
    #[arg(long)]
    data: PathBuf,
    /// Directory artifacts are written into.
    #[arg(long, env = "DGN_OUT_DIR")]
    out: PathBuf,
    /// TOML file with the same keys as the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Layer output widths, comma separated (input width 1 is implied).
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    /// Hidden width of the per-edge filter networks (linear if absent).
    #[arg(long)]
    filter_hidden: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Training subjects drawn per loss evaluation.
    #[arg(long)]
    snl_samples: Option<usize>,
    /// Stop after this many epochs without improvement.
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonTrainArgs,
    /// Train on the training side of one fold instead of all subjects.
    #[arg(long, requires = "k")]
    fold: Option<usize>,
    /// Number of folds the population is split into for --fold.
    #[arg(long, requires = "fold")]
    k: Option<usize>,
}

#[derive(Args, Debug)]
struct CrossValidateArgs {
    #[command(flatten)]
    common: CommonTrainArgs,
    /// Number of folds.
    #[arg(long)]
    k: Option<usize>,
    /// Methods to compare: any of dgn, mean, median (comma separated).
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
}

#[derive(Args, Debug)]
struct RankArgs {
    /// Template of the first group.
    #[arg(long)]
    cbt_a: PathBuf,
    /// Template of the second group.
    #[arg(long)]
    cbt_b: PathBuf,
    /// How many top nodes to report.
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Optional directory for the ranking table artifact.
    #[arg(long, env = "DGN_OUT_DIR")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Template file to score.
    #[arg(long, conflicts_with = "checkpoint")]
    cbt: Option<PathBuf>,
    /// Checkpoint whose model generates the template (refined over the
    /// whole population) before scoring.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Population manifest, or the directory holding `manifest.txt`.
    #[arg(long)]
    data: PathBuf,
}

#[derive(Args, Debug)]
struct InspectArgs {
    /// Population manifest, or the directory holding `manifest.txt`.
    #[arg(long, conflicts_with = "checkpoint")]
    data: Option<PathBuf>,
    /// Model checkpoint file.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

/// Optional config file for `train` and `cross-validate`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    dims: Option<Vec<usize>>,
    filter_hidden: Option<usize>,
    epochs: Option<usize>,
    learning_rate: Option<f64>,
    sample_size: Option<usize>,
    patience: Option<usize>,
    seed: Option<u64>,
    folds: Option<usize>,
    methods: Option<Vec<String>>,
}

fn load_file_config(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
    toml::from_str(&text).map_err(|e| Error::InvalidData {
        path: path.to_path_buf(),
        detail: format!("invalid config: {e}"),
    })
}

/// Fully resolved training settings: flag, else file, else default.
#[derive(Debug)]
struct TrainSettings {
    dims: Vec<usize>,
    filter_hidden: Option<usize>,
    epochs: usize,
    learning_rate: f64,
    sample_size: usize,
    patience: Option<usize>,
    seed: u64,
    folds: usize,
    methods: Vec<CbtMethod>,
}

fn resolve_settings(
    common: &CommonTrainArgs,
    k: Option<usize>,
    methods: Option<&[String]>,
) -> Result<TrainSettings> {
    let file = load_file_config(common.config.as_deref())?;
    let method_names = methods
        .map(|m| m.to_vec())
        .or(file.methods)
        .unwrap_or_else(|| CbtMethod::ALL.iter().map(|m| m.to_string()).collect());
    Ok(TrainSettings {
        dims: common
            .dims
            .clone()
            .or(file.dims)
            .unwrap_or_else(|| vec![36, 24, 5]),
        filter_hidden: common.filter_hidden.or(file.filter_hidden),
        epochs: common.epochs.or(file.epochs).unwrap_or(100),
        learning_rate: common.lr.or(file.learning_rate).unwrap_or(5e-4),
        sample_size: common.snl_samples.or(file.sample_size).unwrap_or(10),
        patience: common.patience.or(file.patience),
        seed: common.seed.or(file.seed).unwrap_or(42),
        folds: k.or(file.folds).unwrap_or(5),
        methods: method_names
            .iter()
            .map(|s| s.parse())
            .collect::<Result<Vec<_>>>()?,
    })
}

impl TrainSettings {
    fn model_config(&self, pop: &Population) -> ModelConfig {
        let mut cfg = ModelConfig::with_dims(pop.n_r(), pop.n_v(), &self.dims);
        cfg.filter_hidden = self.filter_hidden;
        cfg
    }

    fn snl_config(&self) -> SnlConfig {
        SnlConfig {
            sample_size: self.sample_size,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            seed: self.seed,
            patience: self.patience,
            ..SnlConfig::default()
        }
    }

    fn describe(&self, with_folds: bool) -> Vec<(String, String)> {
        let mut out = vec![
            ("dims".into(), format!("{:?}", self.dims)),
            (
                "filter_hidden".into(),
                self.filter_hidden
                    .map_or("none".into(), |h| h.to_string()),
            ),
            ("epochs".into(), self.epochs.to_string()),
            ("learning_rate".into(), self.learning_rate.to_string()),
            ("sample_size".into(), self.sample_size.to_string()),
            (
                "patience".into(),
                self.patience.map_or("none".into(), |p| p.to_string()),
            ),
            ("seed".into(), self.seed.to_string()),
        ];
        if with_folds {
            out.push(("folds".into(), self.folds.to_string()));
            let names: Vec<String> = self.methods.iter().map(|m| m.to_string()).collect();
            out.push(("methods".into(), names.join(",")));
        }
        out
    }
}

/// Accepts either the manifest file itself or its directory.
fn manifest_path(data: &Path) -> PathBuf {
    if data.is_dir() {
        data.join("manifest.txt")
    } else {
        data.to_path_buf()
    }
}

fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(s, "{b:02x}");
    }
    s
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes =
        fs::read(path).map_err(|e| Error::io(format!("hashing {}", path.display()), e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

fn write_run_metadata(
    out_dir: &Path,
    command: &str,
    settings: &[(String, String)],
    artifacts: &[PathBuf],
) -> Result<()> {
    let mut text = String::new();
    let _ = writeln!(text, "tool dgn {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(text, "command {command}");
    for (k, v) in settings {
        let _ = writeln!(text, "{k} {v}");
    }
    for a in artifacts {
        let name = a
            .strip_prefix(out_dir)
            .unwrap_or(a)
            .display()
            .to_string();
        let _ = writeln!(text, "artifact {name} sha256={}", sha256_file(a)?);
    }
    let path = out_dir.join("run_metadata.txt");
    fs::write(&path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))
}

fn run_synth(a: SynthArgs) -> Result<()> {
    let views = a.views;
    let cfg = SynthConfig {
        n_subjects: a.subjects,
        n_r: a.rois,
        n_v: views,
        view_scales: a.scales.unwrap_or_else(|| vec![1.0; views]),
        latent_rank: a.latent_rank,
        noise_level: a.noise,
        planted_nodes: a.plant.unwrap_or_default(),
        effect_size: a.effect,
    };
    let pop = generate_synthetic(&cfg, a.seed)?;
    let manifest = save_population(&pop, &a.out)?;
    let mut settings = vec![
        ("subjects".into(), cfg.n_subjects.to_string()),
        ("rois".into(), cfg.n_r.to_string()),
        ("views".into(), cfg.n_v.to_string()),
        ("scales".into(), format!("{:?}", cfg.view_scales)),
        ("latent_rank".into(), cfg.latent_rank.to_string()),
        ("noise".into(), cfg.noise_level.to_string()),
        ("planted".into(), format!("{:?}", cfg.planted_nodes)),
        ("effect".into(), cfg.effect_size.to_string()),
        ("seed".into(), a.seed.to_string()),
    ];
    // One digest over the manifest plus every matrix file, in manifest
    // order, pins the whole data set.
    let mut h = Sha256::new();
    let mut add = |p: &Path| -> Result<()> {
        let bytes =
            fs::read(p).map_err(|e| Error::io(format!("hashing {}", p.display()), e))?;
        h.update(&bytes);
        Ok(())
    };
    add(&manifest)?;
    for s in pop.subjects() {
        for v in 0..pop.n_v() {
            add(&a.out.join(format!("{}_v{v}.txt", s.subject_id())))?;
        }
    }
    settings.push(("population_sha256".into(), hex(&h.finalize())));
    write_run_metadata(&a.out, "synth", &settings, &[manifest])?;
    println!(
        "wrote {} subjects ({} nodes, {} views) to {}",
        pop.len(),
        pop.n_r(),
        pop.n_v(),
        a.out.display()
    );
    Ok(())
}

fn run_train(a: TrainArgs) -> Result<()> {
    let settings = resolve_settings(&a.common, None, None)?;
    let pop = load_population(&manifest_path(&a.common.data))?;
    let model_cfg = settings.model_config(&pop);
    let split = match (a.k, a.fold) {
        (Some(k), Some(fold)) => {
            let mut folds = kfold_split(pop.len(), k, settings.seed)?;
            if fold >= folds.len() {
                return Err(Error::InvalidConfig(format!(
                    "fold {fold} out of range for k={k}"
                )));
            }
            folds.swap_remove(fold)
        }
        _ => FoldSplit::full(pop.len()),
    };
    let outcome = train(&pop, &split, &model_cfg, &settings.snl_config())?;
    // Refinement aggregates over the subjects the model was trained on.
    let cbt = refine_cbt(&outcome.model, &pop, &split.train_indices)?;

    ensure_dir(&a.common.out)?;
    let cbt_path = a.common.out.join("cbt.txt");
    cbt.save(&cbt_path)?;
    let ckpt_path = a.common.out.join("checkpoint.txt");
    outcome.model.save(&ckpt_path)?;
    let loss_path = a.common.out.join("loss_history.txt");
    let mut text = String::from("# mean subject loss per epoch\n");
    for l in &outcome.epoch_losses {
        let _ = writeln!(text, "{l}");
    }
    fs::write(&loss_path, text)
        .map_err(|e| Error::io(format!("writing {}", loss_path.display()), e))?;

    let mut meta = settings.describe(false);
    meta.push(("data".into(), a.common.data.display().to_string()));
    meta.push(("subjects".into(), pop.len().to_string()));
    if let (Some(k), Some(fold)) = (a.k, a.fold) {
        meta.push(("fold".into(), format!("{fold} of {k}")));
        meta.push((
            "train_subjects".into(),
            split.train_indices.len().to_string(),
        ));
    }
    meta.push((
        "epochs_run".into(),
        outcome.epoch_losses.len().to_string(),
    ));
    meta.push((
        "stopped_early".into(),
        outcome.stopped_early.to_string(),
    ));
    write_run_metadata(
        &a.common.out,
        "train",
        &meta,
        &[cbt_path, ckpt_path, loss_path],
    )?;
    let last = outcome.epoch_losses.last().copied().unwrap_or(f64::NAN);
    println!(
        "trained {} epochs (final mean loss {last:.6}); artifacts in {}",
        outcome.epoch_losses.len(),
        a.common.out.display()
    );
    Ok(())
}

fn run_cross_validate(a: CrossValidateArgs) -> Result<()> {
    let settings = resolve_settings(&a.common, a.k, a.methods.as_deref())?;
    let pop = load_population(&manifest_path(&a.common.data))?;
    let model_cfg = settings.model_config(&pop);
    let outcome = cross_validate(
        &pop,
        settings.folds,
        &model_cfg,
        &settings.snl_config(),
        &settings.methods,
    )?;

    ensure_dir(&a.common.out)?;
    let csv_path = a.common.out.join("report.csv");
    fs::write(&csv_path, outcome.report.to_csv())
        .map_err(|e| Error::io(format!("writing {}", csv_path.display()), e))?;
    let text_path = a.common.out.join("report.txt");
    fs::write(&text_path, outcome.report.to_text())
        .map_err(|e| Error::io(format!("writing {}", text_path.display()), e))?;
    let mut artifacts = vec![csv_path, text_path];
    for ft in &outcome.fold_templates {
        for (m, cbt) in &ft.templates {
            let p = a
                .common
                .out
                .join(format!("fold{}_{m}_cbt.txt", ft.fold_id));
            cbt.save(&p)?;
            artifacts.push(p);
        }
    }

    let mut meta = settings.describe(true);
    meta.push(("data".into(), a.common.data.display().to_string()));
    meta.push(("subjects".into(), pop.len().to_string()));
    write_run_metadata(&a.common.out, "cross-validate", &meta, &artifacts)?;
    print!("{}", outcome.report.to_text());
    Ok(())
}

fn run_rank(a: RankArgs) -> Result<()> {
    let cbt_a = CbtMatrix::load(&a.cbt_a)?;
    let cbt_b = CbtMatrix::load(&a.cbt_b)?;
    let ranking = discriminative_rois(&cbt_a, &cbt_b, a.k)?;
    let mut table = String::from("rank node score\n");
    for (r, &node) in ranking.top().iter().enumerate() {
        let _ = writeln!(table, "{} {} {}", r + 1, node, ranking.scores[node]);
    }
    print!("{table}");
    if let Some(out) = &a.out {
        ensure_dir(out)?;
        let path = out.join("roi_ranking.txt");
        fs::write(&path, &table)
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        let settings = vec![
            ("cbt_a".into(), a.cbt_a.display().to_string()),
            ("cbt_b".into(), a.cbt_b.display().to_string()),
            ("k".into(), a.k.to_string()),
        ];
        write_run_metadata(out, "rank-rois", &settings, &[path])?;
    }
    Ok(())
}

fn run_evaluate(a: EvaluateArgs) -> Result<()> {
    let pop = load_population(&manifest_path(&a.data))?;
    let cbt = match (&a.cbt, &a.checkpoint) {
        (Some(path), None) => CbtMatrix::load(path)?,
        (None, Some(path)) => {
            let model = DgnModel::load(path)?;
            let all: Vec<usize> = (0..pop.len()).collect();
            refine_cbt(&model, &pop, &all)?
        }
        _ => {
            return Err(Error::InvalidConfig(
                "pass exactly one of --cbt or --checkpoint".into(),
            ));
        }
    };
    let all: Vec<usize> = (0..pop.len()).collect();
    let score = representativeness(&cbt, &pop, &all)?;
    println!("pairs {}", pop.len() * pop.n_v());
    println!("representativeness {score}");
    Ok(())
}

fn run_inspect(a: InspectArgs) -> Result<()> {
    match (&a.data, &a.checkpoint) {
        (Some(data), None) => {
            let pop = load_population(&manifest_path(data))?;
            println!(
                "subjects {}\nnodes {}\nviews {}",
                pop.len(),
                pop.n_r(),
                pop.n_v()
            );
            for (v, name) in pop.view_names().iter().enumerate() {
                println!(
                    "view {v} {name}: mean {} weight {}",
                    pop.view_means()[v],
                    pop.view_lambdas()[v]
                );
            }
        }
        (None, Some(ckpt)) => {
            let model = DgnModel::load(ckpt)?;
            let cfg = model.config();
            println!(
                "nodes {}\nviews {}\ndims {:?}\nfilter_hidden {}\nseed {}\nparameters {}",
                cfg.n_r,
                cfg.n_v,
                cfg.dims,
                cfg.filter_hidden
                    .map_or("none".to_string(), |h| h.to_string()),
                model.seed(),
                model.param_count()
            );
            for (name, tensor) in model.param_names().iter().zip(model.params()) {
                println!("param {name} {:?}", tensor.shape());
            }
        }
        _ => {
            return Err(Error::InvalidConfig(
                "pass exactly one of --data or --checkpoint".into(),
            ));
        }
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => run_synth(a),
        Command::Train(a) => run_train(a),
        Command::CrossValidate(a) => run_cross_validate(a),
        Command::RankRois(a) => run_rank(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::Inspect(a) => run_inspect(a),
    }
}

/// Parses and runs a full invocation, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_config_rejects_unknown_keys() {
        let ok: FileConfig = toml::from_str("epochs = 3\ndims = [4, 2]").unwrap();
        assert_eq!(ok.epochs, Some(3));
        assert_eq!(ok.dims, Some(vec![4, 2]));
        assert!(toml::from_str::<FileConfig>("epocs = 3").is_err());
    }

    #[test]
    fn flags_override_file_which_overrides_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("cfg.toml");
        fs::write(&cfg_path, "epochs = 7\nseed = 9\nlearning_rate = 0.25").unwrap();
        let common = CommonTrainArgs {
            config: Some(cfg_path),
            epochs: Some(3),
            ..CommonTrainArgs::default()
        };
        let s = resolve_settings(&common, None, None).unwrap();
        assert_eq!(s.epochs, 3); // flag beats file
        assert_eq!(s.seed, 9); // file beats default
        assert_eq!(s.learning_rate, 0.25);
        assert_eq!(s.sample_size, 10); // default
        assert_eq!(s.dims, vec![36, 24, 5]); // default
        assert_eq!(s.folds, 5); // default
        assert_eq!(s.methods.len(), 3);
    }

    #[test]
    fn method_lists_parse_and_reject_unknown_names() {
        let common = CommonTrainArgs::default();
        let s =
            resolve_settings(&common, None, Some(&["dgn".into(), "mean".into()])).unwrap();
        assert_eq!(s.methods, vec![CbtMethod::Dgn, CbtMethod::ElementwiseMean]);
        let err = resolve_settings(&common, None, Some(&["bogus".into()]));
        assert!(err.is_err());
    }

    #[test]
    fn sha256_matches_known_vector() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f");
        fs::write(&p, "abc").unwrap();
        assert_eq!(
            sha256_file(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_path_accepts_file_or_directory() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(
            manifest_path(dir.path()),
            dir.path().join("manifest.txt")
        );
        let file = dir.path().join("elsewhere.txt");
        fs::write(&file, "").unwrap();
        assert_eq!(manifest_path(&file), file);
    }

    #[test]
    fn usage_errors_exit_1_and_help_exits_0() {
        assert_eq!(run(["dgn", "no-such-command"]), 1);
        assert_eq!(run(["dgn", "train"]), 1); // missing required flags
        assert_eq!(run(["dgn", "--version"]), 0);
        // Invalid values are usage errors too.
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("x");
        assert_eq!(
            run(["dgn", "synth", "--out", out.to_str().unwrap(), "--rois", "0"]),
            1
        );
    }

    #[test]
    fn synth_then_inspect_and_evaluate_work_in_process() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("pop");
        let code = run([
            "dgn",
            "synth",
            "--out",
            data.to_str().unwrap(),
            "--subjects",
            "3",
            "--rois",
            "6",
            "--views",
            "2",
            "--seed",
            "7",
        ]);
        assert_eq!(code, 0);
        assert!(data.join("manifest.txt").is_file());
        assert!(data.join("run_metadata.txt").is_file());
        assert_eq!(
            run(["dgn", "inspect", "--data", data.to_str().unwrap()]),
            0
        );
        // A missing population is a data error.
        assert_eq!(
            run([
                "dgn",
                "inspect",
                "--data",
                dir.path().join("nope").to_str().unwrap()
            ]),
            2
        );
    }

    #[test]
    fn train_writes_all_artifacts_in_process() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("pop");
        let out = dir.path().join("run");
        assert_eq!(
            run([
                "dgn", "synth", "--out", data.to_str().unwrap(), "--subjects", "4",
                "--rois", "5", "--views", "2", "--seed", "3",
            ]),
            0
        );
        assert_eq!(
            run([
                "dgn",
                "train",
                "--data",
                data.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--dims",
                "3,2",
                "--epochs",
                "2",
                "--snl-samples",
                "2",
            ]),
            0
        );
        let cbt = CbtMatrix::load(&out.join("cbt.txt")).unwrap();
        assert_eq!(cbt.n_r(), 5);
        let ckpt = out.join("checkpoint.txt");
        assert!(DgnModel::load(&ckpt).is_ok());
        let history = fs::read_to_string(out.join("loss_history.txt")).unwrap();
        assert_eq!(history.lines().filter(|l| !l.starts_with('#')).count(), 2);
        let meta = fs::read_to_string(out.join("run_metadata.txt")).unwrap();
        assert!(meta.contains("command train"));
        assert!(meta.contains("artifact cbt.txt sha256="));
        // The trained checkpoint can be inspected and evaluated directly.
        assert_eq!(
            run(["dgn", "inspect", "--checkpoint", ckpt.to_str().unwrap()]),
            0
        );
        assert_eq!(
            run([
                "dgn",
                "evaluate",
                "--checkpoint",
                ckpt.to_str().unwrap(),
                "--data",
                data.to_str().unwrap(),
            ]),
            0
        );
    }
}
