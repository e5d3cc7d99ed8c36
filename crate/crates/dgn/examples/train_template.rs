//! Train the template model on a small synthetic population and refine the
//! result into a single connectional template.
//!
//! Run with: cargo run --example train_template

use dgn::data::folds::FoldSplit;
use dgn::data::synthetic::{generate_synthetic, SynthConfig};
use dgn::eval::{refine_cbt, representativeness};
use dgn::{train, ModelConfig, SnlConfig};

fn main() -> dgn::Result<()> {
    let cfg = SynthConfig {
        n_subjects: 12,
        n_r: 12,
        n_v: 2,
        view_scales: vec![1.0, 4.0],
        latent_rank: 3,
        noise_level: 0.2,
        planted_nodes: vec![],
        effect_size: 0.0,
    };
    let pop = generate_synthetic(&cfg, 11)?;

    // Two stacked layers embed each node into 4 numbers; the pairwise L1
    // distances between embeddings form the template.
    let model_cfg = ModelConfig::with_dims(pop.n_r(), pop.n_v(), &[8, 4]);
    let train_cfg = SnlConfig {
        sample_size: 4,
        epochs: 20,
        learning_rate: 5e-3,
        seed: 3,
        ..SnlConfig::default()
    };
    println!(
        "training on {} subjects ({} epochs, one optimizer step per subject per epoch)",
        pop.len(),
        train_cfg.epochs
    );
    let outcome = train(
        &pop,
        &FoldSplit::full(pop.len()),
        &model_cfg,
        &train_cfg,
    )?;
    let first = outcome.epoch_losses[0];
    for (e, l) in outcome.epoch_losses.iter().enumerate() {
        if e % 4 == 0 || e + 1 == outcome.epoch_losses.len() {
            println!("  epoch {e:>3}: mean loss {l:>10.4} ({:>5.1}% of epoch 0)", 100.0 * l / first);
        }
    }

    // One template per training subject, collapsed by an element-wise
    // median so no single subject biases the result.
    let all: Vec<usize> = (0..pop.len()).collect();
    let cbt = refine_cbt(&outcome.model, &pop, &all)?;
    let score = representativeness(&cbt, &pop, &all)?;
    println!("\nrefined template: {}x{}", cbt.n_r(), cbt.n_r());
    println!("mean Frobenius distance to every training view: {score:.4}");

    let peak = cbt
        .values()
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    println!("strongest template edge weight: {peak:.4}");
    Ok(())
}
