//! Projects prototypes and query embeddings of an unseen transmitter onto
//! their top two principal components and renders the projection, the
//! confusion matrix and a short k-shot sweep as PNGs.
//!
//! cargo run --example embedding_pca [-- <output dir>]

use std::path::PathBuf;

use beam_protonet::cli::render::{render_confusion, render_pca, render_sweep};
use beam_protonet::data::{default_domains, synth_dataset, Protocol};
use beam_protonet::encoder::EncoderConfig;
use beam_protonet::eval::{domain_seed, evaluate_domain, kshot_sweep, pca_project, run_protocol, ProtocolConfig};
use beam_protonet::protonet::TrainConfig;

fn main() -> beam_protonet::Result<()> {
    let out = std::env::args().nth(1).map_or_else(std::env::temp_dir, PathBuf::from);
    let sets = synth_dataset(&default_domains()[..2], 30, 5.0, 0)?;
    let tests = vec![("tx1".to_string(), sets["tx1"].clone())];
    let cfg = ProtocolConfig {
        encoder: EncoderConfig::small(),
        train: TrainConfig {
            n_way: 5,
            n_shot: 2,
            n_query: 3,
            max_episodes: 40,
            eval_every: 20,
            val_episodes: 4,
            ..Default::default()
        },
        ..Default::default()
    };
    let normalize = cfg.train.prototype_normalization;
    let run = run_protocol(Protocol::Tota, &sets["tx0"], &tests, &cfg, 4, 1)?;
    let split = &run.splits.domains["tx1"];
    let ev = evaluate_domain(&run.weights, "tx1", split, 4, 1, normalize, 0)?;
    let pca = pca_project(&ev.prototypes, &ev.query_embeddings, &ev.query_labels, 2000, 0)?;
    println!(
        "top two components explain {:.1}% of the variance",
        100.0 * (pca.explained_variance[0] + pca.explained_variance[1]) / pca.total_variance
    );
    let sweep = kshot_sweep(
        &run.weights,
        &split.support,
        &split.query,
        &[1, 2, 4, 8],
        3,
        domain_seed(0, "tx1"),
        1,
        normalize,
    )?;
    render_pca(&pca, &out.join("pca_tx1.png"))?;
    render_confusion(&ev.report, &out.join("confusion_tx1.png"))?;
    render_sweep(&sweep, &out.join("sweep_tx1.png"))?;
    println!(
        "wrote pca_tx1.png, confusion_tx1.png, sweep_tx1.png to {}",
        out.display()
    );
    Ok(())
}
