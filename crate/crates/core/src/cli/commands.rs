use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{RunConfig, RESOLVED_CONFIG_FILE};
use super::render;
use crate::ablation::{run_ablation, AblationTable};
use crate::data::{synth_dataset, write_deepbeam_hdf5, DatasetHandle, Protocol, NUM_BEAMS};
use crate::encoder::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::error::{Error, Result};
use crate::eval::{
    confusion_neighbor_mass, domain_seed, evaluate_domain, kshot_sweep, parallel_map, pca_project, protocol_splits,
    EvalReport, ProtocolSplits, SweepRow,
};
use crate::output::{csv_comment, read_csv, write_atomic, write_csv, write_csv_records};
use crate::protonet::{checkpoint_train_config, EpisodeRecord, Trainer, TrainingLog};

pub const CHECKPOINT_FILE: &str = "checkpoint.safetensors";
pub const TRAINING_LOG_FILE: &str = "training_log.csv";
pub const VALIDATION_FILE: &str = "validation.csv";
pub const EVAL_SUMMARY_FILE: &str = "eval_summary.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const ABLATION_FILE: &str = "ablation.csv";

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes the resolved configuration into the output directory.
pub fn write_resolved_config(cfg: &RunConfig) -> Result<PathBuf> {
    create_dir(&cfg.out_dir)?;
    let path = cfg.out_dir.join(RESOLVED_CONFIG_FILE);
    let text = cfg.to_toml();
    write_atomic(&path, |w| {
        writeln!(w, "{}", csv_comment(cfg.seed))?;
        w.write_all(text.as_bytes())
    })?;
    Ok(path)
}

fn domains_for(cfg: &RunConfig, protocol: Protocol) -> Result<(DatasetHandle, Vec<(String, DatasetHandle)>)> {
    let mut all = cfg.load_domains()?;
    let train = all
        .get(&cfg.data.train_domain)
        .cloned()
        .ok_or_else(|| Error::Config(format!("unknown train domain '{}'", cfg.data.train_domain)))?;
    let tests = cfg
        .eval_domain_names(protocol)
        .into_iter()
        .map(|n| {
            let d = all
                .remove(&n)
                .ok_or_else(|| Error::Config(format!("unknown test domain '{n}'")))?;
            Ok((n, d))
        })
        .collect::<Result<_>>()?;
    Ok((train, tests))
}

/// Train / validation / per-domain pools exactly as `train` and `eval`
/// derive them from a configuration.
pub fn splits_for(cfg: &RunConfig, protocol: Protocol) -> Result<ProtocolSplits> {
    let (train, tests) = domains_for(cfg, protocol)?;
    protocol_splits(protocol, &train, &tests, &cfg.split, cfg.seed)
}

/// Per-domain HDF5 file summary of `synth-data`.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthFile {
    pub domain: String,
    pub path: PathBuf,
    pub blocks: usize,
    pub beams: usize,
}

/// Generates the configured synthetic domains and writes one HDF5 file per
/// domain into the output directory.
pub fn cmd_synth_data(cfg: &RunConfig) -> Result<Vec<SynthFile>> {
    write_resolved_config(cfg)?;
    let sets = synth_dataset(&cfg.data.domains, cfg.data.blocks_per_beam, cfg.data.snr_db, cfg.seed)?;
    let mut out = Vec::new();
    for (name, handle) in sets {
        let path = cfg.out_dir.join(format!("{name}.h5"));
        write_deepbeam_hdf5(&path, &handle, &cfg.data.layout)?;
        println!(
            "{name}: {} blocks, {} beams -> {}",
            handle.len(),
            handle.beams().len(),
            path.display()
        );
        out.push(SynthFile {
            domain: name,
            path,
            blocks: handle.len(),
            beams: handle.beams().len(),
        });
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub log: TrainingLog,
    /// Episode counter at the start of this invocation (0 unless resumed).
    pub start_episode: usize,
}

/// Trains on the training domain (or resumes from `resume`), then writes
/// the checkpoint, the per-episode log and the validation curve. A resumed
/// run appends to the existing log.
pub fn cmd_train(cfg: &RunConfig, resume: Option<&Path>) -> Result<TrainOutcome> {
    write_resolved_config(cfg)?;
    let splits = splits_for(cfg, Protocol::Ttsa)?;
    let mut trainer = match resume {
        Some(path) => Trainer::from_checkpoint(&load_checkpoint(path)?, Some(&cfg.train))?,
        None => Trainer::new(&cfg.encoder, &cfg.train, &splits.train)?,
    };
    let start_episode = trainer.episode();
    trainer.run(&splits.train, &splits.val)?;

    let checkpoint = cfg.out_dir.join(CHECKPOINT_FILE);
    save_checkpoint(&checkpoint, &trainer.to_checkpoint())?;
    let log_path = cfg.out_dir.join(TRAINING_LOG_FILE);
    let mut rows: Vec<EpisodeRecord> = if start_episode > 0 && log_path.exists() {
        read_csv::<EpisodeRecord>(&log_path)?
            .into_iter()
            .filter(|r| r.episode < start_episode)
            .collect()
    } else {
        Vec::new()
    };
    rows.extend(trainer.log().records.iter().cloned());
    write_csv(&log_path, cfg.seed, &rows)?;
    write_csv(&cfg.out_dir.join(VALIDATION_FILE), cfg.seed, &trainer.log().validation)?;

    let log = trainer.log().clone();
    println!(
        "trained episodes {}..{}; best validation accuracy {} at episode {}{}",
        start_episode,
        trainer.episode(),
        log.best_accuracy.map_or("n/a".into(), |a| format!("{a:.4}")),
        log.best_episode,
        if log.stopped_early { " (stopped early)" } else { "" }
    );
    Ok(TrainOutcome {
        checkpoint,
        log,
        start_episode,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummaryRow {
    pub domain: String,
    pub protocol: Protocol,
    pub k_shot: usize,
    pub tolerance: usize,
    pub n_queries: usize,
    pub exact_accuracy: f64,
    pub tolerance_accuracy: f64,
    pub neighbor_mass: f64,
}

impl From<&EvalReport> for EvalSummaryRow {
    fn from(r: &EvalReport) -> Self {
        EvalSummaryRow {
            domain: r.domain.clone(),
            protocol: r.protocol,
            k_shot: r.k_shot,
            tolerance: r.tolerance,
            n_queries: r.n_queries,
            exact_accuracy: r.exact_accuracy,
            tolerance_accuracy: r.tolerance_accuracy,
            neighbor_mass: confusion_neighbor_mass(r),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaRow {
    pub point: usize,
    pub x: f64,
    pub y: f64,
    pub label: u8,
    pub kind: String,
}

#[derive(Clone, Copy, Debug)]
pub struct EvalOptions {
    pub protocol: Protocol,
    pub k: usize,
    pub tolerance: usize,
    pub render: bool,
}

fn normalize_flag(cfg: &RunConfig, ck: &Checkpoint) -> Result<bool> {
    Ok(checkpoint_train_config(ck)?.map_or(cfg.train.prototype_normalization, |c| c.prototype_normalization))
}

/// Builds k-shot prototypes on every evaluation domain from the checkpoint's
/// encoder and scores the domain's query pool. Writes a summary CSV plus
/// per-domain confusion, per-class and PCA CSVs.
pub fn cmd_eval(cfg: &RunConfig, checkpoint: &Path, opts: EvalOptions) -> Result<BTreeMap<String, EvalReport>> {
    write_resolved_config(cfg)?;
    let ck: Checkpoint = load_checkpoint(checkpoint)?;
    let normalize = normalize_flag(cfg, &ck)?;
    let splits = splits_for(cfg, opts.protocol)?;
    let jobs: Vec<_> = splits.domains.iter().collect();
    let evals = parallel_map(&jobs, |&(name, ds)| {
        evaluate_domain(&ck.weights, name, ds, opts.k, opts.tolerance, normalize, cfg.seed)
    })?;

    let out = &cfg.out_dir;
    let mut reports = BTreeMap::new();
    for ev in evals {
        let rep = &ev.report;
        let d = rep.domain.clone();
        let header: Vec<String> = std::iter::once("true_beam".to_string())
            .chain((0..NUM_BEAMS).map(|b| format!("pred_{b}")))
            .collect();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows: Vec<Vec<String>> = rep
            .confusion
            .iter()
            .enumerate()
            .map(|(i, r)| {
                std::iter::once(i.to_string())
                    .chain(r.iter().map(u64::to_string))
                    .collect()
            })
            .collect();
        write_csv_records(&out.join(format!("confusion_{d}.csv")), cfg.seed, &header, &rows)?;
        let counts = rep.class_counts();
        let rows: Vec<Vec<String>> = (0..NUM_BEAMS)
            .map(|b| {
                vec![
                    b.to_string(),
                    counts[b].to_string(),
                    rep.per_class_accuracy[b].to_string(),
                ]
            })
            .collect();
        write_csv_records(
            &out.join(format!("per_class_{d}.csv")),
            cfg.seed,
            &["beam", "n_queries", "accuracy"],
            &rows,
        )?;

        let pca = pca_project(
            &ev.prototypes,
            &ev.query_embeddings,
            &ev.query_labels,
            cfg.eval.pca_max_queries,
            domain_seed(cfg.seed, &d),
        )?;
        let pca_rows: Vec<PcaRow> = pca
            .projected_prototypes
            .iter()
            .map(|&(b, p)| (p, b, "prototype"))
            .chain(pca.projected_queries.iter().map(|&(p, b)| (p, b, "query")))
            .enumerate()
            .map(|(i, (p, label, kind))| PcaRow {
                point: i,
                x: p[0],
                y: p[1],
                label,
                kind: kind.into(),
            })
            .collect();
        write_csv(&out.join(format!("pca_{d}.csv")), cfg.seed, &pca_rows)?;
        if opts.render {
            render::render_confusion(rep, &out.join(format!("confusion_{d}.png")))?;
            render::render_pca(&pca, &out.join(format!("pca_{d}.png")))?;
        }
        println!(
            "{d} ({}, k={}): exact {:.4}, tolerance-{} {:.4}, {} queries",
            rep.protocol, rep.k_shot, rep.exact_accuracy, rep.tolerance, rep.tolerance_accuracy, rep.n_queries
        );
        reports.insert(d, ev.report);
    }
    let summary: Vec<EvalSummaryRow> = reports.values().map(EvalSummaryRow::from).collect();
    write_csv(&out.join(EVAL_SUMMARY_FILE), cfg.seed, &summary)?;
    Ok(reports)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCsvRow {
    pub domain: String,
    pub protocol: Protocol,
    pub k: usize,
    pub repeats: usize,
    pub tolerance: usize,
    pub mean_exact: f64,
    pub std_exact: f64,
    pub mean_tolerance: f64,
    pub std_tolerance: f64,
}

/// k-shot sweep over `eval.ks` with `eval.repeats` prototype resamplings,
/// reporting exact and tolerance accuracy per domain.
pub fn cmd_sweep(
    cfg: &RunConfig,
    checkpoint: &Path,
    protocol: Protocol,
    tolerance: usize,
    render: bool,
) -> Result<BTreeMap<String, Vec<SweepRow>>> {
    write_resolved_config(cfg)?;
    let ck: Checkpoint = load_checkpoint(checkpoint)?;
    let normalize = normalize_flag(cfg, &ck)?;
    let splits = splits_for(cfg, protocol)?;
    let jobs: Vec<_> = splits.domains.iter().collect();
    let results = parallel_map(&jobs, |&(name, ds)| {
        let rows = kshot_sweep(
            &ck.weights,
            &ds.support,
            &ds.query,
            &cfg.eval.ks,
            cfg.eval.repeats,
            domain_seed(cfg.seed, name),
            tolerance,
            normalize,
        )?;
        Ok((name.clone(), ds.protocol, rows))
    })?;
    let mut csv_rows = Vec::new();
    let mut out = BTreeMap::new();
    for (name, p, rows) in results {
        for r in &rows {
            println!(
                "{name} ({p}) k={}: exact {:.4} ± {:.4}, tolerance-{} {:.4} ± {:.4}",
                r.k, r.mean_exact, r.std_exact, r.tolerance, r.mean_tolerance, r.std_tolerance
            );
            csv_rows.push(SweepCsvRow {
                domain: name.clone(),
                protocol: p,
                k: r.k,
                repeats: r.repeats,
                tolerance: r.tolerance,
                mean_exact: r.mean_exact,
                std_exact: r.std_exact,
                mean_tolerance: r.mean_tolerance,
                std_tolerance: r.std_tolerance,
            });
        }
        if render {
            render::render_sweep(&rows, &cfg.out_dir.join(format!("sweep_{name}.png")))?;
        }
        out.insert(name, rows);
    }
    write_csv(&cfg.out_dir.join(SWEEP_FILE), cfg.seed, &csv_rows)?;
    Ok(out)
}

/// Runs the four-row preprocessing study and writes one CSV row per
/// configuration.
pub fn cmd_ablation(cfg: &RunConfig) -> Result<AblationTable> {
    write_resolved_config(cfg)?;
    let (train, tests) = domains_for(cfg, Protocol::Tota)?;
    let table = run_ablation(&cfg.ablation_plan(), &train, &tests, cfg.seed)?;
    let header = table.header();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let records = table.records();
    for r in &records {
        println!("{}", r.join(", "));
    }
    write_csv_records(&cfg.out_dir.join(ABLATION_FILE), cfg.seed, &header, &records)?;
    Ok(table)
}
