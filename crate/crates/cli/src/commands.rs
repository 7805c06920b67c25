use std::path::{Path, PathBuf};
use std::sync::Arc;

use pgdta_core::contact::{
    binarize_distances, contact_from_coords, contact_from_probabilities, parse_coordinates, parse_matrix, DistanceMatrix,
    DEFAULT_COORD_THRESHOLD, DEFAULT_DISTANCE_THRESHOLD, DEFAULT_PROB_THRESHOLD,
};
use pgdta_core::data::{load_dataset, parse_fasta, split, DatasetBundle, DatasetKind, InteractionSample, Sidecars};
use pgdta_core::fsutil::write_atomic;
use pgdta_core::gnn::PoolMode;
use pgdta_core::model::{Model, ModelConfig};
use pgdta_core::protein::{load_embeddings, pseudo_embedding, write_embeddings};
use pgdta_core::smiles::{parse_smiles, BondOrder, ATOM_FEATURE_DIM};
use pgdta_core::train::{evaluate, predict_all, prepare_samples, train, InputSources, PreparedSample};

use crate::config::{EvalSubset, RawConfig, RunConfig};
use crate::error::CliError;

pub fn load_run_config(path: &Path, overrides: &[String]) -> Result<RunConfig, CliError> {
    let mut raw = RawConfig::load(path)?;
    raw.apply_overrides(overrides)?;
    raw.apply_env_seed(std::env::var("PGDTA_SEED").ok().as_deref())?;
    let cfg = RunConfig::from_raw(&raw)?;
    cfg.check_paths()?;
    Ok(cfg)
}

fn smiles_summary(smiles: &str) -> Result<String, CliError> {
    let g = parse_smiles(smiles).map_err(|e| CliError::Data(e.to_string()))?;
    let aromatic_bonds = g.bonds().iter().filter(|b| b.order == BondOrder::Aromatic).count();
    Ok(format!(
        "atoms={} bonds={} aromatic_atoms={} aromatic_bonds={} features={}x{}",
        g.atom_count(),
        g.bond_count(),
        g.aromatic_atom_count(),
        aromatic_bonds,
        g.atom_count(),
        ATOM_FEATURE_DIM
    ))
}

pub fn parse_smiles_cmd(smiles: Option<&str>, file: Option<&Path>) -> Result<(), CliError> {
    match (smiles, file) {
        (Some(s), None) => println!("{}", smiles_summary(s)?),
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::data(&path.display().to_string(), e))?;
            for (i, line) in text.lines().enumerate() {
                let s = line.split_whitespace().next().unwrap_or("");
                if s.is_empty() {
                    continue;
                }
                let summary = smiles_summary(s).map_err(|e| CliError::Data(format!("line {}: {e}", i + 1)))?;
                println!("{summary}");
            }
        }
        _ => return Err(CliError::Config("give either a SMILES string or --file".into())),
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ContactMode {
    Coords,
    Probs,
    Distances,
}

pub fn contact_map_cmd(input: &Path, mode: ContactMode, threshold: Option<f64>, output: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(input).map_err(|e| CliError::data(&input.display().to_string(), e))?;
    let map = match mode {
        ContactMode::Coords => {
            let id = input.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
            let coords = parse_coordinates(&id, &text)?;
            if coords.points.is_empty() {
                return Err(CliError::Data("contact: no residue with a CB or CA atom".into()));
            }
            contact_from_coords(&coords, threshold.unwrap_or(DEFAULT_COORD_THRESHOLD))
        }
        ContactMode::Probs => contact_from_probabilities(&parse_matrix(&text)?, threshold.unwrap_or(DEFAULT_PROB_THRESHOLD))?,
        ContactMode::Distances => {
            let d = DistanceMatrix::new(parse_matrix(&text)?)?;
            binarize_distances(&d, threshold.unwrap_or(DEFAULT_DISTANCE_THRESHOLD))
        }
    };
    write_atomic(output, map.to_text().as_bytes()).map_err(|e| CliError::data(&output.display().to_string(), e))?;
    println!("L={} density={:.6}", map.size(), map.density());
    Ok(())
}

pub fn inspect_embeddings_cmd(path: &Path) -> Result<(), CliError> {
    let records = load_embeddings(path).map_err(|e| CliError::data(&path.display().to_string(), e))?;
    let dim = records.values().next().map_or(0, |m| m.dim);
    let rows_min = records.values().map(|m| m.rows).min().unwrap_or(0);
    let rows_max = records.values().map(|m| m.rows).max().unwrap_or(0);
    println!("records={} dim={dim} rows_min={rows_min} rows_max={rows_max}", records.len());
    Ok(())
}

pub fn pseudo_embed_cmd(sequences: &Path, out_dir: &Path, dim: usize, per_residue: bool) -> Result<(), CliError> {
    if dim == 0 {
        return Err(CliError::Config("--dim must be positive".into()));
    }
    if !out_dir.is_dir() {
        return Err(CliError::Config(format!("{} is not a directory", out_dir.display())));
    }
    let text = std::fs::read_to_string(sequences).map_err(|e| CliError::data(&sequences.display().to_string(), e))?;
    let proteins = parse_fasta(&text)?;
    for (id, seq) in &proteins {
        let path = out_dir.join(format!("{id}.plm"));
        write_embeddings(&path, &[pseudo_embedding(seq, dim, per_residue)])
            .map_err(|e| CliError::data(&path.display().to_string(), e))?;
    }
    println!("written={} dim={dim}", proteins.len());
    Ok(())
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn sources(cfg: &RunConfig) -> InputSources {
    InputSources {
        sidecars: Some(Sidecars::new(
            cfg.data
                .sidecar_dir
                .clone()
                .unwrap_or_else(|| parent_dir(&cfg.data.sequences)),
        )),
        pseudo_embeddings: cfg.data.pseudo_embeddings,
        embedding_pool: cfg.data.embedding_pool,
        cm1_threshold: cfg.data.cm1_threshold,
        cm2_threshold: cfg.data.cm2_threshold,
    }
}

/// Reads the embedding width from the first protein's sidecar file.
fn infer_plm_dim(bundle: &DatasetBundle, sources: &InputSources) -> Result<usize, CliError> {
    let first = &bundle.samples[0].protein_id;
    let sidecars = sources.sidecars.as_ref().expect("sidecars are always configured");
    let m = sidecars
        .embedding(first)
        .map_err(|e| CliError::Data(format!("protein {first}: {e}")))?;
    Ok(m.dim)
}

fn prepare(bundle: &DatasetBundle, model: &ModelConfig, sources: &InputSources) -> Result<Vec<PreparedSample>, CliError> {
    log::info!("resolving inputs for {} samples", bundle.len());
    Ok(prepare_samples(bundle, model, sources)?)
}

fn split_for(cfg: &RunConfig, bundle: &DatasetBundle) -> Result<Option<(DatasetBundle, DatasetBundle)>, CliError> {
    cfg.data
        .train_fraction
        .map(|f| split(bundle, f, cfg.data.split_seed.unwrap_or(cfg.train.seed)))
        .transpose()
        .map_err(Into::into)
}

pub fn train_cmd(config: &Path, overrides: &[String]) -> Result<(), CliError> {
    let mut cfg = load_run_config(config, overrides)?;
    if !cfg.variant_set {
        return Err(CliError::Config("missing required key model.variant".into()));
    }
    let checkpoint = cfg
        .checkpoint
        .clone()
        .ok_or_else(|| CliError::Config("missing required key output.checkpoint".into()))?;
    let history_path = cfg
        .history
        .clone()
        .ok_or_else(|| CliError::Config("missing required key output.history".into()))?;
    let bundle = load_dataset(&cfg.data.interactions, &cfg.data.sequences, cfg.data.kind)?;
    let sources = sources(&cfg);
    if cfg.model.variant.uses_embedding() && !cfg.data.pseudo_embeddings && !cfg.plm_dim_set {
        cfg.model.plm_dim = infer_plm_dim(&bundle, &sources)?;
    }
    let (train_bundle, val_bundle) = match split_for(&cfg, &bundle)? {
        Some((tr, te)) => (tr, Some(te)),
        None => (bundle, None),
    };
    let train_set = prepare(&train_bundle, &cfg.model, &sources)?;
    let val_set = val_bundle.map(|b| prepare(&b, &cfg.model, &sources)).transpose()?;
    log::info!(
        "training {} on {} samples for {} epochs",
        cfg.model.variant,
        train_set.len(),
        cfg.train.epochs
    );
    let (model, history) = train(cfg.model.clone(), &train_set, val_set.as_deref(), &cfg.train)?;
    model.save(&checkpoint)?;
    history
        .write_csv(&history_path)
        .map_err(|e| CliError::data(&history_path.display().to_string(), e))?;
    let train_mse = evaluate(&model, &train_set)?;
    let val = match &val_set {
        Some(v) => format!("{:.6}", evaluate(&model, v)?),
        None => "NA".into(),
    };
    println!("train_mse={train_mse:.6} val_mse={val} epochs={}", history.records.len());
    Ok(())
}

fn model_compatible(cfg: &RunConfig, model: &Model) -> Result<(), CliError> {
    if cfg.variant_set && cfg.model.variant != model.variant() {
        return Err(CliError::Data(format!(
            "checkpoint holds a {} model but the config names {}",
            model.variant(),
            cfg.model.variant
        )));
    }
    Ok(())
}

pub fn eval_cmd(checkpoint: &Path, config: &Path, overrides: &[String]) -> Result<(), CliError> {
    let cfg = load_run_config(config, overrides)?;
    let model = Model::load(checkpoint).map_err(|e| CliError::data("checkpoint", e))?;
    model_compatible(&cfg, &model)?;
    let bundle = load_dataset(&cfg.data.interactions, &cfg.data.sequences, cfg.data.kind)?;
    let bundle = match (cfg.data.eval_subset, split_for(&cfg, &bundle)?) {
        (EvalSubset::Train, Some((tr, _))) => tr,
        (EvalSubset::Test, Some((_, te))) => te,
        _ => bundle,
    };
    let samples = prepare(&bundle, model.config(), &sources(&cfg))?;
    let mse = evaluate(&model, &samples)?;
    println!("mse={mse:.6}");
    Ok(())
}

pub struct PredictArgs<'a> {
    pub checkpoint: &'a Path,
    pub smiles: &'a str,
    pub protein_id: &'a str,
    pub drug_id: &'a str,
    pub sequences: &'a Path,
    pub sidecar_dir: Option<&'a Path>,
    pub pseudo_embeddings: bool,
    pub embedding_pool: PoolMode,
}

pub fn predict_cmd(args: &PredictArgs<'_>) -> Result<(), CliError> {
    let model = Model::load(args.checkpoint).map_err(|e| CliError::data("checkpoint", e))?;
    let text = std::fs::read_to_string(args.sequences).map_err(|e| CliError::data("sequences", e))?;
    let proteins = parse_fasta(&text).map_err(|e| CliError::data("sequences", e))?;
    let sample = InteractionSample {
        drug_id: args.drug_id.to_string(),
        smiles: args.smiles.to_string(),
        protein_id: args.protein_id.to_string(),
        affinity: 0.0,
        kind: DatasetKind::Generic,
    };
    let bundle = DatasetBundle::new(vec![sample], Arc::new(proteins)).map_err(|e| match e {
        pgdta_core::data::DataError::MissingProtein { protein_id, .. } => {
            CliError::Data(format!("sequences: MissingProtein: '{protein_id}'"))
        }
        other => CliError::data("sequences", other),
    })?;
    let sidecar_dir = args
        .sidecar_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| parent_dir(args.sequences));
    let sources = InputSources {
        sidecars: Some(Sidecars::new(sidecar_dir)),
        pseudo_embeddings: args.pseudo_embeddings,
        embedding_pool: args.embedding_pool,
        ..InputSources::default()
    };
    let samples = prepare_samples(&bundle, model.config(), &sources).map_err(|e| CliError::data("inputs", e))?;
    let prediction = predict_all(&model, &samples).map_err(|e| CliError::data("model", e))?[0];
    println!("{prediction}");
    Ok(())
}
