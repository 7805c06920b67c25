//! Mini-batch training with Adam, evaluation, and input preparation.
//!
//! Model initialization draws from stream 0 of a ChaCha8 generator seeded
//! with `TrainConfig::seed`; epoch shuffles and dropout masks draw from
//! stream 1 of the same seed. A run is fully determined by seed, config and
//! data.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::{DatasetBundle, Sidecars, DEFAULT_CM1_THRESHOLD, DEFAULT_CM2_THRESHOLD};
use crate::fsutil::write_atomic;
use crate::gnn::PoolMode;
use crate::model::{mse, mse_loss, DrugInput, Model, ModelConfig, ModelError, ModelInput, ModelVariant};
use crate::protein::{pool_embedding, pseudo_embedding, tokenize};
use crate::contact::pooled_grid;
use crate::tensor::{Tape, Tensor};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
    #[error("EmptyDataset")]
    EmptyDataset,
    #[error("UnresolvableSample: {sample_id}: {reason}")]
    UnresolvableSample { sample_id: String, reason: String },
    #[error("ShapeMismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Validate every this many epochs (the final epoch is always validated).
    pub eval_every: usize,
    /// Stop after this many validations without improvement.
    pub early_stop_patience: Option<usize>,
    /// Fill the `seconds` history column. Off by default so that histories
    /// of identical runs compare byte-for-byte.
    pub record_timing: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1500,
            batch_size: 128,
            adam: AdamConfig::default(),
            seed: 0,
            eval_every: 1,
            early_stop_patience: None,
            record_timing: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        let a = &self.adam;
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.eval_every == 0 {
            return bad("eval_every must be positive");
        }
        if self.early_stop_patience == Some(0) {
            return bad("early_stop_patience must be positive");
        }
        if !(a.learning_rate > 0.0 && a.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(a.beta1 > 0.0 && a.beta1 < 1.0 && a.beta2 > 0.0 && a.beta2 < 1.0) {
            return bad("adam betas must lie in (0, 1)");
        }
        if !(a.eps > 0.0) {
            return bad("adam_eps must be positive");
        }
        Ok(())
    }
}

/// First and second moment estimates, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &[Tensor]) -> Self {
        let zeros = || params.iter().map(|t| vec![0.0; t.numel()]).collect();
        Self {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update of every tensor in `params`.
pub fn adam_step(params: &mut [Tensor], grads: &[Vec<f64>], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() || params.len() != state.v.len() {
        return Err(TrainError::ShapeMismatch(format!(
            "{} params, {} grads, {} moment buffers",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.numel() != g.len() || p.numel() != state.m[i].len() || p.numel() != state.v[i].len() {
            return Err(TrainError::ShapeMismatch(format!(
                "tensor {i}: {} values, {} gradients",
                p.numel(),
                g.len()
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (i, p) in params.iter_mut().enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (k, theta) in p.data_mut().iter_mut().enumerate() {
            let g = grads[i][k];
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            *theta -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: Option<f64>,
    pub seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingHistory {
    pub records: Vec<EpochRecord>,
    /// Epoch whose parameters were retained, when validating.
    pub best_epoch: Option<usize>,
}

impl TrainingHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_mse,val_mse,seconds\n");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.records {
            let _ = writeln!(out, "{},{},{},{}", r.epoch, r.train_mse, opt(r.val_mse), opt(r.seconds));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> io::Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

/// A sample with every model input resolved and cached.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSample {
    pub id: String,
    pub input: ModelInput,
    pub target: f64,
}

/// Where non-sequence inputs come from.
#[derive(Debug, Clone, PartialEq)]
pub struct InputSources {
    pub sidecars: Option<Sidecars>,
    /// Replace embedding files by deterministic sequence-seeded vectors.
    pub pseudo_embeddings: bool,
    pub embedding_pool: PoolMode,
    pub cm1_threshold: f64,
    pub cm2_threshold: f64,
}

impl Default for InputSources {
    fn default() -> Self {
        Self {
            sidecars: None,
            pseudo_embeddings: false,
            embedding_pool: PoolMode::Mean,
            cm1_threshold: DEFAULT_CM1_THRESHOLD,
            cm2_threshold: DEFAULT_CM2_THRESHOLD,
        }
    }
}

/// Resolves every sample's inputs up front. Drug graphs, tokens,
/// embeddings and contact grids are computed once per distinct key.
pub fn prepare_samples(bundle: &DatasetBundle, config: &ModelConfig, sources: &InputSources) -> Result<Vec<PreparedSample>> {
    let variant = config.variant;
    let mut drugs: HashMap<&str, Arc<DrugInput>> = HashMap::new();
    let mut proteins: HashMap<&str, ModelInput> = HashMap::new();
    let mut pair_maps: HashMap<(&str, &str), Arc<Vec<f64>>> = HashMap::new();
    let mut out = Vec::with_capacity(bundle.len());
    for s in &bundle.samples {
        let sample_id = format!("{}:{}", s.drug_id, s.protein_id);
        let fail = |reason: String| TrainError::UnresolvableSample {
            sample_id: sample_id.clone(),
            reason,
        };
        let drug = match drugs.get(s.smiles.as_str()) {
            Some(d) => Arc::clone(d),
            None => {
                let d = Arc::new(DrugInput::from_smiles(&s.smiles).map_err(|e| fail(format!("drug {}: {e}", s.drug_id)))?);
                drugs.insert(&s.smiles, Arc::clone(&d));
                d
            }
        };
        if !proteins.contains_key(s.protein_id.as_str()) {
            let seq = bundle
                .proteins
                .get(&s.protein_id)
                .ok_or_else(|| fail(format!("MissingProtein: {}", s.protein_id)))?;
            let mut base = ModelInput::new(Arc::clone(&drug));
            if variant.uses_tokens() {
                base = base.with_tokens(tokenize(seq, config.max_len).map_err(|e| fail(e.to_string()))?);
            }
            if variant.uses_embedding() {
                let emb = if sources.pseudo_embeddings {
                    pseudo_embedding(seq, config.plm_dim, false)
                } else {
                    let sidecars = sources
                        .sidecars
                        .as_ref()
                        .ok_or_else(|| fail(format!("no embedding directory configured for protein {}", s.protein_id)))?;
                    sidecars.embedding(&s.protein_id).map_err(|e| fail(e.to_string()))?
                };
                if emb.dim != config.plm_dim {
                    return Err(fail(format!(
                        "embedding for protein {} has dim {}, model expects {}",
                        s.protein_id, emb.dim, config.plm_dim
                    )));
                }
                base = base.with_embedding(pool_embedding(&emb, sources.embedding_pool));
            }
            if variant == ModelVariant::PGraphDtaCm2 {
                let sidecars = sources
                    .sidecars
                    .as_ref()
                    .ok_or_else(|| fail(format!("no contact directory configured for protein {}", s.protein_id)))?;
                let map = sidecars
                    .residue_contacts(&s.protein_id, sources.cm2_threshold)
                    .map_err(|e| fail(e.to_string()))?;
                base = base.with_contact_map(&map, config.contact_grid);
            }
            proteins.insert(&s.protein_id, base);
        }
        let mut input = proteins[s.protein_id.as_str()].clone();
        input.drug = drug;
        if variant == ModelVariant::PGraphDtaCm1 {
            let key = (s.drug_id.as_str(), s.protein_id.as_str());
            let grid = match pair_maps.get(&key) {
                Some(g) => Arc::clone(g),
                None => {
                    let sidecars = sources
                        .sidecars
                        .as_ref()
                        .ok_or_else(|| fail("no distance directory configured".into()))?;
                    let map = sidecars
                        .distance_contacts(&s.drug_id, &s.protein_id, sources.cm1_threshold)
                        .map_err(|e| fail(e.to_string()))?;
                    let g = Arc::new(pooled_grid(&map, config.contact_grid));
                    pair_maps.insert(key, Arc::clone(&g));
                    g
                }
            };
            input.contact = Some(grid);
        }
        out.push(PreparedSample {
            id: sample_id,
            input,
            target: s.affinity,
        });
    }
    Ok(out)
}

const EVAL_CHUNK: usize = 64;

/// Dropout-free MSE over `samples`.
pub fn evaluate(model: &Model, samples: &[PreparedSample]) -> Result<f64> {
    let predictions = predict_all(model, samples)?;
    let targets: Vec<f64> = samples.iter().map(|s| s.target).collect();
    Ok(mse(&predictions, &targets)?)
}

pub fn predict_all(model: &Model, samples: &[PreparedSample]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(EVAL_CHUNK) {
        let inputs: Vec<&ModelInput> = chunk.iter().map(|s| &s.input).collect();
        out.extend(model.predict(&inputs)?);
    }
    Ok(out)
}

fn check_inputs(model: &Model, samples: &[PreparedSample]) -> Result<()> {
    for s in samples {
        model.check_input(&s.input).map_err(|e| TrainError::UnresolvableSample {
            sample_id: s.id.clone(),
            reason: e.to_string(),
        })?;
    }
    Ok(())
}

/// Trains a freshly initialized model. When `val` is given, the parameters
/// with the lowest validation MSE are returned.
pub fn train(
    model_config: ModelConfig,
    train_set: &[PreparedSample],
    val: Option<&[PreparedSample]>,
    config: &TrainConfig,
) -> Result<(Model, TrainingHistory)> {
    config.validate()?;
    if train_set.is_empty() || val.is_some_and(<[_]>::is_empty) {
        return Err(TrainError::EmptyDataset);
    }
    let mut model = Model::new(model_config, config.seed);
    check_inputs(&model, train_set)?;
    if let Some(v) = val {
        check_inputs(&model, v)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut adam = AdamState::new(model.params().tensors());
    let mut history = TrainingHistory::default();
    let mut best: Option<(f64, Vec<Tensor>)> = None;
    let mut stale = 0;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let inputs: Vec<&ModelInput> = batch.iter().map(|&i| &train_set[i].input).collect();
            let targets: Vec<f64> = batch.iter().map(|&i| train_set[i].target).collect();
            let mut tape = Tape::new();
            let bound = model.params().bind(&mut tape);
            let pred = model.forward_batch(&mut tape, &bound, &inputs, Some(&mut rng))?;
            let loss = mse_loss(&mut tape, pred, &targets)?;
            loss_sum += tape.data(loss)[0] * batch.len() as f64;
            tape.backward(loss).map_err(ModelError::from)?;
            let grads: Vec<Vec<f64>> = bound
                .vars()
                .iter()
                .zip(model.params().tensors())
                .map(|(&v, t)| tape.grad(v).map_or_else(|| vec![0.0; t.numel()], <[f64]>::to_vec))
                .collect();
            adam_step(model.params_mut().tensors_mut(), &grads, &mut adam, &config.adam)?;
        }
        let train_mse = loss_sum / train_set.len() as f64;
        if !train_mse.is_finite() {
            return Err(TrainError::InvalidConfig(format!(
                "training diverged at epoch {epoch} (non-finite loss); lower learning_rate"
            )));
        }
        let mut val_mse = None;
        if let Some(v) = val {
            if epoch % config.eval_every == 0 || epoch == config.epochs {
                let m = evaluate(&model, v)?;
                val_mse = Some(m);
                if best.as_ref().is_none_or(|(b, _)| m < *b) {
                    best = Some((m, model.params().tensors().to_vec()));
                    history.best_epoch = Some(epoch);
                    stale = 0;
                } else {
                    stale += 1;
                }
            }
        }
        history.records.push(EpochRecord {
            epoch,
            train_mse,
            val_mse,
            seconds: config.record_timing.then(|| started.elapsed().as_secs_f64()),
        });
        log::debug!("epoch {epoch}: train_mse={train_mse:.6} val_mse={val_mse:?}");
        if config.early_stop_patience.is_some_and(|p| stale >= p) {
            log::info!("early stop at epoch {epoch}");
            break;
        }
    }
    if let Some((_, tensors)) = best {
        for (t, b) in model.params_mut().tensors_mut().iter_mut().zip(tensors) {
            t.data_mut().copy_from_slice(b.data());
        }
    }
    Ok((model, history))
}
