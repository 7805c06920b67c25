//! The four architecture variants, the regression head, the loss and the
//! checkpoint format.
//!
//! Every variant encodes the drug with [`DrugEncoder`]. The protein branch is
//! either the token CNN ([`ModelVariant::BaselineCnn`]) or a projection of a
//! pooled language-model embedding. The two contact-map variants add a third
//! 128-wide stream from [`ContactEncoder`]. The concatenated row goes through
//! two ReLU + dropout hidden layers and a single-output dense layer.

use std::fmt;
use std::io;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::contact::{pooled_grid, ContactEncoder, ContactError, ContactMap, DEFAULT_GRID};
use crate::fsutil::write_atomic;
use crate::gnn::{DrugEncoder, DrugEncoderConfig, DrugLayerKind, GnnError};
use crate::params::{Bound, Dense, ParamStore};
use crate::protein::{CnnConfig, EmbeddingProjection, ProteinCnn, ProteinError, TokenizedSequence, DEFAULT_MAX_LEN};
use crate::smiles::{featurize_atoms, parse_smiles, MolecularGraph, SmilesError, ATOM_FEATURE_DIM};
use crate::tensor::{Tape, TensorError, Var};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"PGDTA1\0\0";

/// Published full-scale test MSE of the CNN baseline (DAVIS, KIBA). Kept for
/// reference only; desk-scale runs do not approach these settings.
pub const REFERENCE_BASELINE_MSE: (f64, f64) = (0.271, 0.205);

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("MissingInput: variant {variant} needs {input}")]
    MissingInput { variant: ModelVariant, input: &'static str },
    #[error("LengthMismatch: {predictions} predictions, {targets} targets")]
    LengthMismatch { predictions: usize, targets: usize },
    #[error("EmptyBatch")]
    EmptyBatch,
    #[error("BadMagic: not a checkpoint file")]
    BadMagic,
    #[error("TruncatedCheckpoint: {0}")]
    TruncatedCheckpoint(String),
    #[error("UnknownVariant: tag {0}")]
    UnknownVariant(u8),
    #[error("CheckpointMismatch: {0}")]
    CheckpointMismatch(String),
    #[error(transparent)]
    Smiles(#[from] SmilesError),
    #[error(transparent)]
    Gnn(#[from] GnnError),
    #[error(transparent)]
    Protein(#[from] ProteinError),
    #[error(transparent)]
    Contact(#[from] ContactError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelVariant {
    BaselineCnn,
    PGraphDta,
    /// Binarized intermolecular distance maps.
    PGraphDtaCm1,
    /// Residue contact maps.
    PGraphDtaCm2,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 4] = [
        ModelVariant::BaselineCnn,
        ModelVariant::PGraphDta,
        ModelVariant::PGraphDtaCm1,
        ModelVariant::PGraphDtaCm2,
    ];

    pub fn tag(self) -> u8 {
        match self {
            ModelVariant::BaselineCnn => 0,
            ModelVariant::PGraphDta => 1,
            ModelVariant::PGraphDtaCm1 => 2,
            ModelVariant::PGraphDtaCm2 => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        Self::ALL.get(usize::from(tag)).copied().ok_or(ModelError::UnknownVariant(tag))
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::BaselineCnn => "baseline_cnn",
            ModelVariant::PGraphDta => "pgraphdta",
            ModelVariant::PGraphDtaCm1 => "pgraphdta_cm1",
            ModelVariant::PGraphDtaCm2 => "pgraphdta_cm2",
        }
    }

    pub fn uses_tokens(self) -> bool {
        self == ModelVariant::BaselineCnn
    }

    pub fn uses_embedding(self) -> bool {
        !self.uses_tokens()
    }

    pub fn uses_contact(self) -> bool {
        matches!(self, ModelVariant::PGraphDtaCm1 | ModelVariant::PGraphDtaCm2)
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelVariant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let key = s.to_ascii_lowercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|v| v.name() == key)
            .ok_or_else(|| format!("unknown variant '{s}' (expected one of baseline_cnn, pgraphdta, pgraphdta_cm1, pgraphdta_cm2)"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub variant: ModelVariant,
    pub drug: DrugEncoderConfig,
    pub cnn: CnnConfig,
    pub max_len: usize,
    pub plm_dim: usize,
    /// Width of the projected embedding (the CNN width is `cnn.out_dim`).
    pub protein_dim: usize,
    pub contact_grid: usize,
    pub contact_dim: usize,
    pub hidden: Vec<usize>,
    pub dropout: f64,
}

impl ModelConfig {
    pub fn new(variant: ModelVariant) -> Self {
        Self {
            variant,
            drug: DrugEncoderConfig::default(),
            cnn: CnnConfig::default(),
            max_len: DEFAULT_MAX_LEN,
            plm_dim: 1024,
            protein_dim: 128,
            contact_grid: DEFAULT_GRID,
            contact_dim: 128,
            hidden: vec![1024, 512],
            dropout: 0.2,
        }
    }

    /// Width of the concatenated representation fed to the head.
    pub fn fused_dim(&self) -> usize {
        let protein = if self.variant.uses_tokens() {
            self.cnn.out_dim
        } else {
            self.protein_dim
        };
        let contact = if self.variant.uses_contact() { self.contact_dim } else { 0 };
        self.drug.out_dim + protein + contact
    }

    /// The `u32` words stored in a checkpoint's config block.
    pub fn to_words(&self) -> Vec<u32> {
        let mut w = Vec::new();
        let push = |w: &mut Vec<u32>, v: usize| w.push(v as u32);
        push(&mut w, matches!(self.drug.kind, DrugLayerKind::Gcn) as usize);
        push(&mut w, self.drug.in_dim);
        push(&mut w, self.drug.layers.len());
        for &(h, d) in &self.drug.layers {
            push(&mut w, h);
            push(&mut w, d);
        }
        push(&mut w, self.drug.out_dim);
        push(&mut w, self.cnn.embed_dim);
        push(&mut w, self.cnn.filters.len());
        for &f in &self.cnn.filters {
            push(&mut w, f);
        }
        push(&mut w, self.cnn.kernel);
        push(&mut w, self.cnn.out_dim);
        push(&mut w, self.max_len);
        push(&mut w, self.plm_dim);
        push(&mut w, self.protein_dim);
        push(&mut w, self.contact_grid);
        push(&mut w, self.contact_dim);
        push(&mut w, self.hidden.len());
        for &h in &self.hidden {
            push(&mut w, h);
        }
        w.push((self.dropout * 1e6).round() as u32);
        w
    }

    pub fn from_words(variant: ModelVariant, words: &[u32]) -> Result<Self> {
        let mut it = words.iter().map(|&v| v as usize);
        let mut next = || {
            it.next()
                .ok_or_else(|| ModelError::TruncatedCheckpoint("config block ended early".into()))
        };
        let kind = if next()? == 1 { DrugLayerKind::Gcn } else { DrugLayerKind::Gat };
        let in_dim = next()?;
        let n = next()?;
        let mut layers = Vec::with_capacity(n.min(64));
        for _ in 0..n {
            layers.push((next()?, next()?));
        }
        let drug = DrugEncoderConfig {
            kind,
            in_dim,
            layers,
            out_dim: next()?,
        };
        let embed_dim = next()?;
        let n = next()?;
        let mut filters = Vec::with_capacity(n.min(64));
        for _ in 0..n {
            filters.push(next()?);
        }
        let cnn = CnnConfig {
            embed_dim,
            filters,
            kernel: next()?,
            out_dim: next()?,
        };
        let max_len = next()?;
        let plm_dim = next()?;
        let protein_dim = next()?;
        let contact_grid = next()?;
        let contact_dim = next()?;
        let n = next()?;
        let mut hidden = Vec::with_capacity(n.min(64));
        for _ in 0..n {
            hidden.push(next()?);
        }
        let dropout = next()? as f64 / 1e6;
        Ok(Self {
            variant,
            drug,
            cnn,
            max_len,
            plm_dim,
            protein_dim,
            contact_grid,
            contact_dim,
            hidden,
            dropout,
        })
    }
}

/// Node features and adjacency of one molecule.
#[derive(Debug, Clone, PartialEq)]
pub struct DrugInput {
    pub n_atoms: usize,
    pub features: Vec<f64>,
    pub adjacency: Vec<bool>,
}

impl DrugInput {
    pub fn from_graph(graph: &MolecularGraph) -> Self {
        Self {
            n_atoms: graph.atom_count(),
            features: featurize_atoms(graph),
            adjacency: graph.adjacency().to_vec(),
        }
    }

    pub fn from_smiles(smiles: &str) -> std::result::Result<Self, SmilesError> {
        Ok(Self::from_graph(&parse_smiles(smiles)?))
    }
}

/// Everything one forward pass may consume. Which optional fields must be
/// present depends on the variant. Parts are shared so that samples with the
/// same drug or protein reuse one cached copy.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub drug: Arc<DrugInput>,
    pub tokens: Option<Arc<TokenizedSequence>>,
    /// Pooled language-model embedding (`plm_dim` values).
    pub embedding: Option<Arc<Vec<f64>>>,
    /// Pooled contact grid (`grid²` values, see [`pooled_grid`]).
    pub contact: Option<Arc<Vec<f64>>>,
}

impl ModelInput {
    pub fn new(drug: impl Into<Arc<DrugInput>>) -> Self {
        Self {
            drug: drug.into(),
            tokens: None,
            embedding: None,
            contact: None,
        }
    }

    pub fn with_tokens(mut self, tokens: impl Into<Arc<TokenizedSequence>>) -> Self {
        self.tokens = Some(tokens.into());
        self
    }

    pub fn with_embedding(mut self, pooled: impl Into<Arc<Vec<f64>>>) -> Self {
        self.embedding = Some(pooled.into());
        self
    }

    pub fn with_contact_map(mut self, map: &ContactMap, grid: usize) -> Self {
        self.contact = Some(Arc::new(pooled_grid(map, grid)));
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
enum ProteinBranch {
    Cnn(ProteinCnn),
    Plm(EmbeddingProjection),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    store: ParamStore,
    drug: DrugEncoder,
    protein: ProteinBranch,
    contact: Option<ContactEncoder>,
    hidden: Vec<Dense>,
    output: Dense,
}

impl Model {
    /// Builds the variant's parameters, drawn from a stream seeded by `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::with_rng(config, &mut rng)
    }

    pub fn with_rng(config: ModelConfig, rng: &mut dyn RngCore) -> Self {
        let mut store = ParamStore::new();
        let drug = DrugEncoder::new(&mut store, &config.drug, rng);
        let protein = if config.variant.uses_tokens() {
            ProteinBranch::Cnn(ProteinCnn::new(&mut store, &config.cnn, rng))
        } else {
            ProteinBranch::Plm(EmbeddingProjection::new(&mut store, config.plm_dim, config.protein_dim, rng))
        };
        let contact = config
            .variant
            .uses_contact()
            .then(|| ContactEncoder::new(&mut store, config.contact_grid, config.contact_dim, rng));
        let mut d_in = config.fused_dim();
        let hidden = config
            .hidden
            .iter()
            .enumerate()
            .map(|(i, &width)| {
                let layer = Dense::new(&mut store, &format!("head.hidden{i}"), d_in, width, rng);
                d_in = width;
                layer
            })
            .collect();
        let output = Dense::new(&mut store, "head.output", d_in, 1, rng);
        Self {
            config,
            store,
            drug,
            protein,
            contact,
            hidden,
            output,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> ModelVariant {
        self.config.variant
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Checks that `input` carries what this variant consumes.
    pub fn check_input(&self, input: &ModelInput) -> Result<()> {
        let variant = self.variant();
        let missing = |input: &'static str| Err(ModelError::MissingInput { variant, input });
        if variant.uses_tokens() && input.tokens.is_none() {
            return missing("token ids");
        }
        if variant.uses_embedding() && input.embedding.is_none() {
            return missing("protein embedding");
        }
        if variant.uses_contact() && input.contact.is_none() {
            return missing("contact map");
        }
        Ok(())
    }

    fn encode(&self, tape: &mut Tape, bound: &Bound, input: &ModelInput) -> Result<Var> {
        self.check_input(input)?;
        let d = &input.drug;
        let x = tape.constant(&[d.n_atoms, self.config.drug.in_dim], d.features.clone())?;
        let mut parts = vec![self.drug.forward(tape, bound, x, &d.adjacency)?];
        parts.push(match &self.protein {
            ProteinBranch::Cnn(cnn) => cnn.forward(tape, bound, input.tokens.as_ref().expect("checked"))?,
            ProteinBranch::Plm(proj) => {
                let e = input.embedding.as_ref().expect("checked");
                let e = tape.constant(&[1, e.len()], e.to_vec())?;
                proj.forward(tape, bound, e)?
            }
        });
        if let Some(enc) = &self.contact {
            let g = input.contact.as_ref().expect("checked");
            let g = tape.constant(&[1, g.len()], g.to_vec())?;
            parts.push(enc.forward(tape, bound, g)?);
        }
        Ok(tape.concat_cols(&parts)?)
    }

    /// Forward pass over a batch, giving a `B × 1` prediction column.
    /// Dropout is applied only when `dropout_rng` is given.
    pub fn forward_batch(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        inputs: &[&ModelInput],
        mut dropout_rng: Option<&mut dyn RngCore>,
    ) -> Result<Var> {
        if inputs.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let rows = inputs
            .iter()
            .map(|input| self.encode(tape, bound, input))
            .collect::<Result<Vec<_>>>()?;
        let mut h = tape.concat_rows(&rows)?;
        for layer in &self.hidden {
            let y = layer.forward(tape, bound, h)?;
            h = tape.relu(y);
            if let Some(rng) = dropout_rng.as_deref_mut() {
                h = tape.dropout(h, self.config.dropout, rng);
            }
        }
        Ok(self.output.forward(tape, bound, h)?)
    }

    /// Dropout-free predictions.
    pub fn predict(&self, inputs: &[&ModelInput]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let bound = self.store.bind(&mut tape);
        let out = self.forward_batch(&mut tape, &bound, inputs, None)?;
        Ok(tape.data(out).to_vec())
    }

    pub fn predict_one(&self, input: &ModelInput) -> Result<f64> {
        Ok(self.predict(&[input])?[0])
    }

    pub fn encode_checkpoint(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.push(self.variant().tag());
        let words = self.config.to_words();
        out.extend_from_slice(&(words.len() as u32).to_le_bytes());
        for w in words {
            out.extend_from_slice(&w.to_le_bytes());
        }
        let tensors = self.store.tensors();
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for t in tensors {
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode_checkpoint(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if bytes.len() < CHECKPOINT_MAGIC.len() {
            return Err(if CHECKPOINT_MAGIC.starts_with(bytes) {
                ModelError::TruncatedCheckpoint("missing header".into())
            } else {
                ModelError::BadMagic
            });
        }
        if r.take(8, "magic")? != CHECKPOINT_MAGIC {
            return Err(ModelError::BadMagic);
        }
        let variant = ModelVariant::from_tag(r.take(1, "variant tag")?[0])?;
        let n_words = r.u32("config length")? as usize;
        let words = (0..n_words).map(|_| r.u32("config block")).collect::<Result<Vec<_>>>()?;
        let config = ModelConfig::from_words(variant, &words)?;
        let mut model = Model::new(config, 0);
        let count = r.u32("tensor count")? as usize;
        if count != model.store.len() {
            return Err(ModelError::CheckpointMismatch(format!(
                "{count} tensors stored, architecture has {}",
                model.store.len()
            )));
        }
        let names = model.store.names().to_vec();
        for (t, name) in model.store.tensors_mut().iter_mut().zip(&names) {
            let rank = r.u32("tensor rank")? as usize;
            let shape = (0..rank)
                .map(|_| r.u32("tensor shape").map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            if shape != t.shape() {
                return Err(ModelError::CheckpointMismatch(format!(
                    "{name}: stored shape {shape:?}, expected {:?}",
                    t.shape()
                )));
            }
            for v in t.data_mut() {
                *v = f64::from_le_bytes(r.take(8, name)?.try_into().expect("8 bytes"));
            }
        }
        if r.pos != bytes.len() {
            return Err(ModelError::CheckpointMismatch(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(write_atomic(path, &self.encode_checkpoint())?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode_checkpoint(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(ModelError::TruncatedCheckpoint(format!("file ends inside {what}")));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

/// Mean squared error of a `B × 1` prediction column against `targets`,
/// recorded on the tape.
pub fn mse_loss(tape: &mut Tape, predictions: Var, targets: &[f64]) -> Result<Var> {
    let n = tape.value(predictions).numel();
    if n != targets.len() {
        return Err(ModelError::LengthMismatch {
            predictions: n,
            targets: targets.len(),
        });
    }
    if n == 0 {
        return Err(ModelError::EmptyBatch);
    }
    let shape = tape.shape(predictions).to_vec();
    let y = tape.constant(&shape, targets.to_vec())?;
    let diff = tape.sub(predictions, y)?;
    let sq = tape.mul(diff, diff)?;
    Ok(tape.mean_all(sq)?)
}

/// Plain mean squared error.
pub fn mse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(ModelError::LengthMismatch {
            predictions: predictions.len(),
            targets: targets.len(),
        });
    }
    if predictions.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let sum: f64 = predictions.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sum / predictions.len() as f64)
}

/// A compact configuration used by tests and smoke runs.
pub fn small_config(variant: ModelVariant) -> ModelConfig {
    ModelConfig {
        variant,
        drug: DrugEncoderConfig {
            kind: DrugLayerKind::Gat,
            in_dim: ATOM_FEATURE_DIM,
            layers: vec![(2, 4), (1, 8)],
            out_dim: 8,
        },
        cnn: CnnConfig {
            embed_dim: 6,
            filters: vec![4, 6],
            kernel: 3,
            out_dim: 8,
        },
        max_len: 24,
        plm_dim: 12,
        protein_dim: 8,
        contact_grid: 4,
        contact_dim: 6,
        hidden: vec![16, 8],
        dropout: 0.2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protein::{tokenize, ProteinSequence};

    fn sample(variant: ModelVariant, cfg: &ModelConfig) -> ModelInput {
        let mut input = ModelInput::new(DrugInput::from_smiles("CC(=O)Nc1ccc(O)cc1").unwrap());
        if variant.uses_tokens() {
            let seq = ProteinSequence::new("p", "MKVLAAGIVGLLLAQW").unwrap();
            input = input.with_tokens(tokenize(&seq, cfg.max_len).unwrap());
        } else {
            input = input.with_embedding((0..cfg.plm_dim).map(|i| (i as f64 * 0.37).sin()).collect::<Vec<_>>());
        }
        if variant.uses_contact() {
            let map = ContactMap::from_fn(10, |i, j| j - i <= 2);
            input = input.with_contact_map(&map, cfg.contact_grid);
        }
        input
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[0.0, 0.0], &[1.0, 3.0]).unwrap(), 5.0);
        assert!(matches!(mse(&[], &[]), Err(ModelError::EmptyBatch)));
        assert!(matches!(mse(&[1.0], &[]), Err(ModelError::LengthMismatch { .. })));
        let mut tape = Tape::new();
        let p = tape.constant(&[2, 1], vec![0.0, 0.0]).unwrap();
        let l = mse_loss(&mut tape, p, &[1.0, 3.0]).unwrap();
        assert_eq!(tape.data(l), &[5.0]);
    }

    #[test]
    fn variant_names_roundtrip() {
        for v in ModelVariant::ALL {
            assert_eq!(v.name().parse::<ModelVariant>().unwrap(), v);
            assert_eq!(ModelVariant::from_tag(v.tag()).unwrap(), v);
        }
        assert!("cnn".parse::<ModelVariant>().is_err());
        assert!(ModelVariant::from_tag(9).is_err());
    }

    #[test]
    fn fused_width_per_variant() {
        assert_eq!(ModelConfig::new(ModelVariant::BaselineCnn).fused_dim(), 256);
        assert_eq!(ModelConfig::new(ModelVariant::PGraphDta).fused_dim(), 256);
        assert_eq!(ModelConfig::new(ModelVariant::PGraphDtaCm1).fused_dim(), 384);
        assert_eq!(ModelConfig::new(ModelVariant::PGraphDtaCm2).fused_dim(), 384);
    }

    #[test]
    fn parameters_registered_only_for_the_variant() {
        let names = |v| Model::new(small_config(v), 1).params().names().to_vec();
        let base = names(ModelVariant::BaselineCnn);
        assert!(base.iter().any(|n| n.starts_with("protein_cnn")));
        assert!(!base.iter().any(|n| n.starts_with("protein_plm") || n.starts_with("contact")));
        let plm = names(ModelVariant::PGraphDta);
        assert!(!plm.iter().any(|n| n.starts_with("protein_cnn") || n.starts_with("contact")));
        assert!(names(ModelVariant::PGraphDtaCm2).iter().any(|n| n.starts_with("contact")));
    }

    #[test]
    fn missing_inputs_are_reported() {
        let cfg = small_config(ModelVariant::PGraphDtaCm1);
        let model = Model::new(cfg.clone(), 3);
        let mut input = sample(ModelVariant::PGraphDtaCm1, &cfg);
        input.contact = None;
        assert!(matches!(
            model.predict(&[&input]),
            Err(ModelError::MissingInput { input: "contact map", .. })
        ));
        let base = Model::new(small_config(ModelVariant::BaselineCnn), 3);
        assert!(matches!(
            base.predict(&[&sample(ModelVariant::PGraphDta, &cfg)]),
            Err(ModelError::MissingInput { input: "token ids", .. })
        ));
        assert!(matches!(base.predict(&[]), Err(ModelError::EmptyBatch)));
    }

    #[test]
    fn baseline_ignores_embedding_and_plm_ignores_tokens() {
        let cfg = small_config(ModelVariant::BaselineCnn);
        let model = Model::new(cfg.clone(), 5);
        let plain = sample(ModelVariant::BaselineCnn, &cfg);
        let extra = plain.clone().with_embedding(vec![f64::NAN; 3]);
        assert_eq!(model.predict_one(&plain).unwrap(), model.predict_one(&extra).unwrap());

        let cfg = small_config(ModelVariant::PGraphDta);
        let model = Model::new(cfg.clone(), 5);
        let plain = sample(ModelVariant::PGraphDta, &cfg);
        let extra = plain.clone().with_tokens(TokenizedSequence { ids: vec![99], length: 1 });
        assert_eq!(model.predict_one(&plain).unwrap(), model.predict_one(&extra).unwrap());
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        for v in ModelVariant::ALL {
            let cfg = small_config(v);
            let mut model = Model::new(cfg.clone(), 2);
            for t in model.params_mut().tensors_mut() {
                t.data_mut().fill(0.0);
            }
            assert_eq!(model.predict_one(&sample(v, &cfg)).unwrap(), 0.0);
        }
    }

    #[test]
    fn batch_matches_single_and_is_deterministic() {
        for v in ModelVariant::ALL {
            let cfg = small_config(v);
            let model = Model::new(cfg.clone(), 11);
            let a = sample(v, &cfg);
            let mut b = sample(v, &cfg);
            b.drug = Arc::new(DrugInput::from_smiles("c1ccncc1C(=O)O").unwrap());
            let batch = model.predict(&[&a, &b]).unwrap();
            assert_eq!(batch.len(), 2);
            assert!(batch.iter().all(|p| p.is_finite()));
            assert!((batch[0] - model.predict_one(&a).unwrap()).abs() < 1e-12);
            assert!((batch[1] - model.predict_one(&b).unwrap()).abs() < 1e-12);
            assert_eq!(batch, model.predict(&[&a, &b]).unwrap());
        }
    }

    #[test]
    fn checkpoint_roundtrip_and_rejections() {
        for v in ModelVariant::ALL {
            let model = Model::new(small_config(v), 7);
            let bytes = model.encode_checkpoint();
            let back = Model::decode_checkpoint(&bytes).unwrap();
            assert_eq!(back.params().tensors(), model.params().tensors());
            assert_eq!(back.config(), model.config());
            assert_eq!(back.encode_checkpoint(), bytes);
            for cut in [3, 8, 9, 20, bytes.len() / 2, bytes.len() - 1] {
                assert!(matches!(
                    Model::decode_checkpoint(&bytes[..cut]),
                    Err(ModelError::TruncatedCheckpoint(_))
                ));
            }
            let mut bad = bytes.clone();
            bad[0] = b'X';
            assert!(matches!(Model::decode_checkpoint(&bad), Err(ModelError::BadMagic)));
        }
    }

    #[test]
    fn dropout_only_with_rng() {
        let cfg = small_config(ModelVariant::PGraphDta);
        let model = Model::new(cfg.clone(), 4);
        let input = sample(ModelVariant::PGraphDta, &cfg);
        let mut tape = Tape::new();
        let bound = model.params().bind(&mut tape);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let train = model.forward_batch(&mut tape, &bound, &[&input], Some(&mut rng)).unwrap();
        let eval = model.forward_batch(&mut tape, &bound, &[&input], None).unwrap();
        assert_ne!(tape.data(train), tape.data(eval));
        assert_eq!(tape.data(eval)[0], model.predict_one(&input).unwrap());
    }
}
