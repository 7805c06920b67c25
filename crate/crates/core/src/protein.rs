//! Protein encoders and precomputed language-model embeddings.
//!
//! Two routes produce a protein vector: a 1-D CNN over token ids, and a
//! dense projection of a pooled embedding read from disk. Embedding files
//! use the binary `PLMEMB1` layout (see [`write_embeddings`]) or a
//! tab-separated text form for hand-written fixtures.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::gnn::PoolMode;
use crate::params::{Bound, Dense, ParamId, ParamStore};
use crate::tensor::{ReduceMode, Tape, Tensor, TensorError, Var};

/// 20 standard residues plus B, Z, X, U, O, in alphabetical order.
pub const ALPHABET: &[u8; 25] = b"ABCDEFGHIKLMNOPQRSTUVWXYZ";
pub const PAD_TOKEN: usize = 0;
pub const VOCAB_SIZE: usize = ALPHABET.len() + 1;
pub const DEFAULT_MAX_LEN: usize = 1000;

pub const EMBEDDING_MAGIC: &[u8; 8] = b"PLMEMB1\0";

#[derive(Debug, Error)]
pub enum ProteinError {
    #[error("InvalidResidue: '{residue}' at position {position}")]
    InvalidResidue { residue: char, position: usize },
    #[error("EmptySequence")]
    EmptySequence,
    #[error("BadMagic: not an embedding file")]
    BadMagic,
    #[error("DimMismatch: record '{id}' has dim {found}, expected {expected}")]
    DimMismatch { id: String, expected: usize, found: usize },
    #[error("TruncatedFile: {0}")]
    TruncatedFile(String),
    #[error("DuplicateId: '{0}'")]
    DuplicateId(String),
    #[error("MalformedText: line {line}: {reason}")]
    MalformedText { line: usize, reason: String },
    #[error("ShapeMismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, ProteinError>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProteinSequence {
    pub id: String,
    residues: String,
}

impl ProteinSequence {
    pub fn new(id: impl Into<String>, residues: impl Into<String>) -> Result<Self> {
        let residues = residues.into();
        if residues.is_empty() {
            return Err(ProteinError::EmptySequence);
        }
        if let Some((position, residue)) = residues.char_indices().find(|&(_, c)| token_id(c).is_none()) {
            return Err(ProteinError::InvalidResidue { residue, position });
        }
        Ok(Self {
            id: id.into(),
            residues,
        })
    }

    pub fn residues(&self) -> &str {
        &self.residues
    }

    pub fn len(&self) -> usize {
        self.residues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residues.is_empty()
    }
}

fn token_id(c: char) -> Option<usize> {
    u8::try_from(c)
        .ok()
        .and_then(|b| ALPHABET.iter().position(|&a| a == b))
        .map(|p| p + 1)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedSequence {
    pub ids: Vec<usize>,
    /// Residue count before padding or truncation.
    pub length: usize,
}

impl TokenizedSequence {
    /// Residues for the non-pad prefix.
    pub fn detokenize(&self) -> String {
        self.ids
            .iter()
            .take_while(|&&id| id != PAD_TOKEN)
            .map(|&id| ALPHABET[id - 1] as char)
            .collect()
    }
}

/// Maps residues to ids 1..=25, truncating to the first `max_len` residues
/// or right-padding with [`PAD_TOKEN`].
pub fn tokenize(seq: &ProteinSequence, max_len: usize) -> Result<TokenizedSequence> {
    let mut ids = Vec::with_capacity(max_len);
    for (position, residue) in seq.residues.chars().enumerate().take(max_len) {
        ids.push(token_id(residue).ok_or(ProteinError::InvalidResidue { residue, position })?);
    }
    ids.resize(max_len, PAD_TOKEN);
    Ok(TokenizedSequence {
        ids,
        length: seq.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnConfig {
    pub embed_dim: usize,
    pub filters: Vec<usize>,
    pub kernel: usize,
    pub out_dim: usize,
}

impl Default for CnnConfig {
    fn default() -> Self {
        Self {
            embed_dim: 128,
            filters: vec![32, 64, 96],
            kernel: 8,
            out_dim: 128,
        }
    }
}

/// Token embedding, stacked valid 1-D convolutions with ReLU, global max
/// pool over positions, dense projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ProteinCnn {
    embedding: ParamId,
    convs: Vec<Dense>,
    kernel: usize,
    head: Dense,
}

impl ProteinCnn {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, config: &CnnConfig, rng: &mut R) -> Self {
        let mut table = Tensor::uniform(&[VOCAB_SIZE, config.embed_dim], 1.0, rng);
        table.data_mut()[..config.embed_dim].fill(0.0);
        let embedding = store.register("protein_cnn.embedding", table);
        let mut c_in = config.embed_dim;
        let convs = config
            .filters
            .iter()
            .enumerate()
            .map(|(i, &c_out)| {
                let conv = Dense::new(store, &format!("protein_cnn.conv{i}"), config.kernel * c_in, c_out, rng);
                c_in = c_out;
                conv
            })
            .collect();
        let head = Dense::new(store, "protein_cnn.dense", c_in, config.out_dim, rng);
        Self {
            embedding,
            convs,
            kernel: config.kernel,
            head,
        }
    }

    /// Shortest token sequence that survives every valid convolution.
    pub fn min_len(&self) -> usize {
        self.convs.len() * (self.kernel - 1) + 1
    }

    pub fn out_dim(&self) -> usize {
        self.head.d_out
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, tokens: &TokenizedSequence) -> Result<Var> {
        if tokens.ids.len() < self.min_len() {
            return Err(ProteinError::ShapeMismatch(format!(
                "{} tokens, convolution stack needs at least {}",
                tokens.ids.len(),
                self.min_len()
            )));
        }
        let mut h = tape.embedding(bound.var(self.embedding), &tokens.ids, Some(PAD_TOKEN))?;
        for conv in &self.convs {
            let cols = tape.im2col(h, self.kernel)?;
            let y = conv.forward(tape, bound, cols)?;
            h = tape.relu(y);
        }
        let pooled = tape.reduce(h, ReduceMode::Max, 0)?;
        let width = tape.shape(pooled)[0];
        let pooled = tape.reshape(pooled, &[1, width])?;
        Ok(self.head.forward(tape, bound, pooled)?)
    }
}

/// Per-residue (`rows × dim`) or pre-pooled (`1 × dim`) embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub protein_id: String,
    pub rows: usize,
    pub dim: usize,
    pub values: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(protein_id: impl Into<String>, rows: usize, dim: usize, values: Vec<f32>) -> Result<Self> {
        let protein_id = protein_id.into();
        if dim == 0 || rows == 0 || values.len() != rows * dim {
            return Err(ProteinError::ShapeMismatch(format!(
                "embedding '{protein_id}': {rows}×{dim} with {} values",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ProteinError::ShapeMismatch(format!("embedding '{protein_id}' has non-finite entries")));
        }
        Ok(Self {
            protein_id,
            rows,
            dim,
            values,
        })
    }
}

/// Per-dimension reduction over residues. A one-row matrix passes through.
pub fn pool_embedding(m: &EmbeddingMatrix, mode: PoolMode) -> Vec<f64> {
    let mut out: Vec<f64> = m.values[..m.dim].iter().map(|&v| f64::from(v)).collect();
    for row in m.values.chunks(m.dim).skip(1) {
        for (o, &v) in out.iter_mut().zip(row) {
            match mode {
                PoolMode::Mean => *o += f64::from(v),
                PoolMode::Max => *o = o.max(f64::from(v)),
            }
        }
    }
    if mode == PoolMode::Mean && m.rows > 1 {
        out.iter_mut().for_each(|o| *o /= m.rows as f64);
    }
    out
}

/// Dense + ReLU from the language-model dimension to the protein width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbeddingProjection {
    pub dense: Dense,
}

impl EmbeddingProjection {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, plm_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        Self {
            dense: Dense::new(store, "protein_plm.dense", plm_dim, out_dim, rng),
        }
    }

    /// `pooled` is the `1 × plm_dim` pooled embedding.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, pooled: Var) -> Result<Var> {
        let shape = tape.shape(pooled);
        if shape != [1, self.dense.d_in] {
            return Err(ProteinError::ShapeMismatch(format!(
                "embedding {shape:?}, projection expects [1, {}]",
                self.dense.d_in
            )));
        }
        let y = self.dense.forward(tape, bound, pooled)?;
        Ok(tape.relu(y))
    }
}

/// Serializes records in the binary embedding layout:
/// magic `PLMEMB1\0`, `u32` record count, then per record `u16` id length,
/// id bytes, `u32` rows, `u32` dim and `rows·dim` little-endian `f32`.
pub fn encode_embeddings(records: &[EmbeddingMatrix]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(EMBEDDING_MAGIC);
    out.extend_from_slice(&(records.len() as u32).to_le_bytes());
    for r in records {
        out.extend_from_slice(&(r.protein_id.len() as u16).to_le_bytes());
        out.extend_from_slice(r.protein_id.as_bytes());
        out.extend_from_slice(&(r.rows as u32).to_le_bytes());
        out.extend_from_slice(&(r.dim as u32).to_le_bytes());
        for v in &r.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_embeddings(path: &Path, records: &[EmbeddingMatrix]) -> io::Result<()> {
    crate::fsutil::write_atomic(path, &encode_embeddings(records))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            ProteinError::TruncatedFile(format!("needed {n} bytes for {what} at offset {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

fn insert_unique(map: &mut BTreeMap<String, EmbeddingMatrix>, m: EmbeddingMatrix) -> Result<()> {
    if let Some(first) = map.values().next() {
        if first.dim != m.dim {
            return Err(ProteinError::DimMismatch {
                id: m.protein_id,
                expected: first.dim,
                found: m.dim,
            });
        }
    }
    if map.contains_key(&m.protein_id) {
        return Err(ProteinError::DuplicateId(m.protein_id));
    }
    map.insert(m.protein_id.clone(), m);
    Ok(())
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<BTreeMap<String, EmbeddingMatrix>> {
    if bytes.len() < EMBEDDING_MAGIC.len() || &bytes[..8] != EMBEDDING_MAGIC {
        return Err(ProteinError::BadMagic);
    }
    let mut r = Reader { bytes, pos: 8 };
    let count = r.u32("record count")?;
    let mut map = BTreeMap::new();
    for k in 0..count {
        let id_len = r.u16("id length")?;
        let id = String::from_utf8(r.take(usize::from(id_len), "id")?.to_vec())
            .map_err(|_| ProteinError::TruncatedFile(format!("record {k} id is not UTF-8")))?;
        let rows = r.u32("row count")? as usize;
        let dim = r.u32("dim")? as usize;
        let n = rows
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| ProteinError::TruncatedFile(format!("record '{id}' size overflows")))?;
        let raw = r.take(n, "values")?;
        let values = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        insert_unique(&mut map, EmbeddingMatrix::new(id, rows, dim, values)?)?;
    }
    if r.pos != bytes.len() {
        log::warn!("{} trailing bytes after {count} embedding records", bytes.len() - r.pos);
    }
    Ok(map)
}

/// Text fixtures: one pre-pooled record per line, `id<TAB>dim<TAB>v1,v2,...`.
pub fn parse_embedding_text(text: &str) -> Result<BTreeMap<String, EmbeddingMatrix>> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let malformed = |reason: &str| ProteinError::MalformedText {
            line: line_no,
            reason: reason.to_string(),
        };
        let mut fields = line.split('\t');
        let (Some(id), Some(dim), Some(vals), None) = (fields.next(), fields.next(), fields.next(), fields.next()) else {
            return Err(malformed("expected id, dim and values separated by tabs"));
        };
        let dim: usize = dim.trim().parse().map_err(|_| malformed("dim is not an integer"))?;
        let values: Vec<f32> = vals
            .split(',')
            .map(|v| v.trim().parse::<f32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| malformed("non-numeric value"))?;
        if values.len() != dim {
            return Err(ProteinError::DimMismatch {
                id: id.to_string(),
                expected: dim,
                found: values.len(),
            });
        }
        insert_unique(&mut map, EmbeddingMatrix::new(id, 1, dim, values)?)?;
    }
    Ok(map)
}

/// Loads a binary or text embedding file, detected by the magic bytes.
pub fn load_embeddings(path: &Path) -> Result<BTreeMap<String, EmbeddingMatrix>> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(EMBEDDING_MAGIC) {
        return decode_embeddings(&bytes);
    }
    match std::str::from_utf8(&bytes) {
        Ok(text) if text.contains('\t') => parse_embedding_text(text),
        _ => Err(ProteinError::BadMagic),
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

/// Deterministic stand-in for a language-model embedding: a Gaussian matrix
/// seeded by a hash of the sequence. One row per residue when `per_residue`,
/// otherwise a single pre-pooled row.
pub fn pseudo_embedding(seq: &ProteinSequence, dim: usize, per_residue: bool) -> EmbeddingMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(seq.residues.as_bytes()));
    let rows = if per_residue { seq.len() } else { 1 };
    let values = (0..rows * dim).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
    EmbeddingMatrix {
        protein_id: seq.id.clone(),
        rows,
        dim,
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(s: &str) -> ProteinSequence {
        ProteinSequence::new("p", s).unwrap()
    }

    #[test]
    fn tokenize_pads() {
        let t = tokenize(&seq("ACD"), 5).unwrap();
        assert_eq!(t.ids, vec![1, 3, 4, 0, 0]);
        assert_eq!(t.length, 3);
    }

    #[test]
    fn tokenize_truncates_prefix() {
        let residues: String = "ACDEFGHIKL".repeat(120);
        let t = tokenize(&seq(&residues), 1000).unwrap();
        assert_eq!(t.ids.len(), 1000);
        assert_eq!(t.length, 1200);
        assert_eq!(t.detokenize(), residues[..1000]);
    }

    #[test]
    fn ambiguity_codes_are_valid() {
        let t = tokenize(&seq("AXB"), 3).unwrap();
        assert_eq!(t.ids, vec![1, 23, 2]);
        assert!(ALPHABET.iter().all(|&c| c != b'J'));
    }

    #[test]
    fn invalid_residues_rejected() {
        assert!(matches!(
            ProteinSequence::new("p", "AJ"),
            Err(ProteinError::InvalidResidue { residue: 'J', position: 1 })
        ));
        assert!(matches!(ProteinSequence::new("p", "ac"), Err(ProteinError::InvalidResidue { .. })));
        assert!(matches!(ProteinSequence::new("p", ""), Err(ProteinError::EmptySequence)));
    }

    #[test]
    fn tokenize_detokenize_roundtrip() {
        let s = seq("MKVLAAGIVGLLLAQWERTY");
        let t = tokenize(&s, 12).unwrap();
        let again = tokenize(&seq(&t.detokenize()), 12).unwrap();
        assert_eq!(t.ids, again.ids);
    }

    #[test]
    fn pooling_modes() {
        let m = EmbeddingMatrix::new("p", 2, 2, vec![0.0, 2.0, 4.0, 0.0]).unwrap();
        assert_eq!(pool_embedding(&m, PoolMode::Mean), vec![2.0, 1.0]);
        assert_eq!(pool_embedding(&m, PoolMode::Max), vec![4.0, 2.0]);
        let swapped = EmbeddingMatrix::new("p", 2, 2, vec![4.0, 0.0, 0.0, 2.0]).unwrap();
        assert_eq!(pool_embedding(&swapped, PoolMode::Mean), vec![2.0, 1.0]);
        let one = EmbeddingMatrix::new("p", 1, 3, vec![1.5, -2.0, 0.25]).unwrap();
        assert_eq!(pool_embedding(&one, PoolMode::Mean), vec![1.5, -2.0, 0.25]);
    }

    #[test]
    fn binary_single_record() {
        let m = EmbeddingMatrix::new("P1", 1, 4, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let map = decode_embeddings(&encode_embeddings(&[m.clone()])).unwrap();
        assert_eq!(map.len(), 1);
        assert_eq!(map["P1"], m);
    }

    #[test]
    fn binary_errors() {
        assert!(matches!(decode_embeddings(b"NOTMAGIC\0\0\0\0"), Err(ProteinError::BadMagic)));
        let recs: Vec<_> = (0..7)
            .map(|i| EmbeddingMatrix::new(format!("P{i}"), 1, 2, vec![i as f32, 1.0]).unwrap())
            .collect();
        let mut bytes = encode_embeddings(&recs);
        bytes[8..12].copy_from_slice(&8u32.to_le_bytes());
        assert!(matches!(decode_embeddings(&bytes), Err(ProteinError::TruncatedFile(_))));

        let bytes = encode_embeddings(&recs);
        assert!(matches!(decode_embeddings(&bytes[..bytes.len() - 3]), Err(ProteinError::TruncatedFile(_))));

        let dup = vec![recs[0].clone(), recs[0].clone()];
        assert!(matches!(decode_embeddings(&encode_embeddings(&dup)), Err(ProteinError::DuplicateId(_))));

        let odd = vec![recs[0].clone(), EmbeddingMatrix::new("Q", 1, 3, vec![0.0; 3]).unwrap()];
        assert!(matches!(decode_embeddings(&encode_embeddings(&odd)), Err(ProteinError::DimMismatch { .. })));
    }

    #[test]
    fn text_fixture_format() {
        let map = parse_embedding_text("P1\t3\t0.5,1,-2\nP2\t3\t0,0,0\n").unwrap();
        assert_eq!(map["P1"].values, vec![0.5, 1.0, -2.0]);
        assert!(matches!(parse_embedding_text("P1\t3\t0.5,1\n"), Err(ProteinError::DimMismatch { .. })));
        assert!(matches!(
            parse_embedding_text("P1 3 0.5\n"),
            Err(ProteinError::MalformedText { line: 1, .. })
        ));
    }

    #[test]
    fn pseudo_embeddings_are_deterministic() {
        let a = pseudo_embedding(&seq("MKV"), 8, true);
        let b = pseudo_embedding(&seq("MKV"), 8, true);
        assert_eq!(a, b);
        assert_eq!((a.rows, a.dim), (3, 8));
        let c = pseudo_embedding(&seq("MKW"), 8, true);
        assert_ne!(a.values, c.values);
        assert_eq!(pseudo_embedding(&seq("MKV"), 8, false).rows, 1);
    }

    #[test]
    fn projection_of_zero_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let proj = EmbeddingProjection::new(&mut store, 6, 128, &mut rng);
        store.tensors_mut()[proj.dense.bias.0].data_mut().fill(0.0);
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let x = tape.constant(&[1, 6], vec![0.0; 6]).unwrap();
        let y = proj.forward(&mut tape, &bound, x).unwrap();
        assert_eq!(tape.shape(y), &[1, 128]);
        assert!(tape.data(y).iter().all(|&v| v == 0.0));
        let bad = tape.constant(&[1, 5], vec![0.0; 5]).unwrap();
        assert!(proj.forward(&mut tape, &bound, bad).is_err());
    }

    #[test]
    fn cnn_output_width_and_all_pad_totality() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut store = ParamStore::new();
        let cnn = ProteinCnn::new(&mut store, &CnnConfig::default(), &mut rng);
        for (s, len) in [("MKVLA", 40), ("ACDEFGHIKLMNPQRSTVWY", 64)] {
            let t = tokenize(&seq(s), len).unwrap();
            let mut tape = Tape::new();
            let bound = store.bind(&mut tape);
            let y = cnn.forward(&mut tape, &bound, &t).unwrap();
            assert_eq!(tape.shape(y), &[1, 128]);
        }
        let pad = TokenizedSequence { ids: vec![PAD_TOKEN; 30], length: 0 };
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let y = cnn.forward(&mut tape, &bound, &pad).unwrap();
        assert!(tape.data(y).iter().all(|v| v.is_finite()));
        let short = TokenizedSequence { ids: vec![1; 10], length: 10 };
        assert!(cnn.forward(&mut tape, &bound, &short).is_err());
    }
}
