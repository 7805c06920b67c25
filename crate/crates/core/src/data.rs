//! Dataset ingestion, the DAVIS affinity transform, seeded splits and
//! per-protein sidecar files.
//!
//! Interactions are a CSV with the header `drug_id,smiles,protein_id,affinity`;
//! sequences are FASTA. Sidecars live in a directory and are named after the
//! protein id: `<id>.plm` (embedding), `<id>.cmap` (contact or probability
//! matrix), `<id>.pdb` (coordinates). Intermolecular distance matrices are
//! `<drug_id>__<protein_id>.dist`, falling back to `<protein_id>.dist`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::contact::{
    binarize_distances, contact_from_coords, contact_from_probabilities, parse_coordinates, parse_matrix, ContactError,
    ContactMap, DistanceMatrix, DEFAULT_COORD_THRESHOLD, DEFAULT_DISTANCE_THRESHOLD, DEFAULT_PROB_THRESHOLD,
};
use crate::protein::{load_embeddings, EmbeddingMatrix, ProteinError, ProteinSequence};

pub const INTERACTION_HEADER: [&str; 4] = ["drug_id", "smiles", "protein_id", "affinity"];

#[derive(Debug, Error)]
pub enum DataError {
    #[error("MissingProtein: '{protein_id}' (line {line})")]
    MissingProtein { protein_id: String, line: usize },
    #[error("MalformedRow: line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("MalformedFasta: line {line}: {reason}")]
    MalformedFasta { line: usize, reason: String },
    #[error("EmptyDataset")]
    EmptyDataset,
    #[error("NonPositiveKd: {0}")]
    NonPositiveKd(f64),
    #[error("DegenerateSplit: {0}")]
    DegenerateSplit(String),
    #[error("MissingSidecar: no {what} for '{id}' under {dir}")]
    MissingSidecar { what: &'static str, id: String, dir: PathBuf },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Protein { path: PathBuf, source: ProteinError },
    #[error("{path}: {source}")]
    Contact { path: PathBuf, source: ContactError },
}

pub type Result<T> = std::result::Result<T, DataError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DatasetKind {
    Davis,
    Kiba,
    Generic,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Davis => "davis",
            DatasetKind::Kiba => "kiba",
            DatasetKind::Generic => "generic",
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatasetKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "davis" => Ok(DatasetKind::Davis),
            "kiba" => Ok(DatasetKind::Kiba),
            "generic" => Ok(DatasetKind::Generic),
            _ => Err(format!("unknown dataset kind '{s}' (expected davis, kiba or generic)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionSample {
    pub drug_id: String,
    pub smiles: String,
    pub protein_id: String,
    /// pKd for DAVIS, the final score otherwise.
    pub affinity: f64,
    pub kind: DatasetKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DatasetStats {
    pub proteins: usize,
    pub compounds: usize,
    pub entries: usize,
}

impl DatasetStats {
    pub fn of(samples: &[InteractionSample]) -> Self {
        let proteins: BTreeSet<&str> = samples.iter().map(|s| s.protein_id.as_str()).collect();
        let compounds: BTreeSet<&str> = samples.iter().map(|s| s.drug_id.as_str()).collect();
        Self {
            proteins: proteins.len(),
            compounds: compounds.len(),
            entries: samples.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub samples: Vec<InteractionSample>,
    pub proteins: Arc<BTreeMap<String, ProteinSequence>>,
    pub stats: DatasetStats,
}

impl DatasetBundle {
    /// Builds a bundle, checking that every protein id resolves.
    pub fn new(samples: Vec<InteractionSample>, proteins: Arc<BTreeMap<String, ProteinSequence>>) -> Result<Self> {
        if let Some((i, s)) = samples.iter().enumerate().find(|(_, s)| !proteins.contains_key(&s.protein_id)) {
            return Err(DataError::MissingProtein {
                protein_id: s.protein_id.clone(),
                line: i + 2,
            });
        }
        let stats = DatasetStats::of(&samples);
        Ok(Self {
            samples,
            proteins,
            stats,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn subset(&self, indices: &[usize]) -> Self {
        let samples: Vec<_> = indices.iter().map(|&i| self.samples[i].clone()).collect();
        let stats = DatasetStats::of(&samples);
        Self {
            samples,
            proteins: Arc::clone(&self.proteins),
            stats,
        }
    }
}

/// pKd = −log₁₀(Kd / 10⁹) with Kd in nanomolar.
pub fn davis_log_transform(kd_nanomolar: f64) -> Result<f64> {
    if !(kd_nanomolar > 0.0) || !kd_nanomolar.is_finite() {
        return Err(DataError::NonPositiveKd(kd_nanomolar));
    }
    Ok(-(kd_nanomolar / 1e9).log10())
}

pub fn parse_fasta(text: &str) -> Result<BTreeMap<String, ProteinSequence>> {
    let mut out = BTreeMap::new();
    let mut current: Option<(String, String, usize)> = None;
    let finish = |entry: Option<(String, String, usize)>, out: &mut BTreeMap<String, ProteinSequence>| -> Result<()> {
        if let Some((id, residues, line)) = entry {
            let seq = ProteinSequence::new(id.clone(), residues).map_err(|e| DataError::MalformedFasta {
                line,
                reason: format!("record '{id}': {e}"),
            })?;
            if out.insert(id.clone(), seq).is_some() {
                return Err(DataError::MalformedFasta {
                    line,
                    reason: format!("duplicate id '{id}'"),
                });
            }
        }
        Ok(())
    };
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('>') {
            finish(current.take(), &mut out)?;
            let id = header.split_whitespace().next().unwrap_or("");
            if id.is_empty() {
                return Err(DataError::MalformedFasta {
                    line: i + 1,
                    reason: "empty record id".into(),
                });
            }
            current = Some((id.to_string(), String::new(), i + 1));
        } else {
            match current.as_mut() {
                Some((_, residues, _)) => residues.push_str(line),
                None => {
                    return Err(DataError::MalformedFasta {
                        line: i + 1,
                        reason: "sequence data before the first '>' header".into(),
                    })
                }
            }
        }
    }
    finish(current.take(), &mut out)?;
    Ok(out)
}

/// Parses interaction rows. DAVIS affinities are raw Kd (nM) and are
/// log-transformed here.
pub fn parse_interactions(text: &str, kind: DatasetKind) -> Result<Vec<InteractionSample>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| DataError::MalformedRow {
            line: 1,
            reason: e.to_string(),
        })?,
        None => return Err(DataError::EmptyDataset),
    };
    if header.iter().collect::<Vec<_>>() != INTERACTION_HEADER {
        return Err(DataError::MalformedRow {
            line: 1,
            reason: format!("header must be '{}'", INTERACTION_HEADER.join(",")),
        });
    }
    let mut samples = Vec::new();
    for record in records {
        let record = record.map_err(|e| DataError::MalformedRow {
            line: e.position().map_or(0, |p| p.line() as usize),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let bad = |reason: String| DataError::MalformedRow { line, reason };
        if record.len() != 4 {
            return Err(bad(format!("expected 4 fields, found {}", record.len())));
        }
        let (drug_id, smiles, protein_id) = (&record[0], &record[1], &record[2]);
        if drug_id.is_empty() || protein_id.is_empty() {
            return Err(bad("empty id".into()));
        }
        if smiles.is_empty() {
            return Err(bad("empty SMILES".into()));
        }
        let raw: f64 = record[3]
            .parse()
            .map_err(|_| bad(format!("affinity '{}' is not a number", &record[3])))?;
        if !raw.is_finite() {
            return Err(bad(format!("affinity '{}' is not finite", &record[3])));
        }
        let affinity = match kind {
            DatasetKind::Davis => davis_log_transform(raw).map_err(|e| bad(e.to_string()))?,
            _ => raw,
        };
        samples.push(InteractionSample {
            drug_id: drug_id.to_string(),
            smiles: smiles.to_string(),
            protein_id: protein_id.to_string(),
            affinity,
            kind,
        });
    }
    Ok(samples)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_dataset(interactions: &Path, sequences: &Path, kind: DatasetKind) -> Result<DatasetBundle> {
    let proteins = parse_fasta(&read_text(sequences)?)?;
    let samples = parse_interactions(&read_text(interactions)?, kind)?;
    if samples.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    DatasetBundle::new(samples, Arc::new(proteins))
}

/// Seeded Fisher–Yates shuffle of sample indices, then a prefix split of
/// `⌊fraction·N⌋` training samples.
pub fn split(bundle: &DatasetBundle, train_fraction: f64, seed: u64) -> Result<(DatasetBundle, DatasetBundle)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DataError::DegenerateSplit(format!("fraction {train_fraction} outside (0, 1)")));
    }
    let n = bundle.len();
    let n_train = (train_fraction * n as f64).floor() as usize;
    if n_train == 0 || n_train == n {
        return Err(DataError::DegenerateSplit(format!(
            "{n} samples at fraction {train_fraction} leaves an empty side"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((bundle.subset(&order[..n_train]), bundle.subset(&order[n_train..])))
}

/// Directory holding per-protein sidecar files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sidecars {
    pub dir: PathBuf,
}

impl Sidecars {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path(&self, id: &str, ext: &str) -> PathBuf {
        self.dir.join(format!("{id}.{ext}"))
    }

    /// Reads `<id>.plm` and returns the record for `protein_id` (or the only
    /// record when the file holds one).
    pub fn embedding(&self, protein_id: &str) -> Result<EmbeddingMatrix> {
        let path = self.path(protein_id, "plm");
        if !path.is_file() {
            return Err(self.missing("embedding file", protein_id));
        }
        let mut records = load_embeddings(&path).map_err(|source| DataError::Protein {
            path: path.clone(),
            source,
        })?;
        if let Some(m) = records.remove(protein_id) {
            return Ok(m);
        }
        if records.len() == 1 {
            return Ok(records.into_values().next().expect("one record"));
        }
        Err(self.missing("embedding record", protein_id))
    }

    /// Residue contact map from `<id>.cmap` (binary or probability matrix,
    /// thresholded at 0.5), else from `<id>.pdb` at `coord_threshold` Å.
    pub fn residue_contacts(&self, protein_id: &str, coord_threshold: f64) -> Result<ContactMap> {
        let cmap = self.path(protein_id, "cmap");
        if cmap.is_file() {
            let wrap = |source| DataError::Contact {
                path: cmap.clone(),
                source,
            };
            let m = parse_matrix(&read_text(&cmap)?).map_err(wrap)?;
            return contact_from_probabilities(&m, DEFAULT_PROB_THRESHOLD).map_err(wrap);
        }
        let pdb = self.path(protein_id, "pdb");
        if pdb.is_file() {
            let coords = parse_coordinates(protein_id, &read_text(&pdb)?).map_err(|source| DataError::Contact {
                path: pdb.clone(),
                source,
            })?;
            return Ok(contact_from_coords(&coords, coord_threshold));
        }
        Err(self.missing("contact map (.cmap or .pdb)", protein_id))
    }

    /// Binarized distance map from `<drug>__<protein>.dist`, falling back to
    /// `<protein>.dist`.
    pub fn distance_contacts(&self, drug_id: &str, protein_id: &str, threshold: f64) -> Result<ContactMap> {
        let pair = self.path(&format!("{drug_id}__{protein_id}"), "dist");
        let single = self.path(protein_id, "dist");
        let path = if pair.is_file() {
            pair
        } else if single.is_file() {
            single
        } else {
            return Err(self.missing("distance matrix (.dist)", &format!("{drug_id}__{protein_id}")));
        };
        let wrap = |source| DataError::Contact {
            path: path.clone(),
            source,
        };
        let m = parse_matrix(&read_text(&path)?).map_err(wrap)?;
        Ok(binarize_distances(&DistanceMatrix::new(m).map_err(wrap)?, threshold))
    }

    fn missing(&self, what: &'static str, id: &str) -> DataError {
        DataError::MissingSidecar {
            what,
            id: id.to_string(),
            dir: self.dir.clone(),
        }
    }
}

pub const DEFAULT_CM1_THRESHOLD: f64 = DEFAULT_DISTANCE_THRESHOLD;
pub const DEFAULT_CM2_THRESHOLD: f64 = DEFAULT_COORD_THRESHOLD;
