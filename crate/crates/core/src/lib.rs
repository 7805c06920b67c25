//! Drug-target binding affinity engine.
//!
//! Drugs are parsed from SMILES into molecular graphs and encoded by graph
//! attention (or convolution) layers. Proteins are encoded either by a 1-D
//! CNN over token ids or by projecting precomputed language-model
//! embeddings. Contact maps can be added as a third input stream. All model
//! math runs on the tape-based autodiff in [`tensor`].

pub mod smiles;
pub mod tensor;
pub mod gnn;
pub mod params;
pub mod fsutil;
pub mod protein;
pub mod contact;
pub mod model;
pub mod data;
pub mod train;
pub mod gradcheck;

pub use contact::{ContactError, ContactMap, DistanceMatrix, ResidueCoordinates, SquareMatrix};
pub use data::{DataError, DatasetBundle, DatasetKind, DatasetStats, InteractionSample, Sidecars};
pub use gnn::{DrugEncoderConfig, DrugLayerKind, PoolMode};
pub use model::{DrugInput, Model, ModelConfig, ModelError, ModelInput, ModelVariant};
pub use protein::{CnnConfig, EmbeddingMatrix, ProteinError, ProteinSequence, TokenizedSequence};
pub use smiles::{parse_smiles, MolecularGraph, SmilesError};
pub use tensor::{Tape, Tensor, TensorError, Var};
pub use train::{AdamConfig, EpochRecord, PreparedSample, TrainConfig, TrainError, TrainingHistory};
