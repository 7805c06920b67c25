use pgdta_core::contact::ContactMap;
use pgdta_core::gnn::{DrugEncoder, DrugEncoderConfig, DrugLayerKind};
use pgdta_core::gradcheck::{check_model, check_store};
use pgdta_core::model::{small_config, DrugInput, Model, ModelInput, ModelVariant};
use pgdta_core::params::ParamStore;
use pgdta_core::protein::{tokenize, CnnConfig, EmbeddingProjection, ProteinCnn, ProteinSequence};
use pgdta_core::smiles::ATOM_FEATURE_DIM;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn batch(variant: ModelVariant) -> Vec<ModelInput> {
    let cfg = small_config(variant);
    let drugs = ["Clc1ccc(Nc2nnc(Cc3ccncc3)c3ccccc23)cc1", "CC(=O)Nc1ccc(O)cc1"];
    let seqs = ["MKKFFDSRREQGGSGLGSGSSGGGGSTSGLGSGYIGRVFGIGRQQVTVDEVLAEGGFAIVFLVRTSNG", "MSTNPKPQRKTKRNTNRRPQDVKFPGG"];
    drugs
        .iter()
        .zip(seqs)
        .enumerate()
        .map(|(i, (smiles, seq))| {
            let mut input = ModelInput::new(DrugInput::from_smiles(smiles).unwrap());
            let seq = ProteinSequence::new(format!("p{i}"), seq).unwrap();
            if variant.uses_tokens() {
                input = input.with_tokens(tokenize(&seq, cfg.max_len).unwrap());
            } else {
                let e: Vec<f64> = (0..cfg.plm_dim).map(|k| ((k + 3 * i) as f64 * 0.71).cos()).collect();
                input = input.with_embedding(e);
            }
            if variant.uses_contact() {
                let map = ContactMap::from_fn(9 + i, |a, b| (a * 7 + b * 3 + i) % 5 < 2);
                input = input.with_contact_map(&map, cfg.contact_grid);
            }
            input
        })
        .collect()
}

#[test]
fn full_model_gradients_match_finite_differences() {
    for variant in ModelVariant::ALL {
        let mut model = Model::new(small_config(variant), 17);
        let inputs = batch(variant);
        let refs: Vec<&ModelInput> = inputs.iter().collect();
        let pred = model.predict(&refs).unwrap();
        let targets = [pred[0] + 0.5, pred[1] - 0.4];
        let report = check_model(&mut model, &refs, &targets, EPS, Some(5)).unwrap();
        let worst = report.worst().unwrap();
        assert!(
            report.max_rel_error() < TOL,
            "{variant}: {} has relative error {}",
            worst.name,
            worst.max_rel_error
        );
        assert_eq!(report.checked(), model.params().scalar_count());
    }
}

#[test]
fn two_layer_gat_stack_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut store = ParamStore::new();
    let config = DrugEncoderConfig {
        kind: DrugLayerKind::Gat,
        in_dim: ATOM_FEATURE_DIM,
        layers: vec![(3, 4), (2, 5)],
        out_dim: 6,
    };
    let enc = DrugEncoder::new(&mut store, &config, &mut rng);
    let drug = DrugInput::from_smiles("O=C(NC1CCNCC1)c1[nH]ncc1NC(=O)c1c(Cl)cccc1Cl").unwrap();
    let report = check_store(&mut store, EPS, |_, tape, bound| {
        let x = tape.constant(&[drug.n_atoms, ATOM_FEATURE_DIM], drug.features.clone())?;
        let y = enc.forward(tape, bound, x, &drug.adjacency)?;
        let sq = tape.mul(y, y)?;
        Ok::<_, pgdta_core::gnn::GnnError>(tape.sum_all(sq)?)
    })
    .unwrap();
    assert!(report.max_rel_error() < TOL, "{:?}", report.worst());
}

#[test]
fn cnn_and_projection_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut store = ParamStore::new();
    let cfg = CnnConfig {
        embed_dim: 5,
        filters: vec![3, 4, 3],
        kernel: 3,
        out_dim: 4,
    };
    let cnn = ProteinCnn::new(&mut store, &cfg, &mut rng);
    let tokens = tokenize(&ProteinSequence::new("p", "MKVLAAGIVW").unwrap(), 14).unwrap();
    let report = check_store(&mut store, EPS, |_, tape, bound| {
        let y = cnn.forward(tape, bound, &tokens)?;
        let sq = tape.mul(y, y)?;
        Ok::<_, pgdta_core::protein::ProteinError>(tape.sum_all(sq)?)
    })
    .unwrap();
    assert!(report.max_rel_error() < TOL, "{:?}", report.worst());

    let mut store = ParamStore::new();
    let proj = EmbeddingProjection::new(&mut store, 7, 4, &mut rng);
    let v: Vec<f64> = (0..7).map(|k| (k as f64 - 3.0) * 0.4).collect();
    let report = check_store(&mut store, EPS, |_, tape, bound| {
        let x = tape.constant(&[1, 7], v.clone())?;
        let y = proj.forward(tape, bound, x)?;
        let sq = tape.mul(y, y)?;
        Ok::<_, pgdta_core::protein::ProteinError>(tape.sum_all(sq)?)
    })
    .unwrap();
    assert!(report.max_rel_error() < TOL, "{:?}", report.worst());
}
