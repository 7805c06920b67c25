use super::elements::FEATURE_SYMBOLS;
use super::MolecularGraph;

/// Element (44) + degree (11) + total H (11) + implicit valence (11) + aromatic (1).
pub const ATOM_FEATURE_DIM: usize = 78;

const ELEMENT_SLOTS: usize = FEATURE_SYMBOLS.len() + 1;
const COUNT_SLOTS: usize = 11;

/// One row of the atom feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomFeatureVector(pub [f64; ATOM_FEATURE_DIM]);

fn one_hot(block: &mut [f64], index: usize) {
    let last = block.len() - 1;
    block[index.min(last)] = 1.0;
}

/// Row-major `N × 78` feature matrix.
pub fn featurize_atoms(graph: &MolecularGraph) -> Vec<f64> {
    let mut out = Vec::with_capacity(graph.atom_count() * ATOM_FEATURE_DIM);
    for i in 0..graph.atom_count() {
        out.extend_from_slice(&atom_features(graph, i).0);
    }
    out
}

pub fn atom_features(graph: &MolecularGraph, i: usize) -> AtomFeatureVector {
    let atom = &graph.atoms()[i];
    let mut v = [0.0; ATOM_FEATURE_DIM];
    let (element, rest) = v.split_at_mut(ELEMENT_SLOTS);
    let slot = FEATURE_SYMBOLS
        .iter()
        .position(|s| *s == atom.element)
        .unwrap_or(ELEMENT_SLOTS - 1);
    element[slot] = 1.0;
    let (degree, rest) = rest.split_at_mut(COUNT_SLOTS);
    one_hot(degree, graph.degree(i));
    let (hydrogens, rest) = rest.split_at_mut(COUNT_SLOTS);
    one_hot(hydrogens, usize::from(atom.total_h()));
    let (valence, aromatic) = rest.split_at_mut(COUNT_SLOTS);
    one_hot(valence, usize::from(atom.implicit_h));
    aromatic[0] = if atom.aromatic { 1.0 } else { 0.0 };
    AtomFeatureVector(v)
}
