//! Residue contact maps and binarized distance maps.
//!
//! Conventions: coordinate and distance thresholds use strict `<`,
//! probability thresholds use inclusive `>=`, probability matrices are
//! symmetrized by elementwise max first, and the diagonal is always set.

use rand::Rng;
use thiserror::Error;

use crate::params::{Bound, Dense, ParamStore};
use crate::tensor::{Tape, TensorError, Var};

pub const DEFAULT_COORD_THRESHOLD: f64 = 8.0;
pub const DEFAULT_PROB_THRESHOLD: f64 = 0.5;
pub const DEFAULT_DISTANCE_THRESHOLD: f64 = 10.0;
pub const DEFAULT_GRID: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContactError {
    #[error("NoAtomRecords")]
    NoAtomRecords,
    #[error("MalformedAtomLine: line {line}: {reason}")]
    MalformedAtomLine { line: usize, reason: String },
    #[error("MalformedMatrix: line {line}: {reason}")]
    MalformedMatrix { line: usize, reason: String },
    #[error("NotSquare: {0}")]
    NotSquare(String),
    #[error("OutOfRange: entry ({row}, {col}) = {value} outside [0, 1]")]
    OutOfRange { row: usize, col: usize, value: f64 },
    #[error("InvalidDistanceMatrix: {0}")]
    InvalidDistanceMatrix(String),
    #[error("InvalidContactMap: {0}")]
    InvalidContactMap(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

impl ContactError {
    /// True when the input parsed but violates a matrix invariant.
    pub fn is_invariant_violation(&self) -> bool {
        matches!(
            self,
            ContactError::NotSquare(_)
                | ContactError::OutOfRange { .. }
                | ContactError::InvalidDistanceMatrix(_)
                | ContactError::InvalidContactMap(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, ContactError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtomKind {
    CBeta,
    CAlphaFallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResiduePoint {
    /// Ordinal of the residue in file order; strictly increasing.
    pub residue_index: usize,
    pub residue_number: i32,
    pub residue_name: String,
    pub position: [f64; 3],
    pub kind: AtomKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidueCoordinates {
    pub protein_id: String,
    pub points: Vec<ResiduePoint>,
    /// Residues with neither a Cβ nor a Cα atom.
    pub skipped: usize,
}

fn column(line: &str, start: usize, end: usize) -> &str {
    line.get(start - 1..end.min(line.len())).unwrap_or("")
}

struct ResidueAtoms {
    key: (String, String, String),
    number: i32,
    name: String,
    cb: Option<[f64; 3]>,
    ca: Option<[f64; 3]>,
}

/// Extracts one representative point per residue from PDB `ATOM` records:
/// the Cβ, or the Cα for residues without one (glycine). Only the first
/// model is read.
pub fn parse_coordinates(protein_id: &str, text: &str) -> Result<ResidueCoordinates> {
    let mut residues: Vec<ResidueAtoms> = Vec::new();
    let mut saw_atom = false;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.starts_with("ENDMDL") {
            break;
        }
        if !line.starts_with("ATOM  ") && line.trim_end() != "ATOM" {
            continue;
        }
        saw_atom = true;
        let bad = |reason: &str| ContactError::MalformedAtomLine {
            line: line_no,
            reason: reason.to_string(),
        };
        if line.len() < 54 {
            return Err(bad("record shorter than 54 columns"));
        }
        let atom_name = column(line, 13, 16).trim();
        let alt_loc = column(line, 17, 17);
        let res_name = column(line, 18, 20).trim();
        let chain = column(line, 22, 22);
        let res_seq = column(line, 23, 26).trim();
        let icode = column(line, 27, 27);
        let number: i32 = res_seq.parse().map_err(|_| bad("residue number is not an integer"))?;
        let mut xyz = [0.0; 3];
        for (k, (s, e)) in [(31, 38), (39, 46), (47, 54)].into_iter().enumerate() {
            xyz[k] = column(line, s, e)
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad("non-numeric coordinate"))?;
        }
        let key = (chain.to_string(), res_seq.to_string(), icode.to_string());
        if residues.last().is_none_or(|r| r.key != key) {
            residues.push(ResidueAtoms {
                key,
                number,
                name: res_name.to_string(),
                cb: None,
                ca: None,
            });
        }
        let res = residues.last_mut().expect("pushed above");
        // first alternate location wins
        let primary = alt_loc == " " || alt_loc.is_empty() || alt_loc == "A";
        match atom_name {
            "CB" if primary && res.cb.is_none() => res.cb = Some(xyz),
            "CA" if primary && res.ca.is_none() => res.ca = Some(xyz),
            _ => {}
        }
    }
    if !saw_atom {
        return Err(ContactError::NoAtomRecords);
    }
    let mut points = Vec::with_capacity(residues.len());
    let mut skipped = 0;
    for (idx, r) in residues.into_iter().enumerate() {
        let (position, kind) = match (r.cb, r.ca) {
            (Some(p), _) => (p, AtomKind::CBeta),
            (None, Some(p)) => (p, AtomKind::CAlphaFallback),
            (None, None) => {
                skipped += 1;
                continue;
            }
        };
        points.push(ResiduePoint {
            residue_index: idx,
            residue_number: r.number,
            residue_name: r.name,
            position,
            kind,
        });
    }
    if skipped > 0 {
        log::warn!("{protein_id}: skipped {skipped} residues without CB or CA");
    }
    Ok(ResidueCoordinates {
        protein_id: protein_id.to_string(),
        points,
        skipped,
    })
}

/// Symmetric `L × L` boolean map with a set diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContactMap {
    size: usize,
    bits: Vec<bool>,
}

impl ContactMap {
    pub fn new(size: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != size * size {
            return Err(ContactError::NotSquare(format!("{} entries for size {size}", bits.len())));
        }
        for i in 0..size {
            if !bits[i * size + i] {
                return Err(ContactError::InvalidContactMap(format!("diagonal entry {i} is 0")));
            }
            for j in i + 1..size {
                if bits[i * size + j] != bits[j * size + i] {
                    return Err(ContactError::InvalidContactMap(format!("asymmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { size, bits })
    }

    /// Builds a map from the upper-triangle predicate `contact(i, j)`, `i < j`.
    pub fn from_fn(size: usize, contact: impl Fn(usize, usize) -> bool) -> Self {
        let mut bits = vec![false; size * size];
        for i in 0..size {
            bits[i * size + i] = true;
            for j in i + 1..size {
                let c = contact(i, j);
                bits[i * size + j] = c;
                bits[j * size + i] = c;
            }
        }
        Self { size, bits }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.size + j]
    }

    pub fn contact_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Fraction of set entries, diagonal included.
    pub fn density(&self) -> f64 {
        if self.size == 0 {
            return 0.0;
        }
        self.contact_count() as f64 / (self.size * self.size) as f64
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{}\n", self.size);
        for row in self.bits.chunks(self.size.max(1)) {
            let line: Vec<&str> = row.iter().map(|&b| if b { "1" } else { "0" }).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

fn euclidean(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn contact_from_coords(coords: &ResidueCoordinates, threshold: f64) -> ContactMap {
    let pts = &coords.points;
    ContactMap::from_fn(pts.len(), |i, j| euclidean(&pts[i].position, &pts[j].position) < threshold)
}

/// Dense square matrix of reals read from the plain-text matrix format.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    pub size: usize,
    pub values: Vec<f64>,
}

impl SquareMatrix {
    pub fn new(size: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != size * size {
            return Err(ContactError::NotSquare(format!("{} entries for size {size}", values.len())));
        }
        Ok(Self { size, values })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.size + j]
    }
}

/// Parses `L` on the first line followed by `L` rows of `L` numbers.
pub fn parse_matrix(text: &str) -> Result<SquareMatrix> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| ContactError::MalformedMatrix {
        line: 1,
        reason: "empty input".into(),
    })?;
    let size: usize = header.trim().parse().map_err(|_| ContactError::MalformedMatrix {
        line: 1,
        reason: "first line must be the matrix size".into(),
    })?;
    let mut values = Vec::with_capacity(size * size);
    let mut rows = 0;
    for (i, line) in lines {
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| ContactError::MalformedMatrix {
                line: i + 1,
                reason: "non-numeric entry".into(),
            })?;
        if row.len() != size {
            return Err(ContactError::NotSquare(format!("line {} has {} entries, expected {size}", i + 1, row.len())));
        }
        if let Some(v) = row.iter().find(|v| !v.is_finite()) {
            return Err(ContactError::MalformedMatrix {
                line: i + 1,
                reason: format!("non-finite entry {v}"),
            });
        }
        values.extend(row);
        rows += 1;
    }
    if rows != size {
        return Err(ContactError::NotSquare(format!("{rows} rows, expected {size}")));
    }
    SquareMatrix::new(size, values)
}

pub fn contact_from_probabilities(probs: &SquareMatrix, threshold: f64) -> Result<ContactMap> {
    SquareMatrix::new(probs.size, probs.values.clone())?;
    let n = probs.size;
    for (k, &v) in probs.values.iter().enumerate() {
        if !(0.0..=1.0).contains(&v) {
            return Err(ContactError::OutOfRange {
                row: k / n,
                col: k % n,
                value: v,
            });
        }
    }
    Ok(ContactMap::from_fn(n, |i, j| probs.get(i, j).max(probs.get(j, i)) >= threshold))
}

/// Symmetric, non-negative, zero-diagonal matrix of distances in Å.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix(SquareMatrix);

impl DistanceMatrix {
    pub fn new(m: SquareMatrix) -> Result<Self> {
        let n = m.size;
        for i in 0..n {
            if m.get(i, i) != 0.0 {
                return Err(ContactError::InvalidDistanceMatrix(format!("diagonal entry {i} is nonzero")));
            }
            for j in 0..n {
                let v = m.get(i, j);
                if v < 0.0 {
                    return Err(ContactError::InvalidDistanceMatrix(format!("negative entry at ({i}, {j})")));
                }
                if v != m.get(j, i) {
                    return Err(ContactError::InvalidDistanceMatrix(format!("asymmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self(m))
    }

    pub fn size(&self) -> usize {
        self.0.size
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }
}

pub fn binarize_distances(d: &DistanceMatrix, threshold: f64) -> ContactMap {
    ContactMap::from_fn(d.size(), |i, j| d.get(i, j) < threshold)
}

/// Block-average pools a map onto a `grid × grid` matrix (row-major).
/// Blocks have side `⌈L/grid⌉`; partial edge blocks average over the cells
/// they cover and unreached grid cells stay zero.
pub fn pooled_grid(map: &ContactMap, grid: usize) -> Vec<f64> {
    let l = map.size();
    let mut out = vec![0.0; grid * grid];
    if l == 0 || grid == 0 {
        return out;
    }
    let block = l.div_ceil(grid);
    let mut sums = vec![0.0; grid * grid];
    let mut counts = vec![0usize; grid * grid];
    for i in 0..l {
        let gi = i / block;
        for j in 0..l {
            let cell = gi * grid + j / block;
            counts[cell] += 1;
            if map.get(i, j) {
                sums[cell] += 1.0;
            }
        }
    }
    for ((o, s), c) in out.iter_mut().zip(sums).zip(counts) {
        if c > 0 {
            *o = s / c as f64;
        }
    }
    out
}

/// Dense + ReLU over the flattened pooled grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContactEncoder {
    pub grid: usize,
    pub dense: Dense,
}

impl ContactEncoder {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, grid: usize, out_dim: usize, rng: &mut R) -> Self {
        Self {
            grid,
            dense: Dense::new(store, "contact.dense", grid * grid, out_dim, rng),
        }
    }

    /// `pooled` is the `1 × grid²` output of [`pooled_grid`].
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, pooled: Var) -> Result<Var> {
        let y = self.dense.forward(tape, bound, pooled)?;
        Ok(tape.relu(y))
    }
}

/// Pools and encodes a map in one call.
pub fn encode_contact_map(tape: &mut Tape, bound: &Bound, encoder: &ContactEncoder, map: &ContactMap) -> Result<Var> {
    let g = encoder.grid;
    let pooled = tape.constant(&[1, g * g], pooled_grid(map, g))?;
    encoder.forward(tape, bound, pooled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn atom_line(serial: usize, name: &str, res: &str, seq: i32, xyz: [f64; 3]) -> String {
        format!(
            "ATOM  {serial:>5} {name:<4} {res:>3} A{seq:>4}    {:>8.3}{:>8.3}{:>8.3}  1.00  0.00           C",
            xyz[0], xyz[1], xyz[2]
        )
    }

    fn coords(points: &[[f64; 3]]) -> ResidueCoordinates {
        ResidueCoordinates {
            protein_id: "t".into(),
            points: points
                .iter()
                .enumerate()
                .map(|(i, &p)| ResiduePoint {
                    residue_index: i,
                    residue_number: i as i32 + 1,
                    residue_name: "ALA".into(),
                    position: p,
                    kind: AtomKind::CBeta,
                })
                .collect(),
            skipped: 0,
        }
    }

    #[test]
    fn two_residue_fixture_with_glycine_fallback() {
        let text = [
            atom_line(1, "N", "ALA", 1, [0.0, 0.0, 0.0]),
            atom_line(2, "CA", "ALA", 1, [1.0, 0.0, 0.0]),
            atom_line(3, "CB", "ALA", 1, [1.5, 1.0, 0.0]),
            atom_line(4, "N", "GLY", 2, [3.0, 0.0, 0.0]),
            atom_line(5, "CA", "GLY", 2, [4.0, 0.5, 0.0]),
        ]
        .join("\n");
        let c = parse_coordinates("t", &text).unwrap();
        assert_eq!(c.points.len(), 2);
        assert_eq!(c.points[0].kind, AtomKind::CBeta);
        assert_eq!(c.points[1].kind, AtomKind::CAlphaFallback);
        assert_eq!(c.points[0].position, [1.5, 1.0, 0.0]);
        let map = contact_from_coords(&c, 8.0);
        assert!(map.bits().iter().all(|&b| b));
    }

    #[test]
    fn residue_without_ca_or_cb_is_skipped() {
        let mut lines = Vec::new();
        for r in 1..=5 {
            lines.push(atom_line(r * 2, "N", "SER", r as i32, [r as f64, 0.0, 0.0]));
            if r != 3 {
                lines.push(atom_line(r * 2 + 1, "CA", "SER", r as i32, [r as f64, 1.0, 0.0]));
            }
        }
        let c = parse_coordinates("t", &lines.join("\n")).unwrap();
        assert_eq!(c.points.len(), 4);
        assert_eq!(c.skipped, 1);
        let idx: Vec<usize> = c.points.iter().map(|p| p.residue_index).collect();
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn coordinate_parse_errors() {
        assert_eq!(parse_coordinates("t", ""), Err(ContactError::NoAtomRecords));
        assert_eq!(parse_coordinates("t", "HEADER x\nEND\n"), Err(ContactError::NoAtomRecords));
        let short = "ATOM      1  CA  ALA A   1      1.000";
        assert!(matches!(parse_coordinates("t", short), Err(ContactError::MalformedAtomLine { line: 1, .. })));
        let bad = atom_line(1, "CA", "ALA", 1, [1.0, 2.0, 3.0]).replace("   2.000", "   x.000");
        assert!(matches!(parse_coordinates("t", &bad), Err(ContactError::MalformedAtomLine { .. })));
    }

    #[test]
    fn coordinate_threshold_is_strict() {
        let c = coords(&[[0.0, 0.0, 0.0], [7.9, 0.0, 0.0]]);
        assert!(contact_from_coords(&c, 8.0).get(0, 1));
        assert!(!contact_from_coords(&c, 7.9).get(0, 1));
    }

    #[test]
    fn probability_threshold_is_inclusive_and_symmetrized() {
        let m = |p01: f64, p10: f64| SquareMatrix::new(2, vec![1.0, p01, p10, 1.0]).unwrap();
        assert!(!contact_from_probabilities(&m(0.49, 0.0), 0.5).unwrap().get(0, 1));
        assert!(contact_from_probabilities(&m(0.5, 0.0), 0.5).unwrap().get(0, 1));
        let c = contact_from_probabilities(&m(0.9, 0.1), 0.5).unwrap();
        assert!(c.get(0, 1) && c.get(1, 0));
        assert!(matches!(
            contact_from_probabilities(&m(1.2, 0.0), 0.5),
            Err(ContactError::OutOfRange { row: 0, col: 1, .. })
        ));
    }

    #[test]
    fn distance_binarization() {
        let far = SquareMatrix::new(3, vec![0.0, 12.0, 12.0, 12.0, 0.0, 12.0, 12.0, 12.0, 0.0]).unwrap();
        let map = binarize_distances(&DistanceMatrix::new(far).unwrap(), 10.0);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(map.get(i, j), i == j);
            }
        }
        let near = SquareMatrix::new(2, vec![0.0, 9.99, 9.99, 0.0]).unwrap();
        assert!(binarize_distances(&DistanceMatrix::new(near).unwrap(), 10.0).get(0, 1));
        let asym = SquareMatrix::new(2, vec![0.0, 1.0, 2.0, 0.0]).unwrap();
        assert!(DistanceMatrix::new(asym).is_err());
    }

    #[test]
    fn matrix_text_roundtrip_and_errors() {
        let m = parse_matrix("2\n0 1\n1 0\n").unwrap();
        assert_eq!(m.values, vec![0.0, 1.0, 1.0, 0.0]);
        assert!(matches!(parse_matrix("2\n0 1\n1\n"), Err(ContactError::NotSquare(_))));
        assert!(matches!(parse_matrix("2\n0 1\n"), Err(ContactError::NotSquare(_))));
        assert!(matches!(parse_matrix("x\n"), Err(ContactError::MalformedMatrix { .. })));
        assert!(matches!(parse_matrix("1\nfoo\n"), Err(ContactError::MalformedMatrix { line: 2, .. })));
        let map = ContactMap::from_fn(3, |i, j| i + 1 == j);
        let back = parse_matrix(&map.to_text()).unwrap();
        let bits: Vec<bool> = back.values.iter().map(|&v| v == 1.0).collect();
        assert_eq!(ContactMap::new(3, bits).unwrap(), map);
    }

    #[test]
    fn contact_map_constructor_checks_invariants() {
        assert!(ContactMap::new(2, vec![true, false, false, true]).is_ok());
        assert!(ContactMap::new(2, vec![true, true, false, true]).is_err());
        assert!(ContactMap::new(2, vec![false, false, false, true]).is_err());
    }

    #[test]
    fn pooled_grid_cases() {
        let ones = ContactMap::from_fn(64, |_, _| true);
        assert!(pooled_grid(&ones, 32).iter().all(|&v| v == 1.0));
        let eye = ContactMap::from_fn(32, |_, _| false);
        let g = pooled_grid(&eye, 32);
        for i in 0..32 {
            for j in 0..32 {
                assert_eq!(g[i * 32 + j], if i == j { 1.0 } else { 0.0 });
            }
        }
        let small = ContactMap::from_fn(3, |_, _| true);
        let g = pooled_grid(&small, 4);
        assert_eq!(&g[..4], &[1.0, 1.0, 1.0, 0.0]);
        assert_eq!(&g[12..], &[0.0; 4]);
    }

    #[test]
    fn encoder_output_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let enc = ContactEncoder::new(&mut store, 32, 128, &mut rng);
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let map = ContactMap::from_fn(50, |i, j| i.abs_diff(j) < 4);
        let y = encode_contact_map(&mut tape, &bound, &enc, &map).unwrap();
        assert_eq!(tape.shape(y), &[1, 128]);
    }
}
