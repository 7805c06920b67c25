//! SMILES parsing into molecular graphs, ring perception and atom features.
//!
//! Supported grammar: organic-subset atoms (`B C N O P S F Cl Br I`),
//! aromatic lowercase atoms (`b c n o p s`), bracket atoms with isotope,
//! chirality, hydrogen count, charge and atom class over any element,
//! bonds `- = # :` plus the directional `/ \` (accepted, treated as
//! single), branches, and ring closures `0-9` / `%nn`. Chirality and bond
//! direction are parsed and discarded. Aromaticity comes from lowercase
//! notation only.

mod elements;
mod features;

pub use elements::{atomic_number, FEATURE_SYMBOLS, SYMBOLS};
pub use features::{featurize_atoms, AtomFeatureVector, ATOM_FEATURE_DIM};

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum SmilesErrorKind {
    #[error("EmptyInput")]
    EmptyInput,
    #[error("UnbalancedParentheses")]
    UnbalancedParentheses,
    #[error("UnmatchedRingClosure")]
    UnmatchedRingClosure,
    #[error("UnknownElement")]
    UnknownElement,
    #[error("MalformedBracketAtom")]
    MalformedBracketAtom,
    #[error("DisconnectedMolecule")]
    DisconnectedMolecule,
    #[error("UnexpectedCharacter")]
    UnexpectedCharacter,
    #[error("DanglingBond")]
    DanglingBond,
    #[error("DuplicateBond")]
    DuplicateBond,
    #[error("AromaticOutsideRing")]
    AromaticOutsideRing,
    #[error("NonAscii")]
    NonAscii,
}

/// A parse failure with the byte offset (into the trimmed input) where it
/// was detected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("{kind} at offset {offset}")]
pub struct SmilesError {
    pub kind: SmilesErrorKind,
    pub offset: usize,
}

impl SmilesError {
    fn new(kind: SmilesErrorKind, offset: usize) -> Self {
        Self { kind, offset }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Contribution to an atom's valence; aromatic bonds count as one and
    /// the aromatic atom itself carries the extra electron.
    fn valence(self) -> u32 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }
}

impl fmt::Display for BondOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BondOrder::Single => "single",
            BondOrder::Double => "double",
            BondOrder::Triple => "triple",
            BondOrder::Aromatic => "aromatic",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Atom {
    pub element: String,
    pub atomic_number: u8,
    pub formal_charge: i8,
    pub aromatic: bool,
    pub explicit_h: u8,
    pub implicit_h: u8,
    pub ring_member: bool,
    pub bracket: bool,
}

impl Atom {
    pub fn total_h(&self) -> u8 {
        self.explicit_h + self.implicit_h
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
    pub ring_member: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MolecularGraph {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    adjacency: Vec<bool>,
}

impl MolecularGraph {
    /// Builds a graph from atoms and bonds. Bonds are normalized so that
    /// `a < b`.
    pub fn new(atoms: Vec<Atom>, mut bonds: Vec<Bond>) -> Self {
        let n = atoms.len();
        let mut adjacency = vec![false; n * n];
        for bond in &mut bonds {
            if bond.a > bond.b {
                std::mem::swap(&mut bond.a, &mut bond.b);
            }
            adjacency[bond.a * n + bond.b] = true;
            adjacency[bond.b * n + bond.a] = true;
        }
        Self {
            atoms,
            bonds,
            adjacency,
        }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn bond_count(&self) -> usize {
        self.bonds.len()
    }

    pub fn aromatic_atom_count(&self) -> usize {
        self.atoms.iter().filter(|a| a.aromatic).count()
    }

    /// Row-major `N × N` adjacency.
    pub fn adjacency(&self) -> &[bool] {
        &self.adjacency
    }

    pub fn is_bonded(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.atoms.len() + j]
    }

    pub fn degree(&self, i: usize) -> usize {
        let n = self.atoms.len();
        self.adjacency[i * n..(i + 1) * n].iter().filter(|&&b| b).count()
    }

    /// Relabels atoms so that old atom `i` becomes new atom `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.atoms.len(), "permutation length");
        let mut atoms = self.atoms.clone();
        for (old, atom) in self.atoms.iter().enumerate() {
            atoms[perm[old]] = atom.clone();
        }
        let bonds = self
            .bonds
            .iter()
            .map(|b| Bond {
                a: perm[b.a],
                b: perm[b.b],
                ..b.clone()
            })
            .collect();
        Self::new(atoms, bonds)
    }
}

#[derive(Debug, Clone, Copy)]
enum BondSymbol {
    Single,
    Double,
    Triple,
    Aromatic,
    Directional,
}

#[derive(Debug, Clone, Copy)]
struct RingOpen {
    atom: usize,
    bond: Option<BondSymbol>,
    offset: usize,
}

struct Parser<'a> {
    text: &'a [u8],
    pos: usize,
    atoms: Vec<Atom>,
    atom_offsets: Vec<usize>,
    edges: Vec<(usize, usize, Option<BondSymbol>, usize)>,
    rings: BTreeMap<u32, RingOpen>,
    branches: Vec<(usize, usize)>,
    previous: Option<usize>,
    pending_bond: Option<(BondSymbol, usize)>,
}

impl<'a> Parser<'a> {
    fn err(&self, kind: SmilesErrorKind) -> SmilesError {
        SmilesError::new(kind, self.pos)
    }

    fn peek(&self) -> Option<u8> {
        self.text.get(self.pos).copied()
    }

    fn run(mut self) -> Result<MolecularGraph, SmilesError> {
        while let Some(c) = self.peek() {
            match c {
                b'(' => {
                    let Some(prev) = self.previous else {
                        return Err(self.err(SmilesErrorKind::UnbalancedParentheses));
                    };
                    if self.pending_bond.is_some() {
                        return Err(self.err(SmilesErrorKind::DanglingBond));
                    }
                    if self.text.get(self.pos + 1) == Some(&b')') {
                        return Err(self.err(SmilesErrorKind::UnexpectedCharacter));
                    }
                    self.branches.push((prev, self.pos));
                    self.pos += 1;
                }
                b')' => {
                    let Some((atom, _)) = self.branches.pop() else {
                        return Err(self.err(SmilesErrorKind::UnbalancedParentheses));
                    };
                    if self.pending_bond.is_some() {
                        return Err(self.err(SmilesErrorKind::DanglingBond));
                    }
                    self.previous = Some(atom);
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' | b'/' | b'\\' => {
                    if self.pending_bond.is_some() || self.previous.is_none() {
                        return Err(self.err(SmilesErrorKind::DanglingBond));
                    }
                    let sym = match c {
                        b'-' => BondSymbol::Single,
                        b'=' => BondSymbol::Double,
                        b'#' => BondSymbol::Triple,
                        b':' => BondSymbol::Aromatic,
                        _ => BondSymbol::Directional,
                    };
                    self.pending_bond = Some((sym, self.pos));
                    self.pos += 1;
                }
                b'0'..=b'9' | b'%' => self.ring_closure()?,
                b'.' => return Err(self.err(SmilesErrorKind::DisconnectedMolecule)),
                b'[' => {
                    let start = self.pos;
                    let atom = self.bracket_atom()?;
                    self.add_atom(atom, start);
                }
                _ => {
                    let start = self.pos;
                    let atom = self.organic_atom()?;
                    self.add_atom(atom, start);
                }
            }
        }
        if let Some((_, offset)) = self.pending_bond {
            return Err(SmilesError::new(SmilesErrorKind::DanglingBond, offset));
        }
        if let Some(&(_, offset)) = self.branches.last() {
            return Err(SmilesError::new(SmilesErrorKind::UnbalancedParentheses, offset));
        }
        if let Some(open) = self.rings.values().next() {
            return Err(SmilesError::new(SmilesErrorKind::UnmatchedRingClosure, open.offset));
        }
        self.finish()
    }

    fn add_atom(&mut self, atom: Atom, offset: usize) {
        let idx = self.atoms.len();
        self.atoms.push(atom);
        self.atom_offsets.push(offset);
        if let Some(prev) = self.previous {
            let bond = self.pending_bond.take().map(|(b, _)| b);
            self.edges.push((prev, idx, bond, offset));
        }
        self.previous = Some(idx);
    }

    fn ring_closure(&mut self) -> Result<(), SmilesError> {
        let start = self.pos;
        let label = if self.peek() == Some(b'%') {
            let digits = self.text.get(self.pos + 1..self.pos + 3);
            match digits {
                Some(d) if d.iter().all(u8::is_ascii_digit) => {
                    self.pos += 3;
                    u32::from(d[0] - b'0') * 10 + u32::from(d[1] - b'0')
                }
                _ => return Err(self.err(SmilesErrorKind::UnexpectedCharacter)),
            }
        } else {
            let d = self.text[self.pos] - b'0';
            self.pos += 1;
            u32::from(d)
        };
        let Some(atom) = self.previous else {
            return Err(SmilesError::new(SmilesErrorKind::UnexpectedCharacter, start));
        };
        let bond = self.pending_bond.take().map(|(b, _)| b);
        match self.rings.remove(&label) {
            None => {
                self.rings.insert(
                    label,
                    RingOpen {
                        atom,
                        bond,
                        offset: start,
                    },
                );
            }
            Some(open) => {
                if open.atom == atom {
                    return Err(SmilesError::new(SmilesErrorKind::DuplicateBond, start));
                }
                let bond = match (open.bond, bond) {
                    (Some(a), Some(b)) if std::mem::discriminant(&a) != std::mem::discriminant(&b) => {
                        let directional = matches!(a, BondSymbol::Directional) || matches!(b, BondSymbol::Directional);
                        if !directional {
                            return Err(SmilesError::new(SmilesErrorKind::UnmatchedRingClosure, start));
                        }
                        if matches!(a, BondSymbol::Directional) { Some(b) } else { Some(a) }
                    }
                    (a, b) => a.or(b),
                };
                self.edges.push((open.atom, atom, bond, start));
            }
        }
        Ok(())
    }

    fn organic_atom(&mut self) -> Result<Atom, SmilesError> {
        let start = self.pos;
        let c = self.text[self.pos];
        let next = self.text.get(self.pos + 1).copied();
        let (symbol, aromatic, width) = match (c, next) {
            (b'C', Some(b'l')) => ("Cl", false, 2),
            (b'B', Some(b'r')) => ("Br", false, 2),
            (b'B', _) => ("B", false, 1),
            (b'C', _) => ("C", false, 1),
            (b'N', _) => ("N", false, 1),
            (b'O', _) => ("O", false, 1),
            (b'P', _) => ("P", false, 1),
            (b'S', _) => ("S", false, 1),
            (b'F', _) => ("F", false, 1),
            (b'I', _) => ("I", false, 1),
            (b'b', _) => ("B", true, 1),
            (b'c', _) => ("C", true, 1),
            (b'n', _) => ("N", true, 1),
            (b'o', _) => ("O", true, 1),
            (b'p', _) => ("P", true, 1),
            (b's', _) => ("S", true, 1),
            (c, _) if c.is_ascii_alphabetic() || c == b'*' => {
                return Err(SmilesError::new(SmilesErrorKind::UnknownElement, start))
            }
            _ => return Err(SmilesError::new(SmilesErrorKind::UnexpectedCharacter, start)),
        };
        self.pos += width;
        Ok(Atom {
            element: symbol.to_string(),
            atomic_number: atomic_number(symbol).expect("organic subset symbol"),
            formal_charge: 0,
            aromatic,
            explicit_h: 0,
            implicit_h: 0,
            ring_member: false,
            bracket: false,
        })
    }

    fn bracket_atom(&mut self) -> Result<Atom, SmilesError> {
        let start = self.pos;
        let close = self.text[start..]
            .iter()
            .position(|&c| c == b']')
            .map(|p| start + p)
            .ok_or_else(|| SmilesError::new(SmilesErrorKind::MalformedBracketAtom, start))?;
        let body = &self.text[start + 1..close];
        let atom = parse_bracket_body(body).map_err(|(kind, rel)| SmilesError::new(kind, start + 1 + rel))?;
        self.pos = close + 1;
        Ok(atom)
    }

    fn finish(self) -> Result<MolecularGraph, SmilesError> {
        let Parser {
            atoms,
            atom_offsets,
            edges,
            ..
        } = self;
        let n = atoms.len();
        let mut seen = vec![false; n * n];
        let mut bonds = Vec::with_capacity(edges.len());
        for (a, b, sym, offset) in edges {
            if seen[a * n + b] {
                return Err(SmilesError::new(SmilesErrorKind::DuplicateBond, offset));
            }
            seen[a * n + b] = true;
            seen[b * n + a] = true;
            let both_aromatic = atoms[a].aromatic && atoms[b].aromatic;
            let order = match sym {
                Some(BondSymbol::Double) => BondOrder::Double,
                Some(BondSymbol::Triple) => BondOrder::Triple,
                Some(BondSymbol::Single) | Some(BondSymbol::Directional) => BondOrder::Single,
                Some(BondSymbol::Aromatic) | None if both_aromatic => BondOrder::Aromatic,
                Some(BondSymbol::Aromatic) | None => BondOrder::Single,
            };
            bonds.push(Bond {
                a,
                b,
                order,
                ring_member: false,
            });
        }
        let mut graph = perceive_rings(MolecularGraph::new(atoms, bonds));
        // Aromatic notation between atoms that share no ring is a single bond.
        for bond in &mut graph.bonds {
            if bond.order == BondOrder::Aromatic && !bond.ring_member {
                bond.order = BondOrder::Single;
            }
        }
        if let Some(idx) = graph.atoms.iter().position(|a| a.aromatic && !a.ring_member) {
            return Err(SmilesError::new(SmilesErrorKind::AromaticOutsideRing, atom_offsets[idx]));
        }
        assign_implicit_hydrogens(&mut graph);
        Ok(graph)
    }
}

/// Parses the text between `[` and `]`. Errors carry an offset relative to
/// the start of the body.
fn parse_bracket_body(body: &[u8]) -> Result<Atom, (SmilesErrorKind, usize)> {
    use SmilesErrorKind::{MalformedBracketAtom, UnknownElement};
    let mut i = 0;
    while i < body.len() && body[i].is_ascii_digit() {
        i += 1;
    }
    let sym_start = i;
    if i >= body.len() || !body[i].is_ascii_alphabetic() {
        return Err((MalformedBracketAtom, i));
    }
    let (element, aromatic) = if body[i].is_ascii_lowercase() {
        let two = body.get(i..i + 2);
        match two {
            Some(b"se") | Some(b"as") | Some(b"te") => {
                i += 2;
                let s = std::str::from_utf8(&body[sym_start..i]).unwrap();
                let mut cap = s.to_string();
                cap[..1].make_ascii_uppercase();
                (cap, true)
            }
            _ => {
                let c = body[i];
                i += 1;
                match c {
                    b'b' | b'c' | b'n' | b'o' | b'p' | b's' => ((c.to_ascii_uppercase() as char).to_string(), true),
                    _ => return Err((UnknownElement, sym_start)),
                }
            }
        }
    } else {
        let mut end = i + 1;
        if end < body.len() && body[end].is_ascii_lowercase() {
            let candidate = std::str::from_utf8(&body[i..end + 1]).unwrap();
            if atomic_number(candidate).is_some() {
                end += 1;
            }
        }
        let s = std::str::from_utf8(&body[i..end]).unwrap().to_string();
        i = end;
        (s, false)
    };
    let Some(z) = atomic_number(&element) else {
        return Err((UnknownElement, sym_start));
    };
    // chirality: @, @@, or @ followed by a class tag such as TH1, AL2, SP3, TB10, OH25
    if i < body.len() && body[i] == b'@' {
        i += 1;
        if i < body.len() && body[i] == b'@' {
            i += 1;
        } else if body.len() >= i + 2 && matches!(&body[i..i + 2], b"TH" | b"AL" | b"SP" | b"TB" | b"OH") {
            i += 2;
            while i < body.len() && body[i].is_ascii_digit() {
                i += 1;
            }
        }
    }
    let mut explicit_h = 0u8;
    if i < body.len() && body[i] == b'H' {
        i += 1;
        explicit_h = 1;
        if i < body.len() && body[i].is_ascii_digit() {
            explicit_h = body[i] - b'0';
            i += 1;
        }
    }
    let mut charge: i32 = 0;
    if i < body.len() && (body[i] == b'+' || body[i] == b'-') {
        let sign = if body[i] == b'+' { 1 } else { -1 };
        let c = body[i];
        i += 1;
        let mut magnitude = 1;
        if i < body.len() && body[i].is_ascii_digit() {
            let s = i;
            while i < body.len() && body[i].is_ascii_digit() {
                i += 1;
            }
            magnitude = std::str::from_utf8(&body[s..i]).unwrap().parse::<i32>().map_err(|_| (MalformedBracketAtom, s))?;
        } else {
            while i < body.len() && body[i] == c {
                magnitude += 1;
                i += 1;
            }
        }
        charge = sign * magnitude;
        if charge.abs() > 15 {
            return Err((MalformedBracketAtom, i));
        }
    }
    if i < body.len() && body[i] == b':' {
        i += 1;
        let s = i;
        while i < body.len() && body[i].is_ascii_digit() {
            i += 1;
        }
        if s == i {
            return Err((MalformedBracketAtom, i));
        }
    }
    if i != body.len() {
        return Err((MalformedBracketAtom, i));
    }
    Ok(Atom {
        element,
        atomic_number: z,
        formal_charge: charge as i8,
        aromatic,
        explicit_h,
        implicit_h: 0,
        ring_member: false,
        bracket: true,
    })
}

/// Parses a SMILES string into a molecular graph.
pub fn parse_smiles(text: &str) -> Result<MolecularGraph, SmilesError> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(SmilesError::new(SmilesErrorKind::EmptyInput, 0));
    }
    if let Some(pos) = trimmed.bytes().position(|b| !b.is_ascii()) {
        return Err(SmilesError::new(SmilesErrorKind::NonAscii, pos));
    }
    Parser {
        text: trimmed.as_bytes(),
        pos: 0,
        atoms: Vec::new(),
        atom_offsets: Vec::new(),
        edges: Vec::new(),
        rings: BTreeMap::new(),
        branches: Vec::new(),
        previous: None,
        pending_bond: None,
    }
    .run()
}

/// Marks every atom and bond lying on a cycle. A bond is a ring bond iff it
/// is not a bridge; an atom is a ring atom iff it touches a ring bond.
pub fn perceive_rings(mut graph: MolecularGraph) -> MolecularGraph {
    let n = graph.atoms.len();
    let mut neighbors: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (k, b) in graph.bonds.iter().enumerate() {
        neighbors[b.a].push((b.b, k));
        neighbors[b.b].push((b.a, k));
    }
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut is_bridge = vec![false; graph.bonds.len()];
    let mut timer = 0;
    for root in 0..n {
        if disc[root] != usize::MAX {
            continue;
        }
        // iterative DFS: (vertex, bond used to reach it, next neighbor index)
        let mut stack: Vec<(usize, Option<usize>, usize)> = vec![(root, None, 0)];
        disc[root] = timer;
        low[root] = timer;
        timer += 1;
        while let Some(frame) = stack.last_mut() {
            let (v, via, next) = *frame;
            if next < neighbors[v].len() {
                frame.2 += 1;
                let (w, k) = neighbors[v][next];
                if Some(k) == via {
                    continue;
                }
                if disc[w] == usize::MAX {
                    disc[w] = timer;
                    low[w] = timer;
                    timer += 1;
                    stack.push((w, Some(k), 0));
                } else {
                    low[v] = low[v].min(disc[w]);
                }
            } else {
                stack.pop();
                if let (Some(&(parent, _, _)), Some(k)) = (stack.last(), via) {
                    low[parent] = low[parent].min(low[v]);
                    if low[v] > disc[parent] {
                        is_bridge[k] = true;
                    }
                }
            }
        }
    }
    for atom in &mut graph.atoms {
        atom.ring_member = false;
    }
    for (bond, bridge) in graph.bonds.iter_mut().zip(is_bridge) {
        bond.ring_member = !bridge;
        if bond.ring_member {
            graph.atoms[bond.a].ring_member = true;
            graph.atoms[bond.b].ring_member = true;
        }
    }
    graph
}

/// Standard valence rules for organic-subset atoms; bracket atoms keep
/// their explicit count and get no implicit hydrogens.
fn assign_implicit_hydrogens(graph: &mut MolecularGraph) {
    let mut bond_sum = vec![0u32; graph.atoms.len()];
    for b in &graph.bonds {
        bond_sum[b.a] += b.order.valence();
        bond_sum[b.b] += b.order.valence();
    }
    for (atom, sum) in graph.atoms.iter_mut().zip(bond_sum) {
        if atom.bracket {
            atom.implicit_h = 0;
            continue;
        }
        let valences = elements::default_valences(atom.atomic_number);
        atom.implicit_h = if atom.aromatic {
            // one valence unit is taken by the aromatic pi system
            let v = u32::from(valences.first().copied().unwrap_or(0));
            v.saturating_sub(sum + 1) as u8
        } else {
            valences
                .iter()
                .map(|&v| u32::from(v))
                .find(|&v| v >= sum)
                .map_or(0, |v| (v - sum) as u8)
        };
    }
}
