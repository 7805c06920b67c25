//! Criterion benchmarks for the pgdta kernels live under `benches/`:
//! SMILES parsing, dense matmul, the drug encoder, contact maps and a full
//! baseline forward pass. Run them with `cargo bench -p pgdta-bench`.
