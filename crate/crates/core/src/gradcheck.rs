//! Central finite-difference checks of analytic gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::{mse_loss, Model, ModelInput, Result};
use crate::params::ParamStore;
use crate::tensor::{Tape, Var};

/// Relative error with a floor on the denominator, so that gradients that
/// are both near zero compare by absolute difference.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorReport {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorReport>,
}

impl GradCheckReport {
    pub fn checked(&self) -> usize {
        self.tensors.iter().map(|t| t.checked).sum()
    }

    pub fn max_rel_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&TensorReport> {
        self.tensors.iter().max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

/// Checks every scalar of every tensor in `store`. `loss` must build a
/// scalar on the tape from the bound parameters.
pub fn check_store<E>(
    store: &mut ParamStore,
    eps: f64,
    mut loss: impl FnMut(&ParamStore, &mut Tape, &crate::params::Bound) -> std::result::Result<Var, E>,
) -> std::result::Result<GradCheckReport, E> {
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape);
    let out = loss(store, &mut tape, &bound)?;
    tape.backward(out).expect("loss must be a scalar");
    let analytic: Vec<Vec<f64>> = bound
        .vars()
        .iter()
        .zip(store.tensors())
        .map(|(&v, t)| tape.grad(v).map_or_else(|| vec![0.0; t.numel()], <[f64]>::to_vec))
        .collect();
    let mut eval = |store: &ParamStore| -> std::result::Result<f64, E> {
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let out = loss(store, &mut tape, &bound)?;
        Ok(tape.data(out)[0])
    };
    let mut report = GradCheckReport::default();
    for ti in 0..store.len() {
        let mut worst: f64 = 0.0;
        let n = store.tensors()[ti].numel();
        for k in 0..n {
            let orig = store.tensors()[ti].data()[k];
            store.tensors_mut()[ti].data_mut()[k] = orig + eps;
            let plus = eval(store)?;
            store.tensors_mut()[ti].data_mut()[k] = orig - eps;
            let minus = eval(store)?;
            store.tensors_mut()[ti].data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            worst = worst.max(relative_error(analytic[ti][k], numeric));
        }
        report.tensors.push(TensorReport {
            name: store.names()[ti].clone(),
            checked: n,
            max_rel_error: worst,
        });
    }
    Ok(report)
}

/// Gradient check of `mse_loss` over a whole model. With `dropout_seed`,
/// every evaluation reuses the same dropout masks.
pub fn check_model(
    model: &mut Model,
    inputs: &[&ModelInput],
    targets: &[f64],
    eps: f64,
    dropout_seed: Option<u64>,
) -> Result<GradCheckReport> {
    let skeleton = model.clone();
    check_store(model.params_mut(), eps, |_, tape, bound| {
        let mut rng = dropout_seed.map(ChaCha8Rng::seed_from_u64);
        let pred = skeleton.forward_batch(tape, bound, inputs, rng.as_mut().map(|r| r as _))?;
        mse_loss(tape, pred, targets)
    })
}
