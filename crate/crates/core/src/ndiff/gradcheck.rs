//! Central finite-difference gradient checking.

use super::param::ParamStore;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Denominator floor for the relative error, so entries whose true gradient is
/// ~0 are compared absolutely.
pub const REL_ERR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// (input or parameter index, flat entry) of the worst entry.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

impl GradCheckReport {
    fn empty() -> Self {
        Self {
            max_rel_err: 0.0,
            worst: (0, 0),
            analytic: 0.0,
            numeric: 0.0,
            checked: 0,
        }
    }

    fn record(&mut self, slot: (usize, usize), analytic: f64, numeric: f64) {
        let err = relative_error(analytic, numeric);
        self.checked += 1;
        if err > self.max_rel_err || self.checked == 1 {
            self.max_rel_err = err;
            self.worst = slot;
            self.analytic = analytic;
            self.numeric = numeric;
        }
    }
}

fn scalar_of(tape: &Tape, root: Var) -> Result<f64> {
    let v = tape.value(root);
    if v.len() != 1 {
        return Err(Error::Contract("gradient check needs a scalar output".into()));
    }
    Ok(v.item())
}

/// Checks the gradient of `f` with respect to each input tensor.
pub fn check_inputs<F>(inputs: &[Tensor], h: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.leaf(t.clone())).collect();
        let root = f(&mut tape, &vars)?;
        scalar_of(&tape, root)
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let root = f(&mut tape, &vars)?;
    let grads = tape.backward(root)?;

    let mut report = GradCheckReport::empty();
    let mut work = inputs.to_vec();
    for (i, var) in vars.iter().enumerate() {
        let analytic = grads
            .wrt(*var)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; inputs[i].len()]);
        for k in 0..inputs[i].len() {
            let orig = inputs[i].data()[k];
            work[i].data_mut()[k] = orig + h;
            let plus = eval(&work)?;
            work[i].data_mut()[k] = orig - h;
            let minus = eval(&work)?;
            work[i].data_mut()[k] = orig;
            report.record((i, k), analytic[k], (plus - minus) / (2.0 * h));
        }
    }
    Ok(report)
}

/// Checks the gradient of `f` with respect to every entry of every parameter.
/// `f` must be a deterministic function of the store's values.
pub fn check_params<F>(store: &mut ParamStore, h: f64, mut f: F) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape, &ParamStore) -> Result<Var>,
{
    store.zero_grad();
    let mut tape = Tape::new();
    let root = f(&mut tape, store)?;
    tape.backward_params(root, store)?;
    let analytic: Vec<Vec<f64>> = store.iter().map(|p| p.grad.data().to_vec()).collect();

    let mut report = GradCheckReport::empty();
    for (pi, grad) in analytic.iter().enumerate() {
        for k in 0..grad.len() {
            let id = super::param::ParamId(pi);
            let orig = store.get(id).value.data()[k];
            store.get_mut(id).value.data_mut()[k] = orig + h;
            let mut tape = Tape::new();
            let root = f(&mut tape, store)?;
            let plus = scalar_of(&tape, root)?;
            store.get_mut(id).value.data_mut()[k] = orig - h;
            let mut tape = Tape::new();
            let root = f(&mut tape, store)?;
            let minus = scalar_of(&tape, root)?;
            store.get_mut(id).value.data_mut()[k] = orig;
            report.record((pi, k), grad[k], (plus - minus) / (2.0 * h));
        }
    }
    Ok(report)
}
