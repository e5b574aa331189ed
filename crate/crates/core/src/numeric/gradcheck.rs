use super::params::ParamStore;
use super::tape::{Bound, Tape, Var};
use super::tensor::{Scalar, Tensor};
use crate::error::Result;

/// Loss value plus its gradient for every parameter, in store order.
#[derive(Clone, Debug)]
pub struct Evaluation<T> {
    pub loss: T,
    pub grads: Vec<Tensor<T>>,
}

/// Runs `computation` on a fresh tape with `params` bound and
/// differentiates the scalar it returns.
pub fn evaluate_with_gradients<T, S, F>(params: &ParamStore<S>, computation: F) -> Result<Evaluation<T>>
where
    T: Scalar,
    S: Scalar,
    F: FnOnce(&mut Tape<T>, &Bound) -> Result<Var>,
{
    let mut tape = Tape::new();
    let bound = tape.bind(params);
    let loss = computation(&mut tape, &bound)?;
    let grads = tape.backward(loss)?;
    Ok(Evaluation {
        loss: tape.scalar_value(loss),
        grads: grads.for_params(&bound),
    })
}

#[derive(Clone, Debug)]
pub struct TensorCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
    pub elements_checked: usize,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.tensors
            .iter()
            .map(|t| t.max_rel_error)
            .fold(0.0, f64::max)
    }
}

/// Relative error with the denominator floored at `floor`, so gradients
/// that are numerically zero compare by absolute difference.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares reverse-mode gradients against central differences of step
/// `h` for every element of every tensor, in double precision.
pub fn gradient_check<F>(params: &ParamStore<f32>, h: f64, floor: f64, loss: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &Bound) -> Result<Var>,
{
    let mut shadow: ParamStore<f64> = params.cast();
    let analytic = evaluate_with_gradients::<f64, f64, _>(&shadow, &loss)?;
    let eval = |store: &ParamStore<f64>| -> Result<f64> {
        let mut tape = Tape::new();
        let bound = tape.bind(store);
        let out = loss(&mut tape, &bound)?;
        tape.check_finite()?;
        Ok(tape.scalar_value(out))
    };

    let mut tensors = Vec::new();
    let mut elements_checked = 0;
    let ids: Vec<_> = shadow.ids().collect();
    for id in ids {
        let mut check = TensorCheck {
            name: shadow.name(id).to_string(),
            max_rel_error: 0.0,
            max_abs_error: 0.0,
        };
        for i in 0..shadow.get(id).len() {
            let original = shadow.get(id).data()[i];
            shadow.get_mut(id).data_mut()[i] = original + h;
            let plus = eval(&shadow)?;
            shadow.get_mut(id).data_mut()[i] = original - h;
            let minus = eval(&shadow)?;
            shadow.get_mut(id).data_mut()[i] = original;

            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic.grads[id.0].data()[i];
            check.max_abs_error = check.max_abs_error.max((a - numeric).abs());
            check.max_rel_error = check.max_rel_error.max(relative_error(a, numeric, floor));
            elements_checked += 1;
        }
        tensors.push(check);
    }
    Ok(GradCheckReport {
        tensors,
        elements_checked,
    })
}

impl<T: Scalar> Evaluation<T> {
    pub fn grad_norm(&self) -> f64 {
        self.grads
            .iter()
            .flat_map(|g| g.data().iter())
            .map(|v| v.f64() * v.f64())
            .sum::<f64>()
            .sqrt()
    }
}
