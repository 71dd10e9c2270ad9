//! Central finite-difference checks of tape gradients.

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::tensor::{Scalar, Tensor};

/// Relative error floor: entries whose analytic and numeric gradients are
/// both below this magnitude are compared in absolute terms.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct GroupReport {
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
}

#[derive(Clone, Debug)]
pub struct GradcheckReport {
    pub groups: Vec<GroupReport>,
    pub threshold: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.groups.iter().all(|g| g.max_rel_error < self.threshold)
    }

    pub fn failures(&self) -> impl Iterator<Item = &GroupReport> {
        self.groups.iter().filter(|g| g.max_rel_error >= self.threshold)
    }

    pub fn worst(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max)
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    relative_error_floor(analytic, numeric, REL_FLOOR)
}

fn relative_error_floor(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(floor);
    (analytic - numeric).abs() / denom
}

/// Absolute floor for gradients computed in `T`: [`REL_FLOOR`], raised to
/// 1000 ulps of one where `T` rounds coarser than that.
pub fn floor_for<T: Scalar>() -> f64 {
    REL_FLOOR.max(1e3 * T::epsilon().f64())
}

/// Compare the tape gradient of `loss_fn` with central differences for each
/// named group of parameters.
///
/// `loss_fn` receives a fresh tape and one leaf per parameter tensor (in the
/// order given) and must return a scalar loss. At most `max_entries` entries
/// per tensor are probed, spread evenly across it.
pub fn check<T, F>(
    params: &[(String, Tensor<T>)],
    mut loss_fn: F,
    step: f64,
    max_entries: usize,
    threshold: f64,
) -> Result<GradcheckReport>
where
    T: Scalar,
    F: FnMut(&mut Tape<T>, &[Var]) -> Result<Var>,
{
    let analytic = tape_gradient(params, &mut loss_fn)?;
    let values: Vec<Tensor<T>> = params.iter().map(|(_, t)| t.clone()).collect();
    compare(params, &analytic, values, |t, v| loss_fn(t, v), step, max_entries, threshold)
}

/// Like [`check`], but the central differences are taken on `reference`, a
/// second evaluation of the same loss in precision `U` fed the parameters
/// cast to `U`. Lets a low-precision gradient be judged against differences
/// that are not dominated by rounding.
pub fn check_with_reference<T, U, F, G>(
    params: &[(String, Tensor<T>)],
    mut loss_fn: F,
    reference: G,
    step: f64,
    max_entries: usize,
    threshold: f64,
) -> Result<GradcheckReport>
where
    T: Scalar,
    U: Scalar,
    F: FnMut(&mut Tape<T>, &[Var]) -> Result<Var>,
    G: FnMut(&mut Tape<U>, &[Var]) -> Result<Var>,
{
    let analytic = tape_gradient(params, &mut loss_fn)?;
    let values: Vec<Tensor<U>> = params.iter().map(|(_, t)| t.cast()).collect();
    compare(params, &analytic, values, reference, step, max_entries, threshold)
}

fn tape_gradient<T, F>(params: &[(String, Tensor<T>)], loss_fn: &mut F) -> Result<Vec<Tensor<T>>>
where
    T: Scalar,
    F: FnMut(&mut Tape<T>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|(_, v)| tape.param(v.clone())).collect();
    let loss = loss_fn(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    Ok(vars.iter().map(|&v| grads.get(v).cloned().unwrap()).collect())
}

fn compare<T, U, G>(
    params: &[(String, Tensor<T>)],
    analytic: &[Tensor<T>],
    values: Vec<Tensor<U>>,
    mut loss_fn: G,
    step: f64,
    max_entries: usize,
    threshold: f64,
) -> Result<GradcheckReport>
where
    T: Scalar,
    U: Scalar,
    G: FnMut(&mut Tape<U>, &[Var]) -> Result<Var>,
{
    let mut eval = |vals: &[Tensor<U>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|v| tape.param(v.clone())).collect();
        let loss = loss_fn(&mut tape, &vars)?;
        Ok(tape.value(loss).item().f64())
    };

    let floor = floor_for::<T>();
    let mut groups: Vec<GroupReport> = Vec::new();
    let mut work = values;
    for (pi, (name, value)) in params.iter().enumerate() {
        let len = value.len();
        let stride = (len / max_entries.max(1)).max(1);
        let mut worst = 0.0f64;
        let mut checked = 0;
        for idx in (0..len).step_by(stride).take(max_entries) {
            let orig = work[pi].data()[idx];
            work[pi].data_mut()[idx] = U::of(orig.f64() + step);
            let plus = eval(&work)?;
            work[pi].data_mut()[idx] = U::of(orig.f64() - step);
            let minus = eval(&work)?;
            work[pi].data_mut()[idx] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic[pi].data()[idx].f64();
            worst = worst.max(relative_error_floor(a, numeric, floor));
            checked += 1;
        }
        match groups.iter_mut().find(|g| &g.name == name) {
            Some(g) => {
                g.max_rel_error = g.max_rel_error.max(worst);
                g.checked += checked;
            }
            None => groups.push(GroupReport {
                name: name.clone(),
                max_rel_error: worst,
                checked,
            }),
        }
    }
    Ok(GradcheckReport { groups, threshold })
}
