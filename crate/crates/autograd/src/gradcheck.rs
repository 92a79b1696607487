//! Central finite differences, for checking tape gradients.

use ndarray::Array2;

use crate::params::{ParamId, ParamStore};
use crate::Mat;

/// Central-difference gradient of `f` with respect to every entry of
/// parameter `id`.
pub fn numeric_gradient(
    store: &ParamStore,
    id: ParamId,
    eps: f64,
    f: impl Fn(&ParamStore) -> f64,
) -> Mat {
    let shape = store.get(id).dim();
    let positions: Vec<_> = (0..shape.0).flat_map(|r| (0..shape.1).map(move |c| (r, c))).collect();
    let values = numeric_gradient_at(store, id, eps, &positions, f);
    let mut out = Array2::zeros(shape);
    for (pos, v) in positions.into_iter().zip(values) {
        out[pos] = v;
    }
    out
}

/// Central-difference derivative of `f` at selected entries of `id`.
pub fn numeric_gradient_at(
    store: &ParamStore,
    id: ParamId,
    eps: f64,
    positions: &[(usize, usize)],
    f: impl Fn(&ParamStore) -> f64,
) -> Vec<f64> {
    let mut work = store.clone();
    positions
        .iter()
        .map(|&pos| {
            let orig = work.get(id)[pos];
            work.get_mut(id)[pos] = orig + eps;
            let plus = f(&work);
            work.get_mut(id)[pos] = orig - eps;
            let minus = f(&work);
            work.get_mut(id)[pos] = orig;
            (plus - minus) / (2.0 * eps)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|, 1e-6)`. The floor keeps entries whose true
/// derivative is essentially zero from dominating through rounding noise.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

pub fn max_relative_error(analytic: &Mat, numeric: &Mat) -> f64 {
    assert_eq!(analytic.dim(), numeric.dim());
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(a, n)| relative_error(*a, *n))
        .fold(0.0, f64::max)
}
