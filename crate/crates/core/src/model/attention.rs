//! Scaled dot-product attention with an optional key/value prefix.

use eae_autograd::{Graph, Mat, Var};
use ndarray::{concatenate, Array2, Axis};

use super::ModelError;

/// Large negative score used for masked positions.
pub const MASKED: f64 = -1e30;

pub struct Attended {
    /// Concatenated head outputs, same shape as the queries.
    pub output: Var,
    /// Per-head attention rows over `l + keys` positions, prefix first.
    pub weights: Vec<Var>,
}

/// Multi-head attention over `[K_p; keys]` and `[V_p; values]`.
///
/// Inputs are already projected (`n × d`). The prefix, when present, is a
/// pair of `l × d` matrices that every query may attend to: `mask` (shape
/// `queries × keys`, additive) covers only the non-prefix keys.
pub fn attend_with_prefix(
    g: &mut Graph,
    queries: Var,
    keys: Var,
    values: Var,
    prefix: Option<(Var, Var)>,
    mask: Option<&Mat>,
    heads: usize,
) -> Result<Attended, ModelError> {
    let (nq, d) = g.shape(queries);
    let (nk, dk) = g.shape(keys);
    let (nv, dv) = g.shape(values);
    if dk != d || dv != d {
        return Err(ModelError::ShapeMismatch(format!("query dim {d}, key dim {dk}, value dim {dv}")));
    }
    if nk != nv {
        return Err(ModelError::ShapeMismatch(format!("{nk} keys but {nv} values")));
    }
    if heads == 0 || d % heads != 0 {
        return Err(ModelError::ShapeMismatch(format!("dimension {d} not divisible by {heads} heads")));
    }
    if let Some(m) = mask {
        if m.dim() != (nq, nk) {
            return Err(ModelError::ShapeMismatch(format!("mask {:?}, scores ({nq}, {nk})", m.dim())));
        }
    }
    let (keys, values, l) = match prefix {
        None => (keys, values, 0),
        Some((pk, pv)) => {
            let (lk, ck) = g.shape(pk);
            let (lv, cv) = g.shape(pv);
            if lk != lv || ck != d || cv != d {
                return Err(ModelError::ShapeMismatch(format!(
                    "prefix K ({lk}, {ck}) and V ({lv}, {cv}) for model dimension {d}"
                )));
            }
            (g.concat_rows(&[pk, keys]), g.concat_rows(&[pv, values]), lk)
        }
    };
    let full_mask = mask.map(|m| {
        if l == 0 {
            m.clone()
        } else {
            concatenate(Axis(1), &[Array2::zeros((nq, l)).view(), m.view()]).expect("rows agree")
        }
    });
    let mask_var = full_mask.map(|m| g.constant(m));

    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut outs = Vec::with_capacity(heads);
    let mut weights = Vec::with_capacity(heads);
    for h in 0..heads {
        let (q, k, v) = if heads == 1 {
            (queries, keys, values)
        } else {
            (
                g.slice_cols(queries, h * dh, (h + 1) * dh),
                g.slice_cols(keys, h * dh, (h + 1) * dh),
                g.slice_cols(values, h * dh, (h + 1) * dh),
            )
        };
        let scores = g.matmul_nt(q, k);
        let mut scores = g.scale(scores, scale);
        if let Some(m) = mask_var {
            scores = g.add(scores, m);
        }
        let w = g.softmax(scores);
        outs.push(g.matmul(w, v));
        weights.push(w);
    }
    let output = if heads == 1 { outs[0] } else { g.concat_cols(&outs) };
    Ok(Attended { output, weights })
}

/// Additive mask blocking attention to later positions.
pub fn causal_mask(n: usize) -> Mat {
    Array2::from_shape_fn((n, n), |(i, j)| if j > i { MASKED } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use eae_autograd::ParamStore;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal, Uniform};

    fn random(rows: usize, cols: usize, seed: u64) -> Mat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, 1.0).unwrap();
        Array2::from_shape_fn((rows, cols), |_| n.sample(&mut rng))
    }

    #[test]
    fn no_prefix_matches_direct_formula() {
        let s = ParamStore::new();
        let mut g = Graph::new(&s);
        let (qm, km, vm) = (random(3, 4, 1), random(5, 4, 2), random(5, 4, 3));
        let (q, k, v) = (g.constant(qm.clone()), g.constant(km.clone()), g.constant(vm.clone()));
        let out = attend_with_prefix(&mut g, q, k, v, None, None, 1).unwrap();
        let mut scores = qm.dot(&km.t()) / 2.0;
        for mut row in scores.rows_mut() {
            let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            row.mapv_inplace(|x| (x - max).exp());
            let s = row.sum();
            row.mapv_inplace(|x| x / s);
        }
        let expected = scores.dot(&vm);
        let got = g.value(out.output);
        assert!((got - &expected).iter().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn saturated_zero_prefix_has_no_effect() {
        let s = ParamStore::new();
        let mut g = Graph::new(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pos = Uniform::new(0.1, 1.0).unwrap();
        let qm = Array2::from_shape_fn((4, 8), |_| pos.sample(&mut rng));
        let (q, k, v) = (g.constant(qm), g.constant(random(6, 8, 5)), g.constant(random(6, 8, 6)));
        let mask = causal_mask(4);
        let mask = concatenate(Axis(1), &[mask.view(), Array2::zeros((4, 2)).view()]).unwrap();
        let base = attend_with_prefix(&mut g, q, k, v, None, Some(&mask), 2).unwrap();
        let pk = g.constant(Array2::from_elem((3, 8), -1e4));
        let pv = g.constant(Array2::zeros((3, 8)));
        let with = attend_with_prefix(&mut g, q, k, v, Some((pk, pv)), Some(&mask), 2).unwrap();
        let diff = g.value(base.output) - g.value(with.output);
        assert!(diff.iter().all(|d| d.abs() < 1e-5));
    }

    #[test]
    fn rows_cover_prefix_and_sum_to_one() {
        let s = ParamStore::new();
        let mut g = Graph::new(&s);
        let (q, k, v) = (g.constant(random(10, 8, 7)), g.constant(random(10, 8, 8)), g.constant(random(10, 8, 9)));
        let pk = g.constant(random(40, 8, 10));
        let pv = g.constant(random(40, 8, 11));
        let mask = causal_mask(10);
        let out = attend_with_prefix(&mut g, q, k, v, Some((pk, pv)), Some(&mask), 2).unwrap();
        assert_eq!(g.shape(out.output), (10, 8));
        for w in &out.weights {
            let w = g.value(*w);
            assert_eq!(w.ncols(), 50);
            for row in w.rows() {
                assert!((row.sum() - 1.0).abs() < 1e-6);
                assert!(row.iter().take(40).all(|&p| p > 0.0), "prefix slots masked");
            }
        }
    }

    #[test]
    fn mismatched_prefix_is_rejected() {
        let s = ParamStore::new();
        let mut g = Graph::new(&s);
        let (q, k, v) = (g.constant(random(2, 4, 1)), g.constant(random(3, 4, 2)), g.constant(random(3, 4, 3)));
        let pk = g.constant(random(2, 4, 4));
        let pv = g.constant(random(3, 4, 5));
        assert!(matches!(
            attend_with_prefix(&mut g, q, k, v, Some((pk, pv)), None, 2),
            Err(ModelError::ShapeMismatch(_))
        ));
        let bad_v = g.constant(random(2, 4, 6));
        assert!(attend_with_prefix(&mut g, q, k, bad_v, None, None, 2).is_err());
        assert!(attend_with_prefix(&mut g, q, k, v, None, None, 3).is_err());
    }
}
