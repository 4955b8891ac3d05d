//! Central finite-difference gradient checking.

use crate::autodiff::graph::{Graph, NodeId};
use crate::autodiff::params::{ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Denominator floor for relative errors, so coordinates whose true
/// gradient is essentially zero are judged on absolute error instead.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

/// Relative discrepancy `|a - n| / max(|a|, |n|, REL_ERROR_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// A single parameter coordinate: which tensor and which flat index.
pub type Coordinate = (ParamId, usize);

/// Every coordinate of every parameter.
pub fn all_coordinates(store: &ParamStore) -> Vec<Coordinate> {
    store
        .ids()
        .flat_map(|id| (0..store.value(id).len()).map(move |k| (id, k)))
        .collect()
}

/// `count` coordinates drawn uniformly without replacement, always including
/// at least one coordinate from each parameter when `count` allows it.
pub fn sample_coordinates(store: &ParamStore, count: usize, rng: &mut Rng) -> Vec<Coordinate> {
    let mut picked: Vec<Coordinate> = Vec::new();
    if count >= store.len() {
        for id in store.ids() {
            picked.push((id, rng::index_below(rng, store.value(id).len())));
        }
    }
    let mut pool: Vec<Coordinate> = all_coordinates(store)
        .into_iter()
        .filter(|c| !picked.contains(c))
        .collect();
    rng::shuffle(rng, &mut pool);
    let remaining = count.saturating_sub(picked.len());
    picked.extend(pool.into_iter().take(remaining));
    picked
}

/// Compares analytic gradients against central differences with step `h`
/// for the given coordinates and returns the worst relative error.
///
/// `loss` builds a fresh graph from the current parameter values and returns
/// the scalar loss node; it must be deterministic.
pub fn gradient_check<F>(
    store: &mut ParamStore,
    mut loss: F,
    coords: &[Coordinate],
    h: f64,
) -> Result<f64>
where
    F: FnMut(&ParamStore) -> Result<(Graph, NodeId)>,
{
    if h <= 0.0 {
        return Err(Error::Usage(
            "finite-difference step must be positive".into(),
        ));
    }
    store.zero_grad();
    let (mut graph, out) = loss(store)?;
    graph.backward(out)?;
    store.accumulate_grads(&graph);
    let mut worst = 0.0_f64;
    for &(id, k) in coords {
        let analytic = store.grad(id).data()[k];
        let original = store.value(id).data()[k];
        store.value_mut(id).data_mut()[k] = original + h;
        let (g_plus, n_plus) = loss(store)?;
        let plus = g_plus.value(n_plus).item();
        store.value_mut(id).data_mut()[k] = original - h;
        let (g_minus, n_minus) = loss(store)?;
        let minus = g_minus.value(n_minus).item();
        store.value_mut(id).data_mut()[k] = original;
        let numeric = (plus - minus) / (2.0 * h);
        worst = worst.max(relative_error(analytic, numeric));
    }
    store.zero_grad();
    Ok(worst)
}
