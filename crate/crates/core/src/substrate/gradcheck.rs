//! Central-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::{Grads, ParamId, ParamSet};

/// Entries above this count are checked on a random sample of this size.
pub const FULL_CHECK_LIMIT: usize = 10_000;

/// Denominator floor for the relative error, so entries whose true gradient
/// is (numerically) zero are judged on absolute error instead.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub checked: usize,
    /// `(parameter name, flat index, analytic, numeric)` of the worst entry.
    pub worst: Option<(String, usize, f64, f64)>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares `loss_and_grad`'s analytic gradient with central differences
/// `(f(θ+ε) − f(θ−ε)) / 2ε` for every trainable entry (or a seeded random
/// sample of [`FULL_CHECK_LIMIT`] entries when there are more).
///
/// `loss_and_grad` must be a deterministic scalar function of the params.
pub fn finite_difference_check<F>(
    params: &ParamSet,
    loss_and_grad: F,
    epsilon: f64,
) -> GradCheckReport
where
    F: Fn(&ParamSet) -> (f64, Grads),
{
    let (_, grads) = loss_and_grad(params);
    let mut entries: Vec<(ParamId, usize)> = params
        .iter()
        .filter(|(_, _, t)| t.trainable)
        .flat_map(|(id, _, t)| (0..t.len()).map(move |k| (id, k)))
        .collect();
    if entries.len() > FULL_CHECK_LIMIT {
        let mut rng = ChaCha8Rng::seed_from_u64(0x6772_6164);
        let mut picked: Vec<usize> = sample(&mut rng, entries.len(), FULL_CHECK_LIMIT).into_vec();
        picked.sort_unstable();
        entries = picked.into_iter().map(|i| entries[i]).collect();
    }

    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        checked: entries.len(),
        worst: None,
    };
    for (id, k) in entries {
        let orig = work.get(id).data[k];
        work.get_mut(id).data[k] = orig + epsilon;
        let plus = loss_and_grad(&work).0;
        work.get_mut(id).data[k] = orig - epsilon;
        let minus = loss_and_grad(&work).0;
        work.get_mut(id).data[k] = orig;

        let numeric = (plus - minus) / (2.0 * epsilon);
        let analytic = grads.value(id, k);
        let rel = relative_error(analytic, numeric);
        report.max_abs_error = report.max_abs_error.max((analytic - numeric).abs());
        if rel > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(rel);
            report.worst = Some((params.name(id).to_string(), k, analytic, numeric));
        }
    }
    report
}
