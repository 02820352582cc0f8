//! Central finite-difference gradient checking.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, NodeId};
use super::tensor::ParamStore;

/// How many coordinates of one parameter to probe.
#[derive(Debug, Clone, Copy)]
pub enum CoordSampling {
    All,
    /// At most this many coordinates, sampled without replacement from
    /// a seeded generator.
    AtMost(usize),
}

/// Chooses a sampling mode per parameter. A plain [`CoordSampling`]
/// applies uniformly; a custom policy can, for instance, sample only
/// the embedding matrices while checking everything else in full.
pub trait SamplingPolicy {
    fn for_param(&self, name: &str, numel: usize) -> CoordSampling;
}

impl SamplingPolicy for CoordSampling {
    fn for_param(&self, _name: &str, _numel: usize) -> CoordSampling {
        *self
    }
}

impl<F: Fn(&str, usize) -> CoordSampling> SamplingPolicy for F {
    fn for_param(&self, name: &str, numel: usize) -> CoordSampling {
        self(name, numel)
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_param: String,
    pub worst_coord: usize,
    pub coords_checked: usize,
}

/// Relative error between an analytic and a numeric derivative:
/// `|a - n| / max(1, |a|, |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1.0f64.max(analytic.abs()).max(numeric.abs())
}

/// Checks every parameter gradient of `build` against central finite
/// differences with step `eps`.
///
/// `build` must be deterministic: it is re-run many times at perturbed
/// parameter values and twice at the base point (a differing base loss
/// is reported as a panic, since the comparison would be meaningless).
pub fn grad_check<F, P>(
    store: &mut ParamStore,
    build: F,
    eps: f64,
    sampling: P,
    seed: u64,
) -> GradCheckReport
where
    F: Fn(&mut Graph, &ParamStore) -> NodeId,
    P: SamplingPolicy,
{
    assert!(eps > 0.0, "eps must be positive");

    let eval = |store: &ParamStore| -> f64 {
        let mut g = Graph::new();
        let loss = build(&mut g, store);
        g.scalar(loss)
    };

    let base = eval(store);
    let base2 = eval(store);
    assert!(
        base.to_bits() == base2.to_bits(),
        "loss closure is not deterministic: {base} vs {base2}; seed any randomness inside it"
    );

    store.zero_grads();
    {
        let mut g = Graph::new();
        let loss = build(&mut g, store);
        g.backward(loss, store);
    }
    let analytic: Vec<Vec<f64>> = store
        .ids()
        .map(|id| store.get(id).grad().unwrap().to_vec())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_param: String::new(),
        worst_coord: 0,
        coords_checked: 0,
    };

    for id in store.ids().collect::<Vec<_>>() {
        let n = store.get(id).numel();
        let coords: Vec<usize> = match sampling.for_param(store.name(id), n) {
            CoordSampling::All => (0..n).collect(),
            CoordSampling::AtMost(limit) if n <= limit => (0..n).collect(),
            CoordSampling::AtMost(limit) => {
                // Sample distinct coordinates.
                let mut picked = std::collections::BTreeSet::new();
                while picked.len() < limit {
                    picked.insert(rng.gen_range(0..n));
                }
                picked.into_iter().collect()
            }
        };
        for c in coords {
            let orig = store.get(id).values()[c];
            store.get_mut(id).values_mut()[c] = orig + eps;
            let plus = eval(store);
            store.get_mut(id).values_mut()[c] = orig - eps;
            let minus = eval(store);
            store.get_mut(id).values_mut()[c] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            let err = relative_error(analytic[id.index()][c], numeric);
            report.coords_checked += 1;
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst_param = store.name(id).to_string();
                report.worst_coord = c;
            }
        }
    }
    report
}
