use alloc::string::String;

use super::{Grads, ParamStore};

/// Worst agreement between analytic and central-difference gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub checked: usize,
    /// Entries whose stencil crossed a ReLU boundary and were re-probed with a smaller step.
    pub kink_retries: usize,
}

/// Compares `eval` against central differences over every scalar of every
/// parameter. `eval` returns the loss, its gradient and the tape signature.
/// Relative error is `|a − n| / max(|a|, |n|, floor)`; the floor keeps
/// near-zero entries from dominating through rounding noise. When either side
/// of the stencil lands in a different ReLU region, the entry is re-probed
/// with steps shrunk by 10 until both sides agree (down to `h · 1e-4`).
pub fn check_gradients<F>(store: &ParamStore, h: f64, floor: f64, mut eval: F) -> GradCheck
where
    F: FnMut(&ParamStore) -> (f64, Grads, u64),
{
    let (_, analytic, base) = eval(store);
    let mut probe = store.clone();
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        checked: 0,
        kink_retries: 0,
    };
    for id in store.ids() {
        for k in 0..store.get(id).data().len() {
            let original = store.get(id).data()[k];
            let mut step = h;
            let numeric = loop {
                probe.get_mut(id).data_mut()[k] = original + step;
                let (plus, _, sp) = eval(&probe);
                probe.get_mut(id).data_mut()[k] = original - step;
                let (minus, _, sm) = eval(&probe);
                probe.get_mut(id).data_mut()[k] = original;
                if (sp == base && sm == base) || step < h * 1e-4 {
                    break (plus - minus) / (2.0 * step);
                }
                if step == h {
                    report.kink_retries += 1;
                }
                step /= 10.0;
            };
            let a = analytic.get(id)[k];
            let rel = libm::fabs(a - numeric) / libm::fabs(a).max(libm::fabs(numeric)).max(floor);
            report.checked += 1;
            if rel > report.max_rel_error || rel.is_nan() {
                report.max_rel_error = rel;
                report.worst_param = String::from(store.name(id));
                report.worst_index = k;
            }
        }
    }
    report
}
