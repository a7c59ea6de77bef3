//! Central finite-difference oracle for network gradients. Independent of
//! the analytic backward pass: it only ever calls `forward` and the loss.

use cervifuse_core::nn::{cross_entropy_labels, softmax, Mode, Network};
use cervifuse_core::{Element, Tensor};

pub struct GradReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates skipped because the perturbation flipped a ReLU.
    pub kinks: usize,
}

pub fn loss_of<T: Element>(net: &mut Network<T>, x: &Tensor<T>, labels: &[usize], seed: u64) -> f64 {
    let logits = net.forward(x, Mode::Train, seed).unwrap();
    cross_entropy_labels(&softmax(&logits).unwrap(), labels).unwrap()
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn rel_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares `analytic` (one tensor per parameter, in `Network::params`
/// order) against central differences of the batch-mean cross-entropy.
pub fn check<T: Element>(
    net: &Network<T>,
    x: &Tensor<T>,
    labels: &[usize],
    seed: u64,
    analytic: &[Tensor<T>],
    h: f64,
    floor: f64,
) -> GradReport {
    let mut probe = net.clone();
    loss_of(&mut probe, x, labels, seed);
    let base_pattern = probe.relu_pattern().unwrap();

    let mut report = GradReport {
        max_rel_error: 0.0,
        checked: 0,
        kinks: 0,
    };
    let n_params = net.params().len();
    for p in 0..n_params {
        let len = net.params()[p].len();
        for k in 0..len {
            let mut plus = net.clone();
            let orig = plus.params()[p].data()[k];
            plus.params_mut()[p].data_mut()[k] = T::from_f64(orig.as_f64() + h);
            let lp = loss_of(&mut plus, x, labels, seed);
            let mut minus = net.clone();
            minus.params_mut()[p].data_mut()[k] = T::from_f64(orig.as_f64() - h);
            let lm = loss_of(&mut minus, x, labels, seed);
            if plus.relu_pattern().unwrap() != base_pattern
                || minus.relu_pattern().unwrap() != base_pattern
            {
                report.kinks += 1;
                continue;
            }
            // Use the perturbation actually representable in T.
            let step = plus.params()[p].data()[k].as_f64() - minus.params()[p].data()[k].as_f64();
            let numeric = (lp - lm) / step;
            let a = analytic[p].data()[k].as_f64();
            report.max_rel_error = report.max_rel_error.max(rel_error(a, numeric, floor));
            report.checked += 1;
        }
    }
    report
}

/// Central differences with respect to the network input.
pub fn check_input<T: Element>(
    net: &Network<T>,
    x: &Tensor<T>,
    labels: &[usize],
    seed: u64,
    analytic: &Tensor<T>,
    h: f64,
    floor: f64,
) -> GradReport {
    let mut probe = net.clone();
    loss_of(&mut probe, x, labels, seed);
    let base_pattern = probe.relu_pattern().unwrap();
    let mut report = GradReport {
        max_rel_error: 0.0,
        checked: 0,
        kinks: 0,
    };
    for k in 0..x.len() {
        let orig = x.data()[k].as_f64();
        let mut xp = x.clone();
        xp.data_mut()[k] = T::from_f64(orig + h);
        let mut xm = x.clone();
        xm.data_mut()[k] = T::from_f64(orig - h);
        let mut np = net.clone();
        let lp = loss_of(&mut np, &xp, labels, seed);
        let mut nm = net.clone();
        let lm = loss_of(&mut nm, &xm, labels, seed);
        if np.relu_pattern().unwrap() != base_pattern || nm.relu_pattern().unwrap() != base_pattern {
            report.kinks += 1;
            continue;
        }
        let step = xp.data()[k].as_f64() - xm.data()[k].as_f64();
        let numeric = (lp - lm) / step;
        let a = analytic.data()[k].as_f64();
        report.max_rel_error = report.max_rel_error.max(rel_error(a, numeric, floor));
        report.checked += 1;
    }
    report
}
