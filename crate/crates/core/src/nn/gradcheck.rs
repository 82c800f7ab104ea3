//! Central finite-difference checks of the analytic gradients. Only forward
//! passes are used on the numerical side.

use super::{Gradients, Network, Tensor};

/// Summary of one comparison.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Elements skipped because the perturbation crossed a ReLU or max-pool
    /// kink (the difference quotient moves with the step), where no
    /// derivative exists.
    pub skipped_kinks: usize,
    pub max_rel_error: f64,
    pub failures: usize,
}

impl GradCheckReport {
    fn merge(&mut self, other: GradCheckReport) {
        self.checked += other.checked;
        self.skipped_kinks += other.skipped_kinks;
        self.max_rel_error = self.max_rel_error.max(other.max_rel_error);
        self.failures += other.failures;
    }

    pub fn passed(&self) -> bool {
        self.failures == 0 && self.checked > 0
    }
}

/// Relative error with a floor on the denominator for near-zero gradients.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares one analytic derivative with central differences of `f`, the
/// loss as a function of an offset on the probed element.
fn compare(analytic: f64, f: impl Fn(f64) -> f64, step: f64, tol: f64, report: &mut GradCheckReport) {
    let (plus, minus) = (f(step), f(-step));
    let numeric = (plus - minus) / (2.0 * step);
    let e = rel_error(analytic, numeric);
    if e > tol && is_kink(&f, step, plus, minus) {
        report.skipped_kinks += 1;
        return;
    }
    report.checked += 1;
    report.max_rel_error = report.max_rel_error.max(e);
    if e > tol {
        report.failures += 1;
    }
}

/// On a smooth stretch the gap between the one-sided slopes shrinks in
/// proportion to the step and the central difference moves only by O(h²).
/// A kink inside the probe breaks one of the two.
fn is_kink(f: &impl Fn(f64) -> f64, step: f64, plus: f64, minus: f64) -> bool {
    let base = f(0.0);
    let half = step / 2.0;
    let (hp, hm) = (f(half), f(-half));
    let gap_full = (plus - base) / step - (base - minus) / step;
    let gap_half = (hp - base) / half - (base - hm) / half;
    let central_full = (plus - minus) / (2.0 * step);
    let central_half = (hp - hm) / (2.0 * half);
    let scale = central_full.abs().max(central_half.abs()).max(1e-6);
    let jump = gap_half.abs() > 0.75 * gap_full.abs() && gap_full.abs() > 1e-3 * scale;
    let drift = (central_full - central_half).abs() > 2.5e-4 * scale;
    jump || drift
}

/// Checks every parameter and every input element of `net` on the softmax
/// cross-entropy loss at (`x`, `label`).
pub fn check_network(net: &Network, x: &Tensor, label: usize, step: f64, tol: f64) -> GradCheckReport {
    let mut grads: Gradients = net.zero_grads();
    let (logits, trace) = net.forward_train(x).expect("forward");
    let probs = super::ops::softmax(logits.data());
    let g = super::ops::softmax_cross_entropy_backward(&probs, label);
    let dx = net.backward_with_input(&trace, g, &mut grads);
    let loss = |n: &Network, t: &Tensor| n.loss(t, label).expect("loss").0;

    let mut report = GradCheckReport::default();
    let probe_net = std::cell::RefCell::new(net.clone());
    for b in 0..grads.blocks.len() {
        for j in 0..grads.blocks[b].len() {
            let orig = net.blocks()[b][j];
            let f = |h: f64| {
                let mut n = probe_net.borrow_mut();
                n.blocks_mut()[b][j] = orig + h;
                let l = loss(&n, x);
                n.blocks_mut()[b][j] = orig;
                l
            };
            compare(grads.blocks[b][j], f, step, tol, &mut report);
        }
    }
    let xp = std::cell::RefCell::new(x.clone());
    let mut input_report = GradCheckReport::default();
    for j in 0..x.len() {
        let orig = x.data()[j];
        let f = |h: f64| {
            let mut t = xp.borrow_mut();
            t.data_mut()[j] = orig + h;
            let l = loss(net, &t);
            t.data_mut()[j] = orig;
            l
        };
        compare(dx[j], f, step, tol, &mut input_report);
    }
    report.merge(input_report);
    report
}
