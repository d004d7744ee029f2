//! Central finite differences against the reverse sweep, in f64.

use crate::tape::{Graph, Shape, Var};

/// Records a scalar-or-field function of the given inputs.
pub type Build<'a> = dyn Fn(&mut Graph<f64>, &[Var]) -> Var + 'a;

/// Reduces non-scalar outputs with a fixed pseudo-random weighting so every
/// output component contributes to the checked scalar.
fn loss_of(inputs: &[(Shape, Vec<f64>)], f: &Build) -> (Graph<f64>, Vec<Var>, Var) {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|(s, v)| g.param(*s, v.clone())).collect();
    let out = f(&mut g, &vars);
    let n = g.value(out).len();
    let loss = if n == 1 {
        out
    } else {
        let w: Vec<f64> = (0..n).map(|i| ((i * 7919 % 1013) as f64 / 506.5) - 1.0).collect();
        g.dot(out, &w)
    };
    (g, vars, loss)
}

/// Largest relative error `|a − n| / max(|a|, |n|, 1e-3)` between analytic
/// and central-difference gradients (step `h`) over every input component,
/// or an evenly spaced subset of at most `max_per_input` per input.
pub fn max_relative_error(inputs: &[(Shape, Vec<f64>)], h: f64, max_per_input: usize, f: &Build) -> f64 {
    let (g, vars, loss) = loss_of(inputs, f);
    let grads = g.backward(loss);
    let mut worst = 0.0f64;
    for (i, (_, values)) in inputs.iter().enumerate() {
        let analytic = grads.get_or_zeros(vars[i], values.len());
        let stride = values.len().div_ceil(max_per_input.max(1)).max(1);
        for j in (0..values.len()).step_by(stride) {
            let eval = |delta: f64| {
                let mut perturbed = inputs.to_vec();
                perturbed[i].1[j] += delta;
                let (g, _, l) = loss_of(&perturbed, f);
                g.scalar(l)
            };
            let numeric = (eval(h) - eval(-h)) / (2.0 * h);
            let a = analytic[j];
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3));
        }
    }
    worst
}
