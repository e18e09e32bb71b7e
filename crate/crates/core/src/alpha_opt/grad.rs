//! Reverse-mode differentiation of the bound pipeline with respect to α.
//!
//! The forward computation is the recorded [`Evaluation`]: one lower and one
//! upper pass per recomputed hidden layer plus the output pass. Sign
//! selections (which relaxation line a coefficient picks, which box corner
//! concretizes it) and the stable/unstable classification are constants of
//! the forward pass. The sweep runs over hidden layers from the top down, so
//! by the time a layer's bounds are differentiated every later consumer has
//! already contributed to their adjoints.

use ndarray::Array2;

use crate::lirpa::{Evaluation, LayerRelax, NeuronKind, Pass};
use crate::model::{InputBox, Network};

/// Adjoints of the relaxation parameters of every hidden layer.
pub(crate) struct Adjoints {
    pub alpha: Vec<Vec<f64>>,
    pub a_up: Vec<Vec<f64>>,
    pub b_up: Vec<Vec<f64>>,
}

impl Adjoints {
    fn zeros(net: &Network) -> Self {
        let z: Vec<Vec<f64>> = (0..net.num_hidden())
            .map(|i| vec![0.0; net.hidden_dim(i)])
            .collect();
        Self {
            alpha: z.clone(),
            a_up: z.clone(),
            b_up: z,
        }
    }
}

/// Accumulates `Σ_r gbar[r] · ∂pass.bound[r]` into `adj`.
pub(crate) fn reverse_pass(
    net: &Network,
    pass: &Pass,
    relax: &[LayerRelax],
    bx: &InputBox,
    gbar: &[f64],
    adj: &mut Adjoints,
) {
    let rows = gbar.len();
    let active_rows: Vec<usize> = (0..rows).filter(|&r| gbar[r] != 0.0).collect();
    if active_rows.is_empty() {
        return;
    }
    let dir = pass.dir;
    let x_dim = bx.dim();
    let mut mbar = Array2::<f64>::zeros((rows, x_dim));
    for &r in &active_rows {
        for d in 0..x_dim {
            let m = pass.coefs[0][[r, d]];
            mbar[[r, d]] = gbar[r] * dir.extreme(m, bx.lower[d], bx.upper[d]);
        }
    }
    for k in 0..pass.target {
        let layer = net.layer(k);
        let lr = &relax[k];
        let coefs = &pass.coefs[k + 1];
        let mut next = Array2::<f64>::zeros((rows, layer.out_dim()));
        for &r in &active_rows {
            let mrow = mbar.row(r);
            for j in 0..layer.out_dim() {
                let kind = lr.kind[j];
                if kind == NeuronKind::Inactive {
                    continue;
                }
                let lam_bar = mrow.dot(&layer.weight.row(j)) + gbar[r] * layer.bias[j];
                let m = coefs[[r, j]];
                next[[r, j]] = match kind {
                    NeuronKind::Inactive => unreachable!(),
                    NeuronKind::Active => lam_bar,
                    NeuronKind::Unstable => {
                        let line = &lr.lines[j];
                        if dir.picks_lower(m) {
                            adj.alpha[k][j] += lam_bar * m;
                            lam_bar * line.a_low
                        } else {
                            adj.a_up[k][j] += lam_bar * m;
                            adj.b_up[k][j] += gbar[r] * m;
                            lam_bar * line.a_up + gbar[r] * line.b_up
                        }
                    }
                };
            }
        }
        mbar = next;
    }
}

/// Gradient of the output lower bound with respect to every (dense) α entry.
pub(crate) fn lower_bound_gradient(net: &Network, ev: &Evaluation, bx: &InputBox) -> Vec<Vec<f64>> {
    let mut adj = Adjoints::zeros(net);
    let out = ev.output.as_ref().expect("output pass recorded");
    reverse_pass(net, out, &ev.relax, bx, &[1.0], &mut adj);
    for k in (0..net.num_hidden()).rev() {
        let Some((lo, up)) = &ev.layer_passes[k] else {
            continue;
        };
        let width = net.hidden_dim(k);
        let mut gl = vec![0.0; width];
        let mut gu = vec![0.0; width];
        let mut any = false;
        for j in 0..width {
            if ev.relax[k].kind[j] != NeuronKind::Unstable {
                continue;
            }
            let (da, db) = (adj.a_up[k][j], adj.b_up[k][j]);
            if da == 0.0 && db == 0.0 {
                continue;
            }
            let l = ev.ibounds.lower[k][j];
            let u = ev.ibounds.upper[k][j];
            let w2 = (u - l) * (u - l);
            if ev.from_pass[k].0[j] {
                gl[j] = (da * u - db * u * u) / w2;
                any = true;
            }
            if ev.from_pass[k].1[j] {
                gu[j] = (-da * l + db * l * l) / w2;
                any = true;
            }
        }
        if any {
            reverse_pass(net, lo, &ev.relax, bx, &gl, &mut adj);
            reverse_pass(net, up, &ev.relax, bx, &gu, &mut adj);
        }
    }
    adj.alpha
}
