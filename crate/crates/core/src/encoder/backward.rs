use ndarray::{s, Array1, Array2, Axis, Zip};

use super::forward::{gelu, gelu_grad, CompiledPlan, ForwardCache};
use super::{EncoderConfig, ParameterSet, Scalar};

/// Gradient of `y = x * inv * scale` (row-wise RMS norm). Returns the
/// gradient w.r.t. `x` and accumulates into `d_scale`.
fn rms_norm_backward<T: Scalar>(
    x: &Array2<T>,
    inv: &Array1<T>,
    scale: &Array1<T>,
    dy: &Array2<T>,
    d_scale: &mut Array1<T>,
) -> Array2<T> {
    let d = T::from_usize(x.ncols()).unwrap();
    let mut dx = Array2::zeros(x.raw_dim());
    for (((xr, dyr), &r), mut dxr) in x.rows().into_iter().zip(dy.rows()).zip(inv).zip(dx.rows_mut()) {
        let mut dot = T::zero();
        for ((&xv, &dv), (ds, &g)) in xr.iter().zip(dyr).zip(d_scale.iter_mut().zip(scale)) {
            let xh = xv * r;
            *ds += dv * xh;
            dot += dv * g * xh;
        }
        let mean = dot / d;
        Zip::from(&mut dxr)
            .and(&xr)
            .and(&dyr)
            .and(scale)
            .for_each(|o, &xv, &dv, &g| {
                *o = r * (dv * g - xv * r * mean);
            });
    }
    dx
}

/// Backpropagates `d_out` (gradient w.r.t. the encoder output) through a
/// cached forward pass, accumulating parameter gradients into `grads`.
pub fn backward<T: Scalar>(
    cache: &ForwardCache<T>,
    plan: &CompiledPlan,
    params: &ParameterSet<T>,
    config: &EncoderConfig,
    d_out: &Array2<T>,
    grads: &mut ParameterSet<T>,
) {
    let n = cache.tokens.len();
    let dh = config.d_head;
    let scale = if config.attention_scaling {
        T::one() / T::from_usize(dh).unwrap().sqrt()
    } else {
        T::one()
    };

    let mut dx = match (&params.final_norm, &cache.inv_final, grads.final_norm.as_mut()) {
        (Some(g), Some(inv), Some(dg)) => rms_norm_backward(&cache.x_last, inv, g, d_out, dg),
        _ => d_out.clone(),
    };
    let mut d_bias: Vec<Array2<T>> = (0..config.num_heads).map(|_| Array2::zeros((n, n))).collect();

    for ((lc, layer), lg) in cache
        .layers
        .iter()
        .zip(&params.layers)
        .zip(grads.layers.iter_mut())
        .rev()
    {
        // Feed-forward branch.
        let mut d_ff = dx.clone();
        if let Some(m) = &lc.ff_drop {
            d_ff *= m;
        }
        lg.ff.wo += &lc.h_act.t().dot(&d_ff);
        let d_act = d_ff.dot(&layer.ff.wo.t());
        let dy2 = match (&lc.h_gate, &layer.ff.wi_gate, lg.ff.wi_gate.as_mut()) {
            (Some(gate_out), Some(w_gate), Some(dw_gate)) => {
                let d_pre = Zip::from(&d_act)
                    .and(gate_out)
                    .and(&lc.h_pre)
                    .map_collect(|&da, &g, &h| da * g * gelu_grad(h));
                let d_gate = Zip::from(&d_act).and(&lc.h_pre).map_collect(|&da, &h| da * gelu(h));
                lg.ff.wi += &lc.y2.t().dot(&d_pre);
                *dw_gate += &lc.y2.t().dot(&d_gate);
                d_pre.dot(&layer.ff.wi.t()) + d_gate.dot(&w_gate.t())
            }
            _ => {
                let d_pre = Zip::from(&d_act)
                    .and(&lc.h_pre)
                    .map_collect(|&da, &h| if h > T::zero() { da } else { T::zero() });
                lg.ff.wi += &lc.y2.t().dot(&d_pre);
                d_pre.dot(&layer.ff.wi.t())
            }
        };
        let d_mid = &dx + &rms_norm_backward(&lc.x_mid, &lc.inv2, &layer.ff_norm, &dy2, &mut lg.ff_norm);

        // Attention branch.
        let mut d_attn = d_mid.clone();
        if let Some(m) = &lc.attn_drop {
            d_attn *= m;
        }
        lg.o += &lc.ctx.t().dot(&d_attn);
        let d_ctx = d_attn.dot(&layer.o.t());
        let mut dq = Array2::zeros(lc.q.raw_dim());
        let mut dk = Array2::zeros(lc.k.raw_dim());
        let mut dv = Array2::zeros(lc.v.raw_dim());
        for (h, probs) in lc.probs.iter().enumerate() {
            let cols = s![.., h * dh..(h + 1) * dh];
            let d_ctx_h = d_ctx.slice(cols);
            let d_probs = d_ctx_h.dot(&lc.v.slice(cols).t());
            dv.slice_mut(cols).assign(&probs.t().dot(&d_ctx_h));
            let mut d_scores = d_probs;
            for (mut ds, p) in d_scores.rows_mut().into_iter().zip(probs.rows()) {
                let dot = ds.iter().zip(p).fold(T::zero(), |a, (&g, &pv)| a + g * pv);
                Zip::from(&mut ds).and(&p).for_each(|g, &pv| *g = pv * (*g - dot));
            }
            d_bias[h] += &d_scores;
            dq.slice_mut(cols).assign(&(d_scores.dot(&lc.k.slice(cols)) * scale));
            dk.slice_mut(cols)
                .assign(&(d_scores.t().dot(&lc.q.slice(cols)) * scale));
        }
        lg.q += &lc.y1.t().dot(&dq);
        lg.k += &lc.y1.t().dot(&dk);
        lg.v += &lc.y1.t().dot(&dv);
        let dy1 = dq.dot(&layer.q.t()) + dk.dot(&layer.k.t()) + dv.dot(&layer.v.t());
        dx = &d_mid + &rms_norm_backward(&lc.x, &lc.inv1, &layer.attn_norm, &dy1, &mut lg.attn_norm);
    }

    for i in 0..n {
        for j in 0..n {
            if let Some(b) = plan.bucket(i, j) {
                for (h, db) in d_bias.iter().enumerate() {
                    grads.rel_bias[[b, h]] += db[[i, j]];
                }
            }
        }
    }
    for (row, &tok) in dx.axis_iter(Axis(0)).zip(&cache.tokens) {
        let mut target = grads.embedding.row_mut(tok as usize);
        target += &row;
    }
}
