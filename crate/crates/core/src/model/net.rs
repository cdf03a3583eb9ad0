//! Forward and backward passes, written by hand for the fixed
//! architecture so the gradient check can pin them against finite
//! differences.

use ndarray::{s, Array1, Array2};

use super::{piece_rows, ModelParams, PackedInput, Scalar};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, CounterRng};

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044715;

/// Dropout on (training) or off (inference / gradient checks).
#[derive(Debug, Clone, Copy)]
pub enum RunMode {
    Eval,
    Train { dropout_seed: u64 },
}

struct LnCache<F> {
    xhat: Array2<F>,
    rstd: Array1<F>,
    out: Array2<F>,
}

struct LayerCache<F> {
    ln1: LnCache<F>,
    q: Array2<F>,
    k: Array2<F>,
    v: Array2<F>,
    probs: Vec<Array2<F>>,
    ctx: Array2<F>,
    drop_attn: Option<Array2<F>>,
    ln2: LnCache<F>,
    u: Array2<F>,
    act: Array2<F>,
    drop_ffn: Option<Array2<F>>,
}

/// Activations captured during `forward`, consumed by `backward`.
pub struct ForwardPass<F> {
    /// One row per source token, `label_count` columns.
    pub detection_logits: Array2<F>,
    /// One row per piece position (start-of-piece and piece tokens, in
    /// slot order); row t scores the token after position t.
    pub lm_logits: Array2<F>,
    /// Packed-row index behind each `lm_logits` row.
    pub piece_rows: Vec<usize>,
    layers: Vec<LayerCache<F>>,
    lnf: LnCache<F>,
    det_u: Array2<F>,
    det_act: Array2<F>,
}

fn gelu<F: Scalar>(x: F) -> F {
    let c = F::from_f64(GELU_C);
    let a = F::from_f64(GELU_A);
    let half = F::from_f64(0.5);
    let s = c * (x + a * x * x * x);
    half * x * (F::one() + s.tanh())
}

fn gelu_prime<F: Scalar>(x: F) -> F {
    let c = F::from_f64(GELU_C);
    let a = F::from_f64(GELU_A);
    let half = F::from_f64(0.5);
    let three = F::from_f64(3.0);
    let s = c * (x + a * x * x * x);
    let t = s.tanh();
    half * (F::one() + t) + half * x * (F::one() - t * t) * c * (F::one() + three * a * x * x)
}

fn layer_norm<F: Scalar>(x: &Array2<F>, g: &Array1<F>, b: &Array1<F>) -> LnCache<F> {
    let d = F::from_f64(x.ncols() as f64);
    let eps = F::from_f64(LN_EPS);
    let mut xhat = x.clone();
    let mut rstd = Array1::zeros(x.nrows());
    for (mut row, r) in xhat.rows_mut().into_iter().zip(rstd.iter_mut()) {
        let mean = row.sum() / d;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|&v| v * v).sum::<F>() / d;
        *r = F::one() / (var + eps).sqrt();
        let rs = *r;
        row.mapv_inplace(|v| v * rs);
    }
    let mut out = xhat.clone();
    for mut row in out.rows_mut() {
        row.zip_mut_with(g, |v, &gg| *v = *v * gg);
        row.zip_mut_with(b, |v, &bb| *v = *v + bb);
    }
    LnCache { xhat, rstd, out }
}

/// Returns dx; accumulates dg and db.
fn layer_norm_backward<F: Scalar>(
    dy: &Array2<F>,
    cache: &LnCache<F>,
    g: &Array1<F>,
    dg: &mut Array1<F>,
    db: &mut Array1<F>,
) -> Array2<F> {
    let d = F::from_f64(dy.ncols() as f64);
    for (dy_row, xhat_row) in dy.rows().into_iter().zip(cache.xhat.rows()) {
        for ((dg_i, db_i), (&dy_i, &xh_i)) in
            dg.iter_mut().zip(db.iter_mut()).zip(dy_row.iter().zip(xhat_row.iter()))
        {
            *dg_i += dy_i * xh_i;
            *db_i += dy_i;
        }
    }
    let mut dx = Array2::zeros(dy.raw_dim());
    for ((dy_row, xhat_row), (mut dx_row, &rstd)) in dy
        .rows()
        .into_iter()
        .zip(cache.xhat.rows())
        .zip(dx.rows_mut().into_iter().zip(cache.rstd.iter()))
    {
        let mut mean_dxhat = F::zero();
        let mut mean_dxhat_xhat = F::zero();
        for ((&dy_i, &xh_i), &g_i) in dy_row.iter().zip(xhat_row.iter()).zip(g.iter()) {
            let dxhat = dy_i * g_i;
            mean_dxhat += dxhat;
            mean_dxhat_xhat += dxhat * xh_i;
        }
        mean_dxhat /= d;
        mean_dxhat_xhat /= d;
        for ((dx_i, (&dy_i, &xh_i)), &g_i) in dx_row
            .iter_mut()
            .zip(dy_row.iter().zip(xhat_row.iter()))
            .zip(g.iter())
        {
            let dxhat = dy_i * g_i;
            *dx_i = rstd * (dxhat - mean_dxhat - xh_i * mean_dxhat_xhat);
        }
    }
    dx
}

fn add_bias<F: Scalar>(x: &mut Array2<F>, b: &Array1<F>) {
    for mut row in x.rows_mut() {
        row.zip_mut_with(b, |v, &bb| *v = *v + bb);
    }
}

fn bias_grad<F: Scalar>(dy: &Array2<F>, db: &mut Array1<F>) {
    for row in dy.rows() {
        db.zip_mut_with(&row, |d, &v| *d = *d + v);
    }
}

fn dropout_mask<F: Scalar>(shape: (usize, usize), p: f64, rng: &mut CounterRng) -> Array2<F> {
    let keep = 1.0 - p;
    let scale = F::from_f64(1.0 / keep);
    Array2::from_shape_fn(shape, |_| {
        if rng.next_f64() < keep {
            scale
        } else {
            F::zero()
        }
    })
}

/// Run the network over a packed input. Detection logits depend only on
/// source rows; token logits cover every piece row. Deterministic in
/// [`RunMode::Eval`].
pub fn forward<F: Scalar>(
    params: &ModelParams<F>,
    input: &PackedInput,
    mode: RunMode,
) -> Result<ForwardPass<F>> {
    let cfg = &params.config;
    let total = input.len();
    let d = cfg.d_model;
    let heads = cfg.n_heads;
    let dk = d / heads;
    let scale = F::from_f64(1.0 / (dk as f64).sqrt());
    let neg_inf = F::neg_infinity();

    let mut x = Array2::zeros((total, d));
    for (t, mut row) in x.rows_mut().into_iter().enumerate() {
        let id = input.ids[t] as usize;
        if id >= cfg.vocab_size {
            return Err(Error::TokenIdOutOfRange(input.ids[t], cfg.vocab_size));
        }
        if input.positions[t] >= cfg.max_positions || input.blocks[t] >= cfg.max_block_positions {
            return Err(Error::SequenceTooLong {
                got: input.positions[t].max(input.blocks[t]),
                max: cfg.max_positions,
            });
        }
        let tok = params.tok_emb.row(id);
        let pos = params.pos_emb.row(input.positions[t]);
        let blk = params.block_emb.row(input.blocks[t]);
        for (i, v) in row.iter_mut().enumerate() {
            *v = tok[i] + pos[i] + blk[i];
        }
    }
    let mut drop_rng = match mode {
        RunMode::Train { dropout_seed } if cfg.dropout > 0.0 => {
            Some(CounterRng::new(derive_seed(dropout_seed, 0)))
        }
        _ => None,
    };

    let mut layers = Vec::with_capacity(cfg.n_layers);
    for layer in &params.layers {
        let ln1 = layer_norm(&x, &layer.ln1_g, &layer.ln1_b);

        let mut q = ln1.out.dot(&layer.wq);
        add_bias(&mut q, &layer.bq);
        let mut k = ln1.out.dot(&layer.wk);
        add_bias(&mut k, &layer.bk);
        let mut v = ln1.out.dot(&layer.wv);
        add_bias(&mut v, &layer.bv);

        let mut ctx = Array2::zeros((total, d));
        let mut probs = Vec::with_capacity(heads);
        for h in 0..heads {
            let cols = h * dk..(h + 1) * dk;
            let qh = q.slice(s![.., cols.clone()]);
            let kh = k.slice(s![.., cols.clone()]);
            let vh = v.slice(s![.., cols.clone()]);
            let mut scores = qh.dot(&kh.t());
            scores.mapv_inplace(|s| s * scale);
            for ((i, j), sc) in scores.indexed_iter_mut() {
                if !input.mask[[i, j]] {
                    *sc = neg_inf;
                }
            }
            for mut row in scores.rows_mut() {
                let max = row.iter().copied().fold(neg_inf, F::max);
                let mut sum = F::zero();
                for sc in row.iter_mut() {
                    *sc = (*sc - max).exp();
                    sum += *sc;
                }
                for sc in row.iter_mut() {
                    *sc = *sc / sum;
                }
            }
            ctx.slice_mut(s![.., cols]).assign(&scores.dot(&vh));
            probs.push(scores);
        }

        let mut attn = ctx.dot(&layer.wo);
        add_bias(&mut attn, &layer.bo);
        let drop_attn = drop_rng
            .as_mut()
            .map(|rng| dropout_mask::<F>((total, d), cfg.dropout, rng));
        if let Some(mask) = &drop_attn {
            attn.zip_mut_with(mask, |a, &m| *a = *a * m);
        }
        let x_mid = &x + &attn;

        let ln2 = layer_norm(&x_mid, &layer.ln2_g, &layer.ln2_b);
        let mut u = ln2.out.dot(&layer.w1);
        add_bias(&mut u, &layer.b1);
        let act = u.mapv(gelu);
        let mut ffn = act.dot(&layer.w2);
        add_bias(&mut ffn, &layer.b2);
        let drop_ffn = drop_rng
            .as_mut()
            .map(|rng| dropout_mask::<F>((total, d), cfg.dropout, rng));
        if let Some(mask) = &drop_ffn {
            ffn.zip_mut_with(mask, |a, &m| *a = *a * m);
        }
        let x_out = &x_mid + &ffn;

        layers.push(LayerCache {
            ln1,
            q,
            k,
            v,
            probs,
            ctx,
            drop_attn,
            ln2,
            u,
            act,
            drop_ffn,
        });
        x = x_out;
    }

    let lnf = layer_norm(&x, &params.lnf_g, &params.lnf_b);
    let h = &lnf.out;

    let n_src = input.spans.source.len();
    let h_src = h.slice(s![..n_src, ..]);
    let mut det_u = h_src.dot(&params.det_w1);
    add_bias(&mut det_u, &params.det_b1);
    let det_act = det_u.mapv(gelu);
    let mut detection_logits = det_act.dot(&params.det_w2);
    add_bias(&mut detection_logits, &params.det_b2);

    let rows = piece_rows(&input.spans);
    let mut h_pieces = Array2::zeros((rows.len(), d));
    for (out_i, &row) in rows.iter().enumerate() {
        h_pieces.row_mut(out_i).assign(&h.row(row));
    }
    let lm_logits = h_pieces.dot(&params.tok_emb.t());

    for &v in detection_logits.iter().chain(lm_logits.iter()) {
        if !v.is_finite() {
            return Err(Error::NumericalOverflow("logits".into()));
        }
    }

    Ok(ForwardPass {
        detection_logits,
        lm_logits,
        piece_rows: rows,
        layers,
        lnf,
        det_u,
        det_act,
    })
}

/// Backpropagate logit-space gradients into parameter space.
pub fn backward<F: Scalar>(
    params: &ModelParams<F>,
    input: &PackedInput,
    fwd: &ForwardPass<F>,
    d_detection_logits: &Array2<F>,
    d_lm_logits: &Array2<F>,
) -> Result<ModelParams<F>> {
    let cfg = &params.config;
    let total = input.len();
    let d = cfg.d_model;
    let heads = cfg.n_heads;
    let dk = d / heads;
    let scale = F::from_f64(1.0 / (dk as f64).sqrt());
    if d_detection_logits.dim() != fwd.detection_logits.dim()
        || d_lm_logits.dim() != fwd.lm_logits.dim()
    {
        return Err(Error::ShapeMismatch("logit gradient shapes".into()));
    }

    let mut grads = params.zeros_like();
    let mut dh: Array2<F> = Array2::zeros((total, d));

    // detection head
    let n_src = input.spans.source.len();
    let h_src = fwd.lnf.out.slice(s![..n_src, ..]);
    let d_act = d_detection_logits.dot(&params.det_w2.t());
    grads.det_w2 = grads.det_w2 + fwd.det_act.t().dot(d_detection_logits);
    bias_grad(d_detection_logits, &mut grads.det_b2);
    let mut d_u = d_act;
    d_u.zip_mut_with(&fwd.det_u, |g, &u| *g = *g * gelu_prime(u));
    grads.det_w1 = grads.det_w1 + h_src.t().dot(&d_u);
    bias_grad(&d_u, &mut grads.det_b1);
    let d_hsrc = d_u.dot(&params.det_w1.t());
    dh.slice_mut(s![..n_src, ..]).zip_mut_with(&d_hsrc, |a, &b| *a = *a + b);

    // tied token head
    if !fwd.piece_rows.is_empty() {
        let mut h_pieces = Array2::zeros((fwd.piece_rows.len(), d));
        for (i, &row) in fwd.piece_rows.iter().enumerate() {
            h_pieces.row_mut(i).assign(&fwd.lnf.out.row(row));
        }
        grads.tok_emb = grads.tok_emb + d_lm_logits.t().dot(&h_pieces);
        let d_hp = d_lm_logits.dot(&params.tok_emb);
        for (i, &row) in fwd.piece_rows.iter().enumerate() {
            dh.row_mut(row).zip_mut_with(&d_hp.row(i), |a, &b| *a = *a + b);
        }
    }

    // final layer norm
    let mut dx = layer_norm_backward(&dh, &fwd.lnf, &params.lnf_g, &mut grads.lnf_g, &mut grads.lnf_b);

    // transformer blocks in reverse
    for (layer, (p, g)) in fwd
        .layers
        .iter()
        .zip(params.layers.iter().zip(grads.layers.iter_mut()))
        .rev()
    {
        // FFN branch
        let mut d_ffn = dx.clone();
        if let Some(mask) = &layer.drop_ffn {
            d_ffn.zip_mut_with(mask, |a, &m| *a = *a * m);
        }
        g.w2 = &g.w2 + &layer.act.t().dot(&d_ffn);
        bias_grad(&d_ffn, &mut g.b2);
        let mut d_u = d_ffn.dot(&p.w2.t());
        d_u.zip_mut_with(&layer.u, |gr, &u| *gr = *gr * gelu_prime(u));
        g.w1 = &g.w1 + &layer.ln2.out.t().dot(&d_u);
        bias_grad(&d_u, &mut g.b1);
        let d_ln2out = d_u.dot(&p.w1.t());
        let d_from_ffn = layer_norm_backward(&d_ln2out, &layer.ln2, &p.ln2_g, &mut g.ln2_g, &mut g.ln2_b);
        let d_x_mid = &dx + &d_from_ffn;

        // attention branch
        let mut d_attn = d_x_mid.clone();
        if let Some(mask) = &layer.drop_attn {
            d_attn.zip_mut_with(mask, |a, &m| *a = *a * m);
        }
        g.wo = &g.wo + &layer.ctx.t().dot(&d_attn);
        bias_grad(&d_attn, &mut g.bo);
        let d_ctx = d_attn.dot(&p.wo.t());

        let mut d_q: Array2<F> = Array2::zeros((total, d));
        let mut d_k: Array2<F> = Array2::zeros((total, d));
        let mut d_v: Array2<F> = Array2::zeros((total, d));
        for h in 0..heads {
            let cols = h * dk..(h + 1) * dk;
            let probs = &layer.probs[h];
            let d_ctx_h = d_ctx.slice(s![.., cols.clone()]);
            let vh = layer.v.slice(s![.., cols.clone()]);
            let qh = layer.q.slice(s![.., cols.clone()]);
            let kh = layer.k.slice(s![.., cols.clone()]);

            let d_p = d_ctx_h.dot(&vh.t());
            d_v.slice_mut(s![.., cols.clone()]).assign(&probs.t().dot(&d_ctx_h));

            // softmax backward: ds = p * (dp - rowsum(dp * p))
            let mut d_s = d_p;
            for (mut ds_row, p_row) in d_s.rows_mut().into_iter().zip(probs.rows()) {
                let dot = ds_row
                    .iter()
                    .zip(p_row.iter())
                    .map(|(&a, &b)| a * b)
                    .sum::<F>();
                for (ds, &pv) in ds_row.iter_mut().zip(p_row.iter()) {
                    *ds = pv * (*ds - dot);
                }
            }
            d_s.mapv_inplace(|v| v * scale);
            d_q.slice_mut(s![.., cols.clone()]).assign(&d_s.dot(&kh));
            d_k.slice_mut(s![.., cols]).assign(&d_s.t().dot(&qh));
        }

        g.wq = &g.wq + &layer.ln1.out.t().dot(&d_q);
        bias_grad(&d_q, &mut g.bq);
        g.wk = &g.wk + &layer.ln1.out.t().dot(&d_k);
        bias_grad(&d_k, &mut g.bk);
        g.wv = &g.wv + &layer.ln1.out.t().dot(&d_v);
        bias_grad(&d_v, &mut g.bv);

        let d_ln1out = d_q.dot(&p.wq.t()) + d_k.dot(&p.wk.t()) + d_v.dot(&p.wv.t());
        let d_from_attn = layer_norm_backward(&d_ln1out, &layer.ln1, &p.ln1_g, &mut g.ln1_g, &mut g.ln1_b);
        dx = &d_x_mid + &d_from_attn;
    }

    // embedding scatter
    for (t, dx_row) in dx.rows().into_iter().enumerate() {
        let id = input.ids[t] as usize;
        grads
            .tok_emb
            .row_mut(id)
            .zip_mut_with(&dx_row, |a, &b| *a = *a + b);
        grads
            .pos_emb
            .row_mut(input.positions[t])
            .zip_mut_with(&dx_row, |a, &b| *a = *a + b);
        grads
            .block_emb
            .row_mut(input.blocks[t])
            .zip_mut_with(&dx_row, |a, &b| *a = *a + b);
    }
    Ok(grads)
}

/// Row-wise softmax of a logits matrix.
pub fn softmax_rows<F: Scalar>(logits: &Array2<F>) -> Array2<F> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        let mut sum = F::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
    out
}

/// Row-wise log-softmax.
pub fn log_softmax_rows<F: Scalar>(logits: &Array2<F>) -> Array2<F> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        let lse = row.iter().map(|&v| (v - max).exp()).sum::<F>().ln() + max;
        for v in row.iter_mut() {
            *v = *v - lse;
        }
    }
    out
}
