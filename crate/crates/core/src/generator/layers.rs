//! Forward and backward passes of the transformer building blocks.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis, Zip};

use crate::scalar::Scalar;

const LN_EPS: f64 = 1e-5;

/// `x W + b`.
pub fn linear<T: Scalar>(x: &ArrayView2<T>, w: &ArrayView2<T>, b: &ArrayView1<T>) -> Array2<T> {
    let mut y = x.dot(w);
    y += b;
    y
}

/// Accumulates weight and bias gradients, returns the input gradient.
pub fn linear_backward<T: Scalar>(
    x: &ArrayView2<T>,
    w: &ArrayView2<T>,
    dy: &Array2<T>,
    dw: &mut ArrayViewMut2<T>,
    db: &mut ArrayViewMut1<T>,
) -> Array2<T> {
    ndarray::linalg::general_mat_mul(T::one(), &x.t(), dy, T::one(), dw);
    *db += &dy.sum_axis(Axis(0));
    dy.dot(&w.t())
}

pub struct LayerNormCache<T> {
    xhat: Array2<T>,
    inv_std: Array1<T>,
}

pub fn layer_norm<T: Scalar>(
    x: &Array2<T>,
    gamma: &ArrayView1<T>,
    beta: &ArrayView1<T>,
) -> (Array2<T>, LayerNormCache<T>) {
    let d = T::from_usize(x.ncols()).unwrap();
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, inv) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / d;
        row -= mean;
        let var = row.iter().map(|&v| v * v).sum::<T>() / d;
        *inv = T::one() / (var + T::of(LN_EPS)).sqrt();
        row *= *inv;
    }
    let y = &xhat * gamma + beta;
    (y, LayerNormCache { xhat, inv_std })
}

pub fn layer_norm_backward<T: Scalar>(
    cache: &LayerNormCache<T>,
    gamma: &ArrayView1<T>,
    dy: &Array2<T>,
    dgamma: &mut ArrayViewMut1<T>,
    dbeta: &mut ArrayViewMut1<T>,
) -> Array2<T> {
    *dgamma += &(dy * &cache.xhat).sum_axis(Axis(0));
    *dbeta += &dy.sum_axis(Axis(0));
    let d = T::from_usize(dy.ncols()).unwrap();
    let mut dx = dy * gamma;
    for ((mut row, xh), &inv) in dx
        .rows_mut()
        .into_iter()
        .zip(cache.xhat.rows())
        .zip(cache.inv_std.iter())
    {
        let mean_d = row.sum() / d;
        let mean_dx = row.iter().zip(xh.iter()).map(|(&a, &b)| a * b).sum::<T>() / d;
        Zip::from(&mut row).and(&xh).for_each(|r, &h| {
            *r = (*r - mean_d - h * mean_dx) * inv;
        });
    }
    dx
}

fn gelu_parts<T: Scalar>(x: T) -> (T, T) {
    let c = T::of((2.0 / std::f64::consts::PI).sqrt());
    let a = T::of(0.044715);
    let half = T::of(0.5);
    let u = c * (x + a * x * x * x);
    let t = u.tanh();
    let value = half * x * (T::one() + t);
    let grad = half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + T::of(3.0) * a * x * x);
    (value, grad)
}

/// Tanh approximation of GELU.
pub fn gelu<T: Scalar>(x: &Array2<T>) -> Array2<T> {
    x.mapv(|v| gelu_parts(v).0)
}

pub fn gelu_backward<T: Scalar>(x: &Array2<T>, dy: &Array2<T>) -> Array2<T> {
    let mut dx = dy.clone();
    Zip::from(&mut dx).and(x).for_each(|d, &v| *d *= gelu_parts(v).1);
    dx
}

/// Parameters of one multi-head attention layer.
pub struct AttnParams<'a, T> {
    pub wq: ArrayView2<'a, T>,
    pub bq: ArrayView1<'a, T>,
    pub wk: ArrayView2<'a, T>,
    pub bk: ArrayView1<'a, T>,
    pub wv: ArrayView2<'a, T>,
    pub bv: ArrayView1<'a, T>,
    pub wo: ArrayView2<'a, T>,
    pub bo: ArrayView1<'a, T>,
}

pub struct AttnGrads<'a, T> {
    pub wq: ArrayViewMut2<'a, T>,
    pub bq: ArrayViewMut1<'a, T>,
    pub wk: ArrayViewMut2<'a, T>,
    pub bk: ArrayViewMut1<'a, T>,
    pub wv: ArrayViewMut2<'a, T>,
    pub bv: ArrayViewMut1<'a, T>,
    pub wo: ArrayViewMut2<'a, T>,
    pub bo: ArrayViewMut1<'a, T>,
}

pub struct AttnCache<T> {
    xq: Array2<T>,
    xkv: Array2<T>,
    q: Array2<T>,
    k: Array2<T>,
    v: Array2<T>,
    /// Attention weights, one `n_q x n_kv` matrix per head.
    pub probs: Vec<Array2<T>>,
    o: Array2<T>,
}

/// Multi-head attention of `xq` over `xkv`. With `causal`, query `i` sees
/// keys `0..=i` only.
pub fn attention<T: Scalar>(
    p: &AttnParams<T>,
    heads: usize,
    xq: &Array2<T>,
    xkv: &Array2<T>,
    causal: bool,
) -> (Array2<T>, AttnCache<T>) {
    let q = linear(&xq.view(), &p.wq, &p.bq);
    let k = linear(&xkv.view(), &p.wk, &p.bk);
    let v = linear(&xkv.view(), &p.wv, &p.bv);
    let d = q.ncols();
    let dh = d / heads;
    let scale = T::one() / T::from_usize(dh).unwrap().sqrt();
    let (nq, nk) = (q.nrows(), k.nrows());
    let mut o = Array2::zeros((nq, d));
    let mut probs = Vec::with_capacity(heads);
    for h in 0..heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let mut scores = q.slice(cols).dot(&k.slice(cols).t());
        scores *= scale;
        for i in 0..nq {
            let mut row = scores.row_mut(i);
            let visible = if causal { (i + 1).min(nk) } else { nk };
            let max = row.iter().take(visible).fold(T::neg_infinity(), |m, &x| m.max(x));
            let mut sum = T::zero();
            for (j, x) in row.iter_mut().enumerate() {
                if j < visible {
                    *x = (*x - max).exp();
                    sum += *x;
                } else {
                    *x = T::zero();
                }
            }
            row /= sum;
        }
        o.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
        probs.push(scores);
    }
    let out = linear(&o.view(), &p.wo, &p.bo);
    let cache = AttnCache {
        xq: xq.clone(),
        xkv: xkv.clone(),
        q,
        k,
        v,
        probs,
        o,
    };
    (out, cache)
}

/// Returns `(d_xq, d_xkv)`.
pub fn attention_backward<T: Scalar>(
    p: &AttnParams<T>,
    g: &mut AttnGrads<T>,
    cache: &AttnCache<T>,
    dout: &Array2<T>,
) -> (Array2<T>, Array2<T>) {
    let heads = cache.probs.len();
    let d = cache.q.ncols();
    let dh = d / heads;
    let scale = T::one() / T::from_usize(dh).unwrap().sqrt();
    let d_o = linear_backward(&cache.o.view(), &p.wo, dout, &mut g.wo, &mut g.bo);
    let mut dq = Array2::zeros(cache.q.raw_dim());
    let mut dk = Array2::zeros(cache.k.raw_dim());
    let mut dv = Array2::zeros(cache.v.raw_dim());
    for (h, probs) in cache.probs.iter().enumerate() {
        let cols = s![.., h * dh..(h + 1) * dh];
        let d_oh = d_o.slice(cols);
        let dp = d_oh.dot(&cache.v.slice(cols).t());
        dv.slice_mut(cols).assign(&probs.t().dot(&d_oh));
        let mut ds = &dp * probs;
        for (mut row, prow) in ds.rows_mut().into_iter().zip(probs.rows()) {
            let total = row.sum();
            Zip::from(&mut row).and(&prow).for_each(|x, &pp| *x -= pp * total);
        }
        ds *= scale;
        dq.slice_mut(cols).assign(&ds.dot(&cache.k.slice(cols)));
        dk.slice_mut(cols).assign(&ds.t().dot(&cache.q.slice(cols)));
    }
    let dxq = linear_backward(&cache.xq.view(), &p.wq, &dq, &mut g.wq, &mut g.bq);
    let mut dxkv = linear_backward(&cache.xkv.view(), &p.wk, &dk, &mut g.wk, &mut g.bk);
    dxkv += &linear_backward(&cache.xkv.view(), &p.wv, &dv, &mut g.wv, &mut g.bv);
    (dxq, dxkv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn layer_norm_rows_are_standardised() {
        let x: Array2<f64> = array![[1.0, 2.0, 3.0, 4.0], [-1.0, 0.0, 0.0, 5.0]];
        let g = Array1::ones(4);
        let b = Array1::zeros(4);
        let (y, _) = layer_norm(&x, &g.view(), &b.view());
        for row in y.rows() {
            assert!(row.sum().abs() < 1e-12);
            let var = row.iter().map(|v| v * v).sum::<f64>() / 4.0;
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn gelu_matches_known_values() {
        let y: Array2<f64> = gelu(&array![[0.0, 1.0, -1.0]]);
        assert_eq!(y[[0, 0]], 0.0);
        assert!((y[[0, 1]] - 0.841192).abs() < 1e-5);
        assert!((y[[0, 2]] + 0.158808).abs() < 1e-5);
        let h = 1e-6;
        for x in [-2.0f64, -0.3, 0.0, 0.7, 3.0] {
            let num = (gelu_parts(x + h).0 - gelu_parts(x - h).0) / (2.0 * h);
            assert!((num - gelu_parts(x).1).abs() < 1e-8);
        }
    }
}
