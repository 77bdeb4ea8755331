use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{
    attention, attention_backward, gelu, gelu_backward, layer_norm, layer_norm_backward, linear,
    linear_backward, AttnCache, AttnGrads, AttnParams, LayerNormCache,
};
use super::vocab::{Vocab, BOS, EOS};
use super::GenConfig;
use crate::corpus::{Category, Token};
use crate::error::{Error, Result};
use crate::scalar::{log_sum_exp, softmax, Scalar};

/// Tensors of one transformer block, in storage order.
const BLOCK_TENSORS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq)]
struct Slot {
    offset: usize,
    rows: usize,
    cols: usize,
}

impl Slot {
    fn len(self) -> usize {
        self.rows * self.cols
    }
}

/// Offsets of every tensor inside the flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
struct Layout {
    tok: Slot,
    pos: Slot,
    style: Slot,
    blocks: Vec<[Slot; BLOCK_TENSORS]>,
    out_w: Slot,
    out_b: Slot,
    len: usize,
}

impl Layout {
    fn new(c: &GenConfig) -> Layout {
        let mut offset = 0;
        let mut slot = |rows: usize, cols: usize| {
            let s = Slot { offset, rows, cols };
            offset += rows * cols;
            s
        };
        let (d, f) = (c.dim, c.ffn_dim);
        let tok = slot(c.vocab_size, d);
        let pos = slot(c.max_len, d);
        let style = slot(c.scheme.n_categories(), d);
        let blocks = (0..c.layers)
            .map(|_| {
                [
                    slot(d, d),
                    slot(1, d),
                    slot(d, d),
                    slot(1, d),
                    slot(d, d),
                    slot(1, d),
                    slot(d, d),
                    slot(1, d),
                    slot(1, d),
                    slot(1, d),
                    slot(d, f),
                    slot(1, f),
                    slot(f, d),
                    slot(1, d),
                    slot(1, d),
                    slot(1, d),
                ]
            })
            .collect();
        let out_w = slot(d, c.vocab_size);
        let out_b = slot(1, c.vocab_size);
        Layout { tok, pos, style, blocks, out_w, out_b, len: offset }
    }
}

fn view2<T>(buf: &[T], s: Slot) -> ArrayView2<'_, T> {
    ArrayView2::from_shape((s.rows, s.cols), &buf[s.offset..s.offset + s.len()]).expect("slot shape")
}

fn view1<T>(buf: &[T], s: Slot) -> ArrayView1<'_, T> {
    ArrayView1::from_shape(s.len(), &buf[s.offset..s.offset + s.len()]).expect("slot shape")
}

struct Block<'a, T> {
    attn: AttnParams<'a, T>,
    ln1_g: ArrayView1<'a, T>,
    ln1_b: ArrayView1<'a, T>,
    w1: ArrayView2<'a, T>,
    b1: ArrayView1<'a, T>,
    w2: ArrayView2<'a, T>,
    b2: ArrayView1<'a, T>,
    ln2_g: ArrayView1<'a, T>,
    ln2_b: ArrayView1<'a, T>,
}

struct BlockGrad<'a, T> {
    attn: AttnGrads<'a, T>,
    ln1_g: ArrayViewMut1<'a, T>,
    ln1_b: ArrayViewMut1<'a, T>,
    w1: ArrayViewMut2<'a, T>,
    b1: ArrayViewMut1<'a, T>,
    w2: ArrayViewMut2<'a, T>,
    b2: ArrayViewMut1<'a, T>,
    ln2_g: ArrayViewMut1<'a, T>,
    ln2_b: ArrayViewMut1<'a, T>,
}

fn block<'a, T>(buf: &'a [T], s: &[Slot; BLOCK_TENSORS]) -> Block<'a, T> {
    Block {
        attn: AttnParams {
            wq: view2(buf, s[0]),
            bq: view1(buf, s[1]),
            wk: view2(buf, s[2]),
            bk: view1(buf, s[3]),
            wv: view2(buf, s[4]),
            bv: view1(buf, s[5]),
            wo: view2(buf, s[6]),
            bo: view1(buf, s[7]),
        },
        ln1_g: view1(buf, s[8]),
        ln1_b: view1(buf, s[9]),
        w1: view2(buf, s[10]),
        b1: view1(buf, s[11]),
        w2: view2(buf, s[12]),
        b2: view1(buf, s[13]),
        ln2_g: view1(buf, s[14]),
        ln2_b: view1(buf, s[15]),
    }
}

/// Mutable views of one block's gradient; block slots are contiguous.
fn block_grad<'a, T>(buf: &'a mut [T], s: &[Slot; BLOCK_TENSORS]) -> BlockGrad<'a, T> {
    let start = s[0].offset;
    let end = s[BLOCK_TENSORS - 1].offset + s[BLOCK_TENSORS - 1].len();
    let mut rest = &mut buf[start..end];
    let mut parts: Vec<&'a mut [T]> = Vec::with_capacity(BLOCK_TENSORS);
    for slot in s {
        let (head, tail) = std::mem::take(&mut rest).split_at_mut(slot.len());
        parts.push(head);
        rest = tail;
    }
    let mut it = parts.into_iter().zip(s.iter());
    let mut m2 = || {
        let (p, s) = it.next().unwrap();
        (p, *s)
    };
    let as2 = |(p, s): (&'a mut [T], Slot)| ArrayViewMut2::from_shape((s.rows, s.cols), p).unwrap();
    let as1 = |(p, s): (&'a mut [T], Slot)| ArrayViewMut1::from_shape(s.len(), p).unwrap();
    BlockGrad {
        attn: AttnGrads {
            wq: as2(m2()),
            bq: as1(m2()),
            wk: as2(m2()),
            bk: as1(m2()),
            wv: as2(m2()),
            bv: as1(m2()),
            wo: as2(m2()),
            bo: as1(m2()),
        },
        ln1_g: as1(m2()),
        ln1_b: as1(m2()),
        w1: as2(m2()),
        b1: as1(m2()),
        w2: as2(m2()),
        b2: as1(m2()),
        ln2_g: as1(m2()),
        ln2_b: as1(m2()),
    }
}

struct BlockCache<T> {
    self_attn: AttnCache<T>,
    cross_attn: Option<AttnCache<T>>,
    ln1: LayerNormCache<T>,
    z: Array2<T>,
    h1: Array2<T>,
    act: Array2<T>,
    ln2: LayerNormCache<T>,
}

/// Attention-routing merge: `(r_pre + r_post) / 2 + e_y + e_s`, with `e_s`
/// broadcast over positions.
pub fn merge_routes<T: Scalar>(
    r_pre: &Array2<T>,
    r_post: &Array2<T>,
    e_y: &Array2<T>,
    e_s: &ArrayView1<T>,
) -> Array2<T> {
    merge_scaled(r_pre, r_post, e_y, e_s, T::of(0.5))
}

fn merge_scaled<T: Scalar>(
    r_pre: &Array2<T>,
    r_post: &Array2<T>,
    e_y: &Array2<T>,
    e_s: &ArrayView1<T>,
    scale: T,
) -> Array2<T> {
    let mut r = r_pre + r_post;
    r *= scale;
    r += e_y;
    r += e_s;
    r
}

/// Intermediate values of one decoder block.
#[derive(Clone, Debug)]
pub struct BlockTrace<T> {
    pub r_pre: Array2<T>,
    pub r_post: Array2<T>,
    pub merged: Array2<T>,
    pub output: Array2<T>,
    /// Per-head attention weights of the masked self-attention.
    pub self_attention: Vec<Array2<T>>,
    pub cross_attention: Vec<Array2<T>>,
}

/// A training pair in vocabulary ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedPair {
    pub post: Vec<usize>,
    /// `BOS` followed by the response.
    pub input: Vec<usize>,
    /// The response followed by `EOS`.
    pub target: Vec<usize>,
    pub style: usize,
}

/// Transformer whose blocks are shared between the encoder and the decoder.
/// Decoder blocks route the masked self-attention and the cross-attention
/// through the block's single attention layer, merge them with the block
/// input and the style embedding, then apply layer normalisation and a
/// position-wise feed-forward sublayer.
#[derive(Clone, Debug)]
pub struct StyledGenerator<T> {
    config: GenConfig,
    vocab: Vocab,
    layout: Layout,
    pub params: Vec<T>,
    merge_forward_scale: T,
}

impl<T: Scalar> StyledGenerator<T> {
    pub fn new(config: GenConfig, vocab: Vocab, seed: u64) -> Result<Self> {
        let mut config = config;
        config.vocab_size = vocab.len();
        config.validate()?;
        let layout = Layout::new(&config);
        let mut model = StyledGenerator {
            params: vec![T::zero(); layout.len],
            layout,
            vocab,
            config,
            merge_forward_scale: T::of(0.5),
        };
        model.init(seed);
        Ok(model)
    }

    /// Scaled uniform weights (bound `1/sqrt(fan_in)`), small embeddings,
    /// zero biases and unit layer-norm gains.
    fn init(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = self.layout.clone();
        let mut fill = |buf: &mut [T], s: Slot, bound: f64| {
            let u = Uniform::new_inclusive(-bound, bound).unwrap();
            for x in &mut buf[s.offset..s.offset + s.len()] {
                *x = T::of(u.sample(&mut rng));
            }
        };
        for s in [l.tok, l.pos, l.style] {
            fill(&mut self.params, s, 0.1);
        }
        for b in &l.blocks {
            for i in [0, 2, 4, 6, 10, 12] {
                fill(&mut self.params, b[i], 1.0 / (b[i].rows as f64).sqrt());
            }
            for i in [8, 14] {
                self.params[b[i].offset..b[i].offset + b[i].len()].fill(T::one());
            }
        }
        fill(&mut self.params, l.out_w, 1.0 / (l.out_w.rows as f64).sqrt());
    }

    /// Every parameter, including biases and layer-norm terms, uniform in
    /// `[-bound, bound]` (gains around 1).
    pub fn randomize_all(&mut self, seed: u64, bound: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = Uniform::new_inclusive(-bound, bound).unwrap();
        for x in self.params.iter_mut() {
            *x = T::of(u.sample(&mut rng));
        }
        for b in &self.layout.blocks {
            for i in [8, 14] {
                for x in &mut self.params[b[i].offset..b[i].offset + b[i].len()] {
                    *x += T::one();
                }
            }
        }
    }

    pub fn config(&self) -> &GenConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Forward merge with the averaging removed, leaving the backward pass
    /// unchanged. Only used to show that gradient checking catches it.
    pub(crate) fn corrupt_merge_average(&mut self) {
        self.merge_forward_scale = T::one();
    }

    pub fn style_index(&self, category: Category) -> Result<usize> {
        self.config.scheme.index_of(category).ok_or_else(|| Error::SchemeMismatch {
            expected: self.config.scheme.to_string(),
            found: category.to_string(),
        })
    }

    pub fn style_embedding(&self, category: Category) -> Result<Array1<T>> {
        let i = self.style_index(category)?;
        Ok(view2(&self.params, self.layout.style).row(i).to_owned())
    }

    /// Raw flat-parameter range of the style table, for ablations.
    pub fn style_range(&self) -> std::ops::Range<usize> {
        self.layout.style.offset..self.layout.style.offset + self.layout.style.len()
    }

    /// Raw flat-parameter range of the attention query weights of `layer`.
    pub fn attention_query_range(&self, layer: usize) -> std::ops::Range<usize> {
        let s = self.layout.blocks[layer][0];
        s.offset..s.offset + s.len()
    }

    fn embed(&self, ids: &[usize]) -> Array2<T> {
        let tok = view2(&self.params, self.layout.tok);
        let pos = view2(&self.params, self.layout.pos);
        let mut e = tok.select(Axis(0), ids);
        e += &pos.slice(ndarray::s![..ids.len(), ..]);
        e
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n > self.config.max_len {
            return Err(Error::TooLong { len: n, max: self.config.max_len });
        }
        Ok(())
    }

    fn check_dim(&self, what: &str, rows: Option<usize>, got: (usize, usize)) -> Result<()> {
        let ok = got.1 == self.config.dim && rows.is_none_or(|r| r == got.0);
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "{what}: expected width {}, got {}x{}",
                self.config.dim, got.0, got.1
            )))
        }
    }

    fn ffn_tail(&self, b: &Block<T>, r: &Array2<T>) -> (Array2<T>, LayerNormCache<T>, Array2<T>, Array2<T>, Array2<T>, LayerNormCache<T>) {
        let (z, ln1) = layer_norm(r, &b.ln1_g, &b.ln1_b);
        let h1 = linear(&z.view(), &b.w1, &b.b1);
        let act = gelu(&h1);
        let mut v = linear(&act.view(), &b.w2, &b.b2);
        v += &z;
        let (out, ln2) = layer_norm(&v, &b.ln2_g, &b.ln2_b);
        (out, ln1, z, h1, act, ln2)
    }

    fn encoder_block(&self, layer: usize, h: &Array2<T>) -> (Array2<T>, BlockCache<T>) {
        let b = block(&self.params, &self.layout.blocks[layer]);
        let (a, self_attn) = attention(&b.attn, self.config.heads, h, h, false);
        let u = h + &a;
        let (out, ln1, z, h1, act, ln2) = self.ffn_tail(&b, &u);
        (out, BlockCache { self_attn, cross_attn: None, ln1, z, h1, act, ln2 })
    }

    fn decoder_block_cached(
        &self,
        layer: usize,
        g: &Array2<T>,
        ex: &Array2<T>,
        es: &ArrayView1<T>,
    ) -> (Array2<T>, BlockCache<T>, Array2<T>, Array2<T>, Array2<T>) {
        let b = block(&self.params, &self.layout.blocks[layer]);
        let (r_pre, self_attn) = attention(&b.attn, self.config.heads, g, g, true);
        let (r_post, cross) = attention(&b.attn, self.config.heads, g, ex, false);
        let r = merge_scaled(&r_pre, &r_post, g, es, self.merge_forward_scale);
        let (out, ln1, z, h1, act, ln2) = self.ffn_tail(&b, &r);
        let cache = BlockCache { self_attn, cross_attn: Some(cross), ln1, z, h1, act, ln2 };
        (out, cache, r_pre, r_post, r)
    }

    fn encode_ids(&self, ids: &[usize]) -> (Array2<T>, Vec<BlockCache<T>>) {
        let mut h = self.embed(ids);
        let mut caches = Vec::with_capacity(self.config.layers);
        for l in 0..self.config.layers {
            let (out, c) = self.encoder_block(l, &h);
            caches.push(c);
            h = out;
        }
        (h, caches)
    }

    /// Encoded post, one row per token.
    pub fn encode(&self, post: &[Token]) -> Result<Array2<T>> {
        self.check_len(post.len())?;
        Ok(self.encode_ids(&self.vocab.encode(post)).0)
    }

    pub(crate) fn encode_post_ids(&self, ids: &[usize]) -> Result<Array2<T>> {
        self.check_len(ids.len())?;
        Ok(self.encode_ids(ids).0)
    }

    /// One decoder block applied to `e_y_pre` given the encoded post and a
    /// style vector.
    pub fn decoder_block(&self, layer: usize, e_y_pre: &Array2<T>, e_x: &Array2<T>, e_s: &Array1<T>) -> Result<Array2<T>> {
        Ok(self.decoder_block_trace(layer, e_y_pre, e_x, e_s)?.output)
    }

    pub fn decoder_block_trace(
        &self,
        layer: usize,
        e_y_pre: &Array2<T>,
        e_x: &Array2<T>,
        e_s: &Array1<T>,
    ) -> Result<BlockTrace<T>> {
        if layer >= self.config.layers {
            return Err(Error::invalid(format!("no decoder block {layer}")));
        }
        self.check_dim("e_y_pre", None, e_y_pre.dim())?;
        self.check_dim("e_x", None, e_x.dim())?;
        self.check_dim("e_s", Some(1), (1, e_s.len()))?;
        let (output, cache, r_pre, r_post, merged) = self.decoder_block_cached(layer, e_y_pre, e_x, &e_s.view());
        Ok(BlockTrace {
            r_pre,
            r_post,
            merged,
            output,
            self_attention: cache.self_attn.probs,
            cross_attention: cache.cross_attn.expect("decoder block").probs,
        })
    }

    fn decode_ids(&self, input: &[usize], ex: &Array2<T>, style: usize) -> (Array2<T>, Vec<BlockCache<T>>) {
        let styles = view2(&self.params, self.layout.style);
        let es = styles.row(style);
        let mut g = self.embed(input);
        let mut caches = Vec::with_capacity(self.config.layers);
        for l in 0..self.config.layers {
            let (out, c, ..) = self.decoder_block_cached(l, &g, ex, &es);
            caches.push(c);
            g = out;
        }
        (g, caches)
    }

    fn project(&self, g: &Array2<T>) -> Array2<T> {
        linear(&g.view(), &view2(&self.params, self.layout.out_w), &view1(&self.params, self.layout.out_b))
    }

    /// Vocabulary logits for every decoder input position.
    pub fn logits(&self, post: &[usize], input: &[usize], style: usize) -> Result<Array2<T>> {
        self.check_len(post.len())?;
        self.check_len(input.len())?;
        let (ex, _) = self.encode_ids(post);
        Ok(self.project(&self.decode_ids(input, &ex, style).0))
    }

    pub(crate) fn next_logits(&self, ex: &Array2<T>, input: &[usize], style: usize) -> Array1<T> {
        let g = self.decode_ids(input, ex, style).0;
        let last = g.slice(ndarray::s![g.nrows() - 1..g.nrows(), ..]).to_owned();
        self.project(&last).row(0).to_owned()
    }

    pub fn encode_pair(&self, post: &[Token], response: &[Token], category: Category) -> Result<EncodedPair> {
        self.check_len(post.len())?;
        self.check_len(response.len() + 1)?;
        let resp = self.vocab.encode(response);
        let mut input = vec![BOS];
        input.extend_from_slice(&resp);
        let mut target = resp;
        target.push(EOS);
        Ok(EncodedPair { post: self.vocab.encode(post), input, target, style: self.style_index(category)? })
    }

    /// Summed token cross-entropy of one pair.
    fn pair_loss(&self, p: &EncodedPair) -> T {
        let (ex, _) = self.encode_ids(&p.post);
        let logits = self.project(&self.decode_ids(&p.input, &ex, p.style).0);
        logits
            .rows()
            .into_iter()
            .zip(&p.target)
            .map(|(row, &y)| log_sum_exp(row.as_slice().unwrap()) - row[y])
            .sum()
    }

    /// Mean token cross-entropy over a batch.
    pub fn loss(&self, batch: &[EncodedPair]) -> T {
        let tokens: usize = batch.iter().map(|p| p.target.len()).sum();
        let total: T = batch.iter().map(|p| self.pair_loss(p)).sum();
        total / T::from_usize(tokens.max(1)).unwrap()
    }

    /// Mean token cross-entropy and its gradient with respect to `params`.
    pub fn loss_and_gradient(&self, batch: &[EncodedPair]) -> (T, Vec<T>) {
        let mut grad = vec![T::zero(); self.params.len()];
        let loss = self.accumulate_gradient(batch, &mut grad);
        (loss, grad)
    }

    /// Adds the batch gradient into `grad` and returns the batch loss.
    pub fn accumulate_gradient(&self, batch: &[EncodedPair], grad: &mut [T]) -> T {
        let tokens: usize = batch.iter().map(|p| p.target.len()).sum();
        let weight = T::one() / T::from_usize(tokens.max(1)).unwrap();
        let mut total = T::zero();
        for p in batch {
            total += self.backward_pair(p, weight, grad);
        }
        total * weight
    }

    fn backward_pair(&self, p: &EncodedPair, weight: T, grad: &mut [T]) -> T {
        let l = &self.layout;
        let d = self.config.dim;
        let (ex, enc_caches) = self.encode_ids(&p.post);
        let (g, dec_caches) = self.decode_ids(&p.input, &ex, p.style);
        let logits = self.project(&g);

        let mut loss = T::zero();
        let mut dlogits = Array2::zeros(logits.raw_dim());
        for ((row, mut drow), &y) in logits.rows().into_iter().zip(dlogits.rows_mut()).zip(&p.target) {
            let x = row.as_slice().unwrap();
            loss += log_sum_exp(x) - x[y];
            let mut pr = softmax(x);
            pr[y] -= T::one();
            for (dv, pv) in drow.iter_mut().zip(pr) {
                *dv = pv * weight;
            }
        }

        let mut dg = {
            let (head, tail) = grad.split_at_mut(l.out_b.offset);
            let mut dw = ArrayViewMut2::from_shape((l.out_w.rows, l.out_w.cols), &mut head[l.out_w.offset..]).unwrap();
            let mut db = ArrayViewMut1::from_shape(l.out_b.len(), &mut tail[..l.out_b.len()]).unwrap();
            linear_backward(&g.view(), &view2(&self.params, l.out_w), &dlogits, &mut dw, &mut db)
        };

        let half = T::of(0.5);
        let mut dex = Array2::<T>::zeros(ex.raw_dim());
        let mut des = Array1::<T>::zeros(d);
        for layer in (0..self.config.layers).rev() {
            let b = block(&self.params, &l.blocks[layer]);
            let c = &dec_caches[layer];
            let mut bg = block_grad(grad, &l.blocks[layer]);
            let dr = self.ffn_tail_backward(&b, &mut bg, c, &dg);
            des += &dr.sum_axis(Axis(0));
            let d_half = &dr * half;
            let (dq1, dkv1) = attention_backward(&b.attn, &mut bg.attn, &c.self_attn, &d_half);
            let cross = c.cross_attn.as_ref().expect("decoder cache");
            let (dq2, dkv2) = attention_backward(&b.attn, &mut bg.attn, cross, &d_half);
            dex += &dkv2;
            dg = dr + dq1 + dkv1 + dq2;
        }
        {
            let row = l.style.offset + p.style * d;
            for (gv, dv) in grad[row..row + d].iter_mut().zip(des.iter()) {
                *gv += *dv;
            }
        }
        self.scatter_embedding(grad, &p.input, &dg);

        let mut dh = dex;
        for layer in (0..self.config.layers).rev() {
            let b = block(&self.params, &l.blocks[layer]);
            let c = &enc_caches[layer];
            let mut bg = block_grad(grad, &l.blocks[layer]);
            let du = self.ffn_tail_backward(&b, &mut bg, c, &dh);
            let (dq, dkv) = attention_backward(&b.attn, &mut bg.attn, &c.self_attn, &du);
            dh = du + dq + dkv;
        }
        self.scatter_embedding(grad, &p.post, &dh);
        loss
    }

    /// Backward through layer norm, feed-forward and the second layer norm;
    /// returns the gradient at the first layer norm's input.
    fn ffn_tail_backward(&self, b: &Block<T>, g: &mut BlockGrad<T>, c: &BlockCache<T>, dout: &Array2<T>) -> Array2<T> {
        let dv = layer_norm_backward(&c.ln2, &b.ln2_g, dout, &mut g.ln2_g, &mut g.ln2_b);
        let dact = linear_backward(&c.act.view(), &b.w2, &dv, &mut g.w2, &mut g.b2);
        let dh1 = gelu_backward(&c.h1, &dact);
        let mut dz = linear_backward(&c.z.view(), &b.w1, &dh1, &mut g.w1, &mut g.b1);
        dz += &dv;
        layer_norm_backward(&c.ln1, &b.ln1_g, &dz, &mut g.ln1_g, &mut g.ln1_b)
    }

    fn scatter_embedding(&self, grad: &mut [T], ids: &[usize], de: &Array2<T>) {
        let d = self.config.dim;
        for (i, (&id, row)) in ids.iter().zip(de.rows()).enumerate() {
            let t = self.layout.tok.offset + id * d;
            let p = self.layout.pos.offset + i * d;
            for (k, &v) in row.iter().enumerate() {
                grad[t + k] += v;
                grad[p + k] += v;
            }
        }
    }
}
