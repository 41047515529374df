//! Token/position/segment embeddings followed by residual mixing layers:
//! `h'_i = h_i + tanh(W1 h_i + W2 c_i + b)` where `c_i` is either the mean of
//! all hidden vectors or a single-head self-attention read-out.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{
    axpy, dot, matvec, matvec_add, matvec_t_add, outer_add, softmax, softmax_backward, Init, ParamSet,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mixing {
    Mean,
    Attention,
}

impl std::str::FromStr for Mixing {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Mixing::Mean),
            "attention" => Ok(Mixing::Attention),
            other => Err(Error::InvalidArgument(format!("unknown mixing mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub hidden: usize,
    pub layers: usize,
    pub max_len: usize,
    pub mixing: Mixing,
}

#[derive(Debug, Clone)]
struct LayerLayout {
    w1: usize,
    w2: usize,
    b: usize,
    /// Query, key and value projections in attention mode.
    attn: Option<[usize; 3]>,
}

/// Indices of the encoder tensors inside a model's `ParamSet`.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub config: EncoderConfig,
    tok: usize,
    pos: usize,
    seg: usize,
    layers: Vec<LayerLayout>,
}

#[derive(Debug, Clone)]
struct AttnCache {
    q: Vec<Vec<f64>>,
    k: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    p: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
struct LayerCache {
    input: Vec<Vec<f64>>,
    ctx: Vec<Vec<f64>>,
    act: Vec<Vec<f64>>,
    attn: Option<AttnCache>,
}

/// Hidden vectors `T_i` for every input token plus what the backward pass
/// needs.
#[derive(Debug, Clone)]
pub struct EncoderState {
    pub hidden: Vec<Vec<f64>>,
    ids: Vec<u32>,
    segments: Vec<u8>,
    layers: Vec<LayerCache>,
}

impl Encoder {
    pub fn new(config: EncoderConfig, params: &mut ParamSet, rng: &mut ChaCha8Rng, prefix: &str) -> Self {
        let h = config.hidden;
        let tok = params.add(&format!("{prefix}.tok"), config.vocab_size, h, Init::Uniform(0.5), rng);
        let pos = params.add(&format!("{prefix}.pos"), config.max_len, h, Init::Uniform(0.1), rng);
        let seg = params.add(&format!("{prefix}.seg"), 2, h, Init::Uniform(0.1), rng);
        let layers = (0..config.layers)
            .map(|l| {
                let name = |s: &str| format!("{prefix}.layer{l}.{s}");
                let attn = match config.mixing {
                    Mixing::Mean => None,
                    Mixing::Attention => Some([
                        params.add(&name("wq"), h, h, Init::FanIn, rng),
                        params.add(&name("wk"), h, h, Init::FanIn, rng),
                        params.add(&name("wv"), h, h, Init::FanIn, rng),
                    ]),
                };
                LayerLayout {
                    w1: params.add(&name("w1"), h, h, Init::FanIn, rng),
                    w2: params.add(&name("w2"), h, h, Init::FanIn, rng),
                    b: params.add(&name("b"), 1, h, Init::Zeros, rng),
                    attn,
                }
            })
            .collect();
        Encoder {
            config,
            tok,
            pos,
            seg,
            layers,
        }
    }

    pub fn forward(&self, p: &ParamSet, ids: &[u32], segments: &[u8]) -> Result<EncoderState> {
        let n = ids.len();
        if n > self.config.max_len {
            return Err(Error::SequenceTooLong {
                len: n,
                max_len: self.config.max_len,
            });
        }
        if n == 0 || segments.len() != n {
            return Err(Error::InvalidArgument("encoder input must be non-empty with one segment per token".into()));
        }
        if ids.iter().any(|&i| i as usize >= self.config.vocab_size) || segments.iter().any(|&s| s > 1) {
            return Err(Error::InvalidArgument("token or segment id out of range".into()));
        }
        let mut h: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut x = p.tensors[self.tok].row(ids[i] as usize).to_vec();
                axpy(&mut x, 1.0, p.tensors[self.pos].row(i));
                axpy(&mut x, 1.0, p.tensors[self.seg].row(segments[i] as usize));
                x
            })
            .collect();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (ctx, attn) = mix(p, layer, &h);
            let w1 = &p.tensors[layer.w1];
            let w2 = &p.tensors[layer.w2];
            let b = &p.tensors[layer.b].data;
            let act: Vec<Vec<f64>> = h
                .iter()
                .zip(&ctx)
                .map(|(hi, ci)| {
                    let mut u = b.clone();
                    matvec_add(w1, hi, &mut u);
                    matvec_add(w2, ci, &mut u);
                    u.iter().map(|x| x.tanh()).collect()
                })
                .collect();
            let next: Vec<Vec<f64>> = h
                .iter()
                .zip(&act)
                .map(|(hi, ai)| hi.iter().zip(ai).map(|(x, y)| x + y).collect())
                .collect();
            caches.push(LayerCache {
                input: std::mem::replace(&mut h, next),
                ctx,
                act,
                attn,
            });
        }
        Ok(EncoderState {
            hidden: h,
            ids: ids.to_vec(),
            segments: segments.to_vec(),
            layers: caches,
        })
    }

    /// Accumulate parameter gradients given `dhidden = ∂loss/∂T`.
    pub fn backward(&self, p: &ParamSet, state: &EncoderState, mut dh: Vec<Vec<f64>>, g: &mut ParamSet) {
        let n = state.ids.len();
        let hdim = self.config.hidden;
        for (layer, cache) in self.layers.iter().zip(&state.layers).rev() {
            let w1 = &p.tensors[layer.w1];
            let w2 = &p.tensors[layer.w2];
            let mut dctx = vec![vec![0.0; hdim]; n];
            let mut dinput = dh.clone();
            for i in 0..n {
                let du: Vec<f64> = dh[i]
                    .iter()
                    .zip(&cache.act[i])
                    .map(|(d, a)| d * (1.0 - a * a))
                    .collect();
                outer_add(&mut g.tensors[layer.w1], &du, &cache.input[i]);
                outer_add(&mut g.tensors[layer.w2], &du, &cache.ctx[i]);
                axpy(&mut g.tensors[layer.b].data, 1.0, &du);
                matvec_t_add(w1, &du, &mut dinput[i]);
                matvec_t_add(w2, &du, &mut dctx[i]);
            }
            mix_backward(p, layer, cache, &dctx, &mut dinput, g);
            dh = dinput;
        }
        for i in 0..n {
            axpy(g.tensors[self.tok].row_mut(state.ids[i] as usize), 1.0, &dh[i]);
            axpy(g.tensors[self.pos].row_mut(i), 1.0, &dh[i]);
            axpy(g.tensors[self.seg].row_mut(state.segments[i] as usize), 1.0, &dh[i]);
        }
    }
}

fn mean_of(h: &[Vec<f64>]) -> Vec<f64> {
    let mut m = vec![0.0; h[0].len()];
    for hi in h {
        axpy(&mut m, 1.0, hi);
    }
    let inv = 1.0 / h.len() as f64;
    m.iter_mut().for_each(|x| *x *= inv);
    m
}

fn mix(p: &ParamSet, layer: &LayerLayout, h: &[Vec<f64>]) -> (Vec<Vec<f64>>, Option<AttnCache>) {
    match layer.attn {
        None => (vec![mean_of(h); h.len()], None),
        Some([wq, wk, wv]) => {
            let scale = 1.0 / (h[0].len() as f64).sqrt();
            let q: Vec<Vec<f64>> = h.iter().map(|x| matvec(&p.tensors[wq], x)).collect();
            let k: Vec<Vec<f64>> = h.iter().map(|x| matvec(&p.tensors[wk], x)).collect();
            let v: Vec<Vec<f64>> = h.iter().map(|x| matvec(&p.tensors[wv], x)).collect();
            let probs: Vec<Vec<f64>> = q
                .iter()
                .map(|qi| softmax(&k.iter().map(|kj| dot(qi, kj) * scale).collect::<Vec<_>>()))
                .collect();
            let ctx = probs
                .iter()
                .map(|pi| {
                    let mut c = vec![0.0; h[0].len()];
                    for (pij, vj) in pi.iter().zip(&v) {
                        axpy(&mut c, *pij, vj);
                    }
                    c
                })
                .collect();
            (ctx, Some(AttnCache { q, k, v, p: probs }))
        }
    }
}

fn mix_backward(
    p: &ParamSet,
    layer: &LayerLayout,
    cache: &LayerCache,
    dctx: &[Vec<f64>],
    dinput: &mut [Vec<f64>],
    g: &mut ParamSet,
) {
    let n = dctx.len();
    match (&layer.attn, &cache.attn) {
        (None, _) => {
            let dm = mean_of(dctx);
            for d in dinput.iter_mut() {
                axpy(d, 1.0, &dm);
            }
        }
        (Some([wq, wk, wv]), Some(a)) => {
            let hdim = dctx[0].len();
            let scale = 1.0 / (hdim as f64).sqrt();
            let mut dq = vec![vec![0.0; hdim]; n];
            let mut dk = vec![vec![0.0; hdim]; n];
            let mut dv = vec![vec![0.0; hdim]; n];
            for i in 0..n {
                let dp: Vec<f64> = a.v.iter().map(|vj| dot(&dctx[i], vj)).collect();
                for j in 0..n {
                    axpy(&mut dv[j], a.p[i][j], &dctx[i]);
                }
                let da = softmax_backward(&a.p[i], &dp);
                for j in 0..n {
                    axpy(&mut dq[i], da[j] * scale, &a.k[j]);
                    axpy(&mut dk[j], da[j] * scale, &a.q[i]);
                }
            }
            for i in 0..n {
                let x = &cache.input[i];
                outer_add(&mut g.tensors[*wq], &dq[i], x);
                outer_add(&mut g.tensors[*wk], &dk[i], x);
                outer_add(&mut g.tensors[*wv], &dv[i], x);
                matvec_t_add(&p.tensors[*wq], &dq[i], &mut dinput[i]);
                matvec_t_add(&p.tensors[*wk], &dk[i], &mut dinput[i]);
                matvec_t_add(&p.tensors[*wv], &dv[i], &mut dinput[i]);
            }
        }
        (Some(_), None) => unreachable!("attention layer without attention cache"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn setup(mixing: Mixing) -> (Encoder, ParamSet) {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut ps = ParamSet::default();
        let cfg = EncoderConfig { vocab_size: 10, hidden: 4, layers: 2, max_len: 8, mixing };
        let enc = Encoder::new(cfg, &mut ps, &mut rng, "enc");
        (enc, ps)
    }

    #[test]
    fn zero_layers_leave_embeddings() {
        let (enc, mut ps) = setup(Mixing::Mean);
        for t in &mut ps.tensors {
            if t.name.contains("layer") {
                t.data.iter_mut().for_each(|x| *x = 0.0);
            }
        }
        let st = enc.forward(&ps, &[3, 4, 5], &[0, 1, 1]).unwrap();
        for i in 0..3 {
            let mut want = ps.tensors[enc.tok].row([3, 4, 5][i]).to_vec();
            axpy(&mut want, 1.0, ps.tensors[enc.pos].row(i));
            axpy(&mut want, 1.0, ps.tensors[enc.seg].row([0, 1, 1][i]));
            assert_eq!(st.hidden[i], want);
        }
    }

    #[test]
    fn mean_mixing_commutes_with_permutation() {
        let (enc, mut ps) = setup(Mixing::Mean);
        ps.tensors[enc.pos].data.iter_mut().for_each(|x| *x = 0.0);
        let a = enc.forward(&ps, &[1, 2, 3, 4], &[0, 0, 1, 1]).unwrap();
        let b = enc.forward(&ps, &[3, 1, 4, 2], &[1, 0, 1, 0]).unwrap();
        for (i, j) in [(0, 1), (1, 3), (2, 0), (3, 2)] {
            for (x, y) in a.hidden[i].iter().zip(&b.hidden[j]) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn too_long_is_an_error() {
        let (enc, ps) = setup(Mixing::Attention);
        assert!(matches!(enc.forward(&ps, &[1; 9], &[0; 9]), Err(Error::SequenceTooLong { .. })));
        assert!(enc.forward(&ps, &[11], &[0]).is_err());
    }
}
