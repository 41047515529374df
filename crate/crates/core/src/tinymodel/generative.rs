//! Encoder–decoder answer generator with a binary head on mean-pooled
//! decoder states.
//!
//! Decoder step `t` with input token `y_t`:
//! `d_t = emb(y_t) + pos(t)`, `c_t` = attention over encoder states with
//! query `Uq d_t` and keys `Uk T_j`, `m_t` = mean of `d_0..d_t`,
//! `g_t = d_t + tanh(U1 d_t + U2 c_t + U3 m_t + b)`,
//! `logits_t = Wo g_t + bo`. The classifier logit is `wc · mean_t(g_t) + bc`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::encoder::Encoder;
use super::extractive::TinyConfig;
use super::losses::{bce_instance, generative_instance};
use super::tensor::{axpy, dot, matvec, matvec_add, matvec_t_add, outer_add, softmax, softmax_backward, Init, ParamSet};
use super::train::Trainable;
use super::vocab::{TokenSequence, Vocab, BOS, EOS};
use crate::baselines::sigmoid;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GenExample {
    pub seq: TokenSequence,
    /// Answer tokens followed by the end marker.
    pub target: Vec<u32>,
    pub label: u8,
}

impl GenExample {
    /// Decoder inputs under teacher forcing: the start marker, then the
    /// target shifted right.
    pub fn decoder_input(&self) -> Vec<u32> {
        std::iter::once(BOS)
            .chain(self.target[..self.target.len() - 1].iter().copied())
            .collect()
    }
}

/// Which terms of `L = L_G + L_BCE` a backward pass differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossTerms {
    pub generative: bool,
    pub bce: bool,
}

impl LossTerms {
    pub const TOTAL: LossTerms = LossTerms { generative: true, bce: true };
    pub const GENERATIVE: LossTerms = LossTerms { generative: true, bce: false };
    pub const BCE: LossTerms = LossTerms { generative: false, bce: true };
}

#[derive(Debug, Clone)]
struct DecoderLayout {
    tok: usize,
    pos: usize,
    uq: usize,
    uk: usize,
    u1: usize,
    u2: usize,
    u3: usize,
    b: usize,
    wo: usize,
    bo: usize,
    wc: usize,
    bc: usize,
}

struct DecoderCache {
    inputs: Vec<u32>,
    d: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    k: Vec<Vec<f64>>,
    p: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    m: Vec<Vec<f64>>,
    a: Vec<Vec<f64>>,
    g: Vec<Vec<f64>>,
    pooled: Vec<f64>,
    logits: Vec<Vec<f64>>,
    cls_logit: f64,
}

#[derive(Debug, Clone)]
pub struct GenerativeModel {
    pub config: TinyConfig,
    pub vocab: Vocab,
    pub params: ParamSet,
    /// Weight on the positive term of the binary loss.
    pub pos_weight: f64,
    encoder: Encoder,
    dec: DecoderLayout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub tokens: Vec<u32>,
    pub text: String,
    /// `σ` of the classifier logit, the probability of the positive class.
    pub score: f64,
}

impl GenerativeModel {
    pub fn new(config: TinyConfig, vocab: Vocab, pos_weight: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x6e6);
        let mut params = ParamSet::default();
        let encoder = Encoder::new(config.encoder(vocab.len()), &mut params, &mut rng, "enc");
        let h = config.hidden;
        let v = vocab.len();
        let mut add = |name: &str, r: usize, c: usize, init: Init| params.add(name, r, c, init, &mut rng);
        let dec = DecoderLayout {
            tok: add("dec.tok", v, h, Init::Uniform(0.5)),
            pos: add("dec.pos", config.max_answer_len + 1, h, Init::Uniform(0.1)),
            uq: add("dec.uq", h, h, Init::FanIn),
            uk: add("dec.uk", h, h, Init::FanIn),
            u1: add("dec.u1", h, h, Init::FanIn),
            u2: add("dec.u2", h, h, Init::FanIn),
            u3: add("dec.u3", h, h, Init::FanIn),
            b: add("dec.b", 1, h, Init::Zeros),
            wo: add("dec.wo", v, h, Init::FanIn),
            bo: add("dec.bo", 1, v, Init::Zeros),
            wc: add("dec.wc", 1, h, Init::FanIn),
            bc: add("dec.bc", 1, 1, Init::Zeros),
        };
        GenerativeModel {
            config,
            vocab,
            params,
            pos_weight,
            encoder,
            dec,
        }
    }

    fn decode_forward(&self, enc: &[Vec<f64>], inputs: &[u32]) -> Result<DecoderCache> {
        let p = &self.params.tensors;
        let l = &self.dec;
        if inputs.is_empty() || inputs.len() > self.config.max_answer_len + 1 {
            return Err(Error::SequenceTooLong {
                len: inputs.len(),
                max_len: self.config.max_answer_len + 1,
            });
        }
        if inputs.iter().any(|&y| y as usize >= self.vocab.len()) {
            return Err(Error::InvalidArgument("decoder token outside vocabulary".into()));
        }
        let h = self.config.hidden;
        let scale = 1.0 / (h as f64).sqrt();
        let k: Vec<Vec<f64>> = enc.iter().map(|t| matvec(&p[l.uk], t)).collect();
        let mut cache = DecoderCache {
            inputs: inputs.to_vec(),
            d: Vec::new(),
            q: Vec::new(),
            k,
            p: Vec::new(),
            c: Vec::new(),
            m: Vec::new(),
            a: Vec::new(),
            g: Vec::new(),
            pooled: vec![0.0; h],
            logits: Vec::new(),
            cls_logit: 0.0,
        };
        let mut running = vec![0.0; h];
        for (t, &y) in inputs.iter().enumerate() {
            let mut d = p[l.tok].row(y as usize).to_vec();
            axpy(&mut d, 1.0, p[l.pos].row(t));
            let q = matvec(&p[l.uq], &d);
            let probs = softmax(&cache.k.iter().map(|kj| dot(&q, kj) * scale).collect::<Vec<_>>());
            let mut c = vec![0.0; h];
            for (pj, tj) in probs.iter().zip(enc) {
                axpy(&mut c, *pj, tj);
            }
            axpy(&mut running, 1.0, &d);
            let m: Vec<f64> = running.iter().map(|x| x / (t + 1) as f64).collect();
            let mut u = p[l.b].data.clone();
            matvec_add(&p[l.u1], &d, &mut u);
            matvec_add(&p[l.u2], &c, &mut u);
            matvec_add(&p[l.u3], &m, &mut u);
            let a: Vec<f64> = u.iter().map(|x| x.tanh()).collect();
            let g: Vec<f64> = d.iter().zip(&a).map(|(x, y)| x + y).collect();
            let mut logits = p[l.bo].data.clone();
            matvec_add(&p[l.wo], &g, &mut logits);
            axpy(&mut cache.pooled, 1.0 / inputs.len() as f64, &g);
            cache.d.push(d);
            cache.q.push(q);
            cache.p.push(probs);
            cache.c.push(c);
            cache.m.push(m);
            cache.a.push(a);
            cache.g.push(g);
            cache.logits.push(logits);
        }
        cache.cls_logit = dot(p[l.wc].row(0), &cache.pooled) + p[l.bc].data[0];
        Ok(cache)
    }

    /// Back through the decoder; returns `∂loss/∂T` for the encoder.
    fn decode_backward(&self, enc: &[Vec<f64>], cache: &DecoderCache, dlogits: &[Vec<f64>], dz: f64, g: &mut ParamSet) -> Vec<Vec<f64>> {
        let p = &self.params.tensors;
        let l = &self.dec;
        let h = self.config.hidden;
        let n = cache.inputs.len();
        let scale = 1.0 / (h as f64).sqrt();
        let mut denc = vec![vec![0.0; h]; enc.len()];
        let mut dk = vec![vec![0.0; h]; enc.len()];
        let mut dd = vec![vec![0.0; h]; n];
        let mut dm = vec![vec![0.0; h]; n];

        if dz != 0.0 {
            axpy(g.tensors[l.wc].row_mut(0), dz, &cache.pooled);
            g.tensors[l.bc].data[0] += dz;
        }
        for t in 0..n {
            let mut dg = vec![0.0; h];
            if let Some(dl) = dlogits.get(t) {
                outer_add(&mut g.tensors[l.wo], dl, &cache.g[t]);
                axpy(&mut g.tensors[l.bo].data, 1.0, dl);
                matvec_t_add(&p[l.wo], dl, &mut dg);
            }
            if dz != 0.0 {
                axpy(&mut dg, dz / n as f64, p[l.wc].row(0));
            }
            let du: Vec<f64> = dg.iter().zip(&cache.a[t]).map(|(x, a)| x * (1.0 - a * a)).collect();
            outer_add(&mut g.tensors[l.u1], &du, &cache.d[t]);
            outer_add(&mut g.tensors[l.u2], &du, &cache.c[t]);
            outer_add(&mut g.tensors[l.u3], &du, &cache.m[t]);
            axpy(&mut g.tensors[l.b].data, 1.0, &du);
            axpy(&mut dd[t], 1.0, &dg);
            matvec_t_add(&p[l.u1], &du, &mut dd[t]);
            matvec_t_add(&p[l.u3], &du, &mut dm[t]);
            let mut dc = vec![0.0; h];
            matvec_t_add(&p[l.u2], &du, &mut dc);

            let dp: Vec<f64> = enc.iter().map(|tj| dot(&dc, tj)).collect();
            for (j, pj) in cache.p[t].iter().enumerate() {
                axpy(&mut denc[j], *pj, &dc);
            }
            let da = softmax_backward(&cache.p[t], &dp);
            let mut dq = vec![0.0; h];
            for j in 0..enc.len() {
                axpy(&mut dq, da[j] * scale, &cache.k[j]);
                axpy(&mut dk[j], da[j] * scale, &cache.q[t]);
            }
            outer_add(&mut g.tensors[l.uq], &dq, &cache.d[t]);
            matvec_t_add(&p[l.uq], &dq, &mut dd[t]);
        }
        // m_t averages d_0..d_t
        let mut suffix = vec![0.0; h];
        for t in (0..n).rev() {
            axpy(&mut suffix, 1.0 / (t + 1) as f64, &dm[t]);
            axpy(&mut dd[t], 1.0, &suffix);
        }
        for t in 0..n {
            axpy(g.tensors[l.tok].row_mut(cache.inputs[t] as usize), 1.0, &dd[t]);
            axpy(g.tensors[l.pos].row_mut(t), 1.0, &dd[t]);
        }
        for j in 0..enc.len() {
            outer_add(&mut g.tensors[l.uk], &dk[j], &enc[j]);
            matvec_t_add(&p[l.uk], &dk[j], &mut denc[j]);
        }
        denc
    }

    /// Loss terms on one example under teacher forcing, accumulating
    /// `scale ·` their gradient into `g`. Returns `(L_G, L_BCE)`.
    pub fn accumulate_terms(&self, ex: &GenExample, terms: LossTerms, scale: f64, g: &mut ParamSet) -> Result<(f64, f64)> {
        if ex.target.is_empty() {
            return Err(Error::InvalidArgument("empty generation target".into()));
        }
        if ex.label > 1 {
            return Err(Error::InvalidArgument("binary label must be 0 or 1".into()));
        }
        let st = self.encoder.forward(&self.params, &ex.seq.ids, &ex.seq.segments)?;
        let cache = self.decode_forward(&st.hidden, &ex.decoder_input())?;
        let (lg, dlogits) = generative_instance(&cache.logits, &ex.target);
        let (lb, dz) = bce_instance(cache.cls_logit, ex.label, self.pos_weight);
        let dlogits: Vec<Vec<f64>> = if terms.generative {
            dlogits
                .into_iter()
                .map(|v| v.into_iter().map(|x| x * scale).collect())
                .collect()
        } else {
            Vec::new()
        };
        let dz = if terms.bce { dz * scale } else { 0.0 };
        let denc = self.decode_backward(&st.hidden, &cache, &dlogits, dz, g);
        self.encoder.backward(&self.params, &st, denc, g);
        Ok((lg, lb))
    }

    /// Greedy decoding followed by the classifier on the generated prefix.
    pub fn generate(&self, seq: &TokenSequence) -> Result<Generation> {
        let st = self.encoder.forward(&self.params, &seq.ids, &seq.segments)?;
        let mut inputs = vec![BOS];
        let mut tokens = Vec::new();
        loop {
            let cache = self.decode_forward(&st.hidden, &inputs)?;
            let last = cache.logits.last().expect("non-empty decoder input");
            let next = last
                .iter()
                .enumerate()
                .fold((0usize, f64::NEG_INFINITY), |acc, (i, &z)| if z > acc.1 { (i, z) } else { acc })
                .0 as u32;
            if next == EOS || tokens.len() >= self.config.max_answer_len {
                return Ok(Generation {
                    text: self.vocab.decode(&tokens),
                    tokens,
                    score: sigmoid(cache.cls_logit),
                });
            }
            tokens.push(next);
            inputs.push(next);
        }
    }
}

impl Trainable for GenerativeModel {
    type Example = GenExample;

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn accumulate(&self, ex: &GenExample, scale: f64, g: &mut ParamSet) -> Result<f64> {
        let (lg, lb) = self.accumulate_terms(ex, LossTerms::TOTAL, scale, g)?;
        Ok(super::losses::loss_total_generative(lg, lb))
    }
}
