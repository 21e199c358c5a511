use babel_numerics::{Graph, Padding, Tensor, Var};

use super::params::HeadLayout;
use super::ModelParameters;
use crate::error::{Error, Result};
use crate::tokenizer::{EOS, PAD};

fn linear(g: &mut Graph, x: Var, p: &[Var], (w, b): (usize, usize)) -> Result<Var> {
    let y = g.matmul(x, p[w])?;
    Ok(g.add_row(y, p[b])?)
}

/// Keys and values of every attention round, computed once per utterance.
struct Memory {
    keys_t: Vec<Var>,
    values: Vec<Var>,
}

impl ModelParameters {
    fn lang_index(&self, lang: Option<&str>) -> Result<Option<usize>> {
        let c = self.config();
        if c.lang_embed_dim == 0 {
            return Ok(None);
        }
        let lang = lang.ok_or_else(|| Error::Model("this model needs a language id".into()))?;
        c.languages
            .iter()
            .position(|l| l == lang)
            .map(Some)
            .ok_or_else(|| Error::UnknownLanguage(lang.to_string()))
    }

    pub fn check_head(&self, head: usize) -> Result<()> {
        if head >= self.config().n_heads {
            return Err(Error::Model(format!(
                "head {head} out of range ({} heads)",
                self.config().n_heads
            )));
        }
        Ok(())
    }

    /// Encoder output (`ceil-subsampled T x encoder_dim`) for one utterance.
    pub fn encode(&self, g: &mut Graph, p: &[Var], features: &Tensor, lang: Option<&str>) -> Result<Var> {
        let c = self.config();
        if features.rank() != 2 || features.cols() != c.input_dim {
            return Err(Error::Model(format!(
                "features must be T x {}, got {:?}",
                c.input_dim,
                features.shape()
            )));
        }
        let lang = self.lang_index(lang)?;
        let t = features.rows();
        let mut x = g.constant(features.clone());
        if let (Some(row), Some(table)) = (lang, self.layout.lang_embed) {
            let e = g.embedding(p[table], &vec![row; t])?;
            x = g.concat(&[x, e], 1)?;
        }
        let w = c.tds_width;
        for (gi, group) in self.layout.groups.iter().enumerate() {
            let width = if gi == 0 { 1 } else { w };
            let y = g.conv1d_shared(x, p[group.open.0], c.strides[gi], Padding::Same, width)?;
            let y = g.add_row(y, p[group.open.1])?;
            x = g.relu(y)?;
            for b in &group.blocks {
                let y = g.conv1d_shared(x, p[b.conv_k], 1, Padding::Same, w)?;
                let y = g.add_row(y, p[b.conv_b])?;
                let y = g.relu(y)?;
                let y = g.dropout(y, c.dropout)?;
                let s = g.add(x, y)?;
                x = g.layer_norm(s, p[b.ln1.0], p[b.ln1.1])?;
                let h = linear(g, x, p, b.ff1)?;
                let h = g.relu(h)?;
                let h = g.dropout(h, c.dropout)?;
                let h = linear(g, h, p, b.ff2)?;
                let s = g.add(x, h)?;
                x = g.layer_norm(s, p[b.ln2.0], p[b.ln2.1])?;
            }
        }
        linear(g, x, p, self.layout.enc_out)
    }

    fn memory(&self, g: &mut Graph, p: &[Var], enc: Var, head: &HeadLayout) -> Result<Memory> {
        let mut m = Memory {
            keys_t: Vec::new(),
            values: Vec::new(),
        };
        for &(wk, wv) in &head.att {
            let k = g.matmul(enc, p[wk])?;
            m.keys_t.push(g.transpose(k)?);
            m.values.push(g.matmul(enc, p[wv])?);
        }
        Ok(m)
    }

    /// `q + softmax(q K^T / sqrt(H)) V` for each row of `q`.
    fn attend(&self, g: &mut Graph, q: Var, m: &Memory, round: usize) -> Result<Var> {
        let scale = 1.0 / (self.config().decoder_hidden as f64).sqrt();
        let s = g.matmul(q, m.keys_t[round])?;
        let s = g.scale(s, scale)?;
        let a = g.softmax(s)?;
        let ctx = g.matmul(a, m.values[round])?;
        Ok(g.add(q, ctx)?)
    }

    /// Logits (`L x V`) for predicting `targets`, feeding `EOS` then
    /// `targets[..L-1]`; row `t` only sees targets before `t`.
    pub fn decode_teacher_forced(
        &self,
        g: &mut Graph,
        p: &[Var],
        enc: Var,
        targets: &[usize],
        head: usize,
    ) -> Result<Var> {
        self.check_head(head)?;
        let c = self.config();
        let v = c.vocab_sizes[head];
        if targets.is_empty() {
            return Err(Error::Model("empty target sequence".into()));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= v) {
            return Err(Error::Model(format!(
                "token id {bad} outside head {head} vocabulary of {v}"
            )));
        }
        let hl = &self.layout.heads[head];
        let mem = self.memory(g, p, enc, hl)?;
        let inputs: Vec<usize> = std::iter::once(EOS)
            .chain(targets[..targets.len() - 1].iter().copied())
            .collect();
        let mut x = g.embedding(p[hl.embed], &inputs)?;
        for (l, &(w_ih, w_hh, b_ih, b_hh)) in hl.gru.iter().enumerate() {
            let gx_all = linear(g, x, p, (w_ih, b_ih))?;
            let mut h = g.constant(Tensor::zeros(&[1, c.decoder_hidden]));
            let mut states = Vec::with_capacity(inputs.len());
            for t in 0..inputs.len() {
                let gx = g.slice_rows(gx_all, t, 1)?;
                h = g.gru_step(gx, h, p[w_hh], p[b_hh])?;
                states.push(h);
            }
            let mut y = if states.len() == 1 {
                states[0]
            } else {
                g.concat(&states, 0)?
            };
            if l < hl.att.len() {
                y = self.attend(g, y, &mem, l)?;
            }
            x = g.dropout(y, c.dropout)?;
        }
        linear(g, x, p, hl.out)
    }

    /// Mean token cross-entropy of one utterance.
    pub fn utterance_loss(
        &self,
        g: &mut Graph,
        p: &[Var],
        features: &Tensor,
        lang: Option<&str>,
        targets: &[usize],
        head: usize,
    ) -> Result<Var> {
        let enc = self.encode(g, p, features, lang)?;
        let logits = self.decode_teacher_forced(g, p, enc, targets, head)?;
        Ok(g.cross_entropy(logits, targets, PAD)?)
    }

    /// Argmax decoding until `EOS` or `max_len` tokens; the `EOS` is not
    /// included in the result.
    pub fn decode_greedy(
        &self,
        features: &Tensor,
        lang: Option<&str>,
        head: usize,
        max_len: usize,
    ) -> Result<Vec<usize>> {
        self.check_head(head)?;
        let c = self.config();
        let mut g = Graph::new();
        let p: Vec<Var> = self.tensors().iter().map(|t| g.constant(t.clone())).collect();
        let enc = self.encode(&mut g, &p, features, lang)?;
        let hl = &self.layout.heads[head];
        let mem = self.memory(&mut g, &p, enc, hl)?;
        let mut hs: Vec<Var> = (0..hl.gru.len())
            .map(|_| g.constant(Tensor::zeros(&[1, c.decoder_hidden])))
            .collect();
        let mut prev = EOS;
        let mut out = Vec::new();
        while out.len() < max_len {
            let mut x = g.embedding(p[hl.embed], &[prev])?;
            for (l, &(w_ih, w_hh, b_ih, b_hh)) in hl.gru.iter().enumerate() {
                let gx = linear(&mut g, x, &p, (w_ih, b_ih))?;
                hs[l] = g.gru_step(gx, hs[l], p[w_hh], p[b_hh])?;
                x = if l < hl.att.len() {
                    self.attend(&mut g, hs[l], &mem, l)?
                } else {
                    hs[l]
                };
            }
            let logits = linear(&mut g, x, &p, hl.out)?;
            let row = g.value(logits).data();
            let best = (0..row.len()).fold(0, |b, i| if row[i] > row[b] { i } else { b });
            if best == EOS {
                break;
            }
            out.push(best);
            prev = best;
        }
        Ok(out)
    }
}
