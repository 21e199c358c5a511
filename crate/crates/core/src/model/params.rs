use std::io::{Read, Write};

use babel_numerics::{read_tensor, write_tensor, Graph, Tensor, Var};
use rand::Rng;
use sha2::{Digest, Sha256};

use super::ModelConfig;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Init {
    /// Uniform in `±1/sqrt(fan_in)`.
    FanIn(usize),
    Ones,
    Zeros,
}

#[derive(Clone, Debug)]
pub(crate) struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct BlockLayout {
    pub conv_k: usize,
    pub conv_b: usize,
    pub ln1: (usize, usize),
    pub ff1: (usize, usize),
    pub ff2: (usize, usize),
    pub ln2: (usize, usize),
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct GroupLayout {
    /// Opening convolution (kernel, bias, input channels per column).
    pub open: (usize, usize),
    pub blocks: Vec<BlockLayout>,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct HeadLayout {
    pub embed: usize,
    /// `(w_ih, w_hh, b_ih, b_hh)` per layer.
    pub gru: Vec<(usize, usize, usize, usize)>,
    /// `(w_key, w_value)` per attention round.
    pub att: Vec<(usize, usize)>,
    pub out: (usize, usize),
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Layout {
    pub lang_embed: Option<usize>,
    pub groups: Vec<GroupLayout>,
    pub enc_out: (usize, usize),
    pub heads: Vec<HeadLayout>,
}

struct Builder {
    specs: Vec<ParamSpec>,
}

impl Builder {
    fn add(&mut self, name: String, shape: &[usize], init: Init) -> usize {
        self.specs.push(ParamSpec {
            name,
            shape: shape.to_vec(),
            init,
        });
        self.specs.len() - 1
    }

    fn linear(&mut self, prefix: &str, n_in: usize, n_out: usize) -> (usize, usize) {
        (
            self.add(format!("{prefix}.w"), &[n_in, n_out], Init::FanIn(n_in)),
            self.add(format!("{prefix}.b"), &[n_out], Init::FanIn(n_in)),
        )
    }

    fn norm(&mut self, prefix: &str, n: usize) -> (usize, usize) {
        (
            self.add(format!("{prefix}.gamma"), &[n], Init::Ones),
            self.add(format!("{prefix}.beta"), &[n], Init::Zeros),
        )
    }

    fn head(&mut self, h: usize, c: &ModelConfig) -> HeadLayout {
        let (hd, v) = (c.decoder_hidden, c.vocab_sizes[h]);
        let embed = self.add(format!("dec{h}.embed"), &[v, hd], Init::FanIn(1));
        let gru = (0..c.decoder_layers)
            .map(|l| {
                let p = format!("dec{h}.gru{l}");
                (
                    self.add(format!("{p}.w_ih"), &[hd, 3 * hd], Init::FanIn(hd)),
                    self.add(format!("{p}.w_hh"), &[hd, 3 * hd], Init::FanIn(hd)),
                    self.add(format!("{p}.b_ih"), &[3 * hd], Init::FanIn(hd)),
                    self.add(format!("{p}.b_hh"), &[3 * hd], Init::FanIn(hd)),
                )
            })
            .collect();
        let att = (0..c.attention_rounds)
            .map(|r| {
                let e = c.encoder_dim;
                (
                    self.add(format!("dec{h}.att{r}.key"), &[e, hd], Init::FanIn(e)),
                    self.add(format!("dec{h}.att{r}.value"), &[e, hd], Init::FanIn(e)),
                )
            })
            .collect();
        let out = self.linear(&format!("dec{h}.out"), hd, v);
        HeadLayout { embed, gru, att, out }
    }
}

pub(crate) fn layout(c: &ModelConfig) -> Result<(Vec<ParamSpec>, Layout)> {
    c.validate()?;
    let mut b = Builder { specs: Vec::new() };
    let (w, k) = (c.tds_width, c.kernel_width);
    let lang_embed = (c.lang_embed_dim > 0).then(|| {
        b.add(
            "enc.lang_embed".into(),
            &[c.languages.len(), c.lang_embed_dim],
            Init::FanIn(1),
        )
    });
    let mut groups = Vec::new();
    let mut prev_c = 0;
    for (g, &(n_blocks, ch)) in c.tds_groups.iter().enumerate() {
        let open = if g == 0 {
            let c_in = c.input_dim + c.lang_embed_dim;
            (
                b.add("enc.input.kernel".into(), &[k, c_in, w * ch], Init::FanIn(k * c_in)),
                b.add("enc.input.bias".into(), &[w * ch], Init::FanIn(k * c_in)),
            )
        } else {
            (
                b.add(
                    format!("enc.g{g}.open.kernel"),
                    &[k, prev_c, ch],
                    Init::FanIn(k * prev_c),
                ),
                b.add(format!("enc.g{g}.open.bias"), &[w * ch], Init::FanIn(k * prev_c)),
            )
        };
        let d = w * ch;
        let blocks = (0..n_blocks)
            .map(|i| {
                let p = format!("enc.g{g}.b{i}");
                BlockLayout {
                    conv_k: b.add(format!("{p}.conv.kernel"), &[k, ch, ch], Init::FanIn(k * ch)),
                    conv_b: b.add(format!("{p}.conv.bias"), &[d], Init::FanIn(k * ch)),
                    ln1: b.norm(&format!("{p}.ln1"), d),
                    ff1: b.linear(&format!("{p}.ff1"), d, c.ff_mult * d),
                    ff2: b.linear(&format!("{p}.ff2"), c.ff_mult * d, d),
                    ln2: b.norm(&format!("{p}.ln2"), d),
                }
            })
            .collect();
        groups.push(GroupLayout { open, blocks });
        prev_c = ch;
    }
    let enc_out = b.linear("enc.out", w * prev_c, c.encoder_dim);
    let heads = (0..c.n_heads).map(|h| b.head(h, c)).collect();
    Ok((
        b.specs,
        Layout {
            lang_embed,
            groups,
            enc_out,
            heads,
        },
    ))
}

/// Total trainable scalars, computed from shapes alone.
pub fn parameter_count(config: &ModelConfig) -> Result<usize> {
    let (specs, _) = layout(config)?;
    Ok(specs.iter().map(|s| s.shape.iter().product::<usize>()).sum())
}

fn init_tensor<R: Rng + ?Sized>(spec: &ParamSpec, rng: &mut R) -> Tensor {
    match spec.init {
        Init::FanIn(f) => Tensor::uniform(&spec.shape, 1.0 / (f as f64).sqrt(), rng),
        Init::Ones => Tensor::filled(&spec.shape, 1.0),
        Init::Zeros => Tensor::zeros(&spec.shape),
    }
}

/// Every trainable tensor of a model, in a fixed order, plus its config.
#[derive(Clone, Debug)]
pub struct ModelParameters {
    config: ModelConfig,
    names: Vec<String>,
    tensors: Vec<Tensor>,
    pub(crate) layout: Layout,
}

impl PartialEq for ModelParameters {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.names == other.names && self.tensors == other.tensors
    }
}

const PARAMS_MAGIC: &[u8; 4] = b"BSPM";

impl ModelParameters {
    /// Fresh parameters: uniform fan-in initialization, layer-norm gains at
    /// one and shifts at zero.
    pub fn build<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<Self> {
        let (specs, layout) = layout(config)?;
        let tensors = specs.iter().map(|s| init_tensor(s, rng)).collect();
        Ok(Self {
            config: config.clone(),
            names: specs.into_iter().map(|s| s.name).collect(),
            tensors,
            layout,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::all_finite)
    }

    pub fn is_encoder(name: &str) -> bool {
        name.starts_with("enc.")
    }

    /// Index of the head owning `name`, if it is a decoder tensor.
    pub fn head_of(name: &str) -> Option<usize> {
        name.strip_prefix("dec")?.split('.').next()?.parse().ok()
    }

    /// SHA-256 over the names and values of every encoder tensor.
    pub fn encoder_checksum(&self) -> String {
        let mut h = Sha256::new();
        for (n, t) in self.names.iter().zip(&self.tensors) {
            if Self::is_encoder(n) {
                h.update(n.as_bytes());
                for v in t.data() {
                    h.update(v.to_le_bytes());
                }
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Registers every tensor as a trainable leaf of `g`.
    pub fn register(&self, g: &mut Graph) -> Vec<Var> {
        self.tensors.iter().map(|t| g.param(t.clone())).collect()
    }

    /// Replaces the decoder with one freshly initialized head of
    /// `new_vocab_size` outputs; encoder tensors are left untouched.
    pub fn reinit_decoder<R: Rng + ?Sized>(&self, new_vocab_size: usize, rng: &mut R) -> Result<Self> {
        if self.config.n_heads != 1 {
            return Err(Error::Model(format!(
                "decoder re-initialization needs a single-head model, this one has {}",
                self.config.n_heads
            )));
        }
        let config = ModelConfig {
            vocab_sizes: vec![new_vocab_size],
            ..self.config.clone()
        };
        self.rebuild(config, rng)
    }

    /// Appends a language-embedding row for `lang`; existing rows and every
    /// other tensor keep their values.
    pub fn add_language<R: Rng + ?Sized>(&self, lang: &str, rng: &mut R) -> Result<Self> {
        if self.config.languages.iter().any(|l| l == lang) {
            return Err(Error::KnownLanguage(lang.to_string()));
        }
        let mut config = self.config.clone();
        config.languages.push(lang.to_string());
        self.rebuild(config, rng)
    }

    /// New parameters for `config`, copying every tensor whose name and shape
    /// survive (decoder tensors are always fresh when the vocabulary changes;
    /// the language table is extended row-wise).
    fn rebuild<R: Rng + ?Sized>(&self, config: ModelConfig, rng: &mut R) -> Result<Self> {
        let (specs, layout) = layout(&config)?;
        let vocab_changed = config.vocab_sizes != self.config.vocab_sizes;
        let mut tensors = Vec::with_capacity(specs.len());
        for s in &specs {
            let old = self.names.iter().position(|n| *n == s.name).map(|i| &self.tensors[i]);
            let keep = !(vocab_changed && Self::head_of(&s.name).is_some());
            let t = match old {
                Some(t) if keep && t.shape() == s.shape.as_slice() => t.clone(),
                Some(t) if keep && s.name == "enc.lang_embed" && t.cols() == s.shape[1] => {
                    let mut data = t.data().to_vec();
                    let fresh = init_tensor(
                        &ParamSpec {
                            shape: vec![s.shape[0] - t.rows(), s.shape[1]],
                            ..s.clone()
                        },
                        rng,
                    );
                    data.extend_from_slice(fresh.data());
                    Tensor::new(&s.shape, data)?
                }
                _ => init_tensor(s, rng),
            };
            tensors.push(t);
        }
        Ok(Self {
            config,
            names: specs.into_iter().map(|s| s.name).collect(),
            tensors,
            layout,
        })
    }

    /// `BSPM`, u32 count, then per tensor a u32-prefixed UTF-8 name and the
    /// tensor in the numerics binary format.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let io = |e: std::io::Error| babel_numerics::NumericsError::Io(e);
        w.write_all(PARAMS_MAGIC).map_err(io)?;
        w.write_all(&(self.names.len() as u32).to_le_bytes()).map_err(io)?;
        for (n, t) in self.names.iter().zip(&self.tensors) {
            w.write_all(&(n.len() as u32).to_le_bytes()).map_err(io)?;
            w.write_all(n.as_bytes()).map_err(io)?;
            write_tensor(w, t)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(config: &ModelConfig, r: &mut R) -> Result<Self> {
        let io = |e: std::io::Error| babel_numerics::NumericsError::Io(e);
        let (specs, layout) = layout(config)?;
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != PARAMS_MAGIC {
            return Err(Error::Model("parameter file has a bad magic number".into()));
        }
        let mut u32buf = [0u8; 4];
        r.read_exact(&mut u32buf).map_err(io)?;
        let count = u32::from_le_bytes(u32buf) as usize;
        if count != specs.len() {
            return Err(Error::Model(format!(
                "parameter file holds {count} tensors, config needs {}",
                specs.len()
            )));
        }
        let mut tensors = Vec::with_capacity(count);
        for s in &specs {
            r.read_exact(&mut u32buf).map_err(io)?;
            let mut name = vec![0u8; u32::from_le_bytes(u32buf) as usize];
            r.read_exact(&mut name).map_err(io)?;
            let name = String::from_utf8(name).map_err(|_| Error::Model("non-UTF-8 tensor name".into()))?;
            let t = read_tensor(r)?;
            if name != s.name || t.shape() != s.shape.as_slice() {
                return Err(Error::Model(format!(
                    "expected {} {:?}, found {name} {:?}",
                    s.name,
                    s.shape,
                    t.shape()
                )));
            }
            if !t.all_finite() {
                return Err(Error::Model(format!("{name} holds non-finite values")));
            }
            tensors.push(t);
        }
        Ok(Self {
            config: config.clone(),
            names: specs.into_iter().map(|s| s.name).collect(),
            tensors,
            layout,
        })
    }
}
