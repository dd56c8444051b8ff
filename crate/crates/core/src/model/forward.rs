use super::{ModelConfig, ModelError, ModelWeights, Positional};
use crate::autodiff::{Real, Tape, Tensor, Var};
use crate::dataset::epoch_seed;

pub const LN_EPS: f64 = 1e-5;

/// Training enables dropout; `seed` fixes every dropout mask of the pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Mode {
    pub training: bool,
    pub seed: u64,
}

impl Mode {
    pub fn inference() -> Self {
        Self {
            training: false,
            seed: 0,
        }
    }

    pub fn training(seed: u64) -> Self {
        Self {
            training: true,
            seed,
        }
    }
}

/// Splits `[B, C, W]` (or `[C, W]`) into `[B, N, C²]` patches. Patch `i`
/// holds columns `[iC, (i+1)C)`, flattened channel-major.
pub fn patchify<S: Real>(x: &Tensor<S>, channels: usize) -> Result<Tensor<S>, ModelError> {
    let (batch, c, w, batched) = match *x.shape() {
        [c, w] => (1, c, w, false),
        [b, c, w] => (b, c, w, true),
        _ => return Err(ModelError::Input(format!("expected [B, C, W], got {:?}", x.shape()))),
    };
    if c != channels {
        return Err(ModelError::Input(format!("input has {c} channels, model expects {channels}")));
    }
    if w % c != 0 {
        return Err(ModelError::Config(format!(
            "W mod C must be 0: window {w} is not divisible by {c} channels"
        )));
    }
    let n = w / c;
    let src = x.data();
    let mut out = Vec::with_capacity(src.len());
    for b in 0..batch {
        let seg = &src[b * c * w..(b + 1) * c * w];
        for i in 0..n {
            for ch in 0..c {
                out.extend_from_slice(&seg[ch * w + i * c..ch * w + (i + 1) * c]);
            }
        }
    }
    let shape = if batched { vec![batch, n, c * c] } else { vec![n, c * c] };
    Ok(Tensor::from_vec(&shape, out)?)
}

/// Inverse of [`patchify`].
pub fn unpatchify<S: Real>(patches: &Tensor<S>, channels: usize) -> Result<Tensor<S>, ModelError> {
    let c = channels;
    let (batch, n, batched) = match *patches.shape() {
        [n, p] if p == c * c => (1, n, false),
        [b, n, p] if p == c * c => (b, n, true),
        _ => {
            return Err(ModelError::Input(format!(
                "expected [B, N, {}], got {:?}",
                c * c,
                patches.shape()
            )))
        }
    };
    let w = n * c;
    let src = patches.data();
    let mut out = vec![S::zero(); src.len()];
    for b in 0..batch {
        for i in 0..n {
            for ch in 0..c {
                let from = b * n * c * c + i * c * c + ch * c;
                let to = b * c * w + ch * w + i * c;
                out[to..to + c].copy_from_slice(&src[from..from + c]);
            }
        }
    }
    let shape = if batched { vec![batch, c, w] } else { vec![c, w] };
    Ok(Tensor::from_vec(&shape, out)?)
}

/// Fixed sine/cosine positions, `[T, d]`.
pub fn sinusoidal_table<S: Real>(tokens: usize, d: usize) -> Tensor<S> {
    let data = (0..tokens)
        .flat_map(|pos| {
            (0..d).map(move |j| {
                let rate = 10_000f64.powf((2 * (j / 2)) as f64 / d as f64);
                let angle = pos as f64 / rate;
                S::from_f64(if j % 2 == 0 { angle.sin() } else { angle.cos() })
            })
        })
        .collect();
    Tensor::from_vec(&[tokens, d], data).expect("positive table shape")
}

#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub weight: Var,
    pub bias: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct Norm {
    pub gain: Var,
    pub bias: Var,
}

#[derive(Clone, Debug)]
pub struct LayerVars {
    pub norm1: Norm,
    pub w_q: Linear,
    pub w_k: Linear,
    pub w_v: Linear,
    pub w_msa: Linear,
    pub norm2: Norm,
    pub mlp: Vec<Linear>,
}

/// Model parameters registered on a tape, in layout order.
#[derive(Clone, Debug)]
pub struct ModelVars {
    pub all: Vec<Var>,
    pub e: Var,
    pub x_cls: Var,
    pub e_pos: Option<Var>,
    pub layers: Vec<LayerVars>,
    pub norm_final: Norm,
    pub head: [Linear; 3],
}

impl ModelVars {
    pub fn register<S: Real>(tape: &mut Tape<S>, weights: &ModelWeights<S>) -> Self {
        let all: Vec<Var> = weights
            .params
            .iter()
            .map(|p| tape.leaf(p.value.clone(), p.trainable))
            .collect();
        let mut it = all.iter().copied();
        let mut next = || it.next().expect("parameter list matches layout");
        let config = &weights.config;
        let e = next();
        let x_cls = next();
        let e_pos = (config.positional == Positional::Learned).then(&mut next);
        let lin = |next: &mut dyn FnMut() -> Var| Linear {
            weight: next(),
            bias: next(),
        };
        let norm = |next: &mut dyn FnMut() -> Var| Norm {
            gain: next(),
            bias: next(),
        };
        let layers = (0..config.num_layers)
            .map(|_| LayerVars {
                norm1: norm(&mut next),
                w_q: lin(&mut next),
                w_k: lin(&mut next),
                w_v: lin(&mut next),
                w_msa: lin(&mut next),
                norm2: norm(&mut next),
                mlp: (0..=config.encoder_mlp_layers).map(|_| lin(&mut next)).collect(),
            })
            .collect();
        let norm_final = norm(&mut next);
        let head = [lin(&mut next), lin(&mut next), lin(&mut next)];
        Self {
            all,
            e,
            x_cls,
            e_pos,
            layers,
            norm_final,
            head,
        }
    }
}

fn last_axis<S: Real>(tape: &Tape<S>, v: Var) -> usize {
    tape.shape(v).len() - 1
}

pub fn linear<S: Real>(tape: &mut Tape<S>, x: Var, l: Linear) -> Result<Var, ModelError> {
    let y = tape.matmul(x, l.weight)?;
    Ok(tape.add_broadcast(y, l.bias)?)
}

pub fn layer_norm<S: Real>(tape: &mut Tape<S>, x: Var, n: Norm) -> Result<Var, ModelError> {
    Ok(tape.layer_norm(x, n.gain, n.bias, S::from_f64(LN_EPS))?)
}

/// `softmax(Q Kᵀ / √d_h) V` over the token axis. Returns the output and the
/// attention matrix.
pub fn self_attention_head<S: Real>(
    tape: &mut Tape<S>,
    q: Var,
    k: Var,
    v: Var,
) -> Result<(Var, Var), ModelError> {
    let dh = *tape.shape(q).last().unwrap();
    let kt = tape.transpose(k)?;
    let scores = tape.matmul(q, kt)?;
    let scores = tape.scale(scores, S::from_f64(1.0 / (dh as f64).sqrt()));
    let axis = last_axis(tape, scores);
    let attn = tape.softmax(scores, axis)?;
    let out = tape.matmul(attn, v)?;
    Ok((out, attn))
}

/// Multi-head attention; attention matrices are appended to `attention`.
pub fn msa<S: Real>(
    tape: &mut Tape<S>,
    z: Var,
    layer: &LayerVars,
    heads: usize,
    attention: &mut Vec<Var>,
) -> Result<Var, ModelError> {
    let q = linear(tape, z, layer.w_q)?;
    let k = linear(tape, z, layer.w_k)?;
    let v = linear(tape, z, layer.w_v)?;
    let axis = last_axis(tape, q);
    let d = tape.shape(q)[axis];
    let dh = d / heads;
    let mut outs = Vec::with_capacity(heads);
    for j in 0..heads {
        let qj = tape.slice(q, axis, j * dh, dh)?;
        let kj = tape.slice(k, axis, j * dh, dh)?;
        let vj = tape.slice(v, axis, j * dh, dh)?;
        let (o, a) = self_attention_head(tape, qj, kj, vj)?;
        outs.push(o);
        attention.push(a);
    }
    let cat = if heads == 1 { outs[0] } else { tape.concat(&outs, axis)? };
    linear(tape, cat, layer.w_msa)
}

struct DropoutSeeds {
    mode: Mode,
    counter: u64,
}

impl DropoutSeeds {
    fn apply<S: Real>(&mut self, tape: &mut Tape<S>, x: Var, p: f64) -> Result<Var, ModelError> {
        self.counter += 1;
        let seed = epoch_seed(self.mode.seed, self.counter);
        Ok(tape.dropout(x, p, self.mode.training, seed)?)
    }
}

fn encoder_layer_inner<S: Real>(
    tape: &mut Tape<S>,
    z: Var,
    layer: &LayerVars,
    config: &ModelConfig,
    drop: &mut DropoutSeeds,
    attention: &mut Vec<Var>,
) -> Result<Var, ModelError> {
    let n1 = layer_norm(tape, z, layer.norm1)?;
    let a = msa(tape, n1, layer, config.num_heads, attention)?;
    let z1 = tape.add(a, z)?;
    let mut h = layer_norm(tape, z1, layer.norm2)?;
    let (out, hidden) = layer.mlp.split_last().expect("mlp has an output layer");
    for l in hidden {
        h = linear(tape, h, *l)?;
        h = tape.gelu(h);
        h = drop.apply(tape, h, config.dropout_p)?;
    }
    let m = linear(tape, h, *out)?;
    Ok(tape.add(m, z1)?)
}

/// Pre-norm block: `Z' = MSA(LN(Z)) + Z`, `Z_out = MLP(LN(Z')) + Z'`.
pub fn encoder_layer<S: Real>(
    tape: &mut Tape<S>,
    z: Var,
    layer: &LayerVars,
    config: &ModelConfig,
    mode: Mode,
) -> Result<Var, ModelError> {
    let mut drop = DropoutSeeds { mode, counter: 0 };
    encoder_layer_inner(tape, z, layer, config, &mut drop, &mut Vec::new())
}

/// `[x_cls; patches·E] + E_pos` for `[B, N, C²]` patches.
pub fn embed<S: Real>(
    tape: &mut Tape<S>,
    patches: Var,
    vars: &ModelVars,
    config: &ModelConfig,
) -> Result<Var, ModelError> {
    let shape = tape.shape(patches).to_vec();
    let [batch, n, p] = shape[..] else {
        return Err(ModelError::Input(format!("patches must be [B, N, C²], got {shape:?}")));
    };
    if n != config.num_patches() || p != config.patch_len() {
        return Err(ModelError::Input(format!(
            "patches {shape:?} do not match N = {}, C² = {}",
            config.num_patches(),
            config.patch_len()
        )));
    }
    let tokens = tape.matmul(patches, vars.e)?;
    let cls = tape.reshape(vars.x_cls, &[1, config.embed_dim])?;
    let cls = tape.expand(cls, batch)?;
    let z = tape.concat(&[cls, tokens], 1)?;
    let pos = match vars.e_pos {
        Some(p) => p,
        None => tape.constant(sinusoidal_table(n + 1, config.embed_dim)),
    };
    Ok(tape.add_broadcast(z, pos)?)
}

#[derive(Clone, Debug)]
pub struct Forward {
    /// `[B, K]`
    pub logits: Var,
    pub vars: ModelVars,
    /// One `[B, N+1, N+1]` matrix per layer and head, layer-major.
    pub attention: Vec<Var>,
}

/// Full pass on `[B, C, W]` input.
pub fn forward<S: Real>(
    tape: &mut Tape<S>,
    weights: &ModelWeights<S>,
    x: &Tensor<S>,
    mode: Mode,
) -> Result<Forward, ModelError> {
    let config = &weights.config;
    if x.ndim() != 3 || x.shape()[1..] != [config.channels, config.window] {
        return Err(ModelError::Input(format!(
            "input {:?} does not match [B, {}, {}]",
            x.shape(),
            config.channels,
            config.window
        )));
    }
    let vars = ModelVars::register(tape, weights);
    let patches = tape.constant(patchify(x, config.channels)?);
    let mut drop = DropoutSeeds { mode, counter: 0 };
    let mut attention = Vec::new();
    let mut z = embed(tape, patches, &vars, config)?;
    z = drop.apply(tape, z, config.dropout_p)?;
    for layer in &vars.layers {
        z = encoder_layer_inner(tape, z, layer, config, &mut drop, &mut attention)?;
    }
    let batch = x.shape()[0];
    let cls = tape.slice(z, 1, 0, 1)?;
    let cls = tape.reshape(cls, &[batch, config.embed_dim])?;
    let mut h = layer_norm(tape, cls, vars.norm_final)?;
    for l in &vars.head[..2] {
        h = linear(tape, h, *l)?;
        h = tape.gelu(h);
    }
    let logits = linear(tape, h, vars.head[2])?;
    Ok(Forward {
        logits,
        vars,
        attention,
    })
}

impl<S: Real> ModelWeights<S> {
    /// Inference logits `[B, K]`.
    pub fn logits(&self, x: &Tensor<S>) -> Result<Tensor<S>, ModelError> {
        let mut tape = Tape::new();
        let out = forward(&mut tape, &self.constants(), x, Mode::inference())?;
        Ok(tape.value(out.logits).clone())
    }

    /// Same weights with every parameter frozen, so inference tapes skip
    /// gradient bookkeeping.
    fn constants(&self) -> std::borrow::Cow<'_, Self> {
        if self.params.iter().all(|p| !p.trainable) {
            return std::borrow::Cow::Borrowed(self);
        }
        let mut frozen = self.clone();
        frozen.set_trainable(false, |_| true);
        std::borrow::Cow::Owned(frozen)
    }
}
