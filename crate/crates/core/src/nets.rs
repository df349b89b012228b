//! Teacher/student backbones with classifier heads, and the self-attention
//! temporal encoder.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Bound, ParamSet, Tape, Tensor, Var};
use crate::error::{Error, Result};

const LN_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub num_classes: usize,
    pub use_bias: bool,
    #[serde(skip)]
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            input_dim: 16,
            hidden_dims: vec![64, 32],
            num_classes: 8,
            use_bias: true,
            seed: 0,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim < 1 {
            return Err(Error::Config("network.input_dim must be >= 1".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("network.num_classes must be >= 2".into()));
        }
        if self.hidden_dims.iter().any(|&h| h < 1) {
            return Err(Error::Config("every network.hidden_dims entry must be >= 1".into()));
        }
        Ok(())
    }

    /// Width of the backbone output.
    pub fn feature_dim(&self) -> usize {
        self.hidden_dims.last().copied().unwrap_or(self.input_dim)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        NetworkConfig { seed, ..self.clone() }
    }
}

/// Fan-in scaled uniform weight matrix `fan_in × fan_out`.
fn uniform_matrix(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(vec![fan_in, fan_out], data).expect("shape matches data")
}

fn backbone_name(layer: usize, part: &str) -> String {
    format!("backbone.{}.{}", layer, part)
}

/// Parameters for an MLP backbone plus linear classifier head.
///
/// Names: `backbone.{i}.w`, `backbone.{i}.b`, `head.w`, `head.b`.
pub fn init_network(config: &NetworkConfig) -> Result<ParamSet> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = ParamSet::new();
    let mut fan_in = config.input_dim;
    for (i, &h) in config.hidden_dims.iter().enumerate() {
        params.insert(backbone_name(i, "w"), uniform_matrix(&mut rng, fan_in, h));
        if config.use_bias {
            params.insert(backbone_name(i, "b"), Tensor::zeros(&[h]));
        }
        fan_in = h;
    }
    params.insert("head.w", uniform_matrix(&mut rng, fan_in, config.num_classes));
    if config.use_bias {
        params.insert("head.b", Tensor::zeros(&[config.num_classes]));
    }
    Ok(params)
}

fn optional(bound: &Bound, name: &str) -> Option<Var> {
    bound.get(name).ok()
}

/// Records the backbone on `tape`: `relu(x·W + b)` per hidden layer.
pub fn backbone(tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
    let mut h = x;
    let mut layer = 0;
    while let Ok(w) = bound.get(&backbone_name(layer, "w")) {
        let b = optional(bound, &backbone_name(layer, "b"));
        let z = tape.linear(h, w, b)?;
        h = tape.relu(z);
        layer += 1;
    }
    Ok(h)
}

/// Records the classifier head on `tape`.
pub fn head(tape: &mut Tape, bound: &Bound, features: Var) -> Result<Var> {
    let w = bound.get("head.w")?;
    tape.linear(features, w, optional(bound, "head.b"))
}

/// Backbone followed by head: the logits graph used by every loss.
pub fn logits(tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
    let f = backbone(tape, bound, x)?;
    head(tape, bound, f)
}

fn check_input(params: &ParamSet, x: &Tensor) -> Result<()> {
    let (_, cols) = x.dims2()?;
    let first = if params.get("backbone.0.w").is_ok() { "backbone.0.w" } else { "head.w" };
    let expected = params.get(first)?.dims2()?.0;
    if cols != expected {
        return Err(Error::shape("backbone_forward", format!("input width {} but network expects {}", cols, expected)));
    }
    Ok(())
}

/// Backbone features for a `batch × D` input.
pub fn backbone_forward(params: &ParamSet, x: &Tensor) -> Result<Tensor> {
    check_input(params, x)?;
    let mut tape = Tape::new();
    let bound = tape.bind(params);
    let xv = tape.constant(x.clone());
    let f = backbone(&mut tape, &bound, xv)?;
    Ok(tape.value(f).clone())
}

/// Classifier logits for `batch × F` features.
pub fn classify(params: &ParamSet, features: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let bound = tape.bind(params);
    let fv = tape.constant(features.clone());
    let z = head(&mut tape, &bound, fv)?;
    Ok(tape.value(z).clone())
}

/// Logits for a `batch × D` input.
pub fn predict_logits(params: &ParamSet, x: &Tensor) -> Result<Tensor> {
    classify(params, &backbone_forward(params, x)?)
}

/// Index of the largest entry; ties go to the smallest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TemporalConfig {
    pub model_dim: usize,
    pub num_heads: usize,
    pub num_layers: usize,
    pub ffn_dim: usize,
    pub max_clip_len: usize,
    pub use_positional_encoding: bool,
    #[serde(skip)]
    pub seed: u64,
}

impl Default for TemporalConfig {
    fn default() -> Self {
        TemporalConfig {
            model_dim: 32,
            num_heads: 4,
            num_layers: 2,
            ffn_dim: 64,
            max_clip_len: 64,
            use_positional_encoding: true,
            seed: 0,
        }
    }
}

impl TemporalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.model_dim == 0 || self.num_heads == 0 || !self.model_dim.is_multiple_of(self.num_heads) {
            return Err(Error::Config(format!(
                "temporal.model_dim ({}) must be a positive multiple of temporal.num_heads ({})",
                self.model_dim, self.num_heads
            )));
        }
        if self.max_clip_len < 1 {
            return Err(Error::Config("temporal.max_clip_len must be >= 1".into()));
        }
        if self.ffn_dim < 1 {
            return Err(Error::Config("temporal.ffn_dim must be >= 1".into()));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        TemporalConfig { seed, ..self.clone() }
    }
}

fn enc_name(layer: usize, part: &str) -> String {
    format!("enc.{}.{}", layer, part)
}

/// Encoder-block parameters only (no input projection, no head).
pub fn init_encoder(config: &TemporalConfig, rng: &mut ChaCha8Rng, params: &mut ParamSet) {
    let d = config.model_dim;
    for l in 0..config.num_layers {
        params.insert(enc_name(l, "ln1.g"), Tensor::full(&[d], 1.0));
        params.insert(enc_name(l, "ln1.b"), Tensor::zeros(&[d]));
        for part in ["attn.wq", "attn.wk", "attn.wv", "attn.wo"] {
            params.insert(enc_name(l, part), uniform_matrix(rng, d, d));
        }
        params.insert(enc_name(l, "attn.bo"), Tensor::zeros(&[d]));
        params.insert(enc_name(l, "ln2.g"), Tensor::full(&[d], 1.0));
        params.insert(enc_name(l, "ln2.b"), Tensor::zeros(&[d]));
        params.insert(enc_name(l, "ffn.w1"), uniform_matrix(rng, d, config.ffn_dim));
        params.insert(enc_name(l, "ffn.b1"), Tensor::zeros(&[config.ffn_dim]));
        params.insert(enc_name(l, "ffn.w2"), uniform_matrix(rng, config.ffn_dim, d));
        params.insert(enc_name(l, "ffn.b2"), Tensor::zeros(&[d]));
    }
    params.insert("enc.ln.g", Tensor::full(&[d], 1.0));
    params.insert("enc.ln.b", Tensor::zeros(&[d]));
}

/// Temporal model: input projection `F → D`, encoder, fresh linear head `D → C`.
///
/// Names: `tin.w`, `tin.b`, `enc.*`, `thead.w`, `thead.b`.
pub fn init_temporal_model(config: &TemporalConfig, feature_dim: usize, num_classes: usize) -> Result<ParamSet> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = ParamSet::new();
    params.insert("tin.w", uniform_matrix(&mut rng, feature_dim, config.model_dim));
    params.insert("tin.b", Tensor::zeros(&[config.model_dim]));
    init_encoder(config, &mut rng, &mut params);
    params.insert("thead.w", uniform_matrix(&mut rng, config.model_dim, num_classes));
    params.insert("thead.b", Tensor::zeros(&[num_classes]));
    Ok(params)
}

/// Sinusoidal position table, `len × dim`.
pub fn positional_encoding(len: usize, dim: usize) -> Tensor {
    let mut data = vec![0.0; len * dim];
    for t in 0..len {
        for i in 0..dim {
            let pair = (i / 2) as f64;
            let angle = t as f64 / 10000f64.powf(2.0 * pair / dim as f64);
            data[t * dim + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    Tensor::new(vec![len, dim], data).expect("shape matches data")
}

/// Multi-head self-attention over the rows of `x`. Returns the output and
/// the per-head attention weight matrices.
fn self_attention(
    tape: &mut Tape,
    bound: &Bound,
    layer: usize,
    x: Var,
    mask: &[bool],
    heads: usize,
) -> Result<(Var, Vec<Var>)> {
    let d = tape.value(x).dims2()?.1;
    let dh = d / heads;
    let q = tape.matmul(x, bound.get(&enc_name(layer, "attn.wq"))?)?;
    let k = tape.matmul(x, bound.get(&enc_name(layer, "attn.wk"))?)?;
    let v = tape.matmul(x, bound.get(&enc_name(layer, "attn.wv"))?)?;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut outs = Vec::with_capacity(heads);
    let mut weights = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = tape.slice_cols(q, h * dh, dh)?;
        let kh = tape.slice_cols(k, h * dh, dh)?;
        let vh = tape.slice_cols(v, h * dh, dh)?;
        let kt = tape.transpose(kh)?;
        let scores = tape.matmul(qh, kt)?;
        let scores = tape.scale(scores, scale);
        let a = tape.masked_softmax(scores, mask)?;
        weights.push(a);
        outs.push(tape.matmul(a, vh)?);
    }
    let cat = tape.concat_cols(&outs)?;
    let wo = bound.get(&enc_name(layer, "attn.wo"))?;
    let bo = bound.get(&enc_name(layer, "attn.bo"))?;
    Ok((tape.linear(cat, wo, Some(bo))?, weights))
}

/// Records the encoder on `tape` for a `T × D` clip already in model space.
///
/// Pre-norm blocks: `x + MHA(LN(x))`, then `x + FFN(LN(x))`, followed by a
/// final layer norm. Keys where `mask` is false receive zero attention.
pub fn temporal_encode(
    tape: &mut Tape,
    bound: &Bound,
    x: Var,
    mask: &[bool],
    config: &TemporalConfig,
) -> Result<(Var, Vec<Var>)> {
    let (t, d) = tape.value(x).dims2()?;
    if t > config.max_clip_len {
        return Err(Error::ClipTooLong { len: t, max: config.max_clip_len });
    }
    if d != config.model_dim {
        return Err(Error::shape("temporal_forward", format!("clip width {} but model_dim {}", d, config.model_dim)));
    }
    if mask.len() != t {
        return Err(Error::shape("temporal_forward", format!("mask of {} for {} frames", mask.len(), t)));
    }
    let mut h = x;
    if config.use_positional_encoding {
        let pe = tape.constant(positional_encoding(t, d));
        h = tape.add(h, pe)?;
    }
    let mut attn = Vec::new();
    for l in 0..config.num_layers {
        let n1 = tape.layer_norm(h, bound.get(&enc_name(l, "ln1.g"))?, bound.get(&enc_name(l, "ln1.b"))?, LN_EPS)?;
        let (a, w) = self_attention(tape, bound, l, n1, mask, config.num_heads)?;
        attn.extend(w);
        h = tape.add(h, a)?;
        let n2 = tape.layer_norm(h, bound.get(&enc_name(l, "ln2.g"))?, bound.get(&enc_name(l, "ln2.b"))?, LN_EPS)?;
        let f1 = tape.linear(n2, bound.get(&enc_name(l, "ffn.w1"))?, Some(bound.get(&enc_name(l, "ffn.b1"))?))?;
        let f1 = tape.relu(f1);
        let f2 = tape.linear(f1, bound.get(&enc_name(l, "ffn.w2"))?, Some(bound.get(&enc_name(l, "ffn.b2"))?))?;
        h = tape.add(h, f2)?;
    }
    let out = tape.layer_norm(h, bound.get("enc.ln.g")?, bound.get("enc.ln.b")?, LN_EPS)?;
    Ok((out, attn))
}

/// Frame-level logits of the full temporal model for a `T × F` clip.
pub fn temporal_logits(
    tape: &mut Tape,
    bound: &Bound,
    clip: Var,
    mask: &[bool],
    config: &TemporalConfig,
) -> Result<Var> {
    let x = tape.linear(clip, bound.get("tin.w")?, Some(bound.get("tin.b")?))?;
    let (h, _) = temporal_encode(tape, bound, x, mask, config)?;
    tape.linear(h, bound.get("thead.w")?, Some(bound.get("thead.b")?))
}

pub struct TemporalOutput {
    pub features: Tensor,
    pub attention: Vec<Tensor>,
}

/// Refined `T × D` features for a clip; `mask = None` treats every frame as valid.
pub fn temporal_forward(
    params: &ParamSet,
    clip: &Tensor,
    mask: Option<&[bool]>,
    config: &TemporalConfig,
) -> Result<TemporalOutput> {
    let (t, _) = clip.dims2()?;
    let all = vec![true; t];
    let mask = mask.unwrap_or(&all);
    let mut tape = Tape::new();
    let bound = tape.bind(params);
    let x = tape.constant(clip.clone());
    let (out, attn) = temporal_encode(&mut tape, &bound, x, mask, config)?;
    Ok(TemporalOutput {
        features: tape.value(out).clone(),
        attention: attn.into_iter().map(|a| tape.value(a).clone()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{finite_diff_grad, forward_graph, grad_dot, relative_error, Targets};

    fn small() -> NetworkConfig {
        NetworkConfig { input_dim: 4, hidden_dims: vec![5, 3], num_classes: 3, use_bias: true, seed: 0 }
    }

    fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn init_deterministic_and_seed_sensitive() {
        let a = init_network(&small()).unwrap();
        let b = init_network(&small()).unwrap();
        let c = init_network(&small().with_seed(1)).unwrap();
        assert_eq!(a, b);
        assert!(a.same_structure(&c));
        assert_ne!(a, c);
        assert!(a.iter().filter(|(n, _)| n.ends_with(".b")).all(|(_, t)| t.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn teacher_student_gradients_are_compatible() {
        let teacher = init_network(&small().with_seed(0)).unwrap();
        let student = init_network(&small().with_seed(1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = rand_tensor(&mut rng, &[6, 4]);
        let graph = |t: &mut Tape, b: &Bound, x: Var| {
            let z = logits(t, b, x)?;
            t.cross_entropy(z, Targets::Indices(vec![0, 1, 2, 0, 1, 2]), None)
        };
        let gt = forward_graph(&teacher, &x, graph).unwrap().backward().unwrap();
        let gs = forward_graph(&student, &x, graph).unwrap().backward().unwrap();
        assert!(grad_dot(&gt, &gs).unwrap().is_finite());
    }

    #[test]
    fn backbone_shapes_and_zero_weights() {
        let p = init_network(&small()).unwrap();
        let f = backbone_forward(&p, &Tensor::zeros(&[1, 4])).unwrap();
        assert_eq!(f.shape(), &[1, 3]);
        let mut z = p.clone();
        for (_, t) in z.iter_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let x = Tensor::full(&[2, 4], 3.0);
        assert!(backbone_forward(&z, &x).unwrap().data().iter().all(|&v| v == 0.0));
        assert!(backbone_forward(&p, &Tensor::zeros(&[1, 5])).is_err());
    }

    #[test]
    fn backbone_matches_straight_line() {
        let p = init_network(&small().with_seed(0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = rand_tensor(&mut rng, &[3, 4]);
        let got = backbone_forward(&p, &x).unwrap();
        let dense = |inp: &[f64], w: &Tensor, b: &Tensor| -> Vec<f64> {
            let (fi, fo) = w.dims2().unwrap();
            (0..fo)
                .map(|j| ((0..fi).map(|i| inp[i] * w.data()[i * fo + j]).sum::<f64>() + b.data()[j]).max(0.0))
                .collect()
        };
        for r in 0..3 {
            let h0 = dense(x.row(r), p.get("backbone.0.w").unwrap(), p.get("backbone.0.b").unwrap());
            let h1 = dense(&h0, p.get("backbone.1.w").unwrap(), p.get("backbone.1.b").unwrap());
            for (a, b) in got.row(r).iter().zip(&h1) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn classify_shape_and_shift_invariance() {
        let cfg = NetworkConfig { num_classes: 2, ..small() };
        let p = init_network(&cfg).unwrap();
        let feats = Tensor::new(vec![2, 3], vec![0.5, 1.0, -0.2, 0.0, 2.0, 1.0]).unwrap();
        let z = classify(&p, &feats).unwrap();
        assert_eq!(z.shape(), &[2, 2]);
        for row in z.rows() {
            let shifted: Vec<f64> = row.iter().map(|v| v + 17.0).collect();
            assert_eq!(argmax(row), argmax(&shifted));
        }
    }

    #[test]
    fn argmax_tie_goes_low() {
        assert_eq!(argmax(&[2.0, 1.0, 0.0]), 0);
        assert_eq!(argmax(&[1.0, 1.0, 0.0]), 0);
        assert_eq!(argmax(&[0.0, 3.0, 3.0]), 1);
    }

    #[test]
    fn mlp_gradient_matches_finite_differences() {
        let p = init_network(&small().with_seed(4)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = rand_tensor(&mut rng, &[5, 4]);
        let graph = |t: &mut Tape, b: &Bound, x: Var| {
            let z = logits(t, b, x)?;
            t.cross_entropy(z, Targets::Indices(vec![0, 2, 1, 1, 0]), None)
        };
        let g = forward_graph(&p, &x, graph).unwrap().backward().unwrap();
        let fd = finite_diff_grad(&p, &x, graph, 1e-5).unwrap();
        assert!(relative_error(&g, &fd, 1e-12).unwrap() <= 1e-4);
    }

    fn temporal_cfg(pe: bool) -> TemporalConfig {
        TemporalConfig { model_dim: 8, num_heads: 2, num_layers: 2, ffn_dim: 12, max_clip_len: 16, use_positional_encoding: pe, seed: 3 }
    }

    fn encoder_params(cfg: &TemporalConfig) -> ParamSet {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut p = ParamSet::new();
        init_encoder(cfg, &mut rng, &mut p);
        p
    }

    #[test]
    fn temporal_degenerate_clip_and_length_limit() {
        let cfg = temporal_cfg(true);
        let p = encoder_params(&cfg);
        let out = temporal_forward(&p, &Tensor::full(&[1, 8], 0.3), None, &cfg).unwrap();
        assert_eq!(out.features.shape(), &[1, 8]);
        let too_long = Tensor::zeros(&[17, 8]);
        assert!(matches!(temporal_forward(&p, &too_long, None, &cfg), Err(Error::ClipTooLong { len: 17, max: 16 })));
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let cfg = temporal_cfg(true);
        let p = encoder_params(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let clip = rand_tensor(&mut rng, &[10, 8]);
        let mask: Vec<bool> = (0..10).map(|i| i < 7).collect();
        let out = temporal_forward(&p, &clip, Some(&mask), &cfg).unwrap();
        assert_eq!(out.attention.len(), 4);
        for a in &out.attention {
            for row in a.rows() {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(row[7..].iter().all(|&w| w == 0.0));
            }
        }
    }

    #[test]
    fn permutation_equivariance_without_positions() {
        let cfg = temporal_cfg(false);
        let p = encoder_params(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let clip = rand_tensor(&mut rng, &[6, 8]);
        let perm = [3usize, 0, 5, 1, 4, 2];
        let rows: Vec<Vec<f64>> = perm.iter().map(|&i| clip.row(i).to_vec()).collect();
        let permuted = Tensor::from_rows(&rows).unwrap();
        let a = temporal_forward(&p, &clip, None, &cfg).unwrap().features;
        let b = temporal_forward(&p, &permuted, None, &cfg).unwrap().features;
        for (k, &src) in perm.iter().enumerate() {
            for (x, y) in a.row(src).iter().zip(b.row(k)) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        // with positions the symmetry is broken
        let cfg_pe = temporal_cfg(true);
        let a = temporal_forward(&p, &clip, None, &cfg_pe).unwrap().features;
        let b = temporal_forward(&p, &permuted, None, &cfg_pe).unwrap().features;
        let max_dev = perm
            .iter()
            .enumerate()
            .flat_map(|(k, &src)| a.row(src).iter().zip(b.row(k)).map(|(x, y)| (x - y).abs()).collect::<Vec<_>>())
            .fold(0.0, f64::max);
        assert!(max_dev > 1e-6);
    }

    #[test]
    fn temporal_model_gradient_matches_finite_differences() {
        let cfg = temporal_cfg(true);
        let p = init_temporal_model(&cfg, 5, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let clip = rand_tensor(&mut rng, &[7, 5]);
        let mask = vec![true, true, true, true, true, false, false];
        let graph = |t: &mut Tape, b: &Bound, x: Var| {
            let z = temporal_logits(t, b, x, &mask, &cfg)?;
            let w = mask.iter().map(|&m| m as u8 as f64).collect();
            t.cross_entropy(z, Targets::Indices(vec![0, 1, 2, 2, 1, 0, 0]), Some(w))
        };
        let g = forward_graph(&p, &clip, graph).unwrap().backward().unwrap();
        let fd = finite_diff_grad(&p, &clip, graph, 1e-5).unwrap();
        assert!(relative_error(&g, &fd, 1e-12).unwrap() <= 1e-4);
    }
}
