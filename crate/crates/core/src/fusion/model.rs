//! Patch encoder, vector MLPs, cross-attention and classification head.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tape::{softmax_in_place, Tape, Var};
use super::tensor::Mat;
use super::FusionError;

/// Which inputs feed the classification head.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Modality {
    /// Mean-pooled image tokens only.
    ImageOnly,
    /// Clinical and values tokens, no image.
    Vectors,
    /// Pooled image tokens plus both cross-attended vector tokens.
    Full,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::ImageOnly, Modality::Vectors, Modality::Full];

    pub fn tag(self) -> &'static str {
        match self {
            Modality::ImageOnly => "image",
            Modality::Vectors => "cd+values",
            Modality::Full => "full",
        }
    }

    fn uses_image(self) -> bool {
        self != Modality::Vectors
    }

    fn uses_vectors(self) -> bool {
        self != Modality::ImageOnly
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttentionDirection {
    /// The vector token is the single query over image tokens.
    VectorQueriesImage,
    /// Image tokens query the vector token; the result is mean-pooled.
    ImageQueriesVector,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub image_size: usize,
    pub patch: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_blocks: usize,
    pub clinical_dim: usize,
    pub values_dim: usize,
    pub head_hidden: usize,
    /// Feed-forward width as a multiple of `d_model`.
    pub ff_mult: usize,
    pub seed: u64,
    pub modality: Modality,
    pub direction: AttentionDirection,
    pub zero_init_classifier: bool,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            image_size: 64,
            patch: 16,
            d_model: 64,
            n_heads: 4,
            n_blocks: 2,
            clinical_dim: 0,
            values_dim: 0,
            head_hidden: 64,
            ff_mult: 2,
            seed: 0,
            modality: Modality::Full,
            direction: AttentionDirection::VectorQueriesImage,
            zero_init_classifier: false,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), FusionError> {
        let bad = |m: String| Err(FusionError::InvalidConfig(m));
        if self.patch == 0 || self.image_size == 0 || self.image_size % self.patch != 0 {
            return bad(format!("image_size {} not divisible by patch {}", self.image_size, self.patch));
        }
        if self.n_heads == 0 || self.d_model == 0 || self.d_model % self.n_heads != 0 {
            return bad(format!("d_model {} not divisible by n_heads {}", self.d_model, self.n_heads));
        }
        if self.head_hidden == 0 || self.ff_mult == 0 {
            return bad("head_hidden and ff_mult must be positive".into());
        }
        Ok(())
    }

    pub fn n_tokens(&self) -> usize {
        (self.image_size / self.patch).pow(2)
    }

    fn head_input(&self) -> usize {
        match self.modality {
            Modality::ImageOnly => self.d_model,
            Modality::Vectors => 2 * self.d_model,
            Modality::Full => 3 * self.d_model,
        }
    }
}

/// One input: an `image_size x image_size` grid in [0, 1] plus two vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub image: Mat,
    pub clinical: Vec<f64>,
    pub values: Vec<f64>,
    pub superior: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
struct Linear {
    w: usize,
    b: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
struct Norm {
    gamma: usize,
    beta: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
struct Attention {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
struct Block {
    ln1: Norm,
    attn: Attention,
    ln2: Norm,
    ff1: Linear,
    ff2: Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ImageLayout {
    patch: Linear,
    pos: usize,
    blocks: Vec<Block>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
struct Mlp {
    l1: Linear,
    l2: Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Layout {
    image: Option<ImageLayout>,
    mlp_c: Option<Mlp>,
    mlp_v: Option<Mlp>,
    ca_c: Option<Attention>,
    ca_v: Option<Attention>,
    head1: Linear,
    head2: Linear,
    cls: Linear,
}

/// Which vector input an MLP or cross-attention block belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VectorKind {
    Clinical,
    Values,
}

enum Init {
    Uniform(f64),
    Const(f64),
}

struct Builder {
    rng: ChaCha8Rng,
    names: Vec<String>,
    mats: Vec<Mat>,
}

impl Builder {
    fn param(&mut self, name: String, rows: usize, cols: usize, init: Init) -> usize {
        let data = match init {
            Init::Const(c) => vec![c; rows * cols],
            Init::Uniform(a) => (0..rows * cols).map(|_| self.rng.random_range(-a..=a)).collect(),
        };
        self.names.push(name);
        self.mats.push(Mat::from_vec(rows, cols, data));
        self.mats.len() - 1
    }

    fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize, zero: bool) -> Linear {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let init = if zero { Init::Const(0.0) } else { Init::Uniform(bound) };
        Linear {
            w: self.param(format!("{name}.w"), fan_in, fan_out, init),
            b: self.param(format!("{name}.b"), 1, fan_out, Init::Const(0.0)),
        }
    }

    fn norm(&mut self, name: &str, d: usize) -> Norm {
        Norm {
            gamma: self.param(format!("{name}.gamma"), 1, d, Init::Const(1.0)),
            beta: self.param(format!("{name}.beta"), 1, d, Init::Const(0.0)),
        }
    }

    fn attention(&mut self, name: &str, d: usize) -> Attention {
        Attention {
            q: self.linear(&format!("{name}.q"), d, d, false),
            k: self.linear(&format!("{name}.k"), d, d, false),
            v: self.linear(&format!("{name}.v"), d, d, false),
            o: self.linear(&format!("{name}.o"), d, d, false),
        }
    }

    fn mlp(&mut self, name: &str, input: usize, d: usize) -> Mlp {
        Mlp { l1: self.linear(&format!("{name}.1"), input, d, false), l2: self.linear(&format!("{name}.2"), d, d, false) }
    }
}

/// Result of one cross-attention call.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossAttention {
    pub fused: Mat,
    /// Per head, a `queries x context` matrix of attention weights.
    pub weights: Vec<Mat>,
}

/// Parameters together with the configuration that shaped them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionModel {
    config: FusionConfig,
    names: Vec<String>,
    params: Vec<Mat>,
    layout: Layout,
}

impl FusionModel {
    pub fn new(config: FusionConfig) -> Result<Self, FusionError> {
        config.validate()?;
        let d = config.d_model;
        let mut b = Builder { rng: ChaCha8Rng::seed_from_u64(config.seed), names: Vec::new(), mats: Vec::new() };
        let image = config.modality.uses_image().then(|| {
            let patch = b.linear("patch_embed", config.patch * config.patch, d, false);
            let pos = b.param("pos_embed".into(), config.n_tokens(), d, Init::Uniform(0.1));
            let blocks = (0..config.n_blocks)
                .map(|i| Block {
                    ln1: b.norm(&format!("block{i}.ln1"), d),
                    attn: b.attention(&format!("block{i}.attn"), d),
                    ln2: b.norm(&format!("block{i}.ln2"), d),
                    ff1: b.linear(&format!("block{i}.ff1"), d, config.ff_mult * d, false),
                    ff2: b.linear(&format!("block{i}.ff2"), config.ff_mult * d, d, false),
                })
                .collect();
            ImageLayout { patch, pos, blocks }
        });
        let vectors = config.modality.uses_vectors();
        let mlp_c = vectors.then(|| b.mlp("mlp_c", config.clinical_dim, d));
        let mlp_v = vectors.then(|| b.mlp("mlp_v", config.values_dim, d));
        let cross = config.modality == Modality::Full;
        let ca_c = cross.then(|| b.attention("ca_c", d));
        let ca_v = cross.then(|| b.attention("ca_v", d));
        let head1 = b.linear("head1", config.head_input(), config.head_hidden, false);
        let head2 = b.linear("head2", config.head_hidden, config.head_hidden, false);
        let cls = b.linear("classifier", config.head_hidden, 2, config.zero_init_classifier);
        let layout = Layout { image, mlp_c, mlp_v, ca_c, ca_v, head1, head2, cls };
        Ok(Self { config, names: b.names, params: b.mats, layout })
    }

    /// Rebuilds a model from stored parameters, checking names and shapes.
    pub fn from_parts(config: FusionConfig, named: Vec<(String, Mat)>) -> Result<Self, FusionError> {
        let mut model = Self::new(config)?;
        if named.len() != model.params.len() {
            return Err(FusionError::ShapeMismatch(format!(
                "expected {} parameter arrays, found {}",
                model.params.len(),
                named.len()
            )));
        }
        for (i, (name, m)) in named.into_iter().enumerate() {
            if name != model.names[i] || m.shape() != model.params[i].shape() || m.data.len() != m.rows * m.cols {
                return Err(FusionError::ShapeMismatch(format!(
                    "parameter {i}: expected {} {:?}, found {name} {:?}",
                    model.names[i],
                    model.params[i].shape(),
                    m.shape()
                )));
            }
            if !m.is_finite() {
                return Err(FusionError::NonFinite(name));
            }
            model.params[i] = m;
        }
        Ok(model)
    }

    pub fn config(&self) -> &FusionConfig {
        &self.config
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> &[Mat] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Mat] {
        &mut self.params
    }

    pub fn n_scalars(&self) -> usize {
        self.params.iter().map(|m| m.data.len()).sum()
    }

    /// Index of a parameter by name.
    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    fn tape(&self) -> Tape<'_> {
        let mut t = Tape::new();
        for p in &self.params {
            t.leaf_ref(p);
        }
        t
    }

    fn check_image(&self, image: &Mat) -> Result<(), FusionError> {
        let s = self.config.image_size;
        if image.shape() != (s, s) {
            return Err(FusionError::ShapeMismatch(format!("image is {:?}, expected {s}x{s}", image.shape())));
        }
        Ok(())
    }

    fn check_vector(&self, kind: VectorKind, v: &[f64]) -> Result<(), FusionError> {
        let want = match kind {
            VectorKind::Clinical => self.config.clinical_dim,
            VectorKind::Values => self.config.values_dim,
        };
        if v.len() != want {
            return Err(FusionError::ShapeMismatch(format!("{kind:?} vector has {} entries, expected {want}", v.len())));
        }
        Ok(())
    }

    fn check_sample(&self, s: &Sample) -> Result<(), FusionError> {
        if self.config.modality.uses_image() {
            self.check_image(&s.image)?;
        }
        if self.config.modality.uses_vectors() {
            self.check_vector(VectorKind::Clinical, &s.clinical)?;
            self.check_vector(VectorKind::Values, &s.values)?;
        }
        Ok(())
    }

    /// Non-overlapping patches in row-major patch order, one flattened patch per row.
    pub fn patchify(&self, image: &Mat) -> Mat {
        let (s, p) = (self.config.image_size, self.config.patch);
        let per_side = s / p;
        let mut out = Mat::zeros(per_side * per_side, p * p);
        for pr in 0..per_side {
            for pc in 0..per_side {
                let row = pr * per_side + pc;
                for r in 0..p {
                    for c in 0..p {
                        *out.at_mut(row, r * p + c) = image.at(pr * p + r, pc * p + c);
                    }
                }
            }
        }
        out
    }

    fn p(&self, i: usize) -> Var {
        // Parameters are the first leaves on every tape.
        Var::param(i)
    }

    fn linear(&self, t: &mut Tape, x: Var, l: Linear) -> Var {
        t.affine(x, self.p(l.w), self.p(l.b))
    }

    /// Multi-head attention of `q_in` over `kv_in`; returns the output
    /// projection (before any residual) and the per-head weights.
    fn attend(&self, t: &mut Tape, q_in: Var, kv_in: Var, a: Attention) -> (Var, Vec<Var>) {
        let (d, h) = (self.config.d_model, self.config.n_heads);
        let dh = d / h;
        let q = self.linear(t, q_in, a.q);
        let k = self.linear(t, kv_in, a.k);
        let v = self.linear(t, kv_in, a.v);
        let mut heads = Vec::with_capacity(h);
        let mut weights = Vec::with_capacity(h);
        for i in 0..h {
            let qh = t.cols(q, i * dh, dh);
            let kh = t.cols(k, i * dh, dh);
            let vh = t.cols(v, i * dh, dh);
            let kt = t.transpose(kh);
            let scores = t.matmul(qh, kt);
            let scores = t.scale(scores, 1.0 / (dh as f64).sqrt());
            let w = t.softmax_rows(scores);
            weights.push(w);
            heads.push(t.matmul(w, vh));
        }
        let cat = t.concat_cols(&heads);
        (self.linear(t, cat, a.o), weights)
    }

    fn image_tokens(&self, t: &mut Tape, image: &Mat) -> Var {
        let lay = self.layout.image.as_ref().expect("image layout present");
        let patches = t.leaf(self.patchify(image));
        let emb = self.linear(t, patches, lay.patch);
        let mut x = t.add(emb, self.p(lay.pos));
        for blk in &lay.blocks {
            let h = t.layer_norm(x, self.p(blk.ln1.gamma), self.p(blk.ln1.beta));
            let (a, _) = self.attend(t, h, h, blk.attn);
            x = t.add(x, a);
            let h = t.layer_norm(x, self.p(blk.ln2.gamma), self.p(blk.ln2.beta));
            let f = self.linear(t, h, blk.ff1);
            let f = t.gelu(f);
            let f = self.linear(t, f, blk.ff2);
            x = t.add(x, f);
        }
        x
    }

    fn mlp_layout(&self, kind: VectorKind) -> Mlp {
        match kind {
            VectorKind::Clinical => self.layout.mlp_c,
            VectorKind::Values => self.layout.mlp_v,
        }
        .expect("vector layout present")
    }

    fn vector_token(&self, t: &mut Tape, kind: VectorKind, v: &[f64]) -> Var {
        let mlp = self.mlp_layout(kind);
        let x = t.leaf(Mat::row_vector(v));
        let h = self.linear(t, x, mlp.l1);
        let h = t.gelu(h);
        self.linear(t, h, mlp.l2)
    }

    fn cross(&self, t: &mut Tape, kind: VectorKind, token: Var, image: Var) -> (Var, Vec<Var>) {
        let a = match kind {
            VectorKind::Clinical => self.layout.ca_c,
            VectorKind::Values => self.layout.ca_v,
        }
        .expect("cross-attention layout present");
        match self.config.direction {
            AttentionDirection::VectorQueriesImage => {
                let (out, w) = self.attend(t, token, image, a);
                (t.add(token, out), w)
            }
            AttentionDirection::ImageQueriesVector => {
                let (out, w) = self.attend(t, image, token, a);
                let fused = t.add(image, out);
                (t.mean_rows(fused), w)
            }
        }
    }

    fn logits(&self, t: &mut Tape, s: &Sample) -> Var {
        let m = self.config.modality;
        let img = m.uses_image().then(|| self.image_tokens(t, &s.image));
        let pooled = img.map(|i| t.mean_rows(i));
        let z = match m {
            Modality::ImageOnly => pooled.expect("image"),
            Modality::Vectors => {
                let c = self.vector_token(t, VectorKind::Clinical, &s.clinical);
                let v = self.vector_token(t, VectorKind::Values, &s.values);
                t.concat_cols(&[c, v])
            }
            Modality::Full => {
                let i = img.expect("image");
                let c = self.vector_token(t, VectorKind::Clinical, &s.clinical);
                let v = self.vector_token(t, VectorKind::Values, &s.values);
                let (fc, _) = self.cross(t, VectorKind::Clinical, c, i);
                let (fv, _) = self.cross(t, VectorKind::Values, v, i);
                t.concat_cols(&[pooled.expect("image"), fc, fv])
            }
        };
        let h = self.linear(t, z, self.layout.head1);
        let h = t.gelu(h);
        let h = self.linear(t, h, self.layout.head2);
        let h = t.gelu(h);
        self.linear(t, h, self.layout.cls)
    }

    /// Image tokens `F_i`, one row per patch.
    pub fn encode_image(&self, image: &Mat) -> Result<Mat, FusionError> {
        if self.layout.image.is_none() {
            return Err(FusionError::InvalidConfig("model has no image encoder".into()));
        }
        self.check_image(image)?;
        let mut t = self.tape();
        let v = self.image_tokens(&mut t, image);
        Ok(t.value(v).clone())
    }

    /// A `1 x d_model` token from a clinical or values vector.
    pub fn encode_vector(&self, kind: VectorKind, v: &[f64]) -> Result<Mat, FusionError> {
        if !self.config.modality.uses_vectors() {
            return Err(FusionError::InvalidConfig("model has no vector encoders".into()));
        }
        self.check_vector(kind, v)?;
        let mut t = self.tape();
        let out = self.vector_token(&mut t, kind, v);
        Ok(t.value(out).clone())
    }

    /// Cross-attention between a vector token and image tokens using the block for `kind`.
    pub fn cross_attend(&self, kind: VectorKind, token: &Mat, context: &Mat) -> Result<CrossAttention, FusionError> {
        if self.config.modality != Modality::Full {
            return Err(FusionError::InvalidConfig("model has no cross-attention blocks".into()));
        }
        let d = self.config.d_model;
        if token.shape() != (1, d) || context.cols != d || context.rows == 0 {
            return Err(FusionError::ShapeMismatch(format!(
                "token {:?} and context {:?} must have width {d}",
                token.shape(),
                context.shape()
            )));
        }
        let mut t = self.tape();
        let q = t.leaf(token.clone());
        let c = t.leaf(context.clone());
        let (fused, w) = self.cross(&mut t, kind, q, c);
        Ok(CrossAttention { fused: t.value(fused).clone(), weights: w.iter().map(|&v| t.value(v).clone()).collect() })
    }

    /// `(p_superior, p_not_superior)`.
    pub fn forward(&self, s: &Sample) -> Result<[f64; 2], FusionError> {
        self.check_sample(s)?;
        let mut t = self.tape();
        let l = self.logits(&mut t, s);
        let mut p = t.value(l).data.clone();
        softmax_in_place(&mut p);
        Ok([p[0], p[1]])
    }

    pub fn forward_batch(&self, batch: &[Sample]) -> Result<Vec<[f64; 2]>, FusionError> {
        batch.par_iter().map(|s| self.forward(s)).collect()
    }

    /// Loss and parameter gradients for one sample.
    fn sample_grads(&self, s: &Sample) -> (f64, Vec<Mat>) {
        let mut t = self.tape();
        let l = self.logits(&mut t, s);
        let target = if s.superior { 0 } else { 1 };
        let loss = t.softmax_nll(l, &[target]);
        let value = t.value(loss).data[0];
        let mut grads = t.backward(loss);
        grads.truncate(self.params.len());
        let grads = grads
            .into_iter()
            .zip(&self.params)
            .map(|(g, p)| g.unwrap_or_else(|| Mat::zeros(p.rows, p.cols)))
            .collect();
        (value, grads)
    }

    /// Mean cross-entropy over the batch and its exact gradient for every parameter.
    pub fn loss_and_grads(&self, batch: &[Sample]) -> Result<(f64, Vec<Mat>), FusionError> {
        if batch.is_empty() {
            return Err(FusionError::EmptyBatch);
        }
        for s in batch {
            self.check_sample(s)?;
        }
        let per_sample: Vec<(f64, Vec<Mat>)> = batch.par_iter().map(|s| self.sample_grads(s)).collect();
        let n = batch.len() as f64;
        let mut loss = 0.0;
        let mut total: Vec<Mat> = self.params.iter().map(|p| Mat::zeros(p.rows, p.cols)).collect();
        for (l, g) in &per_sample {
            loss += l;
            for (acc, gi) in total.iter_mut().zip(g) {
                acc.add_assign(gi);
            }
        }
        let total: Vec<Mat> = total.into_iter().map(|g| g.scale(1.0 / n)).collect();
        for (g, name) in total.iter().zip(&self.names) {
            if !g.is_finite() {
                return Err(FusionError::NonFinite(name.clone()));
            }
        }
        Ok((loss / n, total))
    }

    /// Mean loss only.
    pub fn loss(&self, batch: &[Sample]) -> Result<f64, FusionError> {
        if batch.is_empty() {
            return Err(FusionError::EmptyBatch);
        }
        let probs = self.forward_batch(batch)?;
        let total: f64 = probs
            .iter()
            .zip(batch)
            .map(|(p, s)| -(if s.superior { p[0] } else { p[1] }).ln())
            .sum();
        Ok(total / batch.len() as f64)
    }
}
