//! Dual-encoder multimodal model: two feedforward encoders, a fusion module
//! (parametric feedforward over concatenation, or dot product), and a logistic
//! matching head. Gradients are hand-derived and validated by `grad_check`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{bce_from_logit, dot, sigmoid, Dense, Mlp, MlpCache, MlpGrad};
use crate::synthdata::{DatasetBundle, Modality, Split};

pub const CHECKPOINT_SCHEMA: &str = "model/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionKind {
    Parametric,
    DotProduct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub dim_a: usize,
    pub dim_b: usize,
    pub emb_dim: usize,
    /// Hidden widths per encoder (tanh layers before the linear embedding layer).
    pub hidden_dims: Vec<usize>,
    pub fusion_kind: FusionKind,
    /// Hidden width of the parametric fusion feedforward.
    pub fusion_hidden: usize,
    /// Output dim of the parametric fusion module.
    pub fusion_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dim_a: 56,
            dim_b: 48,
            emb_dim: 48,
            hidden_dims: vec![128],
            fusion_kind: FusionKind::Parametric,
            fusion_hidden: 192,
            fusion_dim: 32,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.emb_dim == 0 {
            return Err(Error::Config("emb_dim must be >= 1".into()));
        }
        if self.fusion_kind == FusionKind::Parametric && self.fusion_dim == 0 {
            return Err(Error::Config("parametric fusion output dim must be >= 1".into()));
        }
        Ok(())
    }

    pub fn fused_dim(&self) -> usize {
        match self.fusion_kind {
            FusionKind::Parametric => self.fusion_dim,
            FusionKind::DotProduct => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub enc_a: Mlp,
    pub enc_b: Mlp,
    pub fusion: Option<Mlp>,
    pub head: Dense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultimodalModel {
    pub config: ModelConfig,
    pub params: ModelParams,
}

/// Gradients mirroring `ModelParams`.
#[derive(Debug, Clone)]
pub struct ModelGrad {
    pub enc_a: MlpGrad,
    pub enc_b: MlpGrad,
    pub fusion: Option<MlpGrad>,
    pub head: Dense,
}

impl ModelGrad {
    pub fn zeros_like(model: &MultimodalModel) -> Self {
        ModelGrad {
            enc_a: MlpGrad::zeros_like(&model.params.enc_a),
            enc_b: MlpGrad::zeros_like(&model.params.enc_b),
            fusion: model.params.fusion.as_ref().map(MlpGrad::zeros_like),
            head: Dense::zeros(model.params.head.rows, model.params.head.cols),
        }
    }

    pub fn scale(&mut self, c: f64) {
        self.enc_a.scale(c);
        self.enc_b.scale(c);
        if let Some(f) = &mut self.fusion {
            f.scale(c);
        }
        for v in self.head.w.iter_mut().chain(self.head.b.iter_mut()) {
            *v *= c;
        }
    }

    pub fn add(&mut self, other: &ModelGrad) {
        self.enc_a.add(&other.enc_a);
        self.enc_b.add(&other.enc_b);
        if let (Some(a), Some(b)) = (&mut self.fusion, &other.fusion) {
            a.add(b);
        }
        for (x, y) in self.head.w.iter_mut().zip(&other.head.w) {
            *x += y;
        }
        for (x, y) in self.head.b.iter_mut().zip(&other.head.b) {
            *x += y;
        }
    }

    /// Zero out the encoder gradients (fusion-only training).
    pub fn mask_encoders(&mut self) {
        self.enc_a = MlpGrad { layers: self.enc_a.layers.iter().map(|l| Dense::zeros(l.rows, l.cols)).collect() };
        self.enc_b = MlpGrad { layers: self.enc_b.layers.iter().map(|l| Dense::zeros(l.rows, l.cols)).collect() };
    }
}

/// Cache from a paired forward pass, consumed by the backward helpers.
pub struct PairCache {
    pub emb_a: Vec<f64>,
    pub emb_b: Vec<f64>,
    pub fused: Vec<f64>,
    cache_a: MlpCache,
    cache_b: MlpCache,
    cache_fusion: Option<MlpCache>,
}

impl MultimodalModel {
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut enc_dims_a = vec![config.dim_a];
        enc_dims_a.extend(&config.hidden_dims);
        enc_dims_a.push(config.emb_dim);
        let mut enc_dims_b = vec![config.dim_b];
        enc_dims_b.extend(&config.hidden_dims);
        enc_dims_b.push(config.emb_dim);
        let enc_a = Mlp::new(&enc_dims_a, &mut rng)?;
        let enc_b = Mlp::new(&enc_dims_b, &mut rng)?;
        let (fusion, head) = match config.fusion_kind {
            FusionKind::Parametric => {
                let fusion = Mlp::new(
                    &[2 * config.emb_dim, config.fusion_hidden, config.fusion_dim],
                    &mut rng,
                )?;
                let head = Dense::init(1, config.fusion_dim, &mut rng);
                (Some(fusion), head)
            }
            FusionKind::DotProduct => {
                // Identity-initialized affine head: the dot-product score is
                // the logit at init, but the head stays trainable.
                let head = Dense { rows: 1, cols: 1, w: vec![1.0], b: vec![0.0] };
                (None, head)
            }
        };
        Ok(MultimodalModel { config: config.clone(), params: ModelParams { enc_a, enc_b, fusion, head } })
    }

    pub fn encode(&self, modality: Modality, batch: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let (enc, dim) = match modality {
            Modality::A => (&self.params.enc_a, self.config.dim_a),
            Modality::B => (&self.params.enc_b, self.config.dim_b),
        };
        batch
            .iter()
            .map(|x| {
                if x.len() != dim {
                    return Err(Error::Shape(format!(
                        "expected input dim {dim}, got {}",
                        x.len()
                    )));
                }
                Ok(enc.forward(x))
            })
            .collect()
    }

    pub fn fuse(&self, emb_a: &[f64], emb_b: &[f64]) -> Result<Vec<f64>> {
        if emb_a.len() != self.config.emb_dim || emb_b.len() != self.config.emb_dim {
            return Err(Error::Shape("embedding dim mismatch in fuse".into()));
        }
        match self.config.fusion_kind {
            FusionKind::Parametric => {
                let mut concat = emb_a.to_vec();
                concat.extend_from_slice(emb_b);
                Ok(self.params.fusion.as_ref().unwrap().forward(&concat))
            }
            FusionKind::DotProduct => Ok(vec![dot(emb_a, emb_b)]),
        }
    }

    /// Full forward pass over one (feature_a, feature_b) pair, with caches.
    pub fn forward_pair(&self, feat_a: &[f64], feat_b: &[f64]) -> Result<PairCache> {
        if feat_a.len() != self.config.dim_a || feat_b.len() != self.config.dim_b {
            return Err(Error::Shape("feature dim mismatch in forward_pair".into()));
        }
        let (emb_a, cache_a) = self.params.enc_a.forward_cached(feat_a);
        let (emb_b, cache_b) = self.params.enc_b.forward_cached(feat_b);
        let (fused, cache_fusion) = match self.config.fusion_kind {
            FusionKind::Parametric => {
                let mut concat = emb_a.clone();
                concat.extend_from_slice(&emb_b);
                let (fused, c) = self.params.fusion.as_ref().unwrap().forward_cached(&concat);
                (fused, Some(c))
            }
            FusionKind::DotProduct => (vec![dot(&emb_a, &emb_b)], None),
        };
        Ok(PairCache { emb_a, emb_b, fused, cache_a, cache_b, cache_fusion })
    }

    pub fn logit_from_cache(&self, cache: &PairCache) -> f64 {
        self.params.head.matvec(&cache.fused)[0]
    }

    pub fn pair_logit(&self, feat_a: &[f64], feat_b: &[f64]) -> Result<f64> {
        Ok(self.logit_from_cache(&self.forward_pair(feat_a, feat_b)?))
    }

    /// Matching probability for each (feat_a, feat_b) pair.
    pub fn predict_match(&self, pairs: &[(&[f64], &[f64])]) -> Result<Vec<f64>> {
        pairs
            .iter()
            .map(|(a, b)| Ok(sigmoid(self.pair_logit(a, b)?)))
            .collect()
    }

    /// Matrix of matching logits: entry (i, j) scores (query_i, candidate_j).
    pub fn score_matrix(
        &self,
        queries: &[Vec<f64>],
        candidates: &[Vec<f64>],
    ) -> Result<Vec<Vec<f64>>> {
        if queries.is_empty() || candidates.is_empty() {
            return Err(Error::InvalidInput("score_matrix needs nonempty inputs".into()));
        }
        queries
            .iter()
            .map(|q| candidates.iter().map(|c| self.pair_logit(q, c)).collect())
            .collect()
    }

    /// Backprop a gradient w.r.t. the fused representation into `grad`.
    pub fn backward_from_fused(&self, cache: &PairCache, d_fused: &[f64], grad: &mut ModelGrad) {
        let (d_emb_a, d_emb_b) = match self.config.fusion_kind {
            FusionKind::Parametric => {
                let fusion = self.params.fusion.as_ref().unwrap();
                let d_concat = fusion.backward(
                    cache.cache_fusion.as_ref().unwrap(),
                    d_fused,
                    grad.fusion.as_mut().unwrap(),
                );
                let e = self.config.emb_dim;
                (d_concat[..e].to_vec(), d_concat[e..].to_vec())
            }
            FusionKind::DotProduct => {
                let s = d_fused[0];
                (
                    cache.emb_b.iter().map(|v| s * v).collect(),
                    cache.emb_a.iter().map(|v| s * v).collect(),
                )
            }
        };
        self.params.enc_a.backward(&cache.cache_a, &d_emb_a, &mut grad.enc_a);
        self.params.enc_b.backward(&cache.cache_b, &d_emb_b, &mut grad.enc_b);
    }

    /// Backprop a gradient w.r.t. the matching logit into `grad`.
    pub fn backward_from_logit(&self, cache: &PairCache, d_logit: f64, grad: &mut ModelGrad) {
        let head = &self.params.head;
        for (gw, f) in grad.head.w.iter_mut().zip(&cache.fused) {
            *gw += d_logit * f;
        }
        grad.head.b[0] += d_logit;
        let d_fused: Vec<f64> = head.w.iter().map(|w| d_logit * w).collect();
        self.backward_from_fused(cache, &d_fused, grad);
    }

    /// Backprop gradients w.r.t. the two unimodal embeddings into the encoder grads.
    pub fn backward_unimodal(
        &self,
        cache: &PairCache,
        d_emb_a: &[f64],
        d_emb_b: &[f64],
        grad: &mut ModelGrad,
    ) {
        self.params.enc_a.backward(&cache.cache_a, d_emb_a, &mut grad.enc_a);
        self.params.enc_b.backward(&cache.cache_b, d_emb_b, &mut grad.enc_b);
    }

    pub fn sgd_step(&mut self, grad: &ModelGrad, lr: f64, fusion_only: bool) {
        if !fusion_only {
            self.params.enc_a.sgd_step(&grad.enc_a, lr);
            self.params.enc_b.sgd_step(&grad.enc_b, lr);
        }
        if let (Some(f), Some(g)) = (&mut self.params.fusion, &grad.fusion) {
            f.sgd_step(g, lr);
        }
        for (w, g) in self.params.head.w.iter_mut().zip(&grad.head.w) {
            *w -= lr * g;
        }
        for (b, g) in self.params.head.b.iter_mut().zip(&grad.head.b) {
            *b -= lr * g;
        }
    }

    // ---- flat parameter view (grad_check, weight scrubbing) ----

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in self.params.enc_a.layers.iter().chain(&self.params.enc_b.layers) {
            out.extend(&l.w);
            out.extend(&l.b);
        }
        if let Some(f) = &self.params.fusion {
            for l in &f.layers {
                out.extend(&l.w);
                out.extend(&l.b);
            }
        }
        out.extend(&self.params.head.w);
        out.extend(&self.params.head.b);
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        let mut i = 0;
        let mut take = |dst: &mut [f64]| {
            dst.copy_from_slice(&flat[i..i + dst.len()]);
            i += dst.len();
        };
        for l in self
            .params
            .enc_a
            .layers
            .iter_mut()
            .chain(self.params.enc_b.layers.iter_mut())
        {
            take(&mut l.w);
            take(&mut l.b);
        }
        if let Some(f) = &mut self.params.fusion {
            for l in &mut f.layers {
                take(&mut l.w);
                take(&mut l.b);
            }
        }
        take(&mut self.params.head.w);
        take(&mut self.params.head.b);
        debug_assert_eq!(i, flat.len());
    }

    pub fn n_params(&self) -> usize {
        self.flat_params().len()
    }

    /// Flat index range of the encoder parameters (prefix of the flat layout).
    pub fn encoder_param_count(&self) -> usize {
        self.params.enc_a.n_params() + self.params.enc_b.n_params()
    }
}

pub fn flat_grad(model: &MultimodalModel, grad: &ModelGrad) -> Vec<f64> {
    let mut out = Vec::with_capacity(model.n_params());
    for l in grad.enc_a.layers.iter().chain(&grad.enc_b.layers) {
        out.extend(&l.w);
        out.extend(&l.b);
    }
    if let Some(f) = &grad.fusion {
        for l in &f.layers {
            out.extend(&l.w);
            out.extend(&l.b);
        }
    }
    out.extend(&grad.head.w);
    out.extend(&grad.head.b);
    out
}

// ---- training ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub val_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { steps: 5000, batch: 128, lr: 0.2, val_every: 100, seed: 1 }
    }
}

/// Mean BCE gradient over (pair, label) examples given by raw feature refs.
/// Returns (mean loss, grad).
pub fn bce_batch_grad(
    model: &MultimodalModel,
    examples: &[(&[f64], &[f64], f64)],
) -> Result<(f64, ModelGrad)> {
    if examples.is_empty() {
        return Err(Error::InvalidInput("empty BCE batch".into()));
    }
    let mut grad = ModelGrad::zeros_like(model);
    let mut loss = 0.0;
    let inv = 1.0 / examples.len() as f64;
    for &(fa, fb, label) in examples {
        let cache = model.forward_pair(fa, fb)?;
        let logit = model.logit_from_cache(&cache);
        loss += bce_from_logit(logit, label) * inv;
        let d_logit = (sigmoid(logit) - label) * inv;
        model.backward_from_logit(&cache, d_logit, &mut grad);
    }
    Ok((loss, grad))
}

/// Balanced matching accuracy over positives plus given negative combinations.
pub fn matching_accuracy(
    model: &MultimodalModel,
    bundle: &DatasetBundle,
    positives: &[usize],
    negatives: &[(usize, usize)],
) -> Result<f64> {
    if positives.is_empty() {
        return Err(Error::InvalidInput("empty positive set".into()));
    }
    let mut correct_pos = 0usize;
    for &pid in positives {
        let p = bundle.pair(pid);
        let prob = sigmoid(model.pair_logit(
            &bundle.sample_a(p.a_id).features,
            &bundle.sample_b(p.b_id).features,
        )?);
        if prob > 0.5 {
            correct_pos += 1;
        }
    }
    let mut correct_neg = 0usize;
    for &(a, b) in negatives {
        let prob = sigmoid(model.pair_logit(
            &bundle.sample_a(a).features,
            &bundle.sample_b(b).features,
        )?);
        if prob <= 0.5 {
            correct_neg += 1;
        }
    }
    let acc_pos = correct_pos as f64 / positives.len() as f64;
    let acc_neg = if negatives.is_empty() {
        acc_pos
    } else {
        correct_neg as f64 / negatives.len() as f64
    };
    Ok(0.5 * (acc_pos + acc_neg))
}

/// Fraction of the given pairs classified as "related" (probability > 0.5).
pub fn related_rate(
    model: &MultimodalModel,
    bundle: &DatasetBundle,
    combos: &[(usize, usize)],
) -> Result<f64> {
    if combos.is_empty() {
        return Err(Error::InvalidInput("empty pair set".into()));
    }
    let mut hits = 0usize;
    for &(a, b) in combos {
        let prob = sigmoid(model.pair_logit(
            &bundle.sample_a(a).features,
            &bundle.sample_b(b).features,
        )?);
        if prob > 0.5 {
            hits += 1;
        }
    }
    Ok(hits as f64 / combos.len() as f64)
}

fn draw_negative<R: Rng>(
    bundle: &DatasetBundle,
    pool: &[usize],
    rng: &mut R,
) -> (usize, usize) {
    loop {
        let p = pool[rng.gen_range(0..pool.len())];
        let q = pool[rng.gen_range(0..pool.len())];
        if p == q {
            continue;
        }
        let combo = (bundle.pair(p).a_id, bundle.pair(q).b_id);
        // Same-concept cross combinations are still "related" in truth; only
        // exact related records are excluded, mirroring unrelated sampling.
        if bundle.pair(p).concept_id == bundle.pair(q).concept_id {
            continue;
        }
        return combo;
    }
}

/// Seeded negative combinations used for validation accuracy.
pub fn validation_negatives(bundle: &DatasetBundle, seed: u64) -> Vec<(usize, usize)> {
    let val = bundle.pair_ids_in(Split::Val);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_da11);
    (0..val.len()).map(|_| draw_negative(bundle, &val, &mut rng)).collect()
}

/// Train the original model f: BCE on related-vs-unrelated matching with one
/// sampled negative per positive per step. Returns the best-validation
/// checkpoint.
pub fn train_original(
    bundle: &DatasetBundle,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<MultimodalModel> {
    train_on_pool(
        bundle,
        &bundle.pair_ids_in(Split::Train),
        model_config,
        train_config,
        None,
        false,
    )
}

/// BCE training restricted to a pool of train pairs, optionally continuing
/// from an existing model (otherwise fresh init from the seed).
pub fn train_on_pool(
    bundle: &DatasetBundle,
    pool: &[usize],
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    start: Option<&MultimodalModel>,
    fusion_only: bool,
) -> Result<MultimodalModel> {
    if pool.is_empty() {
        return Err(Error::InvalidInput("empty training pool".into()));
    }
    let mut model = match start {
        Some(m) => m.clone(),
        None => MultimodalModel::init(model_config, train_config.seed)?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(train_config.seed.wrapping_add(0x7ea1));
    let val = bundle.pair_ids_in(Split::Val);
    let val_negs = validation_negatives(bundle, train_config.seed);
    let mut best = model.clone();
    let mut best_acc = -1.0;
    for step in 0..train_config.steps {
        let mut feats: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::with_capacity(2 * train_config.batch);
        for _ in 0..train_config.batch {
            let pid = pool[rng.gen_range(0..pool.len())];
            let p = bundle.pair(pid);
            feats.push((
                bundle.sample_a(p.a_id).features.clone(),
                bundle.sample_b(p.b_id).features.clone(),
                1.0,
            ));
            let (na, nb) = draw_negative(bundle, pool, &mut rng);
            feats.push((
                bundle.sample_a(na).features.clone(),
                bundle.sample_b(nb).features.clone(),
                0.0,
            ));
        }
        let examples: Vec<(&[f64], &[f64], f64)> =
            feats.iter().map(|(a, b, l)| (a.as_slice(), b.as_slice(), *l)).collect();
        let (loss, mut grad) = bce_batch_grad(&model, &examples)?;
        if !loss.is_finite() {
            return Err(Error::TrainingFailure(format!("non-finite loss at step {step}")));
        }
        if fusion_only {
            grad.mask_encoders();
        }
        model.sgd_step(&grad, train_config.lr, fusion_only);
        let at_val = (step + 1) % train_config.val_every.max(1) == 0
            || step + 1 == train_config.steps;
        if at_val && !val.is_empty() {
            let acc = matching_accuracy(&model, bundle, &val, &val_negs)?;
            if acc >= best_acc {
                best_acc = acc;
                best = model.clone();
            }
        }
    }
    if train_config.steps == 0 || val.is_empty() {
        return Ok(model);
    }
    Ok(best)
}

// ---- gradient checking ----

/// Compare an analytic gradient against central finite differences (step 1e-5)
/// at `probe_points` random coordinates. Returns the max relative error.
pub fn grad_check<F>(
    model: &MultimodalModel,
    loss: F,
    probe_points: usize,
    seed: u64,
) -> f64
where
    F: Fn(&MultimodalModel) -> (f64, ModelGrad),
{
    let (_, grad) = loss(model);
    let analytic = flat_grad(model, &grad);
    let base = model.flat_params();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let mut max_rel: f64 = 0.0;
    for _ in 0..probe_points {
        let i = rng.gen_range(0..base.len());
        let mut probe = model.clone();
        let mut flat = base.clone();
        flat[i] = base[i] + h;
        probe.set_flat_params(&flat);
        let (lp, _) = loss(&probe);
        flat[i] = base[i] - h;
        probe.set_flat_params(&flat);
        let (lm, _) = loss(&probe);
        let fd = (lp - lm) / (2.0 * h);
        let denom = fd.abs().max(analytic[i].abs());
        let rel = if denom < 1e-8 { 0.0 } else { (fd - analytic[i]).abs() / denom };
        max_rel = max_rel.max(rel);
    }
    max_rel
}

// ---- checkpoint serialization ----

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    schema: String,
    config: ModelConfig,
    params: BTreeMap<String, (Vec<usize>, Vec<f64>)>,
}

fn named_arrays(params: &ModelParams) -> BTreeMap<String, (Vec<usize>, Vec<f64>)> {
    let mut out = BTreeMap::new();
    let put_mlp = |prefix: &str, mlp: &Mlp, out: &mut BTreeMap<String, (Vec<usize>, Vec<f64>)>| {
        for (i, l) in mlp.layers.iter().enumerate() {
            out.insert(format!("{prefix}.{i}.w"), (vec![l.rows, l.cols], l.w.clone()));
            out.insert(format!("{prefix}.{i}.b"), (vec![l.rows], l.b.clone()));
        }
    };
    put_mlp("enc_A", &params.enc_a, &mut out);
    put_mlp("enc_B", &params.enc_b, &mut out);
    if let Some(f) = &params.fusion {
        put_mlp("fusion", f, &mut out);
    }
    out.insert("head.w".into(), (vec![params.head.rows, params.head.cols], params.head.w.clone()));
    out.insert("head.b".into(), (vec![params.head.rows], params.head.b.clone()));
    out
}

pub fn save_checkpoint(model: &MultimodalModel) -> Result<String> {
    let ckpt = Checkpoint {
        schema: CHECKPOINT_SCHEMA.into(),
        config: model.config.clone(),
        params: named_arrays(&model.params),
    };
    Ok(serde_json::to_string(&ckpt)?)
}

pub fn load_checkpoint(json: &str) -> Result<MultimodalModel> {
    let ckpt: Checkpoint = serde_json::from_str(json)?;
    if ckpt.schema != CHECKPOINT_SCHEMA {
        return Err(Error::SchemaVersion {
            expected: CHECKPOINT_SCHEMA.into(),
            found: ckpt.schema,
        });
    }
    let mut model = MultimodalModel::init(&ckpt.config, 0)?;
    let get = |name: &str| -> Result<&(Vec<usize>, Vec<f64>)> {
        ckpt.params
            .get(name)
            .ok_or_else(|| Error::InvalidInput(format!("checkpoint missing array {name}")))
    };
    let load_mlp = |prefix: &str, mlp: &mut Mlp| -> Result<()> {
        for (i, l) in mlp.layers.iter_mut().enumerate() {
            let (shape, data) = get(&format!("{prefix}.{i}.w"))?;
            if shape != &[l.rows, l.cols] || data.len() != l.w.len() {
                return Err(Error::Shape(format!("bad shape for {prefix}.{i}.w")));
            }
            l.w = data.clone();
            let (shape, data) = get(&format!("{prefix}.{i}.b"))?;
            if shape != &[l.rows] || data.len() != l.b.len() {
                return Err(Error::Shape(format!("bad shape for {prefix}.{i}.b")));
            }
            l.b = data.clone();
        }
        Ok(())
    };
    load_mlp("enc_A", &mut model.params.enc_a)?;
    load_mlp("enc_B", &mut model.params.enc_b)?;
    if let Some(f) = &mut model.params.fusion {
        load_mlp("fusion", f)?;
    }
    let (shape, data) = get("head.w")?;
    if shape != &[model.params.head.rows, model.params.head.cols] {
        return Err(Error::Shape("bad shape for head.w".into()));
    }
    model.params.head.w = data.clone();
    let (_, data) = get("head.b")?;
    model.params.head.b = data.clone();
    Ok(model)
}
