//! Evaluation: matching accuracy on test/forget sets, mean recall for
//! retrieval, blackbox membership inference, the unimodal utility probe, and
//! the ablation grid.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{matching_accuracy, related_rate, MultimodalModel};
use crate::nn::{bce_from_logit, sigmoid};
use crate::synthdata::{DatasetBundle, Modality, Split};
use crate::unlearn::{multidelete_unlearn, UnlearnConfig};

pub const PROBE_CLASSES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    pub variant: String,
    pub d_test_perf: f64,
    pub d_f_perf: f64,
    pub mean_recall: f64,
    pub mi_ratio: f64,
    pub probe_acc_original: f64,
    pub probe_acc_unlearned: f64,
    pub wall_time_s: f64,
    pub config_hash: String,
    pub seed: u64,
}

/// Balanced accuracy (percent) of predict_match over the given positive pairs
/// and an equal number of sampled unrelated negatives.
pub fn eval_matching(
    model: &MultimodalModel,
    bundle: &DatasetBundle,
    positives: &[usize],
    seed: u64,
) -> Result<f64> {
    if positives.is_empty() {
        return Err(Error::InvalidInput("eval_matching needs positives".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xe7a1);
    let negatives: Vec<(usize, usize)> = (0..positives.len())
        .map(|_| crate::unlearn::draw_unrelated_combo(bundle, positives, &mut rng))
        .collect();
    Ok(matching_accuracy(model, bundle, positives, &negatives)? * 100.0)
}

/// Percent of the given pairs the model still classifies as "related".
pub fn eval_related_rate(
    model: &MultimodalModel,
    bundle: &DatasetBundle,
    pairs: &[usize],
) -> Result<f64> {
    let combos: Vec<(usize, usize)> = pairs
        .iter()
        .map(|&pid| {
            let p = bundle.pair(pid);
            (p.a_id, p.b_id)
        })
        .collect();
    Ok(related_rate(model, bundle, &combos)? * 100.0)
}

/// Rank of the ground-truth candidate in a score row; ties broken by
/// ascending candidate index (lower index wins).
fn truth_rank(scores: &[f64], truth: usize) -> usize {
    let s = scores[truth];
    let mut rank = 0;
    for (j, &v) in scores.iter().enumerate() {
        if v > s || (v == s && j < truth) {
            rank += 1;
        }
    }
    rank
}

/// Mean of recall@1, recall@3, recall@10 (percent) over queries, from a score
/// matrix and per-query ground-truth candidate indices. k is truncated to the
/// candidate count when fewer than 10 candidates exist.
pub fn mean_recall_from_scores(scores: &[Vec<f64>], ground_truth: &[usize]) -> Result<f64> {
    if scores.is_empty() || scores[0].is_empty() {
        return Err(Error::InvalidInput("empty score matrix".into()));
    }
    if scores.len() != ground_truth.len() {
        return Err(Error::InvalidInput("ground truth length mismatch".into()));
    }
    let n_cand = scores[0].len();
    let ks = [1usize, 3, 10].map(|k| k.min(n_cand));
    let mut total = 0.0;
    for &k in &ks {
        let mut hits = 0usize;
        for (row, &truth) in scores.iter().zip(ground_truth) {
            if truth_rank(row, truth) < k {
                hits += 1;
            }
        }
        total += hits as f64 / scores.len() as f64;
    }
    Ok(total / ks.len() as f64 * 100.0)
}

/// Mean recall over the test split: each test pair's A-sample queries all test
/// B-samples; the truth is its own partner.
pub fn eval_mean_recall(model: &MultimodalModel, bundle: &DatasetBundle) -> Result<f64> {
    let test = bundle.pair_ids_in(Split::Test);
    if test.is_empty() {
        return Err(Error::InvalidInput("empty test split".into()));
    }
    let queries: Vec<Vec<f64>> = test
        .iter()
        .map(|&pid| bundle.sample_a(bundle.pair(pid).a_id).features.clone())
        .collect();
    let candidates: Vec<Vec<f64>> = test
        .iter()
        .map(|&pid| bundle.sample_b(bundle.pair(pid).b_id).features.clone())
        .collect();
    let scores = model.score_matrix(&queries, &candidates)?;
    let truth: Vec<usize> = (0..test.len()).collect();
    mean_recall_from_scores(&scores, &truth)
}

// ---- membership inference ----

/// Linear max-margin membership classifier over per-pair output features
/// [match probability, 1 - match probability, per-pair BCE loss], with a
/// calibrated logistic over the margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MIAttacker {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub feat_mean: Vec<f64>,
    pub feat_std: Vec<f64>,
    pub platt_a: f64,
    pub platt_b: f64,
}

fn mi_features(model: &MultimodalModel, bundle: &DatasetBundle, pair_id: usize) -> Result<Vec<f64>> {
    let p = bundle.pair(pair_id);
    let logit = model.pair_logit(
        &bundle.sample_a(p.a_id).features,
        &bundle.sample_b(p.b_id).features,
    )?;
    let prob = sigmoid(logit);
    Ok(vec![prob, 1.0 - prob, bce_from_logit(logit, 1.0)])
}

impl MIAttacker {
    fn normalize(&self, feat: &[f64]) -> Vec<f64> {
        feat.iter()
            .zip(self.feat_mean.iter().zip(&self.feat_std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn margin(&self, feat: &[f64]) -> f64 {
        let x = self.normalize(feat);
        x.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>() + self.bias
    }

    /// Calibrated membership probability in [0, 1].
    pub fn membership_probability(&self, feat: &[f64]) -> f64 {
        sigmoid(self.platt_a * self.margin(feat) + self.platt_b)
    }

    /// Hinge-loss (max-margin) training with Platt-scaled probabilities.
    /// `labels` are +1 (member) / -1 (non-member).
    pub fn fit(features: &[Vec<f64>], labels: &[f64], seed: u64) -> Result<MIAttacker> {
        if features.is_empty() || features.len() != labels.len() {
            return Err(Error::InvalidInput("bad MI training data".into()));
        }
        if labels.iter().all(|&l| l > 0.0) || labels.iter().all(|&l| l < 0.0) {
            return Err(Error::TrainingFailure("single-class MI training data".into()));
        }
        let d = features[0].len();
        let n = features.len() as f64;
        let mut mean = vec![0.0; d];
        for f in features {
            for (m, v) in mean.iter_mut().zip(f) {
                *m += v / n;
            }
        }
        let mut std = vec![0.0; d];
        for f in features {
            for ((s, v), m) in std.iter_mut().zip(f).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        for s in &mut std {
            *s = s.sqrt().max(1e-9);
        }
        let norm: Vec<Vec<f64>> = features
            .iter()
            .map(|f| {
                f.iter()
                    .zip(mean.iter().zip(&std))
                    .map(|(v, (m, s))| (v - m) / s)
                    .collect()
            })
            .collect();

        // Pegasos-style subgradient descent on the regularized hinge loss.
        let lambda = 1e-3;
        let mut w = vec![0.0; d];
        let mut b = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x31a77);
        let mut order: Vec<usize> = (0..features.len()).collect();
        let mut t = 1.0f64;
        for _epoch in 0..30 {
            order.shuffle(&mut rng);
            for &i in &order {
                let eta = 1.0 / (lambda * t);
                let x = &norm[i];
                let y = labels[i];
                let m: f64 = x.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>() + b;
                for wv in w.iter_mut() {
                    *wv *= 1.0 - eta * lambda;
                }
                if y * m < 1.0 {
                    for (wv, xv) in w.iter_mut().zip(x) {
                        *wv += eta * y * xv;
                    }
                    b += eta * y;
                }
                t += 1.0;
            }
        }

        // Platt scaling: 1-d logistic regression on the margins.
        let margins: Vec<f64> = norm
            .iter()
            .map(|x| x.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>() + b)
            .collect();
        let targets: Vec<f64> = labels.iter().map(|&l| if l > 0.0 { 1.0 } else { 0.0 }).collect();
        let mut a = 1.0;
        let mut c = 0.0;
        let lr = 0.1;
        for _ in 0..500 {
            let mut ga = 0.0;
            let mut gc = 0.0;
            for (m, y) in margins.iter().zip(&targets) {
                let p = sigmoid(a * m + c);
                ga += (p - y) * m / n;
                gc += (p - y) / n;
            }
            a -= lr * ga;
            c -= lr * gc;
        }
        Ok(MIAttacker {
            weights: w,
            bias: b,
            feat_mean: mean,
            feat_std: std,
            platt_a: a,
            platt_b: c,
        })
    }
}

/// Train the MI attacker against `model`: a train subset of size |val| as
/// member examples, the validation split as non-members. The member subset
/// is drawn from the retained pairs only — the attacker models ordinary
/// membership signal, not the deletion targets it is later queried about.
pub fn train_mi_attacker(
    model: &MultimodalModel,
    bundle: &DatasetBundle,
    seed: u64,
) -> Result<MIAttacker> {
    let val = bundle.pair_ids_in(Split::Val);
    if val.is_empty() {
        return Err(Error::InvalidInput("validation split is empty".into()));
    }
    let mut train: Vec<usize> = bundle
        .pair_ids_in(Split::Train)
        .into_iter()
        .filter(|pid| !bundle.deletion_mask.contains(pid))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x3a77ac);
    train.shuffle(&mut rng);
    let members: Vec<usize> = train.into_iter().take(val.len()).collect();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for &pid in &members {
        features.push(mi_features(model, bundle, pid)?);
        labels.push(1.0);
    }
    for &pid in &val {
        features.push(mi_features(model, bundle, pid)?);
        labels.push(-1.0);
    }
    MIAttacker::fit(&features, &labels, seed)
}

/// Mean membership probability the attacker assigns to D_f under `model`.
pub fn existence_probability(
    attacker: &MIAttacker,
    model: &MultimodalModel,
    bundle: &DatasetBundle,
) -> Result<f64> {
    let forget = bundle.forget_ids();
    if forget.is_empty() {
        return Err(Error::InvalidInput("deletion mask is empty".into()));
    }
    let mut total = 0.0;
    for &pid in &forget {
        total += attacker.membership_probability(&mi_features(model, bundle, pid)?);
    }
    Ok(total / forget.len() as f64)
}

/// Prior-to-post ratio of D_f existence probabilities: one attacker trained
/// against f, one against f', identical protocol. Higher means better
/// protection of the deleted data.
pub fn mi_ratio(
    f: &MultimodalModel,
    f_prime: &MultimodalModel,
    bundle: &DatasetBundle,
    seed: u64,
) -> Result<f64> {
    let prior_attacker = train_mi_attacker(f, bundle, seed)?;
    let post_attacker = train_mi_attacker(f_prime, bundle, seed)?;
    let prior = existence_probability(&prior_attacker, f, bundle)?;
    let mut post = existence_probability(&post_attacker, f_prime, bundle)?;
    if post < 1e-6 {
        eprintln!("warning: post existence probability {post} clamped to 1e-6");
        post = 1e-6;
    }
    Ok(prior / post)
}

// ---- unimodal utility probe ----

/// Deterministic class labels for the unimodal probe: each sample's class is
/// the argmax over PROBE_CLASSES fixed pseudo-random projections of its raw
/// feature vector. The labels are a pure function of the synthetic ground
/// truth, shared across splits, and linearly decodable from any embedding
/// that preserves the feature geometry — so probe accuracy measures how much
/// unimodal structure an encoder retains.
fn probe_labeler(dim: usize) -> impl Fn(&[f64]) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9c0be_1abe1);
    let projections: Vec<Vec<f64>> = (0..PROBE_CLASSES)
        .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    move |x: &[f64]| {
        let mut best = 0;
        let mut best_v = f64::MIN;
        for (c, r) in projections.iter().enumerate() {
            let v: f64 = r.iter().zip(x).map(|(a, b)| a * b).sum();
            if v > best_v {
                best_v = v;
                best = c;
            }
        }
        best
    }
}

struct Softmax {
    w: Vec<f64>, // classes x dim, row-major
    b: Vec<f64>,
    dim: usize,
    classes: usize,
}

impl Softmax {
    fn fit(x: &[Vec<f64>], y: &[usize], classes: usize, steps: usize, lr: f64) -> Softmax {
        let dim = x[0].len();
        let mut model = Softmax { w: vec![0.0; classes * dim], b: vec![0.0; classes], dim, classes };
        let n = x.len() as f64;
        for _ in 0..steps {
            let mut gw = vec![0.0; classes * dim];
            let mut gb = vec![0.0; classes];
            for (xi, &yi) in x.iter().zip(y) {
                let p = model.probs(xi);
                for c in 0..classes {
                    let d = (p[c] - if c == yi { 1.0 } else { 0.0 }) / n;
                    gb[c] += d;
                    for (g, v) in gw[c * dim..(c + 1) * dim].iter_mut().zip(xi) {
                        *g += d * v;
                    }
                }
            }
            for (w, g) in model.w.iter_mut().zip(&gw) {
                *w -= lr * g;
            }
            for (b, g) in model.b.iter_mut().zip(&gb) {
                *b -= lr * g;
            }
        }
        model
    }

    fn probs(&self, x: &[f64]) -> Vec<f64> {
        let mut z: Vec<f64> = (0..self.classes)
            .map(|c| {
                self.w[c * self.dim..(c + 1) * self.dim]
                    .iter()
                    .zip(x)
                    .map(|(w, v)| w * v)
                    .sum::<f64>()
                    + self.b[c]
            })
            .collect();
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in &mut z {
            *v = (*v - m).exp();
            sum += *v;
        }
        for v in &mut z {
            *v /= sum;
        }
        z
    }

    fn predict(&self, x: &[f64]) -> usize {
        let p = self.probs(x);
        let mut best = 0;
        for (i, v) in p.iter().enumerate() {
            if *v > p[best] {
                best = i;
            }
        }
        best
    }
}

/// Linear probe over frozen modality-A embeddings: trained on f's embeddings
/// of train samples, evaluated on test samples under f (acc_original) and
/// under f' (acc_unlearned). Accuracies in percent.
pub fn unimodal_probe(
    f: &MultimodalModel,
    f_prime: &MultimodalModel,
    bundle: &DatasetBundle,
    _seed: u64,
) -> Result<(f64, f64)> {
    let labeler = probe_labeler(bundle.config.dim_a);
    let collect = |split: Split| -> (Vec<Vec<f64>>, Vec<usize>) {
        let ids = bundle.pair_ids_in(split);
        let feats: Vec<Vec<f64>> = ids
            .iter()
            .map(|&pid| bundle.sample_a(bundle.pair(pid).a_id).features.clone())
            .collect();
        let labels = feats.iter().map(|x| labeler(x)).collect();
        (feats, labels)
    };
    let (train_x_raw, train_y) = collect(Split::Train);
    let (test_x_raw, test_y) = collect(Split::Test);
    if test_x_raw.is_empty() {
        return Err(Error::InvalidInput("empty test split".into()));
    }
    let classes: std::collections::BTreeSet<usize> = train_y.iter().copied().collect();
    if classes.len() < 2 {
        return Err(Error::InvalidInput("probe needs at least 2 classes".into()));
    }
    let train_emb = f.encode(Modality::A, &train_x_raw)?;
    let probe = Softmax::fit(&train_emb, &train_y, PROBE_CLASSES, 300, 2.0);
    let acc = |emb: &[Vec<f64>]| {
        let hits = emb
            .iter()
            .zip(&test_y)
            .filter(|(x, &y)| probe.predict(x) == y)
            .count();
        hits as f64 / emb.len() as f64 * 100.0
    };
    let acc_original = acc(&f.encode(Modality::A, &test_x_raw)?);
    let acc_unlearned = acc(&f_prime.encode(Modality::A, &test_x_raw)?);
    Ok((acc_original, acc_unlearned))
}

// ---- ablation ----

/// Evaluate one unlearned model against the original. `d_f_perf` is the
/// percent of D_f pairs still classified as related; `d_test_perf` is
/// balanced matching accuracy on the test split.
pub fn evaluate_model(
    f: &MultimodalModel,
    f_prime: &MultimodalModel,
    bundle: &DatasetBundle,
    method: &str,
    variant: &str,
    seed: u64,
    wall_time_s: f64,
    config_hash: &str,
) -> Result<MetricsReport> {
    let test = bundle.pair_ids_in(Split::Test);
    let forget = bundle.forget_ids();
    let d_test_perf = eval_matching(f_prime, bundle, &test, seed)?;
    let d_f_perf = eval_related_rate(f_prime, bundle, &forget)?;
    let mean_recall = eval_mean_recall(f_prime, bundle)?;
    let mi = mi_ratio(f, f_prime, bundle, seed)?;
    let (probe_acc_original, probe_acc_unlearned) = unimodal_probe(f, f_prime, bundle, seed)?;
    Ok(MetricsReport {
        method: method.to_string(),
        variant: variant.to_string(),
        d_test_perf,
        d_f_perf,
        mean_recall,
        mi_ratio: mi,
        probe_acc_original,
        probe_acc_unlearned,
        wall_time_s,
        config_hash: config_hash.to_string(),
        seed,
    })
}

/// Ablation grid: full objective, then alpha=0 (-MD), gamma=0 (-UKR),
/// beta=0 (-MKR), all with the same seed.
pub fn run_ablation(
    f: &MultimodalModel,
    bundle: &DatasetBundle,
    base_config: &UnlearnConfig,
) -> Result<Vec<(String, MetricsReport)>> {
    base_config.validate()?;
    let variants: [(&str, f64, f64, f64); 4] = [
        ("full", base_config.alpha, base_config.beta, base_config.gamma),
        ("-MD", 0.0, base_config.beta, base_config.gamma),
        ("-UKR", base_config.alpha, base_config.beta, 0.0),
        ("-MKR", base_config.alpha, 0.0, base_config.gamma),
    ];
    let mut out = Vec::new();
    for (label, alpha, beta, gamma) in variants {
        let cfg = UnlearnConfig { alpha, beta, gamma, ..base_config.clone() };
        let (f_prime, trace) = multidelete_unlearn(f, bundle, &cfg)?;
        let report = evaluate_model(
            f,
            &f_prime,
            bundle,
            "multidelete",
            label,
            base_config.seed,
            trace.wall_time_s,
            "",
        )?;
        out.push((label.to_string(), report));
    }
    Ok(out)
}
