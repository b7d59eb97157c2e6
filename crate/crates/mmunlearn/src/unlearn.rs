//! Unlearning of pair relationships from a trained dual-encoder model.
//!
//! Three properties drive the objective: modality decoupling (deleted pairs'
//! fused representations move toward those of unrelated pairs), multimodal
//! knowledge retention (fused representations on retained pairs stay close to
//! the original model's), and unimodal knowledge retention (per-modality
//! embeddings of deleted items stay put). The aggregate is a weighted sum
//! optimized by SGD against the frozen original model as teacher.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{matching_accuracy, validation_negatives, ModelGrad, MultimodalModel};
use crate::synthdata::{DatasetBundle, Split};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    Mse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    Concatenation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnlearnConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub distance: Distance,
    pub readout: Readout,
    pub lr: f64,
    pub steps: usize,
    pub batch_f: usize,
    pub batch_r: usize,
    /// k unrelated pairs per deleted pair.
    pub unrelated_per_deleted: usize,
    pub fusion_only: bool,
    pub seed: u64,
    /// Operationalizes the epsilon of the decoupling definition.
    pub decoupling_tolerance: f64,
    /// Validation-accuracy checkpoint cadence, in steps.
    pub val_every: usize,
}

impl Default for UnlearnConfig {
    fn default() -> Self {
        UnlearnConfig {
            alpha: 0.5,
            beta: 12.0,
            gamma: 1.0,
            distance: Distance::Mse,
            readout: Readout::Concatenation,
            lr: 1e-2,
            steps: 3500,
            batch_f: 32,
            batch_r: 64,
            unrelated_per_deleted: 1,
            fusion_only: false,
            seed: 0,
            decoupling_tolerance: 0.1,
            val_every: 3500,
        }
    }
}

impl UnlearnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha < 0.0 || self.beta < 0.0 || self.gamma < 0.0 {
            return Err(Error::Config("loss weights must be >= 0".into()));
        }
        if self.lr <= 0.0 {
            return Err(Error::Config("lr must be > 0".into()));
        }
        if self.unrelated_per_deleted == 0 {
            return Err(Error::Config("unrelated_per_deleted must be >= 1".into()));
        }
        if self.decoupling_tolerance < 0.0 {
            return Err(Error::Config("decoupling_tolerance must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub l_md: f64,
    pub l_mkr: f64,
    pub l_ukr: f64,
    pub total: f64,
    /// Elapsed wall-clock seconds since the start of the run.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnlearnTrace {
    pub rows: Vec<TraceRow>,
    pub wall_time_s: f64,
    pub selected_step: usize,
}

impl UnlearnTrace {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["step", "l_md", "l_mkr", "l_ukr", "total", "seconds"])?;
        for r in &self.rows {
            w.write_record([
                r.step.to_string(),
                r.l_md.to_string(),
                r.l_mkr.to_string(),
                r.l_ukr.to_string(),
                r.total.to_string(),
                r.seconds.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::InvalidInput(e.to_string()))
    }

    pub fn from_csv(s: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(s.as_bytes());
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != 6 {
                return Err(Error::InvalidInput(format!(
                    "trace row has {} fields, expected 6",
                    rec.len()
                )));
            }
            let parse = |i: usize| -> Result<f64> {
                rec[i]
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidInput(format!("bad trace field: {e}")))
            };
            rows.push(TraceRow {
                step: rec[0]
                    .parse()
                    .map_err(|e| Error::InvalidInput(format!("bad step: {e}")))?,
                l_md: parse(1)?,
                l_mkr: parse(2)?,
                l_ukr: parse(3)?,
                total: parse(4)?,
                seconds: parse(5)?,
            });
        }
        let wall = rows.last().map(|r| r.seconds).unwrap_or(0.0);
        Ok(UnlearnTrace { rows, wall_time_s: wall, selected_step: 0 })
    }
}

type FeatPair<'a> = (&'a [f64], &'a [f64]);

fn mse_and_residual(student_out: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let d = student_out.len() as f64;
    let mut loss = 0.0;
    let mut resid = Vec::with_capacity(student_out.len());
    for (s, t) in student_out.iter().zip(target) {
        let e = s - t;
        loss += e * e / d;
        resid.push(2.0 * e / d);
    }
    (loss, resid)
}

/// Modality-decoupling loss: MSE between student fused representations of
/// deleted pairs and frozen-teacher fused representations of their assigned
/// unrelated pairs (`k` targets per deleted pair). Returns (loss, grad).
pub fn loss_md(
    student: &MultimodalModel,
    teacher: &MultimodalModel,
    deleted: &[FeatPair],
    unrelated: &[FeatPair],
) -> Result<(f64, ModelGrad)> {
    if deleted.is_empty() {
        return Err(Error::InvalidInput("empty deleted batch in loss_md".into()));
    }
    if unrelated.len() % deleted.len() != 0 {
        return Err(Error::InvalidInput(
            "unrelated batch size must be a multiple of deleted batch size".into(),
        ));
    }
    let k = unrelated.len() / deleted.len();
    let mut grad = ModelGrad::zeros_like(student);
    let mut loss = 0.0;
    let inv = 1.0 / (deleted.len() * k) as f64;
    for (i, &(fa, fb)) in deleted.iter().enumerate() {
        let cache = student.forward_pair(fa, fb)?;
        let mut d_fused = vec![0.0; cache.fused.len()];
        for j in 0..k {
            let &(ua, ub) = &unrelated[i * k + j];
            let target = teacher.forward_pair(ua, ub)?.fused;
            let (l, resid) = mse_and_residual(&cache.fused, &target);
            loss += l * inv;
            for (d, r) in d_fused.iter_mut().zip(&resid) {
                *d += r * inv;
            }
        }
        student.backward_from_fused(&cache, &d_fused, &mut grad);
    }
    Ok((loss, grad))
}

/// Multimodal knowledge retention: MSE between student and teacher fused
/// representations on retained pairs.
pub fn loss_mkr(
    student: &MultimodalModel,
    teacher: &MultimodalModel,
    retained: &[FeatPair],
) -> Result<(f64, ModelGrad)> {
    if retained.is_empty() {
        return Err(Error::InvalidInput("empty retained batch in loss_mkr".into()));
    }
    let mut grad = ModelGrad::zeros_like(student);
    let mut loss = 0.0;
    let inv = 1.0 / retained.len() as f64;
    for &(fa, fb) in retained {
        let cache = student.forward_pair(fa, fb)?;
        let target = teacher.forward_pair(fa, fb)?.fused;
        let (l, resid) = mse_and_residual(&cache.fused, &target);
        loss += l * inv;
        let d_fused: Vec<f64> = resid.iter().map(|r| r * inv).collect();
        student.backward_from_fused(&cache, &d_fused, &mut grad);
    }
    Ok((loss, grad))
}

/// Unimodal knowledge retention: MSE between concatenated student and teacher
/// unimodal embeddings of deleted items.
pub fn loss_ukr(
    student: &MultimodalModel,
    teacher: &MultimodalModel,
    deleted: &[FeatPair],
) -> Result<(f64, ModelGrad)> {
    if deleted.is_empty() {
        return Err(Error::InvalidInput("empty deleted batch in loss_ukr".into()));
    }
    let mut grad = ModelGrad::zeros_like(student);
    let mut loss = 0.0;
    let inv = 1.0 / deleted.len() as f64;
    for &(fa, fb) in deleted {
        let cache = student.forward_pair(fa, fb)?;
        let t_cache = teacher.forward_pair(fa, fb)?;
        let mut concat_s = cache.emb_a.clone();
        concat_s.extend_from_slice(&cache.emb_b);
        let mut concat_t = t_cache.emb_a.clone();
        concat_t.extend_from_slice(&t_cache.emb_b);
        let (l, resid) = mse_and_residual(&concat_s, &concat_t);
        loss += l * inv;
        let e = cache.emb_a.len();
        let d_a: Vec<f64> = resid[..e].iter().map(|r| r * inv).collect();
        let d_b: Vec<f64> = resid[e..].iter().map(|r| r * inv).collect();
        student.backward_unimodal(&cache, &d_a, &d_b, &mut grad);
    }
    Ok((loss, grad))
}

pub fn total_loss(l_md: f64, l_mkr: f64, l_ukr: f64, alpha: f64, beta: f64, gamma: f64) -> f64 {
    alpha * l_md + beta * l_mkr + gamma * l_ukr
}

/// One combined loss evaluation (value + gradient) for gradient checking and
/// the SGD loop.
pub fn composite_loss(
    student: &MultimodalModel,
    teacher: &MultimodalModel,
    deleted: &[FeatPair],
    unrelated: &[FeatPair],
    retained: &[FeatPair],
    config: &UnlearnConfig,
) -> Result<(f64, f64, f64, f64, ModelGrad)> {
    let (lmd, gmd) = loss_md(student, teacher, deleted, unrelated)?;
    let (lmkr, gmkr) = loss_mkr(student, teacher, retained)?;
    let (lukr, gukr) = loss_ukr(student, teacher, deleted)?;
    let total = total_loss(lmd, lmkr, lukr, config.alpha, config.beta, config.gamma);
    let mut grad = gmd;
    grad.scale(config.alpha);
    let mut gmkr = gmkr;
    gmkr.scale(config.beta);
    grad.add(&gmkr);
    let mut gukr = gukr;
    gukr.scale(config.gamma);
    grad.add(&gukr);
    Ok((lmd, lmkr, lukr, total, grad))
}

pub(crate) fn draw_unrelated_combo<R: Rng>(
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
        if bundle.pair(p).concept_id == bundle.pair(q).concept_id {
            continue;
        }
        return (bundle.pair(p).a_id, bundle.pair(q).b_id);
    }
}

/// Precomputed teacher outputs for one deleted pair: the pair's features plus
/// the teacher's concatenated unimodal embeddings (the UKR target). The
/// decoupling targets are sampled fresh every step, so they are not cached.
struct DelAnchor {
    fa: Vec<f64>,
    fb: Vec<f64>,
    /// Teacher's concatenated unimodal embeddings of the pair itself.
    emb_target: Vec<f64>,
}

impl DelAnchor {
    fn new(teacher: &MultimodalModel, fa: Vec<f64>, fb: Vec<f64>) -> Result<Self> {
        let t_cache = teacher.forward_pair(&fa, &fb)?;
        let mut emb_target = t_cache.emb_a.clone();
        emb_target.extend_from_slice(&t_cache.emb_b);
        Ok(DelAnchor { fa, fb, emb_target })
    }
}

/// Precomputed teacher fused representation for one retained pair.
struct RetAnchor {
    fa: Vec<f64>,
    fb: Vec<f64>,
    fused: Vec<f64>,
}

/// One SGD step's losses and gradient computed from precomputed teacher
/// anchors plus this step's freshly sampled decoupling targets (`md_targets`
/// holds k teacher fused representations per deleted pair). Matches
/// `composite_loss` on the same batches: the deleted-pair student forward is
/// shared between the decoupling and unimodal terms, and retained-pair teacher
/// outputs come from the anchors instead of fresh forward passes.
fn anchored_step(
    student: &MultimodalModel,
    deleted: &[&DelAnchor],
    md_targets: &[Vec<Vec<f64>>],
    retained: &[&RetAnchor],
    config: &UnlearnConfig,
) -> Result<(f64, f64, f64, f64, ModelGrad)> {
    if md_targets.len() != deleted.len() {
        return Err(Error::InvalidInput(
            "md_targets must align with the deleted batch".into(),
        ));
    }
    let mut grad = ModelGrad::zeros_like(student);
    let mut lmd = 0.0;
    let mut lukr = 0.0;
    let inv_f = 1.0 / deleted.len() as f64;
    for (anchor, targets) in deleted.iter().zip(md_targets) {
        let cache = student.forward_pair(&anchor.fa, &anchor.fb)?;
        let inv_fk = inv_f / targets.len() as f64;
        let mut d_fused = vec![0.0; cache.fused.len()];
        for target in targets {
            let (l, resid) = mse_and_residual(&cache.fused, target);
            lmd += l * inv_fk;
            for (d, r) in d_fused.iter_mut().zip(&resid) {
                *d += r * inv_fk * config.alpha;
            }
        }
        student.backward_from_fused(&cache, &d_fused, &mut grad);
        let mut concat_s = cache.emb_a.clone();
        concat_s.extend_from_slice(&cache.emb_b);
        let (l, resid) = mse_and_residual(&concat_s, &anchor.emb_target);
        lukr += l * inv_f;
        let e = cache.emb_a.len();
        let d_a: Vec<f64> =
            resid[..e].iter().map(|r| r * inv_f * config.gamma).collect();
        let d_b: Vec<f64> =
            resid[e..].iter().map(|r| r * inv_f * config.gamma).collect();
        student.backward_unimodal(&cache, &d_a, &d_b, &mut grad);
    }
    let mut lmkr = 0.0;
    let inv_r = 1.0 / retained.len() as f64;
    for anchor in retained {
        let cache = student.forward_pair(&anchor.fa, &anchor.fb)?;
        let (l, resid) = mse_and_residual(&cache.fused, &anchor.fused);
        lmkr += l * inv_r;
        let d_fused: Vec<f64> =
            resid.iter().map(|r| r * inv_r * config.beta).collect();
        student.backward_from_fused(&cache, &d_fused, &mut grad);
    }
    let total = total_loss(lmd, lmkr, lukr, config.alpha, config.beta, config.gamma);
    Ok((lmd, lmkr, lukr, total, grad))
}

/// MultiDelete: SGD on the aggregate loss starting from a copy of `f`, with
/// `f` itself frozen as teacher. Returns the best-validation checkpoint.
pub fn multidelete_unlearn(
    f: &MultimodalModel,
    bundle: &DatasetBundle,
    config: &UnlearnConfig,
) -> Result<(MultimodalModel, UnlearnTrace)> {
    config.validate()?;
    let forget = bundle.forget_ids();
    if forget.is_empty() {
        return Err(Error::InvalidInput("deletion mask is empty".into()));
    }
    let retain = bundle.retain_ids();
    if retain.len() < 2 {
        return Err(Error::InsufficientData("retain set too small".into()));
    }
    let mut student = f.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0xde1e7e));
    let k = config.unrelated_per_deleted;
    let batch_f = config.batch_f.min(forget.len()).max(1);
    let batch_r = config.batch_r.min(retain.len()).max(1);
    // The teacher is frozen, so its outputs on the deleted and retained pairs
    // themselves can be computed once up front; the decoupling targets are
    // sampled fresh every step below.
    let mut del_anchors = Vec::with_capacity(forget.len());
    for &pid in &forget {
        let p = bundle.pair(pid);
        let fa = bundle.sample_a(p.a_id).features.clone();
        let fb = bundle.sample_b(p.b_id).features.clone();
        del_anchors.push(DelAnchor::new(f, fa, fb)?);
    }
    let mut ret_anchors = Vec::with_capacity(retain.len());
    for &pid in &retain {
        let p = bundle.pair(pid);
        let fa = bundle.sample_a(p.a_id).features.clone();
        let fb = bundle.sample_b(p.b_id).features.clone();
        let fused = f.forward_pair(&fa, &fb)?.fused;
        ret_anchors.push(RetAnchor { fa, fb, fused });
    }
    let val = bundle.pair_ids_in(Split::Val);
    let val_negs = validation_negatives(bundle, config.seed);
    let start = Instant::now();
    let mut rows = Vec::with_capacity(config.steps);
    let mut best = student.clone();
    let mut best_acc = -1.0;
    let mut best_step = 0;
    for step in 0..config.steps {
        let del_batch: Vec<&DelAnchor> = (0..batch_f)
            .map(|_| &del_anchors[rng.gen_range(0..forget.len())])
            .collect();
        // k freshly drawn unrelated targets per deleted pair, every step.
        let mut md_targets = Vec::with_capacity(batch_f);
        for _ in 0..batch_f {
            let mut reps = Vec::with_capacity(k);
            for _ in 0..k {
                let (a, b) = draw_unrelated_combo(bundle, &retain, &mut rng);
                reps.push(
                    f.forward_pair(
                        &bundle.sample_a(a).features,
                        &bundle.sample_b(b).features,
                    )?
                    .fused,
                );
            }
            md_targets.push(reps);
        }
        let ret_batch: Vec<&RetAnchor> = (0..batch_r)
            .map(|_| &ret_anchors[rng.gen_range(0..retain.len())])
            .collect();
        let (lmd, lmkr, lukr, total, mut grad) =
            anchored_step(&student, &del_batch, &md_targets, &ret_batch, config)?;
        if !total.is_finite() {
            return Err(Error::TrainingFailure(format!(
                "non-finite unlearning loss at step {step} (l_md={lmd}, l_mkr={lmkr}, l_ukr={lukr})"
            )));
        }
        if config.fusion_only {
            grad.mask_encoders();
        }
        student.sgd_step(&grad, config.lr, config.fusion_only);
        rows.push(TraceRow {
            step,
            l_md: lmd,
            l_mkr: lmkr,
            l_ukr: lukr,
            total,
            seconds: start.elapsed().as_secs_f64(),
        });
        let at_val =
            (step + 1) % config.val_every.max(1) == 0 || step + 1 == config.steps;
        if at_val && !val.is_empty() {
            let acc = matching_accuracy(&student, bundle, &val, &val_negs)?;
            if acc >= best_acc {
                best_acc = acc;
                best = student.clone();
                best_step = step + 1;
            }
        }
    }
    let selected = if config.steps == 0 || val.is_empty() {
        best = student;
        config.steps
    } else {
        best_step
    };
    let trace = UnlearnTrace {
        wall_time_s: start.elapsed().as_secs_f64(),
        selected_step: selected,
        rows,
    };
    Ok((best, trace))
}

/// Monte-Carlo estimate of the decoupling statistic: the Euclidean norm of the
/// mean difference between student fused representations on deleted pairs and
/// teacher fused representations on unrelated pairs.
pub fn decoupling_statistic(
    f_prime: &MultimodalModel,
    f: &MultimodalModel,
    bundle: &DatasetBundle,
    n_unrelated: usize,
    seed: u64,
) -> Result<f64> {
    let forget = bundle.forget_ids();
    if forget.is_empty() {
        return Err(Error::InvalidInput("deletion mask is empty".into()));
    }
    let retain = bundle.retain_ids();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = f.config.fused_dim();
    let mut mean_deleted = vec![0.0; dim];
    for &pid in &forget {
        let p = bundle.pair(pid);
        let fused = f_prime
            .forward_pair(&bundle.sample_a(p.a_id).features, &bundle.sample_b(p.b_id).features)?
            .fused;
        for (m, v) in mean_deleted.iter_mut().zip(&fused) {
            *m += v / forget.len() as f64;
        }
    }
    let mut mean_unrelated = vec![0.0; dim];
    for _ in 0..n_unrelated {
        let (a, b) = draw_unrelated_combo(bundle, &retain, &mut rng);
        let fused = f
            .forward_pair(&bundle.sample_a(a).features, &bundle.sample_b(b).features)?
            .fused;
        for (m, v) in mean_unrelated.iter_mut().zip(&fused) {
            *m += v / n_unrelated as f64;
        }
    }
    Ok(mean_deleted
        .iter()
        .zip(&mean_unrelated)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}
