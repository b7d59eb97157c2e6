//! Architecture-agnostic comparison methods: Retrain, FineTune, NegGrad, DtD.
//! All share the (f, bundle, config) -> f_prime shape and are deterministic in
//! their seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{bce_batch_grad, train_on_pool, MultimodalModel, TrainConfig};
use crate::synthdata::DatasetBundle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Retrain,
    Finetune,
    Neggrad,
    Dtd,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Retrain => "retrain",
            Method::Finetune => "finetune",
            Method::Neggrad => "neggrad",
            Method::Dtd => "dtd",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinetuneTarget {
    Retain,
    Forget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub method: Method,
    pub lr: f64,
    pub steps: usize,
    pub batch: usize,
    /// FineTune: learning-rate multiplier (>= 1).
    pub lr_multiplier: f64,
    /// DtD: std of the Gaussian weight noise added after the extra steps.
    pub noise_std: f64,
    pub finetune_target: FinetuneTarget,
    /// NegGrad: stop ascending once forget-set accuracy falls to this floor.
    pub neggrad_floor: f64,
    pub fusion_only: bool,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            method: Method::Finetune,
            lr: 0.01,
            steps: 100,
            batch: 32,
            lr_multiplier: 2.0,
            noise_std: 0.05,
            finetune_target: FinetuneTarget::Retain,
            neggrad_floor: 0.25,
            fusion_only: false,
            seed: 0,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 {
            return Err(Error::Config("lr must be > 0".into()));
        }
        if self.lr_multiplier < 1.0 {
            return Err(Error::Config("lr_multiplier must be >= 1".into()));
        }
        if self.noise_std < 0.0 {
            return Err(Error::Config("noise_std must be >= 0".into()));
        }
        if self.method == Method::Retrain && self.fusion_only {
            return Err(Error::Config(
                "retrain has no original model to freeze; fusion_only is undefined".into(),
            ));
        }
        Ok(())
    }
}

/// Retrain from scratch on D_r with the original training objective.
/// Uses a fresh initialization seed distinct from f's.
pub fn retrain_with_config(
    bundle: &DatasetBundle,
    model_config: &crate::model::ModelConfig,
    train_config: &TrainConfig,
    seed: u64,
) -> Result<MultimodalModel> {
    let retain = bundle.retain_ids();
    if retain.is_empty() {
        return Err(Error::InvalidInput("retain set is empty".into()));
    }
    let tc = TrainConfig { seed: seed.wrapping_add(0x5c7a7c8), ..train_config.clone() };
    train_on_pool(bundle, &retain, model_config, &tc, None, false)
}

/// Continued BCE training from f on the configured target set with
/// lr * lr_multiplier.
pub fn finetune(
    f: &MultimodalModel,
    bundle: &DatasetBundle,
    config: &BaselineConfig,
) -> Result<MultimodalModel> {
    config.validate()?;
    let pool = match config.finetune_target {
        FinetuneTarget::Retain => bundle.retain_ids(),
        FinetuneTarget::Forget => bundle.forget_ids(),
    };
    if pool.is_empty() {
        return Err(Error::InvalidInput("finetune target set is empty".into()));
    }
    let tc = TrainConfig {
        steps: config.steps,
        batch: config.batch,
        lr: config.lr * config.lr_multiplier,
        val_every: usize::MAX,
        seed: config.seed,
    };
    train_on_pool(bundle, &pool, &f.config, &tc, Some(f), config.fusion_only)
}

/// Gradient ascent on the original BCE matching loss restricted to D_f pairs.
/// Early-stops once forget-set accuracy drops below the configured floor.
pub fn neggrad(
    f: &MultimodalModel,
    bundle: &DatasetBundle,
    config: &BaselineConfig,
) -> Result<MultimodalModel> {
    config.validate()?;
    let forget = bundle.forget_ids();
    if forget.is_empty() {
        return Err(Error::InvalidInput("deletion mask is empty".into()));
    }
    let mut model = f.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0xa5ce17));
    let forget_combos: Vec<(usize, usize)> = forget
        .iter()
        .map(|&pid| {
            let p = bundle.pair(pid);
            (p.a_id, p.b_id)
        })
        .collect();
    for step in 0..config.steps {
        let mut feats: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
        for _ in 0..config.batch.min(forget.len()).max(1) {
            let pid = forget[rng.gen_range(0..forget.len())];
            let p = bundle.pair(pid);
            feats.push((
                bundle.sample_a(p.a_id).features.clone(),
                bundle.sample_b(p.b_id).features.clone(),
            ));
        }
        let examples: Vec<(&[f64], &[f64], f64)> =
            feats.iter().map(|(a, b)| (a.as_slice(), b.as_slice(), 1.0)).collect();
        let (loss, mut grad) = bce_batch_grad(&model, &examples)?;
        if !loss.is_finite() {
            return Err(Error::TrainingFailure(format!("non-finite loss at step {step}")));
        }
        if config.fusion_only {
            grad.mask_encoders();
        }
        // ascend: theta <- theta + lr * grad
        model.sgd_step(&grad, -config.lr, config.fusion_only);
        let acc = crate::model::related_rate(&model, bundle, &forget_combos)?;
        if acc <= config.neggrad_floor {
            break;
        }
    }
    Ok(model)
}

/// Descent-to-Delete: a few more fine-tuning steps on D_r, then Gaussian noise
/// on every unfrozen parameter.
pub fn dtd(
    f: &MultimodalModel,
    bundle: &DatasetBundle,
    config: &BaselineConfig,
) -> Result<MultimodalModel> {
    config.validate()?;
    let mut model = if config.steps > 0 {
        let retain = bundle.retain_ids();
        if retain.is_empty() {
            return Err(Error::InvalidInput("retain set is empty".into()));
        }
        let tc = TrainConfig {
            steps: config.steps,
            batch: config.batch,
            lr: config.lr,
            val_every: usize::MAX,
            seed: config.seed,
        };
        train_on_pool(bundle, &retain, &f.config, &tc, Some(f), config.fusion_only)?
    } else {
        f.clone()
    };
    if config.noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0xd7d));
        let n_enc = model.encoder_param_count();
        let mut flat = model.flat_params();
        for (i, v) in flat.iter_mut().enumerate() {
            // noise draws are consumed for every coordinate so the stream does
            // not depend on fusion_only; frozen coordinates discard theirs
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
            if config.fusion_only && i < n_enc {
                continue;
            }
            *v += config.noise_std * z;
        }
        model.set_flat_params(&flat);
    }
    Ok(model)
}

/// Shared entry point used by the harness.
pub fn run_baseline(
    f: &MultimodalModel,
    bundle: &DatasetBundle,
    train_config: &TrainConfig,
    config: &BaselineConfig,
) -> Result<MultimodalModel> {
    match config.method {
        Method::Retrain => retrain_with_config(bundle, &f.config, train_config, config.seed),
        Method::Finetune => finetune(f, bundle, config),
        Method::Neggrad => neggrad(f, bundle, config),
        Method::Dtd => dtd(f, bundle, config),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{train_original, ModelConfig};
    use crate::synthdata::{generate_dataset, sample_deletion_set, SynthConfig};

    fn small_setup() -> (DatasetBundle, MultimodalModel, TrainConfig) {
        let mut bundle = generate_dataset(&SynthConfig {
            n_concepts: 50,
            pairs_per_concept: 3,
            latent_dim: 6,
            dim_a: 12,
            dim_b: 10,
            noise_std: 0.05,
            active_latents: 0,
            split_fractions: (0.7, 0.15, 0.15),
            seed: 2,
        })
        .unwrap();
        bundle.deletion_mask = sample_deletion_set(&bundle, 10, 1).unwrap();
        let tc = TrainConfig { steps: 300, batch: 32, lr: 0.05, val_every: 50, seed: 4 };
        let mc = ModelConfig {
            dim_a: 12,
            dim_b: 10,
            emb_dim: 16,
            hidden_dims: vec![32],
            fusion_hidden: 32,
            fusion_dim: 16,
            ..ModelConfig::default()
        };
        let f = train_original(&bundle, &mc, &tc).unwrap();
        (bundle, f, tc)
    }

    #[test]
    fn retrain_rejects_empty_retain() {
        let (mut bundle, f, tc) = small_setup();
        bundle.deletion_mask = bundle.pair_ids_in(crate::synthdata::Split::Train).into_iter().collect();
        assert!(retrain_with_config(&bundle, &f.config, &tc, 0).is_err());
    }

    #[test]
    fn retrain_deterministic() {
        let (bundle, f, tc) = small_setup();
        let tc = TrainConfig { steps: 50, ..tc };
        let m1 = retrain_with_config(&bundle, &f.config, &tc, 9).unwrap();
        let m2 = retrain_with_config(&bundle, &f.config, &tc, 9).unwrap();
        assert_eq!(m1, m2);
    }

    #[test]
    fn retrain_fusion_only_rejected() {
        let cfg = BaselineConfig {
            method: Method::Retrain,
            fusion_only: true,
            ..BaselineConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn finetune_zero_steps_is_noop() {
        let (bundle, f, _) = small_setup();
        let cfg = BaselineConfig { steps: 0, ..BaselineConfig::default() };
        let m = finetune(&f, &bundle, &cfg).unwrap();
        assert_eq!(m, f);
    }

    #[test]
    fn finetune_fusion_only_freezes_encoders() {
        let (bundle, f, _) = small_setup();
        let cfg = BaselineConfig {
            steps: 20,
            fusion_only: true,
            ..BaselineConfig::default()
        };
        let m = finetune(&f, &bundle, &cfg).unwrap();
        assert_eq!(m.params.enc_a, f.params.enc_a);
        assert_eq!(m.params.enc_b, f.params.enc_b);
        assert_ne!(m, f);
    }

    #[test]
    fn neggrad_zero_steps_is_noop_and_ascends_forget_loss() {
        let (bundle, f, _) = small_setup();
        let cfg = BaselineConfig {
            method: Method::Neggrad,
            steps: 0,
            ..BaselineConfig::default()
        };
        assert_eq!(neggrad(&f, &bundle, &cfg).unwrap(), f);

        let cfg = BaselineConfig {
            method: Method::Neggrad,
            steps: 30,
            lr: 0.02,
            ..BaselineConfig::default()
        };
        let m = neggrad(&f, &bundle, &cfg).unwrap();
        // BCE on D_f strictly increases
        let examples: Vec<(Vec<f64>, Vec<f64>)> = bundle
            .forget_ids()
            .iter()
            .map(|&pid| {
                let p = bundle.pair(pid);
                (
                    bundle.sample_a(p.a_id).features.clone(),
                    bundle.sample_b(p.b_id).features.clone(),
                )
            })
            .collect();
        let refs: Vec<(&[f64], &[f64], f64)> =
            examples.iter().map(|(a, b)| (a.as_slice(), b.as_slice(), 1.0)).collect();
        let (loss_before, _) = bce_batch_grad(&f, &refs).unwrap();
        let (loss_after, _) = bce_batch_grad(&m, &refs).unwrap();
        assert!(loss_after > loss_before, "{loss_after} <= {loss_before}");
    }

    #[test]
    fn scalar_ascent_illustration() {
        // loss theta^2 at theta=1, lr=0.1: ascent gives theta + lr*2theta = 1.2
        let theta = 1.0_f64;
        let grad = 2.0 * theta;
        assert!((theta + 0.1 * grad - 1.2).abs() < 1e-15);
    }

    #[test]
    fn dtd_zero_noise_zero_steps_is_noop() {
        let (bundle, f, _) = small_setup();
        let cfg = BaselineConfig {
            method: Method::Dtd,
            steps: 0,
            noise_std: 0.0,
            ..BaselineConfig::default()
        };
        assert_eq!(dtd(&f, &bundle, &cfg).unwrap(), f);
    }

    #[test]
    fn dtd_seeded_noise_deterministic() {
        let (bundle, f, _) = small_setup();
        let cfg = BaselineConfig {
            method: Method::Dtd,
            steps: 5,
            noise_std: 0.1,
            ..BaselineConfig::default()
        };
        let m1 = dtd(&f, &bundle, &cfg).unwrap();
        let m2 = dtd(&f, &bundle, &cfg).unwrap();
        assert_eq!(m1, m2);
        assert_ne!(m1, f);
    }

    #[test]
    fn dtd_fusion_only_freezes_encoders() {
        let (bundle, f, _) = small_setup();
        let cfg = BaselineConfig {
            method: Method::Dtd,
            steps: 5,
            noise_std: 0.3,
            fusion_only: true,
            ..BaselineConfig::default()
        };
        let m = dtd(&f, &bundle, &cfg).unwrap();
        assert_eq!(m.params.enc_a, f.params.enc_a);
        assert_eq!(m.params.enc_b, f.params.enc_b);
    }

    #[test]
    fn baselines_preserve_architecture() {
        let (bundle, f, tc) = small_setup();
        for method in [Method::Retrain, Method::Finetune, Method::Neggrad, Method::Dtd] {
            let cfg = BaselineConfig { method, steps: 5, ..BaselineConfig::default() };
            let m = run_baseline(&f, &bundle, &TrainConfig { steps: 20, ..tc.clone() }, &cfg).unwrap();
            assert_eq!(m.config, f.config);
            assert_eq!(m.n_params(), f.n_params());
        }
    }
}
