//! Deterministic synthetic two-modality datasets with a known latent
//! association: each concept owns a latent vector, and both modalities are
//! noisy linear images of it. "Related" therefore has ground truth.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BUNDLE_SCHEMA: &str = "synthdata/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Modality {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalitySample {
    pub sample_id: usize,
    pub modality: Modality,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub pair_id: usize,
    pub a_id: usize,
    pub b_id: usize,
    pub related: bool,
    /// Hidden generative latent, diagnostics only.
    pub concept_id: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_concepts: usize,
    pub pairs_per_concept: usize,
    pub latent_dim: usize,
    pub dim_a: usize,
    pub dim_b: usize,
    pub noise_std: f64,
    /// Number of nonzero coordinates in each concept latent; 0 means dense.
    /// Sparse latents give concepts near-disjoint supports, which keeps
    /// per-concept edits from bleeding into unrelated concepts.
    #[serde(default)]
    pub active_latents: usize,
    /// (train, val, test), each in (0,1), summing to 1.
    pub split_fractions: (f64, f64, f64),
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        // 2800 concepts x 1 pair = 2800 pairs: 2000 train / 400 val / 400 test.
        // One pair per concept keeps deleted pairs from having near-duplicate
        // siblings in the retain set, so pair-level deletion is well posed.
        SynthConfig {
            n_concepts: 2800,
            pairs_per_concept: 1,
            latent_dim: 40,
            dim_a: 56,
            dim_b: 48,
            noise_std: 0.05,
            active_latents: 0,
            split_fractions: (5.0 / 7.0, 1.0 / 7.0, 1.0 / 7.0),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_concepts == 0 || self.pairs_per_concept == 0 {
            return Err(Error::Config("n_concepts and pairs_per_concept must be >= 1".into()));
        }
        if self.latent_dim == 0 || self.dim_a == 0 || self.dim_b == 0 {
            return Err(Error::Config("all dimensions must be >= 1".into()));
        }
        if self.noise_std < 0.0 {
            return Err(Error::Config("noise_std must be >= 0".into()));
        }
        if self.active_latents > self.latent_dim {
            return Err(Error::Config("active_latents must be <= latent_dim".into()));
        }
        let (tr, va, te) = self.split_fractions;
        for f in [tr, va, te] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::Config("split fractions must lie in (0,1)".into()));
            }
        }
        if ((tr + va + te) - 1.0).abs() > 1e-9 {
            return Err(Error::Config("split fractions must sum to 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetBundle {
    pub schema: String,
    pub config: SynthConfig,
    pub samples_a: Vec<ModalitySample>,
    pub samples_b: Vec<ModalitySample>,
    pub pairs: Vec<PairRecord>,
    pub split: BTreeMap<usize, Split>,
    pub deletion_mask: BTreeSet<usize>,
}

impl DatasetBundle {
    pub fn pair_ids_in(&self, split: Split) -> Vec<usize> {
        self.pairs
            .iter()
            .filter(|p| self.split.get(&p.pair_id) == Some(&split))
            .map(|p| p.pair_id)
            .collect()
    }

    pub fn pair(&self, pair_id: usize) -> &PairRecord {
        &self.pairs[pair_id]
    }

    pub fn sample_a(&self, id: usize) -> &ModalitySample {
        &self.samples_a[id]
    }

    pub fn sample_b(&self, id: usize) -> &ModalitySample {
        &self.samples_b[id]
    }

    /// Train pair ids in the forget set D_f.
    pub fn forget_ids(&self) -> Vec<usize> {
        self.deletion_mask.iter().copied().collect()
    }

    /// Train pair ids in the retain set D_r = train \ D_f.
    pub fn retain_ids(&self) -> Vec<usize> {
        self.pair_ids_in(Split::Train)
            .into_iter()
            .filter(|id| !self.deletion_mask.contains(id))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let bundle: DatasetBundle = serde_json::from_str(s)?;
        if bundle.schema != BUNDLE_SCHEMA {
            return Err(Error::SchemaVersion {
                expected: BUNDLE_SCHEMA.into(),
                found: bundle.schema.clone(),
            });
        }
        bundle.check_invariants()?;
        Ok(bundle)
    }

    pub fn check_invariants(&self) -> Result<()> {
        for p in &self.pairs {
            if p.a_id >= self.samples_a.len() || p.b_id >= self.samples_b.len() {
                return Err(Error::InvalidInput(format!(
                    "pair {} references missing samples",
                    p.pair_id
                )));
            }
            if !self.split.contains_key(&p.pair_id) {
                return Err(Error::InvalidInput(format!("pair {} has no split", p.pair_id)));
            }
        }
        for s in self.samples_a.iter().chain(&self.samples_b) {
            if s.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "sample {} has non-finite features",
                    s.sample_id
                )));
            }
        }
        for id in &self.deletion_mask {
            if self.split.get(id) != Some(&Split::Train) {
                return Err(Error::InvalidInput(format!(
                    "deletion mask entry {id} is not a train pair"
                )));
            }
        }
        Ok(())
    }
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller; two uniforms per draw keeps the stream simple to reason about.
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn gaussian_vec<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| gaussian(rng)).collect()
}

pub fn generate_dataset(config: &SynthConfig) -> Result<DatasetBundle> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // Fixed random projections M_A, M_B, scaled so feature variance stays O(1).
    let scale_a = 1.0 / (config.latent_dim as f64).sqrt();
    let scale_b = scale_a;
    let proj_a: Vec<f64> = gaussian_vec(&mut rng, config.dim_a * config.latent_dim)
        .into_iter()
        .map(|v| v * scale_a)
        .collect();
    let proj_b: Vec<f64> = gaussian_vec(&mut rng, config.dim_b * config.latent_dim)
        .into_iter()
        .map(|v| v * scale_b)
        .collect();

    let project = |proj: &[f64], out_dim: usize, z: &[f64]| -> Vec<f64> {
        (0..out_dim)
            .map(|r| {
                proj[r * config.latent_dim..(r + 1) * config.latent_dim]
                    .iter()
                    .zip(z)
                    .map(|(m, zi)| m * zi)
                    .sum()
            })
            .collect()
    };

    let mut samples_a = Vec::new();
    let mut samples_b = Vec::new();
    let mut pairs = Vec::new();
    for concept in 0..config.n_concepts {
        let mut z = gaussian_vec(&mut rng, config.latent_dim);
        if config.active_latents > 0 && config.active_latents < config.latent_dim {
            // Keep a random subset of coordinates, rescaled so E||z||^2 is
            // unchanged from the dense draw.
            let mut coords: Vec<usize> = (0..config.latent_dim).collect();
            coords.shuffle(&mut rng);
            let keep: BTreeSet<usize> =
                coords.into_iter().take(config.active_latents).collect();
            let scale = (config.latent_dim as f64 / config.active_latents as f64).sqrt();
            for (i, v) in z.iter_mut().enumerate() {
                *v = if keep.contains(&i) { *v * scale } else { 0.0 };
            }
        }
        for _ in 0..config.pairs_per_concept {
            let mut fa = project(&proj_a, config.dim_a, &z);
            let mut fb = project(&proj_b, config.dim_b, &z);
            for v in &mut fa {
                *v += config.noise_std * gaussian(&mut rng);
            }
            for v in &mut fb {
                *v += config.noise_std * gaussian(&mut rng);
            }
            let a_id = samples_a.len();
            let b_id = samples_b.len();
            samples_a.push(ModalitySample { sample_id: a_id, modality: Modality::A, features: fa });
            samples_b.push(ModalitySample { sample_id: b_id, modality: Modality::B, features: fb });
            pairs.push(PairRecord {
                pair_id: pairs.len(),
                a_id,
                b_id,
                related: true,
                concept_id: concept,
            });
        }
    }

    // Split assignment: shuffle pair ids, then cut by rounded fractions.
    let n = pairs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_val = (config.split_fractions.1 * n as f64).round() as usize;
    let n_test = (config.split_fractions.2 * n as f64).round() as usize;
    let n_train = n - n_val - n_test;
    if n_train == 0 {
        return Err(Error::Config("train split is empty".into()));
    }
    let mut split = BTreeMap::new();
    for (i, &pid) in order.iter().enumerate() {
        let s = if i < n_train {
            Split::Train
        } else if i < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
        split.insert(pid, s);
    }

    Ok(DatasetBundle {
        schema: BUNDLE_SCHEMA.into(),
        config: config.clone(),
        samples_a,
        samples_b,
        pairs,
        split,
        deletion_mask: BTreeSet::new(),
    })
}

/// Draw a uniform deletion set D_f from the train split, without replacement.
pub fn sample_deletion_set(
    bundle: &DatasetBundle,
    size: usize,
    seed: u64,
) -> Result<BTreeSet<usize>> {
    let mut train = bundle.pair_ids_in(Split::Train);
    if size == 0 || size >= train.len() {
        return Err(Error::InvalidSize(format!(
            "deletion size {size} must satisfy 0 < size < |train| = {}",
            train.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    train.sort_unstable();
    train.shuffle(&mut rng);
    Ok(train.into_iter().take(size).collect())
}

/// Cross-combinations (a of pair p, b of pair q), p != q, both from D_r.
/// Combinations that coincide with a true related pair are rejected.
/// Sampled with replacement across draws.
pub fn sample_unrelated_pairs(
    bundle: &DatasetBundle,
    n: usize,
    seed: u64,
) -> Result<Vec<(usize, usize)>> {
    let retain = bundle.retain_ids();
    sample_unrelated_from(bundle, &retain, n, seed)
}

pub fn sample_unrelated_from(
    bundle: &DatasetBundle,
    pool: &[usize],
    n: usize,
    seed: u64,
) -> Result<Vec<(usize, usize)>> {
    if pool.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need >= 2 pairs to build unrelated combinations, have {}",
            pool.len()
        )));
    }
    let related: BTreeSet<(usize, usize)> = bundle
        .pairs
        .iter()
        .filter(|p| p.related)
        .map(|p| (p.a_id, p.b_id))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let p = pool[rng.gen_range(0..pool.len())];
        let q = pool[rng.gen_range(0..pool.len())];
        if p == q {
            continue;
        }
        let combo = (bundle.pair(p).a_id, bundle.pair(q).b_id);
        if related.contains(&combo) {
            continue;
        }
        out.push(combo);
    }
    Ok(out)
}
