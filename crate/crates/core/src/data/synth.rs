//! Synthetic stand-in for a private clinical corpus.
//!
//! Generation per example:
//!
//! 1. `label ~ Bernoulli(class_prior)`
//! 2. dysphonia grade drawn from the label's grade table (one-hot by
//!    construction), every other concept `~ Bernoulli(p[label])`
//! 3. `embedding = A · [concepts ⊕ latent] + noise_scale · N(0, I)` with a
//!    fixed seeded projection `A` and `latent ~ N(0, I)`
//!
//! A grade table that puts all euphonic mass on "absent" and none of the
//! pathological mass there makes the label a deterministic function of the
//! concepts (`label = 1 - dysphonia_absent`); `configs/synth_separable.json`
//! is that preset.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Dataset, LabeledExample};
use crate::concepts::{
    ConceptVector, DYSPHONIA_GROUP, N_PREDICTED, N_TASK_INPUT, PREDICTED, PROVIDED,
};
use crate::{Error, Result};

const DEFAULT_CONFIG: &str = include_str!("../../configs/synth_default.json");
const SEPARABLE_CONFIG: &str = include_str!("../../configs/synth_separable.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    /// Entries `N(0, 1 / (14 + latent_dim))`.
    Gaussian,
    /// Identity in the leading block, zero elsewhere.
    IdentityPadded,
}

/// Probabilities of (absent, light, moderate, severe) per label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradeTable {
    pub euphonic: [f64; 4],
    pub pathological: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub version: u32,
    pub n_examples: usize,
    /// Probability of the pathological class.
    pub class_prior: f64,
    pub embedding_dim: usize,
    pub latent_dim: usize,
    pub noise_scale: f64,
    pub seed: u64,
    pub projection: Projection,
    pub dysphonia: GradeTable,
    /// Non-dysphonia predictable concepts: `[P(1 | euphonic), P(1 | pathological)]`.
    pub features: BTreeMap<String, [f64; 2]>,
    /// Patient-provided concepts, same layout as `features`.
    pub patient: BTreeMap<String, [f64; 2]>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_CONFIG).expect("bundled default config parses")
    }
}

impl SynthConfig {
    /// Label is exactly `1 - dysphonia_absent`.
    pub fn separable() -> Self {
        serde_json::from_str(SEPARABLE_CONFIG).expect("bundled separable config parses")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SynthConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} = {p} is not a probability")))
            }
        };
        prob("class_prior", self.class_prior)?;
        if self.n_examples == 0 {
            return Err(Error::Config("n_examples must be > 0".into()));
        }
        if self.embedding_dim < N_PREDICTED {
            return Err(Error::Config(format!(
                "embedding_dim {} < {N_PREDICTED}",
                self.embedding_dim
            )));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::Config("noise_scale must be finite and >= 0".into()));
        }
        for (name, row) in [
            ("dysphonia.euphonic", &self.dysphonia.euphonic),
            ("dysphonia.pathological", &self.dysphonia.pathological),
        ] {
            for &p in row {
                prob(name, p)?;
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("{name} sums to {sum}, not 1")));
            }
        }
        check_table("features", &self.features, &PREDICTED[DYSPHONIA_GROUP.end..])?;
        check_table("patient", &self.patient, &PROVIDED)?;
        for (k, v) in self.features.iter().chain(&self.patient) {
            prob(k, v[0])?;
            prob(k, v[1])?;
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

fn check_table(field: &str, table: &BTreeMap<String, [f64; 2]>, names: &[&str]) -> Result<()> {
    for name in names {
        if !table.contains_key(*name) {
            return Err(Error::Config(format!("{field}.{name} missing")));
        }
    }
    if let Some(extra) = table.keys().find(|k| !names.contains(&k.as_str())) {
        return Err(Error::Config(format!("{field}.{extra} is not a known concept")));
    }
    Ok(())
}

fn projection_matrix(cfg: &SynthConfig) -> Vec<Vec<f64>> {
    let width = N_TASK_INPUT + cfg.latent_dim;
    match cfg.projection {
        Projection::IdentityPadded => (0..cfg.embedding_dim)
            .map(|r| (0..width).map(|c| if r == c { 1.0 } else { 0.0 }).collect())
            .collect(),
        Projection::Gaussian => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(1);
            let scale = 1.0 / (width as f64).sqrt();
            (0..cfg.embedding_dim)
                .map(|_| {
                    (0..width)
                        .map(|_| scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                        .collect::<Vec<f64>>()
                })
                .collect()
        }
    }
}

fn sample_grade<R: Rng>(table: &[f64; 4], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in table.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding: fall back to the last grade with mass
    table.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Deterministic given `config.seed`.
pub fn synth_generate(config: &SynthConfig) -> Result<Dataset> {
    config.validate()?;
    let a = projection_matrix(config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let feature_names = &PREDICTED[DYSPHONIA_GROUP.end..];
    let mut examples = Vec::with_capacity(config.n_examples);
    for i in 0..config.n_examples {
        let label = u8::from(rng.random_bool(config.class_prior));
        let li = usize::from(label);
        let grades = if label == 1 {
            &config.dysphonia.pathological
        } else {
            &config.dysphonia.euphonic
        };
        let mut concepts = ConceptVector::default();
        concepts.predicted[sample_grade(grades, &mut rng)] = 1.0;
        for (j, name) in feature_names.iter().enumerate() {
            let p = config.features[*name][li];
            concepts.predicted[DYSPHONIA_GROUP.end + j] = f64::from(u8::from(rng.random_bool(p)));
        }
        for (j, name) in PROVIDED.iter().enumerate() {
            let p = config.patient[*name][li];
            concepts.provided[j] = f64::from(u8::from(rng.random_bool(p)));
        }
        let mut source = concepts.task_input().to_vec();
        source.extend((0..config.latent_dim).map(|_| -> f64 { StandardNormal.sample(&mut rng) }));
        let embedding = a
            .iter()
            .map(|row| {
                let signal: f64 = row.iter().zip(&source).map(|(w, s)| w * s).sum();
                let noise: f64 = StandardNormal.sample(&mut rng);
                signal + config.noise_scale * noise
            })
            .collect();
        examples.push(LabeledExample {
            id: format!("syn{i:04}"),
            embedding,
            concepts,
            label,
        });
    }
    Dataset::new(examples, format!("synthetic:sha256={}", config.hash()))
}

/// Copies `dataset` with predicted gold concepts corrupted, imitating
/// annotation noise: each binary feature flips with probability `rate` and
/// the dysphonia grade is redrawn uniformly among the other three grades
/// with probability `rate`. Patient-provided concepts and labels are kept.
pub fn with_concept_noise(dataset: &Dataset, rate: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::Config(format!("noise rate {rate} is not a probability")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = dataset.clone();
    for ex in &mut out.examples {
        let grades = &mut ex.concepts.predicted[DYSPHONIA_GROUP];
        if rng.random_bool(rate) {
            let current = grades.iter().position(|&g| g == 1.0).unwrap_or(0);
            let mut next = rng.random_range(0..3);
            if next >= current {
                next += 1;
            }
            grades.fill(0.0);
            grades[next] = 1.0;
        }
        for v in &mut ex.concepts.predicted[DYSPHONIA_GROUP.end..] {
            if rng.random_bool(rate) {
                *v = 1.0 - *v;
            }
        }
    }
    out.provenance = format!("{}+concept_noise(rate={rate},seed={seed})", dataset.provenance);
    out.validate()?;
    Ok(out)
}
