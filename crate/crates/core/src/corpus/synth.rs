//! Seeded synthetic corpus with planted structure.
//!
//! Leaf elements get a trend-plus-sinusoid signal; some leaf pairs are
//! planted as near-duplicates and some as phase-opposites, and every parent
//! element is the relation-weighted mean of its children plus noise.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusBuilder, CorpusError, ElementKind, AGE_BANDS, GENDERS};
use crate::taxonomy::{build_taxonomy, RelationWeights};

const CITY_NAMES: [&str; 14] = [
    "paris", "london", "new_york", "milan", "tokyo", "seoul", "berlin", "madrid", "sydney",
    "sao_paulo", "moscow", "dubai", "shanghai", "los_angeles",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub cities: usize,
    pub age_bands: usize,
    pub genders: usize,
    /// Caps the number of (city, age, gender) groups; `None` keeps all.
    pub max_groups: Option<usize>,
    pub categories: usize,
    pub attributes_per_category: usize,
    pub values_per_attribute: usize,
    pub length: usize,
    pub grid_period: usize,
    /// Standard deviation of the additive Gaussian noise.
    pub noise: f64,
    pub base_range: (f64, f64),
    /// Standard deviation of the per-element slope (per grid step).
    pub slope_scale: f64,
    /// Sinusoid periods in grid steps; empty means `[grid_period]`.
    pub periods: Vec<f64>,
    pub amplitude_range: (f64, f64),
    /// Standard deviation of per-group level offsets.
    pub group_level_jitter: f64,
    /// Standard deviation of per-group phase shifts (radians).
    pub group_phase_jitter: f64,
    /// Relative per-(group, element) amplitude jitter.
    pub amplitude_jitter: f64,
    pub similar_pairs: usize,
    pub opposite_pairs: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            cities: 14,
            age_bands: AGE_BANDS,
            genders: GENDERS,
            max_groups: Some(74),
            categories: 3,
            attributes_per_category: 2,
            values_per_attribute: 3,
            length: 120,
            grid_period: 24,
            noise: 0.02,
            base_range: (0.2, 0.6),
            slope_scale: 0.0008,
            periods: vec![24.0, 12.0],
            amplitude_range: (0.04, 0.15),
            group_level_jitter: 0.03,
            group_phase_jitter: 0.3,
            amplitude_jitter: 0.15,
            similar_pairs: 2,
            opposite_pairs: 2,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: &str| Err(CorpusError::InvalidConfig(m.to_string()));
        if self.cities == 0 || self.age_bands == 0 || self.genders == 0 {
            return bad("at least one city, age band and gender required");
        }
        if self.age_bands > AGE_BANDS || self.genders > GENDERS {
            return bad("too many age bands or genders");
        }
        if self.max_groups == Some(0) {
            return bad("zero groups requested");
        }
        if self.categories == 0 {
            return bad("zero elements requested");
        }
        if self.length == 0 {
            return bad("series length must be positive");
        }
        if self.grid_period == 0 {
            return bad("grid period must be positive");
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return bad("noise must be a non-negative finite number");
        }
        if self.periods.iter().any(|p| !(*p > 0.0)) {
            return bad("sinusoid periods must be positive");
        }
        Ok(())
    }

    pub fn element_count(&self) -> usize {
        let attrs = self.categories * self.attributes_per_category;
        self.categories + attrs + attrs * self.values_per_attribute
    }

    pub fn group_count(&self) -> usize {
        let all = self.cities * self.age_bands * self.genders;
        self.max_groups.map_or(all, |m| m.min(all))
    }
}

#[derive(Debug, Clone)]
struct Signal {
    base: f64,
    slope: f64,
    /// `(amplitude, phase)` per configured period.
    components: Vec<(f64, f64)>,
}

fn city_name(i: usize) -> String {
    CITY_NAMES
        .get(i)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("city_{i}"))
}

/// Generates a corpus (with attached taxonomy) as a pure function of
/// `(config, seed)`.
pub fn generate_synthetic_corpus(config: &SynthConfig, seed: u64) -> Result<Corpus, CorpusError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let periods = if config.periods.is_empty() {
        vec![config.grid_period as f64]
    } else {
        config.periods.clone()
    };
    let mut builder = CorpusBuilder::new(config.grid_period)?;

    // Elements and taxonomy edges.
    let mut edges = Vec::new();
    for c in 0..config.categories {
        let cat = format!("cat{c}");
        builder.element(&cat, ElementKind::Category)?;
        for a in 0..config.attributes_per_category {
            let attr = format!("{cat}-attr{a}");
            builder.element(&attr, ElementKind::Attribute)?;
            edges.push((cat.clone(), attr.clone()));
            for v in 0..config.values_per_attribute {
                let val = format!("{attr}-val{v}");
                builder.element(&val, ElementKind::AttributeValue)?;
                edges.push((attr.clone(), val));
            }
        }
    }
    let elements = builder.elements().to_vec();
    let taxonomy = build_taxonomy(&edges, &elements)
        .map_err(|e| CorpusError::InvalidConfig(e.to_string()))?;
    let weights = RelationWeights::uniform(&taxonomy);
    let leaves: Vec<usize> = (0..elements.len())
        .filter(|&e| taxonomy.children(e).is_empty())
        .collect();

    // Leaf signals, with planted similar and opposite pairs.
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut signals: Vec<Option<Signal>> = vec![None; elements.len()];
    for &leaf in &leaves {
        let base = rng.random_range(config.base_range.0..=config.base_range.1);
        let slope = config.slope_scale * std_normal.sample(&mut rng);
        let components = (0..periods.len())
            .map(|i| {
                let amp = rng.random_range(config.amplitude_range.0..=config.amplitude_range.1);
                (amp / (i + 1) as f64, rng.random_range(0.0..2.0 * PI))
            })
            .collect();
        signals[leaf] = Some(Signal {
            base,
            slope,
            components,
        });
    }
    let mut shuffled = leaves.clone();
    shuffled.shuffle(&mut rng);
    let mut pairs = shuffled.chunks_exact(2);
    for _ in 0..config.similar_pairs {
        let Some(&[a, b]) = pairs.next() else { break };
        let mut s = signals[a].clone().expect("leaf signal");
        s.base += 0.01 * std_normal.sample(&mut rng);
        for comp in &mut s.components {
            comp.1 += 0.05 * std_normal.sample(&mut rng);
        }
        signals[b] = Some(s);
    }
    for _ in 0..config.opposite_pairs {
        let Some(&[a, b]) = pairs.next() else { break };
        let mut s = signals[a].clone().expect("leaf signal");
        for comp in &mut s.components {
            comp.1 += PI;
        }
        signals[b] = Some(s);
    }

    // Groups.
    let mut groups = Vec::new();
    'outer: for city in 0..config.cities {
        for age in 0..config.age_bands {
            for gender in 0..config.genders {
                if groups.len() == config.group_count() {
                    break 'outer;
                }
                groups.push(builder.group(&city_name(city), age as u8, gender as u8)?);
            }
        }
    }

    // Parents are processed after all of their children: deepest first.
    let mut parent_order: Vec<usize> = (0..elements.len())
        .filter(|&e| !taxonomy.children(e).is_empty())
        .collect();
    parent_order.sort_by_key(|&e| std::cmp::Reverse(taxonomy.depth(e)));

    let noise = |rng: &mut ChaCha8Rng| {
        if config.noise > 0.0 {
            config.noise * std_normal.sample(rng)
        } else {
            0.0
        }
    };

    for &group in &groups {
        let level = config.group_level_jitter * std_normal.sample(&mut rng);
        let phase = config.group_phase_jitter * std_normal.sample(&mut rng);
        let mut values: Vec<Vec<f64>> = vec![Vec::new(); elements.len()];
        for &leaf in &leaves {
            let s = signals[leaf].as_ref().expect("leaf signal");
            let own_level = 0.5 * config.group_level_jitter * std_normal.sample(&mut rng);
            let amp_scale = 1.0 + config.amplitude_jitter * std_normal.sample(&mut rng);
            values[leaf] = (0..config.length)
                .map(|t| {
                    let tf = t as f64;
                    let seasonal: f64 = s
                        .components
                        .iter()
                        .zip(&periods)
                        .map(|(&(amp, ph), &p)| amp * amp_scale * (2.0 * PI * tf / p + ph + phase).sin())
                        .sum();
                    let v = s.base + level + own_level + s.slope * tf + seasonal + noise(&mut rng);
                    v.clamp(0.0, 1.0)
                })
                .collect();
        }
        for &parent in &parent_order {
            let kids = taxonomy.children(parent);
            values[parent] = (0..config.length)
                .map(|t| {
                    let mean: f64 = kids
                        .iter()
                        .map(|&(child, edge)| weights.get(edge) * values[child][t])
                        .sum();
                    (mean + noise(&mut rng)).clamp(0.0, 1.0)
                })
                .collect();
        }
        for (element, vals) in values.into_iter().enumerate() {
            builder.push_series(group, element, 0, vals.into_iter().map(Some).collect())?;
        }
    }
    let mut corpus = builder.build();
    corpus.taxonomy = Some(taxonomy);
    Ok(corpus)
}
