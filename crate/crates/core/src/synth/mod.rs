//! A synthetic fashion world with a closed-form popularity oracle.
//!
//! Attribute trends follow
//! `clamp01(base + amp * sin(2π (w + phase) / 52) + drift * w + ε_w)` with
//! AR(1) noise `ε_w = φ ε_{w-1} + σ η_w`. A garment's popularity in week `w`
//! for stratum `s` is
//!
//! ```text
//! clamp01( mean_{a ∈ attrs} trend(a, w)
//!        + mean_{a ∈ attrs} affinity(s, a)
//!        + β g(F_v)
//!        + ν )
//! g(x) = w_g · x + ½ (u_g · x)²
//! ```
//!
//! with `ν ~ N(0, popularity_noise²)` drawn from a seed derived from
//! (world seed, garment, week, stratum), so the oracle is a pure function.

mod hier;

pub use hier::{hierarchical_samples, HierarchicalSample, HierarchicalSpec};

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taxonomy::{AttributeSpec, CategorySpec, LabelSet, Taxonomy, TaxonomySpec};
use crate::trend::{Demographic, PopularityRecord, Week};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid world spec: {0}")]
    Spec(String),
    #[error("unknown stratum {0}")]
    UnknownStratum(usize),
    #[error("week {week} outside 0..{weeks}")]
    WeekOutOfRange { week: usize, weeks: usize },
}

pub type Result<T> = std::result::Result<T, SynthError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendParams {
    pub base: f64,
    pub amplitude: f64,
    /// Weeks.
    pub phase: f64,
    /// Per week.
    pub drift: f64,
    /// AR(1) innovation standard deviation.
    pub sigma: f64,
}

impl TrendParams {
    pub fn flat(base: f64) -> Self {
        Self {
            base,
            amplitude: 0.0,
            phase: 0.0,
            drift: 0.0,
            sigma: 0.0,
        }
    }

    /// The noise-free part of the trend at week `w`.
    pub fn deterministic(&self, w: f64) -> f64 {
        self.base
            + self.amplitude * (2.0 * std::f64::consts::PI * (w + self.phase) / 52.0).sin()
            + self.drift * w
    }
}

/// Everything needed to regenerate a world. Serialized next to generated data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub seed: u64,
    pub num_types: usize,
    pub num_categories: usize,
    pub num_attributes: usize,
    /// Default garment count for generators that do not pass one.
    pub garments: usize,
    pub weeks: usize,
    /// Monday of week 0.
    pub start: NaiveDate,
    /// One per attribute.
    pub trends: Vec<TrendParams>,
    /// AR(1) coefficient φ, |φ| < 1.
    pub ar_coefficient: f64,
    pub feature_dim: usize,
    /// Rows: categories then attributes; columns: feature dims.
    pub mixing: Vec<Vec<f64>>,
    pub feature_noise: f64,
    /// Stratum × attribute additive effect.
    pub affinity: Vec<Vec<f64>>,
    pub beta: f64,
    pub g_linear: Vec<f64>,
    pub g_quadratic: Vec<f64>,
    pub popularity_noise: f64,
    /// Emit one record per demographic stratum instead of one aggregate.
    pub demographics: bool,
    pub min_attributes: usize,
    pub max_attributes: usize,
    /// Weeks observed for multi-record garments.
    pub lifetime: usize,
    /// Share of garments observed in a single week only.
    pub singleton_fraction: f64,
    /// Single-record garments are not created before this week.
    pub warmup: usize,
}

impl WorldSpec {
    /// Draw every parameter from `seed`: 4 types, 8 categories, 24
    /// attributes, 104 weeks and 32 feature dims.
    pub fn new(seed: u64) -> Self {
        let (t, c, a, d) = (4, 8, 24, 32);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_a11);
        let unit = Normal::new(0.0, 1.0).expect("valid normal");
        let trends = (0..a)
            .map(|_| TrendParams {
                base: rng.gen_range(0.3..0.6),
                amplitude: rng.gen_range(0.05..0.15),
                phase: rng.gen_range(0.0..52.0),
                drift: rng.gen_range(-0.002..0.002),
                sigma: 0.03,
            })
            .collect();
        let scale = 1.0 / (d as f64).sqrt();
        let gauss = |rows: usize, cols: usize, s: f64, rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
            (0..rows)
                .map(|_| (0..cols).map(|_| s * unit.sample(rng)).collect())
                .collect()
        };
        let mixing = gauss(c + a, d, scale, &mut rng);
        let affinity = gauss(Demographic::COUNT, a, 0.05, &mut rng);
        let g = gauss(2, d, scale, &mut rng);
        Self {
            seed,
            num_types: t,
            num_categories: c,
            num_attributes: a,
            garments: 2000,
            weeks: 104,
            start: NaiveDate::from_ymd_opt(2020, 1, 6).expect("valid date"),
            trends,
            ar_coefficient: 0.9,
            feature_dim: d,
            mixing,
            feature_noise: 0.05,
            affinity,
            beta: 0.25,
            g_linear: g[0].clone(),
            g_quadratic: g[1].clone(),
            popularity_noise: 0.02,
            demographics: false,
            min_attributes: 1,
            max_attributes: 3,
            lifetime: 8,
            singleton_fraction: 0.3,
            warmup: 12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(SynthError::Spec(m));
        let (c, a, d) = (self.num_categories, self.num_attributes, self.feature_dim);
        if self.num_types == 0 || c < self.num_types || a == 0 || self.weeks == 0 {
            return err(format!(
                "need ≥1 type, ≥1 category per type, ≥1 attribute and ≥1 week (got {} / {c} / {a} / {})",
                self.num_types, self.weeks
            ));
        }
        if self.min_attributes == 0 || self.min_attributes > self.max_attributes {
            return err("attribute count range must be 1 ≤ min ≤ max".into());
        }
        let legal_per_type = (2 * a).div_ceil(self.num_types).min(a);
        if self.max_attributes > legal_per_type {
            return err(format!(
                "max_attributes {} exceeds the {legal_per_type} attributes legal per type",
                self.max_attributes
            ));
        }
        if self.trends.len() != a {
            return err(format!("{} trend params for {a} attributes", self.trends.len()));
        }
        if self.trends.iter().any(|t| !(t.sigma >= 0.0)) {
            return err("trend sigma must be ≥ 0".into());
        }
        if !(self.feature_noise >= 0.0) || !(self.popularity_noise >= 0.0) {
            return err("noise levels must be ≥ 0".into());
        }
        if !(self.ar_coefficient.abs() < 1.0) {
            return err("AR coefficient must satisfy |φ| < 1".into());
        }
        if self.mixing.len() != c + a || self.mixing.iter().any(|r| r.len() != d) {
            return err(format!("mixing must be {} × {d}", c + a));
        }
        if self.affinity.len() != Demographic::COUNT || self.affinity.iter().any(|r| r.len() != a) {
            return err(format!("affinity must be {} × {a}", Demographic::COUNT));
        }
        if self.g_linear.len() != d || self.g_quadratic.len() != d {
            return err(format!("g vectors must have {d} entries"));
        }
        let m = nalgebra::DMatrix::from_fn(c + a, d, |i, j| self.mixing[i][j]);
        if m.rank(1e-9) < c + a {
            return err("mixing matrix must have full row rank".into());
        }
        if self.lifetime == 0 || self.lifetime > self.weeks || self.warmup >= self.weeks {
            return err("lifetime and warmup must fit in the period".into());
        }
        if !(0.0..=1.0).contains(&self.singleton_fraction) {
            return err("singleton_fraction must be in [0, 1]".into());
        }
        Ok(())
    }

    /// Names are zero-padded so the taxonomy's sorted order is the
    /// generation order.
    fn taxonomy_spec(&self) -> TaxonomySpec {
        let name = |prefix: &str, i: usize, n: usize| {
            format!("{prefix}{i:0w$}", w = n.saturating_sub(1).to_string().len())
        };
        let types: Vec<String> = (0..self.num_types).map(|i| name("type", i, self.num_types)).collect();
        TaxonomySpec {
            categories: (0..self.num_categories)
                .map(|i| CategorySpec {
                    name: name("cat", i, self.num_categories),
                    parent: types[i % self.num_types].clone(),
                })
                .collect(),
            // Each attribute is legal for two consecutive types.
            attributes: (0..self.num_attributes)
                .map(|j| AttributeSpec {
                    name: name("attr", j, self.num_attributes),
                    legal_types: (0..2.min(self.num_types))
                        .map(|o| types[(j + o) % self.num_types].clone())
                        .collect(),
                })
                .collect(),
            garment_types: types,
        }
    }
}

/// A generated world: taxonomy plus realised attribute trends.
#[derive(Debug, Clone)]
pub struct World {
    spec: WorldSpec,
    taxonomy: Taxonomy,
    /// `[attribute][week]`
    trends: Vec<Vec<f64>>,
}

pub fn generate_world(spec: &WorldSpec) -> Result<World> {
    spec.validate()?;
    let taxonomy = Taxonomy::new(spec.taxonomy_spec())
        .map_err(|e| SynthError::Spec(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let phi = spec.ar_coefficient;
    let trends = spec
        .trends
        .iter()
        .map(|p| {
            let mut eps = p.sigma / (1.0 - phi * phi).sqrt() * unit.sample(&mut rng);
            (0..spec.weeks)
                .map(|w| {
                    if w > 0 {
                        eps = phi * eps + p.sigma * unit.sample(&mut rng);
                    }
                    (p.deterministic(w as f64) + eps).clamp(0.0, 1.0)
                })
                .collect()
        })
        .collect();
    Ok(World {
        spec: spec.clone(),
        taxonomy,
        trends,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticGarment {
    pub item_id: String,
    pub index: usize,
    pub labels: LabelSet,
    pub features: Vec<f64>,
    /// Week index (0-based) of the first observation.
    pub created: usize,
    /// Number of consecutive observed weeks.
    pub observed_weeks: usize,
}

fn noise_seed(seed: u64, garment: usize, week: usize, stratum: Option<usize>) -> u64 {
    let s = stratum.map_or(0, |s| s as u64 + 1);
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (garment as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9)
        ^ (week as u64).wrapping_mul(0x94D0_49BB_1331_11EB)
        ^ s.wrapping_mul(0xD6E8_FEB8_6659_FD93)
}

impl World {
    pub fn spec(&self) -> &WorldSpec {
        &self.spec
    }

    pub fn taxonomy(&self) -> &Taxonomy {
        &self.taxonomy
    }

    pub fn trend(&self, attribute: usize, week: usize) -> f64 {
        self.trends[attribute][week]
    }

    pub fn trend_series(&self, attribute: usize) -> &[f64] {
        &self.trends[attribute]
    }

    pub fn week(&self, index: usize) -> Week {
        Week::from_date(self.spec.start).offset(index as i64)
    }

    pub fn date(&self, week: usize, day: u64) -> NaiveDate {
        self.spec.start + Days::new(7 * week as u64 + day)
    }

    /// `g(x) = w·x + ½(u·x)²`
    pub fn g(&self, x: &[f64]) -> f64 {
        let lin: f64 = self.spec.g_linear.iter().zip(x).map(|(a, b)| a * b).sum();
        let q: f64 = self.spec.g_quadratic.iter().zip(x).map(|(a, b)| a * b).sum();
        lin + 0.5 * q * q
    }

    /// `∇g(x) = w + (u·x) u`
    pub fn g_gradient(&self, x: &[f64]) -> Vec<f64> {
        let q: f64 = self.spec.g_quadratic.iter().zip(x).map(|(a, b)| a * b).sum();
        self.spec
            .g_linear
            .iter()
            .zip(&self.spec.g_quadratic)
            .map(|(w, u)| w + q * u)
            .collect()
    }

    /// Noise-free features of a label set.
    pub fn mean_features(&self, labels: &LabelSet) -> Vec<f64> {
        let c = self.spec.num_categories;
        let mut x = self.spec.mixing[labels.category].clone();
        for &a in &labels.attributes {
            x.iter_mut()
                .zip(&self.spec.mixing[c + a])
                .for_each(|(v, m)| *v += m);
        }
        x
    }

    /// Popularity before noise and clamping.
    pub fn oracle_mean(
        &self,
        labels: &LabelSet,
        features: &[f64],
        week: usize,
        stratum: Option<usize>,
    ) -> Result<f64> {
        if week >= self.spec.weeks {
            return Err(SynthError::WeekOutOfRange {
                week,
                weeks: self.spec.weeks,
            });
        }
        if let Some(s) = stratum {
            if s >= Demographic::COUNT {
                return Err(SynthError::UnknownStratum(s));
            }
        }
        let attrs = &labels.attributes;
        let m = attrs.len().max(1) as f64;
        let trend: f64 = attrs.iter().map(|&a| self.trends[a][week]).sum::<f64>() / m;
        let affinity = stratum.map_or(0.0, |s| {
            attrs.iter().map(|&a| self.spec.affinity[s][a]).sum::<f64>() / m
        });
        Ok(trend + affinity + self.spec.beta * self.g(features))
    }

    pub fn oracle_popularity(
        &self,
        garment: &SyntheticGarment,
        week: usize,
        stratum: Option<usize>,
    ) -> Result<f64> {
        let mean = self.oracle_mean(&garment.labels, &garment.features, week, stratum)?;
        let noise = if self.spec.popularity_noise > 0.0 {
            let mut rng =
                ChaCha8Rng::seed_from_u64(noise_seed(self.spec.seed, garment.index, week, stratum));
            Normal::new(0.0, self.spec.popularity_noise)
                .expect("checked ≥ 0")
                .sample(&mut rng)
        } else {
            0.0
        };
        Ok((mean + noise).clamp(0.0, 1.0))
    }

    fn sample_garment(&self, index: usize, rng: &mut ChaCha8Rng) -> SyntheticGarment {
        let s = &self.spec;
        let t = rng.gen_range(0..s.num_types);
        let cats = self.taxonomy.categories_of_type(t);
        let category = cats[rng.gen_range(0..cats.len())];
        let legal = self.taxonomy.legal_attributes(t);
        let count = rng.gen_range(s.min_attributes..=s.max_attributes);
        let attrs: Vec<usize> = rand::seq::index::sample(rng, legal.len(), count)
            .into_iter()
            .map(|i| legal[i])
            .collect();
        let labels = LabelSet::new(t, category, attrs);
        let noise = Normal::new(0.0, s.feature_noise.max(0.0)).expect("checked ≥ 0");
        let features = self
            .mean_features(&labels)
            .into_iter()
            .map(|v| if s.feature_noise > 0.0 { v + noise.sample(rng) } else { v })
            .collect();
        let singleton = rng.gen_bool(s.singleton_fraction);
        let (created, observed_weeks) = if singleton {
            (rng.gen_range(s.warmup..s.weeks), 1)
        } else {
            (rng.gen_range(0..=s.weeks - s.lifetime), s.lifetime)
        };
        SyntheticGarment {
            item_id: format!("g{index:05}"),
            index,
            labels,
            features,
            created,
            observed_weeks,
        }
    }

    /// Garments and their record stream. Records are ordered by garment,
    /// then week, then stratum; each carries the garment's features.
    pub fn sample_garments(
        &self,
        count: usize,
        seed: u64,
    ) -> (Vec<SyntheticGarment>, Vec<PopularityRecord>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let garments: Vec<_> = (0..count).map(|i| self.sample_garment(i, &mut rng)).collect();
        let records = self.records_for(&garments);
        (garments, records)
    }

    /// Oracle records for every observed week of the given garments.
    pub fn records_for(&self, garments: &[SyntheticGarment]) -> Vec<PopularityRecord> {
        let strata: Vec<Option<usize>> = if self.spec.demographics {
            (0..Demographic::COUNT).map(Some).collect()
        } else {
            vec![None]
        };
        let mut records = Vec::new();
        for g in garments {
            let end = (g.created + g.observed_weeks).min(self.spec.weeks);
            for week in g.created..end {
                let date = self.date(week, (g.index % 7) as u64);
                for &s in &strata {
                    let popularity = self
                        .oracle_popularity(g, week, s)
                        .expect("week and stratum in range by construction");
                    records.push(PopularityRecord {
                        item_id: g.item_id.clone(),
                        date,
                        popularity,
                        labels: g.labels.clone(),
                        demographic: s.and_then(Demographic::from_index),
                        features: Some(g.features.clone()),
                    });
                }
            }
        }
        records
    }

    /// Period covered by the world, for building a store.
    pub fn period(&self) -> (Week, Week) {
        (self.week(0), self.week(self.spec.weeks - 1))
    }
}
