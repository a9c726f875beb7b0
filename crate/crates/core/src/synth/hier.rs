//! Region-structured features for the hierarchical label classifiers.
//!
//! Each garment yields `regions` vectors. Every region carries the category
//! signature; attribute `j` adds its signature to region `j mod regions`
//! only. Single-task models see the mean over regions.
//!
//! Category signatures mix a pattern shared by the i-th category of every
//! garment type with a category-specific one. `category_ambiguity` sets the
//! shared fraction, so a high value makes the garment type necessary to
//! tell categories apart.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Result, SynthError};
use crate::hls::{HlsMode, HlsSample};
use crate::taxonomy::{LabelSet, Taxonomy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchicalSpec {
    pub seed: u64,
    pub regions: usize,
    pub dim: usize,
    /// In [0, 1].
    pub category_ambiguity: f64,
    pub attribute_strength: f64,
    pub noise: f64,
    pub min_attributes: usize,
    pub max_attributes: usize,
}

impl HierarchicalSpec {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            regions: 4,
            dim: 16,
            category_ambiguity: 0.8,
            attribute_strength: 1.0,
            noise: 0.3,
            min_attributes: 1,
            max_attributes: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchicalSample {
    pub regions: Vec<Vec<f64>>,
    pub labels: LabelSet,
}

impl HierarchicalSample {
    pub fn mean_region(&self) -> Vec<f64> {
        let r = self.regions.len() as f64;
        let mut out = vec![0.0; self.regions[0].len()];
        for v in &self.regions {
            out.iter_mut().zip(v).for_each(|(o, x)| *o += x / r);
        }
        out
    }

    pub fn to_hls(&self, mode: HlsMode) -> HlsSample {
        let input = match mode {
            HlsMode::Stl => vec![self.mean_region()],
            HlsMode::Mtl => self.regions.clone(),
        };
        HlsSample {
            input,
            labels: self.labels.clone(),
        }
    }
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let n = Normal::new(0.0, 1.0).expect("valid normal");
    let v: Vec<f64> = (0..dim).map(|_| n.sample(rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.into_iter().map(|x| x / norm).collect()
}

/// `count` samples over `taxonomy`. Signatures depend on `spec.seed` only;
/// the garments drawn depend on `sample_seed`.
pub fn hierarchical_samples(
    taxonomy: &Taxonomy,
    spec: &HierarchicalSpec,
    count: usize,
    sample_seed: u64,
) -> Result<Vec<HierarchicalSample>> {
    if spec.regions == 0 || spec.dim == 0 {
        return Err(SynthError::Spec("regions and dim must be positive".into()));
    }
    if !(0.0..=1.0).contains(&spec.category_ambiguity) || !(spec.noise >= 0.0) {
        return Err(SynthError::Spec("ambiguity in [0, 1] and noise ≥ 0 required".into()));
    }
    if spec.min_attributes == 0 || spec.min_attributes > spec.max_attributes {
        return Err(SynthError::Spec("attribute count range must be 1 ≤ min ≤ max".into()));
    }
    let types = taxonomy.num_types();
    if let Some(t) = (0..types).find(|&t| taxonomy.legal_attributes(t).len() < spec.max_attributes) {
        return Err(SynthError::Spec(format!(
            "type {} has fewer than {} legal attributes",
            taxonomy.type_name(t),
            spec.max_attributes
        )));
    }
    let mut sig_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let per_type = (0..types)
        .map(|t| taxonomy.categories_of_type(t).len())
        .max()
        .unwrap_or(0);
    let shared: Vec<Vec<f64>> = (0..per_type).map(|_| unit_vector(&mut sig_rng, spec.dim)).collect();
    let amb = spec.category_ambiguity;
    let mut category_sig = vec![Vec::new(); taxonomy.num_categories()];
    for t in 0..types {
        for (rank, c) in taxonomy.categories_of_type(t).into_iter().enumerate() {
            let own = unit_vector(&mut sig_rng, spec.dim);
            category_sig[c] = shared[rank]
                .iter()
                .zip(own)
                .map(|(s, o)| amb * s + (1.0 - amb) * o)
                .collect();
        }
    }
    let attribute_sig: Vec<Vec<f64>> = (0..taxonomy.num_attributes())
        .map(|_| unit_vector(&mut sig_rng, spec.dim))
        .collect();

    let noise = Normal::new(0.0, spec.noise).expect("checked ≥ 0");
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let t = rng.gen_range(0..types);
        let cats = taxonomy.categories_of_type(t);
        let c = cats[rng.gen_range(0..cats.len())];
        let legal = taxonomy.legal_attributes(t);
        let m = rng.gen_range(spec.min_attributes..=spec.max_attributes);
        let attrs: Vec<usize> = rand::seq::index::sample(&mut rng, legal.len(), m)
            .into_iter()
            .map(|i| legal[i])
            .collect();
        let regions = (0..spec.regions)
            .map(|r| {
                let mut v = category_sig[c].clone();
                for &a in attrs.iter().filter(|&&a| a % spec.regions == r) {
                    v.iter_mut()
                        .zip(&attribute_sig[a])
                        .for_each(|(x, s)| *x += spec.attribute_strength * s);
                }
                v.iter_mut().for_each(|x| *x += noise.sample(&mut rng));
                v
            })
            .collect();
        out.push(HierarchicalSample {
            regions,
            labels: LabelSet::new(t, c, attrs),
        });
    }
    Ok(out)
}
