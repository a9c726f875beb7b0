//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run alone with `cargo test -p muqar-server --test acceptance`; pass a
//! substring to run matching criteria only. Criteria listed in
//! `KNOWN_FAILURES` are reported but do not fail the run; any other failure
//! exits nonzero.

mod common;

use std::collections::{BTreeMap, HashMap};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use muqar_core::eval::{auc, binary_accuracy, mae, pcc, wape, BINARY_THRESHOLD};
use muqar_core::experiment::{evaluate, synthetic_dataset, ExampleShape};
use muqar_core::forecast::{
    train_model, Architecture, ForecastError, ForecastModel, GarmentDescriptor, ModelConfig,
    QarConfig, QarKind, TrainConfig,
};
use muqar_core::hls::{recall_at_k, topk_accuracy, HlsClassifier, HlsConfig, HlsMode, HlsTrainConfig};
use muqar_core::synth::{generate_world, hierarchical_samples, HierarchicalSpec, WorldSpec};
use muqar_core::taxonomy::{LabelRef, LabelSet, Taxonomy};
use muqar_core::tensor::suite::{primitive_gradient_suite, PRIMITIVES};
use muqar_core::trend::{AttributeWindow, Demographic, Normalization, PopularityRecord, TrendStore, Week};
use muqar_server::api::ForecastResponse;
use muqar_server::cli::{topsis_from_json, PUBLISHED_ABLATION};

/// Criteria expected to fail; each has a ledger entry explaining why.
const KNOWN_FAILURES: &[&str] = &["hls_mtl_recall"];

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed <= Duration::from_secs(limit_s)
}

// ----------------------------------------------------------------- gradients

fn gradient_suite() -> Outcome {
    let t = Instant::now();
    let checks = primitive_gradient_suite(2024, 5, 1e-4);
    let elapsed = t.elapsed();
    let mut per: BTreeMap<&str, usize> = BTreeMap::new();
    let mut worst: (f64, String) = (0.0, String::new());
    let mut failed = Vec::new();
    for c in &checks {
        *per.entry(c.primitive).or_default() += 1;
        let e = c.report.max_rel_error();
        if e > worst.0 {
            worst = (e, format!("{} {}", c.primitive, c.shape));
        }
        if !c.report.passed() {
            failed.push(format!("{} {}", c.primitive, c.shape));
        }
    }
    let coverage = PRIMITIVES.iter().all(|p| per.get(p).copied().unwrap_or(0) >= 5);
    outcome(
        failed.is_empty() && coverage && within(elapsed, 60),
        format!(
            "{} primitives x 5 shapes, max rel err {:.1e} ({}), failures {:?}, {:.1?} (limit 60 s)",
            PRIMITIVES.len(),
            worst.0,
            worst.1,
            failed,
            elapsed
        ),
    )
}

// ------------------------------------------------------------ metric oracles

fn oracle_mae(p: &[f64], t: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..p.len() {
        s += (p[i] - t[i]).abs();
    }
    s / p.len() as f64
}

fn oracle_wape(p: &[f64], t: &[f64]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..p.len() {
        num += (p[i] - t[i]).abs();
        den += t[i];
    }
    num / den
}

/// Covariance over the product of standard deviations.
fn oracle_pcc(p: &[f64], t: &[f64]) -> f64 {
    let n = p.len() as f64;
    let mp = p.iter().sum::<f64>() / n;
    let mt = t.iter().sum::<f64>() / n;
    let cov = p.iter().zip(t).map(|(a, b)| (a - mp) * (b - mt)).sum::<f64>() / n;
    let sp = (p.iter().map(|a| (a - mp).powi(2)).sum::<f64>() / n).sqrt();
    let st = (t.iter().map(|b| (b - mt).powi(2)).sum::<f64>() / n).sqrt();
    cov / (sp * st)
}

fn oracle_ba(p: &[f64], t: &[f64]) -> f64 {
    let hits = (0..p.len())
        .filter(|&i| (p[i] >= BINARY_THRESHOLD) == (t[i] >= BINARY_THRESHOLD))
        .count();
    hits as f64 / p.len() as f64
}

/// Enumerate every (positive, negative) pair.
fn oracle_auc(s: &[f64], l: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for i in 0..s.len() {
        for j in 0..s.len() {
            if l[i] && !l[j] {
                pairs += 1.0;
                if s[i] > s[j] {
                    wins += 1.0;
                } else if s[i] == s[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, coarse: bool) -> Vec<f64> {
    (0..n)
        .map(|_| {
            if coarse {
                // ties and exact threshold hits
                rng.gen_range(0..=10) as f64 / 10.0
            } else {
                rng.gen::<f64>()
            }
        })
        .collect()
}

fn metric_oracles() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut mismatches = Vec::new();
    let mut worst_pcc: f64 = 0.0;
    for case in 0..1000 {
        let n = rng.gen_range(2..200);
        let coarse = case % 3 == 0;
        let p = random_vec(&mut rng, n, coarse);
        let mut tr = random_vec(&mut rng, n, coarse);
        tr[0] = 0.25; // never constant, never zero-sum
        tr[1] = 0.75;
        let labels: Vec<bool> = (0..n).map(|i| if i < 2 { i == 0 } else { rng.gen() }).collect();
        let exact = [
            ("mae", mae(&p, &tr).unwrap(), oracle_mae(&p, &tr)),
            ("wape", wape(&p, &tr).unwrap(), oracle_wape(&p, &tr)),
            ("ba", binary_accuracy(&p, &tr).unwrap(), oracle_ba(&p, &tr)),
            ("auc", auc(&p, &labels).unwrap(), oracle_auc(&p, &labels)),
        ];
        for (name, got, want) in exact {
            if got != want {
                mismatches.push(format!("case {case} {name}: {got} vs {want}"));
            }
        }
        if let Ok(got) = pcc(&p, &tr) {
            let d = (got - oracle_pcc(&p, &tr)).abs();
            worst_pcc = worst_pcc.max(d);
            if d > 1e-12 {
                mismatches.push(format!("case {case} pcc off by {d:e}"));
            }
        }
    }
    let groupby = groupby_oracle(&mut rng, 100);
    mismatches.extend(groupby);
    let elapsed = t.elapsed();
    outcome(
        mismatches.is_empty() && within(elapsed, 10),
        format!(
            "1000 cases: mae/wape/ba/auc bit-equal, pcc max diff {worst_pcc:.1e} (tol 1e-12); 100 group-by series cases; mismatches {}{}; {elapsed:.1?} (limit 10 s)",
            mismatches.len(),
            mismatches.first().map(|m| format!(" (first: {m})")).unwrap_or_default()
        ),
    )
}

/// Weekly (optionally stratum-filtered) means against a brute-force group-by.
fn groupby_oracle(rng: &mut ChaCha8Rng, cases: usize) -> Vec<String> {
    let world = generate_world(&WorldSpec::new(3)).unwrap();
    let tax = world.taxonomy().clone();
    let start = NaiveDateExt::monday(2021, 1);
    let mut out = Vec::new();
    for case in 0..cases {
        let records: Vec<PopularityRecord> = (0..rng.gen_range(1..300))
            .map(|i| {
                let c = rng.gen_range(0..tax.num_categories());
                let legal = tax.legal_attributes(tax.category_parent(c));
                let attrs: Vec<usize> = legal.iter().copied().filter(|_| rng.gen_bool(0.3)).collect();
                PopularityRecord {
                    item_id: format!("i{i}"),
                    date: start + chrono::Duration::days(rng.gen_range(0..70)),
                    popularity: rng.gen(),
                    labels: LabelSet::new(tax.category_parent(c), c, attrs),
                    demographic: Demographic::from_index(rng.gen_range(0..Demographic::COUNT)),
                    features: None,
                }
            })
            .collect();
        let store = TrendStore::new(records.clone(), &tax, Normalization::Identity, None).unwrap();
        let filter = (case % 2 == 0).then(|| Demographic::from_index(case % 14).unwrap());
        for a in 0..tax.num_attributes() {
            let label = LabelRef::Attribute(a);
            let mut groups: BTreeMap<Week, (f64, usize)> = BTreeMap::new();
            for r in &records {
                if r.labels.attributes.contains(&a) && (filter.is_none() || r.demographic == filter) {
                    let e = groups.entry(r.week()).or_default();
                    e.0 += r.popularity;
                    e.1 += 1;
                }
            }
            match store.series(label, filter, None) {
                Ok(s) => {
                    for (i, w) in s.weeks.iter().enumerate() {
                        let want = groups.get(w).map(|(sum, n)| (sum / *n as f64, *n));
                        let got = (s.support[i] > 0).then(|| (s.values[i], s.support[i]));
                        if got != want {
                            out.push(format!("group-by case {case} attr {a} week {w}: {got:?} vs {want:?}"));
                        }
                    }
                }
                Err(_) if groups.is_empty() => {}
                Err(e) => out.push(format!("group-by case {case} attr {a}: {e}")),
            }
        }
    }
    out
}

struct NaiveDateExt;
impl NaiveDateExt {
    fn monday(year: i32, week: u32) -> chrono::NaiveDate {
        Week::from_iso(year, week).unwrap().monday()
    }
}

// -------------------------------------------------------------------- TOPSIS

fn topsis_anchor() -> Outcome {
    let report = topsis_from_json(PUBLISHED_ABLATION).unwrap();
    let published: BTreeMap<String, usize> =
        serde_json::from_value(serde_json::from_str::<serde_json::Value>(PUBLISHED_ABLATION).unwrap()["published_ranks"].clone()).unwrap();
    let muqar = report.rank_of("MuQAR").unwrap();
    let fusion = report.rank_of("FusionMLP").unwrap();
    let visual_lr = report.rank_of("Visual LR").unwrap();
    let order: Vec<String> = report
        .ranking
        .iter()
        .map(|r| format!("{}:{}(published {})", r.rank, r.name, published[&r.name]))
        .collect();
    outcome(
        muqar == 1 && fusion < visual_lr,
        format!(
            "MuQAR rank {muqar}, FusionMLP {fusion} vs Visual LR {visual_lr}; full order (reported only): {}",
            order.join(", ")
        ),
    )
}

// ------------------------------------------------------------------ ablation

struct SeedRun {
    fusion: f64,
    qar: BTreeMap<&'static str, f64>,
    muqar_kind: QarKind,
    muqar: f64,
}

fn ablation_config(arch: Architecture, kind: QarKind, tax: &Taxonomy, feature_dim: usize) -> ModelConfig {
    let mut c = ModelConfig::new(arch, feature_dim, tax.num_categories(), tax.num_attributes());
    c.fusion.u_mlp = 64;
    c.head_units = 32;
    c.qar = QarConfig {
        n: 12,
        a_max: 4,
        q: 16,
        hidden: 8,
        ff_dim: 32,
        ..QarConfig::new(kind)
    };
    c
}

fn ablation_runs() -> (Vec<SeedRun>, Duration) {
    let t = Instant::now();
    let mut runs = Vec::new();
    for seed in 1..=3u64 {
        let spec = WorldSpec::new(seed);
        let shape = ExampleShape {
            n: 12,
            k: 1,
            a_max: 4,
            feature_dim: spec.feature_dim,
        };
        let (world, _, data) = synthetic_dataset(&spec, seed + 100, shape).unwrap();
        let tax = world.taxonomy();
        let schedule = TrainConfig {
            epochs: 40,
            batch_size: 64,
            learning_rate: 2e-3,
            seed,
            patience: Some(5),
            target_loss: None,
        };
        let fit = |arch, kind| {
            let (m, r) = train_model(ablation_config(arch, kind, tax, shape.feature_dim), tax, &data.train, &data.validation, &schedule).unwrap();
            let test = evaluate(&m, &data.test, "test").unwrap().mae.unwrap();
            (test, r.best_val_mae().unwrap())
        };
        let fusion = fit(Architecture::FusionMlp, QarKind::Lstm).0;
        let mut qar = BTreeMap::new();
        let mut best: Option<(f64, QarKind)> = None;
        for kind in QarKind::ALL {
            let (test, val) = fit(Architecture::Qar, kind);
            qar.insert(kind.name(), test);
            if best.is_none_or(|(v, _)| val < v) {
                best = Some((val, kind));
            }
        }
        let muqar_kind = best.unwrap().1;
        let muqar = fit(Architecture::MuQar, muqar_kind).0;
        eprintln!("  ablation seed {seed}: fusion {fusion:.4}, qar {qar:.4?}, muqar[{}] {muqar:.4}", muqar_kind.name());
        runs.push(SeedRun {
            fusion,
            qar,
            muqar_kind,
            muqar,
        });
    }
    (runs, t.elapsed())
}

fn ablation(runs: &[SeedRun], elapsed: Duration) -> Outcome {
    let m = median(runs.iter().map(|r| r.muqar).collect());
    let f = median(runs.iter().map(|r| r.fusion).collect());
    let (best_kind, q) = QarKind::ALL
        .iter()
        .map(|k| (k.name(), median(runs.iter().map(|r| r.qar[k.name()]).collect())))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    let gain_f = (f - m) / f;
    let gain_q = (q - m) / q;
    outcome(
        gain_f >= 0.05 && gain_q >= 0.05 && within(elapsed, 15 * 60),
        format!(
            "median test MAE: MuQAR {m:.4}, FusionMLP {f:.4} ({:+.1}%), best QAR-only {best_kind} {q:.4} ({:+.1}%) (need >= 5% each); 3 seeds, {elapsed:.1?} (limit 15 min)",
            gain_f * 100.0,
            gain_q * 100.0
        ),
    )
}

fn modality(runs: &[SeedRun]) -> Outcome {
    let m = median(runs.iter().map(|r| r.muqar).collect());
    let no_trend = median(runs.iter().map(|r| r.fusion).collect());
    let no_fusion = median(runs.iter().map(|r| r.qar[r.muqar_kind.name()]).collect());
    outcome(
        no_trend > m && no_fusion > m,
        format!("median test MAE: full MuQAR {m:.4}; without trend branch {no_trend:.4}; without feature branch (same QAR kind) {no_fusion:.4}"),
    )
}

// ----------------------------------------------------------------------- HLS

struct HlsRuns {
    stl_top1: Vec<f64>,
    stl_hls_top1: Vec<f64>,
    stl_recall: Vec<f64>,
    stl_hls_recall: Vec<f64>,
    mtl_recall: Vec<f64>,
}

fn hls_runs() -> HlsRuns {
    let mut out = HlsRuns {
        stl_top1: vec![],
        stl_hls_top1: vec![],
        stl_recall: vec![],
        stl_hls_recall: vec![],
        mtl_recall: vec![],
    };
    for seed in 0..3u64 {
        let world = generate_world(&WorldSpec::new(seed)).unwrap();
        let spec = HierarchicalSpec::new(seed);
        let train = hierarchical_samples(world.taxonomy(), &spec, 2000, seed * 2 + 1).unwrap();
        let test = hierarchical_samples(world.taxonomy(), &spec, 1000, seed * 2 + 2).unwrap();
        for (mode, use_hls) in [(HlsMode::Stl, false), (HlsMode::Stl, true), (HlsMode::Mtl, true)] {
            let mut m = HlsClassifier::new(HlsConfig::new(mode, spec.dim, use_hls), world.taxonomy(), seed).unwrap();
            let tr: Vec<_> = train.iter().map(|s| s.to_hls(mode)).collect();
            let te: Vec<_> = test.iter().map(|s| s.to_hls(mode)).collect();
            let schedule = HlsTrainConfig {
                epochs: 30,
                batch_size: 32,
                learning_rate: 3e-3,
                seed,
            };
            m.train(&tr, &schedule).unwrap();
            let p = m.predict_batch(&te).unwrap();
            let cats: Vec<_> = p.iter().map(|x| x.category_probs.clone()).collect();
            let attrs: Vec<_> = p.iter().map(|x| x.attribute_probs.clone()).collect();
            let tc: Vec<usize> = te.iter().map(|s| s.labels.category).collect();
            let ta: Vec<Vec<usize>> = te.iter().map(|s| s.labels.attributes.clone()).collect();
            let top1 = topk_accuracy(&cats, &tc, 1).unwrap();
            let r3 = recall_at_k(&attrs, &ta, 3).unwrap();
            match (mode, use_hls) {
                (HlsMode::Stl, false) => {
                    out.stl_top1.push(top1);
                    out.stl_recall.push(r3);
                }
                (HlsMode::Stl, true) => {
                    out.stl_hls_top1.push(top1);
                    out.stl_hls_recall.push(r3);
                }
                _ => out.mtl_recall.push(r3),
            }
        }
    }
    out
}

fn hls_top1(r: &HlsRuns) -> Outcome {
    let (a, b) = (median(r.stl_hls_top1.clone()), median(r.stl_top1.clone()));
    outcome(a >= b, format!("median top-1 category accuracy: STL w/ HLS {a:.3} vs STL w/o HLS {b:.3} (need >=)"))
}

fn hls_mtl_recall(r: &HlsRuns) -> Outcome {
    let m = median(r.mtl_recall.clone());
    let s = median(r.stl_recall.clone());
    let sh = median(r.stl_hls_recall.clone());
    outcome(
        m < s && m < sh,
        format!("median attribute recall@3: MTL w/ HLS {m:.3} vs STL w/o HLS {s:.3}, STL w/ HLS {sh:.3} (need MTL lowest)"),
    )
}

// ------------------------------------------------------------------- overfit

fn overfit() -> Outcome {
    let t = Instant::now();
    let spec = WorldSpec::new(1);
    let shape = ExampleShape {
        n: 12,
        k: 1,
        a_max: 4,
        feature_dim: spec.feature_dim,
    };
    let (world, _, data) = synthetic_dataset(&spec, 101, shape).unwrap();
    let tiny: Vec<_> = data.train.iter().step_by(97).take(32).cloned().collect();
    assert_eq!(tiny.len(), 32);
    let schedule = TrainConfig {
        epochs: 2000,
        batch_size: 32,
        learning_rate: 3e-3,
        seed: 1,
        patience: None,
        target_loss: Some(1e-3),
    };
    let mut runs = vec![
        ("fusion_mlp".to_string(), Architecture::FusionMlp, QarKind::Lstm),
        ("muqar".to_string(), Architecture::MuQar, QarKind::Lstm),
    ];
    for k in QarKind::ALL {
        runs.push((format!("qar_{}", k.name()), Architecture::Qar, k));
    }
    let tax = world.taxonomy();
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, arch, kind) in runs {
        let mut c = ModelConfig::new(arch, shape.feature_dim, tax.num_categories(), tax.num_attributes());
        c.qar = QarConfig {
            n: 12,
            a_max: 4,
            ..QarConfig::new(kind)
        };
        let (_, r) = train_model(c, tax, &tiny, &[], &schedule).unwrap();
        let mse = r.final_train_mse().unwrap();
        ok &= mse < 1e-3 && r.curve.len() <= 2000;
        lines.push(format!("{name} {mse:.1e}@{}", r.curve.len()));
    }
    outcome(ok, format!("train MSE@epochs (need < 1e-3 within 2000): {}; {:.1?}", lines.join(", "), t.elapsed()))
}

// --------------------------------------------------------------- persistence

fn random_descriptor(rng: &mut ChaCha8Rng, tax: &Taxonomy, cfg: &ModelConfig) -> (GarmentDescriptor, AttributeWindow) {
    let c = rng.gen_range(0..tax.num_categories());
    let t = tax.category_parent(c);
    let legal = tax.legal_attributes(t);
    let attrs: Vec<usize> = legal.iter().copied().filter(|_| rng.gen_bool(0.4)).collect();
    let (n, a) = (cfg.qar.n, cfg.qar.a_max);
    let used = attrs.len().min(a) + 1;
    let mask: Vec<f64> = (0..a).map(|j| if j < used { 1.0 } else { 0.0 }).collect();
    let values = (0..n * a).map(|i| if mask[i % a] > 0.0 { rng.gen() } else { 0.0 }).collect();
    let d = GarmentDescriptor {
        features: (0..cfg.feature_dim).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        labels: LabelSet::new(t, c, attrs),
        target_date: NaiveDateExt::monday(2020, 1) + chrono::Duration::days(rng.gen_range(0..1500)),
        demographic: Demographic::from_index(rng.gen_range(0..Demographic::COUNT)),
    };
    (d, AttributeWindow { values, mask, n, a_max: a })
}

fn persistence() -> Outcome {
    let spec = WorldSpec::new(9);
    let shape = ExampleShape {
        n: 12,
        k: 3,
        a_max: 4,
        feature_dim: spec.feature_dim,
    };
    let (world, _, data) = synthetic_dataset(&spec, 9, shape).unwrap();
    let tax = world.taxonomy();
    let schedule = TrainConfig {
        epochs: 2,
        batch_size: 64,
        seed: 9,
        ..TrainConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut checked = 0;
    let mut mismatches = Vec::new();
    let mut refused = true;
    let other = {
        let mut s = tax.spec().clone();
        s.attributes.swap(0, 1);
        s.attributes[0].name.push_str("_x");
        Taxonomy::new(s).unwrap().hash()
    };
    for kind in QarKind::ALL {
        let mut cfg = ablation_config(Architecture::MuQar, kind, tax, shape.feature_dim);
        cfg.k = 3;
        let (model, _) = train_model(cfg.clone(), tax, &data.train, &data.validation, &schedule).unwrap();
        let bytes = model.to_bytes();
        let loaded = ForecastModel::from_bytes(&bytes, Some(&tax.hash())).unwrap();
        let items: Vec<_> = (0..100).map(|_| random_descriptor(&mut rng, tax, &cfg)).collect();
        let refs: Vec<_> = items.iter().map(|(d, w)| (d, Some(w))).collect();
        let a = model.predict_batch(&refs).unwrap();
        let b = loaded.predict_batch(&refs).unwrap();
        for (x, y) in a.iter().zip(&b) {
            checked += 1;
            if x.iter().zip(y).any(|(p, q)| p.to_bits() != q.to_bits()) {
                mismatches.push(kind.name());
            }
        }
        refused &= matches!(
            ForecastModel::from_bytes(&bytes, Some(&other)),
            Err(ForecastError::TaxonomyMismatch { .. })
        );
    }
    // the service refuses a foreign model as well
    let service = {
        let fx = common::fixture();
        let r = fx.state.activate("alien");
        matches!(r, Err(e) if e.status == axum::http::StatusCode::CONFLICT) && fx.state.active().is_none()
    };
    outcome(
        mismatches.is_empty() && refused && service && checked == 600,
        format!(
            "{checked} save/load/predict comparisons over 6 MuQAR variants x 100 random descriptors, {} not bit-equal; foreign taxonomy refused by loader: {refused}, by activation (409): {service}",
            mismatches.len()
        ),
    )
}

// ------------------------------------------------------------------- service

fn service_contract() -> Outcome {
    let t = Instant::now();
    let fx = common::fixture();
    let schema = common::schema("forecast_response.schema.json");
    fx.state.activate("v1").unwrap();
    let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(4).enable_all().build().unwrap();
    let mut notes = Vec::new();

    // schema validity over a spread of legal requests
    let tax = fx.taxonomy().clone();
    let mut ok_responses = 0;
    let mut invalid = 0;
    let mut bodies = Vec::new();
    for c in 0..tax.num_categories() {
        for (i, count) in [0, 1, 3].into_iter().enumerate() {
            let (cat, attrs) = fx.legal_labels(c, count);
            let mut garment = json!({"category": cat, "attributes": attrs});
            if i == 1 {
                garment["visual_features"] = json!(vec![0.3; fx.feature_dim()]);
            }
            bodies.push(json!({"garment": garment, "target_date": format!("2021-0{}-1{}", 2 + i, c % 10)}));
        }
    }
    let mut first = HashMap::new();
    for body in &bodies {
        let (s, r) = rt.block_on(common::call(&fx.state, "POST", "/v1/forecast", Some(body)));
        if s.is_success() {
            ok_responses += 1;
            if !schema.is_valid(&r) {
                invalid += 1;
            }
            first.insert(body.to_string(), r);
        }
    }
    notes.push(format!("{ok_responses}/{} responses 200, {invalid} schema-invalid", bodies.len()));

    // determinism
    let mut diverging = 0;
    for body in &bodies {
        let (_, r) = rt.block_on(common::call(&fx.state, "POST", "/v1/forecast", Some(body)));
        if first.get(&body.to_string()).is_some_and(|f| *f != r) {
            diverging += 1;
        }
    }
    notes.push(format!("{diverging} non-deterministic"));

    // 100 concurrent forecasts across activations
    let body = common::basic_request(&fx);
    let expected: HashMap<String, ForecastResponse> = ["v1", "v2"]
        .iter()
        .map(|v| {
            let s = muqar_server::AppState::new(fx.store.clone(), fx.state.registry().clone()).unwrap();
            s.activate(v).unwrap();
            (v.to_string(), s.forecast(&serde_json::from_value(body.clone()).unwrap()).unwrap())
        })
        .collect();
    let torn = rt.block_on(async {
        let mut tasks = Vec::new();
        for i in 0..100 {
            let state = fx.state.clone();
            let body = body.clone();
            tasks.push(tokio::spawn(async move {
                if i % 5 == 0 {
                    let v = if i % 10 == 0 { "v2" } else { "v1" };
                    common::call(&state, "POST", "/v1/models/activate", Some(&json!({"version": v}))).await;
                }
                common::call(&state, "POST", "/v1/forecast", Some(&body)).await
            }));
        }
        let mut torn = 0;
        for t in tasks {
            let (s, r) = t.await.unwrap();
            let r: Option<ForecastResponse> = s.is_success().then(|| serde_json::from_value(r).unwrap());
            if r.as_ref().is_none_or(|r| expected.get(&r.model_version) != Some(r)) {
                torn += 1;
            }
        }
        torn
    });
    notes.push(format!("{torn}/100 torn under concurrent activation"));
    outcome(
        ok_responses == bodies.len() && invalid == 0 && diverging == 0 && torn == 0,
        format!("{}; {:.1?}", notes.join(", "), t.elapsed()),
    )
}

// ---------------------------------------------------------------------- main

fn main() -> ExitCode {
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let wanted = |name: &str| filter.as_deref().is_none_or(|f| name.contains(f));
    let mut results: Vec<(&str, Outcome, Duration)> = Vec::new();
    let mut run = |name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        if !wanted(name) {
            return;
        }
        let t = Instant::now();
        let o = f();
        let e = t.elapsed();
        print_line(name, &o, e);
        results.push((name, o, e));
    };

    run("gradient_suite", &mut gradient_suite);
    run("metric_oracles", &mut metric_oracles);
    run("topsis_anchor", &mut topsis_anchor);
    if wanted("ablation") || wanted("modality") {
        let (runs, elapsed) = ablation_runs();
        run("ablation", &mut || ablation(&runs, elapsed));
        run("modality", &mut || modality(&runs));
    }
    if wanted("hls_top1") || wanted("hls_mtl_recall") {
        let r = hls_runs();
        run("hls_top1", &mut || hls_top1(&r));
        run("hls_mtl_recall", &mut || hls_mtl_recall(&r));
    }
    run("overfit", &mut overfit);
    run("persistence", &mut persistence);
    run("service_contract", &mut service_contract);

    let unexpected: Vec<&str> = results
        .iter()
        .filter(|(n, o, _)| !o.passed && !KNOWN_FAILURES.contains(n))
        .map(|(n, _, _)| *n)
        .collect();
    let passed = results.iter().filter(|(_, o, _)| o.passed).count();
    println!(
        "acceptance: {passed}/{} passed, {} known failures, {} unexpected",
        results.len(),
        results.iter().filter(|(n, o, _)| !o.passed && KNOWN_FAILURES.contains(n)).count(),
        unexpected.len()
    );
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn print_line(name: &str, o: &Outcome, elapsed: Duration) {
    let status = match (o.passed, KNOWN_FAILURES.contains(&name)) {
        (true, _) => "PASS",
        (false, true) => "FAIL (known, see decisions ledger)",
        (false, false) => "FAIL",
    };
    println!("[{status}] {name} ({elapsed:.1?}): {}", o.detail);
}
