use serde::Serialize;

use super::graph::{Graph, NodeId};
use super::params::ParamStore;
use super::Result;

const FD_STEP: f64 = 1e-5;
/// Denominator floor so that vanishing gradients compare absolutely.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckEntry {
    pub name: String,
    pub max_rel_error: f64,
    pub passed: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        !self.entries.is_empty() && self.entries.iter().all(|e| e.passed)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.max_rel_error)
            .fold(0.0, f64::max)
    }
}

fn scalar_loss<F>(store: &ParamStore, build: &F) -> Result<f64>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<NodeId>,
{
    let mut g = Graph::new();
    let loss = build(&mut g, store)?;
    Ok(g.value(loss).data()[0])
}

/// Compare analytic parameter gradients of `build`'s scalar output against
/// central finite differences. Failures are reported, never raised.
pub fn gradient_check<F>(store: &ParamStore, build: F, tolerance: f64) -> GradCheckReport
where
    F: Fn(&mut Graph, &ParamStore) -> Result<NodeId>,
{
    let failed = |name: String, msg: String| GradCheckEntry {
        name,
        max_rel_error: f64::INFINITY,
        passed: false,
        error: Some(msg),
    };
    let mut work = store.clone();
    work.zero_grad();
    let mut g = Graph::new();
    let analytic = build(&mut g, &work).and_then(|loss| {
        g.backward(loss)?;
        g.write_param_grads(&mut work);
        Ok(())
    });
    if let Err(e) = analytic {
        return GradCheckReport {
            tolerance,
            entries: vec![failed("<graph>".into(), e.to_string())],
        };
    }

    let ids: Vec<_> = work.ids().collect();
    let entries = ids
        .into_iter()
        .map(|id| {
            let name = work.name(id).to_string();
            let grad = work
                .grad(id)
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; work.value(id).numel()]);
            let mut probe = work.clone();
            let mut worst = 0.0f64;
            for (j, &ga) in grad.iter().enumerate() {
                let orig = probe.value(id).data()[j];
                probe.value_mut(id).data_mut()[j] = orig + FD_STEP;
                let plus = scalar_loss(&probe, &build);
                probe.value_mut(id).data_mut()[j] = orig - FD_STEP;
                let minus = scalar_loss(&probe, &build);
                probe.value_mut(id).data_mut()[j] = orig;
                let (plus, minus) = match (plus, minus) {
                    (Ok(p), Ok(m)) => (p, m),
                    (Err(e), _) | (_, Err(e)) => return failed(name, e.to_string()),
                };
                let numeric = (plus - minus) / (2.0 * FD_STEP);
                let rel = (ga - numeric).abs() / ga.abs().max(numeric.abs()).max(REL_FLOOR);
                worst = worst.max(rel);
            }
            GradCheckEntry {
                name,
                max_rel_error: worst,
                passed: worst < tolerance,
                error: None,
            }
        })
        .collect();
    GradCheckReport { tolerance, entries }
}
