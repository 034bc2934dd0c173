//! Linear plan metrics and their conversion into per-action costs plus an
//! `alpha` weight for the cost/makespan objective.

use serde::Serialize;
use thiserror::Error;

use super::{Problem, ResourceId, UpdateOp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum MetricTerm {
    TotalTime,
    Resource(ResourceId),
}

/// `minimize constant + Σ weight·term`
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metric {
    pub terms: Vec<(MetricTerm, f64)>,
    pub constant: f64,
}

impl Metric {
    pub fn time_weight(&self) -> f64 {
        self.terms
            .iter()
            .filter(|(t, _)| *t == MetricTerm::TotalTime)
            .map(|(_, w)| *w)
            .sum()
    }

    pub fn resource_weights(&self) -> impl Iterator<Item = (ResourceId, f64)> + '_ {
        self.terms.iter().filter_map(|(t, w)| match t {
            MetricTerm::Resource(r) => Some((*r, *w)),
            MetricTerm::TotalTime => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompiledMetric {
    /// Execution cost per action, indexed like `Problem::actions`.
    pub costs: Vec<f64>,
    pub alpha: f64,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MetricError {
    #[error("metric weights must be non-negative, {0} has weight {1}")]
    NegativeWeight(String, f64),
    #[error("metric assigns negative cost {1} to {0}")]
    NegativeCost(String, f64),
}

/// Net change of `r` caused by one execution of action `a`, counting only
/// `increase`/`decrease` updates whose amount is known without a state.
pub fn static_net_change(problem: &Problem, action: usize, r: ResourceId) -> f64 {
    let a = &problem.actions[action];
    let duration = a.duration.as_const();
    a.resource_updates
        .iter()
        .filter(|u| u.resource == r)
        .filter_map(|u| {
            let amount = u.rhs.eval(&[], duration).ok()?;
            match u.op {
                UpdateOp::Increase => Some(amount),
                UpdateOp::Decrease => Some(-amount),
                _ => None,
            }
        })
        .sum()
}

/// `cost(A) = Σ_r w_r·Δ_r(A)`; `alpha = S / (w_t + S)` with
/// `S = Σ_r w_r·mean_A Δ_r(A)`. A metric without a time term gives `alpha = 1`.
pub fn decompile_metric(metric: &Metric, problem: &Problem) -> Result<DecompiledMetric, MetricError> {
    let w_t = metric.time_weight();
    if w_t < 0.0 {
        return Err(MetricError::NegativeWeight("total-time".into(), w_t));
    }
    for (r, w) in metric.resource_weights() {
        if w < 0.0 {
            return Err(MetricError::NegativeWeight(problem.resource_name(r), w));
        }
    }
    let n = problem.actions.len();
    let mut costs = vec![0.0; n];
    let mut scale = 0.0;
    for (r, w) in metric.resource_weights() {
        let mut total = 0.0;
        for (i, c) in costs.iter_mut().enumerate() {
            let delta = static_net_change(problem, i, r);
            *c += w * delta;
            total += delta;
        }
        if n > 0 {
            scale += w * total / n as f64;
        }
    }
    for (i, c) in costs.iter().enumerate() {
        if *c < -1e-12 {
            return Err(MetricError::NegativeCost(problem.actions[i].label(), *c));
        }
    }
    let costs = costs.into_iter().map(|c| c.max(0.0)).collect();
    let alpha = if w_t == 0.0 {
        1.0
    } else if scale <= 0.0 {
        0.0
    } else {
        scale / (w_t + scale)
    };
    Ok(DecompiledMetric { costs, alpha })
}
