use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, SegmentKind};
use crate::events::EventDraft;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorViewUsage {
    pub actor_id: String,
    pub kind: SegmentKind,
    pub on_recommended: usize,
    pub frame_events: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindViewUsage {
    pub kind: SegmentKind,
    pub actors: usize,
    pub mean_percent: f64,
    /// Sample standard deviation across actors; 0 when only one actor contributes.
    pub sd_percent: f64,
    pub single_actor: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewUsageReport {
    pub per_actor: Vec<ActorViewUsage>,
    pub per_kind: Vec<KindViewUsage>,
}

/// Mean and sample standard deviation (n - 1 denominator; 0 for a single value).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Share of frame-bearing events made on the slot's recommended view, per actor and kind.
pub fn recommended_view_usage<E: AsRef<EventDraft>>(
    events: &[E],
    catalog: &Catalog,
) -> ViewUsageReport {
    let mut counts: BTreeMap<(String, SegmentKind), (usize, usize)> = BTreeMap::new();
    for e in events {
        let e = e.as_ref();
        if !e.action.is_frame_bearing() {
            continue;
        }
        let Ok(recommended) = catalog.recommended_view(e.task_number, e.slot) else {
            continue;
        };
        let c = counts
            .entry((e.actor_id.clone(), e.slot.kind()))
            .or_insert((0, 0));
        c.1 += 1;
        if e.camera == Some(recommended) {
            c.0 += 1;
        }
    }
    let per_actor: Vec<ActorViewUsage> = counts
        .into_iter()
        .map(|((actor_id, kind), (hit, total))| ActorViewUsage {
            actor_id,
            kind,
            on_recommended: hit,
            frame_events: total,
            percent: 100.0 * hit as f64 / total as f64,
        })
        .collect();

    let mut by_kind: BTreeMap<SegmentKind, Vec<f64>> = BTreeMap::new();
    for u in &per_actor {
        by_kind.entry(u.kind).or_default().push(u.percent);
    }
    let per_kind = by_kind
        .into_iter()
        .map(|(kind, values)| {
            let (mean, sd) = mean_sd(&values);
            KindViewUsage {
                kind,
                actors: values.len(),
                mean_percent: mean,
                sd_percent: sd,
                single_actor: values.len() == 1,
            }
        })
        .collect();
    ViewUsageReport {
        per_actor,
        per_kind,
    }
}
