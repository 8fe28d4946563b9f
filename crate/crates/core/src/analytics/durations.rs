use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::catalog::{SegmentKind, SegmentSlot};
use crate::common::{Hand, Millis};
use crate::events::{EventAction, EventDraft};
use crate::segmentation::SegmentRecord;

/// Time spent on one confirmed segment instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentCompletion {
    pub actor_id: String,
    pub patient_id: String,
    pub hand: Hand,
    pub task_number: u8,
    pub slot: SegmentSlot,
    pub duration_seconds: f64,
    /// 1-based position among the actor's completions, by final confirm time.
    pub completion_index: usize,
    pub confirmed_at: Millis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchMean {
    pub batch_index: usize,
    pub mean_seconds: f64,
    pub size: usize,
    pub partial: bool,
}

type InstanceKey = (String, String, Hand, u8, SegmentSlot);

#[derive(Default)]
struct Instance {
    first_touch: Option<(Millis, usize)>,
    last_confirm: Option<(Millis, usize)>,
    record: Option<SegmentRecord>,
}

fn addresses_slot(action: EventAction) -> bool {
    !matches!(action, EventAction::SubmitTask | EventAction::FeedbackNote)
}

/// Duration from the first event addressing a slot to its final confirm, for every instance
/// whose folded state ends confirmed. Zero-length instances are dropped.
pub fn segment_durations<E: AsRef<EventDraft>>(events: &[E]) -> Vec<SegmentCompletion> {
    let mut instances: HashMap<InstanceKey, Instance> = HashMap::new();
    for (pos, e) in events.iter().enumerate() {
        let e = e.as_ref();
        if !addresses_slot(e.action) {
            continue;
        }
        let key = (
            e.actor_id.clone(),
            e.patient_id.clone(),
            e.hand,
            e.task_number,
            e.slot,
        );
        let inst = instances.entry(key).or_default();
        inst.first_touch.get_or_insert((e.timestamp_ms, pos));
        let record = inst
            .record
            .get_or_insert_with(|| SegmentRecord::unset(e.slot));
        record.apply(e);
        if e.action == EventAction::ConfirmSegment {
            inst.last_confirm = Some((e.timestamp_ms, pos));
        }
    }

    let mut done: Vec<(InstanceKey, Millis, usize, f64)> = instances
        .into_iter()
        .filter_map(|(key, inst)| {
            let (first, _) = inst.first_touch?;
            let (confirm, pos) = inst.last_confirm?;
            if !inst.record.is_some_and(|r| r.confirmed) {
                return None;
            }
            let secs = confirm.seconds_since(first);
            (secs > 0.0).then_some((key, confirm, pos, secs))
        })
        .collect();
    done.sort_by(|a, b| (&a.0 .0, a.1, a.2).cmp(&(&b.0 .0, b.1, b.2)));

    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    done.into_iter()
        .map(
            |((actor, patient, hand, task, slot), confirmed_at, _, secs)| {
                let i = index.entry(actor.clone()).or_insert(0);
                *i += 1;
                SegmentCompletion {
                    actor_id: actor,
                    patient_id: patient,
                    hand,
                    task_number: task,
                    slot,
                    duration_seconds: secs,
                    completion_index: *i,
                    confirmed_at,
                }
            },
        )
        .collect()
}

/// Type-7 (linear interpolation) quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Indices of values inside the closed Tukey fences, repeating until nothing more is removed.
/// Fewer than four values pass through unchanged.
pub fn tukey_keep(values: &[f64]) -> Vec<usize> {
    let mut keep: Vec<usize> = (0..values.len()).collect();
    loop {
        if keep.len() < 4 {
            return keep;
        }
        let mut sorted: Vec<f64> = keep.iter().map(|&i| values[i]).collect();
        sorted.sort_by(f64::total_cmp);
        let q1 = quantile(&sorted, 0.25);
        let q3 = quantile(&sorted, 0.75);
        let iqr = q3 - q1;
        let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        let next: Vec<usize> = keep
            .iter()
            .copied()
            .filter(|&i| (lo..=hi).contains(&values[i]))
            .collect();
        if next.len() == keep.len() {
            return keep;
        }
        keep = next;
    }
}

/// Drops outliers per (actor, segment kind), keeping input order.
pub fn filter_outliers(durations: &[SegmentCompletion]) -> Vec<SegmentCompletion> {
    let mut groups: BTreeMap<(&str, SegmentKind), Vec<usize>> = BTreeMap::new();
    for (i, d) in durations.iter().enumerate() {
        groups
            .entry((d.actor_id.as_str(), d.slot.kind()))
            .or_default()
            .push(i);
    }
    let mut keep = vec![false; durations.len()];
    for members in groups.values() {
        let values: Vec<f64> = members
            .iter()
            .map(|&i| durations[i].duration_seconds)
            .collect();
        for k in tukey_keep(&values) {
            keep[members[k]] = true;
        }
    }
    durations
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(d, _)| d.clone())
        .collect()
}

/// Means of consecutive batches; a short final batch is kept and marked partial.
pub fn batched_means(values: &[f64], batch_size: usize) -> Vec<BatchMean> {
    let batch_size = batch_size.max(1);
    values
        .chunks(batch_size)
        .enumerate()
        .map(|(i, chunk)| BatchMean {
            batch_index: i + 1,
            mean_seconds: chunk.iter().sum::<f64>() / chunk.len() as f64,
            size: chunk.len(),
            partial: chunk.len() < batch_size,
        })
        .collect()
}

/// Per-actor batch means of durations taken in completion order.
pub fn completion_curves(
    durations: &[SegmentCompletion],
    batch_size: usize,
) -> BTreeMap<String, Vec<BatchMean>> {
    let mut by_actor: BTreeMap<String, Vec<&SegmentCompletion>> = BTreeMap::new();
    for d in durations {
        by_actor.entry(d.actor_id.clone()).or_default().push(d);
    }
    by_actor
        .into_iter()
        .map(|(actor, mut ds)| {
            ds.sort_by_key(|d| d.completion_index);
            let values: Vec<f64> = ds.iter().map(|d| d.duration_seconds).collect();
            (actor, batched_means(&values, batch_size))
        })
        .collect()
}
