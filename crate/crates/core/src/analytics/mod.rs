//! Annotator behavior metrics computed from event streams.
//!
//! Everything here is a pure function of an event snapshot: segment completion
//! times and their learning curves, use of each segment's recommended view, and
//! classification of camera switches.

mod durations;
mod switches;
mod views;

use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::events::EventDraft;

pub use durations::{
    batched_means, completion_curves, filter_outliers, quantile, segment_durations, tukey_keep,
    BatchMean, SegmentCompletion,
};
pub use switches::{
    classify_switches, overall_switch_fraction, switch_stats, total_entries, SwitchCategory,
    SwitchObservation, SwitchRow, SwitchStats,
};
pub use views::{mean_sd, recommended_view_usage, ActorViewUsage, KindViewUsage, ViewUsageReport};

pub const DEFAULT_BATCH_SIZE: usize = 10;

/// All metrics over one snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticsReport {
    pub durations: Vec<SegmentCompletion>,
    pub durations_filtered: Vec<SegmentCompletion>,
    pub batch_size: usize,
    pub curves: BTreeMap<String, Vec<BatchMean>>,
    pub view_usage: ViewUsageReport,
    pub switch_stats: SwitchStats,
}

impl AnalyticsReport {
    /// Curves use outlier-filtered durations.
    pub fn compute<E: AsRef<EventDraft>>(
        events: &[E],
        catalog: &Catalog,
        batch_size: usize,
    ) -> Self {
        let durations = segment_durations(events);
        let durations_filtered = filter_outliers(&durations);
        AnalyticsReport {
            curves: completion_curves(&durations_filtered, batch_size),
            durations,
            durations_filtered,
            batch_size,
            view_usage: recommended_view_usage(events, catalog),
            switch_stats: switch_stats(events),
        }
    }

    /// Writes `report.json` and one CSV per metric into `dir`.
    pub fn write_dir(&self, dir: &Path) -> io::Result<Vec<String>> {
        std::fs::create_dir_all(dir)?;
        let mut files = Vec::new();
        let mut put = |name: &str, body: String| -> io::Result<()> {
            std::fs::write(dir.join(name), body)?;
            files.push(name.to_string());
            Ok(())
        };
        put("report.json", serde_json::to_string_pretty(self)? + "\n")?;
        put("durations.csv", durations_csv(&self.durations)?)?;
        put(
            "durations_filtered.csv",
            durations_csv(&self.durations_filtered)?,
        )?;
        put("curves.csv", curves_csv(&self.curves)?)?;
        put("view_usage.csv", rows_csv(&self.view_usage.per_actor)?)?;
        put(
            "view_usage_summary.csv",
            rows_csv(&self.view_usage.per_kind)?,
        )?;
        put("switch_stats.csv", rows_csv(&self.switch_stats.rows)?)?;
        Ok(files)
    }
}

fn writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> io::Result<String> {
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    String::from_utf8(bytes).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

fn rows_csv<T: Serialize>(rows: &[T]) -> io::Result<String> {
    let mut w = writer();
    for r in rows {
        w.serialize(r)?;
    }
    finish(w)
}

/// Columns: actor_id, patient_id, hand, task_number, slot, duration_seconds, completion_index, confirmed_at_ms.
pub fn durations_csv(rows: &[SegmentCompletion]) -> io::Result<String> {
    let mut w = writer();
    w.write_record([
        "actor_id",
        "patient_id",
        "hand",
        "task_number",
        "slot",
        "duration_seconds",
        "completion_index",
        "confirmed_at_ms",
    ])?;
    for d in rows {
        w.write_record([
            d.actor_id.clone(),
            d.patient_id.clone(),
            d.hand.to_string(),
            d.task_number.to_string(),
            d.slot.to_string(),
            d.duration_seconds.to_string(),
            d.completion_index.to_string(),
            d.confirmed_at.0.to_string(),
        ])?;
    }
    finish(w)
}

/// Columns: actor_id, batch_index, mean_seconds, size, partial.
pub fn curves_csv(curves: &BTreeMap<String, Vec<BatchMean>>) -> io::Result<String> {
    let mut w = writer();
    w.write_record(["actor_id", "batch_index", "mean_seconds", "size", "partial"])?;
    for (actor, batches) in curves {
        for b in batches {
            w.write_record([
                actor.clone(),
                b.batch_index.to_string(),
                b.mean_seconds.to_string(),
                b.size.to_string(),
                b.partial.to_string(),
            ])?;
        }
    }
    finish(w)
}
