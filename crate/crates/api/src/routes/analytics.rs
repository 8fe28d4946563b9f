use axum::extract::rejection::QueryRejection;
use axum::extract::{Query, State};
use axum::Json;
use serde::Deserialize;
use serde_json::{json, Value};

use segrate_core::analytics::{
    completion_curves, filter_outliers, recommended_view_usage, segment_durations,
    switch_stats as compute_switch_stats, AnalyticsReport, SwitchStats, ViewUsageReport,
    DEFAULT_BATCH_SIZE,
};
use segrate_core::EventFilter;

use super::{query, ApiResult};
use crate::error::ApiError;
use crate::state::{Actor, AppState};

#[derive(Debug, Deserialize)]
pub(super) struct BatchQuery {
    #[serde(default)]
    batch_size: Option<usize>,
}

fn batch_size(q: BatchQuery) -> ApiResult<usize> {
    match q.batch_size.unwrap_or(DEFAULT_BATCH_SIZE) {
        0 => Err(ApiError::bad_request("batch_size must be positive")),
        n => Ok(n),
    }
}

pub(super) async fn durations(
    _: Actor,
    State(state): State<AppState>,
    filter: Result<Query<EventFilter>, QueryRejection>,
    batch: Result<Query<BatchQuery>, QueryRejection>,
) -> ApiResult<Json<Value>> {
    let events = state.store().list_events(&query(filter)?);
    let size = batch_size(query(batch)?)?;
    let all = segment_durations(&events);
    let kept = filter_outliers(&all);
    let curves = completion_curves(&kept, size);
    Ok(Json(json!({
        "batch_size": size,
        "durations": all,
        "durations_filtered": kept,
        "curves": curves,
    })))
}

pub(super) async fn view_usage(
    _: Actor,
    State(state): State<AppState>,
    filter: Result<Query<EventFilter>, QueryRejection>,
) -> ApiResult<Json<ViewUsageReport>> {
    let events = state.store().list_events(&query(filter)?);
    Ok(Json(recommended_view_usage(&events, state.catalog())))
}

pub(super) async fn switch_stats(
    _: Actor,
    State(state): State<AppState>,
    filter: Result<Query<EventFilter>, QueryRejection>,
) -> ApiResult<Json<SwitchStats>> {
    let events = state.store().list_events(&query(filter)?);
    Ok(Json(compute_switch_stats(&events)))
}

pub(super) async fn report(
    _: Actor,
    State(state): State<AppState>,
    filter: Result<Query<EventFilter>, QueryRejection>,
    batch: Result<Query<BatchQuery>, QueryRejection>,
) -> ApiResult<Json<AnalyticsReport>> {
    let events = state.store().list_events(&query(filter)?);
    let size = batch_size(query(batch)?)?;
    Ok(Json(AnalyticsReport::compute(
        &events,
        state.catalog(),
        size,
    )))
}
