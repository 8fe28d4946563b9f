//! Acceptance suite. Prints one `[PASS]`/`[FAIL]` line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tower::ServiceExt;

use segrate_api::{router, AppState, TOKEN_HEADER};
use segrate_core::analytics::{
    batched_means, completion_curves, filter_outliers, segment_durations, switch_stats,
    SegmentCompletion, SwitchCategory,
};
use segrate_core::capture::{CameraStatus, CaptureDesk, CaptureSession, Phase, StubRig};
use segrate_core::events::{flat_csv_string, read_flat_csv};
use segrate_core::rating::{Answer, AnswerType, AssignmentId, RatingError, RatingSubmission};
use segrate_core::scenario::{self, NARRATIVE_CSV};
use segrate_core::segmentation::detect_overlaps;
use segrate_core::simulate::{random_stream, LearningCurve, SwitchTarget, DEFAULT_START};
use segrate_core::{
    fold_state, simulate, CameraView, Catalog, EventFilter, EventStore, Hand, Millis, RatingDesk,
    RatingForm, SegmentKind, SegmentRecord, SegmentSlot, SegmentationState, SimulationProfile,
    StreamKey, VideoKey,
};

type Check = Result<String, String>;
type Criterion = (&'static str, Option<Duration>, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {{
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    }};
}

fn catalog() -> Arc<Catalog> {
    Arc::new(Catalog::default_catalog())
}

fn slot(name: &str) -> SegmentSlot {
    name.parse().unwrap()
}

// Narrative round-trip

fn narrative_round_trip() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = EventStore::open(dir.path(), catalog()).map_err(|e| e.to_string())?;
    let events = scenario::narrative();
    store
        .append_batch(events.clone())
        .map_err(|e| e.to_string())?;

    let seq = catalog().expected_sequence(1).unwrap().to_vec();
    let folded = fold_state(&events, &seq).map_err(|e| e.to_string())?;
    let ip = folded.iter().find(|r| r.slot == slot("IP")).unwrap();
    let t = folded.iter().find(|r| r.slot == slot("T")).unwrap();
    ensure!(
        ip.interval() == Some((75, 92)) && ip.confirmed,
        "IP folded to {ip:?}"
    );
    ensure!(
        t.interval() == Some((92, 111)) && t.confirmed,
        "T folded to {t:?}"
    );

    let out = Command::new(env!("CARGO_BIN_EXE_segrate"))
        .args(["export-flat", "--patient", "1", "--task", "1", "--data-dir"])
        .arg(dir.path())
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(
        out.status.success(),
        "export-flat failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = String::from_utf8(out.stdout).map_err(|e| e.to_string())?;
    ensure!(csv == NARRATIVE_CSV, "export-flat produced\n{csv}");

    let rows = read_flat_csv(csv.as_bytes()).map_err(|e| e.to_string())?;
    let copy = EventStore::in_memory(catalog());
    copy.import_flat(&rows, "seg1", DEFAULT_START)
        .map_err(|e| e.to_string())?;
    let again = flat_csv_string(&copy.export_flat(&EventFilter::all()));
    ensure!(again == NARRATIVE_CSV, "re-import exported\n{again}");
    Ok("IP[75,92] T[92,111], 3 rows byte-identical".into())
}

// Overlap oracle

/// Frames shared by two half-open intervals, counted one frame at a time.
fn shared_frames(a: (u32, u32), b: (u32, u32)) -> u32 {
    let (short, long) = if a.1 - a.0 <= b.1 - b.0 {
        (a, b)
    } else {
        (b, a)
    };
    (short.0..short.1)
        .filter(|f| (long.0..long.1).contains(f))
        .count() as u32
}

fn overlap_oracle() -> Check {
    let slots: Vec<SegmentSlot> = ["IP", "T", "MTR", "PR", "MTR2", "GIP", "GT", "PR2"]
        .into_iter()
        .map(slot)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0x0be7_1a95);
    let mut boundary_sets = 0;
    for case in 0..1000 {
        let n = rng.random_range(0..=8);
        let mut records = Vec::new();
        let mut prev_end: Option<u32> = None;
        let touching = case % 4 == 0;
        for s in &slots[..n] {
            let r = if touching {
                let start = prev_end.unwrap_or(rng.random_range(0..1000));
                let end = (start + rng.random_range(1..1000)).min(10_000);
                prev_end = Some(end);
                SegmentRecord::with_frames(*s, start, end)
            } else {
                match rng.random_range(0..10) {
                    0 => SegmentRecord::unset(*s),
                    1 => SegmentRecord {
                        start_frame: Some(rng.random_range(0..=10_000)),
                        ..SegmentRecord::unset(*s)
                    },
                    _ => SegmentRecord::with_frames(
                        *s,
                        rng.random_range(0..=10_000),
                        rng.random_range(0..=10_000),
                    ),
                }
            };
            records.push(r);
        }

        let mut expected = Vec::new();
        for i in 0..records.len() {
            for j in i + 1..records.len() {
                let (a, b) = (&records[i], &records[j]);
                let (Some(a0), Some(a1), Some(b0), Some(b1)) =
                    (a.start_frame, a.end_frame, b.start_frame, b.end_frame)
                else {
                    continue;
                };
                if a1 <= a0 || b1 <= b0 {
                    continue;
                }
                let shared = shared_frames((a0, a1), (b0, b1));
                if shared > 0 {
                    expected.push((a.slot, b.slot, shared));
                }
            }
        }
        let got: Vec<(SegmentSlot, SegmentSlot, u32)> = detect_overlaps(&records)
            .into_iter()
            .map(|w| (w.earlier_slot, w.later_slot, w.overlap_frames))
            .collect();
        ensure!(
            got == expected,
            "case {case}: {got:?} != oracle {expected:?} for {records:?}"
        );
        if touching {
            ensure!(
                got.is_empty(),
                "case {case}: shared boundaries warned {got:?}"
            );
            boundary_sets += 1;
        }
    }
    Ok(format!(
        "1000 sets agree ({boundary_sets} shared-boundary sets, 0 warnings)"
    ))
}

// Fold determinism

fn fold_determinism() -> Check {
    let c = catalog();
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    for case in 0..500u32 {
        let key = StreamKey {
            actor_id: "seg1".into(),
            patient_id: format!("F{case}"),
            hand: if case % 2 == 0 {
                Hand::Left
            } else {
                Hand::Right
            },
            task_number: (case % 19) as u8 + 1,
        };
        let steps = rng.random_range(1..80);
        let stream = random_stream(&mut rng, &key, &c, steps, DEFAULT_START);
        let seq = c.expected_sequence(key.task_number).unwrap();

        let folded = fold_state(&stream, seq).map_err(|e| e.to_string())?;
        let mut inc = SegmentationState::new(seq);
        for e in &stream {
            inc.apply(e).map_err(|e| e.to_string())?;
            ensure!(
                inc.records().len() == seq.len(),
                "case {case}: record count drifted"
            );
        }
        ensure!(
            inc.records() == folded.as_slice(),
            "case {case}: incremental fold differs"
        );
        ensure!(
            fold_state(&stream, seq).unwrap() == folded,
            "case {case}: fold not deterministic"
        );

        let store = EventStore::in_memory(c.clone());
        store
            .append_batch(stream)
            .map_err(|e| format!("case {case}: {e}"))?;
        let rows = store.export_flat(&EventFilter::all());
        let csv = flat_csv_string(&rows);
        let copy = EventStore::in_memory(c.clone());
        copy.import_flat(
            &read_flat_csv(csv.as_bytes()).unwrap(),
            "seg1",
            DEFAULT_START,
        )
        .map_err(|e| format!("case {case}: {e}"))?;
        let back = fold_state(&copy.stream_events(&key), seq).map_err(|e| e.to_string())?;
        let frames = |rs: &[SegmentRecord]| rs.iter().map(|r| r.frames()).collect::<Vec<_>>();
        ensure!(
            frames(&back) == frames(&folded),
            "case {case}: flat round-trip changed the fold"
        );
    }
    Ok("500 streams: batch = incremental = flat round-trip".into())
}

// Analytics fixtures

fn completion(actor: &str, kind: SegmentKind, i: usize, seconds: f64) -> SegmentCompletion {
    SegmentCompletion {
        actor_id: actor.into(),
        patient_id: "P".into(),
        hand: Hand::Left,
        task_number: 1,
        slot: SegmentSlot::first(kind),
        duration_seconds: seconds,
        completion_index: i,
        confirmed_at: Millis(i as i64 * 1000),
    }
}

fn analytics_fixtures() -> Check {
    let values: Vec<f64> = [30.0; 10].into_iter().chain([10.0; 10]).collect();
    let got: Vec<(usize, f64)> = batched_means(&values, 10)
        .iter()
        .map(|b| (b.batch_index, b.mean_seconds))
        .collect();
    ensure!(
        got == vec![(1, 30.0), (2, 10.0)],
        "batched_means gave {got:?}"
    );

    let raw: Vec<SegmentCompletion> = [10.0, 11.0, 12.0, 11.0, 300.0]
        .into_iter()
        .enumerate()
        .map(|(i, s)| completion("seg1", SegmentKind::IP, i + 1, s))
        .collect();
    let kept: Vec<f64> = filter_outliers(&raw)
        .iter()
        .map(|c| c.duration_seconds)
        .collect();
    ensure!(
        kept == vec![10.0, 11.0, 12.0, 11.0],
        "filter_outliers kept {kept:?}"
    );

    let mut p = SimulationProfile::new(3, 100, 2024);
    for a in &mut p.actors {
        a.curve = LearningCurve {
            initial_seconds: 60.0,
            floor_seconds: 20.0,
            decay: 10.0,
        };
    }
    let events = simulate(&p, &catalog()).map_err(|e| e.to_string())?;
    let durations = segment_durations(&events);
    ensure!(
        durations.len() == 300,
        "expected 300 completions, got {}",
        durations.len()
    );
    let mut tails = Vec::new();
    for (actor, curve) in completion_curves(&durations, 10) {
        let means: Vec<f64> = curve.iter().map(|b| b.mean_seconds).collect();
        ensure!(means.len() == 10, "{actor}: {} batches", means.len());
        ensure!(
            means.windows(2).all(|w| w[1] < w[0]),
            "{actor}: not strictly decreasing {means:?}"
        );
        let tail = *means.last().unwrap();
        ensure!((tail - 20.0).abs() < 1.0, "{actor}: tail {tail}");
        tails.push(format!("{tail:.3}"));
    }
    Ok(format!(
        "[(1,30.0),(2,10.0)], removed {{300}}, tails {}",
        tails.join("/")
    ))
}

// Switch-stats inversion

fn switch_inversion() -> Check {
    let target = [15.5, 33.77, 4.5, 13.14, 60.8];
    let mut p = SimulationProfile::new(3, 400, 77);
    p.switch_targets.push(SwitchTarget {
        kind: SegmentKind::IP,
        switches: 200,
        percentages: target,
    });
    let events = simulate(&p, &catalog()).map_err(|e| e.to_string())?;
    let stats = switch_stats(&events);
    let row = stats.row("IP").ok_or("no IP row")?;
    ensure!(row.switches == 200, "IP switches {}", row.switches);
    let got = [
        row.pct_start_input,
        row.pct_end_input,
        row.pct_start_correction,
        row.pct_end_correction,
        row.pct_checking,
    ];
    for (i, (g, t)) in got.iter().zip(target).enumerate() {
        ensure!(
            (g - t).abs() <= 0.5,
            "{:?}: {g} vs {t}",
            SwitchCategory::ALL[i]
        );
    }
    Ok(format!(
        "IP 200 switches: {}",
        got.iter()
            .map(|g| format!("{g:.2}"))
            .collect::<Vec<_>>()
            .join(", ")
    ))
}

// Rating workflow

#[derive(Clone, Copy, PartialEq, Debug)]
enum MStatus {
    Unsegmented,
    Valid,
    NeedsCorrection,
}

#[derive(Clone, Copy, PartialEq, Debug)]
enum MAssign {
    Pending,
    Completed,
    Retired,
}

struct MVideo {
    status: MStatus,
    round: u32,
    flagged: bool,
}

struct MAssignment {
    video: VideoKey,
    rater: String,
    round: u32,
    status: MAssign,
}

/// Straightforward reference model of the rating desk.
#[derive(Default)]
struct Model {
    videos: BTreeMap<VideoKey, MVideo>,
    assignments: BTreeMap<u64, MAssignment>,
}

impl Model {
    fn completed(&self, v: &VideoKey) -> usize {
        let round = self.videos[v].round;
        self.assignments
            .values()
            .filter(|a| &a.video == v && a.round == round && a.status == MAssign::Completed)
            .count()
    }

    fn fully_rated(&self, v: &VideoKey) -> bool {
        self.videos[v].status == MStatus::Valid && self.completed(v) == 2
    }

    fn flag(&mut self, v: &VideoKey) {
        let video = self.videos.get_mut(v).unwrap();
        video.flagged = true;
        if video.status == MStatus::Valid {
            video.status = MStatus::NeedsCorrection;
            let round = video.round;
            for a in self.assignments.values_mut() {
                if &a.video == v && a.round == round {
                    a.status = MAssign::Retired;
                }
            }
        }
    }
}

fn answers_for(desk: &RatingDesk, task: u8, score: u8) -> BTreeMap<String, Answer> {
    let c = catalog();
    let task = c.task(task).unwrap();
    desk.form()
        .questions_for(task)
        .filter(|q| q.required && q.answer_type == AnswerType::Ordinal)
        .map(|q| (q.id.clone(), Answer::Ordinal(score)))
        .collect()
}

fn submission(
    desk: &RatingDesk,
    id: u64,
    task: u8,
    score: u8,
    problem: Option<&str>,
) -> RatingSubmission {
    RatingSubmission {
        assignment_id: AssignmentId(id),
        task_score: score,
        answers: answers_for(desk, task, score.min(3)),
        segmentation_problem: problem.map(str::to_string),
    }
}

fn compare(desk: &RatingDesk, m: &Model, ctx: &str) -> Result<(), String> {
    for (v, mv) in &m.videos {
        let full = desk.is_fully_rated(v);
        ensure!(full == m.fully_rated(v), "{ctx}: fully_rated({v}) = {full}");
        if full {
            ensure!(
                m.completed(v) == 2,
                "{ctx}: {v} fully rated with {} ratings",
                m.completed(v)
            );
        }
        let status = desk
            .video_status(v)
            .ok_or(format!("{ctx}: {v} unknown to desk"))?;
        ensure!(
            status.round == mv.round,
            "{ctx}: {v} round {}",
            status.round
        );
    }
    let queue: Vec<VideoKey> = m
        .videos
        .iter()
        .filter(|(v, s)| s.status == MStatus::Valid && !m.fully_rated(v))
        .map(|(v, _)| v.clone())
        .collect();
    ensure!(
        desk.ratable_queue() == queue,
        "{ctx}: ratable queue differs"
    );
    for v in desk.ratable_queue() {
        ensure!(
            m.videos[&v].status != MStatus::NeedsCorrection,
            "{ctx}: flagged {v} in queue"
        );
    }

    let mut active: BTreeMap<(VideoKey, u32), Vec<String>> = BTreeMap::new();
    let mut seen = 0;
    for a in desk.assignments() {
        let ma = m
            .assignments
            .get(&a.assignment_id.0)
            .ok_or(format!("{ctx}: unexpected assignment {}", a.assignment_id))?;
        let status = match a.status {
            segrate_core::rating::AssignmentStatus::Pending => MAssign::Pending,
            segrate_core::rating::AssignmentStatus::Completed => MAssign::Completed,
            segrate_core::rating::AssignmentStatus::Retired => MAssign::Retired,
        };
        ensure!(
            status == ma.status && a.rater_id == ma.rater,
            "{ctx}: assignment {} differs",
            a.assignment_id
        );
        if status != MAssign::Retired {
            active
                .entry((a.video.clone(), a.round))
                .or_default()
                .push(a.rater_id.clone());
        }
        seen += 1;
    }
    ensure!(
        seen == m.assignments.len(),
        "{ctx}: assignment count differs"
    );
    for ((v, round), raters) in &active {
        let distinct: BTreeSet<&String> = raters.iter().collect();
        ensure!(
            distinct.len() == raters.len(),
            "{ctx}: {v} round {round} double-assigned {raters:?}"
        );
    }

    let segmented = m
        .videos
        .values()
        .filter(|v| v.status != MStatus::Unsegmented)
        .count();
    let fully = m.videos.keys().filter(|v| m.fully_rated(v)).count();
    let flagged = m.videos.values().filter(|v| v.flagged).count();
    let pct = |a: usize, b: usize| {
        if b == 0 {
            0.0
        } else {
            100.0 * a as f64 / b as f64
        }
    };
    let p = desk.progress();
    ensure!(
        p.videos_total == m.videos.len()
            && p.videos_segmented == segmented
            && p.videos_fully_rated == fully
            && p.videos_flagged == flagged
            && p.percent_rated == pct(fully, segmented)
            && p.percent_flagged == pct(flagged, fully)
            && p.empty == (segmented == 0),
        "{ctx}: progress {p:?} vs scan ({}, {segmented}, {fully}, {flagged})",
        m.videos.len()
    );
    Ok(())
}

fn run_history(seed: u64, desk: &mut RatingDesk) -> Result<Model, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let videos: Vec<VideoKey> = (1..=3)
        .flat_map(|p| [1u8, 7].map(|t| VideoKey::new(format!("P{p}"), Hand::Right, t)))
        .collect();
    let pool: Vec<String> = (1..=4).map(|i| format!("r{i}")).collect();
    let mut m = Model::default();
    for step in 0..80 {
        let at = Millis(step);
        let ctx = format!("history {seed} step {step}");
        match rng.random_range(0..10) {
            0 => {
                let v = videos.choose(&mut rng).unwrap().clone();
                desk.register_video(v.clone())
                    .map_err(|e| format!("{ctx}: {e}"))?;
                m.videos.entry(v).or_insert(MVideo {
                    status: MStatus::Unsegmented,
                    round: 0,
                    flagged: false,
                });
            }
            1 | 2 => {
                let v = videos.choose(&mut rng).unwrap().clone();
                desk.record_valid_segmentation(v.clone(), Some("seg1".into()), at)
                    .map_err(|e| format!("{ctx}: {e}"))?;
                let mv = m.videos.entry(v).or_insert(MVideo {
                    status: MStatus::Unsegmented,
                    round: 0,
                    flagged: false,
                });
                match mv.status {
                    MStatus::Unsegmented => mv.status = MStatus::Valid,
                    MStatus::NeedsCorrection => {
                        mv.status = MStatus::Valid;
                        mv.round += 1;
                    }
                    MStatus::Valid => {}
                }
            }
            3 | 4 => {
                let v = videos.choose(&mut rng).unwrap().clone();
                let ok = m.videos.get(&v).is_some_and(|mv| {
                    mv.status == MStatus::Valid
                        && !m.assignments.values().any(|a| {
                            a.video == v && a.round == mv.round && a.status != MAssign::Retired
                        })
                });
                match desk.assign(&v, &pool, at) {
                    Ok(list) => {
                        ensure!(ok, "{ctx}: assign of {v} should fail");
                        ensure!(list.len() == 2, "{ctx}: {} raters", list.len());
                        ensure!(
                            list[0].rater_id != list[1].rater_id,
                            "{ctx}: same rater twice"
                        );
                        for a in list {
                            ensure!(pool.contains(&a.rater_id), "{ctx}: rater outside pool");
                            m.assignments.insert(
                                a.assignment_id.0,
                                MAssignment {
                                    video: v.clone(),
                                    rater: a.rater_id,
                                    round: m.videos[&v].round,
                                    status: MAssign::Pending,
                                },
                            );
                        }
                    }
                    Err(e) => ensure!(!ok, "{ctx}: assign of {v} failed: {e}"),
                }
            }
            5..=7 => {
                let Some((&id, a)) = m
                    .assignments
                    .iter()
                    .nth(rng.random_range(0..m.assignments.len().max(1)))
                else {
                    continue;
                };
                let owner = rng.random_bool(0.85);
                let rater = if owner {
                    a.rater.clone()
                } else {
                    format!("{}x", a.rater)
                };
                let bad_score = rng.random_bool(0.05);
                let problem = rng.random_bool(0.2).then_some("T video is too long");
                let v = a.video.clone();
                let sub = submission(
                    desk,
                    id,
                    v.task_number,
                    if bad_score { 4 } else { 2 },
                    problem,
                );
                let res = desk.submit_rating(&rater, sub, at);
                match (owner, a.status, bad_score, res) {
                    (false, _, _, Err(RatingError::NotYourAssignment { .. })) => {}
                    (true, MAssign::Completed, _, Err(RatingError::AlreadyCompleted(_))) => {}
                    (true, MAssign::Retired, _, Err(RatingError::AssignmentRetired(_))) => {}
                    (true, MAssign::Pending, true, Err(RatingError::ScoreOutOfRange(4))) => {}
                    (true, MAssign::Pending, false, Ok(outcome)) => {
                        m.assignments.get_mut(&id).unwrap().status = MAssign::Completed;
                        if problem.is_some() {
                            ensure!(outcome.flag.is_some(), "{ctx}: problem text not flagged");
                            m.flag(&v);
                        }
                        ensure!(
                            outcome.fully_rated == m.fully_rated(&v),
                            "{ctx}: outcome fully_rated"
                        );
                    }
                    (o, s, b, r) => {
                        return Err(format!("{ctx}: submit owner={o} {s:?} bad={b} -> {r:?}"))
                    }
                }
            }
            _ => {
                let Some((&id, a)) = m
                    .assignments
                    .iter()
                    .nth(rng.random_range(0..m.assignments.len().max(1)))
                else {
                    continue;
                };
                let owner = rng.random_bool(0.9);
                let rater = if owner {
                    a.rater.clone()
                } else {
                    format!("{}x", a.rater)
                };
                let mv = &m.videos[&a.video];
                let stale = a.round != mv.round && mv.status == MStatus::Valid;
                let v = a.video.clone();
                match desk.flag_segmentation_problem(
                    &rater,
                    AssignmentId(id),
                    "IP too short",
                    None,
                    at,
                ) {
                    Ok(_) => {
                        ensure!(owner && !stale, "{ctx}: flag should fail");
                        m.flag(&v);
                    }
                    Err(e) => ensure!(!owner || stale, "{ctx}: flag failed: {e}"),
                }
            }
        }
        compare(desk, &m, &ctx)?;
    }
    Ok(m)
}

fn rating_workflow() -> Check {
    for seed in 0..200u64 {
        let mut desk = RatingDesk::in_memory(catalog(), RatingForm::default(), 2);
        run_history(seed, &mut desk)?;
    }
    for seed in 200..205u64 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let mut desk = RatingDesk::open(dir.path(), catalog(), RatingForm::default(), 2)
            .map_err(|e| e.to_string())?;
        let m = run_history(seed, &mut desk)?;
        let replayed = RatingDesk::open(dir.path(), catalog(), RatingForm::default(), 2)
            .map_err(|e| e.to_string())?;
        compare(&replayed, &m, &format!("replay {seed}"))?;
    }

    let mut desk = RatingDesk::in_memory(catalog(), RatingForm::default(), 2);
    let pool: Vec<String> = (1..=10).map(|i| format!("r{i:02}")).collect();
    let rate_all = |desk: &mut RatingDesk, v: &VideoKey| -> Result<(), String> {
        let list = desk
            .assign(v, &pool, Millis(0))
            .map_err(|e| e.to_string())?;
        for a in list {
            let sub = submission(desk, a.assignment_id.0, v.task_number, 2, None);
            desk.submit_rating(&a.rater_id, sub, Millis(1))
                .map_err(|e| e.to_string())?;
        }
        Ok(())
    };
    for i in 0..760u32 {
        let v = VideoKey::new(
            format!("P{:03}", i / 19 + 1),
            Hand::Left,
            (i % 19) as u8 + 1,
        );
        desk.record_valid_segmentation(v.clone(), Some("seg1".into()), Millis(0))
            .map_err(|e| e.to_string())?;
        if i < 700 {
            rate_all(&mut desk, &v)?;
        }
        if i < 28 {
            let a = desk.assignments().find(|a| a.video == v).unwrap().clone();
            desk.flag_segmentation_problem(
                &a.rater_id,
                a.assignment_id,
                "T video is too long",
                None,
                Millis(2),
            )
            .map_err(|e| e.to_string())?;
            desk.record_valid_segmentation(v.clone(), Some("seg1".into()), Millis(3))
                .map_err(|e| e.to_string())?;
            rate_all(&mut desk, &v)?;
        }
    }
    let p = desk.progress();
    let rated = format!("{:.1}", p.percent_rated);
    let flagged = format!("{:.1}", p.percent_flagged);
    ensure!(
        (p.videos_segmented, p.videos_fully_rated, p.videos_flagged) == (760, 700, 28),
        "fixture counts {p:?}"
    );
    ensure!(
        rated == "92.1" && flagged == "4.0",
        "fixture reports {rated}% rated, {flagged}% flagged"
    );
    Ok(format!(
        "200 histories match model; fixture {rated}% rated, {flagged}% flagged"
    ))
}

// Capture gating

type CaptureKey = (Phase, bool, Vec<CameraStatus>, Option<u8>, usize);

fn capture_key(s: &CaptureSession) -> CaptureKey {
    (
        s.phase,
        s.calibration_ref.is_some(),
        s.camera_status.values().copied().collect(),
        s.recording_in_progress().map(|r| r.task_number),
        s.recordings.len().min(2),
    )
}

fn capture_invariants(s: &CaptureSession) -> Result<(), String> {
    if s.phase == Phase::Administration {
        ensure!(
            s.calibration_ref.is_some(),
            "administration without calibration: {s:?}"
        );
        ensure!(
            s.all_cameras_ok(),
            "administration without four camera-ok: {s:?}"
        );
    }
    let running = s.recordings.iter().filter(|r| r.in_progress()).count();
    ensure!(running <= 1, "{running} recordings in progress");
    Ok(())
}

fn capture_gating() -> Check {
    let mut desk = CaptureDesk::in_memory(Box::new(StubRig));
    let date = chrono::NaiveDate::from_ymd_opt(2024, 3, 1).unwrap();
    let fresh = desk
        .begin_session("P1", Hand::Left, date)
        .map_err(|e| e.to_string())?;
    let id = fresh.session_id.clone();
    desk.update(&id, |s, _| s.mark_calibrated("cal"))
        .map_err(|e| e.to_string())?;
    let inherited = desk
        .begin_session("P2", Hand::Right, date)
        .map_err(|e| e.to_string())?;
    ensure!(
        inherited.calibration_inherited,
        "second session did not inherit calibration"
    );

    let rig = StubRig;
    let mut queue: VecDeque<(CaptureSession, i64)> = VecDeque::new();
    let mut seen: HashSet<CaptureKey> = HashSet::new();
    for root in [fresh, inherited] {
        capture_invariants(&root)?;
        seen.insert(capture_key(&root));
        queue.push_back((root, 1));
    }
    let mut transitions = 0usize;
    let mut admin_states = 0usize;
    while let Some((s, depth)) = queue.pop_front() {
        if s.phase == Phase::Administration {
            admin_states += 1;
        }
        let at = Millis(depth * 1000);
        let mut next: Vec<CaptureSession> = Vec::new();
        let mut apply = |f: &dyn Fn(&mut CaptureSession) -> bool| {
            let mut c = s.clone();
            if f(&mut c) {
                next.push(c);
            }
        };
        apply(&|c| c.mark_calibrated("cal").is_ok());
        apply(&|c| c.mark_calibrated("").is_ok());
        for v in CameraView::ALL {
            for st in [CameraStatus::Ok, CameraStatus::Failed] {
                apply(&|c| c.check_camera(v, st).is_ok());
            }
        }
        for task in [1u8, 2] {
            apply(&|c| {
                let before = c.phase;
                let ok = c.start_task(task, at).is_ok();
                assert!(
                    !ok || before == Phase::Administration,
                    "recording started in {before:?}"
                );
                ok
            });
        }
        apply(&|c| c.stop_task(at, &rig).is_ok());
        apply(&|c| c.record_preliminary(1, 2, None).is_ok());
        apply(&|c| c.close().is_ok());
        for c in next {
            transitions += 1;
            capture_invariants(&c)?;
            if seen.insert(capture_key(&c)) {
                queue.push_back((c, depth + 1));
            }
        }
    }
    ensure!(admin_states > 0, "administration never reached");

    let mut rng = ChaCha8Rng::seed_from_u64(10_000);
    let mut ready = desk.session(&id).map_err(|e| e.to_string())?.clone();
    for v in CameraView::ALL {
        ready
            .check_camera(v, CameraStatus::Ok)
            .map_err(|e| e.to_string())?;
    }
    ensure!(
        ready.phase == Phase::Administration,
        "ready session in {:?}",
        ready.phase
    );
    for i in 0..10_000 {
        let mut s = ready.clone();
        let start = rng.random_range(1_600_000_000_000i64..1_900_000_000_000);
        let stop = start + rng.random_range(-5_000i64..600_000);
        s.start_task((i % 19) as u8 + 1, Millis(start))
            .map_err(|e| e.to_string())?;
        match s.stop_task(Millis(stop), &rig) {
            Ok(r) => {
                ensure!(stop > start, "accepted stop {stop} <= start {start}");
                let timer_ms = r.timer_ms.ok_or("no timer")?;
                let secs = r.timer_seconds.ok_or("no timer seconds")?;
                ensure!(
                    timer_ms == stop - start,
                    "timer {timer_ms} != {}",
                    stop - start
                );
                ensure!(
                    (secs * 1000.0 - (stop - start) as f64).abs() <= 1.0,
                    "timer {secs}s"
                );
            }
            Err(e) => ensure!(stop <= start, "stop rejected: {e}"),
        }
    }
    Ok(format!(
        "{} abstract states, {transitions} transitions, {admin_states} in administration; 10000 timers exact",
        seen.len()
    ))
}

// API equivalence

async fn http(app: &axum::Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (
        status,
        resp.into_body()
            .collect()
            .await
            .unwrap()
            .to_bytes()
            .to_vec(),
    )
}

async fn api_equivalence_async() -> Check {
    let actors = ["seg1", "seg2", "seg3"];
    let tokens = actors
        .iter()
        .map(|a| (format!("tok-{a}"), a.to_string()))
        .collect();
    let c = catalog();
    let app = router(AppState::in_memory(
        c.clone(),
        RatingForm::default(),
        2,
        vec![],
        tokens,
    ));
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut keys = Vec::new();
    for case in 0..100u32 {
        let key = StreamKey {
            actor_id: actors[case as usize % 3].into(),
            patient_id: format!("A{}", case / 3),
            hand: if case % 2 == 0 {
                Hand::Left
            } else {
                Hand::Right
            },
            task_number: rng.random_range(1..=19),
        };
        let steps = rng.random_range(1..60);
        let stream = random_stream(&mut rng, &key, &c, steps, DEFAULT_START);
        let req = Request::post("/events")
            .header(TOKEN_HEADER, format!("tok-{}", key.actor_id))
            .header("content-type", "application/json")
            .body(Body::from(json!(stream).to_string()))
            .unwrap();
        let (status, body) = http(&app, req).await;
        ensure!(
            status == StatusCode::CREATED,
            "case {case}: POST {status} {}",
            String::from_utf8_lossy(&body)
        );
        keys.push((key, stream));
    }
    for (case, (key, stream)) in keys.iter().enumerate() {
        let uri = format!(
            "/segments?patient={}&task={}&hand={}&actor={}",
            key.patient_id, key.task_number, key.hand, key.actor_id
        );
        let get = || {
            Request::get(&uri)
                .header(TOKEN_HEADER, "tok-seg1")
                .body(Body::empty())
                .unwrap()
        };
        let (status, first) = http(&app, get()).await;
        ensure!(status == StatusCode::OK, "case {case}: GET {status}");
        let (_, second) = http(&app, get()).await;
        ensure!(first == second, "case {case}: repeated GET differs");
        let v: Value = serde_json::from_slice(&first).unwrap();
        let streams = v["streams"].as_array().unwrap();
        ensure!(streams.len() == 1, "case {case}: {} streams", streams.len());
        let expected = fold_state(stream, c.expected_sequence(key.task_number).unwrap()).unwrap();
        ensure!(
            streams[0]["records"] == json!(expected),
            "case {case}: API fold differs from in-process fold"
        );
    }
    Ok("100 streams: GET /segments = fold_state, repeated GETs byte-identical".into())
}

fn api_equivalence() -> Check {
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    rt.block_on(api_equivalence_async())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        (
            "Narrative round-trip",
            Some(Duration::from_secs(1)),
            narrative_round_trip,
        ),
        (
            "Overlap oracle",
            Some(Duration::from_secs(10)),
            overlap_oracle,
        ),
        ("Fold determinism", None, fold_determinism),
        (
            "Analytics fixtures",
            Some(Duration::from_secs(30)),
            analytics_fixtures,
        ),
        ("Switch-stats inversion", None, switch_inversion),
        ("Rating workflow", None, rating_workflow),
        ("Capture gating", None, capture_gating),
        ("API equivalence", None, api_equivalence),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, limit, check) in criteria {
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = started.elapsed();
        let result = match (result, limit) {
            (Ok(_), Some(l)) if elapsed > l => Err(format!("took {elapsed:.2?}, limit {l:?}")),
            (r, _) => r,
        };
        match result {
            Ok(detail) => println!("[PASS] {name} ({elapsed:.2?}): {detail}"),
            Err(reason) => {
                failed += 1;
                println!("[FAIL] {name} ({elapsed:.2?}): {reason}");
            }
        }
    }
    println!("{} of 8 criteria passed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
