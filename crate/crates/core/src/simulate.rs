//! Deterministic synthetic annotator streams.
//!
//! [`simulate`] produces event streams for a set of simulated segmentors. Segment
//! completion times follow each actor's learning curve
//! `d(i) = floor + (initial - floor) * exp(-i / decay)` for the i-th completed
//! segment. Camera switches are placed either at random, by per-kind propensity,
//! or to hit exact per-category counts given as [`SwitchTarget`]s.
//!
//! [`random_stream`] produces messier single streams (repeated edits, partial
//! confirms, stray camera selections) for property tests.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::SwitchCategory;
use crate::catalog::{CameraView, Catalog, SegmentKind, SegmentSlot};
use crate::common::{Hand, Millis, LAST_TASK};
use crate::events::{EventAction, EventDraft, StreamKey};

/// 2024-01-01T00:00:00Z.
pub const DEFAULT_START: Millis = Millis(1_704_067_200_000);

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("infeasible target for {kind}: {reason}")]
    Infeasible { kind: SegmentKind, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub initial_seconds: f64,
    pub floor_seconds: f64,
    pub decay: f64,
}

impl LearningCurve {
    pub fn seconds(&self, index: usize) -> f64 {
        self.floor_seconds
            + (self.initial_seconds - self.floor_seconds) * (-(index as f64) / self.decay).exp()
    }
}

impl Default for LearningCurve {
    fn default() -> Self {
        LearningCurve {
            initial_seconds: 60.0,
            floor_seconds: 20.0,
            decay: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorProfile {
    pub actor_id: String,
    pub curve: LearningCurve,
    /// Relative uniform noise on each duration, e.g. 0.1 for +-10%.
    #[serde(default)]
    pub jitter: f64,
}

/// Exact category counts for the first `switches` instances of `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchTarget {
    pub kind: SegmentKind,
    pub switches: usize,
    /// Percentages in [`SwitchCategory::ALL`] order.
    pub percentages: [f64; 5],
}

impl SwitchTarget {
    /// Rounded member counts per category.
    pub fn counts(&self) -> [usize; 5] {
        self.percentages
            .map(|p| (p / 100.0 * self.switches as f64).round() as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationProfile {
    pub seed: u64,
    pub actors: Vec<ActorProfile>,
    pub segments_per_actor: usize,
    /// Chance that a segment instance of the kind hosts a camera switch.
    pub switch_propensity: BTreeMap<SegmentKind, f64>,
    /// Chance that a frame input is entered wrong and corrected.
    pub correction_rate: f64,
    /// Chance of a playback cross-check.
    pub checking_rate: f64,
    /// Chance that a frame outside a switch window is entered on a non-recommended view.
    pub off_view_rate: f64,
    #[serde(default)]
    pub switch_targets: Vec<SwitchTarget>,
    pub start: Millis,
}

impl SimulationProfile {
    /// `actors` segmentors named `seg1`.. sharing the default curve, with moderate switching.
    pub fn new(actors: usize, segments_per_actor: usize, seed: u64) -> Self {
        SimulationProfile {
            seed,
            actors: (1..=actors)
                .map(|i| ActorProfile {
                    actor_id: format!("seg{i}"),
                    curve: LearningCurve::default(),
                    jitter: 0.0,
                })
                .collect(),
            segments_per_actor,
            switch_propensity: SegmentKind::ALL.into_iter().map(|k| (k, 0.15)).collect(),
            correction_rate: 0.1,
            checking_rate: 0.3,
            off_view_rate: 0.05,
            switch_targets: Vec::new(),
            start: DEFAULT_START,
        }
    }

    /// No switches, corrections, checks or off-view entries.
    pub fn quiet(mut self) -> Self {
        for p in self.switch_propensity.values_mut() {
            *p = 0.0;
        }
        self.correction_rate = 0.0;
        self.checking_rate = 0.0;
        self.off_view_rate = 0.0;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidProfile(m));
        if self.actors.is_empty() {
            return bad("at least one actor required".into());
        }
        let mut ids = BTreeSet::new();
        for a in &self.actors {
            if a.actor_id.trim().is_empty() || !ids.insert(&a.actor_id) {
                return bad(format!("actor id `{}` empty or repeated", a.actor_id));
            }
            let c = a.curve;
            if !(c.floor_seconds > 0.0 && c.initial_seconds >= c.floor_seconds && c.decay > 0.0) {
                return bad(format!(
                    "{}: need floor > 0, initial >= floor, decay > 0",
                    a.actor_id
                ));
            }
            if !(0.0..1.0).contains(&a.jitter) {
                return bad(format!("{}: jitter must be in [0, 1)", a.actor_id));
            }
        }
        let probs = self.switch_propensity.values().chain([
            &self.correction_rate,
            &self.checking_rate,
            &self.off_view_rate,
        ]);
        for p in probs {
            if !(0.0..=1.0).contains(p) {
                return bad(format!("probability {p} outside [0, 1]"));
            }
        }
        let mut kinds = BTreeSet::new();
        for t in &self.switch_targets {
            if !kinds.insert(t.kind) {
                return bad(format!("two targets for {}", t.kind));
            }
            if let Some(p) = t.percentages.iter().find(|p| !(0.0..=100.0).contains(*p)) {
                return Err(SimError::Infeasible {
                    kind: t.kind,
                    reason: format!("percentage {p} outside [0, 100]"),
                });
            }
        }
        Ok(())
    }
}

fn actor_seed(master: u64, index: usize) -> u64 {
    master ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn alternate_view(avoid: CameraView, rng: &mut ChaCha8Rng) -> CameraView {
    let others: Vec<CameraView> = CameraView::ALL
        .into_iter()
        .filter(|v| *v != avoid)
        .collect();
    others[rng.random_range(0..others.len())]
}

/// One planned segment instance.
struct Planned {
    stream: StreamKey,
    slot: SegmentSlot,
    completion_index: usize,
    switch: Option<BTreeSet<SwitchCategory>>,
}

fn plan(profile: &SimulationProfile, catalog: &Catalog) -> Vec<Vec<Vec<Planned>>> {
    profile
        .actors
        .iter()
        .map(|actor| {
            let mut tasks: Vec<Vec<Planned>> = Vec::new();
            let mut done = 0;
            let mut t = 0usize;
            while done < profile.segments_per_actor {
                let task_number = (t % LAST_TASK as usize) as u8 + 1;
                let round = t / LAST_TASK as usize;
                let stream = StreamKey {
                    actor_id: actor.actor_id.clone(),
                    patient_id: format!("P{:03}", round / 2 + 1),
                    hand: if round.is_multiple_of(2) {
                        Hand::Left
                    } else {
                        Hand::Right
                    },
                    task_number,
                };
                let sequence = catalog.expected_sequence(task_number).unwrap_or(&[]);
                let mut items = Vec::new();
                for slot in sequence {
                    if done == profile.segments_per_actor {
                        break;
                    }
                    done += 1;
                    items.push(Planned {
                        stream: stream.clone(),
                        slot: *slot,
                        completion_index: done,
                        switch: None,
                    });
                }
                tasks.push(items);
                t += 1;
            }
            tasks
        })
        .collect()
}

fn assign_targets(
    plans: &mut [Vec<Vec<Planned>>],
    targets: &[SwitchTarget],
    rng: &mut ChaCha8Rng,
) -> Result<(), SimError> {
    for target in targets {
        let mut hosts: Vec<&mut Planned> = plans
            .iter_mut()
            .flatten()
            .flatten()
            .filter(|p| p.slot.kind() == target.kind)
            .collect();
        if hosts.len() < target.switches {
            return Err(SimError::Infeasible {
                kind: target.kind,
                reason: format!(
                    "{} switches requested, only {} instances simulated",
                    target.switches,
                    hosts.len()
                ),
            });
        }
        hosts.truncate(target.switches);
        for h in hosts.iter_mut() {
            h.switch = Some(BTreeSet::new());
        }
        for (cat, n) in SwitchCategory::ALL.into_iter().zip(target.counts()) {
            let mut order: Vec<usize> = (0..target.switches).collect();
            order.shuffle(rng);
            for &j in &order[..n] {
                hosts[j].switch.as_mut().expect("host").insert(cat);
            }
        }
    }
    Ok(())
}

struct Renderer<'a> {
    catalog: &'a Catalog,
    profile: &'a SimulationProfile,
    actor: &'a ActorProfile,
    rng: ChaCha8Rng,
    now: Millis,
    cursor: u32,
    out: Vec<EventDraft>,
}

impl Renderer<'_> {
    fn off_view(&mut self, recommended: CameraView) -> CameraView {
        if self.rng.random_bool(self.profile.off_view_rate) {
            alternate_view(recommended, &mut self.rng)
        } else {
            recommended
        }
    }

    fn random_categories(&mut self) -> BTreeSet<SwitchCategory> {
        let p = self.profile;
        let chances = [
            0.5,
            0.5,
            p.correction_rate,
            p.correction_rate,
            p.checking_rate,
        ];
        SwitchCategory::ALL
            .into_iter()
            .zip(chances)
            .filter(|(_, c)| self.rng.random_bool(*c))
            .map(|(cat, _)| cat)
            .collect()
    }

    fn render_task(&mut self, items: &[Planned], submit: bool) {
        let mut active: Option<CameraView> = None;
        for item in items {
            self.render_slot(item, &mut active);
            self.now = self.now.plus_ms(2_000);
        }
        if submit {
            if let Some(last) = items.last() {
                self.out.push(EventDraft::new(
                    &last.stream,
                    self.now,
                    last.slot,
                    EventAction::SubmitTask,
                ));
            }
        }
        self.now = self.now.plus_ms(10_000);
    }

    fn render_slot(&mut self, item: &Planned, active: &mut Option<CameraView>) {
        use EventAction::*;
        let recommended = self
            .catalog
            .recommended_view(item.stream.task_number, item.slot)
            .unwrap_or(CameraView::Ipsilateral);
        let len = self.rng.random_range(15..90);
        let (start, end) = (self.cursor, self.cursor + len);
        self.cursor = end;

        let switch = match &item.switch {
            Some(cats) => Some(cats.clone()),
            None => {
                let has_targets = self
                    .profile
                    .switch_targets
                    .iter()
                    .any(|t| t.kind == item.slot.kind());
                let p = self
                    .profile
                    .switch_propensity
                    .get(&item.slot.kind())
                    .copied()
                    .unwrap_or(0.0);
                (!has_targets && self.rng.random_bool(p)).then(|| self.random_categories())
            }
        };

        // (action, camera, frame)
        let mut steps: Vec<(EventAction, Option<CameraView>, Option<u32>)> = Vec::new();
        let wrong = |v: u32, hi: bool| {
            if hi {
                v + 3
            } else {
                v.saturating_sub(3).max(1)
            }
        };
        match switch {
            None => {
                let v = self.off_view(recommended);
                if self.rng.random_bool(self.profile.correction_rate) {
                    steps.push((SetStartFrame, Some(v), Some(wrong(start, false))));
                    steps.push((CorrectStartFrame, Some(v), Some(start)));
                } else {
                    steps.push((SetStartFrame, Some(v), Some(start)));
                }
                let v = self.off_view(recommended);
                if self.rng.random_bool(self.profile.correction_rate) {
                    steps.push((SetEndFrame, Some(v), Some(wrong(end, true))));
                    steps.push((CorrectEndFrame, Some(v), Some(end)));
                } else {
                    steps.push((SetEndFrame, Some(v), Some(end)));
                }
                if self.rng.random_bool(self.profile.checking_rate) {
                    steps.push((PlaybackCheck, None, None));
                }
                for (_, cam, _) in &steps {
                    if cam.is_some() {
                        *active = *cam;
                    }
                }
            }
            Some(cats) => {
                let has = |c: SwitchCategory| cats.contains(&c);
                let start_first = if has(SwitchCategory::StartCorrection) {
                    wrong(start, false)
                } else {
                    start
                };
                let end_first = if has(SwitchCategory::EndCorrection) {
                    wrong(end, true)
                } else {
                    end
                };
                if !has(SwitchCategory::StartInput) {
                    steps.push((SetStartFrame, Some(recommended), Some(start_first)));
                    *active = Some(recommended);
                }
                if !has(SwitchCategory::EndInput) {
                    steps.push((SetEndFrame, Some(recommended), Some(end_first)));
                    *active = Some(recommended);
                }
                let from = match *active {
                    Some(v) => v,
                    None => {
                        steps.insert(0, (SelectCamera, Some(recommended), None));
                        recommended
                    }
                };
                let to = alternate_view(from, &mut self.rng);
                steps.push((SelectCamera, Some(to), None));
                if has(SwitchCategory::StartInput) {
                    steps.push((SetStartFrame, Some(to), Some(start_first)));
                }
                if has(SwitchCategory::EndInput) {
                    steps.push((SetEndFrame, Some(to), Some(end_first)));
                }
                if has(SwitchCategory::StartCorrection) {
                    steps.push((CorrectStartFrame, Some(to), Some(start)));
                }
                if has(SwitchCategory::EndCorrection) {
                    steps.push((CorrectEndFrame, Some(to), Some(end)));
                }
                if has(SwitchCategory::Checking) {
                    steps.push((PlaybackCheck, None, None));
                }
                steps.push((SelectCamera, Some(to), None));
                *active = Some(to);
            }
        }
        steps.push((ConfirmSegment, None, None));

        let base = self.actor.curve.seconds(item.completion_index);
        let noise = if self.actor.jitter > 0.0 {
            1.0 + self.rng.random_range(-self.actor.jitter..self.actor.jitter)
        } else {
            1.0
        };
        let span = ((base * noise * 1000.0).round() as i64).max(steps.len() as i64);
        let last = (steps.len() - 1) as i64;
        let t0 = self.now;
        for (k, (action, camera, frame)) in steps.into_iter().enumerate() {
            let at = t0.plus_ms((k as i64 * span + last / 2) / last);
            let mut d = EventDraft::new(&item.stream, at, item.slot, action);
            d.camera = camera;
            d.frame_value = frame;
            self.out.push(d);
        }
        self.now = t0.plus_ms(span);
    }
}

/// Generates all actors' streams. Output is grouped by actor, each in time order.
pub fn simulate(
    profile: &SimulationProfile,
    catalog: &Catalog,
) -> Result<Vec<EventDraft>, SimError> {
    profile.validate()?;
    let mut plans = plan(profile, catalog);
    let mut master = ChaCha8Rng::seed_from_u64(profile.seed);
    assign_targets(&mut plans, &profile.switch_targets, &mut master)?;

    let mut out = Vec::new();
    for (i, (actor, tasks)) in profile.actors.iter().zip(&plans).enumerate() {
        let mut r = Renderer {
            catalog,
            profile,
            actor,
            rng: ChaCha8Rng::seed_from_u64(actor_seed(profile.seed, i)),
            now: profile.start,
            cursor: 30,
            out: Vec::new(),
        };
        for items in tasks {
            let full = items
                .first()
                .and_then(|p| catalog.expected_sequence(p.stream.task_number).ok())
                .is_some_and(|seq| seq.len() == items.len());
            r.cursor = 30;
            r.render_task(items, full);
        }
        out.extend(r.out);
    }
    Ok(out)
}

/// A valid, messy stream of about `steps` events for one task video. Every slot's
/// last frame edit is followed by a confirm, start frames are set before end
/// frames, and all frames are at least 1, so the stream survives a flat round-trip.
pub fn random_stream(
    rng: &mut impl Rng,
    key: &StreamKey,
    catalog: &Catalog,
    steps: usize,
    start: Millis,
) -> Vec<EventDraft> {
    use EventAction::*;
    let Ok(sequence) = catalog.expected_sequence(key.task_number) else {
        return Vec::new();
    };
    let mut frames: Vec<(Option<u32>, Option<u32>, bool)> =
        vec![(None, None, false); sequence.len()];
    let mut now = start;
    let mut out = Vec::new();
    let view = |rng: &mut dyn rand::RngCore| CameraView::ALL[rng.random_range(0..4)];
    for _ in 0..steps {
        now = now.plus_ms(rng.random_range(0..3_000));
        let i = rng.random_range(0..sequence.len());
        let slot = sequence[i];
        let (s, e, dirty) = &mut frames[i];
        let draft = EventDraft::new(key, now, slot, SelectCamera);
        let roll = rng.random_range(0..10);
        let d = match (*s, *e, roll) {
            (None, _, _) | (Some(_), _, 0 | 1) => {
                let hi = e.map_or(5_000, |e| e - 1);
                let lo = e.map_or(1, |e| e.saturating_sub(80).max(1));
                let v = rng.random_range(lo..=hi);
                let action = if s.is_some() && rng.random_bool(0.5) {
                    CorrectStartFrame
                } else {
                    SetStartFrame
                };
                *s = Some(v);
                *dirty = true;
                EventDraft { action, ..draft }.camera(view(rng)).frame(v)
            }
            (Some(sv), _, 2..=4) => {
                let v = rng.random_range(sv + 1..=sv + 120);
                let action = if e.is_some() && rng.random_bool(0.5) {
                    CorrectEndFrame
                } else {
                    SetEndFrame
                };
                *e = Some(v);
                *dirty = true;
                EventDraft { action, ..draft }.camera(view(rng)).frame(v)
            }
            (_, _, 5) => draft.camera(view(rng)),
            (_, _, 6) => EventDraft {
                action: PlaybackCheck,
                ..draft
            },
            _ => {
                *dirty = false;
                EventDraft {
                    action: ConfirmSegment,
                    ..draft
                }
            }
        };
        out.push(d);
    }
    for (i, (_, _, dirty)) in frames.iter().enumerate() {
        if *dirty {
            now = now.plus_ms(500);
            out.push(EventDraft::new(key, now, sequence[i], ConfirmSegment));
        }
    }
    out
}
