//! ARAT task definitions: per-task segment sequences, recommended camera views
//! and the clinician-authored segment definitions shown to annotators.
//!
//! The catalog lives in a versioned JSON document so that sequences and view
//! preferences can be edited without touching code. See `docs/catalog.md`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::common::{task_in_range, FIRST_TASK, LAST_TASK};

/// Only catalog documents with this `schema_version` are accepted.
pub const CATALOG_SCHEMA_VERSION: u32 = 1;

const DEFAULT_CATALOG: &str = include_str!("../data/default_catalog.json");

/// Movement segment vocabulary used to compose every ARAT task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SegmentKind {
    /// Initiation and progression.
    IP,
    /// Termination.
    T,
    /// Manipulation and transport.
    MTR,
    /// Placement and release.
    PR,
    /// Gross initiation and progression.
    GIP,
    /// Gross termination.
    GT,
}

impl SegmentKind {
    pub const ALL: [SegmentKind; 6] = [
        SegmentKind::IP,
        SegmentKind::T,
        SegmentKind::MTR,
        SegmentKind::PR,
        SegmentKind::GIP,
        SegmentKind::GT,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SegmentKind::IP => "IP",
            SegmentKind::T => "T",
            SegmentKind::MTR => "MTR",
            SegmentKind::PR => "PR",
            SegmentKind::GIP => "GIP",
            SegmentKind::GT => "GT",
        }
    }

    /// GIP and GT only occur in the gross-movement tasks.
    pub fn is_gross(self) -> bool {
        matches!(self, SegmentKind::GIP | SegmentKind::GT)
    }
}

impl fmt::Display for SegmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SegmentKind {
    type Err = CatalogError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SegmentKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| CatalogError::UnknownKind(s.to_string()))
    }
}

/// One position in a task's segment sequence, e.g. `MTR2` for the second MTR.
///
/// Serialized as its display name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SegmentSlot {
    kind: SegmentKind,
    occurrence: u32,
}

impl SegmentSlot {
    pub fn new(kind: SegmentKind, occurrence: u32) -> Result<Self, CatalogError> {
        if occurrence == 0 {
            return Err(CatalogError::ZeroOccurrence(kind));
        }
        Ok(Self { kind, occurrence })
    }

    /// The first occurrence of `kind`.
    pub const fn first(kind: SegmentKind) -> Self {
        Self {
            kind,
            occurrence: 1,
        }
    }

    pub fn kind(&self) -> SegmentKind {
        self.kind
    }

    pub fn occurrence(&self) -> u32 {
        self.occurrence
    }

    pub fn display_name(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for SegmentSlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.occurrence == 1 {
            f.write_str(self.kind.as_str())
        } else {
            write!(f, "{}{}", self.kind.as_str(), self.occurrence)
        }
    }
}

impl FromStr for SegmentSlot {
    type Err = CatalogError;

    /// Parses a display name. `IP` is the first IP; `MTR2` the second MTR.
    /// `IP1` and leading zeros are rejected so that parsing inverts `Display`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let split = s.find(|c: char| c.is_ascii_digit()).unwrap_or(s.len());
        let (name, digits) = s.split_at(split);
        let kind: SegmentKind = name.parse()?;
        if digits.is_empty() {
            return Ok(SegmentSlot::first(kind));
        }
        let bad = || CatalogError::BadSlotName(s.to_string());
        if digits.starts_with('0') || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let occurrence: u32 = digits.parse().map_err(|_| bad())?;
        if occurrence < 2 {
            return Err(bad());
        }
        SegmentSlot::new(kind, occurrence)
    }
}

impl Serialize for SegmentSlot {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SegmentSlot {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The four capture viewpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CameraView {
    Ipsilateral,
    Contralateral,
    Transverse,
    Back,
}

impl CameraView {
    pub const ALL: [CameraView; 4] = [
        CameraView::Ipsilateral,
        CameraView::Contralateral,
        CameraView::Transverse,
        CameraView::Back,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CameraView::Ipsilateral => "Ipsilateral",
            CameraView::Contralateral => "Contralateral",
            CameraView::Transverse => "Transverse",
            CameraView::Back => "Back",
        }
    }

    /// Zoom applied at capture time. The contralateral camera frames the hand at 2.5x.
    pub fn default_zoom(self) -> f64 {
        match self {
            CameraView::Contralateral => 2.5,
            _ => 1.0,
        }
    }
}

impl fmt::Display for CameraView {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CameraView {
    type Err = CatalogError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CameraView::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| CatalogError::UnknownView(s.to_string()))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CatalogError {
    #[error("catalog does not parse: {0}")]
    Parse(String),
    #[error("unsupported catalog schema_version {0} (expected {CATALOG_SCHEMA_VERSION})")]
    UnsupportedSchema(u32),
    #[error("task {0} out of range 1-19")]
    TaskOutOfRange(u32),
    #[error("duplicate task {0}")]
    DuplicateTask(u8),
    #[error("incomplete catalog: missing tasks {0:?}")]
    IncompleteCatalog(Vec<u8>),
    #[error("task {0} has an empty segment sequence")]
    EmptySequence(u8),
    #[error("task {task}: slot {slot} has no recommended view")]
    MissingRecommendedView { task: u8, slot: String },
    #[error("task {task}: occurrences of {kind} are not consecutive from 1")]
    OccurrenceGap { task: u8, kind: SegmentKind },
    #[error("task {task}: segment kind {kind} not allowed in this task group")]
    SubgroupViolation { task: u8, kind: SegmentKind },
    #[error("missing or empty definition for segment kind {0}")]
    MissingDefinition(SegmentKind),
    #[error("unknown segment kind `{0}`")]
    UnknownKind(String),
    #[error("bad segment slot name `{0}`")]
    BadSlotName(String),
    #[error("segment occurrence must be >= 1 (kind {0})")]
    ZeroOccurrence(SegmentKind),
    #[error("unknown camera view `{0}`")]
    UnknownView(String),
    #[error("zoom factor for {0} must be > 0")]
    BadZoom(CameraView),
    #[error("slot {slot} not in task {task}")]
    SlotNotInTask { task: u8, slot: String },
}

/// One ARAT task: its segment sequence and recommended view per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskDefinition {
    pub task_number: u8,
    pub subgroup: String,
    pub sequence: Vec<SegmentSlot>,
    pub recommended_view: BTreeMap<SegmentSlot, CameraView>,
    /// Per-task overrides of the catalog-wide definition texts.
    pub definition_texts: BTreeMap<SegmentKind, String>,
    /// Reference videos of unimpaired movement, shown to raters.
    pub reference_urls: Vec<String>,
}

impl TaskDefinition {
    pub fn contains(&self, slot: SegmentSlot) -> bool {
        self.sequence.contains(&slot)
    }

    pub fn kinds(&self) -> BTreeSet<SegmentKind> {
        self.sequence.iter().map(|s| s.kind()).collect()
    }
}

/// A validated catalog holding all 19 ARAT tasks. Immutable after load.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    version: String,
    tasks: BTreeMap<u8, TaskDefinition>,
    definitions: BTreeMap<SegmentKind, String>,
    zoom: BTreeMap<CameraView, f64>,
}

impl Catalog {
    /// The catalog shipped with the crate.
    pub fn default_catalog() -> Catalog {
        Catalog::from_json(DEFAULT_CATALOG).expect("shipped default catalog is valid")
    }

    pub fn default_catalog_json() -> &'static str {
        DEFAULT_CATALOG
    }

    pub fn from_json(source: &str) -> Result<Catalog, CatalogError> {
        let doc: CatalogDocument =
            serde_json::from_str(source).map_err(|e| CatalogError::Parse(e.to_string()))?;
        Catalog::from_document(doc)
    }

    pub fn from_document(doc: CatalogDocument) -> Result<Catalog, CatalogError> {
        if doc.schema_version != CATALOG_SCHEMA_VERSION {
            return Err(CatalogError::UnsupportedSchema(doc.schema_version));
        }

        let mut definitions = BTreeMap::new();
        for kind in SegmentKind::ALL {
            match doc.definitions.get(&kind) {
                Some(text) if !text.trim().is_empty() => {
                    definitions.insert(kind, text.clone());
                }
                _ => return Err(CatalogError::MissingDefinition(kind)),
            }
        }

        let mut zoom: BTreeMap<CameraView, f64> = CameraView::ALL
            .iter()
            .map(|v| (*v, v.default_zoom()))
            .collect();
        for (view, setting) in &doc.views {
            if !setting.zoom.is_finite() || setting.zoom <= 0.0 {
                return Err(CatalogError::BadZoom(*view));
            }
            zoom.insert(*view, setting.zoom);
        }

        let mut tasks = BTreeMap::new();
        for entry in doc.tasks {
            let task = validate_task(entry)?;
            let number = task.task_number;
            if tasks.insert(number, task).is_some() {
                return Err(CatalogError::DuplicateTask(number));
            }
        }
        let missing: Vec<u8> = (FIRST_TASK..=LAST_TASK)
            .filter(|n| !tasks.contains_key(n))
            .collect();
        if !missing.is_empty() {
            return Err(CatalogError::IncompleteCatalog(missing));
        }

        Ok(Catalog {
            version: doc.catalog_version,
            tasks,
            definitions,
            zoom,
        })
    }

    pub fn to_document(&self) -> CatalogDocument {
        CatalogDocument {
            schema_version: CATALOG_SCHEMA_VERSION,
            catalog_version: self.version.clone(),
            views: self
                .zoom
                .iter()
                .map(|(v, z)| (*v, ViewSetting { zoom: *z }))
                .collect(),
            definitions: self.definitions.clone(),
            tasks: self
                .tasks
                .values()
                .map(|t| TaskEntry {
                    task_number: u32::from(t.task_number),
                    subgroup: t.subgroup.clone(),
                    segments: t
                        .sequence
                        .iter()
                        .map(|slot| SegmentEntry {
                            kind: slot.kind(),
                            occurrence: slot.occurrence(),
                            view: t.recommended_view.get(slot).copied(),
                        })
                        .collect(),
                    definitions: t.definition_texts.clone(),
                    reference_urls: t.reference_urls.clone(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("catalog serializes")
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn tasks(&self) -> impl Iterator<Item = &TaskDefinition> {
        self.tasks.values()
    }

    pub fn task(&self, task_number: u8) -> Result<&TaskDefinition, CatalogError> {
        if !task_in_range(task_number) {
            return Err(CatalogError::TaskOutOfRange(u32::from(task_number)));
        }
        // a validated catalog holds every task in range
        Ok(&self.tasks[&task_number])
    }

    pub fn expected_sequence(&self, task_number: u8) -> Result<&[SegmentSlot], CatalogError> {
        Ok(&self.task(task_number)?.sequence)
    }

    pub fn recommended_view(
        &self,
        task_number: u8,
        slot: SegmentSlot,
    ) -> Result<CameraView, CatalogError> {
        let task = self.task(task_number)?;
        task.recommended_view
            .get(&slot)
            .copied()
            .ok_or_else(|| CatalogError::SlotNotInTask {
                task: task_number,
                slot: slot.to_string(),
            })
    }

    pub fn segment_definition(&self, kind: SegmentKind) -> &str {
        &self.definitions[&kind]
    }

    /// Definition text for `kind` as shown inside `task_number`, honoring per-task overrides.
    pub fn task_segment_definition(
        &self,
        task_number: u8,
        kind: SegmentKind,
    ) -> Result<&str, CatalogError> {
        let task = self.task(task_number)?;
        Ok(task
            .definition_texts
            .get(&kind)
            .map(String::as_str)
            .unwrap_or_else(|| self.segment_definition(kind)))
    }

    pub fn zoom_factor(&self, view: CameraView) -> f64 {
        self.zoom[&view]
    }
}

fn validate_task(entry: TaskEntry) -> Result<TaskDefinition, CatalogError> {
    if entry.task_number < u32::from(FIRST_TASK) || entry.task_number > u32::from(LAST_TASK) {
        return Err(CatalogError::TaskOutOfRange(entry.task_number));
    }
    let number = entry.task_number as u8;
    if entry.segments.is_empty() {
        return Err(CatalogError::EmptySequence(number));
    }

    let gross_task = number >= 17;
    let mut seen: BTreeMap<SegmentKind, u32> = BTreeMap::new();
    let mut sequence = Vec::with_capacity(entry.segments.len());
    let mut recommended_view = BTreeMap::new();
    for seg in &entry.segments {
        if seg.kind.is_gross() != gross_task {
            return Err(CatalogError::SubgroupViolation {
                task: number,
                kind: seg.kind,
            });
        }
        let count = seen.entry(seg.kind).or_insert(0);
        if seg.occurrence != *count + 1 {
            return Err(CatalogError::OccurrenceGap {
                task: number,
                kind: seg.kind,
            });
        }
        *count += 1;
        let slot = SegmentSlot::new(seg.kind, seg.occurrence)?;
        let view = seg
            .view
            .ok_or_else(|| CatalogError::MissingRecommendedView {
                task: number,
                slot: slot.to_string(),
            })?;
        sequence.push(slot);
        recommended_view.insert(slot, view);
    }

    for (kind, text) in &entry.definitions {
        if text.trim().is_empty() {
            return Err(CatalogError::MissingDefinition(*kind));
        }
    }

    Ok(TaskDefinition {
        task_number: number,
        subgroup: entry.subgroup,
        sequence,
        recommended_view,
        definition_texts: entry.definitions,
        reference_urls: entry.reference_urls,
    })
}

/// On-disk catalog format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogDocument {
    pub schema_version: u32,
    pub catalog_version: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub views: BTreeMap<CameraView, ViewSetting>,
    pub definitions: BTreeMap<SegmentKind, String>,
    pub tasks: Vec<TaskEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewSetting {
    pub zoom: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEntry {
    pub task_number: u32,
    pub subgroup: String,
    pub segments: Vec<SegmentEntry>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub definitions: BTreeMap<SegmentKind, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reference_urls: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentEntry {
    pub kind: SegmentKind,
    #[serde(default = "one")]
    pub occurrence: u32,
    #[serde(default)]
    pub view: Option<CameraView>,
}

fn one() -> u32 {
    1
}
