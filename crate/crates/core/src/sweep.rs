//! Parameter sweeps over the whole pipeline.
//!
//! A [`SweepGrid`] lists values for each axis: drowsy-segment length, window
//! length and shift, channel subsets, classifiers, split paradigms, and
//! seeds. The grid expands into points (one per combination of the
//! non-seed axes); each point is featurized once, then trained and
//! evaluated for every paradigm fan-out subject and every seed. Records
//! land in `results.csv` with a fingerprint tying them to the exact grid
//! and corpus, so an interrupted sweep resumes by recomputing only what is
//! missing, and re-running with a different worker count yields the same
//! bytes.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering as AtomicOrdering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{BinningParams, FeatureMatrix, SmoothingParams, DEFAULT_DB_EPSILON};
use crate::formation::{DrowsyLength, FormationParams, StateLabel};
use crate::ingest::Manifest;
use crate::models::ClassifierConfig;
use crate::pipeline::{featurize_corpus, train_eval, PipelineParams};
use crate::split::{Paradigm, SplitSpec, DEFAULT_TEST_FRACTION};
use crate::util::{derive_seed, ContentHash};

/// A split paradigm as it appears on the grid axis. Without an explicit
/// subject, the subject-bound paradigms fan out over every subject in the
/// corpus, producing one record per subject.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GridParadigm {
    CommonSubject,
    SubjectSpecific(Option<String>),
    LeaveOneOut(Option<String>),
}

impl GridParadigm {
    pub fn parse(s: &str) -> Result<GridParadigm> {
        let bad = || {
            Error::InvalidGrid(format!(
                "unknown paradigm {s:?} (expected common-subject, subject-specific[:ID], \
                 or leave-one-out[:ID])"
            ))
        };
        if s == "common-subject" {
            return Ok(GridParadigm::CommonSubject);
        }
        for (prefix, make) in [
            ("subject-specific", GridParadigm::SubjectSpecific as fn(_) -> _),
            ("leave-one-out", GridParadigm::LeaveOneOut as fn(_) -> _),
        ] {
            if s == prefix {
                return Ok(make(None));
            }
            if let Some(rest) = s.strip_prefix(prefix).and_then(|r| r.strip_prefix(':')) {
                if rest.is_empty() {
                    return Err(bad());
                }
                return Ok(make(Some(rest.to_string())));
            }
        }
        Err(bad())
    }

    /// Canonical axis text, inverse of [`GridParadigm::parse`].
    pub fn text(&self) -> String {
        match self {
            GridParadigm::CommonSubject => "common-subject".into(),
            GridParadigm::SubjectSpecific(None) => "subject-specific".into(),
            GridParadigm::SubjectSpecific(Some(s)) => format!("subject-specific:{s}"),
            GridParadigm::LeaveOneOut(None) => "leave-one-out".into(),
            GridParadigm::LeaveOneOut(Some(s)) => format!("leave-one-out:{s}"),
        }
    }

    /// Concrete per-record paradigms with the subject column value each one
    /// gets. `subjects` is the corpus subject list used for fan-out.
    fn fan_out(&self, subjects: &[String]) -> Vec<(Paradigm, Option<String>)> {
        let one = |p: Paradigm, s: &String| vec![(p, Some(s.clone()))];
        match self {
            GridParadigm::CommonSubject => vec![(Paradigm::CommonSubject, None)],
            GridParadigm::SubjectSpecific(Some(s)) => one(Paradigm::SubjectSpecific(s.clone()), s),
            GridParadigm::LeaveOneOut(Some(s)) => one(Paradigm::LeaveOneOut(s.clone()), s),
            GridParadigm::SubjectSpecific(None) => subjects
                .iter()
                .map(|s| (Paradigm::SubjectSpecific(s.clone()), Some(s.clone())))
                .collect(),
            GridParadigm::LeaveOneOut(None) => subjects
                .iter()
                .map(|s| (Paradigm::LeaveOneOut(s.clone()), Some(s.clone())))
                .collect(),
        }
    }
}

/// Scalar settings shared by every grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSettings {
    pub test_fraction: f64,
    pub bin_hz: f64,
    pub f_lo_hz: f64,
    pub f_hi_hz: f64,
    pub smooth_seconds: f64,
    pub drop_first_trials: usize,
    /// Classifier budget overrides, mainly for quick sweeps.
    pub rf_trees: Option<usize>,
    pub svm_epochs: Option<usize>,
    pub mlp_epochs: Option<usize>,
}

impl Default for GridSettings {
    fn default() -> Self {
        let b = BinningParams::default();
        Self {
            test_fraction: DEFAULT_TEST_FRACTION,
            bin_hz: b.bin_size_hz,
            f_lo_hz: b.f_lo_hz,
            f_hi_hz: b.f_hi_hz,
            smooth_seconds: SmoothingParams::default().span_seconds,
            drop_first_trials: 2,
            rf_trees: None,
            svm_epochs: None,
            mlp_epochs: None,
        }
    }
}

/// The full sweep specification: one value list per axis plus shared
/// scalar settings. Axes left out of a grid file fall back to single-value
/// defaults, so a minimal file sweeps exactly the axes it names.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub d_l: Vec<DrowsyLength>,
    pub w_l: Vec<f64>,
    pub w_s: Vec<usize>,
    /// `None` means all channels of the corpus.
    pub channels: Vec<Option<Vec<String>>>,
    /// Classifier names accepted by [`ClassifierConfig::by_name`].
    pub classifiers: Vec<String>,
    pub paradigms: Vec<GridParadigm>,
    pub seeds: Vec<u64>,
    pub settings: GridSettings,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            d_l: vec![DrowsyLength::Minutes(20)],
            w_l: vec![4.0],
            w_s: vec![128],
            channels: vec![None],
            classifiers: vec!["svm".into()],
            paradigms: vec![GridParadigm::CommonSubject],
            seeds: (0..6).collect(),
            settings: GridSettings::default(),
        }
    }
}

fn channels_text(chs: &Option<Vec<String>>) -> String {
    match chs {
        None => "all".into(),
        Some(list) => list.join("+"),
    }
}

impl SweepGrid {
    /// Parse the flat grid file grammar: one `key = comma-separated values`
    /// per line, `#` starting a comment, blank lines ignored.
    pub fn parse(text: &str) -> Result<SweepGrid> {
        let mut grid = SweepGrid::default();
        let mut seen: HashSet<String> = HashSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let bad = |msg: String| Error::GridParse { line, msg };
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| bad(format!("expected `key = values`, got {content:?}")))?;
            let key = key.trim();
            let value = value.trim();
            if !seen.insert(key.to_string()) {
                return Err(bad(format!("duplicate key {key:?}")));
            }
            if value.is_empty() {
                return Err(bad(format!("empty value for key {key:?}")));
            }
            let items: Vec<&str> = value.split(',').map(str::trim).collect();
            if items.iter().any(|i| i.is_empty()) {
                return Err(bad(format!("empty item in list for key {key:?}")));
            }
            let scalar = |items: &[&str]| -> std::result::Result<String, Error> {
                match items {
                    [one] => Ok((*one).to_string()),
                    _ => Err(bad(format!("key {key:?} takes a single value"))),
                }
            };
            match key {
                "d_l" => {
                    grid.d_l = items
                        .iter()
                        .map(|i| DrowsyLength::parse(i).map_err(|e| bad(e.to_string())))
                        .collect::<Result<_>>()?;
                }
                "w_l" => grid.w_l = parse_list(&items, "w_l", line)?,
                "w_s" => grid.w_s = parse_list(&items, "w_s", line)?,
                "channels" => {
                    grid.channels = items
                        .iter()
                        .map(|i| {
                            if *i == "all" {
                                return Ok(None);
                            }
                            let chs: Vec<String> =
                                i.split('+').map(|c| c.trim().to_string()).collect();
                            if chs.iter().any(String::is_empty) {
                                return Err(bad(format!("empty channel name in {i:?}")));
                            }
                            Ok(Some(chs))
                        })
                        .collect::<Result<_>>()?;
                }
                "classifiers" => {
                    for i in &items {
                        ClassifierConfig::by_name(i).map_err(|e| bad(e.to_string()))?;
                    }
                    grid.classifiers = items.iter().map(|i| i.to_string()).collect();
                }
                "paradigms" => {
                    grid.paradigms = items
                        .iter()
                        .map(|i| GridParadigm::parse(i).map_err(|e| bad(e.to_string())))
                        .collect::<Result<_>>()?;
                }
                "seeds" => grid.seeds = parse_list(&items, "seeds", line)?,
                "test_fraction" => {
                    grid.settings.test_fraction = parse_one(&scalar(&items)?, "test_fraction", line)?
                }
                "bin_hz" => grid.settings.bin_hz = parse_one(&scalar(&items)?, "bin_hz", line)?,
                "f_lo" => grid.settings.f_lo_hz = parse_one(&scalar(&items)?, "f_lo", line)?,
                "f_hi" => grid.settings.f_hi_hz = parse_one(&scalar(&items)?, "f_hi", line)?,
                "smooth_s" => {
                    grid.settings.smooth_seconds = parse_one(&scalar(&items)?, "smooth_s", line)?
                }
                "drop_first" => {
                    grid.settings.drop_first_trials = parse_one(&scalar(&items)?, "drop_first", line)?
                }
                "rf_trees" => {
                    grid.settings.rf_trees = Some(parse_one(&scalar(&items)?, "rf_trees", line)?)
                }
                "svm_epochs" => {
                    grid.settings.svm_epochs = Some(parse_one(&scalar(&items)?, "svm_epochs", line)?)
                }
                "mlp_epochs" => {
                    grid.settings.mlp_epochs = Some(parse_one(&scalar(&items)?, "mlp_epochs", line)?)
                }
                other => return Err(bad(format!("unknown key {other:?}"))),
            }
        }
        grid.dedup_axes();
        grid.validate()?;
        Ok(grid)
    }

    pub fn parse_file(path: &Path) -> Result<SweepGrid> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Repeated axis values would duplicate records, so they collapse to
    /// their first occurrence.
    fn dedup_axes(&mut self) {
        fn dedup<T: Clone, K: std::hash::Hash + Eq>(v: &mut Vec<T>, key: impl Fn(&T) -> K) {
            let mut seen = HashSet::new();
            v.retain(|x| seen.insert(key(x)));
        }
        dedup(&mut self.d_l, |d| d.to_string());
        dedup(&mut self.w_l, |w| w.to_bits());
        dedup(&mut self.w_s, |w| *w);
        dedup(&mut self.channels, channels_text);
        dedup(&mut self.classifiers, Clone::clone);
        dedup(&mut self.paradigms, GridParadigm::text);
        dedup(&mut self.seeds, |s| *s);
    }

    pub fn validate(&self) -> Result<()> {
        let axes: [(&str, usize); 7] = [
            ("d_l", self.d_l.len()),
            ("w_l", self.w_l.len()),
            ("w_s", self.w_s.len()),
            ("channels", self.channels.len()),
            ("classifiers", self.classifiers.len()),
            ("paradigms", self.paradigms.len()),
            ("seeds", self.seeds.len()),
        ];
        for (name, len) in axes {
            if len == 0 {
                return Err(Error::InvalidGrid(format!("axis {name} is empty")));
            }
        }
        for &w in &self.w_l {
            if !(2.0..=60.0).contains(&w) {
                return Err(Error::InvalidGrid(format!(
                    "w_l value {w} outside the supported 2..=60 s range"
                )));
            }
        }
        for &w in &self.w_s {
            if !(4..=1280).contains(&w) {
                return Err(Error::InvalidGrid(format!(
                    "w_s value {w} outside the supported 4..=1280 sample range"
                )));
            }
        }
        for name in &self.classifiers {
            ClassifierConfig::by_name(name)?;
        }
        if !(self.settings.test_fraction > 0.0 && self.settings.test_fraction < 1.0) {
            return Err(Error::InvalidGrid(format!(
                "test_fraction must lie in (0, 1), got {}",
                self.settings.test_fraction
            )));
        }
        Ok(())
    }

    /// Normalized rendering of the grid; two grids with the same canonical
    /// text behave identically.
    pub fn canonical_text(&self) -> String {
        let join = |items: Vec<String>| items.join(", ");
        let s = &self.settings;
        let mut out = String::new();
        out.push_str(&format!(
            "d_l = {}\n",
            join(self.d_l.iter().map(|d| d.to_string()).collect())
        ));
        out.push_str(&format!(
            "w_l = {}\n",
            join(self.w_l.iter().map(|w| w.to_string()).collect())
        ));
        out.push_str(&format!(
            "w_s = {}\n",
            join(self.w_s.iter().map(|w| w.to_string()).collect())
        ));
        out.push_str(&format!(
            "channels = {}\n",
            join(self.channels.iter().map(channels_text).collect())
        ));
        out.push_str(&format!("classifiers = {}\n", join(self.classifiers.clone())));
        out.push_str(&format!(
            "paradigms = {}\n",
            join(self.paradigms.iter().map(GridParadigm::text).collect())
        ));
        out.push_str(&format!(
            "seeds = {}\n",
            join(self.seeds.iter().map(|s| s.to_string()).collect())
        ));
        out.push_str(&format!("test_fraction = {}\n", s.test_fraction));
        out.push_str(&format!("bin_hz = {}\n", s.bin_hz));
        out.push_str(&format!("f_lo = {}\n", s.f_lo_hz));
        out.push_str(&format!("f_hi = {}\n", s.f_hi_hz));
        out.push_str(&format!("smooth_s = {}\n", s.smooth_seconds));
        out.push_str(&format!("drop_first = {}\n", s.drop_first_trials));
        if let Some(t) = s.rf_trees {
            out.push_str(&format!("rf_trees = {t}\n"));
        }
        if let Some(e) = s.svm_epochs {
            out.push_str(&format!("svm_epochs = {e}\n"));
        }
        if let Some(e) = s.mlp_epochs {
            out.push_str(&format!("mlp_epochs = {e}\n"));
        }
        out
    }

    /// Identity of a sweep: the canonical grid plus the corpus listing it
    /// runs against. Records and caches from a different fingerprint are
    /// never mixed in.
    pub fn fingerprint(&self, manifest: &Manifest) -> String {
        let mut h = ContentHash::new();
        h.update_str(&self.canonical_text());
        for e in &manifest.entries {
            h.update_str(&e.subject_id);
            h.update_u64(e.trial_index as u64);
            h.update_str(&e.path.display().to_string());
            h.update_f64(e.expected_minutes.unwrap_or(-1.0));
        }
        h.short_hex()
    }

    /// Cartesian product of the non-seed axes, in axis order.
    pub fn expand(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &d_l in &self.d_l {
            for &w_l in &self.w_l {
                for &w_s in &self.w_s {
                    for channels in &self.channels {
                        for classifier in &self.classifiers {
                            for paradigm in &self.paradigms {
                                out.push(GridPoint {
                                    d_l,
                                    w_l,
                                    w_s,
                                    channels: channels.clone(),
                                    classifier: classifier.clone(),
                                    paradigm: paradigm.clone(),
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

fn parse_list<T: std::str::FromStr>(items: &[&str], key: &str, line: usize) -> Result<Vec<T>> {
    items
        .iter()
        .map(|i| {
            i.parse::<T>().map_err(|_| Error::GridParse {
                line,
                msg: format!("bad value {i:?} for key {key:?}"),
            })
        })
        .collect()
}

fn parse_one<T: std::str::FromStr>(item: &str, key: &str, line: usize) -> Result<T> {
    item.parse::<T>().map_err(|_| Error::GridParse {
        line,
        msg: format!("bad value {item:?} for key {key:?}"),
    })
}

/// One combination of the non-seed axes.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub d_l: DrowsyLength,
    pub w_l: f64,
    pub w_s: usize,
    pub channels: Option<Vec<String>>,
    pub classifier: String,
    pub paradigm: GridParadigm,
}

impl GridPoint {
    /// Stable identifier used for scheduling, caching, seeding, and logs.
    pub fn key(&self) -> String {
        format!(
            "dl={}|wl={}|ws={}|ch={}|clf={}|par={}",
            self.d_l,
            self.w_l,
            self.w_s,
            channels_text(&self.channels),
            self.classifier,
            self.paradigm.text()
        )
    }

    /// Cache identifier covering only what shapes the feature matrix.
    fn feature_key(&self) -> String {
        format!(
            "dl={}_wl={}_ws={}_ch={}",
            self.d_l,
            self.w_l,
            self.w_s,
            channels_text(&self.channels)
        )
    }

    fn pipeline_params(&self, s: &GridSettings) -> PipelineParams {
        PipelineParams {
            formation: FormationParams {
                d_l: self.d_l,
                channels: self.channels.clone(),
                drop_first_trials: s.drop_first_trials,
            },
            w_l_seconds: self.w_l,
            w_s_samples: self.w_s,
            binning: BinningParams {
                bin_size_hz: s.bin_hz,
                f_lo_hz: s.f_lo_hz,
                f_hi_hz: s.f_hi_hz,
            },
            smoothing: SmoothingParams { span_seconds: s.smooth_seconds },
            db_epsilon: DEFAULT_DB_EPSILON,
        }
    }

    fn classifier_config(&self, s: &GridSettings) -> Result<ClassifierConfig> {
        let mut cfg = ClassifierConfig::by_name(&self.classifier)?;
        match &mut cfg {
            ClassifierConfig::Rf(c) => {
                if let Some(t) = s.rf_trees {
                    c.num_trees = t;
                }
            }
            ClassifierConfig::Svm(c) => {
                if let Some(e) = s.svm_epochs {
                    c.epochs = e;
                }
            }
            ClassifierConfig::Mlp(c) => {
                if let Some(e) = s.mlp_epochs {
                    c.epochs = e;
                }
            }
        }
        Ok(cfg)
    }
}

fn cmp_points(a: &GridPoint, b: &GridPoint) -> std::cmp::Ordering {
    let d_l_rank = |d: &DrowsyLength| match d {
        DrowsyLength::Minutes(m) => (0u8, *m),
        DrowsyLength::Max => (1u8, 0),
    };
    d_l_rank(&a.d_l)
        .cmp(&d_l_rank(&b.d_l))
        .then(a.w_l.total_cmp(&b.w_l))
        .then(a.w_s.cmp(&b.w_s))
        .then(channels_text(&a.channels).cmp(&channels_text(&b.channels)))
        .then(a.classifier.cmp(&b.classifier))
        .then(a.paradigm.text().cmp(&b.paradigm.text()))
}

/// One evaluated (grid point, subject, seed) combination.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub d_l: DrowsyLength,
    pub w_l: f64,
    pub w_s: usize,
    pub channels: Option<Vec<String>>,
    pub classifier: String,
    /// Paradigm axis text (`leave-one-out`, `subject-specific:s03`, ...).
    pub paradigm: String,
    /// Concrete test subject; `None` for common-subject records.
    pub subject: Option<String>,
    /// Seed axis value. Actual RNG seeds are derived from it together with
    /// the fingerprint and point key.
    pub seed: u64,
    pub num_test_rows: u64,
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub per_class_recall: [Option<f64>; 3],
    pub confusion: [[u64; 3]; 3],
}

impl SweepRecord {
    /// Identity of the record within a sweep; resume keys on this.
    fn id(&self) -> String {
        format!(
            "{}|{}|{}|{}|{}|{}|{}|{}",
            self.d_l,
            self.w_l,
            self.w_s,
            channels_text(&self.channels),
            self.classifier,
            self.paradigm,
            self.subject.as_deref().unwrap_or("-"),
            self.seed
        )
    }

    fn csv_line(&self) -> String {
        let recall = |i: usize| match self.per_class_recall[i] {
            Some(v) => v.to_string(),
            None => "n/a".to_string(),
        };
        let mut cells = vec![
            self.d_l.to_string(),
            self.w_l.to_string(),
            self.w_s.to_string(),
            channels_text(&self.channels),
            self.classifier.clone(),
            self.paradigm.clone(),
            self.subject.clone().unwrap_or_else(|| "-".into()),
            self.seed.to_string(),
            self.num_test_rows.to_string(),
            self.accuracy.to_string(),
            self.balanced_accuracy.to_string(),
            recall(0),
            recall(1),
            recall(2),
        ];
        for row in &self.confusion {
            for &c in row {
                cells.push(c.to_string());
            }
        }
        cells.join(",")
    }
}

const RESULTS_MAGIC: &str = "# mindstate-sweep v1";
const RESULTS_HEADER: &str = "d_l,w_l,w_s,channels,classifier,paradigm,subject,seed,\
num_test_rows,accuracy,balanced_accuracy,recall_focused,recall_unfocused,recall_drowsy,\
c00,c01,c02,c10,c11,c12,c20,c21,c22";

/// Everything a finished (or resumed) sweep produced.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub fingerprint: String,
    pub records: Vec<SweepRecord>,
    pub errors: Vec<SweepErrorRecord>,
}

/// A failure attributed to one grid point, or to one record within it.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepErrorRecord {
    pub point: String,
    pub subject: Option<String>,
    pub seed: Option<u64>,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub out_dir: PathBuf,
    /// Worker threads; 0 uses the library default.
    pub workers: usize,
    /// Abort on the first error instead of recording it and moving on.
    pub fail_fast: bool,
}

impl SweepOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self { out_dir: out_dir.into(), workers: 0, fail_fast: false }
    }
}

/// Write `records` (plus fingerprint header) as `results.csv` content.
pub fn write_results(path: &Path, fingerprint: &str, records: &[SweepRecord]) -> Result<()> {
    let mut out = String::new();
    out.push_str(RESULTS_MAGIC);
    out.push('\n');
    out.push_str(&format!("# fingerprint={fingerprint}\n"));
    out.push_str(RESULTS_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Read a `results.csv` back into records.
pub fn read_results(path: &Path) -> Result<(String, Vec<SweepRecord>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let p = || path.display().to_string();
    let bad = |line: usize, msg: String| Error::ResultsParse { path: p(), line, msg };
    let mut lines = text.lines().enumerate();

    let (_, magic) = lines.next().ok_or_else(|| bad(1, "empty file".into()))?;
    if magic != RESULTS_MAGIC {
        return Err(bad(1, format!("expected {RESULTS_MAGIC:?}, got {magic:?}")));
    }
    let (_, fp_line) = lines.next().ok_or_else(|| bad(2, "missing fingerprint line".into()))?;
    let fingerprint = fp_line
        .strip_prefix("# fingerprint=")
        .ok_or_else(|| bad(2, format!("expected `# fingerprint=...`, got {fp_line:?}")))?
        .to_string();
    let (_, header) = lines.next().ok_or_else(|| bad(3, "missing header line".into()))?;
    if header != RESULTS_HEADER {
        return Err(bad(3, "unexpected column header".into()));
    }

    let mut records = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = raw.split(',').collect();
        if cells.len() != 23 {
            return Err(bad(line, format!("expected 23 columns, got {}", cells.len())));
        }
        let fld = |i: usize| cells[i];
        let num = |i: usize, what: &str| -> Result<f64> {
            fld(i)
                .parse::<f64>()
                .map_err(|_| bad(line, format!("bad {what} {:?}", fld(i))))
        };
        let int = |i: usize, what: &str| -> Result<u64> {
            fld(i)
                .parse::<u64>()
                .map_err(|_| bad(line, format!("bad {what} {:?}", fld(i))))
        };
        let recall = |i: usize| -> Result<Option<f64>> {
            match fld(i) {
                "n/a" => Ok(None),
                v => v
                    .parse::<f64>()
                    .map(Some)
                    .map_err(|_| bad(line, format!("bad recall {v:?}"))),
            }
        };
        let mut confusion = [[0u64; 3]; 3];
        for (k, cell) in confusion.iter_mut().flat_map(|r| r.iter_mut()).zip(14..23) {
            *k = int(cell, "confusion count")?;
        }
        records.push(SweepRecord {
            d_l: DrowsyLength::parse(fld(0)).map_err(|e| bad(line, e.to_string()))?,
            w_l: num(1, "w_l")?,
            w_s: int(2, "w_s")? as usize,
            channels: match fld(3) {
                "all" => None,
                list => Some(list.split('+').map(str::to_string).collect()),
            },
            classifier: fld(4).to_string(),
            paradigm: fld(5).to_string(),
            subject: match fld(6) {
                "-" => None,
                s => Some(s.to_string()),
            },
            seed: int(7, "seed")?,
            num_test_rows: int(8, "num_test_rows")?,
            accuracy: num(9, "accuracy")?,
            balanced_accuracy: num(10, "balanced_accuracy")?,
            per_class_recall: [recall(11)?, recall(12)?, recall(13)?],
            confusion,
        });
    }
    Ok((fingerprint, records))
}

/// One unit of work: a grid point with the (paradigm, subject, seed)
/// combinations still missing from the results.
struct Job {
    point: GridPoint,
    key: String,
    feature_key: String,
    units: Vec<JobUnit>,
}

struct JobUnit {
    paradigm: Paradigm,
    subject: Option<String>,
    seed: u64,
    id: String,
}

/// Run every missing record of the grid, reusing cached features and prior
/// results where the fingerprint matches, and write `results.csv`,
/// `errors.csv`, and `timings.csv` under the output directory.
pub fn run_sweep(manifest: &Manifest, grid: &SweepGrid, opts: &SweepOptions) -> Result<SweepResult> {
    grid.validate()?;
    let fingerprint = grid.fingerprint(manifest);
    let fp_seed = u64::from_str_radix(&fingerprint, 16).expect("fingerprint is 16 hex digits");
    std::fs::create_dir_all(&opts.out_dir).map_err(|e| Error::io(&opts.out_dir, e))?;
    let cache_dir = opts.out_dir.join("cache").join(&fingerprint);
    std::fs::create_dir_all(&cache_dir).map_err(|e| Error::io(&cache_dir, e))?;

    // Prior records count only if they come from the very same grid and
    // corpus.
    let results_path = opts.out_dir.join("results.csv");
    let mut done: HashMap<String, SweepRecord> = HashMap::new();
    if results_path.exists() {
        match read_results(&results_path) {
            Ok((old_fp, old)) if old_fp == fingerprint => {
                for r in old {
                    done.insert(r.id(), r);
                }
                log::info!("resuming sweep: {} records already present", done.len());
            }
            Ok((old_fp, _)) => {
                log::warn!(
                    "existing results have fingerprint {old_fp}, expected {fingerprint}; \
                     recomputing everything"
                );
            }
            Err(e) => log::warn!("could not read existing results ({e}); recomputing everything"),
        }
    }

    // Fan-out subjects come from the corpus after warm-up trials are
    // dropped, which is exactly the population the features will contain.
    let selected = crate::formation::select_trials(manifest, grid.settings.drop_first_trials)
        .map_err(|e| e.in_stage("sweep"))?;
    let mut subjects = selected.subjects();
    subjects.sort();

    let mut points = grid.expand();
    points.sort_by(cmp_points);
    let mut seeds = grid.seeds.clone();
    seeds.sort_unstable();

    let mut jobs: Vec<Job> = Vec::new();
    let mut ordered_ids: Vec<String> = Vec::new();
    let mut seen_ids: HashSet<String> = HashSet::new();
    for point in points {
        let key = point.key();
        let mut units = Vec::new();
        for (paradigm, subject) in point.paradigm.fan_out(&subjects) {
            for &seed in &seeds {
                let id = format!(
                    "{}|{}|{}|{}|{}|{}|{}|{}",
                    point.d_l,
                    point.w_l,
                    point.w_s,
                    channels_text(&point.channels),
                    point.classifier,
                    point.paradigm.text(),
                    subject.as_deref().unwrap_or("-"),
                    seed
                );
                if !seen_ids.insert(id.clone()) {
                    return Err(Error::InvalidGrid(format!(
                        "grid produces duplicate record {id}"
                    )));
                }
                ordered_ids.push(id.clone());
                if done.contains_key(&id) {
                    continue;
                }
                units.push(JobUnit { paradigm: paradigm.clone(), subject: subject.clone(), seed, id });
            }
        }
        jobs.push(Job { feature_key: point.feature_key(), key, point, units });
    }

    let run = || sweep_jobs(manifest, grid, &jobs, &cache_dir, fp_seed, opts.fail_fast);
    let (computed, errors, timings) = if opts.workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("could not build worker pool: {e}")))?;
        pool.install(run)?
    } else {
        run()?
    };

    let mut records = Vec::with_capacity(ordered_ids.len());
    for id in &ordered_ids {
        if let Some(r) = done.remove(id) {
            records.push(r);
        } else if let Some(r) = computed.get(id) {
            records.push(r.clone());
        }
    }

    write_results(&results_path, &fingerprint, &records)?;
    write_errors(&opts.out_dir.join("errors.csv"), &errors)?;
    write_timings(&opts.out_dir.join("timings.csv"), &timings)?;
    log::info!(
        "sweep finished: {} records, {} errors",
        records.len(),
        errors.len()
    );
    Ok(SweepResult { fingerprint, records, errors })
}

type JobOutput = (HashMap<String, SweepRecord>, Vec<SweepErrorRecord>, Vec<(String, f64)>);

fn sweep_jobs(
    manifest: &Manifest,
    grid: &SweepGrid,
    jobs: &[Job],
    cache_dir: &Path,
    fp_seed: u64,
    fail_fast: bool,
) -> Result<JobOutput> {
    let stop = AtomicBool::new(false);
    let fatal: Mutex<Option<Error>> = Mutex::new(None);
    let abort = |e: Error| {
        let mut slot = fatal.lock().unwrap();
        if slot.is_none() {
            *slot = Some(e);
        }
        stop.store(true, AtomicOrdering::SeqCst);
    };

    // Featurize each distinct feature configuration once, consulting and
    // feeding the on-disk cache.
    let mut feature_jobs: Vec<(String, PipelineParams)> = Vec::new();
    let mut seen = HashSet::new();
    for job in jobs {
        if job.units.is_empty() {
            continue;
        }
        if seen.insert(job.feature_key.clone()) {
            feature_jobs.push((job.feature_key.clone(), job.point.pipeline_params(&grid.settings)));
        }
    }
    let features: HashMap<String, std::result::Result<Arc<FeatureMatrix>, String>> = feature_jobs
        .par_iter()
        .map(|(key, params)| {
            if stop.load(AtomicOrdering::SeqCst) {
                return (key.clone(), Err("aborted".to_string()));
            }
            let outcome = load_or_featurize(manifest, params, cache_dir, key);
            match outcome {
                Ok(fm) => (key.clone(), Ok(Arc::new(fm))),
                Err(e) => {
                    let msg = e.to_string();
                    if fail_fast {
                        abort(e);
                    }
                    (key.clone(), Err(msg))
                }
            }
        })
        .collect();
    if fail_fast {
        if let Some(e) = fatal.lock().unwrap().take() {
            return Err(e);
        }
    }

    let computed: Mutex<HashMap<String, SweepRecord>> = Mutex::new(HashMap::new());
    let errors: Mutex<Vec<SweepErrorRecord>> = Mutex::new(Vec::new());
    let timings: Mutex<Vec<(String, f64)>> = Mutex::new(Vec::new());

    jobs.par_iter().for_each(|job| {
        if job.units.is_empty() || stop.load(AtomicOrdering::SeqCst) {
            return;
        }
        let started = Instant::now();
        let fm = match &features[&job.feature_key] {
            Ok(fm) => fm,
            Err(msg) => {
                errors.lock().unwrap().push(SweepErrorRecord {
                    point: job.key.clone(),
                    subject: None,
                    seed: None,
                    message: msg.clone(),
                });
                return;
            }
        };
        let desc = job.point.pipeline_params(&grid.settings).describe();
        for unit in &job.units {
            if stop.load(AtomicOrdering::SeqCst) {
                return;
            }
            match run_unit(job, unit, fm, grid, fp_seed, &desc) {
                Ok(record) => {
                    computed.lock().unwrap().insert(unit.id.clone(), record);
                }
                Err(e) => {
                    errors.lock().unwrap().push(SweepErrorRecord {
                        point: job.key.clone(),
                        subject: unit.subject.clone(),
                        seed: Some(unit.seed),
                        message: e.to_string(),
                    });
                    if fail_fast {
                        abort(e);
                        return;
                    }
                }
            }
        }
        timings
            .lock()
            .unwrap()
            .push((job.key.clone(), started.elapsed().as_secs_f64()));
    });

    if let Some(e) = fatal.into_inner().unwrap() {
        return Err(e);
    }
    let mut errors = errors.into_inner().unwrap();
    errors.sort_by(|a, b| {
        (&a.point, &a.subject, a.seed).cmp(&(&b.point, &b.subject, b.seed))
    });
    let mut timings = timings.into_inner().unwrap();
    timings.sort_by(|a, b| a.0.cmp(&b.0));
    Ok((computed.into_inner().unwrap(), errors, timings))
}

fn run_unit(
    job: &Job,
    unit: &JobUnit,
    features: &FeatureMatrix,
    grid: &SweepGrid,
    fp_seed: u64,
    features_desc: &str,
) -> Result<SweepRecord> {
    let seed_text = unit.seed.to_string();
    let derived = derive_seed(fp_seed, &[job.key.as_str(), seed_text.as_str()]);
    let mut split = SplitSpec::new(unit.paradigm.clone(), derived);
    split.test_fraction = grid.settings.test_fraction;
    let config = job.point.classifier_config(&grid.settings)?.with_seed(derived);
    let out = train_eval(features, &split, &config, features_desc)?;
    let r = &out.report;
    Ok(SweepRecord {
        d_l: job.point.d_l,
        w_l: job.point.w_l,
        w_s: job.point.w_s,
        channels: job.point.channels.clone(),
        classifier: job.point.classifier.clone(),
        paradigm: job.point.paradigm.text(),
        subject: unit.subject.clone(),
        seed: unit.seed,
        num_test_rows: r.num_test_rows,
        accuracy: r.accuracy,
        balanced_accuracy: r.balanced_accuracy,
        per_class_recall: r.per_class_recall,
        confusion: r.confusion.counts,
    })
}

fn load_or_featurize(
    manifest: &Manifest,
    params: &PipelineParams,
    cache_dir: &Path,
    key: &str,
) -> Result<FeatureMatrix> {
    let path = cache_dir.join(format!("{key}.features"));
    if path.exists() {
        match FeatureMatrix::read(&path) {
            Ok(fm) => {
                log::info!("features {key}: cache hit");
                return Ok(fm);
            }
            Err(e) => log::warn!("features {key}: unreadable cache entry ({e}); recomputing"),
        }
    }
    log::info!("features {key}: computing");
    let fm = featurize_corpus(manifest, params)?;
    // Publish atomically so concurrent sweeps sharing the cache never see a
    // half-written file.
    let tmp = cache_dir.join(format!(".{key}.{}.tmp", std::process::id()));
    fm.write(&tmp, &[format!("features {key}")])?;
    std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
    Ok(fm)
}

fn write_errors(path: &Path, errors: &[SweepErrorRecord]) -> Result<()> {
    let mut out = String::from("point,subject,seed,message\n");
    for e in errors {
        out.push_str(&format!(
            "{},{},{},{}\n",
            e.point,
            e.subject.as_deref().unwrap_or("-"),
            e.seed.map_or_else(|| "-".into(), |s| s.to_string()),
            e.message.replace(',', ";").replace('\n', " ")
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn write_timings(path: &Path, timings: &[(String, f64)]) -> Result<()> {
    let mut out = String::from("point,seconds\n");
    for (key, secs) in timings {
        out.push_str(&format!("{key},{secs:.3}\n"));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Axes a results table may group by.
const TABLE_AXES: [&str; 8] =
    ["d_l", "w_l", "w_s", "channels", "classifier", "paradigm", "subject", "seed"];

fn axis_value(r: &SweepRecord, axis: &str) -> String {
    match axis {
        "d_l" => r.d_l.to_string(),
        "w_l" => r.w_l.to_string(),
        "w_s" => r.w_s.to_string(),
        "channels" => channels_text(&r.channels),
        "classifier" => r.classifier.clone(),
        "paradigm" => r.paradigm.clone(),
        "subject" => r.subject.clone().unwrap_or_else(|| "-".into()),
        "seed" => r.seed.to_string(),
        _ => unreachable!("axis validated before use"),
    }
}

/// Order group values sensibly per axis: numerically where the axis is
/// numeric, minutes-before-max for `d_l`, lexically otherwise.
fn axis_value_cmp(axis: &str, a: &str, b: &str) -> std::cmp::Ordering {
    match axis {
        "w_l" | "w_s" | "seed" => {
            let (pa, pb) = (a.parse::<f64>(), b.parse::<f64>());
            match (pa, pb) {
                (Ok(x), Ok(y)) => x.total_cmp(&y),
                _ => a.cmp(b),
            }
        }
        "d_l" => {
            let rank = |s: &str| match DrowsyLength::parse(s) {
                Ok(DrowsyLength::Minutes(m)) => (0u8, m),
                Ok(DrowsyLength::Max) => (1, 0),
                Err(_) => (2, 0),
            };
            rank(a).cmp(&rank(b)).then(a.cmp(b))
        }
        _ => a.cmp(b),
    }
}

/// Aggregate records into a summary table grouped by the named axes and
/// write it as CSV: one row per group with count, mean, best, and standard
/// deviation of balanced accuracy, plus mean drowsy recall when requested.
pub fn emit_table(
    result: &SweepResult,
    group_by: &[String],
    path: &Path,
    include_drowsy: bool,
) -> Result<()> {
    for axis in group_by {
        if !TABLE_AXES.contains(&axis.as_str()) {
            return Err(Error::UnknownAxis(axis.clone()));
        }
    }

    let mut groups: HashMap<Vec<String>, Vec<&SweepRecord>> = HashMap::new();
    for r in &result.records {
        let key: Vec<String> = group_by.iter().map(|a| axis_value(r, a)).collect();
        groups.entry(key).or_default().push(r);
    }
    let mut keys: Vec<Vec<String>> = groups.keys().cloned().collect();
    keys.sort_by(|a, b| {
        for (i, axis) in group_by.iter().enumerate() {
            let ord = axis_value_cmp(axis, &a[i], &b[i]);
            if ord != std::cmp::Ordering::Equal {
                return ord;
            }
        }
        std::cmp::Ordering::Equal
    });

    let mut out = String::new();
    for axis in group_by {
        out.push_str(axis);
        out.push(',');
    }
    out.push_str("n,mean_balanced_accuracy,best_balanced_accuracy,std_balanced_accuracy");
    if include_drowsy {
        out.push_str(",mean_drowsy_recall");
    }
    out.push('\n');

    let drowsy_code = StateLabel::Drowsy.code() as usize;
    for key in keys {
        let rs = &groups[&key];
        let n = rs.len() as f64;
        let mean = rs.iter().map(|r| r.balanced_accuracy).sum::<f64>() / n;
        let best = rs
            .iter()
            .map(|r| r.balanced_accuracy)
            .fold(f64::NEG_INFINITY, f64::max);
        let var = rs
            .iter()
            .map(|r| (r.balanced_accuracy - mean).powi(2))
            .sum::<f64>()
            / n;
        for cell in &key {
            out.push_str(cell);
            out.push(',');
        }
        out.push_str(&format!("{},{},{},{}", rs.len(), mean, best, var.sqrt()));
        if include_drowsy {
            let vals: Vec<f64> = rs
                .iter()
                .filter_map(|r| r.per_class_recall[drowsy_code])
                .collect();
            if vals.is_empty() {
                out.push_str(",n/a");
            } else {
                out.push_str(&format!(",{}", vals.iter().sum::<f64>() / vals.len() as f64));
            }
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
