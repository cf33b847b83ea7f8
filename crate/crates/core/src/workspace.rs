//! On-disk workspace: ingestion of trace sets and read access to the
//! persisted artifacts.
//!
//! A workspace root holds immutable version directories `v0001`, `v0002`, ...
//! Each ingestion computes everything eagerly and writes a fresh version:
//!
//! ```text
//! manifest.json              campaign manifest
//! symbols.json               shared symbol table
//! summary.json               ingestion summary
//! ranking.json               every CVG edge in ranking order
//! traces/<run>.trace         canonical re-rendering of each accepted run
//! lsg/<run>/<fn>.json        loop sensitive graphs
//! diff/<run>/<fn>.json       faulty-vs-golden diffs
//! status/<run>.json          function statuses of a faulty run
//! cvg/<fn>.json              critical vector graphs
//! layout/global/<fn>.json    layout of the golden LSG
//! layout/diff/<run>/<fn>.json
//! layout/cvg/<fn>.json
//! ```
//!
//! All JSON is canonical (see [`crate::canonical`]) and nothing depends on
//! absolute paths, timestamps or the version number, so ingesting the same
//! inputs twice yields byte-identical version directories.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::canonical;
use crate::cvg::{accumulate, rank_order, Cvg, RankedEdge};
use crate::diff::{diff_lsg, statuses_from_diffs, DiffLsg, FunctionStatus};
use crate::export;
use crate::harness::Outcome;
use crate::layout::{anomaly_map, layout, LayoutGraph, StyledGraph, WeightedGraph};
use crate::lsg::{build_all_lsgs, Lsg};
use crate::manifest::{CampaignManifest, FaultyRunEntry};
use crate::trace::{
    is_valid_run_id, parse_trace, validate_run, FunctionRecord, InjectionSite, RunKind, RunTrace,
};

pub const MANIFEST_FILE: &str = "manifest.json";
/// Optional harness manifest next to the traces of a campaign.
pub const CAMPAIGN_FILE: &str = "campaign.json";
const LOCK_FILE: &str = ".ingest.lock";

#[derive(Debug, Error)]
pub enum WorkspaceError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("no golden run among the inputs")]
    NoGoldenRun,
    #[error("more than one golden run among the inputs: {0:?}")]
    MultipleGoldenRuns(Vec<String>),
    #[error("workspace {} has not been ingested", .0.display())]
    NotIngested(PathBuf),
    #[error("workspace {} is locked by another ingestion", .0.display())]
    Locked(PathBuf),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("invalid request: {0}")]
    BadRequest(String),
    #[error("corrupt artifact {}: {reason}", path.display())]
    Corrupt { path: PathBuf, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> WorkspaceError + '_ {
    move |source| WorkspaceError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestFinding {
    pub file: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    /// Version directory name; not persisted.
    #[serde(skip)]
    pub version: String,
    pub campaign_id: String,
    pub runs_accepted: usize,
    pub golden_runs: usize,
    pub faulty_runs: usize,
    pub functions: usize,
    pub findings: Vec<IngestFinding>,
}

/// One entry of the run listing served to clients.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunInfo {
    pub run_id: String,
    pub kind: RunKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub injection: Option<InjectionSite>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<Outcome>,
}

/// Projection of the manifest: golden run first, then faulty runs in order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunList {
    pub campaign_id: String,
    pub golden_run_id: String,
    pub runs: Vec<RunInfo>,
}

impl RunList {
    pub fn from_manifest(m: &CampaignManifest) -> Self {
        let golden = RunInfo {
            run_id: m.golden_run_id.clone(),
            kind: RunKind::Golden,
            injection: None,
            outcome: None,
        };
        let faulty = m.runs.iter().map(|r| RunInfo {
            run_id: r.run_id.clone(),
            kind: RunKind::Faulty,
            injection: Some(r.injection),
            outcome: r.outcome.as_ref().map(|o| o.classification),
        });
        RunList {
            campaign_id: m.campaign_id.clone(),
            golden_run_id: m.golden_run_id.clone(),
            runs: std::iter::once(golden).chain(faulty).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    /// Faulty-vs-golden diff of the selected run.
    Diff,
    /// Golden LSG without differencing.
    Global,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Json,
    Svg,
    Dot,
}

impl std::str::FromStr for ExportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ExportFormat::Json),
            "svg" => Ok(ExportFormat::Svg),
            "dot" => Ok(ExportFormat::Dot),
            _ => Err(format!("unknown format `{s}` (expected json, svg or dot)")),
        }
    }
}

impl std::str::FromStr for View {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "diff" => Ok(View::Diff),
            "global" => Ok(View::Global),
            _ => Err(format!("unknown view `{s}` (expected diff or global)")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Workspace { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Completed version numbers, ascending.
    pub fn versions(&self) -> Result<Vec<u32>, WorkspaceError> {
        let entries = match fs::read_dir(&self.root) {
            Ok(e) => e,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io_err(&self.root)(e)),
        };
        let mut out = Vec::new();
        for entry in entries {
            let entry = entry.map_err(io_err(&self.root))?;
            let name = entry.file_name();
            let Some(name) = name.to_str() else { continue };
            if let Some(n) = name.strip_prefix('v').and_then(|n| n.parse::<u32>().ok()) {
                if entry.path().join(MANIFEST_FILE).is_file() {
                    out.push(n);
                }
            }
        }
        out.sort_unstable();
        Ok(out)
    }

    pub fn version_dir(&self, version: u32) -> PathBuf {
        self.root.join(format!("v{version:04}"))
    }

    /// The most recent completed version.
    pub fn latest(&self) -> Result<Snapshot, WorkspaceError> {
        let v = *self
            .versions()?
            .last()
            .ok_or_else(|| WorkspaceError::NotIngested(self.root.clone()))?;
        Snapshot::open(self.version_dir(v))
    }

    /// Parses, validates and analyses every trace under `inputs` (files, or
    /// directories whose `*.trace` files are taken in name order) and
    /// persists the results as a new version. Per-file problems are reported
    /// as findings without aborting the ingestion.
    pub fn ingest(&self, inputs: &[PathBuf]) -> Result<IngestSummary, WorkspaceError> {
        let (files, harness) = collect_inputs(inputs)?;
        let runs = files.into_iter().map(|file| {
            let label = file
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| file.display().to_string());
            let run = fs::read_to_string(&file)
                .map_err(|e| e.to_string())
                .and_then(|text| parse_trace(&text).map_err(|e| e.to_string()));
            (label, run)
        });
        self.ingest_runs(runs, harness)
    }

    /// Ingests runs that are already parsed, each labelled for findings.
    /// Runs are consumed one at a time and only their graphs are retained,
    /// so long traces never pile up in memory.
    pub fn ingest_runs<I>(
        &self,
        runs: I,
        harness: Option<CampaignManifest>,
    ) -> Result<IngestSummary, WorkspaceError>
    where
        I: IntoIterator<Item = (String, Result<RunTrace, String>)>,
    {
        fs::create_dir_all(&self.root).map_err(io_err(&self.root))?;
        let lock = self.root.join(LOCK_FILE);
        match fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&lock)
        {
            Ok(_) => {}
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                return Err(WorkspaceError::Locked(self.root.clone()))
            }
            Err(e) => return Err(io_err(&lock)(e)),
        }
        let result = self.ingest_locked(runs.into_iter(), harness);
        let _ = fs::remove_file(&lock);
        result
    }

    fn ingest_locked(
        &self,
        runs: impl Iterator<Item = (String, Result<RunTrace, String>)>,
        harness: Option<CampaignManifest>,
    ) -> Result<IngestSummary, WorkspaceError> {
        let next = self.versions()?.last().copied().unwrap_or(0) + 1;
        let final_dir = self.version_dir(next);
        let staging = self.root.join(format!(".v{next:04}.partial"));
        if staging.exists() {
            fs::remove_dir_all(&staging).map_err(io_err(&staging))?;
        }
        fs::create_dir_all(&staging).map_err(io_err(&staging))?;
        match stage(&staging, runs, harness) {
            Ok(summary) => {
                fs::rename(&staging, &final_dir).map_err(io_err(&final_dir))?;
                Ok(IngestSummary {
                    version: format!("v{next:04}"),
                    ..summary
                })
            }
            Err(e) => {
                let _ = fs::remove_dir_all(&staging);
                Err(e)
            }
        }
    }
}

fn collect_inputs(
    inputs: &[PathBuf],
) -> Result<(Vec<PathBuf>, Option<CampaignManifest>), WorkspaceError> {
    let mut files = Vec::new();
    let mut harness = None;
    for input in inputs {
        let meta = fs::metadata(input).map_err(io_err(input))?;
        if meta.is_dir() {
            let mut found = Vec::new();
            for entry in fs::read_dir(input).map_err(io_err(input))? {
                let path = entry.map_err(io_err(input))?.path();
                if path.extension().is_some_and(|e| e == "trace") && path.is_file() {
                    found.push(path);
                }
            }
            found.sort();
            files.extend(found);
            let campaign = input.join(CAMPAIGN_FILE);
            if campaign.is_file() {
                harness = Some(read_json::<CampaignManifest>(&campaign)?);
            }
        } else {
            files.push(input.clone());
        }
    }
    Ok((files, harness))
}

struct Writer<'a> {
    dir: &'a Path,
}

impl Writer<'_> {
    fn bytes(&self, rel: &str, data: &[u8]) -> Result<(), WorkspaceError> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        fs::write(&path, data).map_err(io_err(&path))
    }

    fn json<T: Serialize + ?Sized>(&self, rel: &str, value: &T) -> Result<(), WorkspaceError> {
        let data = canonical::to_vec(value).map_err(|e| WorkspaceError::Corrupt {
            path: self.dir.join(rel),
            reason: e.to_string(),
        })?;
        self.bytes(rel, &data)
    }
}

/// A run that passed validation, reduced to what the later stages need.
struct Staged {
    label: String,
    run_id: String,
    kind: RunKind,
    injection: Option<InjectionSite>,
    digest: String,
    text_hash: Vec<u8>,
    symbols: Vec<FunctionRecord>,
    lsgs: BTreeMap<usize, Lsg>,
}

fn corrupt(what: impl Into<PathBuf>, e: impl std::fmt::Display) -> WorkspaceError {
    WorkspaceError::Corrupt {
        path: what.into(),
        reason: e.to_string(),
    }
}

fn stage(
    dir: &Path,
    runs: impl Iterator<Item = (String, Result<RunTrace, String>)>,
    harness: Option<CampaignManifest>,
) -> Result<IngestSummary, WorkspaceError> {
    let w = Writer { dir };
    let mut findings = Vec::new();
    let mut staged: Vec<Staged> = Vec::new();
    let mut seen = BTreeSet::new();
    for (label, run) in runs {
        let run = match run {
            Ok(run) => run,
            Err(message) => {
                findings.push(IngestFinding {
                    file: label,
                    message,
                });
                continue;
            }
        };
        let report = validate_run(&run);
        if !report.is_ok() {
            for f in report.findings {
                findings.push(IngestFinding {
                    file: label.clone(),
                    message: f.message,
                });
            }
            continue;
        }
        if !seen.insert(run.run_id.clone()) {
            findings.push(IngestFinding {
                file: label,
                message: format!("duplicate run id `{}`", run.run_id),
            });
            continue;
        }
        let text = run.render();
        w.bytes(&trace_path(&run.run_id), text.as_bytes())?;
        let text_hash = Sha256::digest(text.as_bytes()).to_vec();
        drop(text);
        staged.push(Staged {
            label,
            lsgs: build_all_lsgs(&run),
            digest: run.symbol_digest(),
            run_id: run.run_id,
            kind: run.kind,
            injection: run.injection,
            text_hash,
            symbols: if run.kind == RunKind::Golden {
                run.symbols
            } else {
                Vec::new()
            },
        });
    }

    let goldens: Vec<usize> = (0..staged.len())
        .filter(|&i| staged[i].kind == RunKind::Golden)
        .collect();
    let golden = match goldens.as_slice() {
        [] => return Err(WorkspaceError::NoGoldenRun),
        [g] => staged.remove(*g),
        many => {
            return Err(WorkspaceError::MultipleGoldenRuns(
                many.iter().map(|&i| staged[i].run_id.clone()).collect(),
            ))
        }
    };
    let mut faulty = Vec::new();
    for run in staged {
        if run.digest == golden.digest {
            faulty.push(run);
        } else {
            let path = dir.join(trace_path(&run.run_id));
            fs::remove_file(&path).map_err(io_err(&path))?;
            findings.push(IngestFinding {
                file: run.label,
                message: "symbol table differs from the golden run".into(),
            });
        }
    }
    faulty.sort_by(|a, b| a.run_id.cmp(&b.run_id));

    let harness_entries: BTreeMap<&str, &FaultyRunEntry> = harness
        .as_ref()
        .map(|m| m.runs.iter().map(|r| (r.run_id.as_str(), r)).collect())
        .unwrap_or_default();
    let manifest = CampaignManifest {
        campaign_id: match &harness {
            Some(m) => m.campaign_id.clone(),
            None => {
                let mut h = Sha256::new();
                h.update(&golden.text_hash);
                for r in &faulty {
                    h.update(&r.text_hash);
                }
                format!("ingest-{}", &hex::encode(h.finalize())[..12])
            }
        },
        golden_run_id: golden.run_id.clone(),
        symbol_digest: golden.digest.clone(),
        runs: faulty
            .iter()
            .map(|r| {
                let from_harness = harness_entries.get(r.run_id.as_str());
                FaultyRunEntry {
                    run_id: r.run_id.clone(),
                    injection: r.injection.expect("validated faulty run"),
                    fault: from_harness.and_then(|e| e.fault),
                    outcome: from_harness.and_then(|e| e.outcome.clone()),
                }
            })
            .collect(),
        seed: harness.as_ref().and_then(|m| m.seed),
        inputs: harness.as_ref().and_then(|m| m.inputs.clone()),
        golden_output: harness.as_ref().and_then(|m| m.golden_output.clone()),
    };
    let summary = IngestSummary {
        version: String::new(),
        campaign_id: manifest.campaign_id.clone(),
        runs_accepted: 1 + faulty.len(),
        golden_runs: 1,
        faulty_runs: faulty.len(),
        functions: golden.symbols.len(),
        findings,
    };

    w.json(MANIFEST_FILE, &manifest)?;
    w.json("symbols.json", &golden.symbols)?;
    w.json("summary.json", &summary)?;
    for (f, lsg) in &golden.lsgs {
        w.json(&format!("lsg/{}/{f}.json", golden.run_id), lsg)?;
        w.json(
            &format!("layout/global/{f}.json"),
            &layout(lsg).map_err(|e| corrupt("golden lsg", e))?,
        )?;
    }

    // per faulty run: LSGs, diffs, diff layouts and statuses
    let diffs_per_run: Vec<BTreeMap<usize, DiffLsg>> = faulty
        .par_iter()
        .map(|run| -> Result<BTreeMap<usize, DiffLsg>, WorkspaceError> {
            let mut diffs = BTreeMap::new();
            for (f, lsg) in &run.lsgs {
                let diff = diff_lsg(&golden.lsgs[f], lsg).map_err(|e| corrupt(&run.run_id, e))?;
                w.json(&format!("lsg/{}/{f}.json", run.run_id), lsg)?;
                w.json(&format!("diff/{}/{f}.json", run.run_id), &diff)?;
                w.json(
                    &format!("layout/diff/{}/{f}.json", run.run_id),
                    &layout(&diff).map_err(|e| corrupt("diff", e))?,
                )?;
                diffs.insert(*f, diff);
            }
            let injection = run.injection.expect("validated faulty run");
            let statuses = statuses_from_diffs(&golden.symbols, injection.function_index, &diffs)
                .map_err(|e| corrupt(&run.run_id, e))?;
            w.json(&format!("status/{}.json", run.run_id), &statuses)?;
            Ok(diffs)
        })
        .collect::<Result<_, _>>()?;

    // campaign-wide CVGs and ranking
    let mut ranking: Vec<RankedEdge> = Vec::new();
    if !faulty.is_empty() {
        for f in golden.lsgs.keys() {
            let cvg = accumulate(
                faulty
                    .iter()
                    .zip(&diffs_per_run)
                    .map(|(run, diffs)| (run.run_id.as_str(), &diffs[f])),
            )
            .map_err(|e| corrupt(format!("cvg/{f}"), e))?;
            w.json(&format!("cvg/{f}.json"), &cvg)?;
            w.json(
                &format!("layout/cvg/{f}.json"),
                &layout(&cvg).map_err(|e| corrupt("cvg", e))?,
            )?;
            ranking.extend(cvg.ranked_edges());
        }
    }
    ranking.sort_by(rank_order);
    w.json("ranking.json", &ranking)?;
    Ok(summary)
}

fn trace_path(run_id: &str) -> String {
    format!("traces/{run_id}.trace")
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, WorkspaceError> {
    let data = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&data).map_err(|e| WorkspaceError::Corrupt {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Read access to one completed version. Every typed accessor revalidates
/// the artifact it loads.
#[derive(Clone, Debug)]
pub struct Snapshot {
    dir: PathBuf,
    manifest: CampaignManifest,
    symbols: Vec<FunctionRecord>,
}

impl Snapshot {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, WorkspaceError> {
        let dir = dir.into();
        if !dir.join(MANIFEST_FILE).is_file() {
            return Err(WorkspaceError::NotIngested(dir));
        }
        let manifest: CampaignManifest = read_json(&dir.join(MANIFEST_FILE))?;
        let symbols: Vec<FunctionRecord> = read_json(&dir.join("symbols.json"))?;
        let corrupt = |reason: &str| WorkspaceError::Corrupt {
            path: dir.join(MANIFEST_FILE),
            reason: reason.to_string(),
        };
        if crate::trace::symbol_digest(&symbols) != manifest.symbol_digest {
            return Err(corrupt("symbol digest does not match symbols.json"));
        }
        if !manifest.run_ids().all(is_valid_run_id) {
            return Err(corrupt("invalid run id"));
        }
        Ok(Snapshot {
            dir,
            manifest,
            symbols,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &CampaignManifest {
        &self.manifest
    }

    pub fn symbols(&self) -> &[FunctionRecord] {
        &self.symbols
    }

    pub fn symbol(&self, index: usize) -> Result<&FunctionRecord, WorkspaceError> {
        self.symbols
            .binary_search_by_key(&index, |s| s.index)
            .map(|i| &self.symbols[i])
            .map_err(|_| WorkspaceError::NotFound(format!("function {index}")))
    }

    pub fn function_by_name(&self, name: &str) -> Result<&FunctionRecord, WorkspaceError> {
        self.symbols
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| WorkspaceError::NotFound(format!("function `{name}`")))
    }

    pub fn run_list(&self) -> RunList {
        RunList::from_manifest(&self.manifest)
    }

    pub fn run_kind(&self, run_id: &str) -> Result<RunKind, WorkspaceError> {
        if run_id == self.manifest.golden_run_id {
            Ok(RunKind::Golden)
        } else if self.manifest.faulty_run(run_id).is_some() {
            Ok(RunKind::Faulty)
        } else {
            Err(WorkspaceError::NotFound(format!("run `{run_id}`")))
        }
    }

    fn faulty(&self, run_id: &str) -> Result<(), WorkspaceError> {
        match self.run_kind(run_id)? {
            RunKind::Faulty => Ok(()),
            RunKind::Golden => Err(WorkspaceError::BadRequest(format!(
                "`{run_id}` is the golden run; it has no diff against itself"
            ))),
        }
    }

    /// Raw bytes of a persisted artifact, by path relative to the version.
    pub fn read_raw(&self, rel: &str) -> Result<Vec<u8>, WorkspaceError> {
        let path = self.dir.join(rel);
        fs::read(&path).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => WorkspaceError::NotFound(rel.to_string()),
            _ => io_err(&path)(e),
        })
    }

    fn load<T: DeserializeOwned>(&self, rel: &str) -> Result<T, WorkspaceError> {
        let data = self.read_raw(rel)?;
        serde_json::from_slice(&data).map_err(|e| WorkspaceError::Corrupt {
            path: self.dir.join(rel),
            reason: e.to_string(),
        })
    }

    fn check<E: std::fmt::Display>(
        &self,
        rel: &str,
        r: Result<(), E>,
    ) -> Result<(), WorkspaceError> {
        r.map_err(|e| WorkspaceError::Corrupt {
            path: self.dir.join(rel),
            reason: e.to_string(),
        })
    }

    pub fn lsg_path(&self, run_id: &str, function: usize) -> Result<String, WorkspaceError> {
        self.run_kind(run_id)?;
        self.symbol(function)?;
        Ok(format!("lsg/{run_id}/{function}.json"))
    }

    pub fn diff_path(&self, run_id: &str, function: usize) -> Result<String, WorkspaceError> {
        self.faulty(run_id)?;
        self.symbol(function)?;
        Ok(format!("diff/{run_id}/{function}.json"))
    }

    pub fn status_path(&self, run_id: &str) -> Result<String, WorkspaceError> {
        self.faulty(run_id)?;
        Ok(format!("status/{run_id}.json"))
    }

    pub fn cvg_path(&self, function: usize) -> Result<String, WorkspaceError> {
        self.symbol(function)?;
        if self.manifest.runs.is_empty() {
            return Err(WorkspaceError::NotFound(
                "campaign has no faulty runs".into(),
            ));
        }
        Ok(format!("cvg/{function}.json"))
    }

    pub fn lsg(&self, run_id: &str, function: usize) -> Result<Lsg, WorkspaceError> {
        let rel = self.lsg_path(run_id, function)?;
        let lsg: Lsg = self.load(&rel)?;
        self.check(&rel, lsg.validate())?;
        Ok(lsg)
    }

    pub fn diff(&self, run_id: &str, function: usize) -> Result<DiffLsg, WorkspaceError> {
        let rel = self.diff_path(run_id, function)?;
        let diff: DiffLsg = self.load(&rel)?;
        self.check(&rel, diff.validate())?;
        Ok(diff)
    }

    pub fn statuses(&self, run_id: &str) -> Result<Vec<FunctionStatus>, WorkspaceError> {
        let rel = self.status_path(run_id)?;
        let statuses: Vec<FunctionStatus> = self.load(&rel)?;
        let ordered = statuses.len() == self.symbols.len()
            && statuses
                .iter()
                .zip(&self.symbols)
                .all(|(s, f)| s.function_index == f.index && s.name == f.name);
        let markers = statuses.iter().filter(|s| s.is_injection_site).count();
        if !ordered || markers != 1 {
            return Err(WorkspaceError::Corrupt {
                path: self.dir.join(&rel),
                reason: "statuses do not line up with the symbol table".into(),
            });
        }
        Ok(statuses)
    }

    pub fn cvg(&self, function: usize) -> Result<Cvg, WorkspaceError> {
        let rel = self.cvg_path(function)?;
        let cvg: Cvg = self.load(&rel)?;
        self.check(&rel, cvg.validate())?;
        Ok(cvg)
    }

    pub fn ranking(&self, top: Option<usize>) -> Result<Vec<RankedEdge>, WorkspaceError> {
        let mut all: Vec<RankedEdge> = self.load("ranking.json")?;
        if let Some(k) = top {
            all.truncate(k);
        }
        Ok(all)
    }

    fn layout_at(&self, rel: &str) -> Result<LayoutGraph, WorkspaceError> {
        self.load(rel)
    }

    fn styled<G: WeightedGraph>(
        &self,
        graph: &G,
        layout_rel: &str,
        threshold: u64,
    ) -> Result<StyledGraph, WorkspaceError> {
        let layout = self.layout_at(layout_rel)?;
        let mut styled =
            anomaly_map(graph, threshold, &layout).map_err(|e| WorkspaceError::Corrupt {
                path: self.dir.join(layout_rel),
                reason: e.to_string(),
            })?;
        styled.attach_source(self.symbol(graph.function_index())?);
        Ok(styled)
    }

    /// Styled graph for the graph view: the diff of `run_id`, or the golden
    /// LSG for [`View::Global`].
    pub fn styled_graph(
        &self,
        run_id: &str,
        function: usize,
        view: View,
        threshold: u64,
    ) -> Result<StyledGraph, WorkspaceError> {
        match view {
            View::Diff => {
                let diff = self.diff(run_id, function)?;
                self.styled(
                    &diff,
                    &format!("layout/diff/{run_id}/{function}.json"),
                    threshold,
                )
            }
            View::Global => {
                self.run_kind(run_id)?;
                let golden = self.lsg(&self.manifest.golden_run_id, function)?;
                self.styled(
                    &golden,
                    &format!("layout/global/{function}.json"),
                    threshold,
                )
            }
        }
    }

    pub fn cvg_styled(
        &self,
        function: usize,
        threshold: u64,
    ) -> Result<StyledGraph, WorkspaceError> {
        let cvg = self.cvg(function)?;
        self.styled(&cvg, &format!("layout/cvg/{function}.json"), threshold)
    }

    /// JSON exports are the persisted artifact verbatim; SVG and DOT render
    /// the styled graph at `threshold`.
    pub fn export(
        &self,
        run_id: &str,
        function: usize,
        format: ExportFormat,
        threshold: u64,
        view: View,
    ) -> Result<Vec<u8>, WorkspaceError> {
        match format {
            ExportFormat::Json => {
                let rel = match view {
                    View::Diff => self.diff_path(run_id, function)?,
                    View::Global => {
                        self.run_kind(run_id)?;
                        self.lsg_path(&self.manifest.golden_run_id, function)?
                    }
                };
                // load once for validation, then hand out the stored bytes
                match view {
                    View::Diff => drop(self.diff(run_id, function)?),
                    View::Global => drop(self.lsg(&self.manifest.golden_run_id, function)?),
                }
                self.read_raw(&rel)
            }
            ExportFormat::Svg => Ok(export::to_svg(
                &self.styled_graph(run_id, function, view, threshold)?,
            )
            .into_bytes()),
            ExportFormat::Dot => Ok(export::to_dot(
                &self.styled_graph(run_id, function, view, threshold)?,
            )
            .into_bytes()),
        }
    }
}
