//! COP grid enumeration, parallel sweep execution and the labelled dataset.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::handover::{
    simulate, CopVector, EventConfig, HoCounters, KpiSample, RadioTrace, SimConfig, TTT_VALUES_MS, THRESHOLD_MAX_DBM,
    THRESHOLD_MIN_DBM,
};
use crate::mobility::spawn_users;
use crate::scenario::{build_layout, NetworkLayout};

pub const DATASET_SCHEMA_VERSION: u32 = 1;
pub const DATASET_HEADER: &str = "ttt_ms,th1_dbm,th2_dbm,seed,mean_rsrp_dbm,hosr_pct,hos,hof";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdRange {
    pub min_dbm: i32,
    pub max_dbm: i32,
    pub step_db: i32,
}

impl Default for ThresholdRange {
    fn default() -> Self {
        Self {
            min_dbm: THRESHOLD_MIN_DBM,
            max_dbm: THRESHOLD_MAX_DBM,
            step_db: 1,
        }
    }
}

impl ThresholdRange {
    pub fn new(min_dbm: i32, max_dbm: i32, step_db: i32) -> Self {
        Self { min_dbm, max_dbm, step_db }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        if self.step_db <= 0 || self.min_dbm > self.max_dbm || (self.max_dbm - self.min_dbm) % self.step_db != 0 {
            return Err(Error::Config(format!(
                "sweep: {name} range {}..{} step {} is empty or not evenly divided",
                self.min_dbm, self.max_dbm, self.step_db
            )));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<i32> {
        (self.min_dbm..=self.max_dbm).step_by(self.step_db.max(1) as usize).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub ttt_values: Vec<u32>,
    pub th1_range: ThresholdRange,
    pub th2_range: ThresholdRange,
    pub seeds: Vec<u64>,
    pub duration_s: f64,
    pub step_ms: u32,
    pub warmup_s: f64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        let sim = SimConfig::default();
        Self {
            ttt_values: TTT_VALUES_MS.to_vec(),
            th1_range: ThresholdRange::default(),
            th2_range: ThresholdRange::default(),
            seeds: vec![1, 2, 3],
            duration_s: sim.duration_s,
            step_ms: sim.step_ms,
            warmup_s: sim.warmup_s,
        }
    }
}

impl SweepSpec {
    pub fn sim(&self) -> SimConfig {
        SimConfig {
            duration_s: self.duration_s,
            step_ms: self.step_ms,
            warmup_s: self.warmup_s,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ttt_values.is_empty() || self.ttt_values.contains(&0) {
            return Err(Error::Config("sweep: ttt_values must hold positive values".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("sweep: seeds must not be empty".into()));
        }
        self.th1_range.validate("th1")?;
        self.th2_range.validate("th2")?;
        let sim = self.sim();
        sim.validate()?;
        if let Some(t) = self.ttt_values.iter().find(|t| *t % self.step_ms != 0) {
            return Err(Error::Config(format!("sweep: TTT {t} ms is not a multiple of the {} ms step", self.step_ms)));
        }
        Ok(())
    }
}

/// Cartesian product of the sweep ranges in lexicographic `(ttt, th1, th2)` order.
pub fn cop_grid(spec: &SweepSpec) -> Result<Vec<CopVector>> {
    if spec.ttt_values.is_empty() {
        return Err(Error::Config("sweep: ttt_values must not be empty".into()));
    }
    spec.th1_range.validate("th1")?;
    spec.th2_range.validate("th2")?;
    let ttts: BTreeSet<u32> = spec.ttt_values.iter().copied().collect();
    let th1 = spec.th1_range.values();
    let th2 = spec.th2_range.values();
    let mut grid = Vec::with_capacity(ttts.len() * th1.len() * th2.len());
    for &t in &ttts {
        for &a in &th1 {
            for &b in &th2 {
                grid.push(CopVector::new(t, a, b));
            }
        }
    }
    Ok(grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub cop: CopVector,
    pub seed: u64,
    pub kpi: KpiSample,
    pub counters: HoCounters,
}

impl DatasetRow {
    pub fn key(&self) -> (CopVector, u64) {
        (self.cop, self.seed)
    }

    fn to_csv_line(self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}\n",
            self.cop.ttt_ms,
            self.cop.th1_dbm,
            self.cop.th2_dbm,
            self.seed,
            self.kpi.mean_rsrp_dbm,
            self.kpi.hosr_pct,
            self.counters.hos,
            self.counters.hof
        )
    }

    fn parse_csv_line(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return None;
        }
        Some(Self {
            cop: CopVector::new(f[0].parse().ok()?, f[1].parse().ok()?, f[2].parse().ok()?),
            seed: f[3].parse().ok()?,
            kpi: KpiSample {
                mean_rsrp_dbm: f[4].parse().ok()?,
                hosr_pct: f[5].parse().ok()?,
            },
            counters: HoCounters {
                hos: f[6].parse().ok()?,
                hof: f[7].parse().ok()?,
            },
        })
    }
}

/// Sidecar document describing the scenario a dataset was generated from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub fingerprint: String,
    pub scenario: ScenarioConfig,
}

impl DatasetManifest {
    pub fn new(scenario: &ScenarioConfig) -> Self {
        Self {
            schema_version: DATASET_SCHEMA_VERSION,
            fingerprint: scenario.fingerprint(),
            scenario: scenario.clone(),
        }
    }
}

/// `results/dataset.csv` -> `results/dataset.json`.
pub fn manifest_path_for(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Per-COP KPI averaged over seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregatedPoint {
    pub cop: CopVector,
    pub mean_rsrp_dbm: f64,
    pub hosr_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema_version: u32,
    pub fingerprint: String,
    pub rows: Vec<DatasetRow>,
}

impl Dataset {
    pub fn new(fingerprint: impl Into<String>, mut rows: Vec<DatasetRow>) -> Result<Self> {
        rows.sort_by_key(DatasetRow::key);
        if let Some(w) = rows.windows(2).find(|w| w[0].key() == w[1].key()) {
            return Err(Error::Config(format!("duplicate dataset row for {} seed {}", w[0].cop, w[0].seed)));
        }
        Ok(Self {
            schema_version: DATASET_SCHEMA_VERSION,
            fingerprint: fingerprint.into(),
            rows,
        })
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = String::with_capacity(64 * (self.rows.len() + 1));
        s.push_str(DATASET_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.to_csv_line());
        }
        s
    }

    /// Writes the sorted CSV and its manifest sidecar, each via a temporary
    /// file and rename.
    pub fn save(&self, csv_path: &Path, manifest: &DatasetManifest) -> Result<()> {
        write_atomic(&manifest_path_for(csv_path), &serde_json::to_vec_pretty(manifest)?)?;
        write_atomic(csv_path, self.to_csv_string().as_bytes())
    }

    /// Loads a dataset CSV together with its manifest sidecar.
    pub fn load(csv_path: &Path) -> Result<(Self, DatasetManifest)> {
        let manifest = read_manifest(csv_path)?;
        let rows = read_rows(csv_path, false)?;
        let ds = Self::new(manifest.fingerprint.clone(), rows)?;
        Ok((ds, manifest))
    }

    /// Mean of each KPI over seeds, one entry per distinct COP, sorted by COP.
    pub fn aggregate(&self) -> Vec<AggregatedPoint> {
        let mut acc: BTreeMap<CopVector, (f64, f64, usize)> = BTreeMap::new();
        for r in &self.rows {
            let e = acc.entry(r.cop).or_insert((0.0, 0.0, 0));
            e.0 += r.kpi.mean_rsrp_dbm;
            e.1 += r.kpi.hosr_pct;
            e.2 += 1;
        }
        acc.into_iter()
            .map(|(cop, (rsrp, hosr, n))| AggregatedPoint {
                cop,
                mean_rsrp_dbm: rsrp / n as f64,
                hosr_pct: hosr / n as f64,
            })
            .collect()
    }
}

pub fn read_manifest(csv_path: &Path) -> Result<DatasetManifest> {
    let path = manifest_path_for(csv_path);
    let text = fs::read_to_string(&path)?;
    serde_json::from_str(&text).map_err(|e| Error::Malformed {
        what: "dataset manifest",
        path,
        reason: e.to_string(),
    })
}

/// Parses dataset rows. With `tolerate_torn_tail`, an unparsable final line
/// without a trailing newline (an interrupted append) is dropped.
fn read_rows(path: &Path, tolerate_torn_tail: bool) -> Result<Vec<DatasetRow>> {
    let text = fs::read_to_string(path)?;
    let malformed = |reason: String| Error::Malformed {
        what: "dataset CSV",
        path: path.to_path_buf(),
        reason,
    };
    let mut lines = text.split_inclusive('\n');
    match lines.next() {
        Some(h) if h.trim_end() == DATASET_HEADER => {}
        None if tolerate_torn_tail => return Ok(Vec::new()),
        _ => return Err(malformed("missing or wrong header".into())),
    }
    let mut rows = Vec::new();
    for (i, raw) in lines.enumerate() {
        let complete = raw.ends_with('\n');
        let line = raw.trim_end();
        if line.is_empty() {
            continue;
        }
        match DatasetRow::parse_csv_line(line) {
            Some(r) => rows.push(r),
            None if tolerate_torn_tail && !complete => break,
            None => return Err(malformed(format!("line {}: {line:?}", i + 2))),
        }
    }
    Ok(rows)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub type ProgressFn<'a> = &'a (dyn Fn(usize, usize) + Sync);

pub struct SweepOptions<'a> {
    /// Worker threads; 0 means the rayon default.
    pub parallelism: usize,
    /// CSV path receiving rows as they complete; the sorted dataset replaces it at the end.
    pub output: Option<PathBuf>,
    /// Keep rows already present in `output` and only run the missing keys.
    pub resume: bool,
    pub progress: Option<ProgressFn<'a>>,
}

impl Default for SweepOptions<'_> {
    fn default() -> Self {
        Self {
            parallelism: 0,
            output: None,
            resume: false,
            progress: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub dataset: Dataset,
    /// Simulations actually executed by this call.
    pub executed: usize,
}

struct RowSink {
    file: Option<File>,
    done: usize,
}

/// Runs one simulation per (grid point, seed).
///
/// Runs sharing a seed share one radio trace. Completed rows are appended to
/// `opts.output` immediately so an interrupted sweep can resume by key; the
/// final file is the sorted dataset, identical for any degree of parallelism.
pub fn run_sweep(scenario: &ScenarioConfig, opts: &SweepOptions<'_>) -> Result<SweepResult> {
    scenario.validate()?;
    let layout = build_layout(&scenario.network)?;
    let spec = &scenario.sweep;
    let sim = spec.sim();
    let grid = cop_grid(spec)?;
    for cop in &grid {
        sim.validate_event(&EventConfig::new(*cop, scenario.event.clone()))?;
    }
    let manifest = DatasetManifest::new(scenario);
    let wanted: BTreeSet<(CopVector, u64)> = grid
        .iter()
        .flat_map(|c| spec.seeds.iter().map(move |s| (*c, *s)))
        .collect();

    let mut existing: Vec<DatasetRow> = Vec::new();
    if let (Some(path), true) = (&opts.output, opts.resume) {
        if path.exists() {
            if let Ok(old) = read_manifest(path) {
                if old.fingerprint != manifest.fingerprint {
                    return Err(Error::FingerprintMismatch {
                        expected: manifest.fingerprint.clone(),
                        found: old.fingerprint,
                    });
                }
            }
            let mut seen = BTreeSet::new();
            existing = read_rows(path, true)?
                .into_iter()
                .filter(|r| wanted.contains(&r.key()) && seen.insert(r.key()))
                .collect();
        }
    }

    let sink = match &opts.output {
        Some(path) => {
            let partial = Dataset::new(manifest.fingerprint.clone(), existing.clone())?;
            partial.save(path, &manifest)?;
            Some(OpenOptions::new().append(true).open(path)?)
        }
        None => None,
    };

    let have: BTreeSet<(CopVector, u64)> = existing.iter().map(DatasetRow::key).collect();
    let mut todo: BTreeMap<u64, Vec<CopVector>> = BTreeMap::new();
    for (cop, seed) in wanted.iter().filter(|k| !have.contains(k)) {
        todo.entry(*seed).or_default().push(*cop);
    }
    let total: usize = todo.values().map(Vec::len).sum();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.parallelism)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let sink = Mutex::new(RowSink { file: sink, done: 0 });

    let new_rows: Vec<DatasetRow> = pool.install(|| -> Result<Vec<DatasetRow>> {
        let mut out = Vec::with_capacity(total);
        for (&seed, cops) in &todo {
            let users = spawn_users(&scenario.mobility, scenario.network.area_side_m, seed)?;
            let trace = RadioTrace::build(&layout, &users, seed, &sim)?;
            let rows: Vec<DatasetRow> = cops
                .par_iter()
                .map(|cop| {
                    let row = run_point(&layout, &trace, scenario, *cop, seed, &sim)?;
                    let mut s = sink.lock().expect("sink lock");
                    if let Some(f) = s.file.as_mut() {
                        f.write_all(row.to_csv_line().as_bytes())?;
                        f.flush()?;
                    }
                    s.done += 1;
                    if let Some(progress) = opts.progress {
                        progress(s.done, total);
                    }
                    Ok(row)
                })
                .collect::<Result<_>>()?;
            out.extend(rows);
        }
        Ok(out)
    })?;

    let executed = new_rows.len();
    let mut rows = existing;
    rows.extend(new_rows);
    let dataset = Dataset::new(manifest.fingerprint.clone(), rows)?;
    if let Some(path) = &opts.output {
        drop(sink);
        dataset.save(path, &manifest)?;
    }
    Ok(SweepResult { dataset, executed })
}

fn run_point(
    layout: &NetworkLayout,
    trace: &RadioTrace,
    scenario: &ScenarioConfig,
    cop: CopVector,
    seed: u64,
    sim: &SimConfig,
) -> Result<DatasetRow> {
    let cfg = EventConfig::new(cop, scenario.event.clone());
    let out = simulate(layout, trace, &cfg, sim, None).map_err(|e| match e {
        Error::Config(_) => e,
        other => Error::Run {
            cop,
            reason: other.to_string(),
        },
    })?;
    Ok(DatasetRow {
        cop,
        seed,
        kpi: out.kpi,
        counters: out.counters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_has_4805_points() {
        let grid = cop_grid(&SweepSpec::default()).unwrap();
        assert_eq!(grid.len(), 4805);
        assert_eq!(grid[0], CopVector::new(64, -120, -120));
        assert_eq!(grid[4804], CopVector::new(512, -90, -90));
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn coarse_grid() {
        let spec = SweepSpec {
            ttt_values: vec![64],
            th1_range: ThresholdRange::new(-120, -90, 15),
            th2_range: ThresholdRange::new(-120, -90, 15),
            ..Default::default()
        };
        let grid = cop_grid(&spec).unwrap();
        assert_eq!(grid.len(), 9);
        assert_eq!(grid, cop_grid(&spec).unwrap());
        assert_eq!(grid[1], CopVector::new(64, -120, -105));
    }

    #[test]
    fn rejects_empty_or_uneven_ranges() {
        let mut spec = SweepSpec::default();
        spec.ttt_values.clear();
        assert!(cop_grid(&spec).is_err());
        let spec = SweepSpec {
            th1_range: ThresholdRange::new(-90, -120, 1),
            ..Default::default()
        };
        assert!(cop_grid(&spec).is_err());
        let spec = SweepSpec {
            th2_range: ThresholdRange::new(-120, -90, 7),
            ..Default::default()
        };
        assert!(cop_grid(&spec).is_err());
    }

    #[test]
    fn csv_line_round_trips() {
        let row = DatasetRow {
            cop: CopVector::new(128, -104, -110),
            seed: 3,
            kpi: KpiSample {
                mean_rsrp_dbm: -88.123456789012345,
                hosr_pct: 97.5,
            },
            counters: HoCounters { hos: 39, hof: 1 },
        };
        let line = row.to_csv_line();
        assert_eq!(DatasetRow::parse_csv_line(line.trim_end()), Some(row));
    }

    #[test]
    fn aggregation_averages_seeds() {
        let mk = |seed, rsrp, hosr| DatasetRow {
            cop: CopVector::new(64, -100, -100),
            seed,
            kpi: KpiSample {
                mean_rsrp_dbm: rsrp,
                hosr_pct: hosr,
            },
            counters: HoCounters::default(),
        };
        let ds = Dataset::new("fp", vec![mk(1, -90.0, 100.0), mk(2, -92.0, 90.0)]).unwrap();
        let agg = ds.aggregate();
        assert_eq!(agg.len(), 1);
        assert_eq!(agg[0].mean_rsrp_dbm, -91.0);
        assert_eq!(agg[0].hosr_pct, 95.0);
        assert!(Dataset::new("fp", vec![mk(1, -90.0, 100.0), mk(1, -90.0, 100.0)]).is_err());
    }
}
