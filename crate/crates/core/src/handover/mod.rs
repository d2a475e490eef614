//! Measurement events, time-to-trigger timers and KPI accounting.

mod engine;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use engine::{
    run_simulation, simulate, write_event_csv, EventKind, EventRecord, RadioTrace, SimConfig, SimOutcome,
};

/// Admissible A5 time-to-trigger values in milliseconds.
pub const TTT_VALUES_MS: [u32; 5] = [64, 128, 256, 320, 512];
pub const THRESHOLD_MIN_DBM: i32 = -120;
pub const THRESHOLD_MAX_DBM: i32 = -90;
/// Serving RSRP floor below which an executing handover fails. Calibrated so
/// the failure model yields a spread of success rates over the threshold box
/// for the default radio scenario (a floor of -123 dBm is never reached there).
pub const DEFAULT_RLF_THRESHOLD_DBM: f64 = -105.0;

/// One point of the A5 parameter space. Ordering is lexicographic on
/// `(ttt_ms, th1_dbm, th2_dbm)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CopVector {
    pub ttt_ms: u32,
    pub th1_dbm: i32,
    pub th2_dbm: i32,
}

impl CopVector {
    pub const fn new(ttt_ms: u32, th1_dbm: i32, th2_dbm: i32) -> Self {
        Self { ttt_ms, th1_dbm, th2_dbm }
    }

    pub fn features(&self) -> [f64; 3] {
        [self.ttt_ms as f64, self.th1_dbm as f64, self.th2_dbm as f64]
    }

    /// True when the point lies inside the standard parameter box.
    pub fn in_standard_box(&self) -> bool {
        let th = THRESHOLD_MIN_DBM..=THRESHOLD_MAX_DBM;
        TTT_VALUES_MS.contains(&self.ttt_ms) && th.contains(&self.th1_dbm) && th.contains(&self.th2_dbm)
    }
}

impl fmt::Display for CopVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{} ms, {} dBm, {} dBm]", self.ttt_ms, self.th1_dbm, self.th2_dbm)
    }
}

/// Event parameters that stay fixed across a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EventParams {
    pub hyst_db: f64,
    /// Cell individual offset per target cell id; missing entries are 0 dB.
    pub cio_db: Vec<f64>,
    pub a3_offset_db: f64,
    pub a3_ttt_ms: u32,
    /// Serving RSRP floor during handover execution; `None` disables failures.
    pub rlf_threshold_dbm: Option<f64>,
    pub exec_delay_ms: u32,
    /// Layer-3 filter coefficient k (filter weight 2^(-k/4)); `None` disables filtering.
    pub l3_filter_k: Option<u32>,
}

impl Default for EventParams {
    fn default() -> Self {
        Self {
            hyst_db: 0.0,
            cio_db: Vec::new(),
            a3_offset_db: 2.0,
            a3_ttt_ms: 160,
            rlf_threshold_dbm: Some(DEFAULT_RLF_THRESHOLD_DBM),
            exec_delay_ms: 64,
            l3_filter_k: None,
        }
    }
}

impl EventParams {
    pub fn cio(&self, target: usize) -> f64 {
        self.cio_db.get(target).copied().unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.hyst_db.is_finite() || !self.a3_offset_db.is_finite() || self.cio_db.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config("event: offsets must be finite".into()));
        }
        if matches!(self.rlf_threshold_dbm, Some(t) if t.is_nan()) {
            return Err(Error::Config("event: rlf_threshold_dbm is NaN".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventConfig {
    pub cop: CopVector,
    #[serde(flatten)]
    pub params: EventParams,
}

impl EventConfig {
    pub fn new(cop: CopVector, params: EventParams) -> Self {
        Self { cop, params }
    }
}

/// A5 entering condition: serving below threshold1 and target above threshold2.
pub fn a5_entering(serving_rsrp_dbm: f64, target_rsrp_dbm: f64, cio_db: f64, cfg: &EventConfig) -> bool {
    let hyst = cfg.params.hyst_db;
    serving_rsrp_dbm + hyst < f64::from(cfg.cop.th1_dbm) && target_rsrp_dbm + cio_db - hyst > f64::from(cfg.cop.th2_dbm)
}

/// A3 entering condition: neighbour better than serving by offset plus hysteresis.
pub fn a3_entering(serving_rsrp_dbm: f64, target_rsrp_dbm: f64, cfg: &EventConfig) -> bool {
    target_rsrp_dbm > serving_rsrp_dbm + cfg.params.a3_offset_db + cfg.params.hyst_db
}

/// Time-to-trigger accumulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TttTimer {
    pub accumulated_ms: u32,
}

impl TttTimer {
    /// Advances the timer by one step and reports whether it fired.
    pub fn update(&mut self, condition_holds: bool, step_ms: u32, ttt_ms: u32) -> bool {
        if condition_holds {
            self.accumulated_ms += step_ms;
            self.accumulated_ms >= ttt_ms
        } else {
            self.accumulated_ms = 0;
            false
        }
    }

    pub fn reset(&mut self) {
        self.accumulated_ms = 0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HoOutcome {
    Success,
    Failure,
}

/// Classifies a handover attempt from the serving RSRP samples taken over
/// its execution window.
pub fn resolve_handover(serving_trace_dbm: &[f64], rlf_threshold_dbm: Option<f64>) -> HoOutcome {
    match rlf_threshold_dbm {
        Some(floor) if serving_trace_dbm.iter().any(|&r| r < floor) => HoOutcome::Failure,
        _ => HoOutcome::Success,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HoCounters {
    pub hos: u64,
    pub hof: u64,
}

impl HoCounters {
    pub fn attempts(&self) -> u64 {
        self.hos + self.hof
    }

    pub fn record(&mut self, outcome: HoOutcome) {
        match outcome {
            HoOutcome::Success => self.hos += 1,
            HoOutcome::Failure => self.hof += 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KpiSample {
    pub mean_rsrp_dbm: f64,
    pub hosr_pct: f64,
}

/// Arithmetic mean of dBm samples.
pub fn mean_rsrp(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("RSRP sample set"));
    }
    Ok(samples.iter().sum::<f64>() / samples.len() as f64)
}

/// Handover success rate in percent; 100 when nothing was attempted.
pub fn hosr(counters: &HoCounters) -> f64 {
    match counters.attempts() {
        0 => 100.0,
        n => 100.0 * counters.hos as f64 / n as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(th1: i32, th2: i32, hyst: f64) -> EventConfig {
        EventConfig::new(
            CopVector::new(64, th1, th2),
            EventParams { hyst_db: hyst, ..Default::default() },
        )
    }

    #[test]
    fn a5_examples() {
        assert!(a5_entering(-112.0, -100.0, 0.0, &cfg(-110, -105, 0.0)));
        assert!(!a5_entering(-95.0, -100.0, 0.0, &cfg(-110, -105, 0.0)));
        assert!(!a5_entering(-111.0, -100.0, 0.0, &cfg(-110, -105, 2.0)));
        // strict inequalities
        assert!(!a5_entering(-110.0, -100.0, 0.0, &cfg(-110, -105, 0.0)));
        assert!(!a5_entering(-112.0, -105.0, 0.0, &cfg(-110, -105, 0.0)));
        assert!(a5_entering(-112.0, -105.0, 0.5, &cfg(-110, -105, 0.0)));
    }

    #[test]
    fn a3_examples() {
        let c = cfg(-110, -105, 0.0);
        assert!(a3_entering(-95.0, -90.0, &c));
        assert!(!a3_entering(-95.0, -93.0, &c));
        assert!(!a3_entering(-95.0, -91.0, &cfg(-110, -105, 2.0)));
    }

    #[test]
    fn ttt_fires_on_second_step() {
        let mut t = TttTimer::default();
        assert!(!t.update(true, 32, 64));
        assert!(t.update(true, 32, 64));
    }

    #[test]
    fn ttt_resets_when_condition_breaks() {
        let mut t = TttTimer::default();
        assert!(!t.update(true, 32, 64));
        assert!(!t.update(false, 32, 64));
        assert!(!t.update(true, 32, 64));
        assert_eq!(t.accumulated_ms, 32);
    }

    #[test]
    fn ttt_512_needs_sixteen_steps() {
        let mut t = TttTimer::default();
        for _ in 0..15 {
            assert!(!t.update(true, 32, 512));
        }
        assert_eq!(t.accumulated_ms, 480);
        assert!(t.update(true, 32, 512));
    }

    #[test]
    fn resolve_examples() {
        assert_eq!(resolve_handover(&[-110.0, -112.0], Some(-123.0)), HoOutcome::Success);
        assert_eq!(resolve_handover(&[-120.0, -124.0], Some(-123.0)), HoOutcome::Failure);
        assert_eq!(resolve_handover(&[-200.0], None), HoOutcome::Success);
    }

    #[test]
    fn kpi_helpers() {
        assert_eq!(mean_rsrp(&[-100.0, -110.0, -120.0]).unwrap(), -110.0);
        assert_eq!(mean_rsrp(&[-97.5]).unwrap(), -97.5);
        assert!(matches!(mean_rsrp(&[]), Err(Error::Empty(_))));
        assert_eq!(hosr(&HoCounters { hos: 94, hof: 6 }), 94.0);
        assert_eq!(hosr(&HoCounters::default()), 100.0);
        assert_eq!(hosr(&HoCounters { hos: 0, hof: 3 }), 0.0);
    }

    #[test]
    fn cop_ordering_is_lexicographic() {
        let mut v = vec![
            CopVector::new(128, -120, -90),
            CopVector::new(64, -90, -120),
            CopVector::new(64, -120, -100),
            CopVector::new(64, -120, -110),
        ];
        v.sort();
        assert_eq!(v[0], CopVector::new(64, -120, -110));
        assert_eq!(v[3], CopVector::new(128, -120, -90));
        assert_eq!(v[0].to_string(), "[64 ms, -120 dBm, -110 dBm]");
    }
}
