use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    a3_entering, a5_entering, hosr, mean_rsrp, resolve_handover, EventConfig, HoCounters, HoOutcome, KpiSample,
    TttTimer,
};
use crate::error::{Error, Result};
use crate::mobility::{spawn_users, MobilityConfig, User, Walker};
use crate::scenario::{strongest, NetworkLayout, ShadowField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub duration_s: f64,
    pub step_ms: u32,
    /// Initial period excluded from KPI accumulation.
    pub warmup_s: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            duration_s: 120.0,
            step_ms: 32,
            warmup_s: 10.0,
        }
    }
}

impl SimConfig {
    pub fn n_steps(&self) -> usize {
        (self.duration_s * 1000.0 / f64::from(self.step_ms)).floor() as usize
    }

    /// First step index whose time stamp is past the warm-up.
    pub fn first_kpi_step(&self) -> usize {
        ((self.warmup_s * 1000.0 / f64::from(self.step_ms)).ceil() as usize).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.step_ms == 0 {
            return Err(Error::Config("sim: step_ms must be positive".into()));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::Config("sim: duration_s must be positive".into()));
        }
        if !(self.warmup_s >= 0.0) || self.first_kpi_step() > self.n_steps() {
            return Err(Error::Config("sim: warm-up must be shorter than the run".into()));
        }
        Ok(())
    }

    fn check_divisible(&self, name: &str, ms: u32) -> Result<()> {
        if ms % self.step_ms != 0 {
            return Err(Error::Config(format!("{name} = {ms} ms is not a multiple of the {} ms step", self.step_ms)));
        }
        Ok(())
    }

    pub fn validate_event(&self, cfg: &EventConfig) -> Result<()> {
        self.validate()?;
        cfg.params.validate()?;
        self.check_divisible("A5 TTT", cfg.cop.ttt_ms)?;
        self.check_divisible("A3 TTT", cfg.params.a3_ttt_ms)?;
        self.check_divisible("execution delay", cfg.params.exec_delay_ms)
    }
}

/// RSRP of every user towards every cell at every step.
///
/// User motion and shadowing do not depend on the event parameters, so one
/// trace serves every parameter point simulated with the same seed.
#[derive(Debug, Clone)]
pub struct RadioTrace {
    n_rows: usize,
    n_users: usize,
    n_cells: usize,
    /// user-major: `[user][row][cell]`; row 0 is the initial position.
    rsrp: Vec<f64>,
}

impl RadioTrace {
    pub fn build(layout: &NetworkLayout, users: &[User], seed: u64, sim: &SimConfig) -> Result<Self> {
        sim.validate()?;
        if users.is_empty() {
            return Err(Error::Config("simulation has zero users".into()));
        }
        let n_rows = sim.n_steps() + 1;
        let n_cells = layout.cells.len();
        let shadow = ShadowField::for_layout(layout, seed);
        let dt = f64::from(sim.step_ms) / 1000.0;
        let side = layout.config.area_side_m;
        let mut rsrp = vec![0.0; users.len() * n_rows * n_cells];
        rsrp.par_chunks_mut(n_rows * n_cells)
            .zip(users.par_iter())
            .for_each(|(block, user)| {
                let mut walker = Walker::new(user.clone(), seed);
                for (row, out) in block.chunks_mut(n_cells).enumerate() {
                    if row > 0 {
                        walker.step(dt, side);
                    }
                    layout.rsrp_all(walker.user.position, &shadow, out);
                }
            });
        Ok(Self {
            n_rows,
            n_users: users.len(),
            n_cells,
            rsrp,
        })
    }

    pub fn n_steps(&self) -> usize {
        self.n_rows - 1
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    /// RSRP towards every cell for `user` at step `row`.
    pub fn row(&self, user: usize, row: usize) -> &[f64] {
        let start = (user * self.n_rows + row) * self.n_cells;
        &self.rsrp[start..start + self.n_cells]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    A5Trigger,
    HoSuccess,
    HoFail,
    A3Ho,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::A5Trigger => "a5_trigger",
            EventKind::HoSuccess => "ho_success",
            EventKind::HoFail => "ho_fail",
            EventKind::A3Ho => "a3_ho",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub step: usize,
    pub user_id: usize,
    pub event: EventKind,
    pub source_cell: usize,
    pub target_cell: usize,
    pub serving_rsrp: f64,
}

pub fn write_event_csv<W: Write>(records: &[EventRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "user_id", "event", "source_cell", "target_cell", "serving_rsrp"])?;
    for r in records {
        w.write_record([
            r.step.to_string(),
            r.user_id.to_string(),
            r.event.as_str().to_string(),
            r.source_cell.to_string(),
            r.target_cell.to_string(),
            r.serving_rsrp.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub kpi: KpiSample,
    pub counters: HoCounters,
}

#[derive(Debug, Clone)]
struct Pending {
    source: usize,
    target: usize,
    started: usize,
    counted: bool,
    window: Vec<f64>,
}

#[derive(Debug, Clone)]
struct UeState {
    serving: usize,
    a3: Vec<TttTimer>,
    a5: Vec<TttTimer>,
    filtered: Vec<f64>,
    pending: Option<Pending>,
}

impl UeState {
    fn reset_timers(&mut self) {
        self.a3.iter_mut().chain(self.a5.iter_mut()).for_each(TttTimer::reset);
    }
}

struct Engine<'a> {
    layout: &'a NetworkLayout,
    cfg: &'a EventConfig,
    step_ms: u32,
    exec_steps: usize,
    l3_weight: Option<f64>,
    counters: HoCounters,
    log: Option<&'a mut Vec<EventRecord>>,
}

impl Engine<'_> {
    fn emit(&mut self, step: usize, user_id: usize, event: EventKind, source: usize, target: usize, rsrp: f64) {
        if let Some(log) = self.log.as_deref_mut() {
            log.push(EventRecord {
                step,
                user_id,
                event,
                source_cell: source,
                target_cell: target,
                serving_rsrp: rsrp,
            });
        }
    }

    /// Adds this step's source sample to the execution window and resolves
    /// the attempt once it fails or the window has elapsed.
    fn progress_pending(&mut self, st: &mut UeState, user_id: usize, step: usize, raw: &[f64]) {
        let Some(p) = st.pending.as_mut() else { return };
        p.window.push(raw[p.source]);
        let outcome = resolve_handover(&p.window, self.cfg.params.rlf_threshold_dbm);
        let done = step - p.started >= self.exec_steps;
        if outcome == HoOutcome::Success && !done {
            return;
        }
        let p = st.pending.take().expect("pending attempt");
        if p.counted {
            self.counters.record(outcome);
        }
        let rsrp = raw[p.source];
        match outcome {
            HoOutcome::Success => {
                st.serving = p.target;
                self.emit(step, user_id, EventKind::HoSuccess, p.source, p.target, rsrp);
            }
            HoOutcome::Failure => {
                st.serving = strongest(raw, |_| true).expect("non-empty layout");
                self.emit(step, user_id, EventKind::HoFail, p.source, p.target, rsrp);
            }
        }
        st.reset_timers();
    }

    fn evaluate_events(&mut self, st: &mut UeState, user_id: usize, step: usize, raw: &[f64], counted: bool) {
        let meas: &[f64] = if self.l3_weight.is_some() { &st.filtered } else { raw };
        let cells = &self.layout.cells;
        let serving = st.serving;
        let serving_cell = &cells[serving];
        let cop = self.cfg.cop;
        let params = &self.cfg.params;
        let mut a3_best: Option<usize> = None;
        let mut a5_best: Option<usize> = None;
        for (c, cell) in cells.iter().enumerate() {
            if c == serving {
                continue;
            }
            if cell.is_same_carrier(serving_cell) {
                let holds = a3_entering(meas[serving], meas[c], self.cfg);
                if st.a3[c].update(holds, self.step_ms, params.a3_ttt_ms)
                    && a3_best.map_or(true, |b| meas[c] > meas[b])
                {
                    a3_best = Some(c);
                }
            } else {
                let holds = a5_entering(meas[serving], meas[c], params.cio(c), self.cfg);
                if st.a5[c].update(holds, self.step_ms, cop.ttt_ms)
                    && a5_best.map_or(true, |b| meas[c] + params.cio(c) > meas[b] + params.cio(b))
                {
                    a5_best = Some(c);
                }
            }
        }
        if let Some(target) = a3_best {
            self.emit(step, user_id, EventKind::A3Ho, serving, target, raw[serving]);
            st.serving = target;
            st.reset_timers();
        } else if let Some(target) = a5_best {
            self.emit(step, user_id, EventKind::A5Trigger, serving, target, raw[serving]);
            st.pending = Some(Pending {
                source: serving,
                target,
                started: step,
                counted,
                window: Vec::with_capacity(self.exec_steps + 1),
            });
            self.progress_pending(st, user_id, step, raw);
        }
    }
}

/// Runs the event engine over a precomputed radio trace.
///
/// Only A5-triggered (inter-frequency) attempts whose trigger falls after
/// the warm-up are counted. When `log` is given, every event is appended.
pub fn simulate(
    layout: &NetworkLayout,
    trace: &RadioTrace,
    cfg: &EventConfig,
    sim: &SimConfig,
    log: Option<&mut Vec<EventRecord>>,
) -> Result<SimOutcome> {
    sim.validate_event(cfg)?;
    if trace.n_users() == 0 {
        return Err(Error::Config("simulation has zero users".into()));
    }
    if trace.n_cells() != layout.cells.len() || trace.n_steps() != sim.n_steps() {
        return Err(Error::Config("radio trace does not match layout or duration".into()));
    }
    let n_cells = layout.cells.len();
    let l3_weight = cfg.params.l3_filter_k.map(|k| 0.5f64.powf(f64::from(k) / 4.0));
    let mut engine = Engine {
        layout,
        cfg,
        step_ms: sim.step_ms,
        exec_steps: (cfg.params.exec_delay_ms / sim.step_ms) as usize,
        l3_weight,
        counters: HoCounters::default(),
        log,
    };

    let mut states: Vec<UeState> = (0..trace.n_users())
        .map(|u| {
            let row = trace.row(u, 0);
            UeState {
                serving: strongest(row, |_| true).expect("non-empty layout"),
                a3: vec![TttTimer::default(); n_cells],
                a5: vec![TttTimer::default(); n_cells],
                filtered: row.to_vec(),
                pending: None,
            }
        })
        .collect();

    let first_kpi = sim.first_kpi_step();
    let mut samples = Vec::with_capacity((trace.n_steps() + 1 - first_kpi) * trace.n_users());
    for step in 1..=trace.n_steps() {
        let counted = step >= first_kpi;
        for (u, st) in states.iter_mut().enumerate() {
            let raw = trace.row(u, step);
            if let Some(a) = engine.l3_weight {
                for (f, &m) in st.filtered.iter_mut().zip(raw) {
                    *f = (1.0 - a) * *f + a * m;
                }
            }
            if st.pending.is_some() {
                engine.progress_pending(st, u, step, raw);
            } else {
                engine.evaluate_events(st, u, step, raw, counted);
            }
            if counted {
                samples.push(raw[st.serving]);
            }
        }
    }

    let counters = engine.counters;
    Ok(SimOutcome {
        kpi: KpiSample {
            mean_rsrp_dbm: mean_rsrp(&samples)?,
            hosr_pct: hosr(&counters),
        },
        counters,
    })
}

/// Spawns users, builds the radio trace and runs one simulation.
pub fn run_simulation(
    layout: &NetworkLayout,
    mob: &MobilityConfig,
    cfg: &EventConfig,
    seed: u64,
    sim: &SimConfig,
) -> Result<SimOutcome> {
    sim.validate_event(cfg)?;
    let users = spawn_users(mob, layout.config.area_side_m, seed)?;
    let trace = RadioTrace::build(layout, &users, seed, sim)?;
    simulate(layout, &trace, cfg, sim, None)
}
