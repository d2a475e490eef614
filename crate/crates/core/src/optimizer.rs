//! Joint KPI maximisation over the A5 box: exhaustive grid search and a
//! small integer-coded genetic algorithm.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::handover::{CopVector, KpiSample, THRESHOLD_MAX_DBM, THRESHOLD_MIN_DBM, TTT_VALUES_MS};
use crate::rng::{stream_rng, Stream};
use crate::surrogate::{Kpi, TrainedModel};
use crate::sweep::AggregatedPoint;

pub const COMPARISON_CSV_HEADER: &str = "method,objective,mean_rsrp_dbm,hosr_pct,evaluations";

/// Something the optimisers can maximise.
pub trait ObjectiveFn: Sync {
    fn score(&self, cop: &CopVector) -> f64;

    /// Predicted KPIs at `cop`, when the objective is built from them.
    fn kpis(&self, _cop: &CopVector) -> Option<KpiSample> {
        None
    }
}

impl<F: Fn(&CopVector) -> f64 + Sync> ObjectiveFn for F {
    fn score(&self, cop: &CopVector) -> f64 {
        self(cop)
    }
}

/// Weighted sum of the normalised KPIs.
pub fn combine(alpha: f64, eta_norm: f64, xi_norm: f64) -> f64 {
    alpha * eta_norm + (1.0 - alpha) * xi_norm
}

/// Min-max bounds per KPI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub rsrp_min: f64,
    pub rsrp_max: f64,
    pub hosr_min: f64,
    pub hosr_max: f64,
}

impl Normalization {
    /// Extrema of the aggregated dataset.
    pub fn from_points(points: &[AggregatedPoint]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("dataset for normalisation"));
        }
        let fold = |f: fn(&AggregatedPoint) -> f64| {
            points
                .iter()
                .map(f)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
        };
        let (rsrp_min, rsrp_max) = fold(|p| p.mean_rsrp_dbm);
        let (hosr_min, hosr_max) = fold(|p| p.hosr_pct);
        let n = Self {
            rsrp_min,
            rsrp_max,
            hosr_min,
            hosr_max,
        };
        n.validate()?;
        Ok(n)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rsrp_min < self.rsrp_max) || !(self.hosr_min < self.hosr_max) {
            return Err(Error::Config(format!(
                "normalisation needs min < max for both KPIs, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Widens the bounds to contain `k`.
    pub fn include(&mut self, k: &KpiSample) {
        self.rsrp_min = self.rsrp_min.min(k.mean_rsrp_dbm);
        self.rsrp_max = self.rsrp_max.max(k.mean_rsrp_dbm);
        self.hosr_min = self.hosr_min.min(k.hosr_pct);
        self.hosr_max = self.hosr_max.max(k.hosr_pct);
    }

    pub fn eta(&self, mean_rsrp_dbm: f64) -> f64 {
        ((mean_rsrp_dbm - self.rsrp_min) / (self.rsrp_max - self.rsrp_min)).clamp(0.0, 1.0)
    }

    pub fn xi(&self, hosr_pct: f64) -> f64 {
        ((hosr_pct - self.hosr_min) / (self.hosr_max - self.hosr_min)).clamp(0.0, 1.0)
    }
}

/// The surrogate-driven objective.
#[derive(Debug, Clone)]
pub struct Objective {
    pub alpha: f64,
    pub rsrp_model: TrainedModel,
    pub hosr_model: TrainedModel,
    pub norm: Normalization,
}

impl Objective {
    pub fn new(alpha: f64, rsrp_model: TrainedModel, hosr_model: TrainedModel, norm: Normalization) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Config(format!("alpha {alpha} outside [0, 1]")));
        }
        if rsrp_model.spec.target != Kpi::MeanRsrp || hosr_model.spec.target != Kpi::Hosr {
            return Err(Error::Config("objective needs a mean_rsrp model and a hosr model".into()));
        }
        if rsrp_model.fingerprint != hosr_model.fingerprint {
            return Err(Error::FingerprintMismatch {
                expected: rsrp_model.fingerprint.clone(),
                found: hosr_model.fingerprint.clone(),
            });
        }
        norm.validate()?;
        Ok(Self {
            alpha,
            rsrp_model,
            hosr_model,
            norm,
        })
    }

    /// Widens the normalisation bounds so every prediction on `grid` falls
    /// inside them. Clamping then never merges distinct predictions, which
    /// keeps the objective's argmax consistent with the individual KPIs.
    pub fn covering(mut self, grid: &[CopVector]) -> Self {
        let preds: Vec<KpiSample> = grid.par_iter().map(|c| self.predict(c)).collect();
        for k in &preds {
            self.norm.include(k);
        }
        self
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Self::new(alpha, self.rsrp_model.clone(), self.hosr_model.clone(), self.norm)
    }

    pub fn predict(&self, cop: &CopVector) -> KpiSample {
        KpiSample {
            mean_rsrp_dbm: self.rsrp_model.predict(cop),
            hosr_pct: self.hosr_model.predict(cop),
        }
    }
}

impl ObjectiveFn for Objective {
    fn score(&self, cop: &CopVector) -> f64 {
        let k = self.predict(cop);
        combine(self.alpha, self.norm.eta(k.mean_rsrp_dbm), self.norm.xi(k.hosr_pct))
    }

    fn kpis(&self, cop: &CopVector) -> Option<KpiSample> {
        Some(self.predict(cop))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Brute,
    Ga,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Brute => "brute",
            Method::Ga => "ga",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub method: Method,
    pub best: CopVector,
    pub objective: f64,
    pub mean_rsrp_dbm: Option<f64>,
    pub hosr_pct: Option<f64>,
    /// Distinct objective evaluations.
    pub evaluations: usize,
    /// Best objective per generation (a single entry for grid search).
    pub trace: Vec<f64>,
}

impl OptResult {
    fn new(method: Method, best: CopVector, objective: f64, f: &impl ObjectiveFn, evaluations: usize, trace: Vec<f64>) -> Self {
        let k = f.kpis(&best);
        Self {
            method,
            best,
            objective,
            mean_rsrp_dbm: k.map(|k| k.mean_rsrp_dbm),
            hosr_pct: k.map(|k| k.hosr_pct),
            evaluations,
            trace,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{}",
            self.method.as_str(),
            self.objective,
            opt(self.mean_rsrp_dbm),
            opt(self.hosr_pct),
            self.evaluations
        )
    }
}

/// Appends result rows to the comparison CSV, writing the header when the
/// file is new or empty.
pub fn append_comparison(path: &Path, results: &[OptResult]) -> Result<()> {
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut text = String::new();
    if fresh {
        text.push_str(COMPARISON_CSV_HEADER);
        text.push('\n');
    }
    for r in results {
        let _ = writeln!(text, "{}", r.csv_row());
    }
    let mut file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    file.write_all(text.as_bytes())?;
    Ok(())
}

/// Every integer-dB point of the standard box (4805 points).
pub fn standard_grid() -> Vec<CopVector> {
    let mut grid = Vec::new();
    for t in TTT_VALUES_MS {
        for a in THRESHOLD_MIN_DBM..=THRESHOLD_MAX_DBM {
            for b in THRESHOLD_MIN_DBM..=THRESHOLD_MAX_DBM {
                grid.push(CopVector::new(t, a, b));
            }
        }
    }
    grid
}

/// Exact argmax over `grid`; ties go to the lexicographically smallest point.
pub fn brute_force(grid: &[CopVector], f: &impl ObjectiveFn) -> Result<OptResult> {
    let mut grid = grid.to_vec();
    grid.sort();
    grid.dedup();
    if grid.is_empty() {
        return Err(Error::Empty("optimisation grid"));
    }
    let scores: Vec<f64> = grid.par_iter().map(|c| f.score(c)).collect();
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    Ok(OptResult::new(Method::Brute, grid[best], scores[best], f, grid.len(), vec![scores[best]]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub population: usize,
    /// Number of populations evaluated, the initial one included.
    pub generations: usize,
    pub tournament: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub elitism: usize,
    /// Largest threshold change, in dB, applied by one mutation. Step sizes
    /// are drawn log-uniformly from 1 to this value.
    pub mutation_step_db: i32,
    pub max_evaluations: usize,
    pub seed: u64,
    pub ttt_values: Vec<u32>,
    pub th_min_dbm: i32,
    pub th_max_dbm: i32,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 20,
            generations: 5,
            tournament: 3,
            crossover_rate: 0.9,
            mutation_rate: 0.1,
            elitism: 2,
            mutation_step_db: 15,
            max_evaluations: 100,
            seed: 0,
            ttt_values: TTT_VALUES_MS.to_vec(),
            th_min_dbm: THRESHOLD_MIN_DBM,
            th_max_dbm: THRESHOLD_MAX_DBM,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("ga: {m}")));
        if self.population < 2 || self.generations == 0 {
            return bad("population must be at least 2 and generations positive".into());
        }
        if self.population * self.generations > self.max_evaluations {
            return bad(format!(
                "budget {} x {} exceeds the cap of {} evaluations",
                self.population, self.generations, self.max_evaluations
            ));
        }
        if self.tournament == 0 || self.elitism >= self.population {
            return bad("tournament must be positive and elitism below the population size".into());
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) || !(0.0..=1.0).contains(&self.mutation_rate) {
            return bad("rates must lie in [0, 1]".into());
        }
        if self.mutation_step_db < 1 || self.th_min_dbm > self.th_max_dbm || self.ttt_values.is_empty() {
            return bad("invalid mutation step or search box".into());
        }
        Ok(())
    }
}

type Genome = [i32; 3];

const DUPLICATE_RETRIES: usize = 8;

/// Reflects `v` into `[lo, hi]`.
fn reflect(mut v: i32, lo: i32, hi: i32) -> i32 {
    if lo == hi {
        return lo;
    }
    loop {
        if v < lo {
            v = 2 * lo - v;
        } else if v > hi {
            v = 2 * hi - v;
        } else {
            return v;
        }
    }
}

struct Ga<'a, F> {
    cfg: &'a GaConfig,
    f: &'a F,
    memo: HashMap<CopVector, f64>,
    rng: ChaCha8Rng,
}

impl<F: ObjectiveFn> Ga<'_, F> {
    fn decode(&self, g: &Genome) -> CopVector {
        CopVector::new(self.cfg.ttt_values[g[0] as usize], g[1], g[2])
    }

    fn bounds(&self, gene: usize) -> (i32, i32) {
        match gene {
            0 => (0, self.cfg.ttt_values.len() as i32 - 1),
            _ => (self.cfg.th_min_dbm, self.cfg.th_max_dbm),
        }
    }

    /// Latin-hypercube start: each gene's range is cut into `n` equal strata,
    /// one draw per stratum, strata shuffled independently per gene.
    fn initial_population(&mut self, n: usize) -> Vec<Genome> {
        let mut pop = vec![[0; 3]; n];
        for gene in 0..3 {
            let (lo, hi) = self.bounds(gene);
            let width = f64::from(hi - lo + 1) / n as f64;
            let mut strata: Vec<usize> = (0..n).collect();
            strata.shuffle(&mut self.rng);
            for (g, s) in pop.iter_mut().zip(strata) {
                let u = (s as f64 + self.rng.gen::<f64>()) * width;
                g[gene] = (lo + u.floor() as i32).min(hi);
            }
        }
        pop
    }

    /// Scores a population, evaluating only genomes not seen before.
    fn evaluate(&mut self, pop: &[Genome]) -> Vec<f64> {
        let mut fresh: Vec<CopVector> = pop.iter().map(|g| self.decode(g)).filter(|c| !self.memo.contains_key(c)).collect();
        fresh.sort();
        fresh.dedup();
        let scores: Vec<f64> = fresh.par_iter().map(|c| self.f.score(c)).collect();
        self.memo.extend(fresh.into_iter().zip(scores));
        pop.iter().map(|g| self.memo[&self.decode(g)]).collect()
    }

    fn tournament(&mut self, fitness: &[f64]) -> usize {
        let mut best = self.rng.gen_range(0..fitness.len());
        for _ in 1..self.cfg.tournament {
            let c = self.rng.gen_range(0..fitness.len());
            if fitness[c] > fitness[best] {
                best = c;
            }
        }
        best
    }

    fn mutate(&mut self, g: &mut Genome) {
        for i in 0..g.len() {
            if self.rng.gen::<f64>() < self.cfg.mutation_rate {
                self.mutate_gene(g, i);
            }
        }
    }

    fn force_mutate(&mut self, g: &mut Genome) {
        let i = self.rng.gen_range(0..g.len());
        self.mutate_gene(g, i);
    }

    fn mutate_gene(&mut self, g: &mut Genome, i: usize) {
        let (lo, hi) = self.bounds(i);
        let max_step = if i == 0 { 1 } else { self.cfg.mutation_step_db };
        // Log-uniform magnitude: mostly local moves with occasional long jumps.
        let u: f64 = self.rng.gen();
        let mut step = ((f64::from(max_step) + 1.0).powf(u).floor() as i32).clamp(1, max_step);
        if self.rng.gen::<bool>() {
            step = -step;
        }
        g[i] = reflect(g[i] + step, lo, hi);
    }
}

/// Genetic search over (TTT index, threshold1, threshold2). Genes are
/// integers kept inside the box by reflection, so every genome is feasible.
pub fn ga_optimize(f: &impl ObjectiveFn, cfg: &GaConfig) -> Result<OptResult> {
    cfg.validate()?;
    let mut ga = Ga {
        cfg,
        f,
        memo: HashMap::new(),
        rng: stream_rng(cfg.seed, Stream::Genetic, 0),
    };
    let mut pop = ga.initial_population(cfg.population);
    let mut trace = Vec::with_capacity(cfg.generations);
    let mut best: Option<(CopVector, f64)> = None;
    for generation in 0..cfg.generations {
        let fitness = ga.evaluate(&pop);
        // Rank by fitness, ties to the smaller parameter vector.
        let mut order: Vec<usize> = (0..pop.len()).collect();
        order.sort_by(|&a, &b| fitness[b].total_cmp(&fitness[a]).then(ga.decode(&pop[a]).cmp(&ga.decode(&pop[b]))));
        let (top_cop, top) = (ga.decode(&pop[order[0]]), fitness[order[0]]);
        if best.map_or(true, |(c, s)| top > s || (top == s && top_cop < c)) {
            best = Some((top_cop, top));
        }
        trace.push(best.map(|b| b.1).unwrap_or(top));
        if generation + 1 == cfg.generations {
            break;
        }
        let mut next: Vec<Genome> = order[..cfg.elitism].iter().map(|&i| pop[i]).collect();
        while next.len() < cfg.population {
            let p1 = pop[ga.tournament(&fitness)];
            let p2 = pop[ga.tournament(&fitness)];
            let mut child = p1;
            if ga.rng.gen::<f64>() < cfg.crossover_rate {
                for (i, gene) in child.iter_mut().enumerate() {
                    if ga.rng.gen::<bool>() {
                        *gene = p2[i];
                    }
                }
            }
            ga.mutate(&mut child);
            // Repeats cost nothing but waste a slot; nudge them to an unseen point.
            for _ in 0..DUPLICATE_RETRIES {
                let cop = ga.decode(&child);
                if !ga.memo.contains_key(&cop) && !next.iter().any(|g| ga.decode(g) == cop) {
                    break;
                }
                ga.force_mutate(&mut child);
            }
            next.push(child);
        }
        pop = next;
    }
    let (cop, score) = best.expect("at least one generation");
    Ok(OptResult::new(Method::Ga, cop, score, f, ga.memo.len(), trace))
}
