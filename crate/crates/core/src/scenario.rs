//! Static network geometry and the radio model.
//!
//! Received power is evaluated in the dB domain as
//! `tx_power - pathloss + antenna_gain + shadowing`, with a log-distance
//! pathloss anchored at the free-space loss at 1 m and an exponentially
//! correlated log-normal shadowing field per cell.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

pub const SPEED_OF_LIGHT_MPS: f64 = 3.0e8;
/// Height of every user antenna above ground.
pub const USER_HEIGHT_M: f64 = 1.5;
/// Number of plane waves superposed in each shadowing field.
pub const SHADOW_COMPONENTS: usize = 64;

const SECTOR_BEAMWIDTH_DEG: f64 = 65.0;
const SECTOR_MAX_ATTENUATION_DB: f64 = 25.0;
const SMALL_CELL_OFFSET_M: f64 = 300.0;
const SMALL_CELL_BEARING_DEG: f64 = 60.0;

/// A point on the ground plane, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Point reached by moving `dist` meters from `self` along a compass
    /// bearing (0 deg = +y, clockwise).
    pub fn offset(self, bearing_deg: f64, dist: f64) -> Point {
        let b = bearing_deg.to_radians();
        Point::new(self.x + dist * b.sin(), self.y + dist * b.cos())
    }

    /// Compass bearing from `self` towards `to`, in [0, 360).
    pub fn bearing_to(self, to: Point) -> f64 {
        let deg = (to.x - self.x).atan2(to.y - self.y).to_degrees();
        deg.rem_euclid(360.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub area_side_m: f64,
    pub n_macro_sites: usize,
    pub sectors_per_site: usize,
    pub macro_bands: Vec<f64>,
    pub small_cells_per_site: usize,
    pub small_band_ghz: f64,
    pub macro_height_m: f64,
    pub small_height_m: f64,
    pub tx_power_dbm: f64,
    pub pathloss_exponent: f64,
    pub shadowing_std_db: f64,
    pub shadowing_corr_dist_m: f64,
    /// Carrier bandwidths, macro bands first then the small-cell band.
    /// Informational only.
    pub bandwidth_mhz: Vec<f64>,
    /// Physical resource blocks per carrier, same order. Informational only.
    pub prbs: Vec<u32>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            area_side_m: 2000.0,
            n_macro_sites: 2,
            sectors_per_site: 3,
            macro_bands: vec![1.7, 2.1],
            small_cells_per_site: 1,
            small_band_ghz: 3.5,
            macro_height_m: 30.0,
            small_height_m: 20.0,
            tx_power_dbm: 30.0,
            pathloss_exponent: 3.0,
            shadowing_std_db: 4.0,
            shadowing_corr_dist_m: 50.0,
            bandwidth_mhz: vec![10.0, 15.0, 20.0],
            prbs: vec![52, 78, 106],
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("network: {msg}")));
        if !(self.area_side_m > 0.0 && self.area_side_m.is_finite()) {
            return bad("area_side_m must be positive");
        }
        if self.n_macro_sites == 0 || self.sectors_per_site == 0 {
            return bad("n_macro_sites and sectors_per_site must be at least 1");
        }
        if self.macro_bands.is_empty() {
            return bad("macro_bands must not be empty");
        }
        if self.macro_bands.iter().any(|f| !(*f > 0.0 && f.is_finite())) {
            return bad("macro band frequencies must be positive");
        }
        if self.small_cells_per_site > 0 && !(self.small_band_ghz > 0.0) {
            return bad("small_band_ghz must be positive");
        }
        if !(self.macro_height_m >= 0.0 && self.small_height_m >= 0.0) {
            return bad("antenna heights must be non-negative");
        }
        if !self.tx_power_dbm.is_finite() {
            return bad("tx_power_dbm must be finite");
        }
        if !(self.pathloss_exponent > 0.0) {
            return bad("pathloss_exponent must be positive");
        }
        if !(self.shadowing_std_db >= 0.0 && self.shadowing_std_db.is_finite()) {
            return bad("shadowing_std_db must be non-negative");
        }
        if !(self.shadowing_corr_dist_m > 0.0) {
            return bad("shadowing_corr_dist_m must be positive");
        }
        Ok(())
    }

    pub fn area_km2(&self) -> f64 {
        (self.area_side_m / 1000.0).powi(2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    MacroSector,
    SmallOmni,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub id: usize,
    /// Antenna position (the site itself for sectors, the offset point for small cells).
    pub position: Point,
    pub bearing_deg: f64,
    pub band_ghz: f64,
    /// Index of the carrier in [`NetworkLayout::carriers`].
    pub carrier: usize,
    pub tx_power_dbm: f64,
    pub height_m: f64,
    pub kind: CellKind,
}

impl Cell {
    pub fn is_same_carrier(&self, other: &Cell) -> bool {
        self.carrier == other.carrier
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkLayout {
    pub cells: Vec<Cell>,
    /// Distinct carrier frequencies in GHz, in first-seen order.
    pub carriers: Vec<f64>,
    pub config: NetworkConfig,
}

/// Macro sites sit on the horizontal mid-line at one and two thirds of the
/// side; additional sites continue the even spacing.
fn site_positions(side: f64, n: usize) -> Vec<Point> {
    (0..n)
        .map(|i| Point::new(side * (i + 1) as f64 / (n + 1) as f64, side / 2.0))
        .collect()
}

pub fn build_layout(config: &NetworkConfig) -> Result<NetworkLayout> {
    config.validate()?;
    let mut carriers: Vec<f64> = Vec::new();
    let mut carrier_of = |f: f64| match carriers.iter().position(|c| *c == f) {
        Some(i) => i,
        None => {
            carriers.push(f);
            carriers.len() - 1
        }
    };

    let sites = site_positions(config.area_side_m, config.n_macro_sites);
    let mut cells = Vec::new();
    for site in &sites {
        for sector in 0..config.sectors_per_site {
            let bearing = 360.0 * sector as f64 / config.sectors_per_site as f64;
            for &band in &config.macro_bands {
                cells.push(Cell {
                    id: cells.len(),
                    position: *site,
                    bearing_deg: bearing,
                    band_ghz: band,
                    carrier: carrier_of(band),
                    tx_power_dbm: config.tx_power_dbm,
                    height_m: config.macro_height_m,
                    kind: CellKind::MacroSector,
                });
            }
        }
    }
    for site in &sites {
        for j in 0..config.small_cells_per_site {
            let bearing = SMALL_CELL_BEARING_DEG + 360.0 * j as f64 / config.small_cells_per_site as f64;
            cells.push(Cell {
                id: cells.len(),
                position: site.offset(bearing, SMALL_CELL_OFFSET_M),
                bearing_deg: 0.0,
                band_ghz: config.small_band_ghz,
                carrier: carrier_of(config.small_band_ghz),
                tx_power_dbm: config.tx_power_dbm,
                height_m: config.small_height_m,
                kind: CellKind::SmallOmni,
            });
        }
    }
    Ok(NetworkLayout {
        cells,
        carriers,
        config: config.clone(),
    })
}

/// Free-space loss at the 1 m reference distance.
pub fn reference_loss_db(band_ghz: f64) -> f64 {
    20.0 * (4.0 * PI * band_ghz * 1e9 / SPEED_OF_LIGHT_MPS).log10()
}

/// 3-D distance between the cell antenna and a user at `pos`, clamped to 1 m.
pub fn link_distance_m(cell: &Cell, pos: Point) -> f64 {
    let dh = cell.height_m - USER_HEIGHT_M;
    cell.position.distance(pos).hypot(dh).max(1.0)
}

pub fn pathloss_db(cell: &Cell, pos: Point, config: &NetworkConfig) -> f64 {
    let d = link_distance_m(cell, pos);
    reference_loss_db(cell.band_ghz) + 10.0 * config.pathloss_exponent * d.log10()
}

/// Horizontal angle between the sector boresight and the direction to `pos`,
/// wrapped to [-180, 180).
pub fn off_boresight_deg(cell: &Cell, pos: Point) -> f64 {
    let az = cell.position.bearing_to(pos);
    (az - cell.bearing_deg + 180.0).rem_euclid(360.0) - 180.0
}

pub fn sector_pattern_db(theta_deg: f64) -> f64 {
    -(12.0 * (theta_deg / SECTOR_BEAMWIDTH_DEG).powi(2)).min(SECTOR_MAX_ATTENUATION_DB)
}

pub fn antenna_gain_db(cell: &Cell, pos: Point) -> f64 {
    match cell.kind {
        CellKind::SmallOmni => 0.0,
        CellKind::MacroSector => sector_pattern_db(off_boresight_deg(cell, pos)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct PlaneWave {
    kx: f64,
    ky: f64,
    phase: f64,
}

/// Per-cell spatially correlated log-normal shadowing.
///
/// Each cell's field is a superposition of [`SHADOW_COMPONENTS`] random plane
/// waves whose wave numbers are drawn from the 2-D spectrum of an exponential
/// covariance `std^2 * exp(-r / corr_dist)`. The field is defined everywhere
/// and depends only on `(seed, cell id, position)`.
#[derive(Debug, Clone)]
pub struct ShadowField {
    std_db: f64,
    amplitude: f64,
    waves: Vec<Vec<PlaneWave>>,
}

impl ShadowField {
    pub fn new(seed: u64, n_cells: usize, std_db: f64, corr_dist_m: f64) -> Self {
        let waves = if std_db > 0.0 {
            (0..n_cells)
                .map(|cell| {
                    let mut rng = stream_rng(seed, Stream::Shadow, cell as u64);
                    (0..SHADOW_COMPONENTS)
                        .map(|_| {
                            let u: f64 = rng.gen();
                            let k = ((1.0 - u).powi(-2) - 1.0).sqrt() / corr_dist_m;
                            let dir = rng.gen::<f64>() * 2.0 * PI;
                            PlaneWave {
                                kx: k * dir.cos(),
                                ky: k * dir.sin(),
                                phase: rng.gen::<f64>() * 2.0 * PI,
                            }
                        })
                        .collect()
                })
                .collect()
        } else {
            Vec::new()
        };
        Self {
            std_db,
            amplitude: std_db * (2.0 / SHADOW_COMPONENTS as f64).sqrt(),
            waves,
        }
    }

    pub fn for_layout(layout: &NetworkLayout, seed: u64) -> Self {
        let c = &layout.config;
        Self::new(seed, layout.cells.len(), c.shadowing_std_db, c.shadowing_corr_dist_m)
    }

    /// A field that is identically zero.
    pub fn disabled() -> Self {
        Self::new(0, 0, 0.0, 1.0)
    }

    pub fn std_db(&self) -> f64 {
        self.std_db
    }

    pub fn value_db(&self, cell_id: usize, pos: Point) -> f64 {
        match self.waves.get(cell_id) {
            None => 0.0,
            Some(waves) => {
                let s: f64 = waves
                    .iter()
                    .map(|w| (w.kx * pos.x + w.ky * pos.y + w.phase).cos())
                    .sum();
                self.amplitude * s
            }
        }
    }
}

pub fn rsrp_dbm(cell: &Cell, pos: Point, shadow: &ShadowField, config: &NetworkConfig) -> f64 {
    cell.tx_power_dbm - pathloss_db(cell, pos, config) + antenna_gain_db(cell, pos) + shadow.value_db(cell.id, pos)
}

impl NetworkLayout {
    pub fn cell(&self, id: usize) -> &Cell {
        &self.cells[id]
    }

    /// Writes the RSRP of every cell at `pos` into `out` (indexed by cell id).
    pub fn rsrp_all(&self, pos: Point, shadow: &ShadowField, out: &mut [f64]) {
        for (slot, cell) in out.iter_mut().zip(&self.cells) {
            *slot = rsrp_dbm(cell, pos, shadow, &self.config);
        }
    }

    pub fn best_server(&self, pos: Point, shadow: &ShadowField) -> usize {
        let mut buf = vec![0.0; self.cells.len()];
        self.rsrp_all(pos, shadow, &mut buf);
        strongest(&buf, |_| true).expect("layout has at least one cell")
    }
}

/// Index of the largest value among entries accepted by `filter`; ties go to
/// the lowest index.
pub fn strongest(values: &[f64], filter: impl Fn(usize) -> bool) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if !filter(i) {
            continue;
        }
        match best {
            Some(b) if values[b] >= v => {}
            _ => best = Some(i),
        }
    }
    best
}
