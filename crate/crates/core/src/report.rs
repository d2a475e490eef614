//! Heatmap grids of a quantity over (threshold1, threshold2) at fixed TTT,
//! written as CSV matrices and standalone SVG figures.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::handover::CopVector;
use crate::sweep::AggregatedPoint;

#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub quantity: String,
    pub ttt_ms: u32,
    /// Row axis.
    pub th1_dbm: Vec<i32>,
    /// Column axis.
    pub th2_dbm: Vec<i32>,
    /// `values[row][col]`; `None` where the source has no value.
    pub values: Vec<Vec<Option<f64>>>,
}

impl Heatmap {
    /// Samples `f` on the full product of the two axes.
    pub fn from_fn(quantity: &str, ttt_ms: u32, th1_dbm: Vec<i32>, th2_dbm: Vec<i32>, f: impl Fn(&CopVector) -> f64) -> Self {
        let values = th1_dbm
            .iter()
            .map(|&a| th2_dbm.iter().map(|&b| Some(f(&CopVector::new(ttt_ms, a, b)))).collect())
            .collect();
        Self {
            quantity: quantity.to_string(),
            ttt_ms,
            th1_dbm,
            th2_dbm,
            values,
        }
    }

    /// Looks up dataset values; the axes are the thresholds present at `ttt_ms`.
    pub fn from_points(quantity: &str, ttt_ms: u32, points: &[AggregatedPoint], value: impl Fn(&AggregatedPoint) -> f64) -> Result<Self> {
        let at: Vec<&AggregatedPoint> = points.iter().filter(|p| p.cop.ttt_ms == ttt_ms).collect();
        if at.is_empty() {
            return Err(Error::Config(format!("no dataset points at TTT {ttt_ms} ms")));
        }
        let axis = |f: fn(&CopVector) -> i32| {
            let mut v: Vec<i32> = at.iter().map(|p| f(&p.cop)).collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        let th1 = axis(|c| c.th1_dbm);
        let th2 = axis(|c| c.th2_dbm);
        let mut values = vec![vec![None; th2.len()]; th1.len()];
        for p in at {
            let r = th1.binary_search(&p.cop.th1_dbm).expect("axis built from points");
            let c = th2.binary_search(&p.cop.th2_dbm).expect("axis built from points");
            values[r][c] = Some(value(p));
        }
        Ok(Self {
            quantity: quantity.to_string(),
            ttt_ms,
            th1_dbm: th1,
            th2_dbm: th2,
            values,
        })
    }

    pub fn get(&self, th1_dbm: i32, th2_dbm: i32) -> Option<f64> {
        let r = self.th1_dbm.iter().position(|&v| v == th1_dbm)?;
        let c = self.th2_dbm.iter().position(|&v| v == th2_dbm)?;
        self.values[r][c]
    }

    pub fn range(&self) -> Option<(f64, f64)> {
        self.values.iter().flatten().flatten().fold(None, |acc, &v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((f64::min(lo, v), f64::max(hi, v))),
        })
    }

    pub fn file_stem(&self) -> String {
        format!("heatmap_{}_ttt{}", self.quantity, self.ttt_ms)
    }

    /// Rows are threshold1 values, columns threshold2 values.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("th1_dbm\\th2_dbm");
        for b in &self.th2_dbm {
            let _ = write!(s, ",{b}");
        }
        s.push('\n');
        for (a, row) in self.th1_dbm.iter().zip(&self.values) {
            let _ = write!(s, "{a}");
            for v in row {
                match v {
                    Some(v) => {
                        let _ = write!(s, ",{v}");
                    }
                    None => s.push(','),
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn to_svg(&self) -> String {
        const CELL: f64 = 16.0;
        const LEFT: f64 = 70.0;
        const TOP: f64 = 40.0;
        const BAR: f64 = 110.0;
        let (rows, cols) = (self.th1_dbm.len() as f64, self.th2_dbm.len() as f64);
        let (w, h) = (LEFT + cols * CELL + BAR, TOP + rows * CELL + 50.0);
        let (lo, hi) = self.range().unwrap_or((0.0, 1.0));
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="10">"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{LEFT}" y="20" font-size="13">{} at TTT {} ms</text>"#,
            self.quantity, self.ttt_ms
        );
        // Highest threshold1 at the top.
        for (r, row) in self.values.iter().enumerate() {
            let y = TOP + (rows - 1.0 - r as f64) * CELL;
            for (c, v) in row.iter().enumerate() {
                let x = LEFT + c as f64 * CELL;
                let fill = v.map_or_else(|| "#ffffff".to_string(), |v| colour(norm(v, lo, hi)));
                let _ = writeln!(
                    s,
                    r#"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{fill}"><title>th1 {} th2 {}: {}</title></rect>"#,
                    self.th1_dbm[r],
                    self.th2_dbm[c],
                    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"))
                );
            }
        }
        let step = ((rows.max(cols) / 8.0).ceil() as usize).max(1);
        for (r, a) in self.th1_dbm.iter().enumerate().step_by(step) {
            let y = TOP + (rows - 1.0 - r as f64) * CELL + CELL * 0.7;
            let _ = writeln!(s, r#"<text x="{}" y="{y}" text-anchor="end">{a}</text>"#, LEFT - 4.0);
        }
        for (c, b) in self.th2_dbm.iter().enumerate().step_by(step) {
            let x = LEFT + c as f64 * CELL + CELL / 2.0;
            let _ = writeln!(s, r#"<text x="{x}" y="{}" text-anchor="middle">{b}</text>"#, TOP + rows * CELL + 14.0);
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">threshold2 (dBm)</text>"#,
            LEFT + cols * CELL / 2.0,
            TOP + rows * CELL + 32.0
        );
        let _ = writeln!(
            s,
            r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">threshold1 (dBm)</text>"#,
            TOP + rows * CELL / 2.0,
            TOP + rows * CELL / 2.0
        );
        let bx = LEFT + cols * CELL + 20.0;
        let bh = rows * CELL;
        for i in 0..50 {
            let t = 1.0 - i as f64 / 49.0;
            let _ = writeln!(
                s,
                r#"<rect x="{bx}" y="{}" width="14" height="{}" fill="{}"/>"#,
                TOP + i as f64 * bh / 50.0,
                bh / 50.0 + 0.5,
                colour(t)
            );
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}">{hi:.3}</text>"#, bx + 18.0, TOP + 8.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{lo:.3}</text>"#, bx + 18.0, TOP + bh);
        s.push_str("</svg>\n");
        s
    }
}

fn norm(v: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        (v - lo) / (hi - lo)
    } else {
        0.5
    }
}

/// Dark blue through teal to yellow.
fn colour(t: f64) -> String {
    const STOPS: [(f64, f64, f64); 5] = [
        (68.0, 1.0, 84.0),
        (59.0, 82.0, 139.0),
        (33.0, 145.0, 140.0),
        (94.0, 201.0, 98.0),
        (253.0, 231.0, 37.0),
    ];
    let x = t.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (x.floor() as usize).min(STOPS.len() - 2);
    let f = x - i as f64;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    let mix = |p: f64, q: f64| (p + (q - p) * f).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}
