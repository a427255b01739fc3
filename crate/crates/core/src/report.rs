//! CSV tables, the ratio plot and the run manifest.
//!
//! Persisted numbers are exact: rationals as `p/q`, integers in decimal.
//! Only columns ending in `_display` carry rounded values.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::check::Check;
use crate::krengel::KrengelRow;
use crate::podvigin::{DivergenceRow, BandCheck, StageRecord};
use crate::rational::{display_q, fmt_q, Q};

/// A CSV table with a fixed header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }
}

fn opt_q(q: Option<&Q>) -> String {
    q.map(fmt_q).unwrap_or_default()
}

pub const KRENGEL_COLUMNS: &[&str] = &[
    "j",
    "height",
    "eps",
    "eps_h",
    "mass_c",
    "int_on_c",
    "nonzero_mass_on_c",
    "l1_on_c",
    "chain_bound",
    "tail_bound",
    "l1_total",
    "psi",
    "ratio",
    "target",
    "ratio_display",
];

pub fn krengel_table(rows: &[KrengelRow]) -> Table {
    let mut t = Table::new(KRENGEL_COLUMNS);
    for r in rows {
        t.push(vec![
            r.j.to_string(),
            r.height.to_string(),
            fmt_q(&r.eps),
            fmt_q(&r.eps_h),
            fmt_q(&r.mass_c),
            fmt_q(&r.int_on_c),
            fmt_q(&r.nonzero_mass_on_c),
            fmt_q(&r.l1_on_c),
            fmt_q(&r.chain_bound),
            fmt_q(&r.tail_bound),
            fmt_q(&r.l1_total),
            fmt_q(&r.psi),
            fmt_q(&r.ratio),
            fmt_q(&r.target),
            display_q(&r.ratio),
        ]);
    }
    t
}

pub const PODVIGIN_COLUMNS: &[&str] = &[
    "j",
    "refine",
    "splice_left",
    "splice_right",
    "length",
    "atoms",
    "n",
    "c_j",
    "eps_j",
    "psi",
    "gap_bound",
    "band_min_margin",
    "attempts",
    "deviation",
    "ratio",
    "ratio_floor",
    "qualifying_mass",
    "required_mass",
    "ratio_display",
];

/// One line per stage; divergence columns are empty where `N_j` is absent.
pub fn podvigin_table(stages: &[StageRecord], div: &[DivergenceRow]) -> Table {
    let mut t = Table::new(PODVIGIN_COLUMNS);
    for s in stages {
        let d = div.iter().find(|d| d.j == s.j);
        t.push(vec![
            s.j.to_string(),
            s.refine.to_string(),
            s.splice_left.to_string(),
            s.splice_right.to_string(),
            s.length.to_string(),
            s.atoms.to_string(),
            s.n.map(|n| n.to_string()).unwrap_or_default(),
            fmt_q(&s.c_j),
            fmt_q(&s.eps_j),
            opt_q(s.psi.as_ref()),
            fmt_q(&s.gap_bound),
            opt_q(s.band_min_margin().as_ref()),
            s.attempts.to_string(),
            opt_q(d.map(|d| &d.deviation)),
            opt_q(d.map(|d| &d.ratio)),
            opt_q(d.map(|d| &d.ratio_floor)),
            opt_q(d.map(|d| &d.qualifying_mass)),
            opt_q(d.map(|d| &d.required_mass)),
            d.map(|d| display_q(&d.ratio)).unwrap_or_default(),
        ]);
    }
    t
}

pub const BAND_COLUMNS: &[&str] = &["stage", "i", "n", "c_i", "eps_i", "measure_within", "required", "margin"];

pub fn band_table(checks: &[BandCheck]) -> Table {
    let mut t = Table::new(BAND_COLUMNS);
    for c in checks {
        t.push(vec![
            c.stage.to_string(),
            c.i.to_string(),
            c.n.to_string(),
            fmt_q(&c.c_i),
            fmt_q(&c.eps_i),
            fmt_q(&c.measure_within),
            fmt_q(&c.required),
            fmt_q(&c.margin()),
        ]);
    }
    t
}

pub const CHECK_COLUMNS: &[&str] = &["row", "name", "lhs", "relation", "rhs", "margin", "passed"];

pub fn checks_table(checks: &[Check]) -> Table {
    let mut t = Table::new(CHECK_COLUMNS);
    for c in checks {
        t.push(vec![
            c.row.to_string(),
            c.name.clone(),
            fmt_q(&c.lhs),
            c.relation.symbol().to_string(),
            fmt_q(&c.rhs),
            fmt_q(&c.margin()),
            c.passed().to_string(),
        ]);
    }
    t
}

/// Reads `(j, ratio)` pairs from a CSV with those columns. Rows with an
/// empty ratio are skipped.
pub fn ratio_points(csv_bytes: &[u8]) -> Result<Vec<(f64, f64)>, String> {
    let mut rd = csv::Reader::from_reader(csv_bytes);
    let headers = rd.headers().map_err(|e| e.to_string())?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| format!("CSV has no {name:?} column"))
    };
    let (jc, rc) = (col("j")?, col("ratio")?);
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let (j, r) = (rec.get(jc).unwrap_or(""), rec.get(rc).unwrap_or(""));
        if r.is_empty() {
            continue;
        }
        let j: f64 = j.parse().map_err(|_| format!("bad j {j:?}"))?;
        let q = crate::rational::parse_q(r).map_err(|e| e.to_string())?;
        let v = num_traits::ToPrimitive::to_f64(&q).ok_or_else(|| format!("ratio {r} out of range"))?;
        out.push((j, v));
    }
    Ok(out)
}

/// Line plot of `log2(ratio_j)` against `j`. `Ok(None)` for a table without
/// data rows.
pub fn emit_plot(csv_bytes: &[u8]) -> Result<Option<String>, String> {
    let pts = ratio_points(csv_bytes)?;
    if pts.is_empty() {
        return Ok(None);
    }
    let pts: Vec<(f64, f64)> = pts.into_iter().map(|(j, r)| (j, r.log2())).collect();
    let (w, h, pad) = (480.0, 320.0, 40.0);
    let (xmin, xmax) = bounds(pts.iter().map(|p| p.0));
    let (ymin, ymax) = bounds(pts.iter().map(|p| p.1).chain([0.0]));
    let sx = |x: f64| pad + (x - xmin) / (xmax - xmin) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - ymin) / (ymax - ymin) * (h - 2.0 * pad);
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    ));
    svg.push_str(&format!(
        "<line x1=\"{pad}\" y1=\"{y0:.2}\" x2=\"{x1}\" y2=\"{y0:.2}\" stroke=\"#999\"/>\n",
        y0 = sy(0.0),
        x1 = w - pad
    ));
    svg.push_str(&format!(
        "<text x=\"{pad}\" y=\"20\" font-family=\"sans-serif\" font-size=\"12\">log2(ratio) vs j</text>\n"
    ));
    let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
    svg.push_str(&format!(
        "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"{}\"/>\n",
        path.join(" ")
    ));
    for &(x, y) in &pts {
        svg.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"#1f77b4\"><title>j={} log2(ratio)={:.4}</title></circle>\n",
            sx(x),
            sy(y),
            x,
            y
        ));
    }
    svg.push_str("</svg>\n");
    Ok(Some(svg))
}

fn bounds(it: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = it.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if hi - lo < 1e-9 {
        (lo - 1.0, hi + 1.0)
    } else {
        (lo, hi)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub pass: bool,
    pub checks: usize,
    pub failed: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_failure: Option<String>,
}

impl Verdict {
    pub fn from_checks(checks: &[Check]) -> Self {
        let failed = checks.iter().filter(|c| !c.passed()).count();
        Self {
            pass: failed == 0,
            checks: checks.len(),
            failed,
            first_failure: crate::check::first_failure(checks).map(|c| c.to_string()),
        }
    }

    pub fn failure(msg: impl Into<String>) -> Self {
        Self {
            pass: false,
            checks: 0,
            failed: 0,
            first_failure: Some(msg.into()),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    /// Artifact role to file name inside the output directory.
    pub artifacts: BTreeMap<String, String>,
    pub wall_clock_ms: u128,
    pub verdict: Verdict,
}
