//! CSV series and JSON reports. Every file carries the run id and a schema
//! version; floats are written in shortest round-trip form, so identical
//! runs give identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::collapse::{CollapseState, FitRecord};
use crate::config::SimConfig;
use crate::diagnostics::DiagnosticsRecord;
use crate::error::Result;
use crate::modulation::AlmostSolution;
use crate::pde::{curvature_norm, RadialProfile, Trajectory};
use crate::spectral::SpectrumEntry;

pub const SCHEMA_VERSION: u32 = 1;

/// Hex SHA-256 of the canonical JSON of the config.
pub fn run_id(cfg: &SimConfig) -> String {
    let canonical = serde_json::to_string(cfg).expect("config serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Column-oriented CSV text with a `#` provenance line.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(run_id: &str, schema: &str, extra: &[(&str, String)], columns: &[&str]) -> Csv {
        let mut text = format!("# run_id={run_id}, schema={schema}/{SCHEMA_VERSION}");
        for (k, v) in extra {
            let _ = write!(text, ", {k}={v}");
        }
        text.push('\n');
        text.push_str(&columns.join(","));
        text.push('\n');
        Csv { text }
    }

    pub fn row<I: IntoIterator<Item = String>>(&mut self, cells: I) {
        let cells: Vec<String> = cells.into_iter().collect();
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, &self.text)?;
        Ok(())
    }
}

pub fn trajectory_csv(traj: &Trajectory, run_id: &str) -> Csv {
    let mut cols = vec![
        "t".to_string(),
        "u_min".into(),
        "max_curvature".into(),
        "dt".into(),
    ];
    cols.extend(traj.probe_x.iter().map(|x| format!("u_at_{x}")));
    let cols: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut csv = Csv::new(run_id, "trajectory", &[("d", traj.d.to_string())], &cols);
    for r in &traj.records {
        let mut row = vec![
            r.t.to_string(),
            r.u_min.to_string(),
            r.max_curvature.to_string(),
            r.dt.to_string(),
        ];
        row.extend(r.probes.iter().map(|p| p.to_string()));
        csv.row(row);
    }
    csv
}

/// All physical snapshots in long form.
pub fn snapshots_csv(snapshots: &[RadialProfile], run_id: &str) -> Csv {
    let d = snapshots.first().map_or(String::new(), |p| p.d.to_string());
    let mut csv = Csv::new(
        run_id,
        "snapshot",
        &[("d", d)],
        &["snapshot", "t", "x", "u", "u_x", "u_xx", "A"],
    );
    for (k, p) in snapshots.iter().enumerate() {
        let (ux, uxx) = p.derivatives();
        let curv = curvature_norm(p).map_or_else(|_| vec![f64::NAN; p.u.len()], |c| c.values);
        for i in 0..p.u.len() {
            csv.row([
                k.to_string(),
                p.t.to_string(),
                p.x_nodes()[i].to_string(),
                p.u[i].to_string(),
                ux[i].to_string(),
                uxx[i].to_string(),
                curv[i].to_string(),
            ]);
        }
    }
    csv
}

/// One rescaled snapshot: `y, v, V_ab, phi, e^{-a y^2/2}`.
pub fn rescaled_snapshot_csv(state: &CollapseState, run_id: &str) -> Csv {
    let extra = [
        ("tau", state.tau.to_string()),
        ("t", state.t.to_string()),
        ("lambda", state.lambda().to_string()),
        ("a", state.a.to_string()),
        ("b", state.b.to_string()),
    ];
    let mut csv = Csv::new(
        run_id,
        "rescaled-snapshot",
        &extra,
        &["y", "v", "V_ab", "phi", "weight"],
    );
    let s = AlmostSolution {
        a: state.a,
        b: state.b.max(0.0),
        d: state.d,
    };
    for (&y, v) in state.y_nodes().iter().zip(&state.v) {
        let vab = s.eval(y);
        csv.row([
            y.to_string(),
            v.to_string(),
            vab.to_string(),
            (v - vab).to_string(),
            (-0.5 * state.a * y * y).exp().to_string(),
        ]);
    }
    csv
}

pub fn fit_log_csv(history: &[FitRecord], run_id: &str) -> Csv {
    let mut csv = Csv::new(
        run_id,
        "fit-log",
        &[],
        &[
            "tau",
            "t",
            "lambda",
            "a",
            "b",
            "iterations",
            "ortho_1",
            "ortho_2",
            "condition",
            "at_boundary",
            "a_out_of_box",
            "guess_in_neighbourhood",
            "phi_3_0",
            "phi_11_10_0",
            "phi_2_1",
            "phi_1_2",
            "v0",
        ],
    );
    for r in history {
        let mut row = vec![
            r.tau.to_string(),
            r.t.to_string(),
            r.lambda.to_string(),
            r.a.to_string(),
            r.b.to_string(),
            r.iterations.to_string(),
            r.ortho[0].to_string(),
            r.ortho[1].to_string(),
            r.condition.to_string(),
            r.at_boundary.to_string(),
            r.a_out_of_box.to_string(),
            r.guess_in_neighbourhood.to_string(),
        ];
        row.extend(r.phi_norms.iter().map(|x| x.to_string()));
        row.push(r.v0.to_string());
        csv.row(row);
    }
    csv
}

pub fn diagnostics_csv(records: &[DiagnosticsRecord], run_id: &str) -> Csv {
    let mut csv = Csv::new(
        run_id,
        "diagnostics",
        &[],
        &[
            "tau",
            "t",
            "lambda",
            "a",
            "b",
            "c",
            "beta",
            "M_3_0",
            "M_11_10_0",
            "M_2_1",
            "M_1_2",
            "A",
            "B",
            "a_tau",
            "b_tau",
            "Gamma1",
            "Gamma2",
            "remainder_ratio",
            "curvature_scaled",
            "barrier_ok",
            "rho_ok",
        ],
    );
    for r in records {
        let mut row = vec![
            r.tau.to_string(),
            r.t.to_string(),
            r.lambda.to_string(),
            r.a.to_string(),
            r.b.to_string(),
            r.c.to_string(),
            r.beta.to_string(),
        ];
        row.extend(r.m.iter().map(|x| x.to_string()));
        row.extend([
            r.a_fn.to_string(),
            r.b_fn.to_string(),
            r.a_tau.to_string(),
            r.b_tau.to_string(),
            r.gamma1.to_string(),
            r.gamma2.to_string(),
            r.remainder_ratio.to_string(),
            opt(r.curvature_scaled),
            r.barrier_ok.to_string(),
            r.rho_ok.to_string(),
        ]);
        csv.row(row);
    }
    csv
}

pub fn barrier_csv(history: &[FitRecord], records: &[DiagnosticsRecord], run_id: &str) -> Csv {
    let mut csv = Csv::new(
        run_id,
        "barrier",
        &[],
        &[
            "tau",
            "beta",
            "barrier_margin",
            "worst_y",
            "rho_central_max",
            "rho_outer_min",
            "chi_max",
            "barrier_ok",
            "rho_ok",
        ],
    );
    for (h, r) in history.iter().zip(records) {
        csv.row([
            h.tau.to_string(),
            r.beta.to_string(),
            h.barrier_margin.to_string(),
            h.barrier_worst_y.to_string(),
            h.rho_central_max.to_string(),
            opt(h.rho_outer_min),
            h.chi_max.to_string(),
            r.barrier_ok.to_string(),
            r.rho_ok.to_string(),
        ]);
    }
    csv
}

/// `(alpha, operator, entries)` blocks.
pub fn spectrum_csv(blocks: &[(f64, String, Vec<SpectrumEntry>)], run_id: &str) -> Csv {
    let mut csv = Csv::new(
        run_id,
        "spectrum",
        &[],
        &["alpha", "operator", "mode", "eigenvalue", "residual"],
    );
    for (alpha, op, entries) in blocks {
        for e in entries {
            csv.row([
                alpha.to_string(),
                op.clone(),
                e.index.to_string(),
                e.eigenvalue.to_string(),
                e.residual.to_string(),
            ]);
        }
    }
    csv
}

/// Pretty JSON with `schema`, `schema_version` and `run_id` fields; a body
/// that is not an object goes under `data`.
pub fn write_json<T: Serialize>(path: &Path, schema: &str, run_id: &str, body: &T) -> Result<()> {
    let mut map = serde_json::Map::new();
    map.insert("schema".into(), schema.into());
    map.insert("schema_version".into(), SCHEMA_VERSION.into());
    map.insert("run_id".into(), run_id.into());
    match serde_json::to_value(body)? {
        serde_json::Value::Object(fields) => map.extend(fields),
        other => {
            map.insert("data".into(), other);
        }
    }
    let text = serde_json::to_string_pretty(&map)?;
    fs::write(path, text + "\n")?;
    Ok(())
}
