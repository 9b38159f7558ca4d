//! Trace and report writers.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::conditions::ConditionVerdict;
use crate::error::{GailError, Result};
use crate::gail::{IterateTrace, SolveStatus};

pub const TRACE_COLUMNS: [&str; 10] = [
    "iter",
    "cost",
    "objective_m",
    "prox_grad_norm",
    "rho_closed_loop",
    "K_dist_to_expert",
    "theta_dist_to_center",
    "potential_P",
    "Z_local",
    "wall_time_ms",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

/// Trace written by `--format json`: the full iterates plus the stepsizes
/// that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceFile {
    pub eta: f64,
    pub lambda: f64,
    pub status: SolveStatus,
    #[serde(flatten)]
    pub trace: IterateTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub converged: bool,
    pub gamma_eps_index: Option<usize>,
    pub final_prox_grad_norm: f64,
    #[serde(rename = "final_K_error")]
    pub final_k_error: f64,
    pub condition_verdicts: Vec<ConditionVerdict>,
    pub upsilon_formula: Option<f64>,
    pub upsilon_measured: Option<f64>,
}

fn csv_err(e: csv::Error) -> GailError {
    GailError::Io(std::io::Error::other(e))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_trace_csv<W: Write>(trace: &IterateTrace, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(TRACE_COLUMNS).map_err(csv_err)?;
    for r in &trace.records {
        wr.write_record([
            r.iter.to_string(),
            r.cost.to_string(),
            r.objective_m.to_string(),
            r.prox_grad_norm.to_string(),
            r.rho.to_string(),
            r.k_dist_to_expert.to_string(),
            r.theta_dist_to_center.to_string(),
            opt(r.potential_p),
            opt(r.z_local),
            opt(r.wall_time_ms),
        ])
        .map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn trace_csv_string(trace: &IterateTrace) -> Result<String> {
    let mut buf = Vec::new();
    write_trace_csv(trace, &mut buf)?;
    String::from_utf8(buf).map_err(|e| GailError::Numerical(e.to_string()))
}

/// Column-wise view of a trace CSV; empty cells become `None`.
pub fn read_trace_csv(path: &Path) -> Result<Vec<Vec<Option<f64>>>> {
    let mut rd = csv::Reader::from_path(path).map_err(csv_err)?;
    let header: Vec<String> = rd
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(String::from)
        .collect();
    if header != TRACE_COLUMNS {
        return Err(GailError::Config(format!(
            "{}: unexpected trace columns {header:?}",
            path.display()
        )));
    }
    rd.records()
        .map(|rec| {
            let rec = rec.map_err(csv_err)?;
            rec.iter()
                .map(|cell| {
                    if cell.is_empty() {
                        Ok(None)
                    } else {
                        cell.parse::<f64>()
                            .map(Some)
                            .map_err(|e| GailError::Config(format!("bad trace cell {cell:?}: {e}")))
                    }
                })
                .collect()
        })
        .collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text =
        serde_json::to_string_pretty(value).map_err(|e| GailError::Numerical(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| GailError::Numerical(e.to_string()))
}

/// One line per condition and one indented line per check.
pub fn format_verdicts(verdicts: &[ConditionVerdict]) -> String {
    let mut out = String::new();
    for v in verdicts {
        out.push_str(&format!(
            "{:<16} {}  (binding: {})",
            v.condition,
            if v.passes { "PASS" } else { "FAIL" },
            v.binding
        ));
        if let Some(u) = v.upsilon {
            out.push_str(&format!("  upsilon = {u:.6}"));
        }
        out.push('\n');
        for c in &v.checks {
            out.push_str(&format!(
                "    {:<26} {:>13.6e} {} {:>13.6e}  {}\n",
                c.name,
                c.value,
                if c.strict { "< " } else { "<=" },
                c.bound,
                if c.holds { "ok" } else { "VIOLATED" }
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gail::{IterateRecord, SolveStatus};
    use crate::lqr::CostParam;
    use crate::numerics::Mat;

    fn rec(i: usize) -> IterateRecord {
        IterateRecord {
            iter: i,
            k: Mat::from_element(1, 1, 0.5),
            theta: CostParam::scalar(1.0, 1.0).unwrap(),
            cost: 1.25,
            objective_m: -0.1,
            prox_grad_norm: 0.3,
            rho: 0.5,
            k_dist_to_expert: 0.1,
            theta_dist_to_center: 0.0,
            sigma_norm: 1.0,
            k_norm: 0.5,
            cost_prev_theta: None,
            potential_p: Some(2.0),
            z_local: None,
            wall_time_ms: None,
        }
    }

    #[test]
    fn csv_has_exact_header_and_empty_cells() {
        let t = IterateTrace {
            records: vec![rec(0), rec(1)],
        };
        let s = trace_csv_string(&t).unwrap();
        let mut lines = s.lines();
        assert_eq!(
            lines.next().unwrap(),
            "iter,cost,objective_m,prox_grad_norm,rho_closed_loop,K_dist_to_expert,theta_dist_to_center,potential_P,Z_local,wall_time_ms"
        );
        assert_eq!(lines.next().unwrap(), "0,1.25,-0.1,0.3,0.5,0.1,0,2,,");
    }

    #[test]
    fn summary_keys() {
        let s = Summary {
            converged: true,
            gamma_eps_index: Some(3),
            final_prox_grad_norm: 1e-7,
            final_k_error: 1e-6,
            condition_verdicts: vec![],
            upsilon_formula: None,
            upsilon_measured: Some(0.9),
        };
        let v: serde_json::Value = serde_json::to_value(&s).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        for k in [
            "converged",
            "gamma_eps_index",
            "final_prox_grad_norm",
            "final_K_error",
            "condition_verdicts",
            "upsilon_formula",
            "upsilon_measured",
        ] {
            assert!(keys.contains(&k), "{k}");
        }
        assert_eq!(keys.len(), 7);
    }

    #[test]
    fn trace_file_round_trip() {
        let f = TraceFile {
            eta: 0.1,
            lambda: 0.01,
            status: SolveStatus::MaxIterations,
            trace: IterateTrace {
                records: vec![rec(0)],
            },
        };
        let s = serde_json::to_string(&f).unwrap();
        assert_eq!(serde_json::from_str::<TraceFile>(&s).unwrap(), f);
    }
}
