use std::io::Write;

use serde::{Deserialize, Serialize};

/// Column order of trace files.
pub const TRACE_HEADER: &str =
    "iter,F,grad_norm_sq,est_gap_sq,delta_y,delta_alpha,delta_h_or_v,elapsed_ms";

/// Diagnostics of iteration `iter`: the objective and errors are evaluated at
/// the pre-step state `(x_t, α^t, y^t, ·)`, the estimator gap against `z_{t+1}`.
/// Fields a problem cannot compute are `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: u64,
    #[serde(rename = "F")]
    pub f: Option<f64>,
    pub grad_norm_sq: Option<f64>,
    pub est_gap_sq: Option<f64>,
    pub delta_y: Option<f64>,
    pub delta_alpha: Option<f64>,
    pub delta_h_or_v: Option<f64>,
    pub elapsed_ms: Option<f64>,
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        // 17 significant digits.
        Some(x) if x.is_finite() => format!("{x:.16e}"),
        Some(x) => format!("{x}"),
        None => String::new(),
    }
}

impl TraceRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.iter,
            fmt_opt(self.f),
            fmt_opt(self.grad_norm_sq),
            fmt_opt(self.est_gap_sq),
            fmt_opt(self.delta_y),
            fmt_opt(self.delta_alpha),
            fmt_opt(self.delta_h_or_v),
            fmt_opt(self.elapsed_ms),
        )
    }
}

/// Header plus one line per record.
pub fn write_trace_csv<W: Write>(mut out: W, records: &[TraceRecord]) -> std::io::Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for r in records {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}
