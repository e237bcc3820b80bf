use std::fmt::Write as _;
use std::path::Path;

use dpg_core::precond::PrecondSummary;
use serde::Serialize;

use crate::config::RunConfig;

/// One mesh level of a sweep.
#[derive(Debug, Clone, Serialize)]
pub struct Row {
    pub level: usize,
    pub elements: usize,
    pub dofs: usize,
    pub iterations: usize,
    pub avg_reduction: f64,
    pub converged: bool,
    pub setup_seconds: f64,
    pub solve_seconds: f64,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Table {
    pub label: String,
    pub p: usize,
    pub r: usize,
    pub kappa0: Option<f64>,
    pub rows: Vec<Row>,
    /// Preconditioner on the finest level.
    pub precond: Option<PrecondSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Measurement {
    pub study: String,
    pub level: usize,
    pub p: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub tables: Vec<Table>,
    pub measurements: Vec<Measurement>,
    pub warnings: Vec<String>,
}

impl RunReport {
    pub fn all_converged(&self) -> bool {
        self.tables.iter().all(|t| t.rows.iter().all(|r| r.converged))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write_json(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }

    /// Whitespace-separated tables followed by measurement CSV.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let c = &self.config;
        let _ = writeln!(s, "# study {} mesh {} precond {} rtol {}", c.study, c.mesh, c.precond, c.rtol);
        for w in &self.warnings {
            let _ = writeln!(s, "# warning: {w}");
        }
        for t in &self.tables {
            let _ = write!(s, "\n## {} p={} r={}", t.label, t.p, t.r);
            if let Some(k) = t.kappa0 {
                let _ = write!(s, " kappa0={k}");
            }
            let _ = writeln!(s);
            let _ = writeln!(
                s,
                "{:>5} {:>9} {:>10} {:>6} {:>22} {:>9} {:>22} {:>22}  note",
                "level", "elements", "dofs", "iters", "avg_reduction", "converged", "setup_s", "solve_s"
            );
            for r in &t.rows {
                let _ = writeln!(
                    s,
                    "{:>5} {:>9} {:>10} {:>6} {:>22} {:>9} {:>22} {:>22}  {}",
                    r.level,
                    r.elements,
                    r.dofs,
                    r.iterations,
                    r.avg_reduction,
                    r.converged,
                    r.setup_seconds,
                    r.solve_seconds,
                    r.note.as_deref().unwrap_or("-")
                );
            }
        }
        if !self.measurements.is_empty() {
            let _ = writeln!(s, "\nstudy,level,p,value");
            for m in &self.measurements {
                let _ = writeln!(s, "{},{},{},{}", m.study, m.level, m.p, m.value);
            }
        }
        s
    }
}
