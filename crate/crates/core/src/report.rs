//! Deterministic report and trace emission.
//!
//! Reports are JSON with a fixed field order and floats printed with 17
//! significant digits, so identical inputs produce byte-identical output.
//! The writer is hand-rolled for that reason; reading back goes through
//! serde.

use serde::Deserialize;
use thiserror::Error;

use crate::certify::Certificate;
use crate::lyapunov::ConstantsMode;
use crate::simulate::{IssReport, MonitorReport, SimulationTrace};
use crate::trajectory::RegularityReport;
use crate::variation::VariationBreakdown;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("report parse error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("report schema {found} unsupported (this build reads {expected})")]
    Schema { found: u32, expected: u32 },
}

/// 17-significant-digit float formatting (round-trip exact for f64).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, Deserialize)]
pub struct SystemInfo {
    pub dimension: usize,
    pub period: Option<f64>,
    pub horizon_start: f64,
    pub horizon_end: f64,
    pub periodic: bool,
}

#[derive(Debug, Clone, Deserialize)]
pub struct AnalysisInfo {
    pub kappa: f64,
    pub beta: f64,
    pub constants_mode: String,
    pub lambda_given: Option<f64>,
    pub rho_given: Option<f64>,
    pub epsilon: f64,
    pub grid_cells_per_period: usize,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ConstantsInfo {
    pub c1: f64,
    pub c2: f64,
    pub c: Option<f64>,
    pub lambda_bound: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct RegularityInfo {
    pub l_bound: f64,
    pub alpha_max: f64,
    pub jump_count: usize,
    pub assumption24_suspect: bool,
}

#[derive(Debug, Clone, Deserialize)]
pub struct VariationInfo {
    pub continuous: f64,
    pub jump: f64,
    pub total: f64,
}

impl From<&VariationBreakdown> for VariationInfo {
    fn from(v: &VariationBreakdown) -> Self {
        VariationInfo { continuous: v.continuous_part, jump: v.jump_part, total: v.total }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct IntegralsInfo {
    pub window_start: f64,
    pub window_end: f64,
    pub int_phi: f64,
    pub int_gamma: f64,
    pub tv_a: VariationInfo,
    pub tv_phi: VariationInfo,
    pub tv_tilde: VariationInfo,
}

#[derive(Debug, Clone, Deserialize)]
pub struct CriterionInfo {
    pub lambda: f64,
    pub rho: f64,
    /// Smallest feasible offset; absent when the slope is infeasible.
    pub min_rho: Option<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub feasible: bool,
    pub worst_window_start: f64,
    pub worst_window_end: f64,
    pub worst_window_lhs: f64,
    pub worst_window_rhs: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct IssInfo {
    pub a: f64,
    pub b: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
}

/// Full certification report; the JSON document the CLI emits and the
/// simulation checker reads back.
#[derive(Debug, Clone, Deserialize)]
pub struct CertifyReport {
    pub schema: u32,
    pub system: SystemInfo,
    pub analysis: AnalysisInfo,
    pub constants: ConstantsInfo,
    pub regularity: RegularityInfo,
    pub integrals: IntegralsInfo,
    pub criterion: CriterionInfo,
    pub iss: Option<IssInfo>,
}

impl CertifyReport {
    #[allow(clippy::too_many_arguments)]
    pub fn assemble(
        dimension: usize,
        period: Option<f64>,
        regularity: &RegularityReport,
        cert: &Certificate,
        lambda_given: Option<f64>,
        rho_given: Option<f64>,
        grid_cells: usize,
        window: (f64, f64),
        int_phi: f64,
        int_gamma: f64,
        tv_a: &VariationBreakdown,
        tv_phi: &VariationBreakdown,
        tv_tilde: &VariationBreakdown,
    ) -> Self {
        let constants = &cert.params.constants;
        let lhs = constants.c1 * int_phi
            + constants.c2 * int_gamma
            + constants.c2 * constants.c2 * tv_tilde.total;
        // headline budget over the report window uses the requested offset
        // (zero if none was given); the certified offset is reported
        // separately
        let rhs = cert.params.lambda * (window.1 - window.0) + rho_given.unwrap_or(0.0);
        let worst = cert.worst_window.unwrap_or(crate::certify::WorstWindow {
            t_a: 0.0,
            t_b: 0.0,
            lhs: 0.0,
            rhs: 0.0,
        });
        CertifyReport {
            schema: crate::config::SCHEMA_VERSION,
            system: SystemInfo {
                dimension,
                period,
                horizon_start: cert.horizon.0,
                horizon_end: cert.horizon.1,
                periodic: cert.periodic,
            },
            analysis: AnalysisInfo {
                kappa: cert.params.kappa,
                beta: constants.beta,
                constants_mode: constants.mode.as_str().to_string(),
                lambda_given,
                rho_given,
                epsilon: cert.params.epsilon,
                grid_cells_per_period: grid_cells,
            },
            constants: ConstantsInfo {
                c1: constants.c1,
                c2: constants.c2,
                c: constants.c,
                lambda_bound: crate::certify::lambda_bound(constants),
            },
            regularity: RegularityInfo {
                l_bound: regularity.l_bound,
                alpha_max: regularity.alpha_max,
                jump_count: regularity.jump_count_per_window,
                assumption24_suspect: regularity.assumption24_suspect,
            },
            integrals: IntegralsInfo {
                window_start: window.0,
                window_end: window.1,
                int_phi,
                int_gamma,
                tv_a: tv_a.into(),
                tv_phi: tv_phi.into(),
                tv_tilde: tv_tilde.into(),
            },
            criterion: CriterionInfo {
                lambda: cert.params.lambda,
                rho: cert.params.rho,
                min_rho: cert.min_rho.is_finite().then_some(cert.min_rho),
                lhs,
                rhs,
                feasible: cert.feasible,
                worst_window_start: worst.t_a,
                worst_window_end: worst.t_b,
                worst_window_lhs: worst.lhs,
                worst_window_rhs: worst.rhs,
            },
            iss: cert.iss.map(|k| IssInfo { a: k.a, b: k.b, k1: k.k1, k2: k.k2, k3: k.k3 }),
        }
    }

    pub fn to_json(&self) -> String {
        let mut w = JsonWriter::new();
        w.open();
        w.uint("schema", self.schema as u64);
        w.object("system", |w| {
            w.uint("dimension", self.system.dimension as u64);
            w.opt_float("period", self.system.period);
            w.float("horizon_start", self.system.horizon_start);
            w.float("horizon_end", self.system.horizon_end);
            w.boolean("periodic", self.system.periodic);
        });
        w.object("analysis", |w| {
            w.float("kappa", self.analysis.kappa);
            w.float("beta", self.analysis.beta);
            w.string("constants_mode", &self.analysis.constants_mode);
            w.opt_float("lambda_given", self.analysis.lambda_given);
            w.opt_float("rho_given", self.analysis.rho_given);
            w.float("epsilon", self.analysis.epsilon);
            w.uint("grid_cells_per_period", self.analysis.grid_cells_per_period as u64);
        });
        w.object("constants", |w| {
            w.float("c1", self.constants.c1);
            w.float("c2", self.constants.c2);
            w.opt_float("c", self.constants.c);
            w.float("lambda_bound", self.constants.lambda_bound);
        });
        w.object("regularity", |w| {
            w.float("l_bound", self.regularity.l_bound);
            w.float("alpha_max", self.regularity.alpha_max);
            w.uint("jump_count", self.regularity.jump_count as u64);
            w.boolean("assumption24_suspect", self.regularity.assumption24_suspect);
        });
        w.object("integrals", |w| {
            w.float("window_start", self.integrals.window_start);
            w.float("window_end", self.integrals.window_end);
            w.float("int_phi", self.integrals.int_phi);
            w.float("int_gamma", self.integrals.int_gamma);
            for (name, v) in [
                ("tv_a", &self.integrals.tv_a),
                ("tv_phi", &self.integrals.tv_phi),
                ("tv_tilde", &self.integrals.tv_tilde),
            ] {
                w.object(name, |w| {
                    w.float("continuous", v.continuous);
                    w.float("jump", v.jump);
                    w.float("total", v.total);
                });
            }
        });
        w.object("criterion", |w| {
            w.float("lambda", self.criterion.lambda);
            w.float("rho", self.criterion.rho);
            w.opt_float("min_rho", self.criterion.min_rho);
            w.float("lhs", self.criterion.lhs);
            w.float("rhs", self.criterion.rhs);
            w.boolean("feasible", self.criterion.feasible);
            w.float("worst_window_start", self.criterion.worst_window_start);
            w.float("worst_window_end", self.criterion.worst_window_end);
            w.float("worst_window_lhs", self.criterion.worst_window_lhs);
            w.float("worst_window_rhs", self.criterion.worst_window_rhs);
        });
        match &self.iss {
            None => w.null("iss"),
            Some(k) => w.object("iss", |w| {
                w.float("a", k.a);
                w.float("b", k.b);
                w.float("k1", k.k1);
                w.float("k2", k.k2);
                w.float("k3", k.k3);
            }),
        }
        w.close()
    }

    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        let report: CertifyReport = serde_json::from_str(text)?;
        if report.schema != crate::config::SCHEMA_VERSION {
            return Err(ReportError::Schema {
                found: report.schema,
                expected: crate::config::SCHEMA_VERSION,
            });
        }
        Ok(report)
    }

    /// Rebuild the certificate parameters this report was issued for.
    pub fn params(&self) -> crate::certify::CertificateParams {
        let mode = if self.analysis.constants_mode == "formula" {
            ConstantsMode::Formula
        } else {
            ConstantsMode::Spectral
        };
        crate::certify::CertificateParams {
            kappa: self.analysis.kappa,
            lambda: self.criterion.lambda,
            rho: self.criterion.rho,
            epsilon: self.analysis.epsilon,
            constants: crate::lyapunov::ConstantsBundle {
                c1: self.constants.c1,
                c2: self.constants.c2,
                c: self.constants.c,
                beta: self.analysis.beta,
                mode,
            },
        }
    }
}

/// Trace CSV: `t, x1..xn, norm_x, V, W, xi, envelope`. Monitor and envelope
/// columns are empty when no certificate was supplied.
pub fn trace_csv(
    trace: &SimulationTrace,
    monitor: Option<&MonitorReport>,
    iss: Option<&IssReport>,
) -> String {
    let dim = trace.samples.first().map_or(0, |s| s.x.len());
    let mut out = String::new();
    out.push('t');
    for i in 1..=dim {
        out.push_str(&format!(",x{i}"));
    }
    out.push_str(",norm_x,V,W,xi,envelope\n");
    for (k, s) in trace.samples.iter().enumerate() {
        out.push_str(&fmt_f64(s.t));
        for i in 0..dim {
            out.push(',');
            out.push_str(&fmt_f64(s.x[i]));
        }
        out.push(',');
        out.push_str(&fmt_f64(s.norm_x));
        match monitor {
            Some(m) => {
                let ms = &m.samples[k];
                out.push(',');
                out.push_str(&fmt_f64(ms.v));
                out.push(',');
                out.push_str(&fmt_f64(ms.w));
                out.push(',');
                out.push_str(&fmt_f64(ms.xi));
            }
            None => out.push_str(",,,"),
        }
        match iss {
            Some(r) => {
                out.push(',');
                out.push_str(&fmt_f64(r.envelope[k]));
            }
            None => out.push(','),
        }
        out.push('\n');
    }
    out
}

struct JsonWriter {
    buf: String,
    indent: usize,
    needs_comma: bool,
}

impl JsonWriter {
    fn new() -> Self {
        JsonWriter { buf: String::new(), indent: 0, needs_comma: false }
    }

    fn open(&mut self) {
        self.buf.push_str("{\n");
        self.indent = 1;
        self.needs_comma = false;
    }

    fn close(mut self) -> String {
        self.buf.push_str("\n}\n");
        self.buf
    }

    fn key(&mut self, name: &str) {
        if self.needs_comma {
            self.buf.push_str(",\n");
        }
        for _ in 0..self.indent {
            self.buf.push_str("  ");
        }
        self.buf.push('"');
        self.buf.push_str(name);
        self.buf.push_str("\": ");
        self.needs_comma = true;
    }

    fn float(&mut self, name: &str, v: f64) {
        self.key(name);
        self.buf.push_str(&fmt_f64(v));
    }

    fn opt_float(&mut self, name: &str, v: Option<f64>) {
        match v {
            Some(v) => self.float(name, v),
            None => self.null(name),
        }
    }

    fn uint(&mut self, name: &str, v: u64) {
        self.key(name);
        self.buf.push_str(&v.to_string());
    }

    fn boolean(&mut self, name: &str, v: bool) {
        self.key(name);
        self.buf.push_str(if v { "true" } else { "false" });
    }

    fn string(&mut self, name: &str, v: &str) {
        self.key(name);
        self.buf.push('"');
        self.buf.push_str(v);
        self.buf.push('"');
    }

    fn null(&mut self, name: &str) {
        self.key(name);
        self.buf.push_str("null");
    }

    fn object(&mut self, name: &str, fill: impl FnOnce(&mut Self)) {
        self.key(name);
        self.buf.push_str("{\n");
        self.indent += 1;
        self.needs_comma = false;
        fill(self);
        self.buf.push('\n');
        self.indent -= 1;
        for _ in 0..self.indent {
            self.buf.push_str("  ");
        }
        self.buf.push('}');
        self.needs_comma = true;
    }
}
