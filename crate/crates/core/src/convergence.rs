//! Refinement tables: residuals per resolution and observed orders.

use crate::pohozaev::IdentityReport;
use crate::report::format_sig17;
use serde::Serialize;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConvergenceError {
    #[error("a convergence table needs at least two resolutions, got {0}")]
    TooFewLevels(usize),
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub resolution: usize,
    #[serde(serialize_with = "crate::report::sig17")]
    pub h: f64,
    #[serde(serialize_with = "crate::report::sig17")]
    pub lhs: f64,
    #[serde(serialize_with = "crate::report::sig17")]
    pub rhs: f64,
    #[serde(serialize_with = "crate::report::sig17")]
    pub residual_abs: f64,
    #[serde(serialize_with = "crate::report::sig17")]
    pub residual_rel: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// Order between each pair of successive rows.
    #[serde(serialize_with = "crate::report::sig17_vec")]
    pub orders: Vec<f64>,
}

impl ConvergenceTable {
    /// Build a table from `(h, error)` pairs alone.
    pub fn from_errors(h: &[f64], errors: &[f64]) -> Result<Self, ConvergenceError> {
        if h.len() < 2 || h.len() != errors.len() {
            return Err(ConvergenceError::TooFewLevels(h.len().min(errors.len())));
        }
        let rows = h
            .iter()
            .zip(errors)
            .map(|(&h, &e)| ConvergenceRow {
                resolution: (1.0 / h).round() as usize,
                h,
                lhs: f64::NAN,
                rhs: f64::NAN,
                residual_abs: e,
                residual_rel: f64::NAN,
            })
            .collect();
        Ok(Self {
            rows,
            orders: crate::quadrature::observed_orders(h, errors),
        })
    }

    pub fn from_reports(reports: &[IdentityReport]) -> Result<Self, ConvergenceError> {
        if reports.len() < 2 {
            return Err(ConvergenceError::TooFewLevels(reports.len()));
        }
        let rows: Vec<ConvergenceRow> = reports
            .iter()
            .map(|r| ConvergenceRow {
                resolution: r.resolution,
                h: 1.0 / r.resolution as f64,
                lhs: r.lhs,
                rhs: r.rhs,
                residual_abs: r.residual_abs,
                residual_rel: r.residual_rel,
            })
            .collect();
        let h: Vec<f64> = rows.iter().map(|r| r.h).collect();
        let e: Vec<f64> = rows.iter().map(|r| r.residual_abs).collect();
        Ok(Self {
            orders: crate::quadrature::observed_orders(&h, &e),
            rows,
        })
    }

    /// Order between the two finest levels.
    pub fn final_order(&self) -> f64 {
        *self.orders.last().expect("at least two levels")
    }

    pub fn min_order(&self) -> f64 {
        self.orders.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ConvergenceError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "resolution",
            "h",
            "lhs",
            "rhs",
            "residual_abs",
            "residual_rel",
            "observed_order",
        ])?;
        for (k, r) in self.rows.iter().enumerate() {
            let order = if k == 0 {
                String::new()
            } else {
                format_sig17(self.orders[k - 1])
            };
            w.write_record([
                r.resolution.to_string(),
                format_sig17(r.h),
                format_sig17(r.lhs),
                format_sig17(r.rhs),
                format_sig17(r.residual_abs),
                format_sig17(r.residual_rel),
                order,
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}
