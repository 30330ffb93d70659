//! Tabular experiment results.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const REPORT_COLUMNS: [&str; 13] = [
    "method",
    "snr_db",
    "sample_roc",
    "sample_f1",
    "spect_f1",
    "spect_pro",
    "spect_roc",
    "temp_f1",
    "temp_roc",
    "ff_v1_mean",
    "ff_v1_std",
    "ff_v2_mean",
    "ff_v2_std",
];

/// One detector at one SNR. Metrics that are undefined for the data are `None`
/// (empty in CSV, `null` in JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub snr_db: f64,
    pub sample_roc: Option<f64>,
    pub sample_f1: Option<f64>,
    pub spect_f1: Option<f64>,
    pub spect_pro: Option<f64>,
    pub spect_roc: Option<f64>,
    pub temp_f1: Option<f64>,
    pub temp_roc: Option<f64>,
    pub ff_v1_mean: Option<f64>,
    pub ff_v1_std: Option<f64>,
    pub ff_v2_mean: Option<f64>,
    pub ff_v2_std: Option<f64>,
}

impl ReportRow {
    pub fn empty(method: &str, snr_db: f64) -> Self {
        ReportRow {
            method: method.to_string(),
            snr_db,
            sample_roc: None,
            sample_f1: None,
            spect_f1: None,
            spect_pro: None,
            spect_roc: None,
            temp_f1: None,
            temp_roc: None,
            ff_v1_mean: None,
            ff_v1_std: None,
            ff_v2_mean: None,
            ff_v2_std: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<ReportRow>,
    /// Evaluation conventions that a reader needs to interpret the numbers.
    #[serde(default)]
    pub notes: Vec<String>,
    /// Detectors or metrics that could not be computed, with the reason.
    #[serde(default)]
    pub diagnostics: Vec<String>,
}

impl MetricsReport {
    pub fn row(&self, method: &str, snr_db: f64) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.method == method && r.snr_db == snr_db)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Data(format!("csv encoding: {e}"));
        w.write_record(REPORT_COLUMNS).map_err(csv_err)?;
        for r in &self.rows {
            w.serialize(r).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Data(format!("csv encoding: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let headers = r.headers().map_err(|e| Error::Data(format!("csv header: {e}")))?;
        if headers.iter().ne(REPORT_COLUMNS) {
            return Err(Error::Data(format!(
                "unexpected report columns {:?}",
                headers.iter().collect::<Vec<_>>()
            )));
        }
        let rows = r
            .deserialize()
            .collect::<std::result::Result<Vec<ReportRow>, _>>()
            .map_err(|e| Error::Data(format!("csv row: {e}")))?;
        Ok(MetricsReport {
            rows,
            ..Default::default()
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_report_is_header_only() {
        let csv = MetricsReport::default().to_csv().unwrap();
        assert_eq!(csv, format!("{}\n", REPORT_COLUMNS.join(",")));
    }

    #[test]
    fn csv_round_trip_and_row_count() {
        let mut rep = MetricsReport::default();
        for snr in [6.0, 0.0, -6.0] {
            let mut row = ReportRow::empty("patchcore", snr);
            row.sample_roc = Some(0.9375);
            row.ff_v2_std = Some(-0.125);
            rep.rows.push(row);
        }
        let csv = rep.to_csv().unwrap();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.lines().nth(1).unwrap().starts_with("patchcore,6.0,0.9375,,"));
        assert_eq!(MetricsReport::from_csv(&csv).unwrap().rows, rep.rows);
        let json: serde_json::Value = serde_json::from_str(&rep.to_json()).unwrap();
        assert!(json["rows"][0]["spect_f1"].is_null());
    }

    #[test]
    fn wrong_header_rejected() {
        assert!(MetricsReport::from_csv("method,snr\n").is_err());
    }
}
