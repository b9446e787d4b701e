//! Per-epoch metrics and their CSV form.

use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    /// 0 is the untrained network.
    pub epoch: usize,
    pub train_error: f64,
    pub test_error: f64,
    /// `None` on epochs where the KL was not evaluated.
    pub avg_kl_f1: Option<f64>,
    /// Mean training cross-entropy over the epoch (`None` at epoch 0).
    pub train_loss: Option<f64>,
    pub wall_clock_sec: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsLog {
    pub rows: Vec<EpochMetrics>,
}

pub const METRICS_HEADER: &str = "epoch,trainError,testError,avgKlF1,wallClockSec";

impl MetricsLog {
    pub fn initial(&self) -> Option<&EpochMetrics> {
        self.rows.first().filter(|r| r.epoch == 0)
    }

    pub fn last(&self) -> Option<&EpochMetrics> {
        self.rows.last()
    }

    /// Rows for trained epochs (1…).
    pub fn trained(&self) -> impl Iterator<Item = &EpochMetrics> {
        self.rows.iter().filter(|r| r.epoch > 0)
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{METRICS_HEADER}\n");
        for r in &self.rows {
            let kl = r.avg_kl_f1.map_or(String::new(), |v| v.to_string());
            let _ = writeln!(s, "{},{},{},{},{:.3}", r.epoch, r.train_error, r.test_error, kl, r.wall_clock_sec);
        }
        s
    }
}

/// Drops the trailing wall-clock column of a metrics CSV, leaving only the
/// seed-determined part.
pub fn strip_wall_clock(csv: &str) -> String {
    csv.lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head))
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let log = MetricsLog {
            rows: vec![
                EpochMetrics {
                    epoch: 0,
                    train_error: 0.9,
                    test_error: 0.875,
                    avg_kl_f1: Some(1.25),
                    train_loss: None,
                    wall_clock_sec: 0.0,
                },
                EpochMetrics {
                    epoch: 1,
                    train_error: 0.5,
                    test_error: 0.5,
                    avg_kl_f1: None,
                    train_loss: Some(1.0),
                    wall_clock_sec: 1.23456,
                },
            ],
        };
        assert_eq!(log.to_csv(), "epoch,trainError,testError,avgKlF1,wallClockSec\n0,0.9,0.875,1.25,0.000\n1,0.5,0.5,,1.235\n");
        assert_eq!(strip_wall_clock(&log.to_csv()), "epoch,trainError,testError,avgKlF1\n0,0.9,0.875,1.25\n1,0.5,0.5,");
        assert_eq!(log.initial().unwrap().test_error, 0.875);
        assert_eq!(log.trained().count(), 1);
    }
}
