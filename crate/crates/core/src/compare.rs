//! Column-wise deviation between two traces sampled on different time grids.

use thiserror::Error;

use crate::io::CsvTable;

#[derive(Debug, Error, PartialEq)]
pub enum CompareError {
    #[error("headers differ: reference {reference:?}, test {test:?}")]
    HeaderMismatch { reference: Vec<String>, test: Vec<String> },
    #[error("{0} trace has no rows")]
    Empty(&'static str),
    #[error("time ranges do not overlap: reference [{0}, {1}], test [{2}, {3}]")]
    Disjoint(f64, f64, f64, f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ColumnDeviation {
    pub name: String,
    pub max_abs: f64,
    /// Time of the largest deviation.
    pub at: f64,
    pub rms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareReport {
    /// Test rows inside the common time range.
    pub samples: usize,
    pub columns: Vec<ColumnDeviation>,
}

impl CompareReport {
    pub fn get(&self, name: &str) -> Option<&ColumnDeviation> {
        self.columns.iter().find(|c| c.name == name)
    }
}

/// Index of the row of `times` (ascending) nearest to `t`; ties go to the earlier row.
fn nearest(times: &[f64], t: f64) -> usize {
    let k = times.partition_point(|&x| x < t);
    if k == 0 {
        0
    } else if k == times.len() || t - times[k - 1] <= times[k] - t {
        k - 1
    } else {
        k
    }
}

/// Deviations of `test` from `reference`, column 0 being time. Every test row
/// within the common time range is matched to the nearest reference row.
pub fn compare(reference: &CsvTable, test: &CsvTable) -> Result<CompareReport, CompareError> {
    if reference.headers != test.headers {
        return Err(CompareError::HeaderMismatch {
            reference: reference.headers.clone(),
            test: test.headers.clone(),
        });
    }
    let (rf, tf) = match (reference.rows.first(), test.rows.first()) {
        (None, _) => return Err(CompareError::Empty("reference")),
        (_, None) => return Err(CompareError::Empty("test")),
        (Some(a), Some(b)) => (a[0], b[0]),
    };
    let rl = reference.rows.last().unwrap()[0];
    let tl = test.rows.last().unwrap()[0];
    let (lo, hi) = (rf.max(tf), rl.min(tl));
    if lo > hi {
        return Err(CompareError::Disjoint(rf, rl, tf, tl));
    }

    let times: Vec<f64> = reference.rows.iter().map(|r| r[0]).collect();
    let ncol = reference.headers.len();
    let mut max = vec![0.0_f64; ncol];
    let mut at = vec![lo; ncol];
    let mut sq = vec![0.0_f64; ncol];
    let mut samples = 0usize;
    for row in test.rows.iter().filter(|r| r[0] >= lo && r[0] <= hi) {
        let r = &reference.rows[nearest(&times, row[0])];
        for j in 1..ncol {
            let d = (row[j] - r[j]).abs();
            if d > max[j] || d.is_nan() {
                max[j] = d;
                at[j] = row[0];
            }
            sq[j] += d * d;
        }
        samples += 1;
    }
    let columns = (1..ncol)
        .map(|j| ColumnDeviation {
            name: reference.headers[j].clone(),
            max_abs: max[j],
            at: at[j],
            rms: (sq[j] / samples as f64).sqrt(),
        })
        .collect();
    Ok(CompareReport { samples, columns })
}
