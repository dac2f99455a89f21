//! CSV encoding of traces and error-coefficient series.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::cell::Trace;
use crate::error_analysis::ErrorTrace;

pub const TRACE_HEADER: [&str; 18] = [
    "t_ms", "Vm_mV", "INa", "O", "P", "Q", "R", "S", "T", "U", "V", "W", "cons_err", "Nai", "Ki", "Cai", "CaNSR",
    "CaJSR",
];

pub const ERRORS_HEADER: [&str; 7] = ["t_ms", "Vm", "dVdt", "errFE", "errMRL", "errHOS", "errOS"];

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("empty CSV (no header)")]
    Empty,
    #[error("row {row}, column {column}: cannot parse {value:?} as a number")]
    Parse { row: usize, column: String, value: String },
    #[error("missing column {0:?}")]
    MissingColumn(String),
}

/// Shortest decimal that parses back to the same bits.
pub fn format_f64(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

/// A numeric CSV file: one header row, then rows of floats.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn new(headers: &[&str]) -> Self {
        CsvTable {
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn read<R: Read>(r: R) -> Result<Self, CsvError> {
        let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let headers: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
        if headers.is_empty() || headers.iter().all(String::is_empty) {
            return Err(CsvError::Empty);
        }
        let mut rows = Vec::new();
        for (i, rec) in rd.records().enumerate() {
            let rec = rec?;
            let row = rec
                .iter()
                .zip(&headers)
                .map(|(v, h)| {
                    v.parse::<f64>().map_err(|_| CsvError::Parse {
                        row: i + 1,
                        column: h.clone(),
                        value: v.to_string(),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        Ok(CsvTable { headers, rows })
    }

    pub fn read_path(path: &Path) -> Result<Self, CsvError> {
        Self::read(File::open(path)?)
    }

    pub fn write<W: Write>(&self, w: W) -> Result<(), CsvError> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(&self.headers)?;
        for row in &self.rows {
            wr.write_record(row.iter().map(|&x| format_f64(x)))?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn write_path(&self, path: &Path) -> Result<(), CsvError> {
        self.write(BufWriter::new(File::create(path)?))
    }

    pub fn column_index(&self, name: &str) -> Result<usize, CsvError> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CsvError::MissingColumn(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>, CsvError> {
        let j = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r[j]).collect())
    }
}

pub fn trace_table(trace: &Trace) -> CsvTable {
    let mut t = CsvTable::new(&TRACE_HEADER);
    t.rows = trace
        .rows
        .iter()
        .map(|r| {
            let mut row = Vec::with_capacity(TRACE_HEADER.len());
            row.extend([r.t, r.vm, r.ina]);
            row.extend(r.mc);
            row.extend([r.cons_err, r.nai, r.ki, r.cai, r.cansr, r.cajsr]);
            row
        })
        .collect();
    t
}

pub fn errors_table(e: &ErrorTrace) -> CsvTable {
    let mut t = CsvTable::new(&ERRORS_HEADER);
    t.rows = e
        .samples
        .iter()
        .map(|s| vec![s.t, s.vm, s.vdot, s.coeffs.fe, s.coeffs.mrl, s.coeffs.hos, s.coeffs.os])
        .collect();
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formatting_round_trips() {
        let xs = [
            0.0,
            -0.0,
            1.0,
            -95.0,
            0.1 + 0.2,
            1.2e-4,
            4.386e-8,
            f64::MIN_POSITIVE,
            5e-324,
            1e300,
            -1.7976931348623157e308,
            std::f64::consts::PI,
        ];
        for x in xs {
            let s = format_f64(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
        assert_eq!(format_f64(-95.0), "-95");
        assert_eq!(format_f64(1e-20), "1e-20");
    }

    #[test]
    fn table_round_trip() {
        let mut t = CsvTable::new(&["a", "b"]);
        t.rows = vec![vec![1.0 / 3.0, -2e-17], vec![f64::NAN.abs(), 7.0]];
        let mut buf = Vec::new();
        t.write(&mut buf).unwrap();
        let back = CsvTable::read(buf.as_slice()).unwrap();
        assert_eq!(back.headers, t.headers);
        assert_eq!(back.rows[0], t.rows[0]);
        assert!(back.rows[1][0].is_nan());
    }

    #[test]
    fn header_is_exact() {
        let mut buf = Vec::new();
        CsvTable::new(&TRACE_HEADER).write(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap().trim_end(),
            "t_ms,Vm_mV,INa,O,P,Q,R,S,T,U,V,W,cons_err,Nai,Ki,Cai,CaNSR,CaJSR"
        );
    }

    #[test]
    fn malformed_input() {
        assert!(matches!(CsvTable::read("a,b\n1,x\n".as_bytes()), Err(CsvError::Parse { .. })));
        assert!(matches!(CsvTable::read("a,b\n1\n".as_bytes()), Err(CsvError::Csv(_))));
        assert!(CsvTable::read("".as_bytes()).is_err());
        let t = CsvTable::read("a,b\n1,2\n".as_bytes()).unwrap();
        assert!(matches!(t.column("c"), Err(CsvError::MissingColumn(_))));
        assert_eq!(t.column("b").unwrap(), vec![2.0]);
    }
}
