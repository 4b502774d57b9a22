//! Trace records and their CSV / JSON-lines encodings.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use serde::Serialize;

use crate::node::SensorRecord;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub time: f64,
    pub node_id: String,
    pub event_kind: &'static str,
    pub phase: &'static str,
    #[serde(rename = "stored_J")]
    pub stored_j: f64,
    #[serde(rename = "V_B")]
    pub v_b: f64,
    #[serde(rename = "harvested_J_cum")]
    pub harvested_j_cum: f64,
    pub decoded_bits_cum: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TraceFormat {
    #[default]
    Csv,
    Jsonl,
}

impl TraceFormat {
    pub fn extension(self) -> &'static str {
        match self {
            TraceFormat::Csv => "csv",
            TraceFormat::Jsonl => "jsonl",
        }
    }
}

impl FromStr for TraceFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(TraceFormat::Csv),
            "jsonl" => Ok(TraceFormat::Jsonl),
            other => Err(format!("unknown format `{other}` (expected csv or jsonl)")),
        }
    }
}

impl fmt::Display for TraceFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.extension())
    }
}

fn csv_error(e: csv::Error) -> io::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => e,
        other => io::Error::other(format!("{other:?}")),
    }
}

pub fn write_trace<W: Write>(rows: &[TraceRow], format: TraceFormat, out: W) -> io::Result<()> {
    match format {
        TraceFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            if rows.is_empty() {
                w.write_record([
                    "time",
                    "node_id",
                    "event_kind",
                    "phase",
                    "stored_J",
                    "V_B",
                    "harvested_J_cum",
                    "decoded_bits_cum",
                ])
                .map_err(csv_error)?;
            }
            for row in rows {
                w.serialize(row).map_err(csv_error)?;
            }
            w.flush()
        }
        TraceFormat::Jsonl => {
            let mut out = io::BufWriter::new(out);
            for row in rows {
                serde_json::to_writer(&mut out, row)?;
                out.write_all(b"\n")?;
            }
            out.flush()
        }
    }
}

pub fn trace_to_string(rows: &[TraceRow], format: TraceFormat) -> String {
    let mut buf = Vec::new();
    write_trace(rows, format, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("trace output is UTF-8")
}

/// Memory-card contents as `timestamp,sensor_id,value`.
pub fn write_storage<W: Write>(records: &[SensorRecord], out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["timestamp", "sensor_id", "value"]).map_err(csv_error)?;
    for r in records {
        w.write_record([r.timestamp.to_string(), r.sensor_id.to_string(), r.value.to_string()])
            .map_err(csv_error)?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row() -> TraceRow {
        TraceRow {
            time: 1.5,
            node_id: "n".into(),
            event_kind: "ChargeCheck",
            phase: "Harvest",
            stored_j: 12.0,
            v_b: 3.7,
            harvested_j_cum: 12.0,
            decoded_bits_cum: 0.0,
        }
    }

    #[test]
    fn csv_header_and_row() {
        let s = trace_to_string(&[row()], TraceFormat::Csv);
        let mut lines = s.lines();
        assert_eq!(
            lines.next(),
            Some("time,node_id,event_kind,phase,stored_J,V_B,harvested_J_cum,decoded_bits_cum")
        );
        assert_eq!(lines.next(), Some("1.5,n,ChargeCheck,Harvest,12.0,3.7,12.0,0.0"));
    }

    #[test]
    fn empty_csv_still_has_header() {
        assert!(trace_to_string(&[], TraceFormat::Csv).starts_with("time,node_id"));
    }

    #[test]
    fn jsonl_rows() {
        let s = trace_to_string(&[row(), row()], TraceFormat::Jsonl);
        assert_eq!(s.lines().count(), 2);
        let v: serde_json::Value = serde_json::from_str(s.lines().next().unwrap()).unwrap();
        assert_eq!(v["stored_J"], 12.0);
        assert_eq!(v["phase"], "Harvest");
    }

    #[test]
    fn storage_dump() {
        let mut buf = Vec::new();
        write_storage(&[SensorRecord { timestamp: 2.0, sensor_id: 1, value: 24.5 }], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "timestamp,sensor_id,value\n2,1,24.5\n");
    }

    #[test]
    fn format_parsing() {
        assert_eq!("jsonl".parse::<TraceFormat>(), Ok(TraceFormat::Jsonl));
        assert!("xml".parse::<TraceFormat>().is_err());
    }
}
