//! Alert-record parsing.
//!
//! Each record is one qualified statement: the source IP is the head, the
//! attack category the relation and the target IP the tail. Optional columns
//! become qualifier pairs after bucketing into categorical values.

use std::io::Read;
use std::net::IpAddr;

use chrono::{DateTime, NaiveDateTime, Timelike};

use super::{Statement, Vocab};
use crate::error::{Error, Result};

/// Optional alert columns that become qualifiers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Column {
    DetectTime,
    FlowCount,
    Port,
    Protocol,
}

impl Column {
    pub fn header(self) -> &'static str {
        match self {
            Column::DetectTime => "DetectTime",
            Column::FlowCount => "FlowCount",
            Column::Port => "Port",
            Column::Protocol => "Protocol",
        }
    }

    /// Qualifier key under which the column is stored.
    pub fn key(self) -> &'static str {
        match self {
            Column::DetectTime => "detectTime",
            Column::FlowCount => "flowCount",
            Column::Port => "port",
            Column::Protocol => "protocol",
        }
    }
}

/// Which qualifier columns to keep and how to bucket ports.
#[derive(Clone, Debug)]
pub struct Schema {
    pub qualifiers: Vec<Column>,
    /// Ports below this value keep their number; the rest become `ephemeral`.
    pub port_threshold: u32,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            qualifiers: vec![Column::DetectTime, Column::FlowCount, Column::Port, Column::Protocol],
            port_threshold: 1024,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rejection {
    pub line: usize,
    pub reason: String,
}

/// Result of parsing an alert file: accepted statements plus per-line rejections.
#[derive(Clone, Debug, Default)]
pub struct Ingested {
    pub statements: Vec<Statement>,
    pub vocab: Vocab,
    pub rejected: Vec<Rejection>,
}

/// Flow-count bucket named by its decade, e.g. `1e4–1e5` for 17094.
pub fn flow_bucket(count: u64) -> String {
    if count == 0 {
        return "0".to_string();
    }
    let decade = count.ilog10();
    format!("1e{}–1e{}", decade, decade + 1)
}

fn parse_ip(s: &str) -> std::result::Result<String, String> {
    s.parse::<IpAddr>()
        .map(|ip| ip.to_string())
        .map_err(|_| format!("malformed IP address {s:?}"))
}

fn parse_category(s: &str) -> std::result::Result<String, String> {
    let compact: String = s.split_whitespace().collect();
    let ok = !compact.is_empty()
        && compact
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-' | '/' | ':'));
    if ok {
        Ok(compact)
    } else {
        Err(format!("malformed category {s:?}"))
    }
}

fn hour_bucket(s: &str) -> std::result::Result<String, String> {
    let hour = DateTime::parse_from_rfc3339(s)
        .map(|t| t.hour())
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S").map(|t| t.hour()))
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M").map(|t| t.hour()))
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S").map(|t| t.hour()))
        .map_err(|_| format!("unparseable detect time {s:?}"))?;
    Ok(format!("h{hour:02}"))
}

fn bucket(column: Column, raw: &str, schema: &Schema) -> std::result::Result<String, String> {
    match column {
        Column::DetectTime => hour_bucket(raw),
        Column::FlowCount => {
            let digits: String = raw.chars().filter(|c| !matches!(c, ',' | '_')).collect();
            let n: u64 = digits.parse().map_err(|_| format!("invalid flow count {raw:?}"))?;
            Ok(flow_bucket(n))
        }
        Column::Port => {
            let port: u32 = raw.parse().map_err(|_| format!("invalid port {raw:?}"))?;
            if port > 65_535 {
                Err(format!("port {port} out of range"))
            } else if port < schema.port_threshold {
                Ok(port.to_string())
            } else {
                Ok("ephemeral".to_string())
            }
        }
        Column::Protocol => {
            if raw.chars().any(char::is_whitespace) {
                Err(format!("malformed protocol {raw:?}"))
            } else {
                Ok(raw.to_string())
            }
        }
    }
}

/// Parses a header-bearing CSV alert stream.
///
/// `SourceIP`, `TargetIP` and `Category` columns are mandatory; the others are
/// optional and may be left blank per record. Records whose source equals
/// their target are rejected, since an IP takes one role per alert.
pub fn parse_alerts<R: Read>(reader: R, schema: &Schema) -> Result<Ingested> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let required = |name: &str| col(name).ok_or_else(|| Error::Data(format!("missing required column {name}")));
    let (src_col, dst_col, cat_col) = (required("SourceIP")?, required("TargetIP")?, required("Category")?);
    let qual_cols: Vec<(Column, usize)> = schema
        .qualifiers
        .iter()
        .filter_map(|&c| col(c.header()).map(|i| (c, i)))
        .collect();

    let mut out = Ingested::default();
    let mut seen = 0usize;
    for (i, record) in rdr.records().enumerate() {
        seen += 1;
        // header is line 1
        let fallback_line = i + 2;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line() as usize).unwrap_or(fallback_line);
                out.rejected.push(Rejection {
                    line,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let line = record.position().map(|p| p.line() as usize).unwrap_or(fallback_line);
        match parse_record(&record, src_col, dst_col, cat_col, &qual_cols, schema) {
            Ok((h, r, t, quals)) => {
                let v = &mut out.vocab;
                let head = v.entities.intern(&h);
                let tail = v.entities.intern(&t);
                let relation = v.relations.intern(&r);
                let qualifiers = quals
                    .iter()
                    .map(|(k, val)| (v.qual_keys.intern(k), v.qual_values.intern(val)))
                    .collect();
                out.statements.push(Statement {
                    head,
                    relation,
                    tail,
                    qualifiers,
                });
            }
            Err(reason) => out.rejected.push(Rejection { line, reason }),
        }
    }
    if seen == 0 {
        return Err(Error::Data("no records".to_string()));
    }
    Ok(out)
}

type Parsed = (String, String, String, Vec<(&'static str, String)>);

fn parse_record(
    record: &csv::StringRecord,
    src_col: usize,
    dst_col: usize,
    cat_col: usize,
    qual_cols: &[(Column, usize)],
    schema: &Schema,
) -> std::result::Result<Parsed, String> {
    let field = |i: usize, name: &str| match record.get(i) {
        Some(v) if !v.is_empty() => Ok(v),
        _ => Err(format!("missing {name}")),
    };
    let h = parse_ip(field(src_col, "SourceIP")?)?;
    let t = parse_ip(field(dst_col, "TargetIP")?)?;
    let r = parse_category(field(cat_col, "Category")?)?;
    if h == t {
        return Err(format!("source and target are the same address {h}"));
    }
    let mut quals = Vec::new();
    for &(c, i) in qual_cols {
        match record.get(i) {
            Some(raw) if !raw.is_empty() => quals.push((c.key(), bucket(c, raw, schema)?)),
            _ => {}
        }
    }
    Ok((h, r, t, quals))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE: &str = "DetectTime,FlowCount,SourceIP,TargetIP,Port,Protocol,Category
2019-03-11 00:05,\"17,094\",185.192.59.136,142.252.135.136,22,TCP,Recon Scan
2019-03-12 00:45,\"5,113\",78.234.46.141,142.252.32.63,443,TCP,Availability DoS
2019-03-14 00:25,15,185.192.59.136,142.252.32.63,81,TCP,Availability DDoS
2019-03-14 00:25,39,78.234.46.141,142.252.32.63,22,UDP,Anomaly Traffic
";

    fn names(out: &Ingested, s: &Statement) -> (String, String, String, Vec<(String, String)>) {
        let v = &out.vocab;
        (
            v.entities.name(s.head).to_string(),
            v.relations.name(s.relation).to_string(),
            v.entities.name(s.tail).to_string(),
            s.qualifiers
                .iter()
                .map(|&(k, val)| (v.qual_keys.name(k).to_string(), v.qual_values.name(val).to_string()))
                .collect(),
        )
    }

    #[test]
    fn first_example_row_maps_to_statement() {
        let out = parse_alerts(TABLE.as_bytes(), &Schema::default()).unwrap();
        assert_eq!(out.statements.len(), 4);
        assert!(out.rejected.is_empty());
        let (h, r, t, q) = names(&out, &out.statements[0]);
        assert_eq!(h, "185.192.59.136");
        assert_eq!(r, "ReconScan");
        assert_eq!(t, "142.252.135.136");
        let q: Vec<(&str, &str)> = q.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        assert_eq!(
            q,
            vec![("detectTime", "h00"), ("flowCount", "1e4–1e5"), ("port", "22"), ("protocol", "TCP")]
        );
        // shared head across rows 1 and 3
        assert_eq!(out.statements[0].head, out.statements[2].head);
    }

    #[test]
    fn flow_bucket_matches_decade_oracle() {
        for v in [1u64, 9, 10, 99, 100, 17094, 99_999, 100_000, 123_456_789] {
            let k = (v as f64).log10().floor() as i64;
            assert_eq!(flow_bucket(v), format!("1e{}–1e{}", k, k + 1), "{v}");
        }
        assert_eq!(flow_bucket(17094), "1e4–1e5");
    }

    #[test]
    fn record_without_qualifier_columns_has_none() {
        let data = "SourceIP,TargetIP,Category\n1.1.1.1,2.2.2.2,Scan\n";
        let out = parse_alerts(data.as_bytes(), &Schema::default()).unwrap();
        assert_eq!(out.statements[0].qualifiers.len(), 0);
    }

    #[test]
    fn bad_records_are_rejected_with_line_numbers() {
        let data = "SourceIP,TargetIP,Category,Port\n\
                    1.1.1.1,2.2.2.2,Scan,22\n\
                    1.1.1.x,2.2.2.2,Scan,22\n\
                    1.1.1.1,,Scan,22\n\
                    1.1.1.1,2.2.2.2,,22\n\
                    1.1.1.1,1.1.1.1,Scan,22\n\
                    1.1.1.1,2.2.2.2,Scan,70000\n\
                    1.1.1.1,2.2.2.2,Sc@n,22\n\
                    1.1.1.1,2.2.2.2,Scan,5000\n";
        let out = parse_alerts(data.as_bytes(), &Schema::default()).unwrap();
        assert_eq!(out.statements.len(), 2);
        let lines: Vec<usize> = out.rejected.iter().map(|r| r.line).collect();
        assert_eq!(lines, vec![3, 4, 5, 6, 7, 8]);
        let port = out.statements[1].qualifiers[0].1;
        assert_eq!(out.vocab.qual_values.name(port), "ephemeral");
    }

    #[test]
    fn empty_input_has_no_records() {
        let err = parse_alerts("SourceIP,TargetIP,Category\n".as_bytes(), &Schema::default()).unwrap_err();
        assert_eq!(err.to_string(), "no records");
        assert!(parse_alerts("SourceIP,Category\n1.1.1.1,x\n".as_bytes(), &Schema::default()).is_err());
    }

    #[test]
    fn duplicate_rows_are_kept() {
        let data = "SourceIP,TargetIP,Category\n1.1.1.1,2.2.2.2,Scan\n1.1.1.1,2.2.2.2,Scan\n";
        let out = parse_alerts(data.as_bytes(), &Schema::default()).unwrap();
        assert_eq!(out.statements.len(), 2);
        assert_eq!(out.statements[0], out.statements[1]);
    }
}
