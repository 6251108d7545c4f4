//! Forecast stream CSV: one row per round.
//!
//! ```text
//! t,y,expert1_kind,expert1_params,expert1_conf,expert2_kind,...
//! 1,0.42,gmm,0.7;0.4;0.05;0.3;0.5;0.1,1,triangular,0.1;0.4;0.9,0.25
//! ```
//!
//! `params` are semicolon-separated reals in the order given by
//! [`ParametricDistribution::params`].

use std::io::{Read, Write};

use thiserror::Error;

use crate::distributions::{GridDomain, Outcome, ParametricDistribution};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("bad header: {0}")]
    Header(String),

    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },

    #[error("line {line}: expected round {expected}, found {found}")]
    NonContiguous {
        line: u64,
        expected: u64,
        found: u64,
    },

    #[error("line {line}: outcome {y} outside [{a}, {b}] (use --lenient to clip)")]
    OutOfRange { line: u64, y: f64, a: f64, b: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpertSpec {
    pub dist: ParametricDistribution,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastRow {
    pub t: u64,
    pub y: Outcome,
    /// Set when the raw outcome was clipped into the domain.
    pub clipped_from: Option<f64>,
    /// 1-based line number in the source file.
    pub line: u64,
    pub experts: Vec<ExpertSpec>,
}

pub fn header(experts: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string(), "y".to_string()];
    for k in 1..=experts {
        cols.push(format!("expert{k}_kind"));
        cols.push(format!("expert{k}_params"));
        cols.push(format!("expert{k}_conf"));
    }
    cols
}

/// Streaming reader; rows come out in file order.
pub struct ForecastReader<R: Read> {
    records: csv::StringRecordsIntoIter<R>,
    domain: GridDomain,
    lenient: bool,
    experts: usize,
    next_round: u64,
}

impl<R: Read> ForecastReader<R> {
    pub fn new(reader: R, domain: GridDomain, lenient: bool) -> Result<Self, IngestError> {
        let mut csv = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let head = csv
            .headers()
            .map_err(|e| IngestError::Header(e.to_string()))?
            .clone();
        if head.len() < 5 || (head.len() - 2) % 3 != 0 {
            return Err(IngestError::Header(format!(
                "expected t, y and triples of expert columns, got {} columns",
                head.len()
            )));
        }
        let experts = (head.len() - 2) / 3;
        for (got, want) in head.iter().zip(header(experts)) {
            if got != want {
                return Err(IngestError::Header(format!(
                    "column {got:?}, expected {want:?}"
                )));
            }
        }
        Ok(Self {
            records: csv.into_records(),
            domain,
            lenient,
            experts,
            next_round: 1,
        })
    }

    pub fn experts(&self) -> usize {
        self.experts
    }

    fn parse(&mut self, record: csv::StringRecord) -> Result<ForecastRow, IngestError> {
        let line = record.position().map_or(0, |p| p.line());
        let bad = |message: String| IngestError::Malformed { line, message };
        if record.len() != 2 + 3 * self.experts {
            return Err(bad(format!(
                "expected {} fields, got {}",
                2 + 3 * self.experts,
                record.len()
            )));
        }
        let t: u64 = record[0]
            .parse()
            .map_err(|_| bad(format!("bad round index {:?}", &record[0])))?;
        if t != self.next_round {
            return Err(IngestError::NonContiguous {
                line,
                expected: self.next_round,
                found: t,
            });
        }
        let raw_y: f64 = record[1]
            .parse()
            .map_err(|_| bad(format!("bad outcome {:?}", &record[1])))?;
        let (y, clipped_from) = match Outcome::new(raw_y, &self.domain) {
            Ok(y) => (y, None),
            Err(_) if self.lenient && raw_y.is_finite() => {
                let (y, _) =
                    Outcome::clipped(raw_y, &self.domain).map_err(|e| bad(e.to_string()))?;
                (y, Some(raw_y))
            }
            Err(_) => {
                return Err(IngestError::OutOfRange {
                    line,
                    y: raw_y,
                    a: self.domain.a(),
                    b: self.domain.b(),
                })
            }
        };
        let mut experts = Vec::with_capacity(self.experts);
        for k in 0..self.experts {
            let base = 2 + 3 * k;
            let kind = &record[base];
            let params = record[base + 1]
                .split(';')
                .map(|p| p.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| {
                    bad(format!(
                        "expert {}: bad params {:?}",
                        k + 1,
                        &record[base + 1]
                    ))
                })?;
            let dist = ParametricDistribution::from_kind_params(kind, &params, &self.domain)
                .map_err(|e| bad(format!("expert {}: {e}", k + 1)))?;
            let confidence: f64 = record[base + 2].parse().map_err(|_| {
                bad(format!(
                    "expert {}: bad confidence {:?}",
                    k + 1,
                    &record[base + 2]
                ))
            })?;
            if !(0.0..=1.0).contains(&confidence) {
                return Err(bad(format!(
                    "expert {}: confidence {confidence} outside [0, 1]",
                    k + 1
                )));
            }
            experts.push(ExpertSpec { dist, confidence });
        }
        self.next_round += 1;
        Ok(ForecastRow {
            t,
            y,
            clipped_from,
            line,
            experts,
        })
    }
}

impl<R: Read> Iterator for ForecastReader<R> {
    type Item = Result<ForecastRow, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        let record = self.records.next()?;
        Some(match record {
            Ok(r) => self.parse(r),
            Err(e) => Err(IngestError::Malformed {
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            }),
        })
    }
}

/// Write rows back out in the same schema.
pub fn write_forecasts<W: Write>(writer: W, rows: &[ForecastRow]) -> csv::Result<()> {
    let experts = rows.first().map_or(0, |r| r.experts.len());
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(header(experts))?;
    for row in rows {
        let mut fields = vec![
            row.t.to_string(),
            super::output::fmt(row.clipped_from.unwrap_or(row.y.value())),
        ];
        for e in &row.experts {
            fields.push(e.dist.kind().to_string());
            fields.push(
                e.dist
                    .params()
                    .iter()
                    .map(|&p| super::output::fmt(p))
                    .collect::<Vec<_>>()
                    .join(";"),
            );
            fields.push(super::output::fmt(e.confidence));
        }
        csv.write_record(fields)?;
    }
    csv.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dom() -> GridDomain {
        GridDomain::unit(16).unwrap()
    }

    fn read(text: &str, lenient: bool) -> Result<Vec<ForecastRow>, IngestError> {
        ForecastReader::new(text.as_bytes(), dom(), lenient)?.collect()
    }

    const HEAD: &str =
        "t,y,expert1_kind,expert1_params,expert1_conf,expert2_kind,expert2_params,expert2_conf\n";

    #[test]
    fn parses_rows() {
        let text = format!(
            "{HEAD}1,0.4,uniform,0;1,1,triangular,0.1;0.4;0.9,0.25\n2,0.6,point,0.5,0,gmm,1;0.5;0.1,1\n"
        );
        let rows = read(&text, false).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].experts[1].confidence, 0.25);
        assert_eq!(
            rows[1].experts[0].dist,
            ParametricDistribution::point_mass(0.5).unwrap()
        );
        assert_eq!(rows[1].line, 3);
    }

    #[test]
    fn reports_line_numbers() {
        let text =
            format!("{HEAD}1,0.4,uniform,0;1,1,uniform,0;1,1\n2,0.4,uniform,0;x,1,uniform,0;1,1\n");
        match read(&text, false) {
            Err(IngestError::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_gaps_and_bad_values() {
        let gap =
            format!("{HEAD}1,0.4,uniform,0;1,1,uniform,0;1,1\n3,0.4,uniform,0;1,1,uniform,0;1,1\n");
        assert!(matches!(
            read(&gap, false),
            Err(IngestError::NonContiguous {
                expected: 2,
                found: 3,
                ..
            })
        ));
        let conf = format!("{HEAD}1,0.4,uniform,0;1,1.5,uniform,0;1,1\n");
        assert!(read(&conf, false).is_err());
        let support = format!("{HEAD}1,0.4,uniform,0;2,1,uniform,0;1,1\n");
        assert!(read(&support, false).is_err());
        assert!(matches!(
            read("t,y,a\n", false),
            Err(IngestError::Header(_))
        ));
        let short = format!("{HEAD}1,0.4,uniform,0;1,1\n");
        assert!(read(&short, false).is_err());
    }

    #[test]
    fn strict_and_lenient_outcomes() {
        let text = format!("{HEAD}1,1.2,uniform,0;1,1,uniform,0;1,1\n");
        assert!(matches!(
            read(&text, false),
            Err(IngestError::OutOfRange { line: 2, .. })
        ));
        let rows = read(&text, true).unwrap();
        assert_eq!(rows[0].y.value(), 1.0);
        assert_eq!(rows[0].clipped_from, Some(1.2));
    }

    #[test]
    fn writer_round_trip() {
        let text = format!("{HEAD}1,0.4,uniform,0;1,1,triangular,0.1;0.4;0.9,0.25\n");
        let rows = read(&text, false).unwrap();
        let mut buf = Vec::new();
        write_forecasts(&mut buf, &rows).unwrap();
        let back = read(std::str::from_utf8(&buf).unwrap(), false).unwrap();
        assert_eq!(back, rows);
    }
}
