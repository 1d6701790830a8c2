//! Draw matrices on disk: a `#`-prefixed JSON header line followed by a CSV
//! table with one row per draw.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use super::{Diagnostics, PosteriorDraws, SpatialError};
use crate::data::Id;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    columns: Vec<String>,
    seed: u64,
    n_chains: usize,
    cohorts: Vec<i32>,
    areas: Vec<Id>,
    n_grades: usize,
    urban: Option<bool>,
    diagnostics: Diagnostics,
}

pub fn write_draws<W: Write>(pd: &PosteriorDraws, mut writer: W) -> Result<(), SpatialError> {
    let header = Header {
        columns: pd.columns.clone(),
        seed: pd.seed,
        n_chains: pd.n_chains,
        cohorts: pd.cohorts.clone(),
        areas: pd.areas.clone(),
        n_grades: pd.n_grades,
        urban: pd.urban,
        diagnostics: pd.diagnostics.clone(),
    };
    let json = serde_json::to_string(&header).map_err(|e| SpatialError::DrawsFormat(e.to_string()))?;
    writeln!(writer, "#{json}").map_err(|e| SpatialError::Io(e.to_string()))?;
    let mut w = csv::Writer::from_writer(writer);
    let mut names = vec!["chain".to_string()];
    names.extend(pd.columns.iter().cloned());
    w.write_record(&names)?;
    for (row, chain) in pd.values.iter().zip(&pd.chain) {
        let mut rec = vec![chain.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| SpatialError::Io(e.to_string()))?;
    Ok(())
}

pub fn read_draws<R: Read>(reader: R) -> Result<PosteriorDraws, SpatialError> {
    let mut buf = BufReader::new(reader);
    let mut first = String::new();
    buf.read_line(&mut first).map_err(|e| SpatialError::Io(e.to_string()))?;
    let json = first
        .trim_end()
        .strip_prefix('#')
        .ok_or_else(|| SpatialError::DrawsFormat("missing JSON header line".into()))?;
    let header: Header = serde_json::from_str(json).map_err(|e| SpatialError::DrawsFormat(e.to_string()))?;
    let mut rdr = csv::Reader::from_reader(buf);
    let names = rdr.headers()?.clone();
    if names.len() != header.columns.len() + 1 {
        return Err(SpatialError::DrawsFormat(format!(
            "{} columns in table, {} in header",
            names.len() - 1,
            header.columns.len()
        )));
    }
    let mut values = Vec::new();
    let mut chain = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let parse = |s: &str| s.parse::<f64>().map_err(|_| SpatialError::DrawsFormat(format!("bad number `{s}`")));
        chain.push(
            rec.get(0)
                .unwrap_or("")
                .parse::<usize>()
                .map_err(|_| SpatialError::DrawsFormat("bad chain index".into()))?,
        );
        values.push(rec.iter().skip(1).map(parse).collect::<Result<Vec<_>, _>>()?);
    }
    Ok(PosteriorDraws {
        columns: header.columns,
        values,
        chain,
        seed: header.seed,
        n_chains: header.n_chains,
        cohorts: header.cohorts,
        areas: header.areas,
        n_grades: header.n_grades,
        urban: header.urban,
        diagnostics: header.diagnostics,
    })
}
