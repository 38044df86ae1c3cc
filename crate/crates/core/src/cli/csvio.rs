//! CSV schemas. Headers are always written and checked on read; values use
//! the shortest decimal form that round-trips exactly.

use std::path::Path;

use crate::calibration::{LearningCurve, ObservableVector, ShotRecord, NUM_OBSERVABLES, OBSERVABLE_NAMES};
use crate::evaluation::ActualVsPredicted;
use crate::{Error, Result};

use super::write_atomic;

pub fn sim_database_header() -> Vec<String> {
    OBSERVABLE_NAMES.iter().map(|s| s.to_string()).collect()
}

pub fn shots_header() -> Vec<String> {
    let mut h = vec!["shot_index".to_string(), "campaign".to_string()];
    h.extend(OBSERVABLE_NAMES.iter().map(|n| format!("sim_{n}")));
    h.extend(OBSERVABLE_NAMES.iter().map(|n| format!("exp_{n}")));
    h
}

pub fn learning_curve_header() -> Vec<String> {
    let mut h = vec!["n".to_string(), "campaign".to_string()];
    h.extend(OBSERVABLE_NAMES.iter().map(|n| format!("err_{n}")));
    h
}

pub const ACTUAL_VS_PREDICTED_HEADER: [&str; 6] =
    ["shot_index", "split", "observable", "measured", "simulation", "calibrated"];

fn encode<I, R>(header: &[String], rows: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    let wrap = |e: csv::Error| Error::Data(format!("csv encoding: {e}"));
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        w.write_record(row.into_iter().collect::<Vec<_>>()).map_err(wrap)?;
    }
    w.into_inner().map_err(|e| Error::Data(format!("csv encoding: {e}")))
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn obs_fields(v: &ObservableVector) -> impl Iterator<Item = String> {
    v.to_array().into_iter().map(num)
}

pub fn write_sim_database(path: &Path, data: &[ObservableVector]) -> Result<()> {
    let bytes = encode(&sim_database_header(), data.iter().map(|v| obs_fields(v).collect::<Vec<_>>()))?;
    write_atomic(path, &bytes)
}

pub fn write_shots(path: &Path, shots: &[ShotRecord]) -> Result<()> {
    let rows = shots.iter().map(|s| {
        let mut r = vec![s.shot_index.to_string(), s.campaign.clone()];
        r.extend(obs_fields(&s.sim));
        r.extend(obs_fields(&s.exp));
        r
    });
    write_atomic(path, &encode(&shots_header(), rows)?)
}

pub fn write_learning_curve(path: &Path, curve: &LearningCurve) -> Result<()> {
    let rows = curve.rows.iter().map(|r| {
        let mut out = vec![r.n.to_string(), r.campaign.clone()];
        out.extend(r.errors.iter().map(|&e| num(e)));
        out
    });
    write_atomic(path, &encode(&learning_curve_header(), rows)?)
}

pub fn write_actual_vs_predicted(path: &Path, rows: &[ActualVsPredicted]) -> Result<()> {
    let header: Vec<String> = ACTUAL_VS_PREDICTED_HEADER.iter().map(|s| s.to_string()).collect();
    let rows = rows.iter().map(|r| {
        vec![
            r.shot_index.to_string(),
            r.split.as_str().to_string(),
            r.observable.to_string(),
            num(r.measured),
            num(r.simulation),
            num(r.calibrated),
        ]
    });
    write_atomic(path, &encode(&header, rows)?)
}

struct Table {
    path: std::path::PathBuf,
    records: Vec<(u64, csv::StringRecord)>,
}

fn read_table(path: &Path, expected: &[String]) -> Result<Table> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let csv_err = |line: u64, e: &dyn std::fmt::Display| Error::Csv {
        path: path.to_path_buf(),
        line,
        msg: e.to_string(),
    };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header = rdr.headers().map_err(|e| csv_err(1, &e))?.clone();
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(csv_err(
            1,
            &format!("unexpected header `{}`, expected `{}`", header.iter().collect::<Vec<_>>().join(","), expected.join(",")),
        ));
    }
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            csv_err(line, &e)
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        records.push((line, rec));
    }
    Ok(Table {
        path: path.to_path_buf(),
        records,
    })
}

impl Table {
    fn err(&self, line: u64, msg: impl Into<String>) -> Error {
        Error::Csv {
            path: self.path.clone(),
            line,
            msg: msg.into(),
        }
    }

    fn float(&self, line: u64, rec: &csv::StringRecord, col: usize, name: &str) -> Result<f64> {
        let field = &rec[col];
        let x: f64 = field
            .trim()
            .parse()
            .map_err(|_| self.err(line, format!("column `{name}`: `{field}` is not a number")))?;
        if !x.is_finite() {
            return Err(self.err(line, format!("column `{name}`: non-finite value")));
        }
        Ok(x)
    }

    fn observables(&self, line: u64, rec: &csv::StringRecord, start: usize, prefix: &str) -> Result<ObservableVector> {
        let mut v = [0.0; NUM_OBSERVABLES];
        for (i, slot) in v.iter_mut().enumerate() {
            *slot = self.float(line, rec, start + i, &format!("{prefix}{}", OBSERVABLE_NAMES[i]))?;
        }
        let v = ObservableVector::from_array(v);
        v.validate().map_err(|e| self.err(line, e.to_string()))?;
        Ok(v)
    }
}

pub fn read_sim_database(path: &Path) -> Result<Vec<ObservableVector>> {
    let table = read_table(path, &sim_database_header())?;
    let data = table
        .records
        .iter()
        .map(|(line, rec)| table.observables(*line, rec, 0, ""))
        .collect::<Result<Vec<_>>>()?;
    if data.is_empty() {
        return Err(table.err(1, "no data rows"));
    }
    Ok(data)
}

pub fn read_shots(path: &Path) -> Result<Vec<ShotRecord>> {
    let table = read_table(path, &shots_header())?;
    let mut shots = Vec::with_capacity(table.records.len());
    let mut seen = std::collections::HashSet::new();
    for (line, rec) in &table.records {
        let shot_index: u64 = rec[0]
            .trim()
            .parse()
            .map_err(|_| table.err(*line, format!("shot_index `{}` is not a non-negative integer", &rec[0])))?;
        if !seen.insert(shot_index) {
            return Err(table.err(*line, format!("duplicate shot_index {shot_index}")));
        }
        shots.push(ShotRecord {
            shot_index,
            campaign: rec[1].to_string(),
            sim: table.observables(*line, rec, 2, "sim_")?,
            exp: table.observables(*line, rec, 2 + NUM_OBSERVABLES, "exp_")?,
        });
    }
    if shots.is_empty() {
        return Err(table.err(1, "no data rows"));
    }
    Ok(shots)
}
