//! Plain-text tabular formats: counting and diffusive records, filter
//! runs, time series, and density snapshots.
//!
//! Every writer emits 17-significant-digit scientific notation so floats
//! round-trip bit-exactly across platforms. Record files carry one
//! leading `#` metadata line (seed, trajectory, grid) ahead of the
//! `step,t,dY` header so the readers recover the full value.

use crate::algebra::GradedOperator;
use crate::classical::{ContinuousRecord, GridDensity};
use crate::dynamics::expectation;
use crate::error::{Error, Result};
use crate::stochastics::{FilterRun, MeasurementRecord};
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

/// Fixed-precision decimal rendering: 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| Error::Parse(format!("bad float {s:?}: {e}")))
}

fn parse_u64(s: &str) -> Result<u64> {
    s.trim()
        .parse::<u64>()
        .map_err(|e| Error::Parse(format!("bad integer {s:?}: {e}")))
}

/// A parsed tabular file: leading metadata, header names, columns.
#[derive(Debug, Clone)]
pub struct Table {
    pub meta: BTreeMap<String, String>,
    pub header: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        let idx = self
            .header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse(format!("missing column {name:?}")))?;
        Ok(&self.columns[idx])
    }
}

/// Reads any of the toolkit's tabular formats into columns of floats.
pub fn read_table(reader: impl Read) -> Result<Table> {
    let reader = BufReader::new(reader);
    let mut meta = BTreeMap::new();
    let mut header: Option<Vec<String>> = None;
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            for pair in rest.split_whitespace() {
                if let Some((k, v)) = pair.split_once('=') {
                    meta.insert(k.to_string(), v.to_string());
                }
            }
            continue;
        }
        match &header {
            None => {
                let names: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
                columns = vec![Vec::new(); names.len()];
                header = Some(names);
            }
            Some(names) => {
                let fields: Vec<&str> = line.split(',').collect();
                if fields.len() != names.len() {
                    return Err(Error::Parse(format!(
                        "row has {} fields, header has {}",
                        fields.len(),
                        names.len()
                    )));
                }
                for (col, field) in columns.iter_mut().zip(fields) {
                    col.push(parse_f64(field)?);
                }
            }
        }
    }
    let header = header.ok_or_else(|| Error::Parse("file carries no header row".into()))?;
    Ok(Table {
        meta,
        header,
        columns,
    })
}

pub fn read_table_path(path: impl AsRef<Path>) -> Result<Table> {
    read_table(std::fs::File::open(path)?)
}

/// Writes a counting record as `step,t,dY` with a metadata line.
pub fn write_record(mut w: impl Write, record: &MeasurementRecord) -> Result<()> {
    writeln!(
        w,
        "# kind=counting seed={} trajectory_id={} t0={} dt={}",
        record.seed(),
        record.trajectory_id(),
        fmt_f64(record.t0()),
        fmt_f64(record.dt()),
    )?;
    writeln!(w, "step,t,dY")?;
    for (i, &dy) in record.increments().iter().enumerate() {
        writeln!(
            w,
            "{},{},{}",
            i,
            fmt_f64(record.t0() + i as f64 * record.dt()),
            dy
        )?;
    }
    Ok(())
}

pub fn write_record_path(path: impl AsRef<Path>, record: &MeasurementRecord) -> Result<()> {
    write_record(std::fs::File::create(path)?, record)
}

/// Reads a counting record. The metadata line is authoritative for the
/// grid and provenance; without it the grid is inferred from the `t`
/// column (two rows minimum) and provenance defaults to zero.
pub fn read_record(reader: impl Read) -> Result<MeasurementRecord> {
    let table = read_table(reader)?;
    let t = table.column("t")?;
    let dy_col = table.column("dY")?;
    let mut increments = Vec::with_capacity(dy_col.len());
    for &v in dy_col {
        if v == 0.0 {
            increments.push(0);
        } else if v == 1.0 {
            increments.push(1);
        } else {
            return Err(Error::Parse(format!("counting increment {v} is not 0/1")));
        }
    }
    let (t0, dt) = grid_from_meta(&table, t)?;
    let seed = table.meta.get("seed").map_or(Ok(0), |s| parse_u64(s))?;
    let trajectory_id = table
        .meta
        .get("trajectory_id")
        .map_or(Ok(0), |s| parse_u64(s))?;
    MeasurementRecord::new(t0, dt, increments, seed, trajectory_id)
}

pub fn read_record_path(path: impl AsRef<Path>) -> Result<MeasurementRecord> {
    read_record(std::fs::File::open(path)?)
}

fn grid_from_meta(table: &Table, t: &[f64]) -> Result<(f64, f64)> {
    match (table.meta.get("t0"), table.meta.get("dt")) {
        (Some(t0), Some(dt)) => Ok((parse_f64(t0)?, parse_f64(dt)?)),
        _ => {
            if t.len() < 2 {
                return Err(Error::GridMismatch(
                    "cannot infer the grid from a single row without metadata".into(),
                ));
            }
            Ok((t[0], t[1] - t[0]))
        }
    }
}

/// Writes a real-valued (diffusive) record in the same layout.
pub fn write_continuous_record(mut w: impl Write, record: &ContinuousRecord) -> Result<()> {
    writeln!(
        w,
        "# kind=diffusive seed={} trajectory_id={} t0={} dt={}",
        record.seed(),
        record.trajectory_id(),
        fmt_f64(record.t0()),
        fmt_f64(record.dt()),
    )?;
    writeln!(w, "step,t,dY")?;
    for (i, &dy) in record.values().iter().enumerate() {
        writeln!(
            w,
            "{},{},{}",
            i,
            fmt_f64(record.t0() + i as f64 * record.dt()),
            fmt_f64(dy)
        )?;
    }
    Ok(())
}

pub fn write_continuous_record_path(
    path: impl AsRef<Path>,
    record: &ContinuousRecord,
) -> Result<()> {
    write_continuous_record(std::fs::File::create(path)?, record)
}

pub fn read_continuous_record(reader: impl Read) -> Result<ContinuousRecord> {
    let table = read_table(reader)?;
    let t = table.column("t")?;
    let values = table.column("dY")?.to_vec();
    let (t0, dt) = grid_from_meta(&table, t)?;
    let seed = table.meta.get("seed").map_or(Ok(0), |s| parse_u64(s))?;
    let trajectory_id = table
        .meta
        .get("trajectory_id")
        .map_or(Ok(0), |s| parse_u64(s))?;
    ContinuousRecord::new(t0, dt, values, seed, trajectory_id)
}

pub fn read_continuous_record_path(path: impl AsRef<Path>) -> Result<ContinuousRecord> {
    read_continuous_record(std::fs::File::open(path)?)
}

/// Writes `t,<column>...` rows; all series must share the time grid.
pub fn write_timeseries(
    mut w: impl Write,
    times: &[f64],
    columns: &[(String, Vec<f64>)],
) -> Result<()> {
    for (name, series) in columns {
        if series.len() != times.len() {
            return Err(Error::DimensionMismatch {
                context: "timeseries column vs time grid",
                left: series.len(),
                right: times.len(),
            });
        }
        if name.contains(',') {
            return Err(Error::InvalidInput(format!(
                "column name {name:?} contains a comma"
            )));
        }
    }
    let names: Vec<&str> = columns.iter().map(|(n, _)| n.as_str()).collect();
    writeln!(w, "t,{}", names.join(","))?;
    for (i, &t) in times.iter().enumerate() {
        let mut row = fmt_f64(t);
        for (_, series) in columns {
            row.push(',');
            row.push_str(&fmt_f64(series[i]));
        }
        writeln!(w, "{row}")?;
    }
    Ok(())
}

pub fn write_timeseries_path(
    path: impl AsRef<Path>,
    times: &[f64],
    columns: &[(String, Vec<f64>)],
) -> Result<()> {
    write_timeseries(std::fs::File::create(path)?, times, columns)
}

/// Expectation columns over a state series for a set of named operators:
/// Hermitian operators contribute one real column, others a `_re`/`_im`
/// pair.
pub fn expectation_columns(
    states: &[crate::dynamics::ConditionalState],
    observables: &[(String, GradedOperator)],
) -> Result<Vec<(String, Vec<f64>)>> {
    let mut out = Vec::new();
    for (name, op) in observables {
        let series: Vec<crate::linalg::C64> = states
            .iter()
            .map(|s| expectation(s, op))
            .collect::<Result<_>>()?;
        if op.is_hermitian(1e-12) {
            out.push((name.clone(), series.iter().map(|z| z.re).collect()));
        } else {
            out.push((
                format!("{name}_re"),
                series.iter().map(|z| z.re).collect(),
            ));
            out.push((
                format!("{name}_im"),
                series.iter().map(|z| z.im).collect(),
            ));
        }
    }
    Ok(out)
}

/// [`expectation_columns`] over the states of a filter run.
pub fn observable_columns(
    run: &FilterRun,
    observables: &[(String, GradedOperator)],
) -> Result<Vec<(String, Vec<f64>)>> {
    expectation_columns(run.states(), observables)
}

/// Writes the per-step filter telemetry
/// `step,t,intensity,dW,<observable columns>`.
///
/// Row i describes step i: pre-step intensity, that step's innovation,
/// and the observables of the post-step state at its end time.
pub fn write_filter_run(
    mut w: impl Write,
    run: &FilterRun,
    observables: &[(String, GradedOperator)],
) -> Result<()> {
    let obs = observable_columns(run, observables)?;
    let names: Vec<&str> = obs.iter().map(|(n, _)| n.as_str()).collect();
    if names.is_empty() {
        writeln!(w, "step,t,intensity,dW")?;
    } else {
        writeln!(w, "step,t,intensity,dW,{}", names.join(","))?;
    }
    let times = run.times();
    for i in 0..run.intensities().len() {
        let mut row = format!(
            "{},{},{},{}",
            i,
            fmt_f64(times[i + 1]),
            fmt_f64(run.intensities()[i]),
            fmt_f64(run.innovations()[i]),
        );
        for (_, col) in &obs {
            row.push(',');
            row.push_str(&fmt_f64(col[i + 1]));
        }
        writeln!(w, "{row}")?;
    }
    Ok(())
}

pub fn write_filter_run_path(
    path: impl AsRef<Path>,
    run: &FilterRun,
    observables: &[(String, GradedOperator)],
) -> Result<()> {
    write_filter_run(std::fs::File::create(path)?, run, observables)
}

/// Writes a density snapshot as `x,value` rows.
pub fn write_density(mut w: impl Write, density: &GridDensity) -> Result<()> {
    let grid = density.grid();
    writeln!(
        w,
        "# x_min={} x_max={} nx={}",
        fmt_f64(grid.x_min),
        fmt_f64(grid.x_max),
        grid.nx
    )?;
    writeln!(w, "x,value")?;
    for (i, &v) in density.values().iter().enumerate() {
        writeln!(w, "{},{}", fmt_f64(grid.point(i)), fmt_f64(v))?;
    }
    Ok(())
}

pub fn write_density_path(path: impl AsRef<Path>, density: &GridDensity) -> Result<()> {
    write_density(std::fs::File::create(path)?, density)
}

pub fn read_density(reader: impl Read) -> Result<GridDensity> {
    let table = read_table(reader)?;
    let xs = table.column("x")?;
    let values = table.column("value")?.to_vec();
    if xs.len() < 3 {
        return Err(Error::Parse("density needs at least 3 grid points".into()));
    }
    let grid = crate::classical::GridSpec::new(xs[0], xs[xs.len() - 1], xs.len())?;
    GridDensity::new(grid, values)
}

pub fn read_density_path(path: impl AsRef<Path>) -> Result<GridDensity> {
    read_density(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::GridSpec;

    #[test]
    fn float_formatting_round_trips_exactly() {
        for x in [
            0.1,
            1.0 / 3.0,
            -2.731e-13,
            6.02214076e23,
            f64::MIN_POSITIVE,
            0.0,
        ] {
            let s = fmt_f64(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(x.to_bits(), back.to_bits(), "{x} -> {s}");
        }
    }

    #[test]
    fn record_round_trip_is_lossless() {
        let record = MeasurementRecord::new(0.25, 1e-4, vec![0, 1, 0, 0, 1], 42, 7).unwrap();
        let mut buf = Vec::new();
        write_record(&mut buf, &record).unwrap();
        let back = read_record(&buf[..]).unwrap();
        assert_eq!(record, back);
    }

    #[test]
    fn record_reader_accepts_header_only_files() {
        let text = "step,t,dY\n0,0.0,0\n1,0.001,1\n";
        let back = read_record(text.as_bytes()).unwrap();
        assert_eq!(back.increments(), &[0, 1]);
        assert!((back.dt() - 0.001).abs() < 1e-15);
        assert_eq!(back.seed(), 0);
    }

    #[test]
    fn continuous_record_round_trip() {
        let record =
            ContinuousRecord::new(0.0, 1e-3, vec![0.1, -0.2, 0.05], 9, 2).unwrap();
        let mut buf = Vec::new();
        write_continuous_record(&mut buf, &record).unwrap();
        let back = read_continuous_record(&buf[..]).unwrap();
        assert_eq!(record, back);
    }

    #[test]
    fn timeseries_round_trip() {
        let times = vec![0.0, 0.1, 0.2];
        let cols = vec![
            ("n".to_string(), vec![1.0, 0.5, 0.25]),
            ("w".to_string(), vec![0.0, -0.1, 0.3]),
        ];
        let mut buf = Vec::new();
        write_timeseries(&mut buf, &times, &cols).unwrap();
        let table = read_table(&buf[..]).unwrap();
        assert_eq!(table.header, vec!["t", "n", "w"]);
        assert_eq!(table.column("n").unwrap(), &[1.0, 0.5, 0.25]);
        assert_eq!(table.column("t").unwrap(), &times[..]);
    }

    #[test]
    fn density_round_trip() {
        let grid = GridSpec::new(-2.0, 2.0, 41).unwrap();
        let d = GridDensity::gaussian(grid, 0.3, 0.5).unwrap();
        let mut buf = Vec::new();
        write_density(&mut buf, &d).unwrap();
        let back = read_density(&buf[..]).unwrap();
        assert_eq!(d.grid(), back.grid());
        for (a, b) in d.values().iter().zip(back.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
