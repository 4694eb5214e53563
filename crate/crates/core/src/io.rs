//! Plain-text field checkpoints.
//!
//! ```text
//! # grid dim=1 cells=2048 origin=-3 spacing=0.0029296875 time=0.5
//! 0,0,0
//! 1,0,1.5e-12
//! ```
//!
//! One row per cell: the cell's multi-index (one column per axis) followed by one
//! column per species. Numbers use Rust's shortest round-trip formatting, so a
//! written state reads back bit-for-bit.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use thiserror::Error;

use crate::grid::{Grid, GridError};
use crate::state::{SpeciesState, StateError};

#[derive(Debug, Error)]
pub enum FieldIoError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    State(#[from] StateError),
}

fn join(values: &[impl std::fmt::Display]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

pub fn header_line(grid: &Grid, time: f64) -> String {
    format!(
        "# grid dim={} cells={} origin={} spacing={} time={}",
        grid.dim(),
        join(grid.cells()),
        join(grid.origin()),
        join(grid.spacing()),
        time
    )
}

pub fn write_state<W: Write>(state: &SpeciesState, mut out: W) -> Result<(), FieldIoError> {
    let grid = state.grid();
    writeln!(out, "{}", header_line(grid, state.time()))?;
    let mut line = String::new();
    for c in 0..grid.len() {
        line.clear();
        let mi = grid.multi_index(c);
        for v in &mi[..grid.dim()] {
            let _ = write!(line, "{v},");
        }
        for (s, f) in state.fields().iter().enumerate() {
            if s > 0 {
                line.push(',');
            }
            let _ = write!(line, "{}", f[c]);
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn to_csv_string(state: &SpeciesState) -> String {
    let mut buf = Vec::new();
    write_state(state, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("ascii output")
}

fn parse_list<T: std::str::FromStr>(s: &str, line: usize) -> Result<Vec<T>, FieldIoError> {
    s.split(',')
        .map(|p| {
            p.trim().parse::<T>().map_err(|_| FieldIoError::Parse { line, message: format!("cannot parse `{p}`") })
        })
        .collect()
}

pub fn read_state<R: BufRead>(input: R) -> Result<SpeciesState, FieldIoError> {
    let mut lines = input.lines();
    let header = lines.next().ok_or(FieldIoError::Parse { line: 1, message: "empty input".into() })??;
    let rest = header
        .strip_prefix("# grid")
        .ok_or(FieldIoError::Parse { line: 1, message: "missing `# grid` header".into() })?;
    let (mut dim, mut cells, mut origin, mut spacing, mut time) = (None, None, None, None, None);
    for token in rest.split_whitespace() {
        let (key, value) = token
            .split_once('=')
            .ok_or(FieldIoError::Parse { line: 1, message: format!("malformed header token `{token}`") })?;
        match key {
            "dim" => dim = Some(parse_list::<usize>(value, 1)?[0]),
            "cells" => cells = Some(parse_list::<usize>(value, 1)?),
            "origin" => origin = Some(parse_list::<f64>(value, 1)?),
            "spacing" => spacing = Some(parse_list::<f64>(value, 1)?),
            "time" => time = Some(parse_list::<f64>(value, 1)?[0]),
            _ => return Err(FieldIoError::Parse { line: 1, message: format!("unknown header key `{key}`") }),
        }
    }
    let missing = |k: &str| FieldIoError::Parse { line: 1, message: format!("header lacks `{k}`") };
    let dim = dim.ok_or_else(|| missing("dim"))?;
    let grid = Grid::new(
        &cells.ok_or_else(|| missing("cells"))?,
        &origin.ok_or_else(|| missing("origin"))?,
        &spacing.ok_or_else(|| missing("spacing"))?,
    )?;
    if grid.dim() != dim {
        return Err(FieldIoError::Parse { line: 1, message: "dim disagrees with cells".into() });
    }
    let time = time.ok_or_else(|| missing("time"))?;

    let mut fields: Vec<Vec<f64>> = Vec::new();
    let mut seen = 0usize;
    for (n, row) in lines.enumerate() {
        let line_no = n + 2;
        let row = row?;
        if row.trim().is_empty() {
            continue;
        }
        let cols = parse_list::<f64>(&row, line_no)?;
        if cols.len() <= dim {
            return Err(FieldIoError::Parse { line: line_no, message: "row has no species columns".into() });
        }
        let k = cols.len() - dim;
        if fields.is_empty() {
            fields = vec![vec![0.0; grid.len()]; k];
        } else if k != fields.len() {
            return Err(FieldIoError::Parse { line: line_no, message: "inconsistent species count".into() });
        }
        let mut mi = [0usize; 2];
        for a in 0..dim {
            let v = cols[a];
            if v < 0.0 || v.fract() != 0.0 || v as usize >= grid.cells()[a] {
                return Err(FieldIoError::Parse { line: line_no, message: format!("bad cell index {v}") });
            }
            mi[a] = v as usize;
        }
        let c = grid.flat_index(mi);
        for s in 0..k {
            fields[s][c] = cols[dim + s];
        }
        seen += 1;
    }
    if seen != grid.len() {
        return Err(FieldIoError::Parse {
            line: seen + 1,
            message: format!("expected {} rows, found {seen}", grid.len()),
        });
    }
    Ok(SpeciesState::new(grid, fields, time)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_format() {
        let g = Grid::from_bounds(&[4, 5], &[-1.0, 0.0], &[1.0, 2.5]).unwrap();
        assert_eq!(header_line(&g, 0.25), "# grid dim=2 cells=4,5 origin=-1,0 spacing=0.5,0.5 time=0.25");
    }

    #[test]
    fn rejects_truncated_file() {
        let text = "# grid dim=1 cells=4 origin=0 spacing=1 time=0\n0,1\n1,2\n";
        assert!(matches!(read_state(text.as_bytes()), Err(FieldIoError::Parse { .. })));
    }

    proptest! {
        #[test]
        fn round_trip_is_exact(
            n0 in 4usize..9, n1 in 4usize..7, two_d in any::<bool>(),
            k in 1usize..4, seed in prop::collection::vec(0.0f64..1e3, 64),
            time in 0.0f64..10.0,
        ) {
            let grid = if two_d {
                Grid::new(&[n0, n1], &[-1.5, 0.25], &[0.1, 0.3]).unwrap()
            } else {
                Grid::new(&[n0], &[-1.5], &[0.1]).unwrap()
            };
            let fields: Vec<Vec<f64>> = (0..k)
                .map(|s| (0..grid.len()).map(|c| seed[(c * 7 + s * 13) % seed.len()] / (s + 1) as f64).collect())
                .collect();
            let state = SpeciesState::new(grid, fields, time).unwrap();
            let text = to_csv_string(&state);
            let back = read_state(text.as_bytes()).unwrap();
            prop_assert_eq!(back, state);
        }
    }
}
