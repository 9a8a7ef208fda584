//! Reader for calibration task files: one task per row, columns
//! `y0, u_1..u_H, y_1..y_H`, optional header row.

use std::path::Path;

use csk_core::{Allocation, CalibrationTask};

use crate::{CliResult, Failure};

/// Reads the tasks in `path`. `allocation` receives the row count and returns
/// the allocation whose block count fixes the horizon.
pub fn read_tasks<F>(path: &Path, allocation: F) -> CliResult<(Vec<CalibrationTask<f64>>, Allocation<f64>)>
where
    F: FnOnce(usize) -> CliResult<Allocation<f64>>,
{
    let name = path.display();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Failure::usage(format!("{name}: {e}")))?;

    let mut rows: Vec<(u64, Vec<f64>)> = Vec::new();
    let mut header: Option<(u64, usize)> = None;
    for record in reader.records() {
        let record = record.map_err(|e| Failure::usage(format!("{name}: {e}")))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: Result<Vec<f64>, usize> = record
            .iter()
            .enumerate()
            .map(|(col, field)| field.parse::<f64>().map_err(|_| col))
            .collect();
        match parsed {
            Ok(values) => rows.push((line, values)),
            Err(_) if rows.is_empty() && header.is_none() => header = Some((line, record.len())),
            Err(col) => {
                return Err(Failure::usage(format!(
                    "{name}: line {line}, column {}: cannot parse {:?} as a number",
                    col + 1,
                    &record[col]
                )))
            }
        }
    }
    if rows.is_empty() {
        return Err(Failure::usage(format!("{name}: no calibration rows")));
    }

    let alloc = allocation(rows.len())?;
    let h = alloc.len();
    let expected = 1 + 2 * h;
    let widths = header.into_iter().chain(rows.iter().map(|(line, v)| (*line, v.len())));
    for (line, found) in widths {
        if found != expected {
            return Err(Failure::usage(format!(
                "{name}: line {line}: dimension mismatch, a {h}-block allocation needs {expected} columns \
                 (y0, u_1..u_{h}, y_1..y_{h}), found {found}"
            )));
        }
    }

    let tasks = rows
        .into_iter()
        .map(|(line, v)| {
            CalibrationTask::new(v[0], v[1..=h].to_vec(), v[h + 1..].to_vec())
                .map_err(|e| Failure::usage(format!("{name}: line {line}: {e}")))
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok((tasks, alloc))
}
