//! Dataset file formats, ID mapping, and atomic artifact writing.
//!
//! On-disk IDs are arbitrary strings; internally everything is dense indices.
//! The mapping is the natural order of the IDs — numeric when every ID parses
//! as an unsigned integer, lexicographic otherwise — and is persisted next to
//! the outputs so results can be joined back to the original identifiers.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use csv::StringRecord;
use dbird::{DataError, EngineError, ItemBank, MetricsError, Observation, ResponseDataset, SimError};
use dbird::rasch::RaschError;
use serde::Serialize;
use thiserror::Error;

pub const RESPONSES_FILE: &str = "responses.csv";
pub const ITEMS_FILE: &str = "items.csv";
pub const RESPONSES_HEADER: [&str; 4] = ["student_id", "time", "item_id", "correct"];
pub const ITEMS_HEADER: [&str; 2] = ["item_id", "difficulty"];

/// Errors that reach the user, each mapped to a process exit code:
/// 2 for usage problems, 3 for input/schema problems, 4 for numerical
/// failures inside the sampler.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Schema(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Schema(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn io(context: impl AsRef<str>, err: &std::io::Error) -> Self {
        CliError::Schema(format!("{}: {err}", context.as_ref()))
    }
}

impl From<DataError> for CliError {
    fn from(err: DataError) -> Self {
        CliError::Schema(err.to_string())
    }
}

impl From<EngineError> for CliError {
    fn from(err: EngineError) -> Self {
        match err {
            EngineError::Data(e) => e.into(),
            EngineError::InvalidConfig { .. } => CliError::Usage(err.to_string()),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(err: SimError) -> Self {
        match err {
            SimError::InvalidConfig { .. } => CliError::Usage(err.to_string()),
            SimError::Data(e) => e.into(),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(err: MetricsError) -> Self {
        match err {
            MetricsError::Engine(e) => e.into(),
            MetricsError::Sim(e) => e.into(),
            MetricsError::LevelOutOfRange(_) | MetricsError::NoReplications => {
                CliError::Usage(err.to_string())
            }
            other => CliError::Schema(other.to_string()),
        }
    }
}

impl From<RaschError> for CliError {
    fn from(err: RaschError) -> Self {
        match err {
            RaschError::NoConvergence { .. } => CliError::Numerical(err.to_string()),
            other => CliError::Schema(other.to_string()),
        }
    }
}

/// Dense-index → original-ID tables, persisted as `id_map.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IdMaps {
    pub students: Vec<String>,
    pub items: Vec<String>,
}

/// Natural ordering: numeric when every ID is an unsigned integer (ties on
/// value broken by the string), lexicographic otherwise. Input need not be
/// unique; the result is.
pub fn order_ids(mut ids: Vec<String>) -> Vec<String> {
    ids.sort();
    ids.dedup();
    if ids.iter().all(|s| s.parse::<u64>().is_ok()) {
        ids.sort_by(|a, b| {
            let (na, nb) = (a.parse::<u64>().unwrap(), b.parse::<u64>().unwrap());
            na.cmp(&nb).then_with(|| a.cmp(b))
        });
    }
    ids
}

fn open_csv(path: &Path) -> Result<csv::Reader<fs::File>, CliError> {
    let file = fs::File::open(path)
        .map_err(|e| CliError::io(format!("cannot open {}", path.display()), &e))?;
    Ok(csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(file))
}

fn record_line(record: &StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn check_header(path: &Path, record: &StringRecord, expected: &[&str]) -> Result<(), CliError> {
    let fields: Vec<&str> = record.iter().collect();
    if fields != expected {
        return Err(CliError::Schema(format!(
            "{} line 1: expected header '{}', found '{}'",
            path.display(),
            expected.join(","),
            fields.join(",")
        )));
    }
    Ok(())
}

fn check_width(path: &Path, record: &StringRecord, expected: usize) -> Result<(), CliError> {
    if record.len() != expected {
        return Err(CliError::Schema(format!(
            "{} line {}: expected {} fields, found {}",
            path.display(),
            record_line(record),
            expected,
            record.len()
        )));
    }
    Ok(())
}

/// How the `time` column is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeEncoding {
    /// Non-negative integer week/session indices.
    Index,
    /// ISO dates (YYYY-MM-DD), binned into weeks from the earliest date.
    IsoWeekBinned,
}

struct RawResponse {
    line: u64,
    student: String,
    time: String,
    item: String,
    correct: u8,
}

/// Reads `responses.csv` + `items.csv` from a directory into a validated
/// dataset plus the ID mapping. Schema problems carry file and line numbers.
pub fn read_dataset(
    dir: &Path,
    time_encoding: TimeEncoding,
) -> Result<(ResponseDataset, IdMaps), CliError> {
    let items_path = dir.join(ITEMS_FILE);
    let mut item_ids = Vec::new();
    let mut item_difficulties = HashMap::new();
    {
        let mut reader = open_csv(&items_path)?;
        let mut records = reader.records();
        let header = records.next().transpose().map_err(csv_error(&items_path))?.ok_or_else(
            || CliError::Schema(format!("{}: file is empty", items_path.display())),
        )?;
        check_header(&items_path, &header, &ITEMS_HEADER)?;
        for record in records {
            let record = record.map_err(csv_error(&items_path))?;
            check_width(&items_path, &record, 2)?;
            let line = record_line(&record);
            let id = record[0].to_string();
            let difficulty: f64 = record[1].parse().map_err(|_| {
                CliError::Schema(format!(
                    "{} line {line}: difficulty '{}' is not a number",
                    items_path.display(),
                    &record[1]
                ))
            })?;
            if item_difficulties.insert(id.clone(), difficulty).is_some() {
                return Err(CliError::Schema(format!(
                    "{} line {line}: duplicate item_id '{id}'",
                    items_path.display()
                )));
            }
            item_ids.push(id);
        }
    }
    if item_ids.is_empty() {
        return Err(CliError::Schema(format!("{}: no items", items_path.display())));
    }

    let responses_path = dir.join(RESPONSES_FILE);
    let mut raw = Vec::new();
    {
        let mut reader = open_csv(&responses_path)?;
        let mut records = reader.records();
        let header = records.next().transpose().map_err(csv_error(&responses_path))?.ok_or_else(
            || CliError::Schema(format!("{}: file is empty", responses_path.display())),
        )?;
        check_header(&responses_path, &header, &RESPONSES_HEADER)?;
        for record in records {
            let record = record.map_err(csv_error(&responses_path))?;
            check_width(&responses_path, &record, 4)?;
            let line = record_line(&record);
            let correct: u8 = match &record[3] {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(CliError::Schema(format!(
                        "{} line {line}: correct must be 0 or 1, found '{other}'",
                        responses_path.display()
                    )))
                }
            };
            raw.push(RawResponse {
                line,
                student: record[0].to_string(),
                time: record[1].to_string(),
                item: record[2].to_string(),
                correct,
            });
        }
    }
    if raw.is_empty() {
        return Err(CliError::Schema(format!("{}: no responses", responses_path.display())));
    }

    // Resolve the time column to dense indices.
    let times: Vec<usize> = match time_encoding {
        TimeEncoding::Index => raw
            .iter()
            .map(|r| {
                r.time.parse::<usize>().map_err(|_| {
                    CliError::Schema(format!(
                        "{} line {}: time '{}' is not a non-negative integer \
                         (use --bin-weeks for ISO dates)",
                        responses_path.display(),
                        r.line,
                        r.time
                    ))
                })
            })
            .collect::<Result<_, _>>()?,
        TimeEncoding::IsoWeekBinned => {
            let dates: Vec<NaiveDate> = raw
                .iter()
                .map(|r| {
                    NaiveDate::parse_from_str(&r.time, "%Y-%m-%d").map_err(|_| {
                        CliError::Schema(format!(
                            "{} line {}: time '{}' is not an ISO date (YYYY-MM-DD)",
                            responses_path.display(),
                            r.line,
                            r.time
                        ))
                    })
                })
                .collect::<Result<_, _>>()?;
            let earliest = *dates.iter().min().expect("non-empty responses");
            dates.iter().map(|d| ((*d - earliest).num_days() / 7) as usize).collect()
        }
    };

    let students = order_ids(raw.iter().map(|r| r.student.clone()).collect());
    let items = order_ids(item_ids);
    let student_index: HashMap<&str, usize> =
        students.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let item_index: HashMap<&str, usize> =
        items.iter().enumerate().map(|(j, s)| (s.as_str(), j)).collect();

    let difficulties: Vec<f64> = items.iter().map(|id| item_difficulties[id]).collect();
    let bank = ItemBank::new(difficulties).map_err(|e| {
        CliError::Schema(format!("{}: {e}", items_path.display()))
    })?;

    let mut seen: HashMap<(usize, usize, usize), u64> = HashMap::new();
    let mut observations = Vec::with_capacity(raw.len());
    let mut n_times = 0usize;
    for (r, time) in raw.iter().zip(times) {
        let student = student_index[r.student.as_str()];
        let item = *item_index.get(r.item.as_str()).ok_or_else(|| {
            CliError::Schema(format!(
                "{} line {}: item_id '{}' does not appear in {}",
                responses_path.display(),
                r.line,
                r.item,
                items_path.display()
            ))
        })?;
        if let Some(first) = seen.insert((student, time, item), r.line) {
            return Err(CliError::Schema(format!(
                "{} line {}: duplicate response for student '{}', time {}, item '{}' \
                 (first seen at line {first})",
                responses_path.display(),
                r.line,
                r.student,
                time,
                r.item
            )));
        }
        n_times = n_times.max(time + 1);
        observations.push(Observation::new(student, time, item, r.correct));
    }

    let dataset = ResponseDataset::new(students.len(), n_times, observations, bank)
        .map_err(|e| CliError::Schema(format!("{}: {e}", responses_path.display())))?;
    Ok((dataset, IdMaps { students, items }))
}

fn csv_error(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Schema(format!("{}: {e}", path.display()))
}

/// Writes `responses.csv` and `items.csv` for a dataset, using the given ID
/// tables (dense index → string).
pub fn write_dataset(dir: &Path, data: &ResponseDataset, ids: &IdMaps) -> Result<(), CliError> {
    let mut responses = String::from("student_id,time,item_id,correct\n");
    for obs in data.observations() {
        responses.push_str(&format!(
            "{},{},{},{}\n",
            ids.students[obs.student], obs.time, ids.items[obs.item], obs.correct
        ));
    }
    atomic_write(&dir.join(RESPONSES_FILE), responses.as_bytes())?;

    let mut items = String::from("item_id,difficulty\n");
    for (j, d) in data.item_bank().difficulties().iter().enumerate() {
        items.push_str(&format!("{},{}\n", ids.items[j], d));
    }
    atomic_write(&dir.join(ITEMS_FILE), items.as_bytes())
}

/// Identity ID tables ("0", "1", …) for simulator output.
pub fn dense_ids(n_students: usize, n_items: usize) -> IdMaps {
    IdMaps {
        students: (0..n_students).map(|i| i.to_string()).collect(),
        items: (0..n_items).map(|j| j.to_string()).collect(),
    }
}

/// Writes bytes to `path` atomically: temp file in the same directory, then
/// rename. Partially written artifacts never appear under the final name.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)
        .map_err(|e| CliError::io(format!("cannot create {}", dir.display()), &e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| CliError::io(format!("cannot create temp file in {}", dir.display()), &e))?;
    tmp.write_all(bytes)
        .map_err(|e| CliError::io(format!("cannot write {}", path.display()), &e))?;
    tmp.persist(path)
        .map_err(|e| CliError::io(format!("cannot rename into {}", path.display()), &e.error))?;
    Ok(())
}
