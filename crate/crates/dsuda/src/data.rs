//! Trial records and the dataset CSV schema.
//!
//! Schema: `subject_id,domain,side,label,duration_ms,s0,s1,...` with
//! `domain` in {source,target}, `side` in {0,1}, `label` in {0,1} or empty
//! for unlabeled trials. Processed sets add a `segment_index` column after
//! `duration_ms`. UTF-8, comma-separated, `.` decimal point.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Which dataset a trial belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Domain {
    Source,
    Target,
}

impl Domain {
    pub fn name(self) -> &'static str {
        match self {
            Domain::Source => "source",
            Domain::Target => "target",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "source" => Ok(Domain::Source),
            "target" => Ok(Domain::Target),
            other => Err(Error::Data(format!("domain must be source or target, got `{other}`"))),
        }
    }
}

/// Which ear the trial was recorded from. Left encodes as 0, right as 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn as_bit(self) -> u8 {
        match self {
            Side::Left => 0,
            Side::Right => 1,
        }
    }

    pub fn from_bit(bit: u8) -> Result<Self> {
        match bit {
            0 => Ok(Side::Left),
            1 => Ok(Side::Right),
            other => Err(Error::Data(format!("side must be 0 or 1, got {other}"))),
        }
    }
}

/// Diagnostic class. Control encodes as 0, the positive class as 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClassLabel {
    Control,
    Tinnitus,
}

impl ClassLabel {
    pub fn as_bit(self) -> u8 {
        match self {
            ClassLabel::Control => 0,
            ClassLabel::Tinnitus => 1,
        }
    }

    pub fn as_f64(self) -> f64 {
        self.as_bit() as f64
    }

    pub fn from_bit(bit: u8) -> Result<Self> {
        match bit {
            0 => Ok(ClassLabel::Control),
            1 => Ok(ClassLabel::Tinnitus),
            other => Err(Error::Data(format!("label must be 0 or 1, got {other}"))),
        }
    }
}

/// One recorded trial as it arrives from a dataset.
#[derive(Debug, Clone)]
pub struct RawTrial {
    pub subject_id: String,
    pub domain: Domain,
    pub side: Side,
    /// Required for source trials; optional for target trials, where it is
    /// retained for evaluation only.
    pub label: Option<ClassLabel>,
    pub duration_ms: f64,
    pub samples: Vec<f64>,
}

impl RawTrial {
    pub fn validate(&self) -> Result<()> {
        if self.samples.len() < 2 {
            return Err(Error::Data(format!(
                "trial {} has {} samples, need at least 2",
                self.subject_id,
                self.samples.len()
            )));
        }
        if !(self.duration_ms > 0.0) {
            return Err(Error::Data(format!(
                "trial {} has non-positive duration {}",
                self.subject_id, self.duration_ms
            )));
        }
        if self.domain == Domain::Source && self.label.is_none() {
            return Err(Error::Data(format!(
                "source trial {} is unlabeled",
                self.subject_id
            )));
        }
        if let Some(bad) = self.samples.iter().find(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "trial {} contains a non-finite sample {bad}",
                self.subject_id
            )));
        }
        Ok(())
    }
}

/// A trial after alignment: fixed length, values in [0,1].
#[derive(Debug, Clone)]
pub struct ProcessedTrial {
    pub subject_id: String,
    pub domain: Domain,
    pub side: Side,
    pub label: Option<ClassLabel>,
    pub duration_ms: f64,
    /// Index of the sliding-window segment within the origin trial
    /// (always 0 for target trials, which are never segmented).
    pub segment_index: usize,
    /// Index of the origin trial in its input set.
    pub origin: usize,
    /// Constant input flagged by min-max normalization (output all zeros).
    pub degenerate: bool,
    pub samples: Vec<f64>,
}

fn parse_field<T: std::str::FromStr>(field: &str, what: &str, row: usize) -> Result<T> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::Data(format!("row {row}: cannot parse {what} from `{field}`")))
}

fn trial_from_record(record: &csv::StringRecord, row: usize, processed: bool) -> Result<(RawTrial, usize)> {
    let fixed = if processed { 6 } else { 5 };
    if record.len() < fixed + 2 {
        return Err(Error::Data(format!(
            "row {row}: expected at least {} columns, found {}",
            fixed + 2,
            record.len()
        )));
    }
    let subject_id = record[0].trim().to_string();
    let domain = Domain::parse(record[1].trim())
        .map_err(|e| Error::Data(format!("row {row}: {e}")))?;
    let side = Side::from_bit(parse_field::<u8>(&record[2], "side", row)?)
        .map_err(|e| Error::Data(format!("row {row}: {e}")))?;
    let label_field = record[3].trim();
    let label = if label_field.is_empty() {
        None
    } else {
        Some(
            ClassLabel::from_bit(parse_field::<u8>(label_field, "label", row)?)
                .map_err(|e| Error::Data(format!("row {row}: {e}")))?,
        )
    };
    let duration_ms: f64 = parse_field(&record[4], "duration_ms", row)?;
    let segment_index: usize = if processed {
        parse_field(&record[5], "segment_index", row)?
    } else {
        0
    };
    let samples: Vec<f64> = record
        .iter()
        .skip(fixed)
        .map(|f| parse_field::<f64>(f, "sample", row))
        .collect::<Result<_>>()?;
    Ok((
        RawTrial { subject_id, domain, side, label, duration_ms, samples },
        segment_index,
    ))
}

/// Read raw trials from a dataset CSV. Every trial is validated.
pub fn read_raw_csv(path: &Path) -> Result<Vec<RawTrial>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    let mut trials = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 2; // 1-based, after the header
        let (trial, _) = trial_from_record(&record, row, false)?;
        trial.validate().map_err(|e| Error::Data(format!("row {row}: {e}")))?;
        trials.push(trial);
    }
    Ok(trials)
}

/// Read processed trials (schema with `segment_index`).
pub fn read_processed_csv(path: &Path) -> Result<Vec<ProcessedTrial>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    let mut trials = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 2;
        let (raw, segment_index) = trial_from_record(&record, row, true)?;
        for v in &raw.samples {
            if !(0.0..=1.0).contains(v) {
                return Err(Error::Data(format!(
                    "row {row}: processed sample {v} outside [0,1]"
                )));
            }
        }
        trials.push(ProcessedTrial {
            subject_id: raw.subject_id,
            domain: raw.domain,
            side: raw.side,
            label: raw.label,
            duration_ms: raw.duration_ms,
            segment_index,
            origin: i,
            degenerate: raw.samples.iter().all(|&v| v == 0.0),
            samples: raw.samples,
        });
    }
    Ok(trials)
}

fn format_sample(v: f64) -> String {
    // 17 significant digits: enough for exact f64 round-trips.
    format!("{v:.16e}")
}

fn csv_header(n_samples: usize, processed: bool) -> Vec<String> {
    let mut header = vec![
        "subject_id".to_string(),
        "domain".to_string(),
        "side".to_string(),
        "label".to_string(),
        "duration_ms".to_string(),
    ];
    if processed {
        header.push("segment_index".to_string());
    }
    header.extend((0..n_samples).map(|i| format!("s{i}")));
    header
}

/// Write raw trials to a dataset CSV (atomic: temp file + rename).
pub fn write_raw_csv(path: &Path, trials: &[RawTrial]) -> Result<()> {
    let n = trials.first().map_or(0, |t| t.samples.len());
    write_atomic(path, |out| {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(csv_header(n, false))?;
        for t in trials {
            let mut record = vec![
                t.subject_id.clone(),
                t.domain.name().to_string(),
                t.side.as_bit().to_string(),
                t.label.map_or(String::new(), |l| l.as_bit().to_string()),
                format!("{}", t.duration_ms),
            ];
            record.extend(t.samples.iter().map(|&v| format_sample(v)));
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| Error::Data(format!("csv flush failed: {e}")))?;
        Ok(())
    })
}

/// Write processed trials (atomic: temp file + rename).
pub fn write_processed_csv(path: &Path, trials: &[ProcessedTrial]) -> Result<()> {
    let n = trials.first().map_or(0, |t| t.samples.len());
    write_atomic(path, |out| {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(csv_header(n, true))?;
        for t in trials {
            let mut record = vec![
                t.subject_id.clone(),
                t.domain.name().to_string(),
                t.side.as_bit().to_string(),
                t.label.map_or(String::new(), |l| l.as_bit().to_string()),
                format!("{}", t.duration_ms),
                t.segment_index.to_string(),
            ];
            record.extend(t.samples.iter().map(|&v| format_sample(v)));
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| Error::Data(format!("csv flush failed: {e}")))?;
        Ok(())
    })
}

/// Write a file atomically: build the content in `<path>.tmp`, then rename.
/// A failed write leaves no partial file behind.
pub fn write_atomic(
    path: &Path,
    write: impl FnOnce(&mut Vec<u8>) -> Result<()>,
) -> Result<()> {
    let mut buffer = Vec::new();
    write(&mut buffer)?;
    let tmp = tmp_path(path);
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() && !parent.exists() {
            return Err(Error::io(
                path,
                std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    format!("directory {} does not exist", parent.display()),
                ),
            ));
        }
    }
    let mut file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    file.write_all(&buffer).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(&tmp, e)
    })?;
    file.sync_all().ok();
    drop(file);
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    path.with_file_name(name)
}
