//! Line-oriented `user service time value` records.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::FactorModel;
use crate::tensor::{Dims, Entry, SparseTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Delimiter {
    /// Any run of spaces or tabs.
    #[default]
    Whitespace,
    Comma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum IndexBase {
    #[default]
    Zero,
    One,
}

impl IndexBase {
    pub fn offset(self) -> usize {
        match self {
            IndexBase::Zero => 0,
            IndexBase::One => 1,
        }
    }
}

/// Record layout: four fields `user service time value` per line. Blank lines
/// and lines starting with `#` are skipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RecordFormat {
    pub delimiter: Delimiter,
    pub index_base: IndexBase,
}

/// Parses records from raw bytes, which must be UTF-8.
pub fn parse_records_bytes(bytes: &[u8], format: RecordFormat) -> Result<Vec<Entry>> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        let line = bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() + 1;
        Error::parse(line, "invalid UTF-8")
    })?;
    parse_records(text, format)
}

pub fn parse_records(text: &str, format: RecordFormat) -> Result<Vec<Entry>> {
    let mut entries = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        entries.push(parse_line(line, n + 1, format)?);
    }
    Ok(entries)
}

fn parse_line(line: &str, n: usize, format: RecordFormat) -> Result<Entry> {
    let parts: Box<dyn Iterator<Item = &str>> = match format.delimiter {
        Delimiter::Whitespace => Box::new(line.split_ascii_whitespace()),
        Delimiter::Comma => Box::new(line.split(',').map(str::trim)),
    };
    let mut fields = [""; 4];
    let mut count = 0;
    for f in parts {
        if count < 4 {
            fields[count] = f;
        }
        count += 1;
    }
    if count != 4 {
        return Err(Error::parse(n, format!("expected 4 fields, found {count}")));
    }
    let base = format.index_base.offset();
    let mut idx = [0usize; 3];
    for (slot, (field, name)) in idx.iter_mut().zip(fields.iter().zip(["user", "service", "time"])) {
        let raw: usize = field
            .parse()
            .map_err(|_| Error::parse(n, format!("invalid {name} index `{field}`")))?;
        *slot = raw
            .checked_sub(base)
            .ok_or_else(|| Error::parse(n, format!("{name} index {raw} below base {base}")))?;
    }
    let y: f64 = fields[3]
        .parse()
        .map_err(|_| Error::parse(n, format!("invalid value `{}`", fields[3])))?;
    if !y.is_finite() {
        return Err(Error::parse(n, format!("non-finite value {y}")));
    }
    if y < 0.0 {
        return Err(Error::parse(n, format!("negative QoS value {y}")));
    }
    Ok(Entry::new(idx[0], idx[1], idx[2], y))
}

/// Reads every record from `source` and builds a tensor. Without `dims` the
/// shape is `max index + 1` per mode.
pub fn load_records<R: Read>(mut source: R, format: RecordFormat, dims: Option<Dims>) -> Result<SparseTensor> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    let entries = parse_records_bytes(&bytes, format)?;
    match dims {
        Some(dims) => SparseTensor::build(dims, entries),
        None => SparseTensor::from_entries(entries),
    }
}

pub fn write_records<W: Write>(mut sink: W, entries: &[Entry], format: RecordFormat) -> Result<()> {
    let sep = match format.delimiter {
        Delimiter::Whitespace => ' ',
        Delimiter::Comma => ',',
    };
    let base = format.index_base.offset();
    for e in entries {
        writeln!(sink, "{}{sep}{}{sep}{}{sep}{}", e.i + base, e.j + base, e.k + base, e.y)?;
    }
    Ok(())
}

/// One line per entry: `i j k y_true y_pred abs_err` (0-based indices).
pub fn write_predictions<W: Write>(model: &FactorModel, entries: &[Entry], mut sink: W) -> Result<()> {
    for e in entries {
        let pred = model.predict(e.i, e.j, e.k)?;
        writeln!(sink, "{} {} {} {} {} {}", e.i, e.j, e.k, e.y, pred, (e.y - pred).abs())?;
    }
    Ok(())
}
