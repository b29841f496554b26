use std::fs::File;
use std::path::Path;

use harvest_core::Error;

use crate::CliError;

/// A CSV artifact held as strings, so views can echo values verbatim.
#[derive(Debug, Clone)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let file = File::open(path)?;
        let mut reader = csv::Reader::from_reader(file);
        let headers = reader
            .headers()
            .map_err(Error::from)?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for rec in reader.records() {
            rows.push(rec.map_err(Error::from)?.iter().map(str::to_string).collect());
        }
        Ok(Self { headers, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    /// Parses a column; empty cells are `None`.
    pub fn numeric(&self, name: &str) -> Result<Vec<Option<f64>>, CliError> {
        let j = self
            .column(name)
            .ok_or_else(|| CliError::data(format!("missing column {name}")))?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| match row[j].as_str() {
                "" => Ok(None),
                s => s.parse::<f64>().map(Some).map_err(|_| {
                    CliError::Core(Error::Parse {
                        line: i as u64 + 2,
                        message: format!("{name} is not a number: {s:?}"),
                    })
                }),
            })
            .collect()
    }

    pub fn numeric_complete(&self, name: &str) -> Result<Vec<f64>, CliError> {
        self.numeric(name)?
            .into_iter()
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| CliError::data(format!("column {name} has empty cells")))
    }
}

pub fn write_rows<I>(path: &Path, headers: &[&str], rows: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_writer(File::create(path)?);
    w.write_record(headers).map_err(Error::from)?;
    for row in rows {
        w.write_record(&row).map_err(Error::from)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_key_values(path: &Path, pairs: &[(&str, String)]) -> Result<(), CliError> {
    write_rows(
        path,
        &["key", "value"],
        pairs.iter().map(|(k, v)| vec![k.to_string(), v.clone()]),
    )
}

pub fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Reads the `actual` and `predicted` columns of a predictions file.
pub fn read_pairs(path: &Path) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let t = Table::read(path)?;
    Ok((t.numeric_complete("actual")?, t.numeric_complete("predicted")?))
}
