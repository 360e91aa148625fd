//! CSV and JSON writers. JSON is pretty-printed with struct fields in
//! declaration order; CSV has one row per record with the same field order.

use std::io::Write;

use serde::Serialize;

use crate::HarnessError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    Csv,
    #[default]
    Json,
}

pub fn write_json<T: Serialize + ?Sized>(out: &mut dyn Write, value: &T) -> Result<(), HarnessError> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

pub fn write_csv<T: Serialize>(out: &mut dyn Write, rows: &[T]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
