use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use anyhow::Context;

pub type CsvOut = csv::Writer<Box<dyn Write>>;

/// CSV writer on `path`, or on stdout when `path` is `None`.
pub fn writer(path: Option<&Path>) -> anyhow::Result<CsvOut> {
    let sink: Box<dyn Write> = match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)
                    .with_context(|| format!("creating {}", dir.display()))?;
            }
            Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)
        }
        None => Box::new(io::stdout()),
    };
    Ok(csv::Writer::from_writer(sink))
}

/// Shortest round-trip decimal; `inf` and `NaN` for the special values.
pub fn num(x: f64) -> String {
    x.to_string()
}

pub fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}
