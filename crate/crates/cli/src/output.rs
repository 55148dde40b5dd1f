use std::fs::File;
use std::path::Path;

use crate::error::{CliError, CliResult};

/// Floats go out in shortest round-trip scientific form so reruns diff cleanly.
pub fn fmt_f(v: f64) -> String {
    format!("{v:e}")
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let wrap = |e: csv::Error| CliError::Output {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    };
    let file = File::create(path).map_err(|source| CliError::Output {
        path: path.to_path_buf(),
        source,
    })?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header).map_err(wrap)?;
    for r in rows {
        w.write_record(r).map_err(wrap)?;
    }
    w.flush().map_err(|source| CliError::Output {
        path: path.to_path_buf(),
        source,
    })
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Output {
        path: dir.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1e-300, -2.5e7, 1.0 / 3.0] {
            assert_eq!(fmt_f(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn csv_has_header_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_csv(&p, &["a", "b"], &[vec!["1".into(), fmt_f(0.5)]]).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "a,b\n1,5e-1\n");
    }
}
