//! CSV, JSON and gnuplot writers for an output directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

/// 17 significant digits, enough to round-trip any f64.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{:.16e}", x + 0.0)
    } else {
        x.to_string()
    }
}

pub struct OutputDir {
    dir: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(OutputDir { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn files(&self) -> &[String] {
        &self.written
    }

    pub fn csv(
        &mut self,
        name: &str,
        header: &[&str],
        rows: impl IntoIterator<Item = Vec<String>>,
    ) -> Result<(), CliError> {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::numeric(format!("{}: {e}", path.display())))?;
        let mut write =
            |rec: &[String]| w.write_record(rec).map_err(|e| CliError::numeric(format!("{}: {e}", path.display())));
        write(&header.iter().map(|s| s.to_string()).collect::<Vec<_>>())?;
        for row in rows {
            write(&row)?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let path = self.path(name);
        let text = serde_json::to_string_pretty(value).expect("outputs serialize");
        fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
        self.written.push(name.to_string());
        Ok(())
    }

    /// A gnuplot script plotting `columns` (1-based y columns) of `csv` against column 1.
    pub fn gnuplot(&mut self, csv_name: &str, xlabel: &str, columns: &[(usize, &str)]) -> Result<(), CliError> {
        let stem = csv_name.trim_end_matches(".csv");
        let mut script = format!(
            "set datafile separator ','\nset key autotitle columnhead\nset xlabel '{xlabel}'\nset terminal pngcairo size 900,600\nset output '{stem}.png'\nplot "
        );
        let parts: Vec<String> =
            columns.iter().map(|(c, title)| format!("'{csv_name}' using 1:{c} with lines title '{title}'")).collect();
        script += &parts.join(", \\\n     ");
        script.push('\n');
        let name = format!("{stem}.gp");
        let path = self.path(&name);
        fs::write(&path, script).map_err(|e| CliError::io(&path, e))?;
        self.written.push(name);
        Ok(())
    }
}
