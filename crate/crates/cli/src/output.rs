use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

/// Output directory layout: `report.json`, `tables/*.csv`, `plotdata/*.csv`.
pub struct Outputs {
    pub dir: PathBuf,
}

impl Outputs {
    pub fn create(dir: &Path) -> Result<Outputs> {
        for sub in ["tables", "plotdata"] {
            fs::create_dir_all(dir.join(sub)).with_context(|| format!("creating {}", dir.join(sub).display()))?;
        }
        Ok(Outputs { dir: dir.to_path_buf() })
    }

    pub fn report(&self, value: &impl Serialize) -> Result<PathBuf> {
        let path = self.dir.join("report.json");
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    fn file(&self, sub: &str, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(sub).join(format!("{name}.csv"));
        Ok(BufWriter::new(File::create(&path).with_context(|| format!("writing {}", path.display()))?))
    }

    pub fn table(&self, name: &str) -> Result<BufWriter<File>> {
        self.file("tables", name)
    }

    pub fn plot(&self, name: &str) -> Result<BufWriter<File>> {
        self.file("plotdata", name)
    }

    /// Writes numeric rows under `header` to `plotdata/<name>.csv`.
    pub fn series(&self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
        let mut w = csv::Writer::from_writer(self.plot(name)?);
        w.write_record(header)?;
        for row in rows {
            w.write_record(row.iter().map(|v| format!("{v:.17e}")))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn table_rows(&self, name: &str, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        let mut w = csv::Writer::from_writer(self.table(name)?);
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?.flush()?;
        Ok(())
    }
}
