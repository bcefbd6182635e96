//! Report bundle and its JSON/CSV serialization.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tapa_core::TheoryCheckReport;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Formats {
    pub csv: bool,
    pub json: bool,
    pub svg: bool,
}

impl Default for Formats {
    fn default() -> Self {
        Formats {
            csv: true,
            json: true,
            svg: true,
        }
    }
}

impl Formats {
    pub fn parse(list: &str) -> Result<Self, CliError> {
        let mut f = Formats {
            csv: false,
            json: false,
            svg: false,
        };
        for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item {
                "csv" => f.csv = true,
                "json" => f.json = true,
                "svg" => f.svg = true,
                other => return Err(CliError::Usage(format!("unknown format `{other}`"))),
            }
        }
        Ok(f)
    }
}

/// Parameter combinations left out because a hypothesis does not hold there.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Skipped {
    pub check: String,
    pub condition: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportBundle {
    pub command: String,
    pub seed: u64,
    pub pass: bool,
    pub checks: Vec<TheoryCheckReport>,
    pub skipped: Vec<Skipped>,
    #[serde(skip)]
    pub files: Vec<PathBuf>,
}

impl ReportBundle {
    pub fn new(command: &str, seed: u64) -> Self {
        ReportBundle {
            command: command.to_string(),
            seed,
            pass: true,
            checks: Vec::new(),
            skipped: Vec::new(),
            files: Vec::new(),
        }
    }

    pub fn push(&mut self, check: TheoryCheckReport) {
        self.pass &= check.pass;
        self.checks.push(check);
    }

    pub fn extend(&mut self, checks: impl IntoIterator<Item = TheoryCheckReport>) {
        for c in checks {
            self.push(c);
        }
    }

    pub fn skip(&mut self, check: &str, condition: &str) {
        match self
            .skipped
            .iter_mut()
            .find(|s| s.check == check && s.condition == condition)
        {
            Some(s) => s.count += 1,
            None => self.skipped.push(Skipped {
                check: check.to_string(),
                condition: condition.to_string(),
                count: 1,
            }),
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &TheoryCheckReport> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

/// Round-trip exact: 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct Writer {
    dir: PathBuf,
    pub formats: Formats,
}

impl Writer {
    pub fn new(dir: &Path, formats: Formats) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Writer {
            dir: dir.to_path_buf(),
            formats,
        })
    }

    pub fn csv(
        &self,
        bundle: &mut ReportBundle,
        name: &str,
        header: &[&str],
        rows: impl IntoIterator<Item = Vec<String>>,
    ) -> Result<(), CliError> {
        if !self.formats.csv {
            return Ok(());
        }
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
        bundle.files.push(path);
        Ok(())
    }

    pub fn svg(&self, bundle: &mut ReportBundle, name: &str, body: String) -> Result<(), CliError> {
        if !self.formats.svg {
            return Ok(());
        }
        let path = self.dir.join(name);
        fs::write(&path, body)?;
        bundle.files.push(path);
        Ok(())
    }

    /// Writes `report.json` and, if asked, `checks.csv`.
    pub fn finish(&self, bundle: &mut ReportBundle, checks_csv: bool) -> Result<(), CliError> {
        if self.formats.json {
            let path = self.dir.join("report.json");
            let mut text = serde_json::to_string_pretty(&*bundle)?;
            text.push('\n');
            fs::write(&path, text)?;
            bundle.files.push(path);
        }
        let rows: Vec<Vec<String>> = bundle
            .checks
            .iter()
            .map(|c| {
                let params = c
                    .params
                    .iter()
                    .map(|(k, v)| format!("{k}={}", num(*v)))
                    .collect::<Vec<_>>()
                    .join(";");
                vec![
                    c.name.clone(),
                    c.pass.to_string(),
                    num(c.lhs),
                    num(c.rhs),
                    num(c.margin),
                    params,
                ]
            })
            .collect();
        if checks_csv {
            self.csv(
                bundle,
                "checks.csv",
                &["name", "pass", "lhs", "rhs", "margin", "params"],
                rows,
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            let s = num(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
    }

    #[test]
    fn formats_parse() {
        let f = Formats::parse("csv,svg").unwrap();
        assert!(f.csv && f.svg && !f.json);
        assert!(Formats::parse("pdf").is_err());
    }

    #[test]
    fn bundle_pass_is_conjunction() {
        let mut b = ReportBundle::new("verify", 1);
        b.push(TheoryCheckReport::at_most(
            "a",
            Default::default(),
            1.0,
            2.0,
        ));
        assert!(b.pass);
        b.push(TheoryCheckReport::at_most(
            "b",
            Default::default(),
            3.0,
            2.0,
        ));
        assert!(!b.pass);
        assert_eq!(b.failures().count(), 1);
        b.skip("x", "c");
        b.skip("x", "c");
        assert_eq!(b.skipped[0].count, 2);
    }
}
