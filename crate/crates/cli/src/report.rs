use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// Outcome of one subcommand: verdicts, artifacts in write order, timings.
#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub command: String,
    pub config_echo: String,
    pub verdicts: Vec<Verdict>,
    pub notes: Vec<String>,
    pub artifacts: Vec<(String, String)>,
    pub timings: Vec<(String, Duration)>,
}

impl RunReport {
    pub fn new(command: &str, config_echo: String) -> Self {
        RunReport { command: command.to_string(), config_echo, ..Default::default() }
    }

    pub fn verdict(&mut self, name: &str, pass: bool, detail: impl Into<String>) {
        self.verdicts.push(Verdict { name: name.to_string(), pass, detail: detail.into() });
    }

    pub fn note(&mut self, line: impl Into<String>) {
        self.notes.push(line.into());
    }

    pub fn artifact(&mut self, name: impl Into<String>, content: String) {
        self.artifacts.push((name.into(), content));
    }

    pub fn pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn render(&self, out_dir: &Path) -> String {
        let mut s = format!("relaxctl {}\n\n[config]\n{}\n\n[verdicts]\n", self.command, self.config_echo);
        for v in &self.verdicts {
            writeln!(s, "{}: {} - {}", v.name, if v.pass { "PASS" } else { "FAIL" }, v.detail).unwrap();
        }
        writeln!(s, "overall: {}", if self.pass() { "PASS" } else { "FAIL" }).unwrap();
        if !self.notes.is_empty() {
            s.push_str("\n[notes]\n");
            for n in &self.notes {
                writeln!(s, "{n}").unwrap();
            }
        }
        s.push_str("\n[artifacts]\n");
        for (name, _) in &self.artifacts {
            writeln!(s, "{}", out_dir.join(name).display()).unwrap();
        }
        s.push_str("\n[timings]\n");
        for (name, t) in &self.timings {
            writeln!(s, "{name}: {:.3} s", t.as_secs_f64()).unwrap();
        }
        s
    }

    /// Writes every artifact in order, then `report.txt`.
    pub fn write(&self, out_dir: &Path) -> Result<PathBuf, CliError> {
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| CliError::Output { path, source }
        };
        std::fs::create_dir_all(out_dir).map_err(io(out_dir))?;
        for (name, content) in &self.artifacts {
            let path = out_dir.join(name);
            std::fs::write(&path, content).map_err(io(&path))?;
        }
        let path = out_dir.join("report.txt");
        std::fs::write(&path, self.render(out_dir)).map_err(io(&path))?;
        Ok(path)
    }
}
