//! Report assembly and artifact output.

use std::fmt::Write as _;
use std::path::Path;

use xferop::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Text,
    Csv,
}

/// Text body, named CSV tables and the exit code of one command.
pub struct Report {
    pub header: Vec<(String, String)>,
    pub body: String,
    pub tables: Vec<(String, String)>,
    pub code: i32,
}

impl Report {
    pub fn new(header: Vec<(String, String)>) -> Self {
        Report { header, body: String::new(), tables: Vec::new(), code: 0 }
    }

    pub fn line(&mut self, s: impl AsRef<str>) {
        self.body.push_str(s.as_ref());
        if !s.as_ref().ends_with('\n') {
            self.body.push('\n');
        }
    }

    pub fn table(&mut self, name: &str, csv: String) {
        self.tables.push((name.to_string(), csv));
    }

    pub fn text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.header {
            let _ = writeln!(s, "{k}: {v}");
        }
        if !self.header.is_empty() {
            s.push('\n');
        }
        s.push_str(&self.body);
        s
    }

    /// Prints the report (or its first table) and writes every artifact under `out`.
    pub fn emit(&self, format: Format, out: Option<&Path>) -> std::io::Result<()> {
        match format {
            Format::Text => print!("{}", self.text()),
            Format::Csv => match self.tables.first() {
                Some((_, csv)) => print!("{csv}"),
                None => print!("{}", self.text()),
            },
        }
        if let Some(dir) = out {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join("report.txt"), self.text())?;
            for (name, csv) in &self.tables {
                let file = if name.contains('.') { name.clone() } else { format!("{name}.csv") };
                std::fs::write(dir.join(file), csv)?;
            }
        }
        Ok(())
    }
}

/// Exit code for a library error: 1 when a search found nothing, 3 otherwise.
pub fn error_code(e: &Error) -> i32 {
    match e {
        Error::NoSolution(_) => 1,
        _ => 3,
    }
}

/// 64-bit FNV-1a, used as the input fingerprint.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ *b as u64).wrapping_mul(0x0100_0000_01b3))
}

pub fn status(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAIL"
    }
}
