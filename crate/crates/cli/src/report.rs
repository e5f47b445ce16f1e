use std::fmt;

use serde::Serialize;
use serde_json::Value;

pub const EXIT_OK: i32 = 0;
/// Content or fixity failure.
pub const EXIT_CONTENT: i32 = 1;
/// Usage or ledger error.
pub const EXIT_USAGE: i32 = 2;

/// Result of one command: its exit code plus text and JSON renderings.
#[derive(Debug, Clone)]
pub struct Report {
    pub code: i32,
    pub text: String,
    pub json: Value,
}

impl Report {
    pub fn new(code: i32, text: String, json: impl Serialize) -> Self {
        Report {
            code,
            text,
            json: serde_json::to_value(json).expect("report serializes"),
        }
    }

    pub fn ok(text: String, json: impl Serialize) -> Self {
        Report::new(EXIT_OK, text, json)
    }
}

#[derive(Debug, Clone)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl fmt::Display) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.to_string(),
        }
    }

    pub fn content(message: impl fmt::Display) -> Self {
        CliError {
            code: EXIT_CONTENT,
            message: message.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<carrierforge_core::ledger::LedgerError> for CliError {
    fn from(e: carrierforge_core::ledger::LedgerError) -> Self {
        CliError::usage(e)
    }
}

impl From<carrierforge_core::fixity::FixityError> for CliError {
    fn from(e: carrierforge_core::fixity::FixityError) -> Self {
        CliError::content(e)
    }
}

impl From<carrierforge_core::pipeline::PipelineError> for CliError {
    fn from(e: carrierforge_core::pipeline::PipelineError) -> Self {
        CliError::content(e)
    }
}

/// Plain fixed-width table.
pub fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (i, (cell, w)) in cells.iter().zip(&widths).enumerate() {
            if i + 1 == cells.len() {
                s.push_str(cell);
            } else {
                s.push_str(&format!("{cell:<w$}  "));
            }
        }
        s.trim_end().to_owned() + "\n"
    };
    let mut out = line(header.to_vec());
    for row in rows {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
    }
    out
}
