//! CPLEX-LP text export and a reader for the same subset.

use std::fmt::Write;

use crate::error::{Error, Result};
use crate::lp::{LpProgram, LpRow};

const TERMS_PER_LINE: usize = 6;

fn write_terms(out: &mut String, terms: &[(String, f64)]) {
    for (k, (name, c)) in terms.iter().enumerate() {
        if k > 0 && k % TERMS_PER_LINE == 0 {
            out.push_str("\n   ");
        }
        let sign = if c.is_sign_negative() { '-' } else { '+' };
        if k == 0 && sign == '+' {
            let _ = write!(out, " {c} {name}");
        } else {
            let _ = write!(out, " {sign} {} {name}", c.abs());
        }
    }
}

/// Writes the program; identical programs give identical bytes.
pub fn export_lp_text(prog: &LpProgram) -> String {
    let mut out = String::from("\\ delay-power occupation LP\nMinimize\n obj:");
    let obj: Vec<(String, f64)> = prog.objective.iter().enumerate().map(|(j, &c)| (prog.var_name(j), c)).collect();
    write_terms(&mut out, &obj);
    out.push_str("\nSubject To\n");
    for row in &prog.rows {
        let _ = write!(out, " {}:", row.name);
        let terms: Vec<(String, f64)> = row.terms.iter().map(|&(j, c)| (prog.var_name(j), c)).collect();
        write_terms(&mut out, &terms);
        let _ = writeln!(out, " {} {}", if row.equality { "=" } else { "<=" }, row.rhs);
    }
    out.push_str("End\n");
    out
}

/// Named coefficients, as written in the file.
pub type Terms = Vec<(String, f64)>;

/// Objective and rows read back from `export_lp_text` output.
/// Each row is `(name, terms, sense, rhs)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedLp {
    pub objective: Terms,
    pub rows: Vec<(String, Terms, String, f64)>,
}

fn parse_terms(tokens: &[&str]) -> Result<Terms> {
    let bad = || Error::NumericalFailure(format!("malformed LP expression: {}", tokens.join(" ")));
    let mut terms = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let mut sign = 1.0;
        if tokens[i] == "+" || tokens[i] == "-" {
            if tokens[i] == "-" {
                sign = -1.0;
            }
            i += 1;
        }
        let c: f64 = tokens.get(i).ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let name = tokens.get(i + 1).ok_or_else(bad)?;
        terms.push((name.to_string(), sign * c));
        i += 2;
    }
    Ok(terms)
}

pub fn parse_lp_text(text: &str) -> Result<ParsedLp> {
    let mut section = "";
    let mut statements: Vec<(String, String)> = Vec::new();
    for line in text.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('\\') {
            continue;
        }
        match trimmed {
            "Minimize" | "Subject To" | "End" => {
                section = match trimmed {
                    "Minimize" => "obj",
                    "Subject To" => "rows",
                    _ => "end",
                };
                continue;
            }
            _ => {}
        }
        if line.starts_with("   ") {
            let last = statements.last_mut().ok_or_else(|| Error::NumericalFailure("dangling continuation".into()))?;
            last.1.push(' ');
            last.1.push_str(trimmed);
        } else {
            statements.push((section.to_string(), trimmed.to_string()));
        }
    }
    let mut parsed = ParsedLp {
        objective: Vec::new(),
        rows: Vec::new(),
    };
    for (sec, stmt) in statements {
        let (name, body) = stmt
            .split_once(':')
            .ok_or_else(|| Error::NumericalFailure(format!("unnamed LP statement: {stmt}")))?;
        let tokens: Vec<&str> = body.split_whitespace().collect();
        if sec == "obj" {
            parsed.objective = parse_terms(&tokens)?;
        } else {
            let k = tokens.len();
            if k < 2 {
                return Err(Error::NumericalFailure(format!("truncated row {name}")));
            }
            let rhs: f64 = tokens[k - 1]
                .parse()
                .map_err(|_| Error::NumericalFailure(format!("bad rhs in row {name}")))?;
            parsed.rows.push((name.to_string(), parse_terms(&tokens[..k - 2])?, tokens[k - 2].to_string(), rhs));
        }
    }
    Ok(parsed)
}

/// Reconstructs a program's rows from parsed text, given the variable order.
pub fn rows_from_parsed(prog: &LpProgram, parsed: &ParsedLp) -> Vec<LpRow> {
    let index = |n: &str| (0..prog.vars.len()).find(|&j| prog.var_name(j) == n).unwrap_or(usize::MAX);
    parsed
        .rows
        .iter()
        .map(|(name, terms, sense, rhs)| LpRow {
            name: name.clone(),
            terms: terms.iter().map(|(n, c)| (index(n), *c)).collect(),
            equality: sense == "=",
            rhs: *rhs,
        })
        .collect()
}
