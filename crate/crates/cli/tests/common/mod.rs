//! Published design tables and their change notation.

#![allow(dead_code)]

use std::collections::BTreeMap;

use serde::Deserialize;

use fracdesign_cli::{Overrides, ProblemSpec};

#[derive(Debug, Deserialize)]
pub struct Tables {
    pub table: Vec<Table>,
}

#[derive(Debug, Deserialize)]
pub struct Table {
    pub id: u32,
    pub levels: Vec<usize>,
    pub effects: String,
    pub n1_hint: Option<usize>,
    pub b1_start: Option<usize>,
    pub rows: Vec<Row>,
}

#[derive(Debug, Deserialize)]
pub struct Row {
    pub n: usize,
    pub procedure: String,
    pub design: String,
    pub eff: [f64; 3],
}

pub fn tables() -> Tables {
    let text = include_str!("../data/tables.toml");
    toml::from_str(text).expect("tables fixture parses")
}

impl Table {
    pub fn spec(&self, runs: &str, procedure: &str) -> ProblemSpec {
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let flags = Overrides {
            levels: Some(join(&self.levels)),
            effects: Some(self.effects.clone()),
            runs: Some(runs.into()),
            procedure: Some(procedure.into()),
            n1_hint: self.n1_hint,
            b1_start: self.b1_start,
            ..Default::default()
        };
        ProblemSpec::resolve(None, &flags).expect("fixture spec is valid")
    }

    /// Sorted run labels of every row, resolving changes against earlier rows.
    pub fn designs(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut out = BTreeMap::new();
        for row in &self.rows {
            let labels = resolve(&row.design, &out);
            assert_eq!(labels.len(), row.n, "table {} row {} has {} runs", self.id, row.n, labels.len());
            out.insert(row.n, labels);
        }
        out
    }
}

fn numbers(text: &str) -> Vec<usize> {
    text.trim()
        .trim_start_matches('(')
        .trim_end_matches(')')
        .split(',')
        .map(|t| t.trim().parse().unwrap_or_else(|_| panic!("bad label {t:?}")))
        .collect()
}

/// Parses `9, 12, 14` or `d(13) + (40, 67) - 55` against earlier designs.
pub fn resolve(text: &str, earlier: &BTreeMap<usize, Vec<usize>>) -> Vec<usize> {
    let text = text.trim();
    let Some(rest) = text.strip_prefix("d(") else {
        let mut v = numbers(text);
        v.sort_unstable();
        return v;
    };
    let close = rest.find(')').expect("closing parenthesis");
    let base: usize = rest[..close].parse().expect("base run size");
    let mut labels = earlier.get(&base).unwrap_or_else(|| panic!("d({base}) not defined yet")).clone();
    let mut tail = rest[close + 1..].trim();
    while !tail.is_empty() {
        let sign = tail.as_bytes()[0];
        let body = tail[1..].trim_start();
        let end = if body.starts_with('(') {
            body.find(')').expect("closing parenthesis") + 1
        } else {
            body.find([' ', '+', '-']).unwrap_or(body.len())
        };
        let items = numbers(&body[..end]);
        match sign {
            b'+' => labels.extend(items),
            b'-' => {
                for k in items {
                    let pos = labels.iter().position(|&x| x == k).unwrap_or_else(|| panic!("{k} not in d({base})"));
                    labels.remove(pos);
                }
            }
            other => panic!("unexpected {:?} in {text:?}", other as char),
        }
        tail = body[end..].trim_start();
    }
    labels.sort_unstable();
    labels
}

pub fn design_text(labels: &[usize]) -> String {
    labels.iter().map(|k| format!("{k}\n")).collect()
}
