//! Labeled feature tables, grouped by query, and `features.tsv`.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::tsv;

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub qid: String,
    pub facet: String,
    pub value: String,
    pub label: u8,
    pub features: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureTable {
    pub feature_names: Vec<String>,
    pub instances: Vec<Instance>,
}

/// All instances of one query, in table order.
#[derive(Clone, Debug)]
pub struct QueryGroup<'a> {
    pub qid: &'a str,
    pub instances: Vec<&'a Instance>,
}

const FIXED_COLUMNS: [&str; 4] = ["qid", "facet", "value", "label"];

impl FeatureTable {
    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    /// Groups in order of each query's first appearance.
    pub fn groups(&self) -> Vec<QueryGroup<'_>> {
        let mut slot: HashMap<&str, usize> = HashMap::new();
        let mut groups: Vec<QueryGroup<'_>> = Vec::new();
        for inst in &self.instances {
            let i = *slot.entry(inst.qid.as_str()).or_insert_with(|| {
                groups.push(QueryGroup {
                    qid: inst.qid.as_str(),
                    instances: Vec::new(),
                });
                groups.len() - 1
            });
            groups[i].instances.push(inst);
        }
        groups
    }

    /// Header row, then `qid TAB facet TAB value TAB label TAB f1 ...` with
    /// features at 9 significant digits.
    pub fn to_tsv(&self) -> Result<String> {
        let mut out = String::new();
        let header: Vec<&str> = FIXED_COLUMNS
            .iter()
            .copied()
            .chain(self.feature_names.iter().map(String::as_str))
            .collect();
        for h in &header {
            tsv::field(h)?;
        }
        out.push_str(&header.join("\t"));
        out.push('\n');
        for inst in &self.instances {
            if inst.features.len() != self.feature_names.len() {
                return Err(Error::LengthMismatch {
                    expected: self.feature_names.len(),
                    got: inst.features.len(),
                });
            }
            let _ = write!(
                out,
                "{}\t{}\t{}\t{}",
                tsv::field(&inst.qid)?,
                tsv::field(&inst.facet)?,
                tsv::field(&inst.value)?,
                inst.label
            );
            for x in &inst.features {
                out.push('\t');
                out.push_str(&tsv::format_g9(*x));
            }
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_tsv(text: &str, source: &str) -> Result<Self> {
        let mut lines = tsv::rows(text);
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse(source, 1, "missing header row"))?;
        let columns: Vec<&str> = header.split('\t').collect();
        if columns.len() < FIXED_COLUMNS.len() || columns[..4] != FIXED_COLUMNS {
            return Err(Error::parse(source, 1, "header must start with qid, facet, value, label"));
        }
        let feature_names: Vec<String> = columns[4..].iter().map(|s| s.to_string()).collect();
        let width = columns.len();
        let mut instances = Vec::new();
        for (line_no, line) in lines {
            let f = tsv::split_row(line, width, source, line_no)?;
            let label: u8 = tsv::parse_field(f[3], "label", source, line_no)?;
            if label > 1 {
                return Err(Error::parse(source, line_no, "label must be 0 or 1"));
            }
            let features = f[4..]
                .iter()
                .map(|s| tsv::parse_field::<f64>(s, "feature value", source, line_no))
                .collect::<Result<Vec<_>>>()?;
            instances.push(Instance {
                qid: f[0].to_string(),
                facet: f[1].to_string(),
                value: f[2].to_string(),
                label,
                features,
            });
        }
        Ok(FeatureTable {
            feature_names,
            instances,
        })
    }
}
