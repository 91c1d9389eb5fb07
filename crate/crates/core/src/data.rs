//! Built-in serology datasets, combination of studies, and the dataset
//! document format.
//!
//! Documents are TOML or JSON. Two layouts are accepted:
//!
//! ```toml
//! # flat
//! label = "santa-clara"
//! n_cal_neg = 401
//! s_cal_neg = 2
//! n_cal_pos = 197
//! s_cal_pos = 178
//! n_main = 3330
//! s_main = 50
//! ```
//!
//! ```toml
//! # structured (what `serialize_dataset` writes)
//! label = "santa-clara"
//!
//! [design]
//! n_cal_neg = 401
//! n_cal_pos = 197
//! n_main = 3330
//!
//! [observed]
//! s_cal_neg = 2
//! s_cal_pos = 178
//! s_main = 50
//! ```

use std::collections::BTreeMap;

use serde::Deserialize;

use crate::error::{invalid, Error, Result};
use crate::model::{Dataset, PositiveCounts, StudyDesign};

pub const SANTA_CLARA: &str = "santa-clara";
pub const LA_COUNTY: &str = "la-county";
pub const NEW_YORK: &str = "new-york";

const SHARED_CALIBRATION_NOTE: &str =
    "calibration counts borrowed from the Santa Clara validation study; the test kit is assumed identical";

fn santa_clara_calibration() -> (u32, u32, u32, u32) {
    (401, 2, 197, 178)
}

fn with_santa_clara_calibration(label: &str, n_main: u32, s_main: u32) -> Dataset {
    let (n_neg, s_neg, n_pos, s_pos) = santa_clara_calibration();
    Dataset {
        label: label.to_string(),
        design: StudyDesign {
            n_cal_neg: n_neg,
            n_cal_pos: n_pos,
            n_main,
        },
        observed: PositiveCounts::new(s_neg, s_pos, s_main),
        notes: None,
    }
}

/// Names of the built-in datasets.
pub fn builtin_names() -> [&'static str; 3] {
    [SANTA_CLARA, LA_COUNTY, NEW_YORK]
}

pub fn builtin_dataset(name: &str) -> Result<Dataset> {
    match name {
        SANTA_CLARA => Ok(with_santa_clara_calibration(SANTA_CLARA, 3330, 50)
            .with_notes("Santa Clara County serology study with its own validation study")),
        LA_COUNTY => Ok(with_santa_clara_calibration(LA_COUNTY, 846, 35).with_notes(SHARED_CALIBRATION_NOTE)),
        NEW_YORK => Ok(with_santa_clara_calibration(NEW_YORK, 3000, 420).with_notes(SHARED_CALIBRATION_NOTE)),
        other => Err(Error::UnknownDataset {
            name: other.to_string(),
            available: builtin_names().join(", "),
        }),
    }
}

/// Named collection of datasets, seeded with the built-ins.
#[derive(Debug, Clone)]
pub struct DatasetCatalog {
    entries: BTreeMap<String, Dataset>,
}

impl Default for DatasetCatalog {
    fn default() -> Self {
        let entries = builtin_names()
            .into_iter()
            .map(|n| (n.to_string(), builtin_dataset(n).expect("built-in")))
            .collect();
        Self { entries }
    }
}

impl DatasetCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, dataset: Dataset) -> Result<()> {
        dataset.validate()?;
        if self.entries.contains_key(&dataset.label) {
            return Err(invalid(
                "label",
                format!("dataset `{}` already registered", dataset.label),
            ));
        }
        self.entries.insert(dataset.label.clone(), dataset);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Dataset> {
        self.entries.get(name).ok_or_else(|| Error::UnknownDataset {
            name: name.to_string(),
            available: self.names().join(", "),
        })
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Dataset> {
        self.entries.values()
    }
}

/// Pools several studies that used the same test.
///
/// Main-study sizes and positives are summed. With `share_calibration` the
/// calibration data must be identical across inputs and is counted once;
/// otherwise calibration sizes and positives are summed too.
pub fn combine(datasets: &[Dataset], share_calibration: bool) -> Result<Dataset> {
    let first = match datasets {
        [first, _, ..] => first,
        _ => return Err(invalid("datasets", "combination needs at least two datasets")),
    };
    let mut design = first.design;
    let mut observed = first.observed;
    for d in &datasets[1..] {
        if share_calibration {
            let same = d.design.n_cal_neg == first.design.n_cal_neg
                && d.design.n_cal_pos == first.design.n_cal_pos
                && d.observed.s_cal_neg == first.observed.s_cal_neg
                && d.observed.s_cal_pos == first.observed.s_cal_pos;
            if !same {
                return Err(invalid(
                    "calibration",
                    format!("`{}` and `{}` have different calibration data", first.label, d.label),
                ));
            }
        } else {
            design.n_cal_neg += d.design.n_cal_neg;
            design.n_cal_pos += d.design.n_cal_pos;
            observed.s_cal_neg += d.observed.s_cal_neg;
            observed.s_cal_pos += d.observed.s_cal_pos;
        }
        design.n_main += d.design.n_main;
        observed.s_main += d.observed.s_main;
    }
    let label = datasets.iter().map(|d| d.label.as_str()).collect::<Vec<_>>().join("+");
    let notes = if share_calibration {
        "combined studies sharing one calibration study"
    } else {
        "combined studies with pooled calibration data"
    };
    Ok(Dataset::new(label, design, observed)?.with_notes(notes))
}

/// Resolves `a+b+c` against the catalog and combines the parts.
pub fn combine_named(catalog: &DatasetCatalog, spec: &str, share_calibration: bool) -> Result<Dataset> {
    let parts = spec
        .split('+')
        .map(|n| catalog.get(n.trim()).cloned())
        .collect::<Result<Vec<_>>>()?;
    combine(&parts, share_calibration)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DesignDoc {
    n_cal_neg: u32,
    n_cal_pos: u32,
    n_main: u32,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObservedDoc {
    s_cal_neg: u32,
    s_cal_pos: u32,
    s_main: u32,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetDoc {
    label: String,
    #[serde(default)]
    notes: Option<String>,
    #[serde(default)]
    design: Option<DesignDoc>,
    #[serde(default)]
    observed: Option<ObservedDoc>,
    #[serde(default)]
    n_cal_neg: Option<u32>,
    #[serde(default)]
    s_cal_neg: Option<u32>,
    #[serde(default)]
    n_cal_pos: Option<u32>,
    #[serde(default)]
    s_cal_pos: Option<u32>,
    #[serde(default)]
    n_main: Option<u32>,
    #[serde(default)]
    s_main: Option<u32>,
}

fn required(v: Option<u32>, field: &str) -> Result<u32> {
    v.ok_or_else(|| Error::Parse {
        location: Some(field.to_string()),
        message: format!("missing field `{field}`"),
    })
}

impl DatasetDoc {
    fn into_dataset(self) -> Result<Dataset> {
        let flat_present = [
            self.n_cal_neg,
            self.s_cal_neg,
            self.n_cal_pos,
            self.s_cal_pos,
            self.n_main,
            self.s_main,
        ]
        .iter()
        .any(Option::is_some);
        let structured = self.design.is_some() || self.observed.is_some();
        if flat_present && structured {
            return Err(Error::Parse {
                location: None,
                message: "mixes flat count fields with [design]/[observed] tables".into(),
            });
        }
        let (design, observed) = if structured {
            let d = self.design.ok_or_else(|| Error::Parse {
                location: Some("design".into()),
                message: "missing table `design`".into(),
            })?;
            let o = self.observed.ok_or_else(|| Error::Parse {
                location: Some("observed".into()),
                message: "missing table `observed`".into(),
            })?;
            (
                StudyDesign {
                    n_cal_neg: d.n_cal_neg,
                    n_cal_pos: d.n_cal_pos,
                    n_main: d.n_main,
                },
                PositiveCounts::new(o.s_cal_neg, o.s_cal_pos, o.s_main),
            )
        } else {
            (
                StudyDesign {
                    n_cal_neg: required(self.n_cal_neg, "n_cal_neg")?,
                    n_cal_pos: required(self.n_cal_pos, "n_cal_pos")?,
                    n_main: required(self.n_main, "n_main")?,
                },
                PositiveCounts::new(
                    required(self.s_cal_neg, "s_cal_neg")?,
                    required(self.s_cal_pos, "s_cal_pos")?,
                    required(self.s_main, "s_main")?,
                ),
            )
        };
        let dataset = Dataset {
            label: self.label,
            design,
            observed,
            notes: self.notes,
        };
        dataset.validate()?;
        Ok(dataset)
    }
}

/// Parses and validates a dataset document (TOML, or JSON when the text
/// starts with `{`).
pub fn parse_dataset(source: &str) -> Result<Dataset> {
    let doc: DatasetDoc = if source.trim_start().starts_with('{') {
        serde_json::from_str(source).map_err(|e| Error::Parse {
            location: Some(format!("line {} column {}", e.line(), e.column())),
            message: e.to_string(),
        })?
    } else {
        toml::from_str(source).map_err(|e| {
            let location = e.span().map(|span| {
                let line = source[..span.start].matches('\n').count() + 1;
                format!("line {line}")
            });
            Error::Parse {
                location,
                message: e.message().to_string(),
            }
        })?
    };
    doc.into_dataset()
}

/// Writes the structured TOML form.
pub fn serialize_dataset(dataset: &Dataset) -> String {
    let mut out = format!("label = {}\n", toml_string(&dataset.label));
    if let Some(notes) = &dataset.notes {
        out.push_str(&format!("notes = {}\n", toml_string(notes)));
    }
    let d = &dataset.design;
    let o = &dataset.observed;
    out.push_str(&format!(
        "\n[design]\nn_cal_neg = {}\nn_cal_pos = {}\nn_main = {}\n",
        d.n_cal_neg, d.n_cal_pos, d.n_main
    ));
    out.push_str(&format!(
        "\n[observed]\ns_cal_neg = {}\ns_cal_pos = {}\ns_main = {}\n",
        o.s_cal_neg, o.s_cal_pos, o.s_main
    ));
    out
}

fn toml_string(s: &str) -> String {
    serde_json::to_string(s).expect("string serialization")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_as_published() {
        let sc = builtin_dataset("santa-clara").unwrap();
        assert_eq!(
            sc.design,
            StudyDesign {
                n_cal_neg: 401,
                n_cal_pos: 197,
                n_main: 3330
            }
        );
        assert_eq!(sc.observed, PositiveCounts::new(2, 178, 50));
        let la = builtin_dataset("la-county").unwrap();
        assert_eq!(la.design.n_main, 846);
        assert_eq!(la.observed, PositiveCounts::new(2, 178, 35));
        let ny = builtin_dataset("new-york").unwrap();
        assert_eq!(
            ny.design,
            StudyDesign {
                n_cal_neg: 401,
                n_cal_pos: 197,
                n_main: 3000
            }
        );
        assert_eq!(ny.observed.s_main, 420);
        assert!(la.notes.as_deref().unwrap().contains("borrowed"));
    }

    #[test]
    fn unknown_builtin_lists_names() {
        let err = builtin_dataset("boston").unwrap_err().to_string();
        assert!(err.contains("santa-clara") && err.contains("new-york"), "{err}");
    }

    #[test]
    fn combine_shared_calibration() {
        let sc = builtin_dataset(SANTA_CLARA).unwrap();
        let la = builtin_dataset(LA_COUNTY).unwrap();
        let ny = builtin_dataset(NEW_YORK).unwrap();
        let two = combine(&[sc.clone(), la.clone()], true).unwrap();
        assert_eq!(
            two.design,
            StudyDesign {
                n_cal_neg: 401,
                n_cal_pos: 197,
                n_main: 4176
            }
        );
        assert_eq!(two.observed, PositiveCounts::new(2, 178, 85));
        let all = combine(&[sc, la, ny], true).unwrap();
        assert_eq!(all.design.n_main, 7176);
        assert_eq!(all.observed, PositiveCounts::new(2, 178, 505));
        assert_eq!(all.label, "santa-clara+la-county+new-york");
    }

    #[test]
    fn combine_unshared_doubles() {
        let sc = builtin_dataset(SANTA_CLARA).unwrap();
        let d = combine(&[sc.clone(), sc.clone()], false).unwrap();
        assert_eq!(
            d.design,
            StudyDesign {
                n_cal_neg: 802,
                n_cal_pos: 394,
                n_main: 6660
            }
        );
        assert_eq!(d.observed, PositiveCounts::new(4, 356, 100));
    }

    #[test]
    fn combine_rejects_mismatched_calibration() {
        let sc = builtin_dataset(SANTA_CLARA).unwrap();
        let mut other = sc.clone();
        other.observed.s_cal_neg = 3;
        assert!(matches!(
            combine(&[sc.clone(), other], true),
            Err(Error::Validation { .. })
        ));
        assert!(combine(&[sc], true).is_err());
    }

    #[test]
    fn parse_flat_document() {
        let doc = "label = \"mine\"\nn_cal_neg = 401\ns_cal_neg = 2\nn_cal_pos = 197\ns_cal_pos = 178\nn_main = 3330\ns_main = 50\n";
        let d = parse_dataset(doc).unwrap();
        let sc = builtin_dataset(SANTA_CLARA).unwrap();
        assert_eq!((d.design, d.observed), (sc.design, sc.observed));
        assert_eq!(d.label, "mine");
    }

    #[test]
    fn parse_rejects_out_of_bounds_counts() {
        let doc = "label = \"x\"\nn_cal_neg = 401\ns_cal_neg = 500\nn_cal_pos = 197\ns_cal_pos = 178\nn_main = 3330\ns_main = 50\n";
        match parse_dataset(doc) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "s_cal_neg"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn parse_accepts_missing_positive_arm() {
        let doc = "label = \"neg-only\"\nn_cal_neg = 100\ns_cal_neg = 1\nn_cal_pos = 0\ns_cal_pos = 0\nn_main = 500\ns_main = 12\n";
        let d = parse_dataset(doc).unwrap();
        assert_eq!(d.design.n_cal_pos, 0);
    }

    #[test]
    fn parse_reports_location() {
        let doc = "label = \"x\"\nn_cal_neg = \"many\"\n";
        let err = parse_dataset(doc).unwrap_err();
        match err {
            Error::Parse { location, .. } => assert_eq!(location.as_deref(), Some("line 2")),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_dataset("label = \"x\"\nn_main = 3\n"),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn parse_json_structured() {
        let doc = r#"{"label": "j", "design": {"n_cal_neg": 10, "n_cal_pos": 5, "n_main": 20},
                      "observed": {"s_cal_neg": 0, "s_cal_pos": 4, "s_main": 3}}"#;
        let d = parse_dataset(doc).unwrap();
        assert_eq!(d.observed.s_cal_pos, 4);
    }

    #[test]
    fn catalog_registration() {
        let mut cat = DatasetCatalog::new();
        assert_eq!(cat.names(), vec!["la-county", "new-york", "santa-clara"]);
        let mut mine = builtin_dataset(SANTA_CLARA).unwrap();
        assert!(cat.register(mine.clone()).is_err());
        mine.label = "mine".into();
        cat.register(mine).unwrap();
        assert!(cat.get("mine").is_ok());
        let c = combine_named(&cat, "santa-clara+la-county", true).unwrap();
        assert_eq!(c.observed.s_main, 85);
    }
}
