//! Worker subgroup taxonomy and the built-in LODES column schemas.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::IngestError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Characteristic {
    Race,
    Ethnicity,
    Sex,
    Age,
    Income,
    Education,
    Jobtype,
    OdAge,
    OdIncome,
    OdSupersector,
}

impl Characteristic {
    pub fn as_str(self) -> &'static str {
        match self {
            Characteristic::Race => "race",
            Characteristic::Ethnicity => "ethnicity",
            Characteristic::Sex => "sex",
            Characteristic::Age => "age",
            Characteristic::Income => "income",
            Characteristic::Education => "education",
            Characteristic::Jobtype => "jobtype",
            Characteristic::OdAge => "od_age",
            Characteristic::OdIncome => "od_income",
            Characteristic::OdSupersector => "od_supersector",
        }
    }
}

impl fmt::Display for Characteristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub code: String,
    pub label: String,
}

/// Categories of one characteristic, in report order.
///
/// `complete` schemas partition every worker, so their category counts must
/// add up to the row total. LODES education (CD01–CD04) is published only
/// for workers aged 30 and over and is therefore not complete.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSchema {
    pub characteristic: Characteristic,
    pub categories: Vec<Category>,
    #[serde(default = "default_complete")]
    pub complete: bool,
}

fn default_complete() -> bool {
    true
}

impl GroupSchema {
    pub fn new(
        characteristic: Characteristic,
        categories: Vec<Category>,
        complete: bool,
    ) -> Result<Self, IngestError> {
        let s = GroupSchema {
            characteristic,
            categories,
            complete,
        };
        s.check()?;
        Ok(s)
    }

    pub fn check(&self) -> Result<(), IngestError> {
        if self.categories.is_empty() {
            return Err(IngestError::Schema(format!(
                "{} has no categories",
                self.characteristic
            )));
        }
        let mut seen = BTreeSet::new();
        for c in &self.categories {
            if !seen.insert(c.code.as_str()) {
                return Err(IngestError::Schema(format!(
                    "{} lists column {} twice",
                    self.characteristic, c.code
                )));
            }
        }
        Ok(())
    }

    pub fn codes(&self) -> impl Iterator<Item = &str> {
        self.categories.iter().map(|c| c.code.as_str())
    }
}

fn schema(ch: Characteristic, complete: bool, cats: &[(&str, &str)]) -> GroupSchema {
    GroupSchema {
        characteristic: ch,
        categories: cats
            .iter()
            .map(|&(code, label)| Category {
                code: code.into(),
                label: label.into(),
            })
            .collect(),
        complete,
    }
}

/// RAC/WAC characteristics as published in LODES version 7.
pub fn lodes_area_schemas() -> Vec<GroupSchema> {
    use Characteristic::*;
    vec![
        schema(
            Race,
            true,
            &[
                ("CR01", "White alone"),
                ("CR02", "Black or African American alone"),
                ("CR03", "American Indian or Alaska Native alone"),
                ("CR04", "Asian alone"),
                ("CR05", "Native Hawaiian or Other Pacific Islander alone"),
                ("CR07", "Two or More Race Groups"),
            ],
        ),
        schema(
            Ethnicity,
            true,
            &[("CT01", "Not Hispanic or Latino"), ("CT02", "Hispanic or Latino")],
        ),
        schema(Sex, true, &[("CS01", "Male"), ("CS02", "Female")]),
        schema(
            Age,
            true,
            &[("CA01", "29 or younger"), ("CA02", "30 to 54"), ("CA03", "55 or older")],
        ),
        schema(
            Income,
            true,
            &[
                ("CE01", "$1250/month or less"),
                ("CE02", "$1251/month to $3333/month"),
                ("CE03", "Greater than $3333/month"),
            ],
        ),
        schema(
            Education,
            false,
            &[
                ("CD01", "Less than high school"),
                ("CD02", "High school or equivalent"),
                ("CD03", "Some college or Associate degree"),
                ("CD04", "Bachelor's degree or advanced degree"),
            ],
        ),
        schema(
            Jobtype,
            true,
            &[
                ("CNS01", "Agriculture, Forestry, Fishing and Hunting"),
                ("CNS02", "Mining, Quarrying, and Oil and Gas Extraction"),
                ("CNS03", "Utilities"),
                ("CNS04", "Construction"),
                ("CNS05", "Manufacturing"),
                ("CNS06", "Wholesale Trade"),
                ("CNS07", "Retail Trade"),
                ("CNS08", "Transportation and Warehousing"),
                ("CNS09", "Information"),
                ("CNS10", "Finance and Insurance"),
                ("CNS11", "Real Estate and Rental and Leasing"),
                ("CNS12", "Professional, Scientific, and Technical Services"),
                ("CNS13", "Management of Companies and Enterprises"),
                ("CNS14", "Administrative and Support and Waste Management and Remediation Services"),
                ("CNS15", "Educational Services"),
                ("CNS16", "Health Care and Social Assistance"),
                ("CNS17", "Arts, Entertainment, and Recreation"),
                ("CNS18", "Accommodation and Food Services"),
                ("CNS19", "Other Services (except Public Administration)"),
                ("CNS20", "Public Administration"),
            ],
        ),
    ]
}

/// OD characteristics as published in LODES version 7.
pub fn lodes_od_schemas() -> Vec<GroupSchema> {
    use Characteristic::*;
    vec![
        schema(
            OdAge,
            true,
            &[("SA01", "29 or younger"), ("SA02", "30 to 54"), ("SA03", "55 or older")],
        ),
        schema(
            OdIncome,
            true,
            &[
                ("SE01", "$1250/month or less"),
                ("SE02", "$1251/month to $3333/month"),
                ("SE03", "Greater than $3333/month"),
            ],
        ),
        schema(
            OdSupersector,
            true,
            &[
                ("SI01", "Goods Producing"),
                ("SI02", "Trade, Transportation, and Utilities"),
                ("SI03", "All Other Services"),
            ],
        ),
    ]
}

/// Column order of the category counts carried by a table: the selected
/// schemas laid end to end.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnLayout {
    schemas: Vec<GroupSchema>,
    offsets: Vec<usize>,
    codes: Vec<String>,
}

/// One category column of a layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupColumn<'a> {
    pub characteristic: Characteristic,
    pub category: &'a Category,
    pub index: usize,
}

impl ColumnLayout {
    pub fn new(schemas: Vec<GroupSchema>) -> Result<Self, IngestError> {
        let mut offsets = Vec::with_capacity(schemas.len());
        let mut codes = Vec::new();
        let mut seen = BTreeSet::new();
        for s in &schemas {
            s.check()?;
            offsets.push(codes.len());
            for c in s.codes() {
                if !seen.insert(c.to_string()) {
                    return Err(IngestError::Schema(format!(
                        "column {c} belongs to more than one characteristic"
                    )));
                }
                codes.push(c.to_string());
            }
        }
        Ok(ColumnLayout {
            schemas,
            offsets,
            codes,
        })
    }

    pub fn empty() -> Self {
        ColumnLayout {
            schemas: Vec::new(),
            offsets: Vec::new(),
            codes: Vec::new(),
        }
    }

    pub fn schemas(&self) -> &[GroupSchema] {
        &self.schemas
    }

    pub fn codes(&self) -> &[String] {
        &self.codes
    }

    pub fn width(&self) -> usize {
        self.codes.len()
    }

    pub fn index_of(&self, code: &str) -> Option<usize> {
        self.codes.iter().position(|c| c == code)
    }

    /// Column range occupied by the i-th schema.
    pub fn span(&self, schema_index: usize) -> std::ops::Range<usize> {
        let start = self.offsets[schema_index];
        start..start + self.schemas[schema_index].categories.len()
    }

    pub fn columns(&self) -> impl Iterator<Item = GroupColumn<'_>> {
        self.schemas.iter().enumerate().flat_map(move |(i, s)| {
            let off = self.offsets[i];
            s.categories.iter().enumerate().map(move |(k, c)| GroupColumn {
                characteristic: s.characteristic,
                category: c,
                index: off + k,
            })
        })
    }
}
