use std::fmt;

use serde::{Deserialize, Serialize};

/// A rendered field value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(untagged)]
pub enum Scalar {
    #[default]
    Unset,
    Bool(bool),
    /// Dimensions are stored in dp.
    Number(f64),
    Token(String),
}

impl Scalar {
    pub fn token(s: impl Into<String>) -> Self {
        Scalar::Token(s.into())
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Scalar::Number(n) => Some(*n),
            _ => None,
        }
    }

    pub fn is_unset(&self) -> bool {
        matches!(self, Scalar::Unset)
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Unset => f.write_str("(unset)"),
            Scalar::Bool(b) => write!(f, "{b}"),
            Scalar::Number(n) => write!(f, "{n}"),
            Scalar::Token(t) => f.write_str(t),
        }
    }
}

/// Pixel density used to convert `px` values; a 480dpi (xxhdpi) screen.
pub const PX_PER_DP: f64 = 3.0;

const UNITS: &[(&str, f64)] = &[
    ("dip", 1.0),
    ("dp", 1.0),
    ("sp", 1.0),
    ("px", 1.0 / PX_PER_DP),
    ("pt", 160.0 / 72.0),
    ("in", 160.0),
    ("mm", 160.0 / 25.4),
];

/// Parses `12dp`, `13.5sp`, `-4px`, ... into dp.
pub fn parse_dimension(value: &str) -> Option<f64> {
    let value = value.trim();
    let (number, factor) = UNITS
        .iter()
        .find_map(|(unit, factor)| value.strip_suffix(unit).map(|n| (n, *factor)))?;
    if number.is_empty()
        || !number
            .chars()
            .all(|c| c.is_ascii_digit() || c == '.' || c == '-' || c == '+')
    {
        return None;
    }
    let n: f64 = number.parse().ok()?;
    n.is_finite().then_some(n * factor)
}

/// Grid of dp values tried for dimensions after the domain keywords.
pub const DIMENSION_GRID: [u32; 11] = [0, 1, 2, 4, 8, 16, 32, 64, 128, 256, 512];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ValueDomain {
    Enum {
        values: Vec<String>,
    },
    /// `|`-separated subset of `values`; order-insensitive.
    Flags {
        values: Vec<String>,
    },
    Dimension {
        #[serde(default)]
        keywords: Vec<String>,
    },
    /// `@type/name`, `?attr/name` or, when `color` is allowed, `#rgb` literals.
    Reference {
        types: Vec<String>,
    },
    FreeText,
    Bool,
}

impl ValueDomain {
    /// Interprets an attribute value, or explains why it is not valid.
    pub fn parse(&self, value: &str) -> Result<Scalar, String> {
        match self {
            ValueDomain::Enum { values } => {
                if values.iter().any(|v| v == value) {
                    Ok(Scalar::token(value))
                } else {
                    Err(format!("`{value}` is not one of {}", values.join(", ")))
                }
            }
            ValueDomain::Flags { values } => {
                let mut parts: Vec<&str> = value.split('|').map(str::trim).collect();
                if parts.iter().any(|p| !values.iter().any(|v| v == p)) {
                    return Err(format!(
                        "`{value}` is not a combination of {}",
                        values.join(", ")
                    ));
                }
                parts.sort_unstable();
                parts.dedup();
                Ok(Scalar::token(parts.join("|")))
            }
            ValueDomain::Dimension { keywords } => {
                if keywords.iter().any(|k| k == value) {
                    Ok(Scalar::token(value))
                } else {
                    parse_dimension(value)
                        .map(Scalar::Number)
                        .ok_or_else(|| format!("`{value}` is not a dimension"))
                }
            }
            ValueDomain::Reference { types } => {
                if reference_type_ok(value, types) {
                    Ok(Scalar::token(value))
                } else {
                    Err(format!(
                        "`{value}` is not a reference to {}",
                        types.join("/")
                    ))
                }
            }
            ValueDomain::FreeText => Ok(Scalar::token(value)),
            ValueDomain::Bool => match value {
                "true" => Ok(Scalar::Bool(true)),
                "false" => Ok(Scalar::Bool(false)),
                _ => Err(format!("`{value}` is not a boolean")),
            },
        }
    }

    /// Values tried by the patch search, in a fixed order:
    /// enums in declaration order; flag sets by size then declaration order;
    /// dimensions as keywords then the dp grid; references as `original`
    /// followed by `registry` entries of an allowed type; free text as
    /// `original`; booleans as `true`, `false`.
    pub fn enumerate(&self, original: &str, registry: &[String]) -> Vec<String> {
        match self {
            ValueDomain::Enum { values } => values.clone(),
            ValueDomain::Flags { values } => flag_subsets(values),
            ValueDomain::Dimension { keywords } => keywords
                .iter()
                .cloned()
                .chain(DIMENSION_GRID.iter().map(|n| format!("{n}dp")))
                .collect(),
            ValueDomain::Reference { types } => {
                let mut out = vec![original.to_string()];
                let mut rest: Vec<&String> = registry
                    .iter()
                    .filter(|r| r.as_str() != original && reference_type_ok(r, types))
                    .collect();
                rest.sort();
                out.extend(rest.into_iter().cloned());
                out
            }
            ValueDomain::FreeText => vec![original.to_string()],
            ValueDomain::Bool => vec!["true".into(), "false".into()],
        }
    }
}

fn flag_subsets(values: &[String]) -> Vec<String> {
    // capped: 2^n grows quickly and the search budget cuts it short anyway
    let n = values.len().min(12);
    let mut subsets: Vec<Vec<usize>> = (1..(1u32 << n))
        .map(|m| (0..n).filter(|i| m & (1 << i) != 0).collect())
        .collect();
    subsets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    subsets
        .into_iter()
        .map(|s| {
            s.iter()
                .map(|&i| values[i].as_str())
                .collect::<Vec<_>>()
                .join("|")
        })
        .collect()
}

fn reference_type_ok(value: &str, types: &[String]) -> bool {
    if value == "@null" {
        return true;
    }
    if let Some(hex) = value.strip_prefix('#') {
        return types.iter().any(|t| t == "color")
            && matches!(hex.len(), 3 | 4 | 6 | 8)
            && hex.chars().all(|c| c.is_ascii_hexdigit());
    }
    if value.starts_with('?') {
        return value.len() > 1;
    }
    let Some(body) = value.strip_prefix('@') else {
        return false;
    };
    let body = body.strip_prefix("android:").unwrap_or(body);
    match body.split_once('/') {
        Some((ty, name)) => !name.is_empty() && types.iter().any(|t| t == ty),
        None => false,
    }
}

/// Whether `value` points at an app resource that has to exist, i.e. an
/// `@type/name` or `?attr/name` that is neither an id nor a framework
/// resource.
pub fn needs_resolution(value: &str) -> bool {
    if value == "@null" || value.starts_with("@+id/") || value.starts_with("@id/") {
        return false;
    }
    if value.starts_with("@android:") || value.starts_with("?android:") {
        return false;
    }
    (value.starts_with('@') || value.starts_with('?')) && value.len() > 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimensions_normalize_to_dp() {
        assert_eq!(parse_dimension("12dp"), Some(12.0));
        assert_eq!(parse_dimension("12dip"), Some(12.0));
        assert_eq!(parse_dimension("13.5sp"), Some(13.5));
        assert_eq!(parse_dimension("30px"), Some(10.0));
        assert_eq!(parse_dimension("1in"), Some(160.0));
        assert_eq!(parse_dimension("12"), None);
        assert_eq!(parse_dimension("dp"), None);
        assert_eq!(parse_dimension("1e3dp"), None);
    }

    #[test]
    fn flags_compare_as_sets() {
        let d = ValueDomain::Flags {
            values: vec![
                "center".into(),
                "center_vertical".into(),
                "center_horizontal".into(),
            ],
        };
        assert_eq!(
            d.parse("center_vertical|center_horizontal").unwrap(),
            d.parse("center_horizontal | center_vertical").unwrap()
        );
        assert_ne!(
            d.parse("center").unwrap(),
            d.parse("center_vertical|center_horizontal").unwrap()
        );
        assert!(d.parse("middle").is_err());
    }

    #[test]
    fn flag_enumeration_by_size() {
        let d = ValueDomain::Flags {
            values: vec!["a".into(), "b".into(), "c".into()],
        };
        assert_eq!(
            d.enumerate("", &[]),
            ["a", "b", "c", "a|b", "a|c", "b|c", "a|b|c"]
        );
    }

    #[test]
    fn dimension_enumeration_starts_with_keywords() {
        let d = ValueDomain::Dimension {
            keywords: vec!["wrap_content".into(), "match_parent".into()],
        };
        let vals = d.enumerate("match_parent", &[]);
        assert_eq!(&vals[..3], ["wrap_content", "match_parent", "0dp"]);
        assert_eq!(vals.last().unwrap(), "512dp");
    }

    #[test]
    fn references_check_type() {
        let d = ValueDomain::Reference {
            types: vec!["drawable".into(), "color".into()],
        };
        assert!(d.parse("@drawable/ic_play").is_ok());
        assert!(d.parse("?android:attr/actionBarItemBackground").is_ok());
        assert!(d.parse("#ff0000").is_ok());
        assert!(d.parse("@android:color/white").is_ok());
        assert!(d.parse("@string/title").is_err());
        assert!(d.parse("red").is_err());
        let registry = vec![
            "@string/title".to_string(),
            "@color/b".into(),
            "@color/a".into(),
        ];
        assert_eq!(
            d.enumerate("#fff", &registry),
            ["#fff", "@color/a", "@color/b"]
        );
    }

    #[test]
    fn resolution_needed_only_for_app_resources() {
        assert!(needs_resolution("@drawable/ic_play"));
        assert!(needs_resolution("?attr/selectableItemBackground"));
        assert!(!needs_resolution("?android:attr/actionBarItemBackground"));
        assert!(!needs_resolution("@+id/play"));
        assert!(!needs_resolution("12dp"));
    }
}
