//! Bioactivity measurements: parsing value strings, unit normalization and
//! cross-modality de-duplication.

use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use rust_decimal::prelude::ToPrimitive;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::join::normalize_coreference;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MeasureError {
    #[error("no bioactivity value found in {0:?}")]
    NoValueFound(String),
    #[error("unit is missing or ambiguous in {0:?}")]
    AmbiguousUnit(String),
    #[error("more than one value in {0:?}")]
    MultipleValues(String),
    #[error("no assay type in {0:?}")]
    MissingAssay(String),
    #[error("unit {0} is not a concentration")]
    NonConcentrationUnit(String),
    #[error("concentration values must be positive, got {0}")]
    NonPositive(Decimal),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum AssayType {
    IC50,
    EC50,
    Ki,
    Kd,
    Other(String),
}

impl From<String> for AssayType {
    fn from(s: String) -> Self {
        let compact: String = s.chars().filter(|c| !c.is_whitespace() && *c != '_').collect();
        match compact.to_ascii_lowercase().as_str() {
            "ic50" => AssayType::IC50,
            "ec50" => AssayType::EC50,
            "ki" => AssayType::Ki,
            "kd" => AssayType::Kd,
            _ => AssayType::Other(s.trim().to_string()),
        }
    }
}

impl From<AssayType> for String {
    fn from(a: AssayType) -> String {
        a.to_string()
    }
}

impl fmt::Display for AssayType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AssayType::IC50 => f.write_str("IC50"),
            AssayType::EC50 => f.write_str("EC50"),
            AssayType::Ki => f.write_str("Ki"),
            AssayType::Kd => f.write_str("Kd"),
            AssayType::Other(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub enum Relation {
    #[default]
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "<=", alias = "≤")]
    Le,
    #[serde(rename = ">=", alias = "≥")]
    Ge,
    #[serde(rename = "~")]
    Approx,
}

impl Relation {
    pub fn parse(token: &str) -> Option<Relation> {
        Some(match token.trim().to_lowercase().as_str() {
            "" | "=" => Relation::Eq,
            "<" => Relation::Lt,
            ">" => Relation::Gt,
            "<=" | "≤" | "=<" => Relation::Le,
            ">=" | "≥" | "=>" => Relation::Ge,
            "~" | "∼" | "≈" | "ca" | "ca." | "approx" | "approx." | "approximately" | "about" => Relation::Approx,
            _ => return None,
        })
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Eq => "=",
            Relation::Lt => "<",
            Relation::Gt => ">",
            Relation::Le => "<=",
            Relation::Ge => ">=",
            Relation::Approx => "~",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum Unit {
    NanoMolar,
    MicroMolar,
    MilliMolar,
    Molar,
    PercentInhibition,
    Other(String),
}

impl Unit {
    pub fn parse(token: &str) -> Unit {
        let t = token.trim();
        match t {
            "nM" | "nmol/L" | "nmol/l" => Unit::NanoMolar,
            "µM" | "μM" | "uM" | "µmol/L" | "μmol/L" | "umol/L" | "µmol/l" | "μmol/l" | "umol/l" => Unit::MicroMolar,
            "mM" | "mmol/L" | "mmol/l" => Unit::MilliMolar,
            "M" | "mol/L" | "mol/l" => Unit::Molar,
            _ if t.starts_with('%') => Unit::PercentInhibition,
            _ => Unit::Other(t.to_string()),
        }
    }

    /// Factor converting a value in this unit to nanomolar.
    pub fn nanomolar_factor(&self) -> Option<Decimal> {
        match self {
            Unit::NanoMolar => Some(Decimal::ONE),
            Unit::MicroMolar => Some(Decimal::from(1_000)),
            Unit::MilliMolar => Some(Decimal::from(1_000_000)),
            Unit::Molar => Some(Decimal::from(1_000_000_000)),
            _ => None,
        }
    }

    pub fn is_concentration(&self) -> bool {
        self.nanomolar_factor().is_some()
    }
}

impl From<String> for Unit {
    fn from(s: String) -> Self {
        Unit::parse(&s)
    }
}

impl From<Unit> for String {
    fn from(u: Unit) -> String {
        u.to_string()
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Unit::NanoMolar => f.write_str("nM"),
            Unit::MicroMolar => f.write_str("µM"),
            Unit::MilliMolar => f.write_str("mM"),
            Unit::Molar => f.write_str("M"),
            Unit::PercentInhibition => f.write_str("%inhibition"),
            Unit::Other(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Text,
    Table,
    Figure,
}

impl Modality {
    /// Lower wins when duplicates are merged.
    pub fn priority(self) -> u8 {
        match self {
            Modality::Table => 0,
            Modality::Text => 1,
            Modality::Figure => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Provenance {
    pub page: u32,
    pub region: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeBound {
    RangeLow,
    RangeHigh,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Measurement {
    pub protein: String,
    pub ligand_coreference: String,
    pub assay_type: AssayType,
    #[serde(default)]
    pub relation: Relation,
    pub value: Decimal,
    pub unit: Unit,
    pub modality: Modality,
    pub provenance: Vec<Provenance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncertainty: Option<Decimal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<RangeBound>,
}

impl Measurement {
    pub fn check(&self) -> Result<(), MeasureError> {
        if self.unit.is_concentration() && self.value <= Decimal::ZERO {
            return Err(MeasureError::NonPositive(self.value));
        }
        Ok(())
    }

    /// Value on the nanomolar scale, for concentration units.
    pub fn value_nm(&self) -> Option<Decimal> {
        self.unit.nanomolar_factor().and_then(|f| self.value.checked_mul(f)).map(|v| v.normalize())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedMeasurement {
    #[serde(flatten)]
    pub base: Measurement,
    #[serde(rename = "value_nM")]
    pub value_nm: Option<Decimal>,
    pub p_value: Option<f64>,
}

/// `9 - log10(value_nM)`, i.e. `-log10` of the molar value. Exact when the
/// value is a power of ten.
pub fn p_value(value_nm: Decimal) -> Option<f64> {
    if value_nm <= Decimal::ZERO {
        return None;
    }
    let v = value_nm.normalize();
    let (mut mantissa, scale) = (v.mantissa(), v.scale() as i64);
    let mut exp = 0i64;
    while mantissa % 10 == 0 {
        mantissa /= 10;
        exp += 1;
    }
    if mantissa == 1 {
        return Some((9 - (exp - scale)) as f64);
    }
    Some(9.0 - v.to_f64()?.log10())
}

/// Converts to the nanomolar scale; fails for non-concentration units.
pub fn normalize(m: &Measurement) -> Result<NormalizedMeasurement, MeasureError> {
    if !m.unit.is_concentration() {
        return Err(MeasureError::NonConcentrationUnit(m.unit.to_string()));
    }
    m.check()?;
    Ok(normalize_lenient(m))
}

/// Like [`normalize`] but keeps non-concentration measurements with no
/// nanomolar value.
pub fn normalize_lenient(m: &Measurement) -> NormalizedMeasurement {
    let value_nm = m.value_nm().filter(|v| *v > Decimal::ZERO);
    NormalizedMeasurement { base: m.clone(), value_nm, p_value: value_nm.and_then(p_value) }
}

/// The value part of a measurement string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedValue {
    pub assay_type: AssayType,
    pub relation: Relation,
    pub value: Decimal,
    pub unit: Unit,
    pub uncertainty: Option<Decimal>,
    /// Upper end when the source gives a range; `value` is then the lower end.
    pub upper: Option<Decimal>,
}

const UNIT: &str = r"nmol/[Ll]|[µμu]mol/[Ll]|mmol/[Ll]|mol/[Ll]|nM|[µμu]M|mM|pM|fM|M|%\s*inhibition|%";
const NUM: &str = r"(?:[0-9]+(?:\.[0-9]+)?|\.[0-9]+)(?:[eE][-+]?[0-9]+)?";

static VALUE_RE: LazyLock<Regex> = LazyLock::new(|| {
    let pattern = format!(
        r"(?x)
        (?: (?P<assay>\b(?:IC|EC|GI|CC|ED|LD|AC)\s?50\b | \bK[_\s]?[iIdD]\b) )?
        \s* (?:\(\s*(?P<unit1>{UNIT})\s*\))?
        \s* (?:\b(?:of|is|was|were|value)\b)?
        \s* :?
        \s* (?P<rel><=|>=|=<|=>|≤|≥|=|<|>|~|∼|≈|\bca\.?|\bapprox(?:\.|imately)?|\babout\b)?
        \s* (?P<val>{NUM})
        (?: \s* (?:±|\+/-|\+-) \s* (?P<unc>{NUM}) )?
        (?: \s* (?:–|—|-|\bto\b) \s* (?P<val2>{NUM}) )?
        \s* (?P<unit2>{UNIT})?"
    );
    Regex::new(&pattern).expect("value pattern compiles")
});

fn decimal(text: &str) -> Option<Decimal> {
    if text.contains(['e', 'E']) {
        Decimal::from_scientific(text).ok()
    } else {
        Decimal::from_str(text).ok()
    }
}

/// Parses strings such as `IC50 = 12.5 nM`, `Ki > 10 µM` or `IC50 (nM): 3.4`.
/// `default_assay` applies when the text itself names no assay type (for
/// example a table cell under an "IC50" header).
pub fn parse_measurement_text(raw: &str, default_assay: Option<&AssayType>) -> Result<ParsedValue, MeasureError> {
    let text = raw.trim();
    let mut found = Vec::new();
    for caps in VALUE_RE.captures_iter(text) {
        let unit_end = caps.name("unit2").map(|m| m.end());
        let unit2 = caps.name("unit2").filter(|_| {
            // a unit glued to letters ("10 Me") is not a unit
            unit_end.and_then(|e| text[e..].chars().next()).is_none_or(|c| !c.is_alphanumeric())
        });
        let has_context =
            caps.name("assay").is_some() || caps.name("unit1").is_some() || unit2.is_some() || caps.name("rel").is_some();
        if !has_context {
            continue;
        }
        found.push((caps.name("assay").map(|m| m.as_str().to_string()), caps.name("unit1").map(|m| m.as_str().to_string()), unit2.map(|m| m.as_str().to_string()), caps.name("rel").map(|m| m.as_str().to_string()), caps["val"].to_string(), caps.name("unc").map(|m| m.as_str().to_string()), caps.name("val2").map(|m| m.as_str().to_string())));
    }
    match found.len() {
        0 => return Err(MeasureError::NoValueFound(raw.to_string())),
        1 => {}
        _ => return Err(MeasureError::MultipleValues(raw.to_string())),
    }
    let (assay, unit1, unit2, rel, val, unc, val2) = found.pop().unwrap();
    let unit = match (unit1.map(|u| Unit::parse(&u)), unit2.map(|u| Unit::parse(&u))) {
        (Some(a), Some(b)) if a != b => return Err(MeasureError::AmbiguousUnit(raw.to_string())),
        (Some(a), _) | (None, Some(a)) => a,
        (None, None) => return Err(MeasureError::AmbiguousUnit(raw.to_string())),
    };
    let assay_type = match assay {
        Some(a) => AssayType::from(a),
        None => default_assay.cloned().ok_or_else(|| MeasureError::MissingAssay(raw.to_string()))?,
    };
    let relation = rel.as_deref().and_then(Relation::parse).unwrap_or_default();
    let value = decimal(&val).ok_or_else(|| MeasureError::NoValueFound(raw.to_string()))?;
    let upper = val2.as_deref().and_then(decimal);
    Ok(ParsedValue { assay_type, relation, value, unit, uncertainty: unc.as_deref().and_then(decimal), upper })
}

impl ParsedValue {
    /// Expands into measurements; a range becomes a low and a high record.
    pub fn into_measurements(
        self,
        protein: &str,
        ligand_coreference: &str,
        modality: Modality,
        provenance: Provenance,
    ) -> Vec<Measurement> {
        let make = |value: Decimal, range: Option<RangeBound>| Measurement {
            protein: protein.to_string(),
            ligand_coreference: ligand_coreference.to_string(),
            assay_type: self.assay_type.clone(),
            relation: self.relation,
            value,
            unit: self.unit.clone(),
            modality,
            provenance: vec![provenance.clone()],
            uncertainty: self.uncertainty,
            range,
        };
        match self.upper {
            Some(hi) => vec![make(self.value, Some(RangeBound::RangeLow)), make(hi, Some(RangeBound::RangeHigh))],
            None => vec![make(self.value, None)],
        }
    }
}

/// Relative tolerance for treating two values as the same measurement.
pub const DEDUP_REL_TOL: Decimal = Decimal::from_parts(1, 0, 0, false, 6);

fn values_agree(a: &Measurement, b: &Measurement) -> bool {
    let (x, y) = match (a.value_nm(), b.value_nm()) {
        (Some(x), Some(y)) => (x, y),
        (None, None) if a.unit == b.unit => (a.value, b.value),
        _ => return false,
    };
    let scale = x.abs().max(y.abs());
    (x - y).abs() <= DEDUP_REL_TOL * scale
}

/// True when two measurements describe the same reported value: same
/// normalized ligand key, same assay type and values within [`DEDUP_REL_TOL`].
pub fn is_duplicate(a: &Measurement, b: &Measurement) -> bool {
    a.assay_type == b.assay_type
        && normalize_coreference(&a.ligand_coreference) == normalize_coreference(&b.ligand_coreference)
        && values_agree(a, b)
}

/// Merges per-modality lists. Duplicates collapse onto the highest-priority
/// member (table, then text, then figure; input order within a modality),
/// which collects every member's provenance once.
pub fn merge_modalities(text: &[Measurement], table: &[Measurement], figure: &[Measurement]) -> Vec<Measurement> {
    let mut all: Vec<&Measurement> = table.iter().chain(text).chain(figure).collect();
    all.sort_by_key(|m| m.modality.priority());
    let mut out: Vec<Measurement> = Vec::new();
    for m in all {
        match out.iter_mut().find(|s| is_duplicate(s, m)) {
            Some(s) => {
                for p in &m.provenance {
                    if !s.provenance.contains(p) {
                        s.provenance.push(p.clone());
                    }
                }
            }
            None => out.push(m.clone()),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dec(s: &str) -> Decimal {
        Decimal::from_str(s).unwrap()
    }

    #[test]
    fn parses_common_forms() {
        let p = parse_measurement_text("IC50 = 12.5 nM", None).unwrap();
        assert_eq!((p.assay_type, p.relation, p.value, p.unit), (AssayType::IC50, Relation::Eq, dec("12.5"), Unit::NanoMolar));
        let p = parse_measurement_text("Ki > 10 µM", None).unwrap();
        assert_eq!((p.assay_type, p.relation, p.value, p.unit), (AssayType::Ki, Relation::Gt, dec("10"), Unit::MicroMolar));
        let p = parse_measurement_text("IC50 (nM): 3.4", None).unwrap();
        assert_eq!((p.value, p.unit), (dec("3.4"), Unit::NanoMolar));
        let p = parse_measurement_text("ca. 40 uM", Some(&AssayType::EC50)).unwrap();
        assert_eq!((p.assay_type, p.relation, p.unit), (AssayType::EC50, Relation::Approx, Unit::MicroMolar));
        let p = parse_measurement_text("Kd ≤ 0.5 μM", None).unwrap();
        assert_eq!((p.relation, p.unit), (Relation::Le, Unit::MicroMolar));
        let p = parse_measurement_text("IC50 = 12 ± 3 nM", None).unwrap();
        assert_eq!((p.value, p.uncertainty), (dec("12"), Some(dec("3"))));
        let p = parse_measurement_text("IC50 10–20 nM", None).unwrap();
        assert_eq!((p.value, p.upper), (dec("10"), Some(dec("20"))));
        let p = parse_measurement_text("45 % inhibition", Some(&AssayType::Other("inhibition".into()))).unwrap();
        assert_eq!(p.unit, Unit::PercentInhibition);
    }

    #[test]
    fn refuses_to_guess() {
        assert!(matches!(parse_measurement_text("inactive", None), Err(MeasureError::NoValueFound(_))));
        assert!(matches!(parse_measurement_text("IC50 = 12.5", None), Err(MeasureError::AmbiguousUnit(_))));
        assert!(matches!(parse_measurement_text("IC50 (nM): 3.4 µM", None), Err(MeasureError::AmbiguousUnit(_))));
        assert!(matches!(
            parse_measurement_text("IC50 = 5 nM, Ki = 3 nM", None),
            Err(MeasureError::MultipleValues(_))
        ));
        assert!(matches!(parse_measurement_text("= 5 nM", None), Err(MeasureError::MissingAssay(_))));
    }

    fn m(value: &str, unit: Unit) -> Measurement {
        Measurement {
            protein: "EGFR".into(),
            ligand_coreference: "12".into(),
            assay_type: AssayType::IC50,
            relation: Relation::Eq,
            value: dec(value),
            unit,
            modality: Modality::Text,
            provenance: vec![Provenance { page: 1, region: "p1".into() }],
            uncertainty: None,
            range: None,
        }
    }

    #[test]
    fn decade_conversion() {
        let n = normalize(&m("1000", Unit::NanoMolar)).unwrap();
        assert_eq!((n.value_nm, n.p_value), (Some(dec("1000")), Some(6.0)));
        let n = normalize(&m("1", Unit::MicroMolar)).unwrap();
        assert_eq!((n.value_nm, n.p_value), (Some(dec("1000")), Some(6.0)));
        assert!(matches!(normalize(&m("50", Unit::PercentInhibition)), Err(MeasureError::NonConcentrationUnit(_))));
        assert_eq!(p_value(dec("0.01")), Some(11.0));
        assert_eq!(p_value(dec("1")), Some(9.0));
    }

    #[test]
    fn merge_prefers_tables_and_keeps_provenance() {
        let mut table = m("5", Unit::NanoMolar);
        table.modality = Modality::Table;
        table.ligand_coreference = "12".into();
        let mut text = m("5", Unit::NanoMolar);
        text.ligand_coreference = "compound 12".into();
        text.provenance = vec![Provenance { page: 2, region: "t3".into() }];
        let merged = merge_modalities(&[text.clone()], &[table], &[]);
        assert_eq!(merged.len(), 1);
        assert_eq!(merged[0].modality, Modality::Table);
        assert_eq!(merged[0].provenance.len(), 2);

        let far = m("50", Unit::NanoMolar);
        assert_eq!(merge_modalities(&[text, far], &[], &[]).len(), 2);
        assert!(merge_modalities(&[], &[], &[]).is_empty());
    }

    #[test]
    fn serialized_field_names() {
        let n = normalize(&m("5", Unit::MicroMolar)).unwrap();
        let v = serde_json::to_value(&n).unwrap();
        let keys: std::collections::BTreeSet<_> = v.as_object().unwrap().keys().cloned().collect();
        let expected: std::collections::BTreeSet<String> = [
            "protein", "ligand_coreference", "assay_type", "relation", "value", "unit", "value_nM", "p_value", "modality",
            "provenance",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        assert_eq!(keys, expected);
        assert_eq!(v["unit"], "µM");
        assert_eq!(v["value_nM"], "5000");
        let back: NormalizedMeasurement = serde_json::from_value(v).unwrap();
        assert_eq!(back, n);
    }
}
