//! Field schema: the extraction targets, their categories, value kinds, and
//! units. The built-in schema covers the 17 hydropower licensing fields; a
//! JSON manifest can swap in a different field set for other document domains.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The six functional groupings of the built-in schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FieldCategory {
    Basic,
    Flow,
    Elevation,
    Capacity,
    Storage,
    Environment,
}

impl FieldCategory {
    /// All categories in canonical order (the order prompts and reports use).
    pub const ALL: [FieldCategory; 6] = [
        FieldCategory::Basic,
        FieldCategory::Flow,
        FieldCategory::Elevation,
        FieldCategory::Capacity,
        FieldCategory::Storage,
        FieldCategory::Environment,
    ];

    /// Short name used in tables, e.g. `Basic`.
    pub fn short_name(&self) -> &'static str {
        match self {
            FieldCategory::Basic => "Basic",
            FieldCategory::Flow => "Flow",
            FieldCategory::Elevation => "Elevation",
            FieldCategory::Capacity => "Capacity",
            FieldCategory::Storage => "Storage",
            FieldCategory::Environment => "Environment",
        }
    }

    /// Long label used in prompts, e.g. `Basic Information`.
    pub fn label(&self) -> &'static str {
        match self {
            FieldCategory::Basic => "Basic Information",
            FieldCategory::Flow => "Flow Information",
            FieldCategory::Elevation => "Elevation Information",
            FieldCategory::Capacity => "Capacity Information",
            FieldCategory::Storage => "Storage Information",
            FieldCategory::Environment => "Environmental Information",
        }
    }
}

impl std::fmt::Display for FieldCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.short_name())
    }
}

/// Whether a field holds free text or a numeric quantity with a unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    FreeText,
    NumericQuantity,
}

/// One extraction target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    pub category: FieldCategory,
    pub description: String,
    pub value_kind: ValueKind,
    /// Canonical unit symbol for numeric fields (`cfs`, `ft`, `MW`, `MWh`,
    /// `acre-feet`); `None` for free-text fields.
    #[serde(default)]
    pub unit: Option<String>,
}

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("schema manifest is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("schema manifest is empty")]
    Empty,
    #[error("duplicate field name in schema: {0}")]
    DuplicateField(String),
    #[error("failed to read schema manifest {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Ordered list of field specs. Order is significant: prompts, reports, and
/// result files all follow it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schema {
    pub fields: Vec<FieldSpec>,
}

impl Schema {
    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn field(&self, name: &str) -> Option<&FieldSpec> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn field_names(&self) -> impl Iterator<Item = &str> {
        self.fields.iter().map(|f| f.name.as_str())
    }

    /// Fields of one category, in schema order.
    pub fn fields_in_category(&self, category: FieldCategory) -> Vec<&FieldSpec> {
        self.fields.iter().filter(|f| f.category == category).collect()
    }

    /// Parse a schema manifest (JSON array of field objects).
    pub fn from_manifest_json(json: &str) -> Result<Schema, SchemaError> {
        let schema: Schema = serde_json::from_str(json)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn load_manifest(path: &std::path::Path) -> Result<Schema, SchemaError> {
        let json = std::fs::read_to_string(path).map_err(|source| SchemaError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Schema::from_manifest_json(&json)
    }

    pub fn to_manifest_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("schema serializes");
        s.push('\n');
        s
    }

    fn validate(&self) -> Result<(), SchemaError> {
        if self.fields.is_empty() {
            return Err(SchemaError::Empty);
        }
        let mut seen = std::collections::HashSet::new();
        for f in &self.fields {
            if !seen.insert(f.name.as_str()) {
                return Err(SchemaError::DuplicateField(f.name.clone()));
            }
        }
        Ok(())
    }
}

fn spec(
    name: &str,
    category: FieldCategory,
    description: &str,
    value_kind: ValueKind,
    unit: Option<&str>,
) -> FieldSpec {
    FieldSpec {
        name: name.to_string(),
        category,
        description: description.to_string(),
        value_kind,
        unit: unit.map(str::to_string),
    }
}

/// The built-in 17-field hydropower licensing schema.
pub fn builtin_schema() -> Schema {
    use FieldCategory::*;
    use ValueKind::*;
    Schema {
        fields: vec![
            spec(
                "Dam_Name",
                Basic,
                "The official name of the dam, structure, or project.",
                FreeText,
                None,
            ),
            spec(
                "Location",
                Basic,
                "The general location of the project, including city, state, and river.",
                FreeText,
                None,
            ),
            spec(
                "County",
                Basic,
                "The name(s) of the county or counties in which the project is located.",
                FreeText,
                None,
            ),
            spec(
                "Primary_Purpose",
                Basic,
                "The principal function of the project, such as hydropower generation, \
                 flood control, irrigation, or recreation.",
                FreeText,
                None,
            ),
            spec(
                "Minimum_Flow",
                Flow,
                "The mandated minimum flow rate (typically in cubic feet per second, cfs) \
                 that must be maintained.",
                NumericQuantity,
                Some("cfs"),
            ),
            spec(
                "Annual_Flow_Peak",
                Flow,
                "The maximum flow recorded over the course of a year (cfs).",
                NumericQuantity,
                Some("cfs"),
            ),
            spec(
                "Annual_Flow_Mean",
                Flow,
                "The mean annual flow rate (cfs).",
                NumericQuantity,
                Some("cfs"),
            ),
            spec(
                "Spillway_Maximum_Discharge_Flow",
                Flow,
                "The maximum discharge capacity of the spillway (cfs).",
                NumericQuantity,
                Some("cfs"),
            ),
            spec(
                "Maximum_Pool_Elevation",
                Elevation,
                "The highest allowable elevation of the pool or reservoir (in feet).",
                NumericQuantity,
                Some("ft"),
            ),
            spec(
                "Normal_Maximum_Operating_Pool_Level",
                Elevation,
                "The normal upper operating level under standard conditions (feet).",
                NumericQuantity,
                Some("ft"),
            ),
            spec(
                "Maximum_Operating_Pool_Level",
                Elevation,
                "The highest elevation at which the project may operate (feet).",
                NumericQuantity,
                Some("ft"),
            ),
            spec(
                "Minimum_Pool_Elevation",
                Elevation,
                "The lowest allowable pool elevation (feet).",
                NumericQuantity,
                Some("ft"),
            ),
            spec(
                "Power_Head",
                Elevation,
                "The effective vertical drop (head) driving the turbines (feet).",
                NumericQuantity,
                Some("ft"),
            ),
            spec(
                "Power_Capacity",
                Capacity,
                "The total installed generating capacity of the facility (in megawatts, MW).",
                NumericQuantity,
                Some("MW"),
            ),
            spec(
                "Energy_Output",
                Capacity,
                "The annual energy output or generation (in megawatt-hours, MWh).",
                NumericQuantity,
                Some("MWh"),
            ),
            spec(
                "Usable_Storage_Volume",
                Storage,
                "The volume of reservoir storage that is actively used for power generation \
                 or other operational purposes (acre-feet).",
                NumericQuantity,
                Some("acre-feet"),
            ),
            spec(
                "Stream_Temperature",
                Environment,
                "Information related to stream temperature targets, thresholds, or control \
                 strategies.",
                FreeText,
                None,
            ),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_has_17_fields() {
        assert_eq!(builtin_schema().len(), 17);
    }

    #[test]
    fn category_sizes() {
        let schema = builtin_schema();
        let sizes: Vec<usize> = FieldCategory::ALL
            .iter()
            .map(|c| schema.fields_in_category(*c).len())
            .collect();
        assert_eq!(sizes, vec![4, 4, 5, 2, 1, 1]);
    }

    #[test]
    fn categories_partition_fields() {
        let schema = builtin_schema();
        let mut seen = Vec::new();
        for cat in FieldCategory::ALL {
            for f in schema.fields_in_category(cat) {
                seen.push(f.name.clone());
            }
        }
        seen.sort();
        let mut all: Vec<String> = schema.field_names().map(str::to_string).collect();
        all.sort();
        assert_eq!(seen, all);
        assert_eq!(seen.len(), 17);
    }

    #[test]
    fn ordering_and_boundary_fields() {
        let schema = builtin_schema();
        assert_eq!(schema.fields[0].name, "Dam_Name");
        assert_eq!(schema.fields[16].name, "Stream_Temperature");
    }

    #[test]
    fn storage_category_is_singleton() {
        let schema = builtin_schema();
        let storage = schema.fields_in_category(FieldCategory::Storage);
        assert_eq!(storage.len(), 1);
        assert_eq!(storage[0].name, "Usable_Storage_Volume");
    }

    #[test]
    fn basic_category_listing() {
        let schema = builtin_schema();
        let names: Vec<&str> = schema
            .fields_in_category(FieldCategory::Basic)
            .iter()
            .map(|f| f.name.as_str())
            .collect();
        assert_eq!(names, vec!["Dam_Name", "Location", "County", "Primary_Purpose"]);
    }

    #[test]
    fn units_follow_category_conventions() {
        let schema = builtin_schema();
        assert_eq!(schema.field("Minimum_Flow").unwrap().unit.as_deref(), Some("cfs"));
        for f in schema.fields_in_category(FieldCategory::Flow) {
            assert_eq!(f.unit.as_deref(), Some("cfs"));
        }
        for f in schema.fields_in_category(FieldCategory::Elevation) {
            assert_eq!(f.unit.as_deref(), Some("ft"));
        }
        assert_eq!(schema.field("Power_Capacity").unwrap().unit.as_deref(), Some("MW"));
        assert_eq!(schema.field("Energy_Output").unwrap().unit.as_deref(), Some("MWh"));
        assert_eq!(
            schema.field("Usable_Storage_Volume").unwrap().unit.as_deref(),
            Some("acre-feet")
        );
    }

    #[test]
    fn value_kinds() {
        let schema = builtin_schema();
        let free_text = ["Dam_Name", "Location", "County", "Primary_Purpose", "Stream_Temperature"];
        for f in &schema.fields {
            let expected = if free_text.contains(&f.name.as_str()) {
                ValueKind::FreeText
            } else {
                ValueKind::NumericQuantity
            };
            assert_eq!(f.value_kind, expected, "{}", f.name);
        }
        // Stream_Temperature is the only unit-less non-quantity outside Basic.
        assert!(schema.field("Stream_Temperature").unwrap().unit.is_none());
    }

    #[test]
    fn manifest_round_trip() {
        let schema = builtin_schema();
        let json = schema.to_manifest_json();
        let back = Schema::from_manifest_json(&json).unwrap();
        assert_eq!(back, schema);
    }

    #[test]
    fn manifest_rejects_duplicates() {
        let json = r#"[
            {"name":"A","category":"Basic","description":"a","value_kind":"free_text"},
            {"name":"A","category":"Flow","description":"b","value_kind":"numeric_quantity","unit":"cfs"}
        ]"#;
        assert!(matches!(
            Schema::from_manifest_json(json),
            Err(SchemaError::DuplicateField(_))
        ));
    }

    #[test]
    fn manifest_rejects_empty() {
        assert!(matches!(Schema::from_manifest_json("[]"), Err(SchemaError::Empty)));
    }
}
