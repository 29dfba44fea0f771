//! Class vocabularies for the two classification tasks.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Power plant types, in JRC Open Power Plants Database nomenclature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PlantClass {
    BrownCoal,
    Gas,
    HardCoal,
    Oil,
    HydroPumpedStorage,
    HydroRunOfRiver,
    HydroReservoir,
    Nuclear,
    Solar,
    WindOnshore,
}

impl PlantClass {
    pub const ALL: [PlantClass; 10] = [
        PlantClass::BrownCoal,
        PlantClass::Gas,
        PlantClass::HardCoal,
        PlantClass::Oil,
        PlantClass::HydroPumpedStorage,
        PlantClass::HydroRunOfRiver,
        PlantClass::HydroReservoir,
        PlantClass::Nuclear,
        PlantClass::Solar,
        PlantClass::WindOnshore,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Fossil fuel and nuclear plants, the ones that carry a cooling type.
    pub fn is_thermal(self) -> bool {
        matches!(
            self,
            PlantClass::BrownCoal
                | PlantClass::Gas
                | PlantClass::HardCoal
                | PlantClass::Oil
                | PlantClass::Nuclear
        )
    }

    /// The database label, e.g. `Fossil Brown coal/Lignite`.
    pub fn catalog_name(self) -> &'static str {
        match self {
            PlantClass::BrownCoal => "Fossil Brown coal/Lignite",
            PlantClass::Gas => "Fossil Gas",
            PlantClass::HardCoal => "Fossil Hard coal",
            PlantClass::Oil => "Fossil Oil",
            PlantClass::HydroPumpedStorage => "Hydro Pumped Storage",
            PlantClass::HydroRunOfRiver => "Hydro Run-of-river and poundage",
            PlantClass::HydroReservoir => "Hydro Water Reservoir",
            PlantClass::Nuclear => "Nuclear",
            PlantClass::Solar => "Solar",
            PlantClass::WindOnshore => "Wind Onshore",
        }
    }

    /// Short display name used in reports and figures.
    pub fn short_name(self) -> &'static str {
        match self {
            PlantClass::BrownCoal => "Brown Coal",
            PlantClass::Gas => "Gas",
            PlantClass::HardCoal => "Hard Coal",
            PlantClass::Oil => "Oil",
            PlantClass::HydroPumpedStorage => "Pumped Storage",
            PlantClass::HydroRunOfRiver => "Run-of-River",
            PlantClass::HydroReservoir => "Reservoir",
            PlantClass::Nuclear => "Nuclear",
            PlantClass::Solar => "Solar",
            PlantClass::WindOnshore => "Wind Onshore",
        }
    }
}

impl fmt::Display for PlantClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

fn normalize_key(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .flat_map(|c| c.to_lowercase())
        .collect()
}

impl FromStr for PlantClass {
    type Err = Error;

    /// Accepts database labels, short names and enum identifiers,
    /// case- and punctuation-insensitively.
    fn from_str(s: &str) -> Result<Self> {
        let key = normalize_key(s);
        PlantClass::ALL
            .into_iter()
            .find(|c| {
                key == normalize_key(c.catalog_name())
                    || key == normalize_key(c.short_name())
                    || key == normalize_key(&format!("{c:?}"))
            })
            .ok_or_else(|| Error::UnknownClass {
                kind: "plant",
                value: s.to_string(),
            })
    }
}

/// Cooling mechanisms of thermal plants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CoolingClass {
    AirCooling,
    MechanicalDraftTower,
    NaturalDraftTower,
    OnceThrough,
}

impl CoolingClass {
    pub const ALL: [CoolingClass; 4] = [
        CoolingClass::AirCooling,
        CoolingClass::MechanicalDraftTower,
        CoolingClass::NaturalDraftTower,
        CoolingClass::OnceThrough,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn catalog_name(self) -> &'static str {
        match self {
            CoolingClass::AirCooling => "air cooling",
            CoolingClass::MechanicalDraftTower => "mechanical draft tower",
            CoolingClass::NaturalDraftTower => "natural draft tower",
            CoolingClass::OnceThrough => "once-through cooling",
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            CoolingClass::AirCooling => "Air",
            CoolingClass::MechanicalDraftTower => "Mechanical Draft",
            CoolingClass::NaturalDraftTower => "Natural Draft",
            CoolingClass::OnceThrough => "Once-Through",
        }
    }
}

impl fmt::Display for CoolingClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for CoolingClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = normalize_key(s);
        let found = CoolingClass::ALL.into_iter().find(|c| {
            key == normalize_key(c.catalog_name())
                || key == normalize_key(c.short_name())
                || key == normalize_key(&format!("{c:?}"))
        });
        // "once-through" without the trailing "cooling" is common in the database
        found
            .or_else(|| (key == "oncethrough").then_some(CoolingClass::OnceThrough))
            .ok_or_else(|| Error::UnknownClass {
                kind: "cooling",
                value: s.to_string(),
            })
    }
}

/// Which classification problem a dataset or model addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Ten plant types plus a background class.
    #[serde(rename = "plant_11")]
    Plant,
    /// Four cooling mechanisms of thermal plants.
    #[serde(rename = "cooling_4")]
    Cooling,
}

impl Task {
    pub fn num_classes(self) -> usize {
        match self {
            Task::Plant => 11,
            Task::Cooling => 4,
        }
    }

    pub fn label_map(self) -> LabelMap {
        match self {
            Task::Plant => LabelMap::plant(),
            Task::Cooling => LabelMap::cooling(),
        }
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "plant" | "plant_11" => Ok(Task::Plant),
            "cooling" | "cooling_4" => Ok(Task::Cooling),
            other => Err(Error::Invalid(format!("unknown task {other:?}"))),
        }
    }
}

pub const BACKGROUND: &str = "Background";

/// Bidirectional mapping between class names and contiguous label indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    names: Vec<String>,
}

impl LabelMap {
    pub fn new(names: Vec<String>) -> Self {
        Self { names }
    }

    /// Plant classes in enum order followed by `Background` at index 10.
    pub fn plant() -> Self {
        let mut names: Vec<String> = PlantClass::ALL
            .iter()
            .map(|c| c.short_name().to_string())
            .collect();
        names.push(BACKGROUND.to_string());
        Self { names }
    }

    pub fn cooling() -> Self {
        Self {
            names: CoolingClass::ALL
                .iter()
                .map(|c| c.short_name().to_string())
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}
