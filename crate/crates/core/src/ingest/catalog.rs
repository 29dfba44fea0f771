use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classes::{CoolingClass, PlantClass};
use crate::error::{Error, Result};

/// One power plant site from the catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteRecord {
    pub site_id: String,
    pub latitude: f64,
    pub longitude: f64,
    pub plant_class: PlantClass,
    pub cooling_class: Option<CoolingClass>,
}

impl SiteRecord {
    pub fn new(
        site_id: impl Into<String>,
        latitude: f64,
        longitude: f64,
        plant_class: PlantClass,
        cooling_class: Option<CoolingClass>,
    ) -> Result<Self> {
        let record = SiteRecord {
            site_id: site_id.into(),
            latitude,
            longitude,
            plant_class,
            cooling_class,
        };
        record.validate().map_err(|(field, message)| Error::CatalogRow {
            row: 0,
            field: field.to_string(),
            message,
        })?;
        Ok(record)
    }

    pub fn location(&self) -> (f64, f64) {
        (self.latitude, self.longitude)
    }

    fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        if self.site_id.trim().is_empty() {
            return Err(("site_id", "empty identifier".into()));
        }
        if !(-90.0..=90.0).contains(&self.latitude) {
            return Err(("latitude", format!("{} outside [-90, 90]", self.latitude)));
        }
        if !(-180.0..=180.0).contains(&self.longitude) {
            return Err(("longitude", format!("{} outside [-180, 180]", self.longitude)));
        }
        if self.cooling_class.is_some() && !self.plant_class.is_thermal() {
            return Err((
                "cooling_class",
                format!("non-thermal plant class {} cannot carry a cooling class", self.plant_class),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
struct CatalogRow {
    site_id: String,
    latitude: String,
    longitude: String,
    plant_class: String,
    #[serde(default)]
    cooling_class: Option<String>,
}

/// Reads a `site_id,latitude,longitude,plant_class,cooling_class` CSV.
///
/// All rows are validated before returning; every failure is reported with its
/// 1-based data row number (header excluded).
pub fn load_catalog(path: impl AsRef<Path>) -> Result<Vec<SiteRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_catalog(file)
}

pub fn parse_catalog(reader: impl std::io::Read) -> Result<Vec<SiteRecord>> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = csv
        .headers()
        .map_err(|e| Error::CatalogRow {
            row: 0,
            field: "header".into(),
            message: e.to_string(),
        })?
        .clone();
    for required in ["site_id", "latitude", "longitude", "plant_class", "cooling_class"] {
        if !headers.iter().any(|h| h == required) {
            return Err(Error::CatalogRow {
                row: 0,
                field: required.into(),
                message: "missing column".into(),
            });
        }
    }

    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, row) in csv.deserialize::<CatalogRow>().enumerate() {
        let row_no = i + 1;
        match row
            .map_err(|e| ("row", e.to_string()))
            .and_then(|r| convert_row(r))
        {
            Ok(record) => {
                if !seen.insert(record.site_id.clone()) {
                    failures.push(
                        Error::CatalogRow {
                            row: row_no,
                            field: "site_id".into(),
                            message: format!("duplicate identifier {:?}", record.site_id),
                        }
                        .to_string(),
                    );
                } else {
                    records.push(record);
                }
            }
            Err((field, message)) => failures.push(
                Error::CatalogRow {
                    row: row_no,
                    field: field.to_string(),
                    message,
                }
                .to_string(),
            ),
        }
    }
    if !failures.is_empty() {
        return Err(Error::Catalog(failures));
    }
    Ok(records)
}

fn convert_row(row: CatalogRow) -> std::result::Result<SiteRecord, (&'static str, String)> {
    let latitude = row
        .latitude
        .parse::<f64>()
        .map_err(|e| ("latitude", format!("{:?}: {e}", row.latitude)))?;
    let longitude = row
        .longitude
        .parse::<f64>()
        .map_err(|e| ("longitude", format!("{:?}: {e}", row.longitude)))?;
    let plant_class = row
        .plant_class
        .parse::<PlantClass>()
        .map_err(|e| ("plant_class", e.to_string()))?;
    let cooling_class = match row.cooling_class.as_deref().map(str::trim) {
        None | Some("") => None,
        Some(s) => Some(s.parse::<CoolingClass>().map_err(|e| ("cooling_class", e.to_string()))?),
    };
    let record = SiteRecord {
        site_id: row.site_id,
        latitude,
        longitude,
        plant_class,
        cooling_class,
    };
    record.validate()?;
    Ok(record)
}

/// Thermal sites with a recorded cooling class; plants without active or
/// passive cooling drop out.
pub fn cooling_sites(records: &[SiteRecord]) -> Vec<SiteRecord> {
    records
        .iter()
        .filter(|r| r.plant_class.is_thermal() && r.cooling_class.is_some())
        .cloned()
        .collect()
}

/// Writes records in the catalog CSV layout.
pub fn write_catalog(path: impl AsRef<Path>, records: &[SiteRecord]) -> Result<()> {
    let path = path.as_ref();
    let io = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(["site_id", "latitude", "longitude", "plant_class", "cooling_class"])
        .map_err(io)?;
    for r in records {
        w.write_record([
            r.site_id.clone(),
            r.latitude.to_string(),
            r.longitude.to_string(),
            r.plant_class.catalog_name().to_string(),
            r.cooling_class.map(|c| c.catalog_name().to_string()).unwrap_or_default(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
