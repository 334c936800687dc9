use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct City {
    pub name: String,
    pub latitude: f64,
    pub longitude: f64,
    pub population: u64,
}

/// Cities sorted by population (descending), ties by name.
#[derive(Debug, Clone, PartialEq)]
pub struct CityTable {
    pub cities: Vec<City>,
    /// Set when the file held fewer than the requested number of rows.
    pub short: bool,
}

impl CityTable {
    /// `(latitude, longitude)` per city, in table order.
    pub fn coordinates(&self) -> ndarray::Array2<f64> {
        ndarray::Array2::from_shape_fn((self.cities.len(), 2), |(i, c)| {
            let city = &self.cities[i];
            if c == 0 { city.latitude } else { city.longitude }
        })
    }

    pub fn names(&self) -> Vec<String> {
        self.cities.iter().map(|c| c.name.clone()).collect()
    }
}

#[derive(Deserialize)]
struct Row {
    name: String,
    latitude: f64,
    longitude: f64,
    population: u64,
}

/// Reads a `name,latitude,longitude,population` CSV and keeps the `top_k`
/// most populated rows.
pub fn load_cities(path: &Path, top_k: usize) -> Result<CityTable> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    for column in ["name", "latitude", "longitude", "population"] {
        if !headers.iter().any(|h| h == column) {
            return Err(Error::Format(format!("city table lacks a `{column}` column")));
        }
    }
    let mut cities = Vec::new();
    for (i, row) in reader.deserialize::<Row>().enumerate() {
        // header is line 1
        let line = i + 2;
        let row = row.map_err(|e| Error::CityRecord { line, reason: e.to_string() })?;
        let reason = if !(-90.0..=90.0).contains(&row.latitude) {
            Some(format!("latitude {} outside [-90, 90]", row.latitude))
        } else if !(-180.0..=180.0).contains(&row.longitude) {
            Some(format!("longitude {} outside [-180, 180]", row.longitude))
        } else if row.population == 0 {
            Some("population must be positive".to_string())
        } else {
            None
        };
        if let Some(reason) = reason {
            return Err(Error::CityRecord { line, reason });
        }
        cities.push(City { name: row.name, latitude: row.latitude, longitude: row.longitude, population: row.population });
    }
    cities.sort_by(|a, b| b.population.cmp(&a.population).then_with(|| a.name.cmp(&b.name)));
    let short = cities.len() < top_k;
    cities.truncate(top_k);
    Ok(CityTable { cities, short })
}

/// Compass octant of one city relative to another.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u32)]
pub enum Octant {
    N = 0,
    NE = 1,
    E = 2,
    SE = 3,
    S = 4,
    SW = 5,
    W = 6,
    NW = 7,
}

impl Octant {
    pub const ALL: [Octant; 8] = [Octant::N, Octant::NE, Octant::E, Octant::SE, Octant::S, Octant::SW, Octant::W, Octant::NW];

    pub fn from_index(i: usize) -> Octant {
        Octant::ALL[i % 8]
    }

    /// Sector containing a bearing (degrees clockwise from north). Sectors
    /// are half-open, `[center − 22.5°, center + 22.5°)`.
    pub fn from_bearing(degrees: f64) -> Octant {
        // Snap so that exact boundaries are not pushed back by rounding
        // noise from atan2.
        let snapped = (degrees * 1e9).round() / 1e9;
        let sector = ((snapped + 22.5) / 45.0).floor() as i64;
        Octant::from_index(sector.rem_euclid(8) as usize)
    }

    pub fn opposite(self) -> Octant {
        Octant::from_index(self as usize + 4)
    }

    pub fn name(self) -> &'static str {
        ["N", "NE", "E", "SE", "S", "SW", "W", "NW"][self as usize]
    }
}

/// Bearing of `b` seen from `a` on the flat lat/lon plane, in degrees.
pub fn bearing_degrees(a: &City, b: &City) -> f64 {
    (b.longitude - a.longitude).atan2(b.latitude - a.latitude).to_degrees()
}

pub fn bearing_label(a: &City, b: &City) -> Result<Octant> {
    if a.latitude == b.latitude && a.longitude == b.longitude {
        return Err(Error::InvalidParameter(format!("cities `{}` and `{}` share coordinates", a.name, b.name)));
    }
    Ok(Octant::from_bearing(bearing_degrees(a, b)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn city(lat: f64, lon: f64) -> City {
        City { name: String::new(), latitude: lat, longitude: lon, population: 1 }
    }

    fn csv_file(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    #[test]
    fn sector_centers() {
        let o = city(0.0, 0.0);
        assert_eq!(bearing_label(&o, &city(1.0, 0.0)).unwrap(), Octant::N);
        assert_eq!(bearing_label(&o, &city(1.0, 1.0)).unwrap(), Octant::NE);
        assert_eq!(bearing_label(&o, &city(0.0, 1.0)).unwrap(), Octant::E);
        assert_eq!(bearing_label(&o, &city(-1.0, -1.0)).unwrap(), Octant::SW);
        assert_eq!(bearing_label(&o, &city(-1.0, 0.0)).unwrap(), Octant::S);
        assert!(bearing_label(&o, &city(0.0, 0.0)).is_err());
    }

    #[test]
    fn bearing_sweep_matches_closed_form_sectors() {
        // 3600 bearings at 0.1° spacing; boundaries land clockwise-next.
        for t in 0..3600 {
            let deg = t as f64 / 10.0 - 180.0;
            let expected = (((t as i64 - 1800 + 225).div_euclid(450)).rem_euclid(8)) as usize;
            let rad = deg.to_radians();
            let b = city(rad.cos(), rad.sin());
            assert_eq!(bearing_label(&city(0.0, 0.0), &b).unwrap() as usize, expected, "bearing {deg}");
        }
    }

    #[test]
    fn loads_top_k_with_name_tiebreak() {
        let f = csv_file("name,latitude,longitude,population\nB,1,1,50\nA,2,2,50\nC,3,3,900\n");
        let t = load_cities(f.path(), 2).unwrap();
        assert_eq!(t.cities.iter().map(|c| c.name.as_str()).collect::<Vec<_>>(), ["C", "A"]);
        assert!(!t.short);
        assert!(load_cities(f.path(), 5).unwrap().short);
    }

    #[test]
    fn rejects_bad_rows_and_columns() {
        let f = csv_file("name,latitude,longitude,population\nX,95.0,1,5\n");
        match load_cities(f.path(), 1) {
            Err(Error::CityRecord { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        let f = csv_file("name,lat,longitude,population\nX,5.0,1,5\n");
        assert!(matches!(load_cities(f.path(), 1), Err(Error::Format(_))));
    }
}
