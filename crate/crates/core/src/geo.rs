//! Geographic primitives: validated coordinates, great-circle distance, and
//! a uniform grid index for fixed-radius neighbor queries.
//!
//! All edge construction in the network layer runs through
//! [`SpatialGrid::radius_query`], so the grid's contract is strict: a query
//! returns exactly the points within the closed ball of the given radius,
//! and inspects no cells beyond `ceil(radius / cell_km) + 1` rings around
//! the query cell.

use std::collections::HashMap;
use thiserror::Error;

/// IUGG mean Earth radius. Fixed so distances are identical across builds.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Kilometers per degree of latitude on the reference sphere.
const KM_PER_DEG_LAT: f64 = EARTH_RADIUS_KM * std::f64::consts::PI / 180.0;

/// The grid scales longitude cells by cos(reference latitude); beyond this
/// latitude the scaling degrades and the ring bound of `radius_query` no
/// longer guarantees completeness, so such datasets are rejected outright.
const MAX_SUPPORTED_ABS_LAT: f64 = 85.0;

#[derive(Debug, Error, PartialEq)]
pub enum GeoError {
    #[error("latitude {0} outside [-90, 90]")]
    LatitudeOutOfRange(f64),
    #[error("longitude {0} outside [-180, 180]")]
    LongitudeOutOfRange(f64),
    #[error("grid cell size must be positive, got {0}")]
    CellSizeNotPositive(f64),
    #[error("point set spans {0} degrees of longitude; boxes reaching across the antimeridian are unsupported")]
    BoundingBoxCrossesAntimeridian(f64),
    #[error("latitude {0} is outside the supported band (|lat| <= 85)")]
    LatitudeBeyondSupported(f64),
}

/// A point on the reference sphere, in degrees. Construction validates the
/// coordinate ranges, so a held `GeoPoint` is always usable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

impl GeoPoint {
    pub fn new(lat_deg: f64, lon_deg: f64) -> Result<Self, GeoError> {
        if !(-90.0..=90.0).contains(&lat_deg) {
            return Err(GeoError::LatitudeOutOfRange(lat_deg));
        }
        if !(-180.0..=180.0).contains(&lon_deg) {
            return Err(GeoError::LongitudeOutOfRange(lon_deg));
        }
        Ok(GeoPoint { lat: lat_deg, lon: lon_deg })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }
}

/// Great-circle distance in kilometers (haversine form, numerically stable
/// for the short distances dominating edge construction).
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let half_dphi = (phi2 - phi1) / 2.0;
    let half_dlam = (b.lon - a.lon).to_radians() / 2.0;
    let h = half_dphi.sin().powi(2) + phi1.cos() * phi2.cos() * half_dlam.sin().powi(2);
    // h can exceed 1 by rounding for antipodal points
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Uniform grid over (lat, lon) with cells approximately `cell_km` square at
/// the dataset's mid latitude. Immutable after construction; queries are pure.
#[derive(Debug, Clone)]
pub struct SpatialGrid {
    cell_km: f64,
    lat_step_deg: f64,
    lon_step_deg: f64,
    cells: HashMap<(i64, i64), Vec<(u32, GeoPoint)>>,
    len: usize,
}

impl SpatialGrid {
    /// Builds the grid. Rejects non-positive cell sizes, datasets reaching
    /// past |lat| = 85, and point sets spanning more than 180 degrees of
    /// longitude (wrap-around would make cell indexing ambiguous).
    pub fn build(points: &[(u32, GeoPoint)], cell_km: f64) -> Result<Self, GeoError> {
        if !(cell_km > 0.0) {
            return Err(GeoError::CellSizeNotPositive(cell_km));
        }
        let mut ref_lat = 0.0;
        if !points.is_empty() {
            let (mut lat_min, mut lat_max) = (f64::INFINITY, f64::NEG_INFINITY);
            let (mut lon_min, mut lon_max) = (f64::INFINITY, f64::NEG_INFINITY);
            for (_, p) in points {
                lat_min = lat_min.min(p.lat);
                lat_max = lat_max.max(p.lat);
                lon_min = lon_min.min(p.lon);
                lon_max = lon_max.max(p.lon);
            }
            if lat_min.abs() > MAX_SUPPORTED_ABS_LAT || lat_max.abs() > MAX_SUPPORTED_ABS_LAT {
                let worst = if lat_min.abs() > lat_max.abs() { lat_min } else { lat_max };
                return Err(GeoError::LatitudeBeyondSupported(worst));
            }
            if lon_max - lon_min > 180.0 {
                return Err(GeoError::BoundingBoxCrossesAntimeridian(lon_max - lon_min));
            }
            ref_lat = (lat_min + lat_max) / 2.0;
        }
        let lat_step_deg = cell_km / KM_PER_DEG_LAT;
        let lon_step_deg = cell_km / (KM_PER_DEG_LAT * ref_lat.to_radians().cos());
        let mut cells: HashMap<(i64, i64), Vec<(u32, GeoPoint)>> = HashMap::new();
        for &(id, p) in points {
            let key = (
                (p.lat / lat_step_deg).floor() as i64,
                (p.lon / lon_step_deg).floor() as i64,
            );
            cells.entry(key).or_default().push((id, p));
        }
        Ok(SpatialGrid { cell_km, lat_step_deg, lon_step_deg, cells, len: points.len() })
    }

    /// Number of stored points (duplicates included).
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Number of occupied cells.
    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    /// Ids of all stored points within `radius_km` of `center` (closed ball:
    /// a point at exactly the radius is included). Result is sorted and
    /// deduplicated. A negative radius yields an empty result.
    pub fn radius_query(&self, center: GeoPoint, radius_km: f64) -> Vec<u32> {
        if radius_km < 0.0 || self.len == 0 {
            return Vec::new();
        }
        let rings = (radius_km / self.cell_km).ceil() as i64 + 1;
        let row0 = (center.lat / self.lat_step_deg).floor() as i64;
        let col0 = (center.lon / self.lon_step_deg).floor() as i64;
        let mut out = Vec::new();
        for row in (row0 - rings)..=(row0 + rings) {
            for col in (col0 - rings)..=(col0 + rings) {
                let Some(bucket) = self.cells.get(&(row, col)) else { continue };
                for &(id, p) in bucket {
                    if haversine_km(center, p) <= radius_km {
                        out.push(id);
                    }
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}
