use crate::error::{OdpError, Result};

/// Mean Earth radius used for all great-circle distances.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Rectangular partition of a bounding box into `rows × cols` cells, plus
/// the slot length used to bucket requests in time.
///
/// Grid IDs run row-major from the top-left cell: row 0 is the northern
/// edge, column 0 the western edge.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lng_min: f64,
    pub lng_max: f64,
    pub rows: usize,
    pub cols: usize,
    pub slot_hours: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutOfBounds;

impl std::fmt::Display for OutOfBounds {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("point outside the grid bounds")
    }
}

impl std::error::Error for OutOfBounds {}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lng_min: f64,
    pub lng_max: f64,
}

impl GridSpec {
    pub fn build(bounds: Bounds, rows: usize, cols: usize, slot_hours: u32) -> Result<Self> {
        let Bounds {
            lat_min,
            lat_max,
            lng_min,
            lng_max,
        } = bounds;
        let finite = [lat_min, lat_max, lng_min, lng_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || lat_min >= lat_max || lng_min >= lng_max {
            return Err(OdpError::config(format!(
                "invalid bounds lat [{lat_min}, {lat_max}] lng [{lng_min}, {lng_max}]"
            )));
        }
        if lat_min < -90.0 || lat_max > 90.0 || lng_min < -180.0 || lng_max > 180.0 {
            return Err(OdpError::config("bounds exceed valid coordinate ranges"));
        }
        if rows == 0 || cols == 0 {
            return Err(OdpError::config("rows and cols must be at least 1"));
        }
        if slot_hours == 0 || 24 % slot_hours != 0 {
            return Err(OdpError::config(format!(
                "slot_hours={slot_hours} must divide 24"
            )));
        }
        Ok(GridSpec {
            lat_min,
            lat_max,
            lng_min,
            lng_max,
            rows,
            cols,
            slot_hours,
        })
    }

    pub fn bounds(&self) -> Bounds {
        Bounds {
            lat_min: self.lat_min,
            lat_max: self.lat_max,
            lng_min: self.lng_min,
            lng_max: self.lng_max,
        }
    }

    pub fn n(&self) -> usize {
        self.rows * self.cols
    }

    /// Slots per day, `l = 24 / t_n`.
    pub fn slots_per_day(&self) -> usize {
        (24 / self.slot_hours) as usize
    }

    pub fn cell_height_deg(&self) -> f64 {
        (self.lat_max - self.lat_min) / self.rows as f64
    }

    pub fn cell_width_deg(&self) -> f64 {
        (self.lng_max - self.lng_min) / self.cols as f64
    }

    /// Grid containing `(lat, lng)`.
    ///
    /// Cells are half-open: a point on an interior boundary goes to the
    /// neighbor with the larger index. The outer rectangle is closed, so the
    /// southern and eastern map edges fold into the last row and column.
    pub fn locate(&self, lat: f64, lng: f64) -> Result<usize, OutOfBounds> {
        if !(lat >= self.lat_min && lat <= self.lat_max && lng >= self.lng_min && lng <= self.lng_max)
        {
            return Err(OutOfBounds);
        }
        let row = ((self.lat_max - lat) * self.rows as f64 / (self.lat_max - self.lat_min)).floor()
            as usize;
        let col = ((lng - self.lng_min) * self.cols as f64 / (self.lng_max - self.lng_min)).floor()
            as usize;
        Ok(row.min(self.rows - 1) * self.cols + col.min(self.cols - 1))
    }

    /// Center coordinates `(lat, lng)` of a grid.
    pub fn center(&self, id: usize) -> (f64, f64) {
        let (row, col) = (id / self.cols, id % self.cols);
        let lat = self.lat_max - (row as f64 + 0.5) * self.cell_height_deg();
        let lng = self.lng_min + (col as f64 + 0.5) * self.cell_width_deg();
        (lat, lng)
    }
}

/// Great-circle distance in kilometres.
pub fn haversine_km(lat1: f64, lng1: f64, lat2: f64, lng2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lng2 - lng1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * a.sqrt().min(1.0).asin()
}

/// Haversine distances between every pair of grid centers, in km.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoAdjacency {
    n: usize,
    dist: Vec<f64>,
}

impl GeoAdjacency {
    pub fn build(spec: &GridSpec) -> Self {
        let n = spec.n();
        let centers: Vec<_> = (0..n).map(|i| spec.center(i)).collect();
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = haversine_km(centers[i].0, centers[i].1, centers[j].0, centers[j].1);
                dist[i * n + j] = d;
                dist[j * n + i] = d;
            }
        }
        GeoAdjacency { n, dist }
    }

    /// From a row-major `n × n` distance matrix; must be symmetric with a
    /// zero diagonal.
    pub fn from_distances(n: usize, dist: Vec<f64>) -> Result<Self> {
        if dist.len() != n * n {
            return Err(OdpError::Shape(format!("{} distances for {n} grids", dist.len())));
        }
        for i in 0..n {
            if dist[i * n + i] != 0.0 {
                return Err(OdpError::Shape("nonzero diagonal".into()));
            }
            for j in 0..n {
                let d = dist[i * n + j];
                if !(d >= 0.0) || d != dist[j * n + i] {
                    return Err(OdpError::Shape("distances must be symmetric and nonnegative".into()));
                }
            }
        }
        Ok(GeoAdjacency { n, dist })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.dist[i * self.n..(i + 1) * self.n]
    }
}
