use super::{meters_per_deg_lon, BBox, GeoError, LatLon, Region, METERS_PER_DEG_LAT};

/// Regular lat/lon grid over a bounding box.
///
/// Cell sizes are converted from metres at the latitude of the bbox
/// centroid. The last row and column are clipped so the cells tile the bbox
/// exactly. A point belongs to the cell whose half-open range
/// `[min, max)` contains it, except that cells on the north and east edges
/// also own their closed upper boundary.
#[derive(Clone, Debug)]
pub struct Grid {
    bbox: BBox,
    rows: usize,
    cols: usize,
    cell_lat: f64,
    cell_lon: f64,
    regions: Vec<Region>,
}

fn tile_count(extent_deg: f64, cell_deg: f64) -> usize {
    // Tolerate rounding noise when the extent is an exact multiple.
    ((extent_deg / cell_deg) - 1e-9).ceil().max(1.0) as usize
}

impl Grid {
    pub fn new(bbox: BBox, cell_size_m: f64) -> Result<Self, GeoError> {
        bbox.validate()?;
        if !(cell_size_m.is_finite() && cell_size_m > 0.0) {
            return Err(GeoError::InvalidInput(format!("cell size must be positive, got {cell_size_m}")));
        }
        let cell_lat = cell_size_m / METERS_PER_DEG_LAT;
        let cell_lon = cell_size_m / meters_per_deg_lon(bbox.centroid().lat);
        let rows = tile_count(bbox.max_lat - bbox.min_lat, cell_lat);
        let cols = tile_count(bbox.max_lon - bbox.min_lon, cell_lon);
        let mut grid = Grid { bbox, rows, cols, cell_lat, cell_lon, regions: Vec::with_capacity(rows * cols) };
        for r in 0..rows {
            for c in 0..cols {
                let cell = BBox {
                    min_lat: grid.lat_edge(r),
                    max_lat: grid.lat_edge(r + 1),
                    min_lon: grid.lon_edge(c),
                    max_lon: grid.lon_edge(c + 1),
                };
                grid.regions.push(Region::new(Self::cell_id(r, c), cell));
            }
        }
        Ok(grid)
    }

    pub fn cell_id(row: usize, col: usize) -> String {
        format!("r{row:03}c{col:03}")
    }

    fn lat_edge(&self, r: usize) -> f64 {
        if r >= self.rows {
            self.bbox.max_lat
        } else {
            self.bbox.min_lat + r as f64 * self.cell_lat
        }
    }

    fn lon_edge(&self, c: usize) -> f64 {
        if c >= self.cols {
            self.bbox.max_lon
        } else {
            self.bbox.min_lon + c as f64 * self.cell_lon
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bbox(&self) -> &BBox {
        &self.bbox
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn regions_mut(&mut self) -> &mut [Region] {
        &mut self.regions
    }

    pub fn into_regions(self) -> Vec<Region> {
        self.regions
    }

    /// Row/column of a region index.
    pub fn position(&self, index: usize) -> (usize, usize) {
        (index / self.cols, index % self.cols)
    }

    /// Ownership rule described on the type. Used to verify `locate`.
    pub fn covers(&self, index: usize, p: &LatLon) -> bool {
        let (r, c) = self.position(index);
        let b = &self.regions[index].bbox;
        let lat_ok = p.lat >= b.min_lat && (p.lat < b.max_lat || (r + 1 == self.rows && p.lat <= b.max_lat));
        let lon_ok = p.lon >= b.min_lon && (p.lon < b.max_lon || (c + 1 == self.cols && p.lon <= b.max_lon));
        lat_ok && lon_ok
    }

    /// Index of the cell owning `p`, or `None` outside the bbox.
    pub fn locate(&self, p: &LatLon) -> Option<usize> {
        if !self.bbox.contains(p) {
            return None;
        }
        let r = Self::slot(p.lat, self.rows, |i| self.lat_edge(i));
        let c = Self::slot(p.lon, self.cols, |i| self.lon_edge(i));
        Some(r * self.cols + c)
    }

    fn slot(v: f64, n: usize, edge: impl Fn(usize) -> f64) -> usize {
        let origin = edge(0);
        let step = edge(1) - origin;
        let mut i = (((v - origin) / step).floor().max(0.0) as usize).min(n - 1);
        // Correct floating error against the exact edges used by the cells.
        while i > 0 && v < edge(i) {
            i -= 1;
        }
        while i + 1 < n && v >= edge(i + 1) {
            i += 1;
        }
        i
    }
}

/// Tiles `bbox` with square cells of `cell_size_m` metres.
pub fn build_grid(bbox: BBox, cell_size_m: f64) -> Result<Vec<Region>, GeoError> {
    Ok(Grid::new(bbox, cell_size_m)?.into_regions())
}
