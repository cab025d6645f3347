use crate::domain::{Domain, NODATA_CODE};
use crate::error::{Error, Result};

/// Relative tolerance for comparing grid geometry.
const GEOMETRY_TOL: f64 = 1e-9;

/// Grid geometry. The origin is the upper-left corner of cell (0, 0);
/// rows grow southwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub origin_x: f64,
    pub origin_y: f64,
    pub cell_size: f64,
    pub nrows: usize,
    pub ncols: usize,
}

impl GridSpec {
    pub fn new(origin_x: f64, origin_y: f64, cell_size: f64, nrows: usize, ncols: usize) -> Result<Self> {
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(Error::input(format!("cell size must be positive, got {cell_size}")));
        }
        if !(origin_x.is_finite() && origin_y.is_finite()) {
            return Err(Error::input("grid origin must be finite"));
        }
        Ok(Self {
            origin_x,
            origin_y,
            cell_size,
            nrows,
            ncols,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.nrows * self.ncols
    }

    /// Map coordinates of the center of cell (row, col).
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.origin_x + (col as f64 + 0.5) * self.cell_size,
            self.origin_y - (row as f64 + 0.5) * self.cell_size,
        )
    }

    /// Fractional (col, row) position of a map point, in cell units from
    /// the upper-left corner.
    pub fn fractional_position(&self, x: f64, y: f64) -> (f64, f64) {
        ((x - self.origin_x) / self.cell_size, (self.origin_y - y) / self.cell_size)
    }

    /// Cell containing (x, y), if inside the grid.
    pub fn cell_at(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let (c, r) = self.fractional_position(x, y);
        if c < 0.0 || r < 0.0 {
            return None;
        }
        let (r, c) = (r.floor() as usize, c.floor() as usize);
        (r < self.nrows && c < self.ncols).then_some((r, c))
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.cell_at(x, y).is_some()
    }

    pub fn max_x(&self) -> f64 {
        self.origin_x + self.ncols as f64 * self.cell_size
    }

    pub fn min_y(&self) -> f64 {
        self.origin_y - self.nrows as f64 * self.cell_size
    }

    pub fn cell_area_km2(&self) -> f64 {
        self.cell_size * self.cell_size / 1e6
    }

    pub fn same_as(&self, other: &GridSpec) -> bool {
        let tol = GEOMETRY_TOL * self.cell_size.max(1.0);
        self.nrows == other.nrows
            && self.ncols == other.ncols
            && (self.cell_size - other.cell_size).abs() <= tol
            && (self.origin_x - other.origin_x).abs() <= tol * 1e3
            && (self.origin_y - other.origin_y).abs() <= tol * 1e3
    }

    pub fn ensure_same(&self, other: &GridSpec, what: &str) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::input(format!("{what}: grids differ ({self:?} vs {other:?})")))
        }
    }
}

/// Single-band grid of reals, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterGrid {
    pub spec: GridSpec,
    pub nodata: f64,
    pub values: Vec<f64>,
}

impl RasterGrid {
    pub fn new(spec: GridSpec, nodata: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.n_cells() {
            return Err(Error::input(format!(
                "raster has {} values, grid needs {}",
                values.len(),
                spec.n_cells()
            )));
        }
        Ok(Self { spec, nodata, values })
    }

    pub fn filled(spec: GridSpec, nodata: f64, value: f64) -> Self {
        Self {
            spec,
            nodata,
            values: vec![value; spec.n_cells()],
        }
    }

    #[inline]
    pub fn is_nodata(&self, v: f64) -> bool {
        v == self.nodata || v.is_nan()
    }

    #[inline]
    pub fn raw(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.spec.ncols + col]
    }

    /// Value at (row, col); `None` for nodata.
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let v = self.raw(row, col);
        (!self.is_nodata(v)).then_some(v)
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.values[row * self.spec.ncols + col] = v;
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|&&v| !self.is_nodata(v)).count()
    }
}

/// Grid of class codes with a legend; `NODATA_CODE` marks nodata.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMap {
    pub spec: GridSpec,
    pub codes: Vec<u8>,
    /// (code, name) pairs.
    pub legend: Vec<(u8, String)>,
}

impl ClassMap {
    pub fn new(spec: GridSpec, codes: Vec<u8>, legend: Vec<(u8, String)>) -> Result<Self> {
        if codes.len() != spec.n_cells() {
            return Err(Error::input(format!("class map has {} cells, grid needs {}", codes.len(), spec.n_cells())));
        }
        let mut known = [false; 256];
        for (c, _) in &legend {
            known[*c as usize] = true;
        }
        if let Some(i) = codes.iter().position(|&c| c != NODATA_CODE && !known[c as usize]) {
            return Err(Error::input(format!(
                "cell ({}, {}) holds code {} missing from the legend",
                i / spec.ncols,
                i % spec.ncols,
                codes[i]
            )));
        }
        Ok(Self { spec, codes, legend })
    }

    pub fn filled(spec: GridSpec, code: u8, legend: Vec<(u8, String)>) -> Result<Self> {
        Self::new(spec, vec![code; spec.n_cells()], legend)
    }

    #[inline]
    pub fn code(&self, row: usize, col: usize) -> u8 {
        self.codes[row * self.spec.ncols + col]
    }

    /// Cell count per code (index = code, including `NODATA_CODE`).
    pub fn histogram(&self) -> [u64; 256] {
        let mut h = [0u64; 256];
        for &c in &self.codes {
            h[c as usize] += 1;
        }
        h
    }

    /// Raster view: codes as reals, `NODATA_CODE` as nodata.
    pub fn to_raster(&self) -> RasterGrid {
        RasterGrid {
            spec: self.spec,
            nodata: NODATA_CODE as f64,
            values: self.codes.iter().map(|&c| c as f64).collect(),
        }
    }

    /// Class map from a raster holding integer codes; nodata and
    /// non-integer or out-of-range values are rejected except nodata,
    /// which maps to `NODATA_CODE`.
    pub fn from_raster(r: &RasterGrid, legend: Vec<(u8, String)>) -> Result<Self> {
        let mut codes = Vec::with_capacity(r.values.len());
        for (i, &v) in r.values.iter().enumerate() {
            if r.is_nodata(v) {
                codes.push(NODATA_CODE);
            } else if v.fract() == 0.0 && (0.0..255.0).contains(&v) {
                codes.push(v as u8);
            } else {
                return Err(Error::input(format!(
                    "cell ({}, {}): {v} is not a class code",
                    i / r.spec.ncols,
                    i % r.spec.ncols
                )));
            }
        }
        Self::new(r.spec, codes, legend)
    }
}

/// Legend of the domain codes used by prediction maps.
pub fn domain_legend() -> Vec<(u8, String)> {
    let mut l: Vec<(u8, String)> = Domain::LABELS
        .iter()
        .map(|d| (d.code().expect("labels have codes"), d.as_str().to_string()))
        .collect();
    l.sort();
    l
}

/// Legend of binary masks: 0 outside, 1 inside.
pub fn mask_legend() -> Vec<(u8, String)> {
    vec![(0, "non-forest".into()), (1, "forest".into())]
}

/// Equal-grid named bands.
#[derive(Debug, Clone, PartialEq)]
pub struct BandSet {
    pub spec: GridSpec,
    pub names: Vec<String>,
    pub bands: Vec<RasterGrid>,
}

impl BandSet {
    pub fn new(names: Vec<String>, bands: Vec<RasterGrid>) -> Result<Self> {
        let first = bands.first().ok_or_else(|| Error::input("band set is empty"))?;
        if names.len() != bands.len() {
            return Err(Error::input("band names and bands differ in count"));
        }
        for (n, b) in names.iter().zip(&bands) {
            first.spec.ensure_same(&b.spec, &format!("band {n}"))?;
        }
        Ok(Self {
            spec: first.spec,
            names,
            bands,
        })
    }

    pub fn n_bands(&self) -> usize {
        self.bands.len()
    }

    pub fn band(&self, name: &str) -> Option<&RasterGrid> {
        self.names.iter().position(|n| n == name).map(|i| &self.bands[i])
    }

    /// Appends the bands of `other` (same grid).
    pub fn extend(&mut self, other: BandSet) -> Result<()> {
        self.spec.ensure_same(&other.spec, "band set")?;
        self.names.extend(other.names);
        self.bands.extend(other.bands);
        Ok(())
    }
}

/// Multi-epoch image stack; every epoch has the same bands on the same grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageStack {
    pub band_names: Vec<String>,
    pub epochs: Vec<BandSet>,
}

impl ImageStack {
    pub fn new(epochs: Vec<BandSet>) -> Result<Self> {
        let first = epochs.first().ok_or_else(|| Error::input("image stack has no epochs"))?;
        for (i, e) in epochs.iter().enumerate() {
            first.spec.ensure_same(&e.spec, &format!("epoch {i}"))?;
            if e.names != first.names {
                return Err(Error::input(format!("epoch {i}: band names differ from epoch 0")));
            }
        }
        Ok(Self {
            band_names: first.names.clone(),
            epochs,
        })
    }

    pub fn spec(&self) -> GridSpec {
        self.epochs[0].spec
    }
}
