//! Spherical variogram and universal kriging with drift {1, covariate}.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::{ClassMap, RasterGrid};

/// Pivots below this fraction of the largest matrix entry count as zero.
const SINGULAR_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariogramModel {
    pub nugget: f64,
    pub sill: f64,
    pub range_m: f64,
}

impl VariogramModel {
    pub fn spherical(nugget: f64, sill: f64, range_m: f64) -> Result<Self> {
        if !(nugget >= 0.0 && sill > nugget && range_m > 0.0 && sill.is_finite() && range_m.is_finite()) {
            return Err(Error::input(format!(
                "variogram needs 0 <= nugget < sill and range > 0, got nugget {nugget}, sill {sill}, range {range_m}"
            )));
        }
        Ok(Self { nugget, sill, range_m })
    }

    /// Semivariance at lag `h`; `γ(0)` is the nugget.
    pub fn gamma(&self, h: f64) -> Result<f64> {
        if !(h >= 0.0) {
            return Err(Error::input(format!("lag distance must be non-negative, got {h}")));
        }
        Ok(self.gamma_unchecked(h))
    }

    #[inline]
    fn gamma_unchecked(&self, h: f64) -> f64 {
        if h >= self.range_m {
            return self.sill;
        }
        let r = h / self.range_m;
        self.nugget + (self.sill - self.nugget) * (1.5 * r - 0.5 * r * r * r)
    }
}

pub fn spherical_gamma(h: f64, model: &VariogramModel) -> Result<f64> {
    model.gamma(h)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrigingObservation {
    pub x: f64,
    pub y: f64,
    pub response: f64,
    pub covariate: f64,
}

/// LU factorization with partial pivoting of a dense square matrix.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(n: usize, mut a: Vec<f64>) -> Result<Self> {
        assert_eq!(a.len(), n * n);
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (piv, pmax) = (k..n)
                .map(|i| (i, a[i * n + k].abs()))
                .fold((k, -1.0), |b, c| if c.1 > b.1 { c } else { b });
            if !(pmax > SINGULAR_TOL * scale) {
                return Err(Error::Numeric(format!(
                    "kriging system is singular at pivot {k} of {n} (duplicate locations or collinear drift)"
                )));
            }
            if piv != k {
                for j in 0..n {
                    a.swap(k * n + j, piv * n + j);
                }
                perm.swap(k, piv);
            }
            let d = a[k * n + k];
            for i in k + 1..n {
                let f = a[i * n + k] / d;
                a[i * n + k] = f;
                if f != 0.0 {
                    for j in k + 1..n {
                        a[i * n + j] -= f * a[k * n + j];
                    }
                }
            }
        }
        Ok(Self { n, lu: a, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
        x
    }
}

/// Universal kriging with drift basis {1, covariate}.
///
/// The system `[Γ F; Fᵀ 0]` is factored once. Predictions use the dual
/// form (coefficients solved once), [`UniversalKriging::weights`] the
/// primal form.
#[derive(Debug, Clone)]
pub struct UniversalKriging {
    obs: Vec<KrigingObservation>,
    model: VariogramModel,
    lu: Lu,
    /// Dual coefficients: one per observation, then the two drift terms.
    dual: Vec<f64>,
}

impl UniversalKriging {
    pub fn fit(obs: &[KrigingObservation], model: VariogramModel) -> Result<Self> {
        let n = obs.len();
        if n < 3 {
            return Err(Error::input(format!("universal kriging needs at least 3 observations, got {n}")));
        }
        if let Some(i) = obs
            .iter()
            .position(|o| !(o.x.is_finite() && o.y.is_finite() && o.response.is_finite() && o.covariate.is_finite()))
        {
            return Err(Error::input(format!("observation {} has a non-finite value", i + 1)));
        }
        let m = n + 2;
        let mut a = vec![0.0; m * m];
        for i in 0..n {
            for j in 0..n {
                let h = (obs[i].x - obs[j].x).hypot(obs[i].y - obs[j].y);
                a[i * m + j] = model.gamma_unchecked(h);
            }
            a[i * m + n] = 1.0;
            a[i * m + n + 1] = obs[i].covariate;
            a[n * m + i] = 1.0;
            a[(n + 1) * m + i] = obs[i].covariate;
        }
        let lu = Lu::factor(m, a)?;
        let mut rhs: Vec<f64> = obs.iter().map(|o| o.response).collect();
        rhs.extend([0.0, 0.0]);
        let dual = lu.solve(&rhs);
        Ok(Self {
            obs: obs.to_vec(),
            model,
            lu,
            dual,
        })
    }

    fn rhs(&self, x: f64, y: f64, covariate: f64) -> Vec<f64> {
        let mut b: Vec<f64> = self.obs.iter().map(|o| self.model.gamma_unchecked((o.x - x).hypot(o.y - y))).collect();
        b.extend([1.0, covariate]);
        b
    }

    /// Observation weights and the two Lagrange multipliers for a target.
    pub fn weights(&self, x: f64, y: f64, covariate: f64) -> (Vec<f64>, [f64; 2]) {
        let mut s = self.lu.solve(&self.rhs(x, y, covariate));
        let mu = [s[self.obs.len()], s[self.obs.len() + 1]];
        s.truncate(self.obs.len());
        (s, mu)
    }

    pub fn predict(&self, x: f64, y: f64, covariate: f64) -> f64 {
        let n = self.obs.len();
        let mut acc = self.dual[n] + self.dual[n + 1] * covariate;
        for (o, a) in self.obs.iter().zip(&self.dual) {
            acc += a * self.model.gamma_unchecked((o.x - x).hypot(o.y - y));
        }
        acc
    }

    /// Prediction at every cell center of `covariate`'s grid; nodata where
    /// the covariate is nodata.
    pub fn predict_grid(&self, covariate: &RasterGrid) -> RasterGrid {
        let spec = covariate.spec;
        let mut values = vec![covariate.nodata; spec.n_cells()];
        values.par_chunks_mut(spec.ncols.max(1)).enumerate().for_each(|(r, row)| {
            for (c, out) in row.iter_mut().enumerate() {
                if let Some(z) = covariate.get(r, c) {
                    let (x, y) = spec.cell_center(r, c);
                    *out = self.predict(x, y, z);
                }
            }
        });
        RasterGrid {
            spec,
            nodata: covariate.nodata,
            values,
        }
    }
}

/// Smallest and largest normalized elevation fed to the logit.
pub const LOGIT_CLAMP: f64 = 1e-6;

/// `logit(e / (e_max + 1 m))` with the ratio clamped to
/// `[LOGIT_CLAMP, 1 − LOGIT_CLAMP]`.
pub fn logit_elevation(elevation_m: f64, max_elevation_m: f64) -> f64 {
    let u = (elevation_m / (max_elevation_m + 1.0)).clamp(LOGIT_CLAMP, 1.0 - LOGIT_CLAMP);
    (u / (1.0 - u)).ln()
}

/// Elevation raster to logit covariate, using the raster maximum.
pub fn logit_elevation_grid(dem: &RasterGrid) -> RasterGrid {
    let max = dem.values.iter().filter(|&&v| !dem.is_nodata(v)).fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let values = dem
        .values
        .iter()
        .map(|&v| if dem.is_nodata(v) { dem.nodata } else { logit_elevation(v, max) })
        .collect();
    RasterGrid {
        spec: dem.spec,
        nodata: dem.nodata,
        values,
    }
}

pub const LOWLAND_STRATUM: u8 = 1;
pub const MOUNTAIN_STRATUM: u8 = 2;

pub fn stratum_legend() -> Vec<(u8, String)> {
    vec![(LOWLAND_STRATUM, "stratum-1".into()), (MOUNTAIN_STRATUM, "stratum-2".into())]
}

/// Values `>= cut` become the mountain stratum, others the lowland stratum.
pub fn threshold_to_stratum(predicted: &RasterGrid, cut: f64) -> ClassMap {
    let codes = predicted
        .values
        .iter()
        .map(|&v| {
            if predicted.is_nodata(v) {
                crate::domain::NODATA_CODE
            } else if v >= cut {
                MOUNTAIN_STRATUM
            } else {
                LOWLAND_STRATUM
            }
        })
        .collect();
    ClassMap::new(predicted.spec, codes, stratum_legend()).expect("codes come from the legend")
}
