//! Design-based area estimators for a stratified plot sample.
//!
//! Three estimators of the area of a domain are provided:
//!
//! * [`direct_estimate`]: stratified expansion of plot indicators,
//!   `t = Σ_h A_h ȳ_h`, with `V = Σ_h A_h² S_h² / n_h`;
//! * [`model_assisted_estimate`]: map-based synthetic area plus a
//!   design-weighted residual correction, `t_MA = t̃ + C`, with the same
//!   variance form applied to the residuals `e_i = y_i − ŷ_i`;
//! * [`poststratified_estimate`]: stratified estimation over map-derived
//!   groups inside each design stratum, `t_PS = Σ_h Σ_g A_g ȳ_g`.
//!
//! Per-stratum sums run in plot-id order with compensated summation, so
//! every output is independent of the order in which plots are supplied.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::numeric::{mean_and_sample_variance, CompensatedSum};

/// One inventory plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePlot {
    pub id: String,
    pub stratum_id: u32,
    pub x: f64,
    pub y: f64,
    /// Field-observed label at the plot center.
    pub observed: Domain,
    /// Cross-validated map prediction inside the forest mask; `non-forest`
    /// outside it.
    pub predicted: Option<Domain>,
    /// Prediction as if the forest mask were exact (used only for the
    /// mask/species variance decomposition).
    pub predicted_exact_mask: Option<Domain>,
    /// π_i, the inverse of the plot's sampling weight (km⁻²).
    pub inclusion_probability: f64,
    pub predictors: Vec<f64>,
    pub in_model_set: bool,
}

impl SamplePlot {
    pub fn new(id: impl Into<String>, stratum_id: u32, observed: Domain, sampling_weight_km2: f64) -> Self {
        Self {
            id: id.into(),
            stratum_id,
            x: 0.0,
            y: 0.0,
            observed,
            predicted: None,
            predicted_exact_mask: None,
            inclusion_probability: 1.0 / sampling_weight_km2,
            predictors: Vec::new(),
            in_model_set: false,
        }
    }

    pub fn with_prediction(mut self, predicted: Domain) -> Self {
        self.predicted = Some(predicted);
        self
    }

    pub fn with_exact_mask_prediction(mut self, predicted: Domain) -> Self {
        self.predicted_exact_mask = Some(predicted);
        self
    }

    /// Land area represented by the plot, km².
    pub fn sampling_weight(&self) -> f64 {
        1.0 / self.inclusion_probability
    }
}

/// Design stratum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    pub id: u32,
    /// A_h, km².
    pub area: f64,
    /// n_h as recorded in the design (informational; estimators count the
    /// plots they are given).
    pub n_plots: usize,
    /// km² per plot.
    pub sampling_weight: f64,
}

impl Stratum {
    pub fn new(id: u32, area: f64, sampling_weight: f64) -> Self {
        Self {
            id,
            area,
            n_plots: 0,
            sampling_weight,
        }
    }

    /// Stratum whose sampling weight is implied by its area and plot count.
    pub fn from_count(id: u32, area: f64, n_plots: usize) -> Self {
        Self {
            id,
            area,
            n_plots,
            sampling_weight: if n_plots > 0 { area / n_plots as f64 } else { f64::NAN },
        }
    }
}

/// How strata (or poststrata) with a single plot are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VariancePolicy {
    /// Any stratum with `n_h < 2` is an error.
    #[default]
    Strict,
    /// Totals are still returned; the variance covers only strata where it
    /// is defined and the estimate is flagged [`VarianceStatus::Partial`].
    AllowPartial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum VarianceStatus {
    Complete,
    /// Variance excludes the listed strata, whose sample variance is
    /// undefined.
    Partial { missing_strata: Vec<u32> },
}

impl VarianceStatus {
    pub fn is_complete(&self) -> bool {
        matches!(self, VarianceStatus::Complete)
    }
}

/// Contribution of one design stratum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumComponent {
    pub stratum_id: u32,
    pub n_plots: usize,
    pub total: f64,
    pub variance: Option<f64>,
}

/// Relative efficiency `V(direct) / V(alternative)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RelativeEfficiency {
    Finite(f64),
    /// Alternative has zero variance while the direct estimate does not.
    Infinite,
    /// Both variances are zero (the "0/0" case).
    Undefined,
}

impl RelativeEfficiency {
    pub fn value(self) -> Option<f64> {
        match self {
            RelativeEfficiency::Finite(v) => Some(v),
            _ => None,
        }
    }
}

impl fmt::Display for RelativeEfficiency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RelativeEfficiency::Finite(v) => write!(f, "{v}"),
            RelativeEfficiency::Infinite => f.write_str("inf"),
            RelativeEfficiency::Undefined => f.write_str("undefined"),
        }
    }
}

/// Ratio of variances; see [`RelativeEfficiency`] for the zero cases.
pub fn relative_efficiency(v_direct: f64, v_alt: f64) -> RelativeEfficiency {
    if !(v_direct.is_finite() && v_alt.is_finite()) || v_direct < 0.0 || v_alt < 0.0 {
        return RelativeEfficiency::Undefined;
    }
    if v_alt > 0.0 {
        RelativeEfficiency::Finite(v_direct / v_alt)
    } else if v_direct > 0.0 {
        RelativeEfficiency::Infinite
    } else {
        RelativeEfficiency::Undefined
    }
}

/// Area estimate of one domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    /// km².
    pub total: f64,
    /// km⁴.
    pub variance: f64,
    pub se: f64,
    /// `se / total`, only when `total > 0`.
    pub cv: Option<f64>,
    /// Model-assisted correction term C, km².
    pub correction: Option<f64>,
    /// Synthetic (map) area t̃, km².
    pub synthetic: Option<f64>,
    pub relative_efficiency: Option<RelativeEfficiency>,
    pub status: VarianceStatus,
    pub strata: Vec<StratumComponent>,
}

impl Estimate {
    fn from_components(total: f64, variance: f64, status: VarianceStatus, strata: Vec<StratumComponent>) -> Self {
        let se = variance.sqrt();
        Self {
            total,
            variance,
            se,
            cv: (total > 0.0).then(|| se / total),
            correction: None,
            synthetic: None,
            relative_efficiency: None,
            status,
            strata,
        }
    }

    /// Attaches the relative efficiency against a direct estimate.
    pub fn with_relative_efficiency(mut self, direct: &Estimate) -> Self {
        self.relative_efficiency = Some(relative_efficiency(direct.variance, self.variance));
        self
    }

    /// Per-stratum relative efficiencies against `direct` (matching stratum
    /// ids; strata without a defined variance on either side are skipped).
    pub fn stratum_relative_efficiencies(&self, direct: &Estimate) -> Vec<(u32, RelativeEfficiency)> {
        self.strata
            .iter()
            .filter_map(|alt| {
                let d = direct.strata.iter().find(|d| d.stratum_id == alt.stratum_id)?;
                Some((alt.stratum_id, relative_efficiency(d.variance?, alt.variance?)))
            })
            .collect()
    }
}

/// Variance of the model-assisted estimator computed from residuals only;
/// no total is implied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualVariance {
    pub variance: f64,
    pub se: f64,
    pub status: VarianceStatus,
    pub strata: Vec<StratumComponent>,
}

/// Plots of one stratum, sorted by plot id.
pub(crate) struct StratumSample<'a> {
    pub stratum: &'a Stratum,
    pub plots: Vec<&'a SamplePlot>,
}

/// Groups plots by stratum (stratum-id order, plots in id order) and checks
/// the inputs shared by all estimators.
pub(crate) fn group_by_stratum<'a>(plots: &'a [SamplePlot], strata: &'a [Stratum]) -> Result<Vec<StratumSample<'a>>> {
    let mut by_id: BTreeMap<u32, StratumSample<'a>> = BTreeMap::new();
    for s in strata {
        if !(s.area.is_finite() && s.area >= 0.0) {
            return Err(Error::input(format!("stratum {}: area must be finite and ≥ 0, got {}", s.id, s.area)));
        }
        if by_id.insert(s.id, StratumSample { stratum: s, plots: Vec::new() }).is_some() {
            return Err(Error::input(format!("stratum {} listed twice", s.id)));
        }
    }
    for p in plots {
        if !(p.inclusion_probability.is_finite() && p.inclusion_probability > 0.0) {
            return Err(Error::input(format!(
                "plot {}: inclusion probability must be positive, got {}",
                p.id, p.inclusion_probability
            )));
        }
        match by_id.get_mut(&p.stratum_id) {
            Some(s) => s.plots.push(p),
            None => {
                return Err(Error::input(format!("plot {} references unknown stratum {}", p.id, p.stratum_id)));
            }
        }
    }
    let mut out: Vec<StratumSample<'a>> = by_id.into_values().collect();
    for s in &mut out {
        s.plots.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = s.plots.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::input(format!("duplicate plot id {}", w[0].id)));
        }
        if s.plots.is_empty() && s.stratum.area > 0.0 {
            return Err(Error::input(format!("stratum {} has area {} km² but no plots", s.stratum.id, s.stratum.area)));
        }
    }
    Ok(out)
}

/// `(A ȳ, A² S² / n)` for one (post)stratum; variance `None` when n < 2.
fn expand(area: f64, values: &[f64]) -> (f64, Option<f64>) {
    if values.is_empty() {
        return (0.0, Some(0.0));
    }
    let (mean, s2) = mean_and_sample_variance(values);
    let n = values.len() as f64;
    (area * mean, s2.map(|s2| area * area * s2 / n))
}

fn assemble(components: Vec<StratumComponent>, policy: VariancePolicy, what: &str) -> Result<(f64, f64, VarianceStatus, Vec<StratumComponent>)> {
    let mut total = CompensatedSum::new();
    let mut variance = CompensatedSum::new();
    let mut missing = Vec::new();
    for c in &components {
        total.add(c.total);
        match c.variance {
            Some(v) => variance.add(v),
            None => missing.push(c.stratum_id),
        }
    }
    let status = if missing.is_empty() {
        VarianceStatus::Complete
    } else if policy == VariancePolicy::Strict {
        return Err(Error::VarianceUndefined(format!(
            "{what}: fewer than 2 plots in stratum/group of stratum {:?}",
            missing
        )));
    } else {
        VarianceStatus::Partial { missing_strata: missing }
    };
    Ok((total.value(), variance.value(), status, components))
}

fn stratified(
    samples: &[StratumSample<'_>],
    value: impl Fn(&SamplePlot) -> Result<f64>,
    policy: VariancePolicy,
    what: &str,
) -> Result<(f64, f64, VarianceStatus, Vec<StratumComponent>)> {
    let mut components = Vec::with_capacity(samples.len());
    for s in samples {
        let values = s.plots.iter().map(|p| value(p)).collect::<Result<Vec<f64>>>()?;
        let (total, variance) = expand(s.stratum.area, &values);
        components.push(StratumComponent {
            stratum_id: s.stratum.id,
            n_plots: values.len(),
            total,
            variance,
        });
    }
    assemble(components, policy, what)
}

/// Direct (expansion) estimate of the area of `target`.
pub fn direct_estimate(plots: &[SamplePlot], strata: &[Stratum], target: Domain) -> Result<Estimate> {
    direct_estimate_with(plots, strata, target, VariancePolicy::Strict)
}

pub fn direct_estimate_with(plots: &[SamplePlot], strata: &[Stratum], target: Domain, policy: VariancePolicy) -> Result<Estimate> {
    let samples = group_by_stratum(plots, strata)?;
    let (total, variance, status, comps) = stratified(&samples, |p| Ok(target.indicator(p.observed)), policy, "direct estimate")?;
    Ok(Estimate::from_components(total, variance, status, comps))
}

fn predicted_of(p: &SamplePlot) -> Result<Domain> {
    p.predicted
        .ok_or_else(|| Error::input(format!("plot {} has no map prediction", p.id)))
}

/// Model-assisted estimate `t̃ + C` of the area of `target`, where
/// `synthetic_area` is the mapped area t̃ (km²).
///
/// The correction `C = Σ_h A_h ē_h` is the stratified form of `Σ e_i / π_i`
/// and coincides with it whenever `π_i = n_h / A_h`.
pub fn model_assisted_estimate(plots: &[SamplePlot], strata: &[Stratum], target: Domain, synthetic_area: f64) -> Result<Estimate> {
    model_assisted_estimate_with(plots, strata, target, synthetic_area, VariancePolicy::Strict)
}

pub fn model_assisted_estimate_with(
    plots: &[SamplePlot],
    strata: &[Stratum],
    target: Domain,
    synthetic_area: f64,
    policy: VariancePolicy,
) -> Result<Estimate> {
    if !(synthetic_area.is_finite() && synthetic_area >= 0.0) {
        return Err(Error::input(format!("synthetic area must be ≥ 0, got {synthetic_area}")));
    }
    let samples = group_by_stratum(plots, strata)?;
    let residual = |p: &SamplePlot| -> Result<f64> {
        let predicted = predicted_of(p)?;
        Ok(target.indicator(p.observed) - target.indicator(predicted))
    };
    let (correction, variance, status, comps) = stratified(&samples, residual, policy, "model-assisted estimate")?;
    let mut est = Estimate::from_components(synthetic_area + correction, variance, status, comps);
    est.correction = Some(correction);
    est.synthetic = Some(synthetic_area);
    Ok(est)
}

/// Model-assisted variance as it would be with an exact forest mask.
///
/// Residuals use `predicted_exact_mask` for plots observed as forest and
/// are zero for plots observed as non-forest.
pub fn ma_variance_exact_mask(plots: &[SamplePlot], strata: &[Stratum], target: Domain) -> Result<ResidualVariance> {
    ma_variance_exact_mask_with(plots, strata, target, VariancePolicy::Strict)
}

pub fn ma_variance_exact_mask_with(plots: &[SamplePlot], strata: &[Stratum], target: Domain, policy: VariancePolicy) -> Result<ResidualVariance> {
    let samples = group_by_stratum(plots, strata)?;
    let residual = |p: &SamplePlot| -> Result<f64> {
        if !p.observed.is_forest() {
            return Ok(0.0);
        }
        let predicted = p
            .predicted_exact_mask
            .ok_or_else(|| Error::input(format!("plot {} has no exact-mask prediction", p.id)))?;
        Ok(target.indicator(p.observed) - target.indicator(predicted))
    };
    let (_, variance, status, strata) = stratified(&samples, residual, policy, "exact-mask variance")?;
    Ok(ResidualVariance {
        variance,
        se: variance.sqrt(),
        status,
        strata,
    })
}

/// Poststratum label inside a design stratum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupId {
    InDomain,
    OutOfDomain,
}

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GroupId::InDomain => "in-domain",
            GroupId::OutOfDomain => "out-of-domain",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostStratumGroup {
    pub group_id: GroupId,
    /// A_g, the mapped area of the group within its design stratum (km²).
    pub mapped_area: f64,
    pub plot_ids: Vec<String>,
}

impl PostStratumGroup {
    pub fn n_plots(&self) -> usize {
        self.plot_ids.len()
    }
}

/// The poststrata of one design stratum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumGroups {
    pub stratum_id: u32,
    pub groups: Vec<PostStratumGroup>,
}

/// Builds the binary in-domain / out-of-domain poststrata for `target`.
///
/// `mapped_in_domain` gives, per stratum id, the mapped area of `target`;
/// the out-of-domain group receives the rest of the stratum area. Plots are
/// assigned by their map prediction.
pub fn binary_groups(
    plots: &[SamplePlot],
    strata: &[Stratum],
    target: Domain,
    mapped_in_domain: &BTreeMap<u32, f64>,
) -> Result<Vec<StratumGroups>> {
    let samples = group_by_stratum(plots, strata)?;
    let mut out = Vec::with_capacity(samples.len());
    for s in samples {
        let in_area = *mapped_in_domain.get(&s.stratum.id).ok_or_else(|| {
            Error::input(format!("no mapped area of {target} given for stratum {}", s.stratum.id))
        })?;
        if !(in_area >= 0.0 && in_area <= s.stratum.area * (1.0 + 1e-9)) {
            return Err(Error::input(format!(
                "stratum {}: mapped area {in_area} km² of {target} outside [0, {}]",
                s.stratum.id, s.stratum.area
            )));
        }
        let in_area = in_area.min(s.stratum.area);
        let mut in_ids = Vec::new();
        let mut out_ids = Vec::new();
        for p in &s.plots {
            if target.indicator(predicted_of(p)?) > 0.0 {
                in_ids.push(p.id.clone());
            } else {
                out_ids.push(p.id.clone());
            }
        }
        out.push(StratumGroups {
            stratum_id: s.stratum.id,
            groups: vec![
                PostStratumGroup {
                    group_id: GroupId::InDomain,
                    mapped_area: in_area,
                    plot_ids: in_ids,
                },
                PostStratumGroup {
                    group_id: GroupId::OutOfDomain,
                    mapped_area: s.stratum.area - in_area,
                    plot_ids: out_ids,
                },
            ],
        });
    }
    Ok(out)
}

/// Poststratified estimate of the area of `target`.
pub fn poststratified_estimate(plots: &[SamplePlot], strata: &[Stratum], groups: &[StratumGroups], target: Domain) -> Result<Estimate> {
    poststratified_estimate_with(plots, strata, groups, target, VariancePolicy::Strict)
}

pub fn poststratified_estimate_with(
    plots: &[SamplePlot],
    strata: &[Stratum],
    groups: &[StratumGroups],
    target: Domain,
    policy: VariancePolicy,
) -> Result<Estimate> {
    let samples = group_by_stratum(plots, strata)?;
    let mut by_stratum: BTreeMap<u32, &StratumGroups> = BTreeMap::new();
    for g in groups {
        if by_stratum.insert(g.stratum_id, g).is_some() {
            return Err(Error::input(format!("poststrata of stratum {} given twice", g.stratum_id)));
        }
    }
    let mut components = Vec::with_capacity(samples.len());
    for s in &samples {
        let sg = by_stratum
            .get(&s.stratum.id)
            .ok_or_else(|| Error::input(format!("no poststrata given for stratum {}", s.stratum.id)))?;
        let area_sum: f64 = sg.groups.iter().map(|g| g.mapped_area).sum();
        let tol = 1e-9 * s.stratum.area.max(1.0);
        if (area_sum - s.stratum.area).abs() > tol {
            return Err(Error::input(format!(
                "stratum {}: poststratum areas sum to {area_sum} km², stratum area is {}",
                s.stratum.id, s.stratum.area
            )));
        }
        let plot_lookup: BTreeMap<&str, &SamplePlot> = s.plots.iter().map(|p| (p.id.as_str(), *p)).collect();
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        let mut total = CompensatedSum::new();
        let mut variance = CompensatedSum::new();
        let mut variance_defined = true;
        for g in &sg.groups {
            if !(g.mapped_area.is_finite() && g.mapped_area >= 0.0) {
                return Err(Error::input(format!(
                    "stratum {}, group {}: mapped area must be ≥ 0",
                    s.stratum.id, g.group_id
                )));
            }
            let mut members = Vec::with_capacity(g.plot_ids.len());
            for id in &g.plot_ids {
                let p = plot_lookup.get(id.as_str()).ok_or_else(|| {
                    Error::input(format!("group {} of stratum {} lists plot {id} not in that stratum", g.group_id, s.stratum.id))
                })?;
                if !seen.insert(id.as_str()) {
                    return Err(Error::input(format!("plot {id} assigned to more than one poststratum")));
                }
                members.push(*p);
            }
            if members.is_empty() {
                if g.mapped_area > 0.0 {
                    return Err(Error::EmptyGroup {
                        stratum_id: s.stratum.id,
                        group: g.group_id.to_string(),
                        area_km2: g.mapped_area,
                    });
                }
                continue;
            }
            members.sort_by(|a, b| a.id.cmp(&b.id));
            let values: Vec<f64> = members.iter().map(|p| target.indicator(p.observed)).collect();
            let (t, v) = expand(g.mapped_area, &values);
            total.add(t);
            match v {
                Some(v) => variance.add(v),
                None if g.mapped_area == 0.0 => {}
                None => variance_defined = false,
            }
        }
        if seen.len() != s.plots.len() {
            return Err(Error::input(format!(
                "poststrata of stratum {} cover {} of its {} plots",
                s.stratum.id,
                seen.len(),
                s.plots.len()
            )));
        }
        components.push(StratumComponent {
            stratum_id: s.stratum.id,
            n_plots: s.plots.len(),
            total: total.value(),
            variance: variance_defined.then(|| variance.value()),
        });
    }
    let (total, variance, status, comps) = assemble(components, policy, "poststratified estimate")?;
    Ok(Estimate::from_components(total, variance, status, comps))
}

/// Estimator selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Direct,
    ModelAssisted,
    Poststratified,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Direct, Method::ModelAssisted, Method::Poststratified];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Direct => "direct",
            Method::ModelAssisted => "ma",
            Method::Poststratified => "ps",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "direct" => Ok(Method::Direct),
            "ma" | "model-assisted" => Ok(Method::ModelAssisted),
            "ps" | "poststratified" | "post-stratified" => Ok(Method::Poststratified),
            other => Err(Error::input(format!("unknown estimation method '{other}'"))),
        }
    }
}

/// Runs `method` for `target`, given the mapped area of `target` per
/// stratum id (ignored by the direct estimator). Map-based estimates carry
/// the relative efficiency against the direct estimate.
pub fn estimate(
    plots: &[SamplePlot],
    strata: &[Stratum],
    method: Method,
    target: Domain,
    mapped_in_domain: &BTreeMap<u32, f64>,
    policy: VariancePolicy,
) -> Result<Estimate> {
    let direct = direct_estimate_with(plots, strata, target, policy)?;
    match method {
        Method::Direct => Ok(direct),
        Method::ModelAssisted => {
            let mut synthetic = CompensatedSum::new();
            for s in strata {
                synthetic.add(*mapped_in_domain.get(&s.id).ok_or_else(|| {
                    Error::input(format!("no mapped area of {target} given for stratum {}", s.id))
                })?);
            }
            Ok(model_assisted_estimate_with(plots, strata, target, synthetic.value(), policy)?.with_relative_efficiency(&direct))
        }
        Method::Poststratified => {
            let groups = binary_groups(plots, strata, target, mapped_in_domain)?;
            Ok(poststratified_estimate_with(plots, strata, &groups, target, policy)?.with_relative_efficiency(&direct))
        }
    }
}
