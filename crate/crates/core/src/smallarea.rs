//! Estimation for sub-populations (municipalities, regions) of the
//! inventory area.
//!
//! A sub-population carries its own per-stratum areas and mapped class
//! areas; its plots are the inventory plots that fall inside it. Each design
//! stratum is gated separately, and only passing strata are estimated.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::Serialize;

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::estimation::{estimate, Estimate, Method, SamplePlot, Stratum, VariancePolicy};

/// Plots per stratum required by the model-assisted estimator.
pub const MA_MIN_PLOTS: usize = 30;
/// Plots per map group required, in addition, by poststratification.
pub const PS_MIN_GROUP_PLOTS: usize = 20;
/// Plots per stratum for which the direct estimator has a variance.
pub const DIRECT_MIN_PLOTS: usize = 2;

/// The part of one design stratum inside a sub-population.
#[derive(Debug, Clone, PartialEq)]
pub struct SubStratum {
    pub stratum_id: u32,
    /// km².
    pub area: f64,
    /// Mapped area of each map label, km².
    pub mapped: BTreeMap<Domain, f64>,
}

impl SubStratum {
    /// Mapped area of `target`; forest-total sums the forest labels unless
    /// given explicitly.
    pub fn mapped_area(&self, target: Domain) -> Option<f64> {
        if let Some(&a) = self.mapped.get(&target) {
            return Some(a);
        }
        if target == Domain::ForestTotal {
            let forest: Vec<f64> = Domain::LABELS
                .iter()
                .filter(|d| d.is_forest())
                .filter_map(|d| self.mapped.get(d).copied())
                .collect();
            return (!forest.is_empty()).then(|| forest.iter().sum());
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubPopulation {
    pub id: String,
    pub strata: Vec<SubStratum>,
    pub plot_ids: BTreeSet<String>,
}

impl SubPopulation {
    /// Checks the sub-population against the design strata.
    pub fn validate(&self, strata: &[Stratum]) -> Result<()> {
        let mut seen = BTreeSet::new();
        for s in &self.strata {
            if !seen.insert(s.stratum_id) {
                return Err(Error::input(format!("sub-population {}: stratum {} listed twice", self.id, s.stratum_id)));
            }
            let parent = strata.iter().find(|p| p.id == s.stratum_id).ok_or_else(|| {
                Error::input(format!("sub-population {}: unknown stratum {}", self.id, s.stratum_id))
            })?;
            let tol = 1e-9 * parent.area.max(1.0);
            if !(s.area >= 0.0 && s.area <= parent.area + tol) {
                return Err(Error::input(format!(
                    "sub-population {}: stratum {} area {} km² outside [0, {}]",
                    self.id, s.stratum_id, s.area, parent.area
                )));
            }
            for (d, &a) in &s.mapped {
                if !(a >= 0.0 && a <= s.area + tol) {
                    return Err(Error::input(format!(
                        "sub-population {}: stratum {} mapped {d} area {a} km² outside [0, {}]",
                        self.id, s.stratum_id, s.area
                    )));
                }
            }
        }
        Ok(())
    }

    /// Plots belonging to this sub-population.
    pub fn plots<'a>(&self, plots: &'a [SamplePlot]) -> Vec<&'a SamplePlot> {
        plots.iter().filter(|p| self.plot_ids.contains(&p.id)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumVerdict {
    pub stratum_id: u32,
    pub n_plots: usize,
    /// Plots whose map prediction is in the target domain.
    pub n_in_domain: usize,
    pub n_out_of_domain: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GateVerdict {
    pub method: Method,
    pub target: Domain,
    pub strata: Vec<StratumVerdict>,
    /// Every stratum passes.
    pub all_pass: bool,
}

impl GateVerdict {
    pub fn any_pass(&self) -> bool {
        self.strata.iter().any(|s| s.pass)
    }

    pub fn passing(&self) -> impl Iterator<Item = u32> + '_ {
        self.strata.iter().filter(|s| s.pass).map(|s| s.stratum_id)
    }
}

/// Whether a stratum with these counts may be estimated by `method`.
pub fn stratum_passes(method: Method, n_plots: usize, n_in: usize, n_out: usize) -> bool {
    match method {
        Method::Direct => n_plots >= DIRECT_MIN_PLOTS,
        Method::ModelAssisted => n_plots >= MA_MIN_PLOTS,
        Method::Poststratified => n_plots >= MA_MIN_PLOTS && n_in >= PS_MIN_GROUP_PLOTS && n_out >= PS_MIN_GROUP_PLOTS,
    }
}

/// Per-stratum applicability of `method` in the sub-population. Plots
/// without a map prediction count towards the out-of-domain group.
pub fn gate_check(subpop: &SubPopulation, plots: &[SamplePlot], method: Method, target: Domain) -> GateVerdict {
    let members = subpop.plots(plots);
    let strata: Vec<StratumVerdict> = subpop
        .strata
        .iter()
        .map(|s| {
            let in_stratum: Vec<&&SamplePlot> = members.iter().filter(|p| p.stratum_id == s.stratum_id).collect();
            let n_in = in_stratum
                .iter()
                .filter(|p| p.predicted.is_some_and(|d| target.indicator(d) > 0.0))
                .count();
            let n = in_stratum.len();
            StratumVerdict {
                stratum_id: s.stratum_id,
                n_plots: n,
                n_in_domain: n_in,
                n_out_of_domain: n - n_in,
                pass: stratum_passes(method, n, n_in, n - n_in),
            }
        })
        .collect();
    GateVerdict {
        method,
        target,
        all_pass: !strata.is_empty() && strata.iter().all(|s| s.pass),
        strata,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StratumResult {
    pub stratum_id: u32,
    /// `None` when the stratum fails the gate.
    pub estimate: Option<Estimate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubpopEstimate {
    pub subpop_id: String,
    pub method: Method,
    pub target: Domain,
    pub verdict: GateVerdict,
    pub strata: Vec<StratumResult>,
    /// Estimate over the passing strata, `None` if no stratum passes.
    pub aggregate: Option<Estimate>,
    /// Some strata failed the gate, so `aggregate` covers only part of the
    /// sub-population.
    pub partial: bool,
}

/// Estimates `target` in the sub-population with `method`, stratum by
/// stratum and over all passing strata. Map-based estimates carry the
/// relative efficiency against the direct estimate on the same strata.
/// Failing strata get no numbers.
pub fn estimate_subpop(subpop: &SubPopulation, plots: &[SamplePlot], method: Method, target: Domain) -> Result<SubpopEstimate> {
    let verdict = gate_check(subpop, plots, method, target);
    let members: Vec<SamplePlot> = subpop.plots(plots).into_iter().cloned().collect();
    let run = |ids: &[u32]| -> Result<Estimate> {
        let strata: Vec<Stratum> = ids
            .iter()
            .map(|id| {
                let s = subpop.strata.iter().find(|s| s.stratum_id == *id).expect("verdict strata come from the sub-population");
                let n = members.iter().filter(|p| p.stratum_id == *id).count();
                Stratum::from_count(*id, s.area, n)
            })
            .collect();
        let chosen: Vec<SamplePlot> = members.iter().filter(|p| ids.contains(&p.stratum_id)).cloned().collect();
        let mut mapped = BTreeMap::new();
        if method != Method::Direct {
            for id in ids {
                let s = subpop.strata.iter().find(|s| s.stratum_id == *id).expect("verdict strata come from the sub-population");
                let a = s.mapped_area(target).ok_or_else(|| {
                    Error::input(format!("sub-population {}: no mapped {target} area for stratum {id}", subpop.id))
                })?;
                mapped.insert(*id, a);
            }
        }
        estimate(&chosen, &strata, method, target, &mapped, VariancePolicy::Strict)
    };
    let strata = verdict
        .strata
        .iter()
        .map(|v| {
            Ok(StratumResult {
                stratum_id: v.stratum_id,
                estimate: if v.pass { Some(run(&[v.stratum_id])?) } else { None },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let passing: Vec<u32> = verdict.passing().collect();
    let aggregate = if passing.is_empty() { None } else { Some(run(&passing)?) };
    Ok(SubpopEstimate {
        subpop_id: subpop.id.clone(),
        method,
        target,
        partial: !verdict.all_pass,
        verdict,
        strata,
        aggregate,
    })
}

/// [`estimate_subpop`] for many sub-populations in parallel; results keep
/// the input order.
pub fn estimate_all(subpops: &[SubPopulation], plots: &[SamplePlot], method: Method, target: Domain) -> Vec<Result<SubpopEstimate>> {
    subpops.par_iter().map(|s| estimate_subpop(s, plots, method, target)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::RelativeEfficiency;

    /// `n` plots in stratum 1, the first `n_in` predicted spruce; observed
    /// labels follow `observed`.
    fn plots(n: usize, n_in: usize, observed: impl Fn(usize) -> Domain) -> Vec<SamplePlot> {
        (0..n)
            .map(|i| {
                let pred = if i < n_in { Domain::Spruce } else { Domain::NonForest };
                SamplePlot::new(format!("p{i:03}"), 1, observed(i), 1.0).with_prediction(pred)
            })
            .collect()
    }

    fn subpop(plots: &[SamplePlot], area: f64, mapped_spruce: f64) -> SubPopulation {
        SubPopulation {
            id: "m1".into(),
            strata: vec![SubStratum {
                stratum_id: 1,
                area,
                mapped: BTreeMap::from([(Domain::Spruce, mapped_spruce), (Domain::NonForest, area - mapped_spruce)]),
            }],
            plot_ids: plots.iter().map(|p| p.id.clone()).collect(),
        }
    }

    #[test]
    fn gates() {
        let p = plots(29, 15, |_| Domain::Spruce);
        let v = gate_check(&subpop(&p, 29.0, 15.0), &p, Method::ModelAssisted, Domain::Spruce);
        assert!(!v.all_pass);
        let p = plots(50, 25, |_| Domain::Spruce);
        assert!(gate_check(&subpop(&p, 50.0, 25.0), &p, Method::Poststratified, Domain::Spruce).all_pass);
        let p = plots(420, 10, |_| Domain::Spruce);
        let s = subpop(&p, 420.0, 10.0);
        assert!(gate_check(&s, &p, Method::ModelAssisted, Domain::Spruce).all_pass);
        let v = gate_check(&s, &p, Method::Poststratified, Domain::Spruce);
        assert!(!v.all_pass);
        assert_eq!(v.strata[0].n_in_domain, 10);
    }

    #[test]
    fn failing_gate_fabricates_nothing() {
        let p = plots(12, 6, |i| if i % 2 == 0 { Domain::Spruce } else { Domain::NonForest });
        let e = estimate_subpop(&subpop(&p, 12.0, 6.0), &p, Method::ModelAssisted, Domain::Spruce).unwrap();
        assert!(e.partial);
        assert!(e.aggregate.is_none());
        assert!(e.strata[0].estimate.is_none());
    }

    #[test]
    fn perfect_local_map_has_infinite_re() {
        let p = plots(40, 20, |i| if i < 20 { Domain::Spruce } else { Domain::NonForest });
        let e = estimate_subpop(&subpop(&p, 40.0, 20.0), &p, Method::ModelAssisted, Domain::Spruce).unwrap();
        let a = e.aggregate.unwrap();
        assert_eq!(a.total, 20.0);
        assert_eq!(a.relative_efficiency, Some(RelativeEfficiency::Infinite));
        assert!(!e.partial);
    }

    #[test]
    fn anti_correlated_map_reports_re_below_one() {
        let p = plots(40, 20, |i| if (i < 20) != (i % 4 == 0) { Domain::NonForest } else { Domain::Spruce });
        let e = estimate_subpop(&subpop(&p, 40.0, 20.0), &p, Method::ModelAssisted, Domain::Spruce).unwrap();
        let re = e.aggregate.unwrap().relative_efficiency.unwrap().value().unwrap();
        assert!(re < 1.0, "{re}");
    }

    #[test]
    fn partial_aggregate_covers_passing_strata_only() {
        let mut p = plots(40, 20, |i| if i < 18 { Domain::Spruce } else { Domain::NonForest });
        p.extend((0..5).map(|i| SamplePlot::new(format!("q{i}"), 2, Domain::Spruce, 1.0).with_prediction(Domain::Spruce)));
        let mut s = subpop(&p, 40.0, 20.0);
        s.strata.push(SubStratum {
            stratum_id: 2,
            area: 5.0,
            mapped: BTreeMap::from([(Domain::Spruce, 5.0)]),
        });
        let e = estimate_subpop(&s, &p, Method::ModelAssisted, Domain::Spruce).unwrap();
        assert!(e.partial);
        assert_eq!(e.strata[0].estimate.as_ref().unwrap(), e.aggregate.as_ref().unwrap());
        assert!(e.strata[1].estimate.is_none());
    }

    #[test]
    fn validation() {
        let p = plots(4, 2, |_| Domain::Spruce);
        let s = subpop(&p, 4.0, 2.0);
        assert!(s.validate(&[Stratum::new(1, 10.0, 1.0)]).is_ok());
        assert!(s.validate(&[Stratum::new(1, 3.0, 1.0)]).is_err());
        assert!(s.validate(&[Stratum::new(2, 10.0, 1.0)]).is_err());
    }
}
