//! Rule-of-thumb advisory: which acquisition geometry suits which goal.
//!
//! Each goal is decided by one fixed rule over statistics measured in the
//! current run. Thresholds come from the config; nothing else varies.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::CoverageRow;
use crate::sampling::Geometry;
use crate::study::GeometrySummary;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdviseThresholds {
    /// 2D/serial ratio of median `MAE(alpha)` below which 2D suffices.
    pub alpha_ratio: f64,
    /// 2D/serial ratio of median `MAE(B)` at or above which serial is needed.
    pub b_ratio: f64,
    /// Median enrichment-z IQR across sections above which 2D is unstable.
    pub enrichment_iqr: f64,
    /// Largest acceptable lost-cell fraction when picking a serial spacing.
    pub max_lc_fraction: f64,
}

impl Default for AdviseThresholds {
    fn default() -> Self {
        Self {
            alpha_ratio: 2.0,
            b_ratio: 1.25,
            enrichment_iqr: 1.0,
            max_lc_fraction: 0.5,
        }
    }
}

impl AdviseThresholds {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !(ok(self.alpha_ratio) && ok(self.b_ratio) && ok(self.enrichment_iqr)) {
            return Err(Error::Config("advise thresholds must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.max_lc_fraction) {
            return Err(Error::Config(format!(
                "advise.max_lc_fraction must lie in [0, 1], got {}",
                self.max_lc_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Goal {
    GlobalComposition,
    LocalInteractions,
    Structures,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Recommended,
    InsufficientEvidence,
}

/// The fixed set of recommendations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Advice {
    #[serde(rename = "2D sufficient")]
    TwoDSufficient,
    #[serde(rename = "serial preferred")]
    SerialPreferred,
    #[serde(rename = "2D acceptable")]
    TwoDAcceptable,
    #[serde(rename = "serial + reconstruction")]
    SerialWithReconstruction,
}

impl Advice {
    pub fn geometry(self) -> Geometry {
        match self {
            Advice::TwoDSufficient | Advice::TwoDAcceptable => Geometry::Independent2D,
            Advice::SerialPreferred | Advice::SerialWithReconstruction => Geometry::Serial3D,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub goal: Goal,
    pub status: Status,
    pub advice: Option<Advice>,
    pub geometry: Option<Geometry>,
    pub rationale: String,
    pub statistics: BTreeMap<String, f64>,
}

impl Recommendation {
    fn insufficient(goal: Goal, why: &str) -> Self {
        Self {
            goal,
            status: Status::InsufficientEvidence,
            advice: None,
            geometry: None,
            rationale: format!("insufficient evidence: {why}"),
            statistics: BTreeMap::new(),
        }
    }

    fn recommend(goal: Goal, advice: Advice, rationale: String, statistics: BTreeMap<String, f64>) -> Self {
        Self {
            goal,
            status: Status::Recommended,
            advice: Some(advice),
            geometry: Some(advice.geometry()),
            rationale,
            statistics,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvisoryReport {
    pub thresholds: AdviseThresholds,
    pub recommendations: Vec<Recommendation>,
}

impl AdvisoryReport {
    pub fn get(&self, goal: Goal) -> &Recommendation {
        self.recommendations
            .iter()
            .find(|r| r.goal == goal)
            .expect("every goal has a recommendation")
    }
}

/// Measurements available to the advisory; any part may be missing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummaries {
    pub recovery: Vec<GeometrySummary>,
    /// Median over partners of the across-section z-score IQR.
    pub enrichment_iqr: Option<f64>,
    /// Pooled coverage rows (one per spacing).
    pub coverage: Vec<CoverageRow>,
}

fn summary(rs: &[GeometrySummary], g: Geometry) -> Option<&GeometrySummary> {
    rs.iter().find(|s| s.geometry == g)
}

fn ratio(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else if a > 0.0 {
        f64::INFINITY
    } else {
        1.0
    }
}

fn composition(runs: &RunSummaries, th: &AdviseThresholds) -> Recommendation {
    let goal = Goal::GlobalComposition;
    let (Some(two), Some(ser)) = (
        summary(&runs.recovery, Geometry::Independent2D),
        summary(&runs.recovery, Geometry::Serial3D),
    ) else {
        return Recommendation::insufficient(goal, "needs recovery runs for both 2D and serial geometries");
    };
    let r = ratio(two.median_mae_alpha, ser.median_mae_alpha);
    let stats = BTreeMap::from([
        ("median_mae_alpha_2d".to_string(), two.median_mae_alpha),
        ("median_mae_alpha_serial".to_string(), ser.median_mae_alpha),
        ("mae_alpha_ratio".to_string(), r),
    ]);
    if r < th.alpha_ratio {
        Recommendation::recommend(
            goal,
            Advice::TwoDSufficient,
            format!(
                "2D/serial MAE(alpha) ratio {r:.3} is below {}; independent sections recover composition as well as a serial stack of the same budget and cover more tissue",
                th.alpha_ratio
            ),
            stats,
        )
    } else {
        Recommendation::recommend(
            goal,
            Advice::SerialPreferred,
            format!("2D/serial MAE(alpha) ratio {r:.3} reaches {}", th.alpha_ratio),
            stats,
        )
    }
}

fn interactions(runs: &RunSummaries, th: &AdviseThresholds) -> Recommendation {
    let goal = Goal::LocalInteractions;
    let pair = summary(&runs.recovery, Geometry::Independent2D).zip(summary(&runs.recovery, Geometry::Serial3D));
    if pair.is_none() && runs.enrichment_iqr.is_none() {
        return Recommendation::insufficient(goal, "needs recovery runs for 2D and serial or a stability run");
    }
    let mut stats = BTreeMap::new();
    let mut reasons = Vec::new();
    let mut unstable = false;
    if let Some((two, ser)) = pair {
        let r = ratio(two.median_mae_b, ser.median_mae_b);
        stats.insert("median_mae_b_2d".to_string(), two.median_mae_b);
        stats.insert("median_mae_b_serial".to_string(), ser.median_mae_b);
        stats.insert("mae_b_ratio".to_string(), r);
        if r >= th.b_ratio {
            unstable = true;
            reasons.push(format!("2D/serial MAE(B) ratio {r:.3} reaches {}", th.b_ratio));
        } else {
            reasons.push(format!("2D/serial MAE(B) ratio {r:.3} is below {}", th.b_ratio));
        }
    }
    if let Some(iqr) = runs.enrichment_iqr {
        stats.insert("enrichment_iqr".to_string(), iqr);
        if iqr > th.enrichment_iqr {
            unstable = true;
            reasons.push(format!("enrichment z varies across sections (median IQR {iqr:.3} > {})", th.enrichment_iqr));
        } else {
            reasons.push(format!("enrichment z is stable across sections (median IQR {iqr:.3})"));
        }
    }
    let advice = if unstable {
        Advice::SerialWithReconstruction
    } else {
        Advice::TwoDAcceptable
    };
    Recommendation::recommend(goal, advice, reasons.join("; "), stats)
}

fn structures(runs: &RunSummaries, th: &AdviseThresholds) -> Recommendation {
    let goal = Goal::Structures;
    let mut pooled: Vec<&CoverageRow> = runs.coverage.iter().filter(|c| c.offset.is_none()).collect();
    if pooled.is_empty() {
        return Recommendation::insufficient(goal, "needs a coverage evaluation over section spacings");
    }
    pooled.sort_by(|a, b| a.delta_z.total_cmp(&b.delta_z));
    let chosen = pooled
        .iter()
        .rev()
        .find(|c| c.lc_frac <= th.max_lc_fraction)
        .copied()
        .unwrap_or(pooled[0]);
    let stats = BTreeMap::from([
        ("delta_z".to_string(), chosen.delta_z),
        ("sc_frac".to_string(), chosen.sc_frac),
        ("lc_frac".to_string(), chosen.lc_frac),
        ("captured_frac".to_string(), chosen.captured_frac),
        ("loc_mean".to_string(), chosen.loc_mean),
    ]);
    Recommendation::recommend(
        goal,
        Advice::SerialWithReconstruction,
        format!(
            "continuous structures need cross-section linking; the widest spacing keeping lost cells at or below {} is {} (LC fraction {:.3})",
            th.max_lc_fraction, chosen.delta_z, chosen.lc_frac
        ),
        stats,
    )
}

/// Applies the rule set to whatever run summaries are available.
pub fn advise(runs: &RunSummaries, thresholds: &AdviseThresholds) -> AdvisoryReport {
    AdvisoryReport {
        thresholds: *thresholds,
        recommendations: vec![
            composition(runs, thresholds),
            interactions(runs, thresholds),
            structures(runs, thresholds),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gs(g: Geometry, a: f64, b: f64) -> GeometrySummary {
        GeometrySummary {
            geometry: g,
            trials: 5,
            median_mae_alpha: a,
            median_mae_b: b,
            iqr_mae_b: 0.0,
            var_mae_b: 0.0,
            mean_rmse_alpha: a,
            mean_rmse_b: b,
        }
    }

    #[test]
    fn empty_inputs_are_insufficient() {
        let r = advise(&RunSummaries::default(), &AdviseThresholds::default());
        assert_eq!(r.recommendations.len(), 3);
        for rec in &r.recommendations {
            assert_eq!(rec.status, Status::InsufficientEvidence);
            assert!(rec.advice.is_none());
        }
    }

    #[test]
    fn composition_rule() {
        let th = AdviseThresholds::default();
        let runs = RunSummaries {
            recovery: vec![gs(Geometry::Independent2D, 0.2, 0.04), gs(Geometry::Serial3D, 0.18, 0.01)],
            ..Default::default()
        };
        let r = advise(&runs, &th);
        assert_eq!(r.get(Goal::GlobalComposition).advice, Some(Advice::TwoDSufficient));
        assert_eq!(r.get(Goal::LocalInteractions).advice, Some(Advice::SerialWithReconstruction));
        assert_eq!(r.get(Goal::Structures).status, Status::InsufficientEvidence);

        let runs = RunSummaries {
            recovery: vec![gs(Geometry::Independent2D, 0.5, 0.01), gs(Geometry::Serial3D, 0.2, 0.01)],
            ..Default::default()
        };
        let r = advise(&runs, &th);
        assert_eq!(r.get(Goal::GlobalComposition).advice, Some(Advice::SerialPreferred));
        assert_eq!(r.get(Goal::LocalInteractions).advice, Some(Advice::TwoDAcceptable));
    }

    #[test]
    fn large_enrichment_spread_needs_serial() {
        let th = AdviseThresholds::default();
        let r = advise(
            &RunSummaries {
                enrichment_iqr: Some(2.5),
                ..Default::default()
            },
            &th,
        );
        let rec = r.get(Goal::LocalInteractions);
        assert_eq!(rec.advice, Some(Advice::SerialWithReconstruction));
        assert_eq!(rec.geometry, Some(Geometry::Serial3D));
        assert_eq!(rec.statistics["enrichment_iqr"], 2.5);
        assert_eq!(r.get(Goal::GlobalComposition).status, Status::InsufficientEvidence);
    }

    #[test]
    fn structure_spacing_choice() {
        let row = |dz: f64, lc: f64| CoverageRow {
            delta_z: dz,
            offset: None,
            sc_frac: 1.0 - lc,
            lc_frac: lc,
            captured_frac: 1.0,
            missed_frac: 0.0,
            loc_mean: 0.0,
            loc_std: 0.0,
        };
        let runs = RunSummaries {
            coverage: vec![row(2.0, 0.1), row(4.0, 0.3), row(6.0, 0.6)],
            ..Default::default()
        };
        let r = advise(&runs, &AdviseThresholds::default());
        assert_eq!(r.get(Goal::Structures).statistics["delta_z"], 4.0);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"serial + reconstruction\""));
    }
}
