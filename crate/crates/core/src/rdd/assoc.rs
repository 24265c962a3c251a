use serde::{Deserialize, Serialize};

use super::DiscontinuityEstimate;

/// A KPI discontinuity paired with a nearby metric discontinuity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationEvidence {
    pub kpi_disc: DiscontinuityEstimate,
    pub metric_disc: DiscontinuityEstimate,
    /// KPI cut minus metric cut, in frames.
    pub lag: i64,
    /// `min(|t_kpi|, |t_metric|)`.
    #[serde(with = "crate::json::float")]
    pub score: f64,
}

/// All KPI/metric pairs whose cuts lie within `delta` frames, strongest first.
pub fn associate(
    kpi: &[DiscontinuityEstimate],
    metric: &[DiscontinuityEstimate],
    delta: usize,
) -> Vec<AssociationEvidence> {
    let mut out = Vec::new();
    for m in metric {
        for k in kpi {
            let lag = k.cutpoint as i64 - m.cutpoint as i64;
            if lag.unsigned_abs() as usize <= delta {
                out.push(AssociationEvidence {
                    kpi_disc: k.clone(),
                    metric_disc: m.clone(),
                    lag,
                    score: k.t_stat.abs().min(m.t_stat.abs()),
                });
            }
        }
    }
    out.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.metric_disc.cutpoint.cmp(&b.metric_disc.cutpoint))
            .then(a.kpi_disc.cutpoint.cmp(&b.kpi_disc.cutpoint))
            .then(a.kpi_disc.series_name.cmp(&b.kpi_disc.series_name))
    });
    out
}
