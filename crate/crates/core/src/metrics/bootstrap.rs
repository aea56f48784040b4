//! Paired case-level bootstrap.
//!
//! Each replicate resamples case ids with replacement and evaluates the
//! metric on both arms over the same resample. The replicate-wise
//! differences feed a two-sided one-sample t-test; a percentile p-value is
//! reported next to it.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::Rng;

use super::CaseResult;
use crate::error::{Error, Result};
use crate::rng::stream;
use crate::stats::{mean, one_sample_t_test, std_dev};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BootstrapConfig {
    pub replications: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replications: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ArmSummary {
    pub mean: f64,
    pub std: f64,
}

impl ArmSummary {
    fn of(xs: &[f64]) -> Self {
        Self {
            mean: mean(xs),
            std: std_dev(xs),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BootstrapComparison {
    pub arm_a: ArmSummary,
    pub arm_b: ArmSummary,
    /// Statistics of `metric(b) - metric(a)` over replicates.
    pub difference: ArmSummary,
    /// Two-sided t-test on the replicate differences.
    pub p_value: f64,
    /// `2 · min(P(d ≤ 0), P(d ≥ 0))`, capped at 1.
    pub p_value_percentile: f64,
    pub replications: usize,
}

/// Attempts per replicate before a metric failure is reported.
const MAX_REDRAWS: usize = 100;

/// Reorder `b` to follow `a`'s case ids; both must hold the same unique ids.
fn pair_arms<'a>(a: &'a [CaseResult], b: &'a [CaseResult]) -> Result<Vec<(&'a CaseResult, &'a CaseResult)>> {
    let mut by_id: BTreeMap<&str, &CaseResult> = BTreeMap::new();
    for c in b {
        if by_id.insert(&c.case_id, c).is_some() {
            return Err(Error::CaseMismatch(alloc::format!("duplicate case id `{}`", c.case_id)));
        }
    }
    if a.len() != b.len() {
        return Err(Error::CaseMismatch(alloc::format!("{} cases vs {}", a.len(), b.len())));
    }
    let mut seen = BTreeMap::new();
    a.iter()
        .map(|ca| {
            if seen.insert(ca.case_id.as_str(), ()).is_some() {
                return Err(Error::CaseMismatch(alloc::format!(
                    "duplicate case id `{}`",
                    ca.case_id
                )));
            }
            by_id
                .get(ca.case_id.as_str())
                .map(|&cb| (ca, cb))
                .ok_or_else(|| Error::CaseMismatch(alloc::format!("case `{}` missing from second arm", ca.case_id)))
        })
        .collect()
}

fn evaluate<F>(pairs: &[(&CaseResult, &CaseResult)], idx: &[usize], metric: &F) -> Result<(f64, f64)>
where
    F: Fn(&[&CaseResult]) -> Result<f64>,
{
    let a: Vec<&CaseResult> = idx.iter().map(|&i| pairs[i].0).collect();
    let b: Vec<&CaseResult> = idx.iter().map(|&i| pairs[i].1).collect();
    Ok((metric(&a)?, metric(&b)?))
}

fn summarize(values: Vec<(f64, f64)>) -> BootstrapComparison {
    let a: Vec<f64> = values.iter().map(|v| v.0).collect();
    let b: Vec<f64> = values.iter().map(|v| v.1).collect();
    let d: Vec<f64> = values.iter().map(|v| v.1 - v.0).collect();
    let n = d.len() as f64;
    let le = d.iter().filter(|&&x| x <= 0.0).count() as f64 / n;
    let ge = d.iter().filter(|&&x| x >= 0.0).count() as f64 / n;
    BootstrapComparison {
        arm_a: ArmSummary::of(&a),
        arm_b: ArmSummary::of(&b),
        difference: ArmSummary::of(&d),
        p_value: one_sample_t_test(&d),
        p_value_percentile: (2.0 * le.min(ge)).min(1.0),
        replications: values.len(),
    }
}

/// Paired bootstrap with `config.replications` random resamples.
///
/// Replicate `r` draws from its own stream of `config.seed`. When the metric
/// is undefined on a resample (for instance a single-class draw) the
/// replicate is redrawn from the same stream.
pub fn bootstrap_compare<F>(
    cases_a: &[CaseResult],
    cases_b: &[CaseResult],
    metric: F,
    config: BootstrapConfig,
) -> Result<BootstrapComparison>
where
    F: Fn(&[&CaseResult]) -> Result<f64>,
{
    if config.replications == 0 {
        return Err(Error::param("replications", "must be ≥ 1"));
    }
    let pairs = pair_arms(cases_a, cases_b)?;
    if pairs.is_empty() {
        return Err(Error::Undefined("no cases to resample".into()));
    }
    let n = pairs.len();
    let mut values = Vec::with_capacity(config.replications);
    for r in 0..config.replications {
        let mut rng = stream(config.seed, r as u64);
        let mut attempt = 0;
        loop {
            let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            match evaluate(&pairs, &idx, &metric) {
                Ok(v) => {
                    values.push(v);
                    break;
                }
                Err(e) if attempt + 1 >= MAX_REDRAWS => return Err(e),
                Err(_) => attempt += 1,
            }
        }
    }
    Ok(summarize(values))
}

/// Paired bootstrap over caller-supplied resamples (indices into `cases_a`
/// order). Metric failures propagate.
pub fn bootstrap_compare_with<F, I>(
    cases_a: &[CaseResult],
    cases_b: &[CaseResult],
    metric: F,
    resamples: I,
) -> Result<BootstrapComparison>
where
    F: Fn(&[&CaseResult]) -> Result<f64>,
    I: IntoIterator<Item = Vec<usize>>,
{
    let pairs = pair_arms(cases_a, cases_b)?;
    let mut values = Vec::new();
    for idx in resamples {
        if let Some(&bad) = idx.iter().find(|&&i| i >= pairs.len()) {
            return Err(Error::param("resamples", alloc::format!("index {bad} out of range")));
        }
        values.push(evaluate(&pairs, &idx, &metric)?);
    }
    if values.is_empty() {
        return Err(Error::param("resamples", "at least one resample is required"));
    }
    Ok(summarize(values))
}

/// Mean and standard deviation of a metric over bootstrap resamples of one arm.
pub fn bootstrap_summary<F>(cases: &[CaseResult], metric: F, config: BootstrapConfig) -> Result<ArmSummary>
where
    F: Fn(&[&CaseResult]) -> Result<f64>,
{
    bootstrap_compare(cases, cases, metric, config).map(|c| c.arm_a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn case(id: &str, score: f64) -> CaseResult {
        let mut c = CaseResult::new(id, score > 0.5, vec![], vec![]).unwrap();
        c.patient_score = score;
        c
    }

    fn mean_score(cases: &[&CaseResult]) -> Result<f64> {
        Ok(cases.iter().map(|c| c.patient_score).sum::<f64>() / cases.len() as f64)
    }

    #[test]
    fn identical_arms_give_p_one() {
        let a: Vec<CaseResult> = (0..20).map(|i| case(&alloc::format!("{i}"), i as f64 / 20.0)).collect();
        let r = bootstrap_compare(
            &a,
            &a,
            mean_score,
            BootstrapConfig {
                replications: 200,
                seed: 3,
            },
        )
        .unwrap();
        assert_eq!(r.difference.mean, 0.0);
        assert_eq!(r.difference.std, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.p_value_percentile, 1.0);
    }

    #[test]
    fn arms_are_paired_by_id() {
        let a = vec![case("x", 0.1), case("y", 0.9)];
        let b = vec![case("y", 0.9), case("x", 0.1)];
        let r = bootstrap_compare(
            &a,
            &b,
            mean_score,
            BootstrapConfig {
                replications: 50,
                seed: 1,
            },
        )
        .unwrap();
        assert_eq!(r.difference.std, 0.0);
        let c = vec![case("y", 0.9), case("z", 0.1)];
        assert!(matches!(
            bootstrap_compare(&a, &c, mean_score, BootstrapConfig::default()),
            Err(Error::CaseMismatch(_))
        ));
        let dup = vec![case("y", 0.9), case("y", 0.1)];
        assert!(bootstrap_compare(&a, &dup, mean_score, BootstrapConfig::default()).is_err());
    }

    #[test]
    fn full_sample_resample_reproduces_point_estimate() {
        let a: Vec<CaseResult> = (0..7).map(|i| case(&alloc::format!("{i}"), 0.1 * i as f64)).collect();
        let b: Vec<CaseResult> = (0..7).map(|i| case(&alloc::format!("{i}"), 0.05 * i as f64)).collect();
        let r = bootstrap_compare_with(&a, &b, mean_score, [(0..7).collect()]).unwrap();
        let refs_a: Vec<&CaseResult> = a.iter().collect();
        let refs_b: Vec<&CaseResult> = b.iter().collect();
        assert_eq!(r.arm_a.mean, mean_score(&refs_a).unwrap());
        assert_eq!(r.arm_b.mean, mean_score(&refs_b).unwrap());
        assert_eq!(r.replications, 1);
    }

    #[test]
    fn persistent_metric_failure_is_reported() {
        let a = vec![case("x", 0.1)];
        let r = bootstrap_compare(
            &a,
            &a,
            |_| Err(Error::Undefined("nope".into())),
            BootstrapConfig::default(),
        );
        assert!(matches!(r, Err(Error::Undefined(_))));
    }
}
