//! Cell-assignment policies: the combined max-probability / entropy-gain
//! assignments, the threshold variant for a single shared belief, the
//! baselines and the adaptive switch between them.

use serde::{Deserialize, Serialize};

use crate::belief::CellBelief;
use crate::grid::CellId;

use super::gain::check_p;
use super::select::greedy_select;
use super::PlanError;

/// Default Th^p.
pub const DEFAULT_THRESHOLD: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    OmegaGeneral,
    OmegaSingleEntry,
    Adaptive,
    MaxProb,
    MaxAvgProb,
    EntropyOnly,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 6] = [
        PolicyKind::OmegaGeneral,
        PolicyKind::OmegaSingleEntry,
        PolicyKind::Adaptive,
        PolicyKind::MaxProb,
        PolicyKind::MaxAvgProb,
        PolicyKind::EntropyOnly,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyKind::OmegaGeneral => "omega_general",
            PolicyKind::OmegaSingleEntry => "omega_single_entry",
            PolicyKind::Adaptive => "adaptive",
            PolicyKind::MaxProb => "max_prob",
            PolicyKind::MaxAvgProb => "max_avg_prob",
            PolicyKind::EntropyOnly => "entropy_only",
        }
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown policy `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    #[serde(rename = "kind")]
    pub policy: PolicyKind,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Planning detection probability; the team minimum when absent.
    #[serde(default)]
    pub detect_prob: Option<f64>,
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

impl PolicyConfig {
    pub fn new(policy: PolicyKind) -> Self {
        Self {
            policy,
            threshold: DEFAULT_THRESHOLD,
            detect_prob: None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(format!("threshold must lie in [0, 1], got {}", self.threshold));
        }
        if let Some(p) = self.detect_prob {
            if !(p > 0.0 && p <= 1.0) {
                return Err(format!("detect_prob must lie in (0, 1], got {p}"));
            }
        }
        Ok(())
    }

    /// Cells to search this tick, given one belief per undetected target.
    pub fn select(&self, beliefs: &[CellBelief], m: usize, p: f64) -> Result<Vec<CellId>, PlanError> {
        let p = self.detect_prob.unwrap_or(p);
        match self.policy {
            PolicyKind::OmegaGeneral => assign_general(beliefs, m, p),
            PolicyKind::OmegaSingleEntry => {
                assign_single_entry(&mean_belief(beliefs), m, p, self.threshold)
            }
            PolicyKind::Adaptive => policy_adaptive(beliefs, m, p),
            PolicyKind::MaxProb => Ok(policy_max_prob(beliefs, m)),
            PolicyKind::MaxAvgProb => Ok(policy_max_avg_prob(beliefs, m)),
            PolicyKind::EntropyOnly => policy_entropy_only(beliefs, m, p),
        }
    }
}

/// `(1/n) Σ_j P^j(c)`; the single shared belief when targets are pooled.
pub fn mean_belief(beliefs: &[CellBelief]) -> CellBelief {
    let n = beliefs.first().map_or(0, CellBelief::n_cells);
    let mut mass = vec![0.0; n];
    for cb in beliefs {
        for (m, x) in mass.iter_mut().zip(&cb.mass) {
            *m += x;
        }
    }
    let k = beliefs.len().max(1) as f64;
    mass.iter_mut().for_each(|m| *m /= k);
    CellBelief {
        t: beliefs.first().map_or(0, |b| b.t),
        mass,
    }
}

/// Indices of the `m` largest values, lowest index first among equals.
fn top_m(values: &[f64], m: usize) -> Vec<CellId> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx.truncate(m);
    idx.into_iter().map(CellId).collect()
}

/// Each undetected target's most likely cell first; remaining UAVs go to
/// the greedy entropy-gain cells conditioned on those searches. When there
/// are at least `m` such cells, the `m` with the highest per-target
/// probability are kept.
pub fn assign_general(beliefs: &[CellBelief], m: usize, p: f64) -> Result<Vec<CellId>, PlanError> {
    check_p(p)?;
    // (cell, best per-target probability of it being that target's argmax)
    let mut seeds: Vec<(CellId, f64)> = Vec::new();
    for cb in beliefs {
        let c = cb.argmax();
        let v = cb.get(c);
        match seeds.iter_mut().find(|s| s.0 == c) {
            Some(s) => s.1 = s.1.max(v),
            None => seeds.push((c, v)),
        }
    }
    seeds.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut out: Vec<CellId> = seeds.iter().map(|s| s.0).collect();
    if out.len() >= m {
        out.truncate(m);
        return Ok(out);
    }
    let extra = greedy_select(beliefs, m - out.len(), p, &out)?;
    out.extend(extra);
    Ok(out)
}

/// Threshold assignment over one shared belief: if some cell reaches
/// `threshold`, search the most likely such cell and fill the rest by
/// greedy gain; otherwise use greedy gain for all `m`.
pub fn assign_single_entry(
    shared: &CellBelief,
    m: usize,
    p: f64,
    threshold: f64,
) -> Result<Vec<CellId>, PlanError> {
    check_p(p)?;
    if m == 0 || shared.n_cells() == 0 {
        return Ok(Vec::new());
    }
    let beliefs = std::slice::from_ref(shared);
    let top = shared.argmax();
    if shared.get(top) >= threshold {
        let mut out = vec![top];
        out.extend(greedy_select(beliefs, m - 1, p, &[top])?);
        Ok(out)
    } else {
        greedy_select(beliefs, m, p, &[])
    }
}

/// Top-`m` cells of the shared (mean) belief.
pub fn policy_max_prob(beliefs: &[CellBelief], m: usize) -> Vec<CellId> {
    top_m(&mean_belief(beliefs).mass, m)
}

/// Top-`m` cells of `(1/n) Σ_j P^j(c)`.
pub fn policy_max_avg_prob(beliefs: &[CellBelief], m: usize) -> Vec<CellId> {
    top_m(&mean_belief(beliefs).mass, m)
}

/// Greedy team entropy gain with no forced cells.
pub fn policy_entropy_only(beliefs: &[CellBelief], m: usize, p: f64) -> Result<Vec<CellId>, PlanError> {
    greedy_select(beliefs, m, p, &[])
}

/// Pure entropy reduction while undetected targets outnumber UAVs,
/// otherwise [`assign_general`].
pub fn policy_adaptive(beliefs: &[CellBelief], m: usize, p: f64) -> Result<Vec<CellId>, PlanError> {
    if beliefs.len() > m {
        policy_entropy_only(beliefs, m, p)
    } else {
        assign_general(beliefs, m, p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cb(v: &[f64]) -> CellBelief {
        CellBelief::new(v.to_vec())
    }

    #[test]
    fn general_disjoint_argmax() {
        let b = vec![cb(&[0.7, 0.1, 0.1, 0.1]), cb(&[0.1, 0.1, 0.2, 0.6])];
        assert_eq!(assign_general(&b, 2, 0.8).unwrap(), vec![CellId(0), CellId(3)]);
    }

    #[test]
    fn general_more_targets_than_uavs() {
        let b = vec![
            cb(&[0.5, 0.2, 0.2, 0.1]),
            cb(&[0.1, 0.8, 0.05, 0.05]),
            cb(&[0.1, 0.1, 0.1, 0.7]),
        ];
        assert_eq!(assign_general(&b, 2, 0.8).unwrap(), vec![CellId(1), CellId(3)]);
    }

    #[test]
    fn single_entry_branches() {
        let b = cb(&[0.5, 0.3, 0.2]);
        assert_eq!(assign_single_entry(&b, 1, 0.7, 0.2).unwrap(), vec![CellId(0)]);

        let flat = cb(&[0.15, 0.15, 0.14, 0.14, 0.14, 0.14, 0.14]);
        assert_eq!(
            assign_single_entry(&flat, 2, 0.7, 0.2).unwrap(),
            greedy_select(std::slice::from_ref(&flat), 2, 0.7, &[]).unwrap()
        );

        let w = cb(&[0.9, 0.1]);
        assert_eq!(assign_single_entry(&w, 1, 0.9, 0.0).unwrap(), vec![CellId(0)]);
        assert_eq!(
            assign_single_entry(&w, 1, 0.9, 1.0 + 1e-9).unwrap(),
            policy_entropy_only(std::slice::from_ref(&w), 1, 0.9).unwrap()
        );
    }

    #[test]
    fn baselines_on_two_cell_example() {
        let b = vec![cb(&[0.9, 0.1])];
        assert_eq!(policy_max_prob(&b, 1), vec![CellId(0)]);
        assert_eq!(policy_entropy_only(&b, 1, 0.9).unwrap(), vec![CellId(1)]);
    }

    #[test]
    fn baselines_coincide_for_certain_detection() {
        let b = vec![cb(&[0.1, 0.25, 0.45, 0.2])];
        let want = vec![CellId(2)];
        assert_eq!(policy_max_prob(&b, 1), want);
        assert_eq!(policy_max_avg_prob(&b, 1), want);
        assert_eq!(policy_entropy_only(&b, 1, 1.0).unwrap(), want);
    }

    #[test]
    fn adaptive_switch() {
        let three: Vec<CellBelief> = (0..3).map(|i| {
            let mut v = vec![0.1; 6];
            v[i * 2] = 0.5;
            cb(&v)
        }).collect();
        assert_eq!(
            policy_adaptive(&three, 1, 0.7).unwrap(),
            policy_entropy_only(&three, 1, 0.7).unwrap()
        );
        assert_eq!(
            policy_adaptive(&three, 3, 0.7).unwrap(),
            assign_general(&three, 3, 0.7).unwrap()
        );
        assert_eq!(
            policy_adaptive(&three[..2], 3, 0.7).unwrap(),
            assign_general(&three[..2], 3, 0.7).unwrap()
        );
    }

    #[test]
    fn config_roundtrip_from_toml() {
        let cfg: PolicyConfig = toml::from_str("kind = \"omega_single_entry\"\n").unwrap();
        assert_eq!(cfg.threshold, 0.2);
        assert!(cfg.validate().is_ok());
        let bad = PolicyConfig {
            threshold: 1.5,
            ..cfg
        };
        assert!(bad.validate().is_err());
        assert_eq!("adaptive".parse::<PolicyKind>(), Ok(PolicyKind::Adaptive));
    }
}
