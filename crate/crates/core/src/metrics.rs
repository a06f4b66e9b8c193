//! Regret and reward curves, cross-run aggregation and rank tables.
//!
//! Regret is accumulated from noiseless means, `r* - f(a_t)`, which has the
//! same expectation as the realized-reward form and lower variance; the
//! realized form is available through [`cumulative_regret_realized`].
//!
//! Offline runs end at a random accepted count `T`, so aggregation is done per
//! step over the runs that reached it (the survivor count `n_t`).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::replay::{format_f64, Trace};
use crate::reward_models::RewardModel;

/// Two-sided 95% normal quantile used for confidence bands.
pub const BAND_Z: f64 = 1.96;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegretCurve(pub Vec<f64>);

impl RegretCurve {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn last(&self) -> Option<f64> {
        self.0.last().copied()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

fn running_sum(increments: impl Iterator<Item = f64>) -> Vec<f64> {
    increments
        .scan(0.0, |acc, x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

/// Cumulative `r* - f(a_t)` over the trace's accepted steps.
pub fn cumulative_regret(trace: &Trace, model: &RewardModel) -> RegretCurve {
    let (_, r_star) = model.optimum();
    RegretCurve(running_sum(trace.records().iter().map(|r| r_star - model.mean_reward(r.action))))
}

/// Cumulative `r* - r_t` with the observed (noisy) rewards.
pub fn cumulative_regret_realized(trace: &Trace, model: &RewardModel) -> RegretCurve {
    let (_, r_star) = model.optimum();
    RegretCurve(running_sum(trace.records().iter().map(|r| r_star - r.reward)))
}

/// Running sum of the recorded rewards.
pub fn cumulative_reward(trace: &Trace) -> Vec<f64> {
    running_sum(trace.records().iter().map(|r| r.reward))
}

/// Per-step mean, standard error and survivor count over a set of curves.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunAggregate {
    pub mean: Vec<f64>,
    /// `None` where fewer than two curves reach the step.
    pub se: Vec<Option<f64>>,
    pub n: Vec<usize>,
    pub runs: usize,
}

impl RunAggregate {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Survivor count at 1-based step `t`.
    pub fn survivors(&self, t: usize) -> usize {
        t.checked_sub(1).and_then(|i| self.n.get(i)).copied().unwrap_or(0)
    }

    /// `(mean, se)` at 1-based step `t`, when at least two runs reach it.
    pub fn at(&self, t: usize) -> Option<(f64, f64)> {
        let i = t.checked_sub(1)?;
        Some((*self.mean.get(i)?, (*self.se.get(i)?)?))
    }

    /// 95% band `mean ± 1.96 se` at step `t`.
    pub fn band(&self, t: usize) -> Option<(f64, f64)> {
        self.at(t).map(|(m, se)| (m - BAND_Z * se, m + BAND_Z * se))
    }

    /// Writes `t,mean,se,n`; `se` is left empty where undefined.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "t,mean,se,n")?;
        for i in 0..self.mean.len() {
            let se = self.se[i].map(format_f64).unwrap_or_default();
            writeln!(w, "{},{},{},{}", i + 1, format_f64(self.mean[i]), se, self.n[i])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Streaming per-step mean/variance (Welford). Curves are folded in the
/// order they are pushed, so a fixed push order gives bit-identical output.
#[derive(Debug, Clone, Default)]
pub struct RunAccumulator {
    mean: Vec<f64>,
    m2: Vec<f64>,
    n: Vec<usize>,
    runs: usize,
}

impl RunAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, curve: &[f64]) {
        self.runs += 1;
        if curve.len() > self.mean.len() {
            self.mean.resize(curve.len(), 0.0);
            self.m2.resize(curve.len(), 0.0);
            self.n.resize(curve.len(), 0);
        }
        for (i, &v) in curve.iter().enumerate() {
            self.n[i] += 1;
            let d = v - self.mean[i];
            self.mean[i] += d / self.n[i] as f64;
            self.m2[i] += d * (v - self.mean[i]);
        }
    }

    /// Counts a run that produced no curve at all (e.g. zero accepted events).
    pub fn push_empty(&mut self) {
        self.runs += 1;
    }

    pub fn runs(&self) -> usize {
        self.runs
    }

    pub fn finish(self) -> RunAggregate {
        let se = self
            .m2
            .iter()
            .zip(&self.n)
            .map(|(&m2, &k)| (k >= 2).then(|| (m2.max(0.0) / (k - 1) as f64).sqrt() / (k as f64).sqrt()))
            .collect();
        RunAggregate { mean: self.mean, se, n: self.n, runs: self.runs }
    }
}

/// Aggregates curves of possibly different lengths step by step.
pub fn aggregate_runs<C: AsRef<[f64]>>(curves: &[C]) -> RunAggregate {
    let mut acc = RunAccumulator::new();
    for c in curves {
        acc.push(c.as_ref());
    }
    acc.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Lower is better.
    Regret,
    /// Higher is better.
    Reward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub policy: String,
    /// Mean at `t_eval`; `None` reports "n/a".
    pub value: Option<f64>,
    pub rank: Option<usize>,
    pub tie_group: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    pub t_eval: usize,
    pub metric: Metric,
    /// Ranked entries first (best first), then "n/a" entries in input order.
    pub entries: Vec<RankEntry>,
}

impl RankTable {
    pub fn entry(&self, policy: &str) -> Option<&RankEntry> {
        self.entries.iter().find(|e| e.policy == policy)
    }

    pub fn rank_of(&self, policy: &str) -> Option<usize> {
        self.entry(policy).and_then(|e| e.rank)
    }

    pub fn group_of(&self, policy: &str) -> Option<usize> {
        self.entry(policy).and_then(|e| e.tie_group)
    }

    pub fn is_na(&self, policy: &str) -> bool {
        self.entry(policy).is_none_or(|e| e.rank.is_none())
    }

    pub fn all_na(&self) -> bool {
        self.entries.iter().all(|e| e.rank.is_none())
    }

    /// `a` is in a strictly better tie group than `b`.
    pub fn strictly_better(&self, a: &str, b: &str) -> bool {
        matches!((self.group_of(a), self.group_of(b)), (Some(x), Some(y)) if x < y)
    }

    pub fn tied(&self, a: &str, b: &str) -> bool {
        matches!((self.group_of(a), self.group_of(b)), (Some(x), Some(y)) if x == y)
    }

    /// Writes `policy,metric_value,rank,tie_group`, with `n/a` for unranked rows.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "policy,metric_value,rank,tie_group")?;
        for e in &self.entries {
            match (e.value, e.rank, e.tie_group) {
                (Some(v), Some(r), Some(g)) => writeln!(w, "{},{},{},{}", e.policy, format_f64(v), r, g)?,
                _ => writeln!(w, "{},n/a,n/a,n/a", e.policy)?,
            }
        }
        w.flush()?;
        Ok(())
    }
}

impl std::fmt::Display for RankTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for e in &self.entries {
            match (e.value, e.rank) {
                (Some(v), Some(r)) => writeln!(f, "  {r}  {:<6} {v:>12.3}  (group {})", e.policy, e.tie_group.unwrap_or(0))?,
                _ => writeln!(f, "  -  {:<6}          n/a", e.policy)?,
            }
        }
        Ok(())
    }
}

/// Ranks policies at step `t_eval`.
///
/// Policies with fewer than two runs reaching `t_eval` are "n/a". The rest are
/// sorted best first; consecutive policies whose 95% bands overlap share a tie
/// group (single linkage). Rank is one plus the number of policies in strictly
/// better groups.
pub fn rank_at<S: AsRef<str>>(aggregates: &[(S, RunAggregate)], t_eval: usize, metric: Metric) -> RankTable {
    let mut ranked: Vec<(&str, f64, (f64, f64))> = Vec::new();
    let mut na = Vec::new();
    for (name, agg) in aggregates {
        match (agg.at(t_eval), agg.band(t_eval)) {
            (Some((m, _)), Some(band)) => ranked.push((name.as_ref(), m, band)),
            _ => na.push(name.as_ref()),
        }
    }
    ranked.sort_by(|a, b| {
        let ord = match metric {
            Metric::Regret => a.1.total_cmp(&b.1),
            Metric::Reward => b.1.total_cmp(&a.1),
        };
        ord.then_with(|| a.0.cmp(b.0))
    });

    let mut entries = Vec::with_capacity(aggregates.len());
    let mut group = 0;
    let mut rank = 0;
    let mut prev_band: Option<(f64, f64)> = None;
    for (i, &(name, value, band)) in ranked.iter().enumerate() {
        let overlaps = prev_band.is_some_and(|(lo, hi)| band.0 <= hi && lo <= band.1);
        if !overlaps {
            group += 1;
            rank = i + 1;
        }
        prev_band = Some(band);
        entries.push(RankEntry { policy: name.to_string(), value: Some(value), rank: Some(rank), tie_group: Some(group) });
    }
    entries.extend(na.into_iter().map(|name| RankEntry { policy: name.to_string(), value: None, rank: None, tie_group: None }));
    RankTable { t_eval, metric, entries }
}

/// Ordinary least squares of `y` on `x`; returns `(slope, intercept, r²)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, my - slope * mx, r2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policies::{FixedAction, Policy, PolicySpec};
    use crate::reward_models::{ActionRange, ModelFamily, ParabolaModel};
    use crate::rng::SimRng;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    fn parabola(peak: f64) -> RewardModel {
        ParabolaModel::new(peak, 1.0, 0.0, ActionRange::unit()).unwrap().into()
    }

    fn trace_of(actions: &[f64], rewards: &[f64]) -> Trace {
        let mut t = Trace::new();
        for (i, (&a, &r)) in actions.iter().zip(rewards).enumerate() {
            t.push(i as u64, a, r);
        }
        t
    }

    #[test]
    fn regret_examples() {
        let m = parabola(0.5);
        let c = cumulative_regret(&trace_of(&[0.5; 5], &[0.0; 5]), &m);
        assert_eq!(c.values(), &[0.0; 5]);
        let c = cumulative_regret(&trace_of(&[0.3], &[0.0]), &m);
        assert_abs_diff_eq!(c.values()[0], 0.04, epsilon = 1e-15);
        let c = cumulative_regret_realized(&trace_of(&[0.3, 0.3], &[-0.1, 0.05]), &m);
        assert_abs_diff_eq!(c.values()[1], 0.05, epsilon = 1e-15);
    }

    #[test]
    fn reward_examples() {
        assert!(cumulative_reward(&Trace::new()).is_empty());
        let t = trace_of(&[0.1, 0.2, 0.3], &[1.0, 0.0, 2.0]);
        let c = cumulative_reward(&t);
        assert_eq!(c, vec![1.0, 1.0, 3.0]);
        assert_eq!(*c.last().unwrap(), t.cumulative_reward());
    }

    #[test]
    fn aggregate_examples() {
        let a = aggregate_runs(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]]);
        assert_eq!(a.mean, vec![1.0, 2.0, 3.0]);
        assert_eq!(a.se, vec![Some(0.0); 3]);

        let a = aggregate_runs(&[vec![1.0; 5], vec![2.0; 10]]);
        assert_eq!(a.n, [vec![2; 5], vec![1; 5]].concat());
        assert!(a.se[..5].iter().all(Option::is_some));
        assert!(a.se[5..].iter().all(Option::is_none));
        assert_eq!(a.survivors(5), 2);
        assert_eq!(a.survivors(6), 1);
        assert_eq!(a.survivors(11), 0);
        assert!(a.band(6).is_none());

        let mut rng = SimRng::seed_from_u64(5);
        let curves: Vec<Vec<f64>> = (0..1000).map(|_| vec![rng.sample(StandardNormal)]).collect();
        let a = aggregate_runs(&curves);
        assert!(a.mean[0].abs() < 0.1);
        let se = a.se[0].unwrap();
        assert!((0.029..=0.034).contains(&se), "{se}");
    }

    #[test]
    fn accumulator_matches_two_pass() {
        let mut rng = SimRng::seed_from_u64(9);
        let curves: Vec<Vec<f64>> = (0..50)
            .map(|i| (0..(20 + i % 7)).map(|_| 100.0 + rng.random::<f64>()).collect())
            .collect();
        let a = aggregate_runs(&curves);
        for t in 0..20 {
            let xs: Vec<f64> = curves.iter().map(|c| c[t]).collect();
            let m = xs.iter().sum::<f64>() / 50.0;
            let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 49.0).sqrt();
            assert_abs_diff_eq!(a.mean[t], m, epsilon = 1e-10);
            assert_abs_diff_eq!(a.se[t].unwrap(), sd / 50f64.sqrt(), epsilon = 1e-10);
        }
    }

    #[test]
    fn rank_examples() {
        let one = aggregate_runs(&[vec![1.0, 2.0], vec![1.5, 2.5]]);
        let t = rank_at(&[("UR", one.clone())], 2, Metric::Regret);
        assert_eq!(t.rank_of("UR"), Some(1));

        let t = rank_at(&[("A", one.clone()), ("B", one.clone())], 2, Metric::Regret);
        assert!(t.tied("A", "B"));
        assert_eq!(t.rank_of("A"), Some(1));
        assert_eq!(t.rank_of("B"), Some(1));

        let low = aggregate_runs(&[vec![0.0, 0.1], vec![0.0, 0.11]]);
        let high = aggregate_runs(&[vec![0.0, 5.0], vec![0.0, 5.01]]);
        let t = rank_at(&[("hi", high.clone()), ("lo", low.clone()), ("x", one)], 2, Metric::Regret);
        assert_eq!(t.entries[0].policy, "lo");
        assert!(t.strictly_better("lo", "x") && t.strictly_better("x", "hi"));
        assert_eq!(t.rank_of("hi"), Some(3));
        let t = rank_at(&[("hi", high), ("lo", low)], 2, Metric::Reward);
        assert_eq!(t.entries[0].policy, "hi");

        let short = aggregate_runs(&[vec![0.0], vec![0.0]]);
        let t = rank_at(&[("s", short)], 2, Metric::Regret);
        assert!(t.is_na("s") && t.all_na());
    }

    #[test]
    fn rank_table_csv() {
        let a = aggregate_runs(&[vec![1.0], vec![1.0]]);
        let b = aggregate_runs(&[vec![1.0]]);
        let t = rank_at(&[("A", a), ("B", b)], 1, Metric::Reward);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        t.write_csv(&p).unwrap();
        assert_eq!(std::fs::read_to_string(p).unwrap(), "policy,metric_value,rank,tie_group\nA,1,1,1\nB,n/a,n/a,n/a\n");
    }

    #[test]
    fn aggregate_csv() {
        let a = aggregate_runs(&[vec![1.0, 2.0], vec![3.0]]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        a.write_csv(&p).unwrap();
        let s = std::fs::read_to_string(p).unwrap();
        assert_eq!(s, "t,mean,se,n\n1,2,1,2\n2,2,,1\n");
    }

    #[test]
    fn ur_regret_on_centered_parabola() {
        // E[(a - 0.5)^2] for a ~ U(0, 1) is 1/12.
        let m = parabola(0.5);
        let mut rng = SimRng::seed_from_u64(77);
        let curves: Vec<Vec<f64>> = (0..100)
            .map(|_| {
                let mut p = PolicySpec::uniform().build(ActionRange::unit(), &mut rng).unwrap();
                let mut t = Trace::new();
                for i in 0..10_000 {
                    let a = p.propose(&mut rng).unwrap();
                    p.update(a, 0.0).unwrap();
                    t.push(i, a, 0.0);
                }
                cumulative_regret(&t, &m).into_inner()
            })
            .collect();
        let agg = aggregate_runs(&curves);
        let per_step = agg.mean.last().unwrap() / 10_000.0;
        assert!((0.080..=0.087).contains(&per_step), "{per_step}");
        let x: Vec<f64> = (1..=10_000).map(f64::from).collect();
        assert!(linear_fit(&x, &agg.mean).2 > 0.99);
    }

    proptest! {
        #[test]
        fn regret_is_nonnegative_and_nondecreasing(
            seed in any::<u64>(),
            actions in prop::collection::vec(-0.5f64..1.5, 1..100),
            bimodal in any::<bool>(),
        ) {
            let mut rng = SimRng::seed_from_u64(seed);
            let family = if bimodal { ModelFamily::Bimodal { max_drop: 3.0 } } else { ModelFamily::Parabola { scale: 5.0 } };
            let m = family.draw(&mut rng, ActionRange::unit(), 0.0).unwrap();
            let c = cumulative_regret(&trace_of(&actions, &vec![0.0; actions.len()]), &m);
            prop_assert!(c.values()[0] >= 0.0);
            prop_assert!(c.values().windows(2).all(|w| w[1] >= w[0]));
        }

        #[test]
        fn copies_have_zero_se(curve in prop::collection::vec(-10.0f64..10.0, 1..50), k in 2usize..6) {
            let a = aggregate_runs(&vec![curve.clone(); k]);
            prop_assert_eq!(&a.mean, &curve);
            prop_assert!(a.se.iter().all(|s| *s == Some(0.0)));
        }

        #[test]
        fn ranking_survives_constant_shift(
            seed in any::<u64>(),
            shift in 0.0f64..5.0,
        ) {
            let mut rng = SimRng::seed_from_u64(seed);
            let mk = |level: f64, rng: &mut SimRng| -> Vec<Vec<f64>> {
                (0..10).map(|_| {
                    let inc: Vec<f64> = (0..20).map(|_| level + 0.1 * rng.random::<f64>()).collect();
                    inc
                }).collect()
            };
            let groups: Vec<(String, Vec<Vec<f64>>)> =
                [("A", 0.1), ("B", 0.5), ("C", 0.52), ("D", 1.0)].iter().map(|&(n, l)| (n.to_string(), mk(l, &mut rng))).collect();
            let table = |delta: f64| {
                let aggs: Vec<(String, RunAggregate)> = groups.iter().map(|(n, runs)| {
                    let curves: Vec<Vec<f64>> = runs.iter().map(|inc| running_sum(inc.iter().map(|x| x + delta))).collect();
                    (n.clone(), aggregate_runs(&curves))
                }).collect();
                rank_at(&aggs, 20, Metric::Regret)
            };
            let order = |t: &RankTable| t.entries.iter().map(|e| e.policy.clone()).collect::<Vec<_>>();
            prop_assert_eq!(order(&table(0.0)), order(&table(shift)));
        }
    }

    #[test]
    fn fixed_policy_regret_is_flat_at_optimum() {
        let m = parabola(0.25);
        let mut rng = SimRng::seed_from_u64(0);
        let mut p = FixedAction::new(0.25);
        let mut t = Trace::new();
        for i in 0..10 {
            let a = p.propose(&mut rng).unwrap();
            p.update(a, 0.0).unwrap();
            t.push(i, a, 0.0);
        }
        assert!(cumulative_regret(&t, &m).values().iter().all(|&v| v == 0.0));
    }
}
