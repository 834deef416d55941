//! Hindsight benchmark, regret estimation, the individual-fairness audit,
//! and small statistics helpers.

use rayon::prelude::*;
use serde::Serialize;

pub use crate::adversarial::PolicyFactory;
use crate::error::{Error, Result};
use crate::linprog::{build_hindsight, solve_lp};
use crate::model::{sample_arrivals_from, ArrivalSequence, Instance, RandomSource, ARRIVAL_SLOT};
use crate::policy::{simulate, Decision, RunTrace, TypeDecisions};

/// Stream slot shared by every policy's decisions in a replication.
pub const POLICY_SLOT: u64 = 1;

/// LP optimum of the hindsight program for the realized arrivals.
pub fn hindsight_value(inst: &Instance, arrivals: &ArrivalSequence) -> Result<f64> {
    let sol = solve_lp(&build_hindsight(inst, &arrivals.counts)?);
    if !sol.is_optimal() {
        return Err(Error::Lp(sol.status));
    }
    Ok(sol.objective)
}

/// Normal-approximation standard error of a frequency `f` over `n` trials.
pub fn binomial_sigma(f: f64, n: u64) -> f64 {
    if n == 0 {
        0.0
    } else {
        (f * (1.0 - f) / n as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    LowPower,
}

impl Verdict {
    /// Exit status of the audit command.
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Pass => 0,
            Verdict::Fail => 2,
            Verdict::LowPower => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretReport {
    pub policy: String,
    pub horizon: usize,
    pub replications: usize,
    pub mean_opt: f64,
    pub mean_revenue: f64,
    pub regret: f64,
    /// Standard error of the paired differences.
    pub se: f64,
}

/// Per-replication `(Rev*, Rev(pi))` on shared arrival streams.
pub fn paired_revenues(
    inst: &Instance,
    factory: &PolicyFactory<'_>,
    replications: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let arrivals =
                sample_arrivals_from(inst, RandomSource::for_replication(seed, r, ARRIVAL_SLOT))?;
            let opt = hindsight_value(inst, &arrivals)?;
            let mut policy = factory(inst, RandomSource::for_replication(seed, r, POLICY_SLOT))?;
            Ok((opt, simulate(inst, &arrivals, &mut policy).revenue))
        })
        .collect()
}

/// Paired regret estimate `mean(Rev*) - mean(Rev(pi))`.
pub fn estimate_regret(
    inst: &Instance,
    policy: &str,
    factory: &PolicyFactory<'_>,
    replications: usize,
    seed: u64,
) -> Result<RegretReport> {
    if replications < 30 {
        return Err(Error::invalid("regret estimation needs at least 30 replications"));
    }
    let pairs = paired_revenues(inst, factory, replications, seed)?;
    Ok(regret_from_pairs(policy, inst.horizon, &pairs))
}

pub fn regret_from_pairs(policy: &str, horizon: usize, pairs: &[(f64, f64)]) -> RegretReport {
    let r = pairs.len() as f64;
    let mean_opt = pairs.iter().map(|p| p.0).sum::<f64>() / r;
    let mean_revenue = pairs.iter().map(|p| p.1).sum::<f64>() / r;
    let regret = mean_opt - mean_revenue;
    let var = pairs
        .iter()
        .map(|(o, v)| (o - v - regret).powi(2))
        .sum::<f64>()
        / (r - 1.0).max(1.0);
    RegretReport {
        policy: policy.to_string(),
        horizon,
        replications: pairs.len(),
        mean_opt,
        mean_revenue,
        regret,
        se: (var / r).sqrt(),
    }
}

/// Least-squares slope of `ln y` against `ln x`; `None` unless every value
/// is positive and at least two distinct `x` are given.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 || xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OffsetStat {
    pub d: usize,
    /// Max over `u` of `{u rejected, u+d accepted}` in non-depleted runs.
    pub max_reject_accept: f64,
    /// Max over `u` of `{u accepted, u+d rejected}` in non-depleted runs.
    pub max_accept_reject: f64,
    /// Binomial sigma at the larger of the two maxima.
    pub sigma: f64,
    pub bound: f64,
    /// Means over `u` of the two orderings, non-depleted runs.
    pub mean_reject_accept: f64,
    pub mean_accept_reject: f64,
    /// The same four figures over every run.
    pub uncond_max_reject_accept: f64,
    pub uncond_max_accept_reject: f64,
    pub uncond_mean_reject_accept: f64,
    pub uncond_mean_accept_reject: f64,
    /// 1-based `u` attaining the larger unconditional maximum.
    pub uncond_argmax: usize,
    pub pass: bool,
}

impl OffsetStat {
    pub fn max_conditional(&self) -> f64 {
        self.max_reject_accept.max(self.max_accept_reject)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TypeAudit {
    pub type_index: usize,
    pub offsets: Vec<OffsetStat>,
    /// Indices `u` left out for having fewer than 30 supporting runs.
    pub excluded_indices: usize,
    /// Depletion frequency among runs where this type arrived at all.
    pub depletion_frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FairnessReport {
    pub alpha: f64,
    pub delta: f64,
    pub replications: usize,
    pub non_depleted: usize,
    pub depletion_frequency: f64,
    pub depletion_sigma: f64,
    pub depletion_pass: bool,
    pub types: Vec<TypeAudit>,
    pub low_power: bool,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditConfig {
    pub alpha: f64,
    pub delta: f64,
    pub offsets: Vec<usize>,
    /// Indices with fewer supporting runs are excluded.
    pub min_support: u64,
    /// Fewer runs than this marks the report low-power.
    pub min_replications: usize,
}

impl AuditConfig {
    pub fn new(alpha: f64, delta: f64) -> Self {
        AuditConfig { alpha, delta, offsets: vec![1, 2, 3], min_support: 30, min_replications: 1000 }
    }
}

#[derive(Default)]
struct Counts {
    ra: Vec<u64>,
    ar: Vec<u64>,
    support: Vec<u64>,
}

impl Counts {
    fn add(&mut self, u: usize, first: bool, second: bool) {
        if self.support.len() <= u {
            self.support.resize(u + 1, 0);
            self.ra.resize(u + 1, 0);
            self.ar.resize(u + 1, 0);
        }
        self.support[u] += 1;
        self.ra[u] += (!first && second) as u64;
        self.ar[u] += (first && !second) as u64;
    }

    /// `(max ra, max ar, sigma at overall max, mean ra, mean ar, argmax, excluded)`.
    fn summarize(&self, min_support: u64) -> (f64, f64, f64, f64, f64, usize, usize) {
        let (mut max_ra, mut max_ar, mut sigma, mut best) = (0.0f64, 0.0f64, 0.0, 0.0);
        let (mut sum_ra, mut sum_ar, mut kept, mut excluded, mut arg) = (0.0, 0.0, 0usize, 0usize, 0);
        for u in 0..self.support.len() {
            let s = self.support[u];
            if s < min_support {
                excluded += 1;
                continue;
            }
            let fra = self.ra[u] as f64 / s as f64;
            let far = self.ar[u] as f64 / s as f64;
            max_ra = max_ra.max(fra);
            max_ar = max_ar.max(far);
            let f = fra.max(far);
            if f > best {
                best = f;
                sigma = binomial_sigma(f, s);
                arg = u + 1;
            }
            sum_ra += fra;
            sum_ar += far;
            kept += 1;
        }
        let k = kept.max(1) as f64;
        (max_ra, max_ar, sigma, sum_ra / k, sum_ar / k, arg, excluded)
    }
}

/// Joint-event frequencies across replications for every type, index `u`
/// and offset `d`, with and without conditioning on no depletion.
///
/// PASS needs every conditional maximum within `alpha d + 3 sigma` and the
/// depletion frequency within `delta + 3 sigma`.
pub fn fairness_audit(runs: &[TypeDecisions], cfg: &AuditConfig) -> FairnessReport {
    let reps = runs.len();
    let n = runs.first().map_or(0, |r| r.per_type.len());
    let depleted = runs.iter().filter(|r| r.depleted).count();
    let dep_freq = if reps == 0 { 0.0 } else { depleted as f64 / reps as f64 };
    let dep_sigma = binomial_sigma(dep_freq, reps as u64);
    let depletion_pass = dep_freq <= cfg.delta + 3.0 * dep_sigma;
    let mut all_pass = depletion_pass;
    let mut types = Vec::with_capacity(n);
    for i in 0..n {
        let mut offsets = Vec::new();
        let mut excluded = 0;
        for &d in &cfg.offsets {
            let mut cond = Counts::default();
            let mut uncond = Counts::default();
            for run in runs {
                let seq = &run.per_type[i];
                for u in 0..seq.len().saturating_sub(d) {
                    uncond.add(u, seq[u], seq[u + d]);
                    if !run.depleted {
                        cond.add(u, seq[u], seq[u + d]);
                    }
                }
            }
            let (c_ra, c_ar, sigma, c_mra, c_mar, _, ex) = cond.summarize(cfg.min_support);
            let (u_ra, u_ar, _, u_mra, u_mar, u_arg, _) = uncond.summarize(cfg.min_support);
            excluded = excluded.max(ex);
            let bound = cfg.alpha * d as f64;
            let pass = c_ra.max(c_ar) <= bound + 3.0 * sigma;
            all_pass &= pass;
            offsets.push(OffsetStat {
                d,
                max_reject_accept: c_ra,
                max_accept_reject: c_ar,
                sigma,
                bound,
                mean_reject_accept: c_mra,
                mean_accept_reject: c_mar,
                uncond_max_reject_accept: u_ra,
                uncond_max_accept_reject: u_ar,
                uncond_mean_reject_accept: u_mra,
                uncond_mean_accept_reject: u_mar,
                uncond_argmax: u_arg,
                pass,
            });
        }
        let present: Vec<&TypeDecisions> = runs.iter().filter(|r| !r.per_type[i].is_empty()).collect();
        let type_dep = if present.is_empty() {
            0.0
        } else {
            present.iter().filter(|r| r.depleted).count() as f64 / present.len() as f64
        };
        types.push(TypeAudit { type_index: i, offsets, excluded_indices: excluded, depletion_frequency: type_dep });
    }
    let low_power = reps < cfg.min_replications;
    let verdict = if !all_pass {
        Verdict::Fail
    } else if low_power {
        Verdict::LowPower
    } else {
        Verdict::Pass
    };
    FairnessReport {
        alpha: cfg.alpha,
        delta: cfg.delta,
        replications: reps,
        non_depleted: reps - depleted,
        depletion_frequency: dep_freq,
        depletion_sigma: dep_sigma,
        depletion_pass,
        types,
        low_power,
        verdict,
    }
}

/// Changes of decision between consecutive customers of the same type.
pub fn ogd_flip_count(trace: &RunTrace) -> usize {
    let mut last: Vec<Option<Decision>> = vec![None; trace.n_types];
    let mut flips = 0;
    for rec in &trace.records {
        if let Some(i) = rec.arrival {
            if let Some(prev) = last[i] {
                flips += (prev != rec.decision) as usize;
            }
            last[i] = Some(rec.decision);
        }
    }
    flips
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KsResult {
    pub n: usize,
    pub statistic: f64,
    /// 1% critical value `1.628 / sqrt(n)`.
    pub critical: f64,
    pub pass: bool,
}

/// Kolmogorov-Smirnov test of counts against `P(K >= k) = (1 - alpha)^k`,
/// the number of acceptances before the first rejection. The continuous
/// critical value is conservative for a discrete law.
pub fn ks_geometric(samples: &[u64], alpha: f64) -> KsResult {
    let n = samples.len();
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let max = sorted.last().copied().unwrap_or(0);
    let mut stat: f64 = 0.0;
    let mut idx = 0;
    for k in 0..=max {
        while idx < n && sorted[idx] <= k {
            idx += 1;
        }
        let emp = idx as f64 / n.max(1) as f64;
        let cdf = 1.0 - (1.0 - alpha).powi(k as i32 + 1);
        stat = stat.max((emp - cdf).abs());
    }
    let critical = 1.628 / (n.max(1) as f64).sqrt();
    KsResult { n, statistic: stat, critical, pass: stat <= critical }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{Fcfs, Intent, Policy};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn run(decisions: Vec<Vec<bool>>, depleted: bool) -> TypeDecisions {
        TypeDecisions { per_type: decisions, depleted }
    }

    #[test]
    fn all_accept_passes() {
        let runs: Vec<_> = (0..1000).map(|_| run(vec![vec![true; 50]], false)).collect();
        let rep = fairness_audit(&runs, &AuditConfig::new(0.01, 0.01));
        assert_eq!(rep.verdict, Verdict::Pass);
        assert!(rep.types[0].offsets.iter().all(|o| o.max_conditional() == 0.0));
    }

    #[test]
    fn straddle_fails() {
        // Deterministic depletion after the 10th customer.
        let runs: Vec<_> = (0..1000)
            .map(|_| {
                let mut d = vec![true; 10];
                d.extend(vec![false; 10]);
                run(vec![d], true)
            })
            .collect();
        let rep = fairness_audit(&runs, &AuditConfig::new(0.1, 0.01));
        assert_eq!(rep.verdict, Verdict::Fail);
        let o = &rep.types[0].offsets[0];
        assert_eq!(o.uncond_max_accept_reject, 1.0);
        assert_eq!(o.uncond_argmax, 10);
        assert_eq!(rep.depletion_frequency, 1.0);
    }

    #[test]
    fn sparse_indices_excluded() {
        let mut runs: Vec<_> = (0..40).map(|_| run(vec![vec![true; 5]], false)).collect();
        runs.push(run(vec![vec![true; 5].into_iter().chain([false, true]).collect()], false));
        let rep = fairness_audit(&runs, &AuditConfig::new(0.1, 0.1));
        assert_eq!(rep.types[0].offsets[0].max_conditional(), 0.0);
        assert!(rep.types[0].excluded_indices > 0);
        assert!(rep.low_power);
    }

    #[test]
    fn independent_coin_gives_p_one_minus_p() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let runs: Vec<_> = (0..4000)
            .map(|_| run(vec![(0..40).map(|_| rng.random::<f64>() < 0.1).collect()], false))
            .collect();
        let rep = fairness_audit(&runs, &AuditConfig::new(0.5, 0.1));
        let m = rep.types[0].offsets[0].mean_reject_accept;
        assert!((m - 0.09).abs() < 0.005, "{m}");
    }

    #[test]
    fn flips() {
        let inst = Instance::new(vec![vec![1.0]], vec![1.0], vec![100.0], 6, vec![0.0, 1.0]);
        let arr = ArrivalSequence::from_events(vec![1; 6], 1).unwrap();
        assert_eq!(ogd_flip_count(&simulate(&inst, &arr, &mut Fcfs)), 0);
        struct Alt(bool);
        impl Policy for Alt {
            fn name(&self) -> String {
                "alt".into()
            }
            fn intent(&mut self, _: usize, _: usize, _: &[f64]) -> Intent {
                self.0 = !self.0;
                if self.0 {
                    Intent::Accept
                } else {
                    Intent::Reject
                }
            }
        }
        assert_eq!(ogd_flip_count(&simulate(&inst, &arr, &mut Alt(false))), 5);
    }

    #[test]
    fn slope_of_power_law() {
        let xs = [1e3, 4e3, 1.6e4];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.sqrt()).collect();
        assert!((loglog_slope(&xs, &ys).unwrap() - 0.5).abs() < 1e-12);
        assert!(loglog_slope(&xs, &[0.0, 0.0, 0.0]).is_none());
    }

    #[test]
    fn ks_accepts_geometric_rejects_shifted() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let draw = |rng: &mut ChaCha8Rng, a: f64| {
            let mut k = 0;
            while rng.random::<f64>() < 1.0 - a {
                k += 1;
            }
            k
        };
        let good: Vec<u64> = (0..10_000).map(|_| draw(&mut rng, 0.3)).collect();
        assert!(ks_geometric(&good, 0.3).pass);
        let bad: Vec<u64> = (0..10_000).map(|_| draw(&mut rng, 0.3) + 1).collect();
        assert!(!ks_geometric(&bad, 0.3).pass);
    }

    #[test]
    fn regret_of_all_reject_is_opt() {
        struct Never;
        impl Policy for Never {
            fn name(&self) -> String {
                "never".into()
            }
            fn intent(&mut self, _: usize, _: usize, _: &[f64]) -> Intent {
                Intent::Reject
            }
        }
        let inst = Instance::new(vec![vec![1.0]], vec![1.0], vec![10.0], 50, vec![0.5, 0.5]);
        let f = |_: &Instance, _: RandomSource| -> Result<Box<dyn Policy>> { Ok(Box::new(Never)) };
        let rep = estimate_regret(&inst, "never", &f, 40, 1).unwrap();
        assert_eq!(rep.regret, rep.mean_opt);
        assert!(estimate_regret(&inst, "never", &f, 10, 1).is_err());
    }
}
