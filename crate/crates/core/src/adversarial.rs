//! Booking-limit and nesting policies, their grace-enhanced variants, and
//! adversarial arrival families for competitive-ratio measurement.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grace::{GraceConfig, GraceEvent, GraceState, LastDecision, Mode};
use crate::linprog::solve_dlp;
use crate::metrics::hindsight_value;
use crate::model::{scale_instance, ArrivalSequence, Instance, RandomSource};
use crate::policy::{simulate, Intent, Outcome, Policy};

/// Per-type quotas. Under booking limits `b_i` caps `s_i`; under nesting it
/// caps `sum_{j >= i} s_j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BookingPlan {
    pub limits: Vec<u64>,
}

impl BookingPlan {
    pub fn new(limits: Vec<u64>) -> Self {
        BookingPlan { limits }
    }

    /// `b_i = floor(x*_i T)` from the DLP at `t = 0`.
    pub fn from_dlp(inst: &Instance) -> Result<Self> {
        let plan = solve_dlp(inst, &inst.capacity, inst.horizon)?;
        let t = inst.horizon as f64;
        Ok(BookingPlan {
            limits: plan.x.iter().map(|x| (x * t + 1e-9).floor().max(0.0) as u64).collect(),
        })
    }

    /// Non-fatal problems with a nesting plan.
    pub fn nesting_warnings(&self, inst: &Instance) -> Vec<String> {
        let mut out = Vec::new();
        if self.limits.windows(2).any(|w| w[1] > w[0]) {
            out.push("nesting quotas are not non-increasing in the type index".into());
        }
        if inst.rewards.windows(2).any(|w| w[1] >= w[0]) {
            out.push("types are not sorted by strictly decreasing reward".into());
        }
        out
    }
}

fn check_limits(inst: &Instance, plan: &BookingPlan) -> Result<()> {
    if plan.limits.len() != inst.n_types() {
        return Err(Error::Dimension("booking limits must have n entries".into()));
    }
    Ok(())
}

fn check_nesting(inst: &Instance) -> Result<()> {
    if inst.n_resources() != 1 {
        return Err(Error::invalid("nesting applies to a single resource only"));
    }
    Ok(())
}

/// Accept iff the customer fits and `s_i < b_i`.
pub struct Bl {
    limits: Vec<u64>,
    sold: Vec<u64>,
}

impl Bl {
    pub fn new(inst: &Instance, plan: &BookingPlan) -> Result<Self> {
        check_limits(inst, plan)?;
        Ok(Bl { limits: plan.limits.clone(), sold: vec![0; inst.n_types()] })
    }

    pub fn sold(&self) -> &[u64] {
        &self.sold
    }
}

impl Policy for Bl {
    fn name(&self) -> String {
        "bl".into()
    }
    fn intent(&mut self, _t: usize, i: usize, _remaining: &[f64]) -> Intent {
        if self.sold[i] < self.limits[i] {
            Intent::Accept
        } else {
            Intent::Reject
        }
    }
    fn end_round(&mut self, _t: usize, arrival: Option<(usize, Outcome)>) {
        if let Some((i, Outcome::Accepted)) = arrival {
            self.sold[i] += 1;
        }
    }
}

fn nested_sold(sold: &[u64], i: usize) -> u64 {
    sold[i..].iter().sum()
}

/// Accept type `i` iff it fits and `sum_{j >= i} s_j < b_i`.
pub struct Nesting {
    limits: Vec<u64>,
    sold: Vec<u64>,
}

impl Nesting {
    pub fn new(inst: &Instance, plan: &BookingPlan) -> Result<Self> {
        check_nesting(inst)?;
        check_limits(inst, plan)?;
        Ok(Nesting { limits: plan.limits.clone(), sold: vec![0; inst.n_types()] })
    }

    pub fn sold(&self) -> &[u64] {
        &self.sold
    }
}

impl Policy for Nesting {
    fn name(&self) -> String {
        "nesting".into()
    }
    fn intent(&mut self, _t: usize, i: usize, _remaining: &[f64]) -> Intent {
        if nested_sold(&self.sold, i) < self.limits[i] {
            Intent::Accept
        } else {
            Intent::Reject
        }
    }
    fn end_round(&mut self, _t: usize, arrival: Option<(usize, Outcome)>) {
        if let Some((i, Outcome::Accepted)) = arrival {
            self.sold[i] += 1;
        }
    }
}

/// Shared machinery of the two grace-enhanced quota policies.
struct QuotaGrace {
    limits: Vec<u64>,
    sold: Vec<u64>,
    headroom: f64,
    grace: GraceState,
    triggered: bool,
    rng: ChaCha8Rng,
}

impl QuotaGrace {
    fn new(inst: &Instance, plan: &BookingPlan, cfg: GraceConfig, source: RandomSource) -> Self {
        let mut grace = GraceState::new(inst.n_types(), cfg.alpha);
        for (i, b) in plan.limits.iter().enumerate() {
            if *b == 0 {
                grace.set_last(i, LastDecision::Reject);
            }
        }
        QuotaGrace {
            limits: plan.limits.clone(),
            sold: vec![0; inst.n_types()],
            headroom: cfg.headroom(inst),
            grace,
            triggered: false,
            rng: source.rng(),
        }
    }

    fn begin_round(&mut self, t: usize, remaining: &[f64]) {
        let min = remaining.iter().copied().fold(f64::INFINITY, f64::min);
        if !self.triggered && min - self.headroom <= 0.0 {
            self.triggered = true;
            for i in 0..self.limits.len() {
                self.grace.set_mode(t, i, Mode::Decreasing, "capacity");
            }
        }
    }

    /// `used` is the count the quota governs; plain acceptance needs
    /// `used < b_i - margin`, and `used < b_i` is never violated.
    fn intent(&mut self, t: usize, i: usize, used: u64, margin: f64) -> Intent {
        let u: f64 = self.rng.random();
        let b = self.limits[i];
        if b == 0 {
            return Intent::Reject;
        }
        if !self.triggered && (used as f64) >= b as f64 - margin {
            self.grace.set_mode(t, i, Mode::Decreasing, "quota");
        }
        if !self.grace.decide(i, u) {
            Intent::Reject
        } else if used >= b {
            Intent::Blocked
        } else {
            Intent::Accept
        }
    }

    fn end_round(&mut self, arrival: Option<(usize, Outcome)>) {
        if let Some((i, o)) = arrival {
            self.grace.record(i, o.accepted());
            if o.accepted() {
                self.sold[i] += 1;
            }
        }
    }
}

/// Booking limits with a decreasing period once `s_i >= b_i - ceil(gamma)`
/// and for every type once `min_j m_j(t) <= a_max n gamma`.
pub struct GpBl {
    inner: QuotaGrace,
    margin: f64,
}

impl GpBl {
    pub fn new(
        inst: &Instance,
        plan: &BookingPlan,
        cfg: GraceConfig,
        source: RandomSource,
    ) -> Result<Self> {
        check_limits(inst, plan)?;
        Ok(GpBl { inner: QuotaGrace::new(inst, plan, cfg, source), margin: cfg.gamma.ceil() })
    }

    pub fn sold(&self) -> &[u64] {
        &self.inner.sold
    }
}

impl Policy for GpBl {
    fn name(&self) -> String {
        "gp-bl".into()
    }
    fn begin_round(&mut self, t: usize, remaining: &[f64]) {
        self.inner.begin_round(t, remaining);
    }
    fn intent(&mut self, t: usize, i: usize, _remaining: &[f64]) -> Intent {
        let used = self.inner.sold[i];
        self.inner.intent(t, i, used, self.margin)
    }
    fn end_round(&mut self, _t: usize, arrival: Option<(usize, Outcome)>) {
        self.inner.end_round(arrival);
    }
    fn grace_log(&self) -> &[GraceEvent] {
        self.inner.grace.events()
    }
}

/// Nesting with a decreasing period once `sum_{j >= i} s_j >= b_i - n gamma`
/// and for every type once `m(t) <= a_max n gamma`.
pub struct GpNesting {
    inner: QuotaGrace,
    margin: f64,
}

impl GpNesting {
    pub fn new(
        inst: &Instance,
        plan: &BookingPlan,
        cfg: GraceConfig,
        source: RandomSource,
    ) -> Result<Self> {
        check_nesting(inst)?;
        check_limits(inst, plan)?;
        Ok(GpNesting {
            inner: QuotaGrace::new(inst, plan, cfg, source),
            margin: inst.n_types() as f64 * cfg.gamma,
        })
    }

    pub fn sold(&self) -> &[u64] {
        &self.inner.sold
    }
}

impl Policy for GpNesting {
    fn name(&self) -> String {
        "gp-nesting".into()
    }
    fn begin_round(&mut self, t: usize, remaining: &[f64]) {
        self.inner.begin_round(t, remaining);
    }
    fn intent(&mut self, t: usize, i: usize, _remaining: &[f64]) -> Intent {
        let used = nested_sold(&self.inner.sold, i);
        self.inner.intent(t, i, used, self.margin)
    }
    fn end_round(&mut self, _t: usize, arrival: Option<(usize, Outcome)>) {
        self.inner.end_round(arrival);
    }
    fn grace_log(&self) -> &[GraceEvent] {
        self.inner.grace.events()
    }
}

/// Deterministic arrival families of total length `4 m`, split into
/// homogeneous blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    /// Blocks in order of increasing reward (type `n` first).
    LowFirst,
    HighFirst,
    SingleTypeFlood,
    /// Types cycle `1, 2, ..., n`.
    Alternating,
    /// Every assignment of types to `k` equal blocks.
    BlockPermutations(usize),
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::LowFirst => write!(f, "low_first"),
            Family::HighFirst => write!(f, "high_first"),
            Family::SingleTypeFlood => write!(f, "single_type_flood"),
            Family::Alternating => write!(f, "alternating"),
            Family::BlockPermutations(k) => write!(f, "block_permutations({k})"),
        }
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::Unknown { kind: "family", id: s.to_string() };
        match s.trim() {
            "low_first" => Ok(Family::LowFirst),
            "high_first" => Ok(Family::HighFirst),
            "single_type_flood" => Ok(Family::SingleTypeFlood),
            "alternating" => Ok(Family::Alternating),
            other => {
                let k = other
                    .strip_prefix("block_permutations(")
                    .and_then(|r| r.strip_suffix(')'))
                    .ok_or_else(unknown)?;
                let k: usize = k.trim().parse().map_err(|_| unknown())?;
                if k == 0 {
                    return Err(unknown());
                }
                Ok(Family::BlockPermutations(k))
            }
        }
    }
}

impl Serialize for Family {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Family {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The default family set used by the CR sweep.
pub fn default_families() -> Vec<Family> {
    vec![
        Family::LowFirst,
        Family::HighFirst,
        Family::SingleTypeFlood,
        Family::Alternating,
        Family::BlockPermutations(3),
    ]
}

fn blocks(order: &[usize], total: usize) -> Vec<usize> {
    let k = order.len();
    let base = total / k;
    let mut events = Vec::with_capacity(total);
    for (b, &ty) in order.iter().enumerate() {
        let len = if b + 1 == k { total - base * (k - 1) } else { base };
        events.extend(std::iter::repeat_n(ty, len));
    }
    events
}

/// Sequences of one family for `n_types` types at scale `m_scale`; types in
/// the events are 1-based.
pub fn generate_adversarial(
    family: Family,
    n_types: usize,
    m_scale: f64,
) -> Result<Vec<ArrivalSequence>> {
    if n_types == 0 {
        return Err(Error::invalid("need at least one type"));
    }
    if !(m_scale > 0.0) {
        return Err(Error::invalid("m_scale must be positive"));
    }
    let total = (4.0 * m_scale).round() as usize;
    let seqs: Vec<Vec<usize>> = match family {
        Family::SingleTypeFlood => vec![vec![1; total]],
        Family::LowFirst => vec![blocks(&(1..=n_types).rev().collect::<Vec<_>>(), total)],
        Family::HighFirst => vec![blocks(&(1..=n_types).collect::<Vec<_>>(), total)],
        Family::Alternating => vec![(0..total).map(|t| t % n_types + 1).collect()],
        Family::BlockPermutations(k) => {
            let count = n_types.checked_pow(k as u32).ok_or_else(|| {
                Error::invalid("too many block assignments")
            })?;
            (0..count)
                .map(|mut code| {
                    let order: Vec<usize> = (0..k)
                        .map(|_| {
                            let ty = code % n_types + 1;
                            code /= n_types;
                            ty
                        })
                        .collect();
                    blocks(&order, total)
                })
                .collect()
        }
    };
    seqs.into_iter().map(|e| ArrivalSequence::from_events(e, n_types)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrRecord {
    pub m_scale: f64,
    pub family: String,
    pub instance_id: usize,
    pub policy: String,
    /// Mean revenue over replications.
    pub revenue: f64,
    pub opt: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrReport {
    pub records: Vec<CrRecord>,
    /// `(m_scale, min ratio)`: an upper bound on the true competitive ratio.
    pub ratios: Vec<(f64, f64)>,
    pub skipped: Vec<String>,
}

impl CrReport {
    pub fn ratio_at(&self, m_scale: f64) -> Option<f64> {
        self.ratios.iter().find(|(m, _)| *m == m_scale).map(|(_, r)| *r)
    }
}

pub type PolicyFactory<'a> =
    dyn Fn(&Instance, RandomSource) -> Result<Box<dyn Policy>> + Sync + 'a;

/// Minimum over the generated instances of mean revenue over OPT, at each
/// scale. `template` is rescaled with horizon ratio 4 to match the families.
pub fn empirical_cr(
    template: &Instance,
    policy: &str,
    factory: &PolicyFactory<'_>,
    families: &[Family],
    m_scales: &[f64],
    replications: usize,
    seed: u64,
) -> Result<CrReport> {
    let mut report = CrReport { records: Vec::new(), ratios: Vec::new(), skipped: Vec::new() };
    let reps = replications.max(1);
    for &m in m_scales {
        let inst = scale_instance(template, m, 4.0)?;
        let mut min_ratio = f64::INFINITY;
        let mut instance_id = 0;
        for &family in families {
            for arrivals in generate_adversarial(family, inst.n_types(), m)? {
                let id = instance_id;
                instance_id += 1;
                let opt = hindsight_value(&inst, &arrivals)?;
                if opt <= 0.0 {
                    report.skipped.push(format!("m={m} {family} #{id}: OPT = 0"));
                    continue;
                }
                let inst = Instance { horizon: arrivals.horizon(), ..inst.clone() };
                let revenues: Vec<f64> = (0..reps)
                    .into_par_iter()
                    .map(|r| {
                        let stream = ((id as u64) << 32) | r as u64;
                        let mut p = factory(&inst, RandomSource::for_replication(seed, stream, 1))?;
                        Ok(simulate(&inst, &arrivals, &mut p).revenue)
                    })
                    .collect::<Result<_>>()?;
                let revenue = revenues.iter().sum::<f64>() / reps as f64;
                let ratio = revenue / opt;
                min_ratio = min_ratio.min(ratio);
                report.records.push(CrRecord {
                    m_scale: m,
                    family: family.to_string(),
                    instance_id: id,
                    policy: policy.to_string(),
                    revenue,
                    opt,
                    ratio,
                });
            }
        }
        report.ratios.push((m, min_ratio));
    }
    Ok(report)
}

/// CSV with columns `m_scale,family,instance_id,policy,revenue,opt,ratio`.
pub fn write_cr_csv<W: Write>(records: &[CrRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for rec in records {
        w.serialize(rec)?;
    }
    w.flush()?;
    Ok(())
}
