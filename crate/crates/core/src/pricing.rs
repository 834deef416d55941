//! Price-based admission: static posted prices, a decreasing grace period in
//! price space, and the price-fairness audit.
//!
//! Offering `+inf` is the price analogue of a rejection. Purchases are drawn
//! from their own stream so that two pricing policies run on the same
//! replication see the same purchase uniforms.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grace::GraceConfig;
use crate::metrics::{binomial_sigma, Verdict};
use crate::model::{ArrivalSequence, Instance, InstanceFile, RandomSource};

/// Price to purchase-probability table for one type, looked up exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurchaseTable {
    /// `(price, probability)` pairs.
    pub entries: Vec<(f64, f64)>,
}

impl PurchaseTable {
    pub fn new(entries: Vec<(f64, f64)>) -> Self {
        PurchaseTable { entries }
    }

    /// A table holding a single price.
    pub fn single(price: f64, prob: f64) -> Self {
        PurchaseTable { entries: vec![(price, prob)] }
    }

    /// Purchase probability at `price`; `+inf` always gives 0.
    pub fn prob(&self, price: f64) -> Result<f64> {
        if price == f64::INFINITY {
            return Ok(0.0);
        }
        self.entries
            .iter()
            .find(|(p, _)| *p == price)
            .map(|(_, q)| *q)
            .ok_or_else(|| Error::invalid(format!("price {price} missing from purchase table")))
    }

    fn validate(&self) -> Result<()> {
        let mut sorted = self.entries.clone();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        if sorted.iter().any(|(p, q)| !p.is_finite() || !(0.0..=1.0).contains(q)) {
            return Err(Error::invalid("purchase table needs finite prices and probabilities in [0, 1]"));
        }
        if sorted.windows(2).any(|w| !(w[1].0 > w[0].0 && w[1].1 < w[0].1)) {
            return Err(Error::invalid("purchase probability must strictly decrease in price"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingInstance {
    pub base: Instance,
    /// Static posted price per type.
    pub prices: Vec<f64>,
    pub purchase: Vec<PurchaseTable>,
}

impl PricingInstance {
    pub fn new(base: Instance, prices: Vec<f64>, purchase: Vec<PurchaseTable>) -> Result<Self> {
        let n = base.n_types();
        if prices.len() != n || purchase.len() != n {
            return Err(Error::Dimension("prices and purchase tables need n entries".into()));
        }
        for (p, table) in prices.iter().zip(&purchase) {
            table.validate()?;
            if !(*p > 0.0) || !p.is_finite() {
                return Err(Error::invalid("static prices must be positive and finite"));
            }
            table.prob(*p)?;
        }
        Ok(PricingInstance { base, prices, purchase })
    }

    /// `sup_i p_i`.
    pub fn p_max(&self) -> f64 {
        self.prices.iter().copied().fold(0.0, f64::max)
    }
}

/// Instance file keys plus `p` and `purchase_prob` (per type, a list of
/// `[price, probability]` pairs).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PricingInstanceFile {
    #[serde(flatten)]
    pub base: InstanceFile,
    pub p: Vec<f64>,
    pub purchase_prob: Vec<Vec<(f64, f64)>>,
}

impl PricingInstanceFile {
    pub fn into_instance(self) -> Result<PricingInstance> {
        PricingInstance::new(
            self.base.into_instance()?,
            self.p,
            self.purchase_prob.into_iter().map(PurchaseTable::new).collect(),
        )
    }
}

pub fn load_pricing_instance(path: &std::path::Path) -> Result<PricingInstance> {
    let text = std::fs::read_to_string(path)?;
    let file: PricingInstanceFile = serde_json::from_str(&text)?;
    file.into_instance()
}

pub trait PricingPolicy {
    fn name(&self) -> String;
    fn begin_round(&mut self, _t: usize, _remaining: &[f64]) {}
    /// Price offered to a type-`i` arrival; `f64::INFINITY` closes the sale.
    fn offer(&mut self, t: usize, i: usize) -> f64;
    /// The price actually offered, after the capacity check.
    fn record(&mut self, _i: usize, _offered: f64) {}
}

impl<P: PricingPolicy + ?Sized> PricingPolicy for Box<P> {
    fn name(&self) -> String {
        (**self).name()
    }
    fn begin_round(&mut self, t: usize, remaining: &[f64]) {
        (**self).begin_round(t, remaining)
    }
    fn offer(&mut self, t: usize, i: usize) -> f64 {
        (**self).offer(t, i)
    }
    fn record(&mut self, i: usize, offered: f64) {
        (**self).record(i, offered)
    }
}

/// Offer `p_i` whenever the customer fits.
pub struct StaticPricing {
    prices: Vec<f64>,
}

impl StaticPricing {
    pub fn new(pinst: &PricingInstance) -> Self {
        StaticPricing { prices: pinst.prices.clone() }
    }
}

impl PricingPolicy for StaticPricing {
    fn name(&self) -> String {
        "static-pricing".into()
    }
    fn offer(&mut self, _t: usize, i: usize) -> f64 {
        self.prices[i]
    }
}

/// Static pricing until `min_j m_j(t) <= a_max n gamma`; afterwards each type
/// repeats its previous offer with probability `1 - alpha` and otherwise
/// moves to `+inf` for good.
pub struct GpPricing {
    last: Vec<f64>,
    alpha: f64,
    headroom: f64,
    trigger: Option<usize>,
    rng: ChaCha8Rng,
}

impl GpPricing {
    pub fn new(pinst: &PricingInstance, cfg: GraceConfig, source: RandomSource) -> Self {
        GpPricing {
            last: pinst.prices.clone(),
            alpha: cfg.alpha,
            headroom: cfg.headroom(&pinst.base),
            trigger: None,
            rng: source.rng(),
        }
    }

    pub fn trigger_round(&self) -> Option<usize> {
        self.trigger
    }
}

impl PricingPolicy for GpPricing {
    fn name(&self) -> String {
        "gp-pricing".into()
    }
    fn begin_round(&mut self, t: usize, remaining: &[f64]) {
        let min = remaining.iter().copied().fold(f64::INFINITY, f64::min);
        if self.trigger.is_none() && min <= self.headroom {
            self.trigger = Some(t);
        }
    }
    fn offer(&mut self, _t: usize, i: usize) -> f64 {
        let u: f64 = self.rng.random();
        if self.trigger.is_none() || self.last[i] == f64::INFINITY {
            return self.last[i];
        }
        if u < 1.0 - self.alpha {
            self.last[i]
        } else {
            f64::INFINITY
        }
    }
    fn record(&mut self, i: usize, offered: f64) {
        self.last[i] = offered;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriceRecord {
    pub t: usize,
    /// 0-based type.
    pub type_index: usize,
    pub u: usize,
    pub offered: f64,
    pub purchased: bool,
    pub revenue: f64,
    /// A finite offer was replaced by `+inf` because the customer did not fit.
    pub blocked: bool,
}

/// Offers to arrivals only; rounds without an arrival are not recorded.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriceTrace {
    pub n_types: usize,
    pub records: Vec<PriceRecord>,
    pub revenue: f64,
    pub remaining: Vec<f64>,
    pub blocked: usize,
}

impl PriceTrace {
    pub fn depleted(&self) -> bool {
        self.blocked > 0
    }

    pub fn offers_by_type(&self) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); self.n_types];
        for r in &self.records {
            out[r.type_index].push(r.offered);
        }
        out
    }

    /// CSV with columns `t,type,u,offered_price,purchased,revenue`; `+inf`
    /// is written as `inf` and `type` is 1-based.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "type", "u", "offered_price", "purchased", "revenue"])?;
        for r in &self.records {
            let price = if r.offered == f64::INFINITY { "inf".to_string() } else { r.offered.to_string() };
            w.write_record([
                r.t.to_string(),
                (r.type_index + 1).to_string(),
                r.u.to_string(),
                price,
                r.purchased.to_string(),
                r.revenue.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs a pricing policy. `purchases` drives the purchase draws, one uniform
/// per arrival.
pub fn simulate_pricing<P: PricingPolicy + ?Sized>(
    pinst: &PricingInstance,
    arrivals: &ArrivalSequence,
    policy: &mut P,
    purchases: RandomSource,
) -> Result<PriceTrace> {
    let inst = &pinst.base;
    let mut rng = purchases.rng();
    let mut remaining = inst.capacity.clone();
    let mut seen = vec![0usize; inst.n_types()];
    let mut trace = PriceTrace {
        n_types: inst.n_types(),
        records: Vec::new(),
        revenue: 0.0,
        remaining: Vec::new(),
        blocked: 0,
    };
    for t in 0..arrivals.horizon() {
        policy.begin_round(t, &remaining);
        let Some(i) = arrivals.arrival(t) else { continue };
        seen[i] += 1;
        let u_buy: f64 = rng.random();
        let mut offered = policy.offer(t, i);
        let mut blocked = false;
        if offered.is_finite() && !inst.fits(i, &remaining) {
            offered = f64::INFINITY;
            blocked = true;
            trace.blocked += 1;
        }
        policy.record(i, offered);
        let purchased = u_buy < pinst.purchase[i].prob(offered)?;
        let revenue = if purchased { offered } else { 0.0 };
        if purchased {
            for (m, a) in remaining.iter_mut().zip(&inst.demand[i]) {
                *m = (*m - a).max(0.0);
            }
            trace.revenue += revenue;
        }
        trace.records.push(PriceRecord { t, type_index: i, u: seen[i], offered, purchased, revenue, blocked });
    }
    trace.remaining = remaining;
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriceOffsetStat {
    pub d: usize,
    /// Max over `u` of the frequency of `p_u != p_{u+d}`, non-depleted runs.
    pub max_conditional: f64,
    pub sigma: f64,
    pub bound: f64,
    pub max_unconditional: f64,
    /// Index `u` attaining the unconditional max.
    pub argmax_unconditional: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriceFairnessReport {
    pub alpha: f64,
    pub delta: f64,
    pub replications: usize,
    pub depletion_frequency: f64,
    pub depletion_pass: bool,
    /// Per type, one entry per offset `d = 1, 2, 3`.
    pub types: Vec<Vec<PriceOffsetStat>>,
    pub low_power: bool,
    pub verdict: Verdict,
}

struct PairCounts {
    hits: Vec<u64>,
    support: Vec<u64>,
}

impl PairCounts {
    fn new() -> Self {
        PairCounts { hits: Vec::new(), support: Vec::new() }
    }

    fn add(&mut self, u: usize, hit: bool) {
        if self.support.len() <= u {
            self.support.resize(u + 1, 0);
            self.hits.resize(u + 1, 0);
        }
        self.support[u] += 1;
        self.hits[u] += hit as u64;
    }

    /// `(max frequency, sigma at it, argmax)` over indices with enough support.
    fn max(&self, min_support: u64) -> (f64, f64, usize) {
        let mut best = (0.0, 0.0, 0);
        for (u, (&h, &s)) in self.hits.iter().zip(&self.support).enumerate() {
            if s < min_support {
                continue;
            }
            let f = h as f64 / s as f64;
            if f > best.0 {
                best = (f, binomial_sigma(f, s), u + 1);
            }
        }
        best
    }
}

/// Frequency of `p_u != p_{u+d}` across replications for `d = 1, 2, 3`.
pub fn price_fairness_audit(traces: &[PriceTrace], alpha: f64, delta: f64) -> PriceFairnessReport {
    let reps = traces.len();
    let n = traces.first().map_or(0, |t| t.n_types);
    let depleted = traces.iter().filter(|t| t.depleted()).count();
    let dep_freq = if reps == 0 { 0.0 } else { depleted as f64 / reps as f64 };
    let depletion_pass = dep_freq <= delta + 3.0 * binomial_sigma(dep_freq, reps as u64);
    let offers: Vec<Vec<Vec<f64>>> = traces.iter().map(|t| t.offers_by_type()).collect();
    let mut types = Vec::with_capacity(n);
    let mut all_pass = depletion_pass;
    for i in 0..n {
        let mut stats = Vec::new();
        for d in 1..=3usize {
            let mut cond = PairCounts::new();
            let mut uncond = PairCounts::new();
            for (tr, by_type) in traces.iter().zip(&offers) {
                let offers = &by_type[i];
                for u in 0..offers.len().saturating_sub(d) {
                    let hit = offers[u] != offers[u + d];
                    uncond.add(u, hit);
                    if !tr.depleted() {
                        cond.add(u, hit);
                    }
                }
            }
            let (max_c, sigma, _) = cond.max(30);
            let (max_u, _, arg_u) = uncond.max(30);
            let bound = alpha * d as f64;
            let pass = max_c <= bound + 3.0 * sigma;
            all_pass &= pass;
            stats.push(PriceOffsetStat {
                d,
                max_conditional: max_c,
                sigma,
                bound,
                max_unconditional: max_u,
                argmax_unconditional: arg_u,
                pass,
            });
        }
        types.push(stats);
    }
    let low_power = reps < 1000;
    let verdict = if !all_pass {
        Verdict::Fail
    } else if low_power {
        Verdict::LowPower
    } else {
        Verdict::Pass
    };
    PriceFairnessReport {
        alpha,
        delta,
        replications: reps,
        depletion_frequency: dep_freq,
        depletion_pass,
        types,
        low_power,
        verdict,
    }
}
