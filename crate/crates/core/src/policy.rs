//! The step-wise admission contract, the capacity-enforcing runner, run
//! traces, and the baseline policies for stochastic arrivals.
//!
//! A policy only states an intent for each arrival. The [`Runner`] owns the
//! remaining capacity and turns an accept intent into a rejection when the
//! customer does not fit, so no policy can overdraw a resource.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grace::GraceEvent;
use crate::linprog::solve_dlp;
use crate::model::{ArrivalSequence, Instance, RandomSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accept,
    Reject,
    NoOp,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Accept => "accept",
            Decision::Reject => "reject",
            Decision::NoOp => "noop",
        }
    }
}

/// What a policy would like to do with an arrival.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Intent {
    Accept,
    Reject,
    /// The policy wanted to accept but one of its own hard limits (a quota)
    /// refused. Recorded like a capacity block.
    Blocked,
}

/// What actually happened to an arrival.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Accepted,
    Rejected,
    /// Wanted to accept but capacity (or a quota) did not allow it.
    Blocked,
}

impl Outcome {
    pub fn accepted(self) -> bool {
        self == Outcome::Accepted
    }
}

pub trait Policy {
    fn name(&self) -> String;

    /// Called at the start of every round with the pre-decision capacity.
    fn begin_round(&mut self, _t: usize, _remaining: &[f64]) {}

    fn intent(&mut self, t: usize, i: usize, remaining: &[f64]) -> Intent;

    /// Called at the end of every round; `arrival` is the arriving type and
    /// what happened to it.
    fn end_round(&mut self, _t: usize, _arrival: Option<(usize, Outcome)>) {}

    fn grace_log(&self) -> &[GraceEvent] {
        &[]
    }
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn name(&self) -> String {
        (**self).name()
    }
    fn begin_round(&mut self, t: usize, remaining: &[f64]) {
        (**self).begin_round(t, remaining)
    }
    fn intent(&mut self, t: usize, i: usize, remaining: &[f64]) -> Intent {
        (**self).intent(t, i, remaining)
    }
    fn end_round(&mut self, t: usize, arrival: Option<(usize, Outcome)>) {
        (**self).end_round(t, arrival)
    }
    fn grace_log(&self) -> &[GraceEvent] {
        (**self).grace_log()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub t: usize,
    /// 0-based arriving type.
    pub arrival: Option<usize>,
    /// 1-based index of this customer within its type, 0 for no arrival.
    pub u: usize,
    pub decision: Decision,
    pub revenue: f64,
    /// Accept intent refused by capacity or quota.
    pub blocked: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunTrace {
    pub n_types: usize,
    pub n_resources: usize,
    pub records: Vec<TraceRecord>,
    /// Remaining capacity after each record, flattened `records x L`.
    snapshots: Vec<f64>,
    pub revenue: f64,
    pub accepted: Vec<u64>,
    pub blocked: usize,
}

impl RunTrace {
    pub fn remaining_after(&self, k: usize) -> &[f64] {
        &self.snapshots[k * self.n_resources..(k + 1) * self.n_resources]
    }

    pub fn final_capacity(&self) -> &[f64] {
        self.remaining_after(self.records.len() - 1)
    }

    /// A depletion event: some accept intent was refused for lack of room.
    pub fn depleted(&self) -> bool {
        self.blocked > 0
    }

    /// Accept flags of each type's customers in arrival order.
    pub fn decisions_by_type(&self) -> Vec<Vec<bool>> {
        let mut out = vec![Vec::new(); self.n_types];
        for rec in &self.records {
            if let Some(i) = rec.arrival {
                out[i].push(rec.decision == Decision::Accept);
            }
        }
        out
    }

    pub fn type_decisions(&self) -> TypeDecisions {
        TypeDecisions { per_type: self.decisions_by_type(), depleted: self.depleted() }
    }

    /// CSV with columns `t,type,u,decision,revenue,remaining_capacity`;
    /// `type` is 1-based with 0 for no arrival and the capacity column is a
    /// JSON array.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "type", "u", "decision", "revenue", "remaining_capacity"])?;
        for (k, rec) in self.records.iter().enumerate() {
            w.write_record([
                rec.t.to_string(),
                rec.arrival.map_or(0, |i| i + 1).to_string(),
                rec.u.to_string(),
                rec.decision.as_str().to_string(),
                rec.revenue.to_string(),
                serde_json::to_string(self.remaining_after(k))?,
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// The part of a trace the fairness audit needs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TypeDecisions {
    pub per_type: Vec<Vec<bool>>,
    pub depleted: bool,
}

/// Steps one policy through a horizon, enforcing capacity.
pub struct Runner<'a, P: Policy + ?Sized> {
    inst: &'a Instance,
    policy: &'a mut P,
    remaining: Vec<f64>,
    seen: Vec<usize>,
    trace: RunTrace,
}

impl<'a, P: Policy + ?Sized> Runner<'a, P> {
    pub fn new(inst: &'a Instance, policy: &'a mut P) -> Self {
        let n = inst.n_types();
        let l = inst.n_resources();
        Runner {
            inst,
            policy,
            remaining: inst.capacity.clone(),
            seen: vec![0; n],
            trace: RunTrace {
                n_types: n,
                n_resources: l,
                records: Vec::with_capacity(inst.horizon),
                snapshots: Vec::with_capacity(inst.horizon * l),
                revenue: 0.0,
                accepted: vec![0; n],
                blocked: 0,
            },
        }
    }

    pub fn remaining_capacity(&self) -> &[f64] {
        &self.remaining
    }

    pub fn round(&self) -> usize {
        self.trace.records.len()
    }

    pub fn step(&mut self, arrival: Option<usize>) -> Decision {
        let t = self.round();
        self.policy.begin_round(t, &self.remaining);
        let mut rec = TraceRecord {
            t,
            arrival,
            u: 0,
            decision: Decision::NoOp,
            revenue: 0.0,
            blocked: false,
        };
        let outcome = arrival.map(|i| {
            self.seen[i] += 1;
            rec.u = self.seen[i];
            let outcome = match self.policy.intent(t, i, &self.remaining) {
                Intent::Reject => Outcome::Rejected,
                Intent::Blocked => Outcome::Blocked,
                Intent::Accept if self.inst.fits(i, &self.remaining) => Outcome::Accepted,
                Intent::Accept => Outcome::Blocked,
            };
            match outcome {
                Outcome::Accepted => {
                    for (m, a) in self.remaining.iter_mut().zip(&self.inst.demand[i]) {
                        *m = (*m - a).max(0.0);
                    }
                    rec.decision = Decision::Accept;
                    rec.revenue = self.inst.rewards[i];
                    self.trace.revenue += rec.revenue;
                    self.trace.accepted[i] += 1;
                }
                Outcome::Rejected => rec.decision = Decision::Reject,
                Outcome::Blocked => {
                    rec.decision = Decision::Reject;
                    rec.blocked = true;
                    self.trace.blocked += 1;
                }
            }
            (i, outcome)
        });
        self.policy.end_round(t, outcome);
        self.trace.snapshots.extend_from_slice(&self.remaining);
        self.trace.records.push(rec);
        self.trace.records.last().unwrap().decision
    }

    pub fn finish(self) -> RunTrace {
        self.trace
    }
}

/// Runs `policy` over a full arrival sequence.
pub fn simulate<P: Policy + ?Sized>(
    inst: &Instance,
    arrivals: &ArrivalSequence,
    policy: &mut P,
) -> RunTrace {
    let mut runner = Runner::new(inst, policy);
    for t in 0..arrivals.horizon() {
        runner.step(arrivals.arrival(t));
    }
    runner.finish()
}

/// `r > threshold`, treating values within a relative `1e-9` as ties so
/// that bid prices recovered from an LP do not flip on rounding noise.
pub fn exceeds(reward: f64, threshold: f64) -> bool {
    reward > threshold + 1e-9 * reward.abs().max(1.0)
}

/// Accept every arrival that fits.
#[derive(Debug, Clone, Default)]
pub struct Fcfs;

impl Policy for Fcfs {
    fn name(&self) -> String {
        "fcfs".into()
    }
    fn intent(&mut self, _t: usize, _i: usize, _remaining: &[f64]) -> Intent {
        Intent::Accept
    }
}

/// Accept type `i` with fixed probability `probs[i]`, one uniform per arrival.
pub struct DlpPa {
    probs: Vec<f64>,
    rng: ChaCha8Rng,
}

fn acceptance_probs(inst: &Instance, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != inst.n_types() {
        return Err(Error::Dimension("x* must have n entries".into()));
    }
    x.iter()
        .zip(inst.type_rates())
        .map(|(&xi, &li)| {
            if li <= 0.0 {
                if xi > 0.0 {
                    Err(Error::invalid("x* > 0 for a type that never arrives"))
                } else {
                    Ok(0.0)
                }
            } else if xi < -1e-9 || xi > li * (1.0 + 1e-9) + 1e-12 {
                Err(Error::invalid("x* must satisfy 0 <= x_i <= lambda_i"))
            } else {
                Ok((xi / li).clamp(0.0, 1.0))
            }
        })
        .collect()
}

impl DlpPa {
    pub fn new(inst: &Instance, x_star: &[f64], source: RandomSource) -> Result<Self> {
        Ok(DlpPa { probs: acceptance_probs(inst, x_star)?, rng: source.rng() })
    }

    /// Solves the DLP at `t = 0` and uses its primal solution.
    pub fn from_dlp(inst: &Instance, source: RandomSource) -> Result<Self> {
        let plan = solve_dlp(inst, &inst.capacity, inst.horizon)?;
        DlpPa::new(inst, &plan.x, source)
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }
}

impl Policy for DlpPa {
    fn name(&self) -> String {
        "dlp-pa".into()
    }
    fn intent(&mut self, _t: usize, i: usize, _remaining: &[f64]) -> Intent {
        let u: f64 = self.rng.random();
        if u < self.probs[i] {
            Intent::Accept
        } else {
            Intent::Reject
        }
    }
}

/// DLP-PA that re-solves the DLP once at round `t_star` with the remaining
/// capacity and horizon.
pub struct RdlpPa {
    inst: Instance,
    t_star: usize,
    probs: Vec<f64>,
    resolved: Option<Vec<f64>>,
    rng: ChaCha8Rng,
}

impl RdlpPa {
    pub fn new(inst: &Instance, t_star: usize, source: RandomSource) -> Result<Self> {
        if t_star == 0 || t_star >= inst.horizon {
            return Err(Error::invalid("re-solve time must satisfy 0 < t* < T"));
        }
        let plan = solve_dlp(inst, &inst.capacity, inst.horizon)?;
        Ok(RdlpPa {
            probs: acceptance_probs(inst, &plan.x)?,
            inst: inst.clone(),
            t_star,
            resolved: None,
            rng: source.rng(),
        })
    }

    /// Re-solve at the midpoint.
    pub fn with_default_resolve(inst: &Instance, source: RandomSource) -> Result<Self> {
        RdlpPa::new(inst, (inst.horizon / 2).max(1), source)
    }

    /// Primal solution of the re-solved DLP, once it has happened.
    pub fn resolved_plan(&self) -> Option<&[f64]> {
        self.resolved.as_deref()
    }
}

impl Policy for RdlpPa {
    fn name(&self) -> String {
        "rdlp-pa".into()
    }
    fn begin_round(&mut self, t: usize, remaining: &[f64]) {
        if t == self.t_star {
            let x = solve_dlp(&self.inst, remaining, self.inst.horizon - t)
                .map(|p| p.x)
                .unwrap_or_else(|_| vec![0.0; self.inst.n_types()]);
            self.probs = acceptance_probs(&self.inst, &x)
                .unwrap_or_else(|_| vec![0.0; self.inst.n_types()]);
            self.resolved = Some(x);
        }
    }
    fn intent(&mut self, _t: usize, i: usize, _remaining: &[f64]) -> Intent {
        let u: f64 = self.rng.random();
        if u < self.probs[i] {
            Intent::Accept
        } else {
            Intent::Reject
        }
    }
}

/// Static bid-price control: accept type `i` iff `r_i > sum_j theta_j A_ij`.
#[derive(Debug, Clone)]
pub struct Sbpc {
    accept: Vec<bool>,
}

pub fn bid_price_accepts(inst: &Instance, theta: &[f64]) -> Vec<bool> {
    (0..inst.n_types())
        .map(|i| {
            let thr: f64 = inst.demand[i].iter().zip(theta).map(|(a, t)| a * t).sum();
            exceeds(inst.rewards[i], thr)
        })
        .collect()
}

impl Sbpc {
    pub fn new(inst: &Instance, theta: &[f64]) -> Self {
        Sbpc { accept: bid_price_accepts(inst, theta) }
    }

    pub fn from_dlp(inst: &Instance) -> Result<Self> {
        let plan = solve_dlp(inst, &inst.capacity, inst.horizon)?;
        Ok(Sbpc::new(inst, &plan.bid_prices))
    }

    pub fn accepted_types(&self) -> &[bool] {
        &self.accept
    }
}

impl Policy for Sbpc {
    fn name(&self) -> String {
        "s-bpc".into()
    }
    fn intent(&mut self, _t: usize, i: usize, _remaining: &[f64]) -> Intent {
        if self.accept[i] {
            Intent::Accept
        } else {
            Intent::Reject
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OgdParams {
    pub diameter: f64,
    pub lipschitz: f64,
    pub theta_bar: f64,
}

impl OgdParams {
    /// `D = sqrt(L) theta_bar`, `G = sqrt(L) (1 + max A)`, with
    /// `theta_bar = max r / min nonzero A` unless given.
    pub fn defaults(inst: &Instance, theta_bar: Option<f64>) -> Self {
        let sl = (inst.n_resources() as f64).sqrt();
        let theta_bar = theta_bar.unwrap_or_else(|| inst.r_max() / inst.a_min());
        OgdParams {
            diameter: sl * theta_bar,
            lipschitz: sl * (1.0 + inst.a_max()),
            theta_bar,
        }
    }
}

/// Dual state of bid-price control with online gradient descent. Kept apart
/// from the policy so it can also run as a shadow on virtual capacity.
#[derive(Debug, Clone)]
pub struct OgdState {
    pub theta: Vec<f64>,
    eta: f64,
    theta_bar: f64,
    horizon: f64,
}

impl OgdState {
    pub fn new(n_resources: usize, horizon: usize, params: OgdParams) -> Self {
        let t = horizon.max(1) as f64;
        OgdState {
            theta: vec![0.0; n_resources],
            eta: params.diameter / (params.lipschitz * t.sqrt()),
            theta_bar: params.theta_bar,
            horizon: t,
        }
    }

    pub fn step_size(&self) -> f64 {
        self.eta
    }

    /// Threshold decision `1(r_i > sum_j theta_j A_ij)`.
    pub fn wants(&self, inst: &Instance, i: usize) -> bool {
        let thr: f64 = inst.demand[i].iter().zip(&self.theta).map(|(a, t)| a * t).sum();
        inst.rewards[i] > thr
    }

    /// Gradient step with `grad_j = m_j(t) / T - y A_ij`, then projection
    /// onto `[0, theta_bar]`. `accepted` is the arriving type when `y = 1`.
    pub fn update(&mut self, inst: &Instance, remaining: &[f64], accepted: Option<usize>) {
        for j in 0..self.theta.len() {
            let used = accepted.map_or(0.0, |i| inst.demand[i][j]);
            let grad = remaining[j] / self.horizon - used;
            self.theta[j] = (self.theta[j] - self.eta * grad).clamp(0.0, self.theta_bar);
        }
    }
}

/// Bid-price control with duals learned by online gradient descent. The
/// gradient step runs every round; a round without an arrival has `y = 0`.
pub struct BpcOgd {
    inst: Instance,
    state: OgdState,
    pre: Vec<f64>,
    y: Option<usize>,
    history: Vec<Vec<f64>>,
}

impl BpcOgd {
    pub fn new(inst: &Instance, params: OgdParams) -> Self {
        BpcOgd {
            state: OgdState::new(inst.n_resources(), inst.horizon, params),
            inst: inst.clone(),
            pre: inst.capacity.clone(),
            y: None,
            history: Vec::new(),
        }
    }

    /// `theta` before each round, plus the final value.
    pub fn theta_history(&self) -> &[Vec<f64>] {
        &self.history
    }

    pub fn state(&self) -> &OgdState {
        &self.state
    }
}

impl Policy for BpcOgd {
    fn name(&self) -> String {
        "bpc-ogd".into()
    }
    fn begin_round(&mut self, _t: usize, remaining: &[f64]) {
        self.pre.copy_from_slice(remaining);
        self.y = None;
        self.history.push(self.state.theta.clone());
    }
    fn intent(&mut self, _t: usize, i: usize, _remaining: &[f64]) -> Intent {
        if self.state.wants(&self.inst, i) {
            self.y = Some(i);
            Intent::Accept
        } else {
            Intent::Reject
        }
    }
    fn end_round(&mut self, t: usize, _arrival: Option<(usize, Outcome)>) {
        self.state.update(&self.inst, &self.pre, self.y);
        if t + 1 == self.inst.horizon {
            self.history.push(self.state.theta.clone());
        }
    }
}
