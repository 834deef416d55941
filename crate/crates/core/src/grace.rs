//! Grace periods and the grace-period-enhanced stochastic policies.
//!
//! Inside a decreasing period a type's decision repeats an acceptance with
//! probability `1 - alpha` and rejection is absorbing; an increasing period
//! is the mirror image. Every grace-enhanced policy draws exactly one
//! uniform per arrival, whatever its mode, so runs that share a stream stay
//! aligned.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linprog::solve_dlp;
use crate::model::{Instance, RandomSource};
use crate::policy::{bid_price_accepts, Intent, OgdParams, OgdState, Outcome, Policy};

/// `log_{1 - alpha}(delta)`.
pub fn gamma_of(alpha: f64, delta: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid("alpha must lie in (0, 1)"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid("delta must lie in (0, 1)"));
    }
    Ok(delta.ln() / (1.0 - alpha).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraceConfig {
    pub alpha: f64,
    pub delta: f64,
    pub gamma: f64,
}

impl GraceConfig {
    pub fn new(alpha: f64, delta: f64) -> Result<Self> {
        Ok(GraceConfig { alpha, delta, gamma: gamma_of(alpha, delta)? })
    }

    /// `delta = 1 / T`.
    pub fn for_horizon(alpha: f64, horizon: usize) -> Result<Self> {
        GraceConfig::new(alpha, 1.0 / horizon.max(2) as f64)
    }

    /// Capacity reserve `a_max * n * gamma` at which grace periods begin.
    pub fn headroom(&self, inst: &Instance) -> f64 {
        inst.a_max() * inst.n_types() as f64 * self.gamma
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Normal,
    Decreasing,
    Increasing,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Normal => "normal",
            Mode::Decreasing => "decreasing",
            Mode::Increasing => "increasing",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LastDecision {
    Accept,
    Reject,
    None,
}

/// One decreasing-period draw. A type with no history counts as accepted.
pub fn decreasing_step(last: LastDecision, alpha: f64, u: f64) -> bool {
    match last {
        LastDecision::Reject => false,
        LastDecision::Accept | LastDecision::None => u < 1.0 - alpha,
    }
}

/// One increasing-period draw. A type with no history counts as accepted.
pub fn increasing_step(last: LastDecision, alpha: f64, u: f64) -> bool {
    match last {
        LastDecision::Accept | LastDecision::None => true,
        LastDecision::Reject => u < alpha,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraceEvent {
    pub t: usize,
    /// 0-based type.
    pub type_index: usize,
    pub from: Mode,
    pub to: Mode,
    pub reason: &'static str,
}

/// CSV with columns `t,type,mode_transition,trigger`; `type` is 1-based.
pub fn write_grace_log<W: Write>(events: &[GraceEvent], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "type", "mode_transition", "trigger"])?;
    for e in events {
        w.write_record([
            e.t.to_string(),
            (e.type_index + 1).to_string(),
            format!("({},{})", e.from.as_str(), e.to.as_str()),
            e.reason.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-type modes and last decisions, with a transition log.
#[derive(Debug, Clone)]
pub struct GraceState {
    alpha: f64,
    modes: Vec<Mode>,
    last: Vec<LastDecision>,
    /// Round at which the current non-normal mode began.
    since: Vec<Option<usize>>,
    log: Vec<GraceEvent>,
}

impl GraceState {
    pub fn new(n_types: usize, alpha: f64) -> Self {
        GraceState {
            alpha,
            modes: vec![Mode::Normal; n_types],
            last: vec![LastDecision::None; n_types],
            since: vec![None; n_types],
            log: Vec::new(),
        }
    }

    pub fn mode(&self, i: usize) -> Mode {
        self.modes[i]
    }

    pub fn last(&self, i: usize) -> LastDecision {
        self.last[i]
    }

    pub fn period_start(&self, i: usize) -> Option<usize> {
        self.since[i]
    }

    pub fn set_last(&mut self, i: usize, last: LastDecision) {
        self.last[i] = last;
    }

    pub fn set_mode(&mut self, t: usize, i: usize, mode: Mode, reason: &'static str) {
        let from = self.modes[i];
        if from != mode {
            self.modes[i] = mode;
            self.since[i] = (mode != Mode::Normal).then_some(t);
            self.log.push(GraceEvent { t, type_index: i, from, to: mode, reason });
        }
    }

    /// Chain decision for type `i` in its current mode; `Normal` accepts.
    pub fn decide(&self, i: usize, u: f64) -> bool {
        match self.modes[i] {
            Mode::Normal => true,
            Mode::Decreasing => decreasing_step(self.last[i], self.alpha, u),
            Mode::Increasing => increasing_step(self.last[i], self.alpha, u),
        }
    }

    pub fn decreasing_step<R: Rng + ?Sized>(&mut self, i: usize, rng: &mut R) -> bool {
        let accept = decreasing_step(self.last[i], self.alpha, rng.random());
        self.record(i, accept);
        accept
    }

    pub fn increasing_step<R: Rng + ?Sized>(&mut self, i: usize, rng: &mut R) -> bool {
        let accept = increasing_step(self.last[i], self.alpha, rng.random());
        self.record(i, accept);
        accept
    }

    /// Records what actually happened; a refused accept counts as a reject.
    pub fn record(&mut self, i: usize, accepted: bool) {
        self.last[i] = if accepted { LastDecision::Accept } else { LastDecision::Reject };
    }

    pub fn events(&self) -> &[GraceEvent] {
        &self.log
    }
}

fn min_capacity(remaining: &[f64]) -> f64 {
    remaining.iter().copied().fold(f64::INFINITY, f64::min)
}

fn chain_intent(accept: bool) -> Intent {
    if accept {
        Intent::Accept
    } else {
        Intent::Reject
    }
}

/// FCFS until `min_j m_j(t) <= a_max n gamma`, then a decreasing period for
/// every type until the horizon.
pub struct GpFcfs {
    headroom: f64,
    grace: GraceState,
    trigger: Option<usize>,
    rng: ChaCha8Rng,
}

impl GpFcfs {
    pub fn new(inst: &Instance, cfg: GraceConfig, source: RandomSource) -> Self {
        GpFcfs {
            headroom: cfg.headroom(inst),
            grace: GraceState::new(inst.n_types(), cfg.alpha),
            trigger: None,
            rng: source.rng(),
        }
    }

    pub fn trigger_round(&self) -> Option<usize> {
        self.trigger
    }
}

impl Policy for GpFcfs {
    fn name(&self) -> String {
        "gp-fcfs".into()
    }
    fn begin_round(&mut self, t: usize, remaining: &[f64]) {
        if self.trigger.is_none() && min_capacity(remaining) <= self.headroom {
            self.trigger = Some(t);
            for i in 0..self.grace.modes.len() {
                self.grace.set_mode(t, i, Mode::Decreasing, "capacity");
            }
        }
    }
    fn intent(&mut self, _t: usize, i: usize, _remaining: &[f64]) -> Intent {
        let u: f64 = self.rng.random();
        chain_intent(self.grace.decide(i, u))
    }
    fn end_round(&mut self, _t: usize, arrival: Option<(usize, Outcome)>) {
        if let Some((i, o)) = arrival {
            self.grace.record(i, o.accepted());
        }
    }
    fn grace_log(&self) -> &[GraceEvent] {
        self.grace.events()
    }
}

/// S-BPC whose accepted types enter a decreasing period once
/// `min_j m_j(t) <= a_max n gamma`. Priced-out types are always rejected.
pub struct GpSbpc {
    accept: Vec<bool>,
    headroom: f64,
    grace: GraceState,
    trigger: Option<usize>,
    rng: ChaCha8Rng,
}

impl GpSbpc {
    pub fn new(inst: &Instance, cfg: GraceConfig, theta: &[f64], source: RandomSource) -> Self {
        GpSbpc {
            accept: bid_price_accepts(inst, theta),
            headroom: cfg.headroom(inst),
            grace: GraceState::new(inst.n_types(), cfg.alpha),
            trigger: None,
            rng: source.rng(),
        }
    }

    pub fn from_dlp(inst: &Instance, cfg: GraceConfig, source: RandomSource) -> Result<Self> {
        let plan = solve_dlp(inst, &inst.capacity, inst.horizon)?;
        Ok(GpSbpc::new(inst, cfg, &plan.bid_prices, source))
    }

    pub fn trigger_round(&self) -> Option<usize> {
        self.trigger
    }
}

impl Policy for GpSbpc {
    fn name(&self) -> String {
        "gp-s-bpc".into()
    }
    fn begin_round(&mut self, t: usize, remaining: &[f64]) {
        if self.trigger.is_none() && min_capacity(remaining) <= self.headroom {
            self.trigger = Some(t);
            for i in 0..self.accept.len() {
                if self.accept[i] {
                    self.grace.set_mode(t, i, Mode::Decreasing, "capacity");
                }
            }
        }
    }
    fn intent(&mut self, _t: usize, i: usize, _remaining: &[f64]) -> Intent {
        let u: f64 = self.rng.random();
        if !self.accept[i] {
            return Intent::Reject;
        }
        chain_intent(self.grace.decide(i, u))
    }
    fn end_round(&mut self, _t: usize, arrival: Option<(usize, Outcome)>) {
        if let Some((i, o)) = arrival {
            self.grace.record(i, o.accepted());
        }
    }
    fn grace_log(&self) -> &[GraceEvent] {
        self.grace.events()
    }
}

/// Segment layout of the grace-enhanced resolving policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentSchedule {
    /// First round handled by the segment machinery.
    pub start: usize,
    pub seg_len: usize,
    /// Round at which the DLP is re-solved; should be a segment boundary.
    pub resolve_at: Option<usize>,
}

impl SegmentSchedule {
    /// Segments of length `round(T^beta)` from round 0.
    pub fn from_beta(horizon: usize, beta: f64, resolve_at: Option<usize>) -> Result<Self> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::invalid("beta must lie in (0, 1]"));
        }
        let seg_len = ((horizon as f64).powf(beta).round() as usize).max(1);
        Ok(SegmentSchedule { start: 0, seg_len, resolve_at })
    }

    /// Largest segment boundary not after `t`.
    pub fn align(&self, t: usize) -> usize {
        self.start + (t.saturating_sub(self.start) / self.seg_len) * self.seg_len
    }
}

/// How a type is handled within the current plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TypeClass {
    /// `x_i / lambda_i = 1`: accept everything through an increasing period.
    Full,
    /// `x_i / lambda_i = 0`: reject everything through a decreasing period.
    Closed,
    Fractional,
}

/// Per-segment bookkeeping for one type.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentRecord {
    /// 1-based segment number.
    pub k: usize,
    pub start: usize,
    pub type_index: usize,
    pub class: TypeClass,
    /// Carried deficit entering the segment.
    pub z: u64,
    /// Sampled acceptance target.
    pub y: u64,
    /// 1-based arrival index at which the decreasing period begins.
    pub handover: i64,
    /// Rejections among the first `y` arrivals of the segment.
    pub w: u64,
    pub accepted: u64,
    pub arrivals: u64,
    /// Whether the global capacity trigger was active at any point.
    pub triggered: bool,
}

struct OpenSegment {
    k: usize,
    start: usize,
    end: usize,
    records: Vec<SegmentRecord>,
}

/// Grace-period enhanced resolving DLP.
///
/// Each segment samples a per-type target `y_i = z_i + Bin(round(lambda_i
/// len), p_i)`, serves arrivals through an increasing period up to the
/// `(y_i - H)`-th arrival with `H = ceil(a_max n gamma)`, then through a
/// decreasing period to the end of the segment. Rejections among the first
/// `y_i` arrivals become the next segment's carry `z_i`. Once
/// `min_j m_j(t) <= a_max n gamma` every type stays in a decreasing period.
///
/// In the first segment a type has no history, so its increasing period
/// accepts outright, which is plain acceptance.
pub struct GpRdlp {
    inst: Instance,
    headroom: f64,
    handover_gap: i64,
    schedule: SegmentSchedule,
    x: Vec<f64>,
    lambda: Vec<f64>,
    class: Vec<TypeClass>,
    probs: Vec<f64>,
    z: Vec<u64>,
    seen: Vec<u64>,
    grace: GraceState,
    triggered: bool,
    segment: Option<OpenSegment>,
    closed: Vec<SegmentRecord>,
    resolved: Option<Vec<f64>>,
    next_k: usize,
    rng: ChaCha8Rng,
}

impl GpRdlp {
    /// Plans with the DLP at `t = 0`.
    pub fn new(
        inst: &Instance,
        cfg: GraceConfig,
        schedule: SegmentSchedule,
        source: RandomSource,
    ) -> Result<Self> {
        let plan = solve_dlp(inst, &inst.capacity, inst.horizon)?;
        Ok(GpRdlp::with_plan(inst, cfg, schedule, plan.x, inst.type_rates().to_vec(), source))
    }

    /// Uses the given rates `x` and arrival rates `lambda` instead of a DLP.
    pub fn with_plan(
        inst: &Instance,
        cfg: GraceConfig,
        schedule: SegmentSchedule,
        x: Vec<f64>,
        lambda: Vec<f64>,
        source: RandomSource,
    ) -> Self {
        let n = inst.n_types();
        let headroom = cfg.headroom(inst);
        let mut p = GpRdlp {
            inst: inst.clone(),
            headroom,
            handover_gap: headroom.ceil() as i64,
            schedule: SegmentSchedule { seg_len: schedule.seg_len.max(1), ..schedule },
            x,
            lambda,
            class: vec![TypeClass::Closed; n],
            probs: vec![0.0; n],
            z: vec![0; n],
            seen: vec![0; n],
            grace: GraceState::new(n, cfg.alpha),
            triggered: false,
            segment: None,
            closed: Vec::new(),
            resolved: None,
            next_k: 1,
            rng: source.rng(),
        };
        p.classify();
        p
    }

    fn classify(&mut self) {
        for i in 0..self.inst.n_types() {
            let li = self.lambda[i];
            let p = if li > 0.0 { (self.x[i] / li).clamp(0.0, 1.0) } else { 0.0 };
            self.probs[i] = p;
            self.class[i] = if p >= 1.0 - 1e-9 {
                TypeClass::Full
            } else if p <= 1e-9 {
                TypeClass::Closed
            } else {
                TypeClass::Fractional
            };
        }
    }

    /// Treat type `i` as having been rejected before this policy starts.
    pub fn seed_rejected(&mut self, i: usize) {
        self.grace.set_last(i, LastDecision::Reject);
    }

    pub fn segments(&self) -> &[SegmentRecord] {
        &self.closed
    }

    pub fn resolved_plan(&self) -> Option<&[f64]> {
        self.resolved.as_deref()
    }

    pub fn plan(&self) -> (&[f64], &[f64]) {
        (&self.x, &self.lambda)
    }

    pub fn triggered(&self) -> bool {
        self.triggered
    }

    fn close_segment(&mut self) {
        if let Some(seg) = self.segment.take() {
            for rec in seg.records {
                self.z[rec.type_index] =
                    if rec.class == TypeClass::Fractional { rec.w } else { 0 };
                self.closed.push(rec);
            }
        }
    }

    fn open_segment(&mut self, t: usize, remaining: &[f64]) {
        let horizon = self.inst.horizon;
        if self.schedule.resolve_at == Some(t) {
            let x = solve_dlp(&self.inst, remaining, horizon - t)
                .map(|p| p.x)
                .unwrap_or_else(|_| vec![0.0; self.inst.n_types()]);
            self.x = x.clone();
            self.lambda = self.inst.type_rates().to_vec();
            self.resolved = Some(x);
            self.classify();
        }
        let end = (t + self.schedule.seg_len).min(horizon);
        let len = (end - t) as f64;
        let k = self.next_k;
        self.next_k += 1;
        let mut records = Vec::with_capacity(self.inst.n_types());
        for i in 0..self.inst.n_types() {
            self.seen[i] = 0;
            let class = self.class[i];
            let (z, y, handover) = match class {
                TypeClass::Fractional => {
                    let trials = (self.lambda[i] * len).round() as u64;
                    let draw = Binomial::new(trials, self.probs[i])
                        .map(|b| b.sample(&mut self.rng))
                        .unwrap_or(0);
                    let z = self.z[i];
                    let y = z + draw;
                    (z, y, y as i64 - self.handover_gap)
                }
                _ => (0, 0, 0),
            };
            if !self.triggered {
                let mode = match class {
                    TypeClass::Full => Mode::Increasing,
                    TypeClass::Closed => {
                        if self.grace.last(i) == LastDecision::None {
                            self.grace.set_last(i, LastDecision::Reject);
                        }
                        Mode::Decreasing
                    }
                    TypeClass::Fractional if handover > 1 => Mode::Increasing,
                    TypeClass::Fractional => Mode::Decreasing,
                };
                self.grace.set_mode(t, i, mode, "segment");
            }
            records.push(SegmentRecord {
                k,
                start: t,
                type_index: i,
                class,
                z,
                y,
                handover,
                w: 0,
                accepted: 0,
                arrivals: 0,
                triggered: self.triggered,
            });
        }
        self.segment = Some(OpenSegment { k, start: t, end, records });
    }
}

impl Policy for GpRdlp {
    fn name(&self) -> String {
        "gp-rdlp".into()
    }

    fn begin_round(&mut self, t: usize, remaining: &[f64]) {
        if t < self.schedule.start {
            return;
        }
        if (t - self.schedule.start) % self.schedule.seg_len == 0 {
            self.close_segment();
            self.open_segment(t, remaining);
        }
        if !self.triggered && min_capacity(remaining) <= self.headroom {
            self.triggered = true;
            for i in 0..self.inst.n_types() {
                self.grace.set_mode(t, i, Mode::Decreasing, "capacity");
            }
            if let Some(seg) = self.segment.as_mut() {
                for rec in &mut seg.records {
                    rec.triggered = true;
                }
            }
        }
    }

    fn intent(&mut self, t: usize, i: usize, _remaining: &[f64]) -> Intent {
        let u: f64 = self.rng.random();
        if t < self.schedule.start {
            return Intent::Reject;
        }
        self.seen[i] += 1;
        if let Some(seg) = &self.segment {
            let rec = &seg.records[i];
            if !self.triggered
                && rec.class == TypeClass::Fractional
                && self.seen[i] as i64 == rec.handover
            {
                self.grace.set_mode(t, i, Mode::Decreasing, "handover");
            }
        }
        chain_intent(self.grace.decide(i, u))
    }

    fn end_round(&mut self, t: usize, arrival: Option<(usize, Outcome)>) {
        if let Some((i, o)) = arrival {
            if t >= self.schedule.start {
                self.grace.record(i, o.accepted());
                if let Some(seg) = self.segment.as_mut() {
                    let rec = &mut seg.records[i];
                    rec.arrivals += 1;
                    if o.accepted() {
                        rec.accepted += 1;
                    } else if rec.arrivals <= rec.y {
                        rec.w += 1;
                    }
                }
            }
        }
        if let Some(seg) = &self.segment {
            if t + 1 == seg.end {
                debug_assert!(seg.start <= t && seg.k >= 1);
                self.close_segment();
            }
        }
    }

    fn grace_log(&self) -> &[GraceEvent] {
        self.grace.events()
    }
}

/// Grace-enhanced BPC-OGD: reject everything for the first `P = T^{2/3}`
/// rounds while a shadow BPC-OGD runs on virtual capacity, then serve the
/// rest with [`GpRdlp`] planned from the shadow's acceptance rates
/// `x_i = u_i / P` and observed rates `lambda_i = Lambda_i / P`, segments of
/// length `P`, and no re-solve.
pub struct GpBpcOgd {
    inst: Instance,
    cfg: GraceConfig,
    phase1: usize,
    shadow: OgdState,
    shadow_capacity: Vec<f64>,
    pre: Vec<f64>,
    y: Option<usize>,
    would_accept: Vec<u64>,
    arrivals: Vec<u64>,
    inner: Option<GpRdlp>,
    inner_source: RandomSource,
}

impl GpBpcOgd {
    pub fn new(
        inst: &Instance,
        cfg: GraceConfig,
        params: OgdParams,
        source: RandomSource,
    ) -> Result<Self> {
        let phase1 = ((inst.horizon as f64).powf(2.0 / 3.0).round() as usize).max(1);
        if phase1 >= inst.horizon {
            return Err(Error::invalid("horizon too short for an exploration phase"));
        }
        Ok(GpBpcOgd {
            shadow: OgdState::new(inst.n_resources(), inst.horizon, params),
            shadow_capacity: inst.capacity.clone(),
            pre: inst.capacity.clone(),
            y: None,
            would_accept: vec![0; inst.n_types()],
            arrivals: vec![0; inst.n_types()],
            inner: None,
            inner_source: source,
            phase1,
            cfg,
            inst: inst.clone(),
        })
    }

    pub fn exploration_rounds(&self) -> usize {
        self.phase1
    }

    /// Shadow acceptances `u_i` and arrivals `Lambda_i` from the first phase.
    pub fn shadow_counts(&self) -> (&[u64], &[u64]) {
        (&self.would_accept, &self.arrivals)
    }

    /// `u_i / P`.
    pub fn estimated_rates(&self) -> Vec<f64> {
        let p = self.phase1 as f64;
        self.would_accept.iter().map(|u| *u as f64 / p).collect()
    }

    pub fn inner(&self) -> Option<&GpRdlp> {
        self.inner.as_ref()
    }

    fn start_phase_two(&mut self) {
        let p = self.phase1 as f64;
        let lambda: Vec<f64> = self.arrivals.iter().map(|a| *a as f64 / p).collect();
        let x: Vec<f64> = self
            .would_accept
            .iter()
            .zip(&self.arrivals)
            .map(|(u, a)| if *a == 0 { 0.0 } else { *u as f64 / p })
            .collect();
        let schedule = SegmentSchedule { start: self.phase1, seg_len: self.phase1, resolve_at: None };
        let mut inner = GpRdlp::with_plan(&self.inst, self.cfg, schedule, x, lambda, self.inner_source);
        for i in 0..self.inst.n_types() {
            if self.arrivals[i] > 0 {
                inner.seed_rejected(i);
            }
        }
        self.inner = Some(inner);
    }
}

impl Policy for GpBpcOgd {
    fn name(&self) -> String {
        "gp-bpc-ogd".into()
    }

    fn begin_round(&mut self, t: usize, remaining: &[f64]) {
        if t < self.phase1 {
            self.pre.copy_from_slice(&self.shadow_capacity);
            self.y = None;
            return;
        }
        if self.inner.is_none() {
            self.start_phase_two();
        }
        self.inner.as_mut().unwrap().begin_round(t, remaining);
    }

    fn intent(&mut self, t: usize, i: usize, remaining: &[f64]) -> Intent {
        if t < self.phase1 {
            self.arrivals[i] += 1;
            if self.shadow.wants(&self.inst, i) {
                self.y = Some(i);
                if self.inst.fits(i, &self.shadow_capacity) {
                    self.would_accept[i] += 1;
                    for (m, a) in self.shadow_capacity.iter_mut().zip(&self.inst.demand[i]) {
                        *m = (*m - a).max(0.0);
                    }
                }
            }
            return Intent::Reject;
        }
        self.inner.as_mut().unwrap().intent(t, i, remaining)
    }

    fn end_round(&mut self, t: usize, arrival: Option<(usize, Outcome)>) {
        if t < self.phase1 {
            self.shadow.update(&self.inst, &self.pre, self.y);
            return;
        }
        self.inner.as_mut().unwrap().end_round(t, arrival);
    }

    fn grace_log(&self) -> &[GraceEvent] {
        self.inner.as_ref().map_or(&[], |p| p.grace_log())
    }
}
