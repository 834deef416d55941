//! Problem instances, arrival processes and seeded randomness.
//!
//! An [`Instance`] holds the static data of a network revenue-management
//! problem: `n` customer types, `L` resources, the demand matrix, rewards,
//! capacities and per-round arrival probabilities. Every round at most one
//! customer arrives; index `0` of `lambda` is the no-arrival probability.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `sum(lambda) == 1`.
pub const LAMBDA_TOL: f64 = 1e-12;

/// Default `T / m_scale` when an instance file gives neither `T` nor a ratio.
pub const DEFAULT_HORIZON_RATIO: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    /// `n x L` units of resource `j` used by one type-`i` customer.
    pub demand: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub capacity: Vec<f64>,
    pub horizon: usize,
    /// Length `n + 1`; entry 0 is the no-arrival probability.
    pub lambda: Vec<f64>,
    /// Capacity shape: `capacity[j] == scale[j] * m_scale`.
    pub scale: Vec<f64>,
    pub m_scale: f64,
}

impl Instance {
    /// Builds an instance with `m_scale = 1` so that `scale == capacity`.
    pub fn new(
        demand: Vec<Vec<f64>>,
        rewards: Vec<f64>,
        capacity: Vec<f64>,
        horizon: usize,
        lambda: Vec<f64>,
    ) -> Self {
        Instance {
            scale: capacity.clone(),
            m_scale: 1.0,
            demand,
            rewards,
            capacity,
            horizon,
            lambda,
        }
    }

    pub fn n_types(&self) -> usize {
        self.rewards.len()
    }

    pub fn n_resources(&self) -> usize {
        self.capacity.len()
    }

    /// Per-type arrival probability (`lambda[i + 1]`) for 0-based type `i`.
    pub fn rate(&self, i: usize) -> f64 {
        self.lambda[i + 1]
    }

    pub fn type_rates(&self) -> &[f64] {
        &self.lambda[1..]
    }

    /// Largest demand entry.
    pub fn a_max(&self) -> f64 {
        self.demand
            .iter()
            .flatten()
            .copied()
            .fold(0.0, f64::max)
    }

    /// Smallest nonzero demand entry.
    pub fn a_min(&self) -> f64 {
        self.demand
            .iter()
            .flatten()
            .copied()
            .filter(|&a| a > 0.0)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn r_max(&self) -> f64 {
        self.rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Whether one type-`i` customer fits into `remaining`.
    pub fn fits(&self, i: usize, remaining: &[f64]) -> bool {
        self.demand[i]
            .iter()
            .zip(remaining)
            .all(|(a, m)| *a <= *m + 1e-9)
    }

    pub fn validate(&self) -> ValidationReport {
        validate_instance(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, field: &str, message: impl Into<String>) {
        self.violations.push(Violation {
            field: field.to_string(),
            message: message.into(),
        });
    }

    pub fn has(&self, message: &str) -> bool {
        self.violations.iter().any(|v| v.message == message)
    }
}

pub fn validate_instance(inst: &Instance) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = inst.n_types();
    let l = inst.n_resources();

    if n == 0 {
        report.push("n", "at least one customer type required");
    }
    if l == 0 {
        report.push("L", "at least one resource required");
    }
    if inst.demand.len() != n || inst.demand.iter().any(|row| row.len() != l) {
        report.push("A", "demand matrix must be n x L");
    }
    if inst.lambda.len() != n + 1 {
        report.push("lambda", "lambda must have n + 1 entries");
    }
    if inst.scale.len() != l {
        report.push("q", "scale vector must have L entries");
    }

    if inst.demand.iter().flatten().any(|a| !(*a >= 0.0)) {
        report.push("A", "demand must be nonnegative");
    }
    if inst.rewards.iter().any(|r| !(*r > 0.0)) {
        report.push("r", "reward must be positive");
    }
    if inst.capacity.iter().any(|m| !(*m >= 0.0)) {
        report.push("m", "capacity must be nonnegative");
    }
    if inst.horizon == 0 {
        report.push("T", "horizon must be positive");
    }
    if !(inst.m_scale > 0.0) {
        report.push("m_scale", "m_scale must be positive");
    }
    if inst.lambda.iter().any(|p| !(*p >= 0.0)) {
        report.push("lambda", "arrival probabilities must be nonnegative");
    }
    let total: f64 = inst.lambda.iter().sum();
    if (total - 1.0).abs() > LAMBDA_TOL {
        report.push("lambda", "lambda not normalized");
    }
    if inst.scale.len() == l
        && inst
            .scale
            .iter()
            .zip(&inst.capacity)
            .any(|(q, m)| q * inst.m_scale != *m)
    {
        report.push("m", "capacity must equal q * m_scale");
    }
    report
}

/// On-disk instance format. `A` is row-major `n x L`. Capacities come from
/// either `m` or `q` with `m_scale`; the horizon from `T` or `horizon_ratio`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceFile {
    pub n: usize,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    pub r: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_scale: Option<f64>,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub t: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon_ratio: Option<f64>,
    pub lambda: Vec<f64>,
}

impl InstanceFile {
    pub fn into_instance(self) -> Result<Instance> {
        if self.a.len() != self.n * self.l {
            return Err(Error::Dimension(format!(
                "A has {} entries, expected n*L = {}",
                self.a.len(),
                self.n * self.l
            )));
        }
        let demand: Vec<Vec<f64>> = if self.l == 0 {
            vec![Vec::new(); self.n]
        } else {
            self.a.chunks(self.l).map(<[f64]>::to_vec).collect()
        };

        let (scale, m_scale) = match (self.m, self.q, self.m_scale) {
            (_, Some(q), Some(s)) => (q, s),
            (Some(m), None, None) => (m, 1.0),
            (Some(m), None, Some(s)) => (m.iter().map(|v| v / s).collect(), s),
            _ => {
                return Err(Error::invalid(
                    "instance needs `m`, or both `q` and `m_scale`",
                ))
            }
        };
        let capacity: Vec<f64> = scale.iter().map(|q| q * m_scale).collect();

        let horizon = match (self.t, self.horizon_ratio) {
            (Some(t), _) => t,
            (None, ratio) => (ratio.unwrap_or(DEFAULT_HORIZON_RATIO) * m_scale).round() as usize,
        };

        let lambda = if self.lambda.len() == self.n + 1 {
            self.lambda
        } else if self.lambda.len() == self.n {
            let s: f64 = self.lambda.iter().sum();
            let mut full = Vec::with_capacity(self.n + 1);
            full.push((1.0 - s).max(0.0));
            full.extend(self.lambda);
            full
        } else {
            return Err(Error::Dimension(format!(
                "lambda has {} entries, expected n or n + 1",
                self.lambda.len()
            )));
        };

        Ok(Instance {
            demand,
            rewards: self.r,
            capacity,
            horizon,
            lambda,
            scale,
            m_scale,
        })
    }

    pub fn from_instance(inst: &Instance) -> Self {
        InstanceFile {
            n: inst.n_types(),
            l: inst.n_resources(),
            a: inst.demand.iter().flatten().copied().collect(),
            r: inst.rewards.clone(),
            m: Some(inst.capacity.clone()),
            q: None,
            m_scale: None,
            t: Some(inst.horizon),
            horizon_ratio: None,
            lambda: inst.lambda.clone(),
        }
    }
}

pub fn load_instance(path: &std::path::Path) -> Result<Instance> {
    let text = std::fs::read_to_string(path)?;
    let file: InstanceFile = serde_json::from_str(&text)?;
    file.into_instance()
}

/// `(seed, stream_id)` names one reproducible random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RandomSource {
    pub seed: u64,
    pub stream_id: u64,
}

/// Sub-stream slots within a replication. Arrivals are shared by every
/// policy of a replication; each policy gets its own decision stream.
pub const ARRIVAL_SLOT: u64 = 0;

impl RandomSource {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        RandomSource { seed, stream_id }
    }

    /// Stream for `slot` of replication `replication`.
    pub fn for_replication(seed: u64, replication: u64, slot: u64) -> Self {
        RandomSource::new(seed, (replication << 8) | (slot & 0xff))
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrivalSequence {
    /// One entry per round: `0` for no arrival, otherwise the 1-based type.
    pub events: Vec<usize>,
    /// Realized totals per type (0-based type index).
    pub counts: Vec<u64>,
}

impl ArrivalSequence {
    pub fn from_events(events: Vec<usize>, n_types: usize) -> Result<Self> {
        let mut counts = vec![0u64; n_types];
        for &e in &events {
            if e > n_types {
                return Err(Error::invalid(format!(
                    "arrival type {e} exceeds n = {n_types}"
                )));
            }
            if e > 0 {
                counts[e - 1] += 1;
            }
        }
        Ok(ArrivalSequence { events, counts })
    }

    pub fn horizon(&self) -> usize {
        self.events.len()
    }

    /// The type arriving in round `t` as a 0-based index.
    pub fn arrival(&self, t: usize) -> Option<usize> {
        match self.events[t] {
            0 => None,
            e => Some(e - 1),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["round", "type"])?;
        for (t, e) in self.events.iter().enumerate() {
            w.write_record([t.to_string(), e.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_lambda(lambda: &[f64]) -> Result<()> {
    let s: f64 = lambda.iter().sum();
    if (s - 1.0).abs() > LAMBDA_TOL || lambda.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::Unnormalized(s));
    }
    Ok(())
}

/// Draws one arrival per round from `lambda` (index 0 = no arrival) by
/// inverting the cumulative distribution with one uniform per round.
pub fn sample_arrivals<R: Rng + ?Sized>(
    lambda: &[f64],
    horizon: usize,
    rng: &mut R,
) -> Result<ArrivalSequence> {
    check_lambda(lambda)?;
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    let mut cdf = Vec::with_capacity(lambda.len());
    let mut acc = 0.0;
    for p in lambda {
        acc += p;
        cdf.push(acc);
    }
    // Last bucket with positive mass absorbs rounding in the cdf tail.
    let last = lambda.iter().rposition(|p| *p > 0.0).unwrap_or(0);
    let events = (0..horizon)
        .map(|_| {
            let u: f64 = rng.random();
            cdf.iter()
                .position(|c| u < *c)
                .filter(|&k| lambda[k] > 0.0)
                .unwrap_or(last)
        })
        .collect();
    ArrivalSequence::from_events(events, lambda.len() - 1)
}

pub fn sample_arrivals_from(
    inst: &Instance,
    source: RandomSource,
) -> Result<ArrivalSequence> {
    sample_arrivals(&inst.lambda, inst.horizon, &mut source.rng())
}

/// Rescales a template: `m_j = q_j * m_scale`, `T = round(ratio * m_scale)`.
pub fn scale_instance(template: &Instance, m_scale: f64, horizon_ratio: f64) -> Result<Instance> {
    if !(m_scale > 0.0) {
        return Err(Error::invalid("m_scale must be positive"));
    }
    let horizon = (horizon_ratio * m_scale).round();
    if !(horizon >= 1.0) {
        return Err(Error::invalid("scaled horizon must be at least 1"));
    }
    Ok(Instance {
        capacity: template.scale.iter().map(|q| q * m_scale).collect(),
        horizon: horizon as usize,
        m_scale,
        ..template.clone()
    })
}

/// Same instance at horizon `T`, with capacity scaled by `T / template.horizon`
/// so the capacity-to-horizon ratio is preserved.
pub fn at_horizon(template: &Instance, horizon: usize) -> Result<Instance> {
    if horizon == 0 || template.horizon == 0 {
        return Err(Error::invalid("horizon must be positive"));
    }
    let m_scale = template.m_scale * horizon as f64 / template.horizon as f64;
    Ok(Instance {
        capacity: template.scale.iter().map(|q| q * m_scale).collect(),
        horizon,
        m_scale,
        ..template.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Instance {
        Instance::new(
            vec![vec![1.0, 0.0], vec![1.0, 2.0]],
            vec![1.0, 2.0],
            vec![10.0, 20.0],
            40,
            vec![0.2, 0.4, 0.4],
        )
    }

    #[test]
    fn valid_instance_passes() {
        assert!(tiny().validate().is_ok());
    }

    #[test]
    fn unnormalized_lambda_reported() {
        let mut inst = tiny();
        inst.lambda = vec![0.1, 0.4, 0.4];
        assert!(inst.validate().has("lambda not normalized"));
    }

    #[test]
    fn negative_reward_reported() {
        let mut inst = tiny();
        inst.rewards[0] = -1.0;
        let report = inst.validate();
        assert!(report.has("reward must be positive"));
        assert_eq!(report.violations[0].field, "r");
    }

    #[test]
    fn a_bounds_ignore_zeros() {
        let inst = tiny();
        assert_eq!(inst.a_max(), 2.0);
        assert_eq!(inst.a_min(), 1.0);
    }

    #[test]
    fn degenerate_distributions() {
        let mut rng = RandomSource::new(1, 0).rng();
        let all = sample_arrivals(&[0.0, 1.0], 5, &mut rng).unwrap();
        assert_eq!(all.events, vec![1; 5]);
        let none = sample_arrivals(&[1.0, 0.0], 5, &mut rng).unwrap();
        assert_eq!(none.events, vec![0; 5]);
        assert_eq!(none.counts, vec![0]);
    }

    #[test]
    fn half_split_within_band() {
        // 3 sigma of Bin(1e5, 0.5)/1e5 is 0.0047.
        let mut rng = RandomSource::new(7, 3).rng();
        let seq = sample_arrivals(&[0.5, 0.5], 100_000, &mut rng).unwrap();
        let frac = seq.counts[0] as f64 / 1e5;
        assert!((0.495..=0.505).contains(&frac), "{frac}");
    }

    #[test]
    fn unnormalized_rejected() {
        let mut rng = RandomSource::new(1, 0).rng();
        assert!(matches!(
            sample_arrivals(&[0.5, 0.4], 5, &mut rng),
            Err(Error::Unnormalized(_))
        ));
    }

    #[test]
    fn scaling_examples() {
        let mut inst = tiny();
        inst.scale = vec![1.0, 2.0];
        let s = scale_instance(&inst, 100.0, 4.0).unwrap();
        assert_eq!(s.capacity, vec![100.0, 200.0]);
        let s = scale_instance(&inst, 50.0, 4.0).unwrap();
        assert_eq!(s.horizon, 200);
        inst.scale = vec![0.5];
        let s = scale_instance(&inst, 10.0, 4.0).unwrap();
        assert_eq!(s.capacity, vec![5.0]);
        assert!(scale_instance(&inst, 0.0, 4.0).is_err());
    }

    #[test]
    fn file_fills_lambda_zero_and_scales() {
        let json = r#"{"n":2,"L":1,"A":[1,1],"r":[2,1],"q":[0.5],"m_scale":100,
                       "horizon_ratio":4,"lambda":[0.3,0.3]}"#;
        let file: InstanceFile = serde_json::from_str(json).unwrap();
        let inst = file.into_instance().unwrap();
        assert_eq!(inst.capacity, vec![50.0]);
        assert_eq!(inst.horizon, 400);
        assert!((inst.lambda[0] - 0.4).abs() < 1e-15);
        assert!(inst.validate().is_ok());
    }

    #[test]
    fn csv_export() {
        let seq = ArrivalSequence::from_events(vec![0, 2, 1], 2).unwrap();
        let mut buf = Vec::new();
        seq.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "round,type\n0,0\n1,2\n2,1\n");
    }
}
