//! Command-line front end: configuration, replication fan-out, and output
//! files with a hashed manifest.
//!
//! Every output is rendered in memory, written once, and listed in
//! `manifest.json` with its SHA-256. Nothing time- or host-dependent is
//! recorded, so a rerun with the same config and seed is byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adversarial::{
    default_families, empirical_cr, write_cr_csv, BookingPlan, Bl, CrRecord, Family, GpBl,
    GpNesting, Nesting,
};
use crate::error::{Error, Result};
use crate::grace::{write_grace_log, GpBpcOgd, GpFcfs, GpRdlp, GpSbpc, GraceConfig, SegmentSchedule};
use crate::metrics::{
    estimate_regret, fairness_audit, hindsight_value, loglog_slope, AuditConfig, RegretReport,
    Verdict, POLICY_SLOT,
};
use crate::model::{
    at_horizon, load_instance, sample_arrivals_from, validate_instance, ArrivalSequence, Instance,
    RandomSource, ARRIVAL_SLOT,
};
use crate::policy::{simulate, BpcOgd, DlpPa, Fcfs, OgdParams, Policy, RdlpPa, Sbpc};
use crate::pricing::{
    load_pricing_instance, price_fairness_audit, simulate_pricing, GpPricing, PricingInstance,
    PricingPolicy, StaticPricing,
};

/// Admission policies accepted by `--policy`.
pub const POLICY_IDS: &[&str] = &[
    "fcfs",
    "dlp-pa",
    "rdlp-pa",
    "s-bpc",
    "bpc-ogd",
    "gp-fcfs",
    "gp-dlp-pa",
    "gp-rdlp",
    "gp-s-bpc",
    "gp-bpc-ogd",
    "bl",
    "nesting",
    "gp-bl",
    "gp-nesting",
];

/// Posted-price policies; these read a pricing instance.
pub const PRICING_IDS: &[&str] = &["static-pricing", "gp-pricing"];

/// Stream slot for purchase draws in pricing runs.
pub const PURCHASE_SLOT: u64 = 2;

const DEFAULT_ALPHA: f64 = 0.1;

#[derive(Debug, Parser)]
#[command(name = "fairrm", version, about = "Revenue management simulator with grace-period fair admission")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON experiment config; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Instance JSON, overriding the config's `instance`.
    #[arg(long, global = true)]
    pub instance: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub replications: Option<usize>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub policy: Option<String>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    #[arg(long, global = true)]
    pub beta: Option<f64>,
    #[arg(long, global = true, env = "FAIRRM_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Simulate R replications and write one trace per replication.
    Run,
    /// Individual-fairness audit over R replications.
    Audit,
    /// Regret across horizons and its log-log slope.
    RegretSweep {
        #[arg(long, value_delimiter = ',')]
        horizons: Vec<usize>,
    },
    /// Empirical competitive ratio of a policy and its base across scales.
    CrSweep {
        #[arg(long = "m-scales", value_delimiter = ',')]
        m_scales: Vec<f64>,
        /// Base policy to compare against; defaults to the id without `gp-`.
        #[arg(long)]
        base: Option<String>,
    },
    /// Hindsight value of the arrivals in a trace or arrival CSV.
    Oracle {
        #[arg(long)]
        trace: PathBuf,
    },
    /// Check an instance file.
    Validate,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Defaults to `1 / T` of the instance being run.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_star: Option<usize>,
    /// Booking limits, used as given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<u64>>,
    /// Booking limits per unit of `m_scale`; rounded at each scale.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_per_m: Option<Vec<f64>>,
    #[serde(rename = "D", skip_serializing_if = "Option::is_none")]
    pub diameter: Option<f64>,
    #[serde(rename = "G", skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_bar: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Resolved against the config file's directory when relative.
    pub instance: Option<PathBuf>,
    pub policy: Option<String>,
    pub params: PolicyParams,
    pub replications: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub horizons: Vec<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub m_scales: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub families: Vec<Family>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub offsets: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_policy: Option<String>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = serde_json::from_str(&fs::read_to_string(path)?)?;
        if let (Some(inst), Some(dir)) = (&cfg.instance, path.parent()) {
            if inst.is_relative() {
                cfg.instance = Some(dir.join(inst));
            }
        }
        Ok(cfg)
    }

    /// Applies command-line overrides.
    pub fn merge(mut self, args: &CommonArgs) -> Self {
        macro_rules! over {
            ($dst:expr, $src:expr) => {
                if let Some(v) = $src.clone() {
                    $dst = Some(v);
                }
            };
        }
        over!(self.instance, args.instance);
        over!(self.seed, args.seed);
        over!(self.replications, args.replications);
        over!(self.out, args.out);
        over!(self.policy, args.policy);
        over!(self.params.alpha, args.alpha);
        over!(self.params.delta, args.delta);
        over!(self.params.beta, args.beta);
        self
    }
}

/// A registered policy id with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySpec {
    pub id: String,
    pub params: PolicyParams,
}

impl PolicySpec {
    pub fn new(id: &str, params: PolicyParams) -> Result<Self> {
        if !POLICY_IDS.contains(&id) && !PRICING_IDS.contains(&id) {
            return Err(Error::Unknown { kind: "policy", id: id.to_string() });
        }
        Ok(PolicySpec { id: id.to_string(), params })
    }

    pub fn is_pricing(&self) -> bool {
        PRICING_IDS.contains(&self.id.as_str())
    }

    pub fn alpha(&self) -> f64 {
        self.params.alpha.unwrap_or(DEFAULT_ALPHA)
    }

    pub fn delta(&self, horizon: usize) -> f64 {
        self.params.delta.unwrap_or(1.0 / horizon.max(2) as f64)
    }

    pub fn grace(&self, inst: &Instance) -> Result<GraceConfig> {
        GraceConfig::new(self.alpha(), self.delta(inst.horizon))
    }

    fn ogd(&self, inst: &Instance) -> OgdParams {
        let mut p = OgdParams::defaults(inst, self.params.theta_bar);
        if let Some(d) = self.params.diameter {
            p.diameter = d;
        }
        if let Some(g) = self.params.lipschitz {
            p.lipschitz = g;
        }
        p
    }

    fn booking(&self, inst: &Instance) -> Result<BookingPlan> {
        match (&self.params.b, &self.params.b_per_m) {
            (Some(b), _) => Ok(BookingPlan::new(b.clone())),
            (None, Some(f)) => Ok(BookingPlan::new(
                f.iter().map(|v| (v * inst.m_scale).round().max(0.0) as u64).collect(),
            )),
            (None, None) => BookingPlan::from_dlp(inst),
        }
    }

    fn t_star(&self, inst: &Instance) -> usize {
        self.params.t_star.unwrap_or(inst.horizon / 2)
    }

    /// Builds the admission policy for one replication.
    pub fn build(&self, inst: &Instance, source: RandomSource) -> Result<Box<dyn Policy>> {
        let p: Box<dyn Policy> = match self.id.as_str() {
            "fcfs" => Box::new(Fcfs),
            "dlp-pa" => Box::new(DlpPa::from_dlp(inst, source)?),
            "rdlp-pa" => Box::new(RdlpPa::new(inst, self.t_star(inst), source)?),
            "s-bpc" => Box::new(Sbpc::from_dlp(inst)?),
            "bpc-ogd" => Box::new(BpcOgd::new(inst, self.ogd(inst))),
            "gp-fcfs" => Box::new(GpFcfs::new(inst, self.grace(inst)?, source)),
            "gp-dlp-pa" => {
                let beta = self.params.beta.unwrap_or(0.5);
                let schedule = SegmentSchedule::from_beta(inst.horizon, beta, None)?;
                Box::new(GpRdlp::new(inst, self.grace(inst)?, schedule, source)?)
            }
            "gp-rdlp" => {
                let beta = self.params.beta.unwrap_or(1.0 / 3.0);
                let mut schedule = SegmentSchedule::from_beta(inst.horizon, beta, None)?;
                let at = schedule.align(self.t_star(inst));
                schedule.resolve_at = (at > 0 && at < inst.horizon).then_some(at);
                Box::new(GpRdlp::new(inst, self.grace(inst)?, schedule, source)?)
            }
            "gp-s-bpc" => Box::new(GpSbpc::from_dlp(inst, self.grace(inst)?, source)?),
            "gp-bpc-ogd" => Box::new(GpBpcOgd::new(inst, self.grace(inst)?, self.ogd(inst), source)?),
            "bl" => Box::new(Bl::new(inst, &self.booking(inst)?)?),
            "nesting" => Box::new(Nesting::new(inst, &self.booking(inst)?)?),
            "gp-bl" => Box::new(GpBl::new(inst, &self.booking(inst)?, self.grace(inst)?, source)?),
            "gp-nesting" => {
                Box::new(GpNesting::new(inst, &self.booking(inst)?, self.grace(inst)?, source)?)
            }
            other => return Err(Error::Unknown { kind: "admission policy", id: other.to_string() }),
        };
        Ok(p)
    }

    pub fn build_pricing(
        &self,
        pinst: &PricingInstance,
        source: RandomSource,
    ) -> Result<Box<dyn PricingPolicy>> {
        match self.id.as_str() {
            "static-pricing" => Ok(Box::new(StaticPricing::new(pinst))),
            "gp-pricing" => Ok(Box::new(GpPricing::new(pinst, self.grace(&pinst.base)?, source))),
            other => Err(Error::Unknown { kind: "pricing policy", id: other.to_string() }),
        }
    }
}

#[derive(Debug, Serialize)]
struct StreamEntry {
    replication: u64,
    arrivals: u64,
    policy: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    purchases: Option<u64>,
}

#[derive(Debug, Serialize)]
struct OutputEntry {
    file: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: String,
    seed: u64,
    config: &'a ExperimentConfig,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    streams: Vec<StreamEntry>,
    outputs: Vec<OutputEntry>,
}

/// Collects output files, writing each once and remembering its hash.
struct Outputs {
    dir: PathBuf,
    entries: Vec<OutputEntry>,
}

impl Outputs {
    fn new(dir: PathBuf) -> Result<Self> {
        fs::create_dir_all(&dir)?;
        Ok(Outputs { dir, entries: Vec::new() })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        self.entries.push(OutputEntry { file: name.to_string(), sha256: sha256_hex(bytes) });
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    fn finish(self, command: &str, seed: u64, config: &ExperimentConfig, streams: Vec<StreamEntry>) -> Result<()> {
        let manifest = Manifest {
            command,
            version: version_string(),
            seed,
            config,
            streams,
            outputs: self.entries,
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        fs::write(self.dir.join("manifest.json"), bytes)?;
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn version_string() -> String {
    option_env!("FAIRRM_DESCRIBE")
        .map(str::to_string)
        .unwrap_or_else(|| format!("v{}", env!("CARGO_PKG_VERSION")))
}

fn render<F: FnOnce(&mut Vec<u8>) -> Result<()>>(f: F) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

struct Context {
    cfg: ExperimentConfig,
    seed: u64,
    out: PathBuf,
}

impl Context {
    fn policy(&self) -> Result<PolicySpec> {
        let id = self.cfg.policy.as_deref().ok_or_else(|| Error::invalid("no policy given"))?;
        PolicySpec::new(id, self.cfg.params.clone())
    }

    fn instance_path(&self) -> Result<&Path> {
        self.cfg.instance.as_deref().ok_or_else(|| Error::invalid("no instance given"))
    }

    fn replications(&self, default: usize) -> usize {
        self.cfg.replications.unwrap_or(default)
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn execute(cli: Cli) -> Result<i32> {
    let mut cfg = match &cli.common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    cfg = cfg.merge(&cli.common);
    let ctx = Context {
        seed: cfg.seed.unwrap_or(0),
        out: cfg.out.clone().unwrap_or_else(|| PathBuf::from("out")),
        cfg,
    };
    let pool = match cli.common.threads {
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n),
        None => rayon::ThreadPoolBuilder::new(),
    }
    .build()
    .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Run => cmd_run(&ctx),
        Command::Audit => cmd_audit(&ctx),
        Command::RegretSweep { horizons } => cmd_regret_sweep(&ctx, horizons),
        Command::CrSweep { m_scales, base } => cmd_cr_sweep(&ctx, m_scales, base.as_deref()),
        Command::Oracle { trace } => cmd_oracle(&ctx, trace),
        Command::Validate => cmd_validate(&ctx),
    })
}

fn streams(seed: u64, reps: usize, pricing: bool) -> Vec<StreamEntry> {
    (0..reps as u64)
        .map(|r| StreamEntry {
            replication: r,
            arrivals: RandomSource::for_replication(seed, r, ARRIVAL_SLOT).stream_id,
            policy: RandomSource::for_replication(seed, r, POLICY_SLOT).stream_id,
            purchases: pricing.then(|| RandomSource::for_replication(seed, r, PURCHASE_SLOT).stream_id),
        })
        .collect()
}

fn pricing_traces(
    pinst: &PricingInstance,
    spec: &PolicySpec,
    seed: u64,
    reps: usize,
) -> Result<Vec<crate::pricing::PriceTrace>> {
    (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let arrivals = sample_arrivals_from(
                &pinst.base,
                RandomSource::for_replication(seed, r, ARRIVAL_SLOT),
            )?;
            let mut policy = spec.build_pricing(pinst, RandomSource::for_replication(seed, r, POLICY_SLOT))?;
            simulate_pricing(
                pinst,
                &arrivals,
                &mut policy,
                RandomSource::for_replication(seed, r, PURCHASE_SLOT),
            )
        })
        .collect()
}

#[derive(Serialize)]
struct RunSummaryRow {
    replication: usize,
    revenue: f64,
    blocked: usize,
    depleted: bool,
}

fn cmd_run(ctx: &Context) -> Result<i32> {
    let spec = ctx.policy()?;
    let reps = ctx.replications(1);
    let digits = reps.saturating_sub(1).to_string().len().max(4);
    let mut out = Outputs::new(ctx.out.clone())?;
    let mut summary = Vec::with_capacity(reps);

    if spec.is_pricing() {
        let pinst = load_pricing_instance(ctx.instance_path()?)?;
        let traces = pricing_traces(&pinst, &spec, ctx.seed, reps)?;
        for (r, tr) in traces.iter().enumerate() {
            out.write(&format!("trace_{r:0digits$}.csv"), &render(|b| tr.write_csv(b))?)?;
            summary.push(RunSummaryRow {
                replication: r,
                revenue: tr.revenue,
                blocked: tr.blocked,
                depleted: tr.depleted(),
            });
        }
    } else {
        let inst = load_instance(ctx.instance_path()?)?;
        let results: Vec<(Vec<u8>, Option<Vec<u8>>, RunSummaryRow)> = (0..reps)
            .into_par_iter()
            .map(|r| {
                let arrivals = sample_arrivals_from(
                    &inst,
                    RandomSource::for_replication(ctx.seed, r as u64, ARRIVAL_SLOT),
                )?;
                let mut policy =
                    spec.build(&inst, RandomSource::for_replication(ctx.seed, r as u64, POLICY_SLOT))?;
                let trace = simulate(&inst, &arrivals, &mut policy);
                let csv = render(|b| trace.write_csv(b))?;
                let log = policy.grace_log();
                let log = if log.is_empty() { None } else { Some(render(|b| write_grace_log(log, b))?) };
                let row = RunSummaryRow {
                    replication: r,
                    revenue: trace.revenue,
                    blocked: trace.blocked,
                    depleted: trace.depleted(),
                };
                Ok((csv, log, row))
            })
            .collect::<Result<_>>()?;
        for (r, (csv, log, row)) in results.into_iter().enumerate() {
            out.write(&format!("trace_{r:0digits$}.csv"), &csv)?;
            if let Some(log) = log {
                out.write(&format!("grace_{r:0digits$}.csv"), &log)?;
            }
            summary.push(row);
        }
    }
    out.write("summary.csv", &csv_rows(&summary)?)?;
    out.finish("run", ctx.seed, &ctx.cfg, streams(ctx.seed, reps, spec.is_pricing()))?;
    println!("wrote {reps} trace(s) to {}", ctx.out.display());
    Ok(0)
}

fn csv_rows<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    render(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    })
}

#[derive(Serialize)]
struct AuditRow {
    type_index: usize,
    d: usize,
    max_reject_accept: f64,
    max_accept_reject: f64,
    sigma: f64,
    bound: f64,
    mean_reject_accept: f64,
    mean_accept_reject: f64,
    uncond_max_reject_accept: f64,
    uncond_max_accept_reject: f64,
    uncond_argmax: usize,
    pass: bool,
}

#[derive(Serialize)]
struct PriceAuditRow {
    type_index: usize,
    d: usize,
    max_conditional: f64,
    sigma: f64,
    bound: f64,
    max_unconditional: f64,
    argmax_unconditional: usize,
    pass: bool,
}

fn cmd_audit(ctx: &Context) -> Result<i32> {
    let spec = ctx.policy()?;
    let reps = ctx.replications(1000);
    let mut out = Outputs::new(ctx.out.clone())?;
    let verdict = if spec.is_pricing() {
        let pinst = load_pricing_instance(ctx.instance_path()?)?;
        let traces = pricing_traces(&pinst, &spec, ctx.seed, reps)?;
        let report = price_fairness_audit(&traces, spec.alpha(), spec.delta(pinst.base.horizon));
        let rows: Vec<PriceAuditRow> = report
            .types
            .iter()
            .enumerate()
            .flat_map(|(i, stats)| {
                stats.iter().map(move |s| PriceAuditRow {
                    type_index: i + 1,
                    d: s.d,
                    max_conditional: s.max_conditional,
                    sigma: s.sigma,
                    bound: s.bound,
                    max_unconditional: s.max_unconditional,
                    argmax_unconditional: s.argmax_unconditional,
                    pass: s.pass,
                })
            })
            .collect();
        out.json("audit.json", &report)?;
        out.write("audit.csv", &csv_rows(&rows)?)?;
        report.verdict
    } else {
        let inst = load_instance(ctx.instance_path()?)?;
        let runs = (0..reps as u64)
            .into_par_iter()
            .map(|r| {
                let arrivals =
                    sample_arrivals_from(&inst, RandomSource::for_replication(ctx.seed, r, ARRIVAL_SLOT))?;
                let mut policy = spec.build(&inst, RandomSource::for_replication(ctx.seed, r, POLICY_SLOT))?;
                Ok(simulate(&inst, &arrivals, &mut policy).type_decisions())
            })
            .collect::<Result<Vec<_>>>()?;
        let mut audit = AuditConfig::new(spec.alpha(), spec.delta(inst.horizon));
        if !ctx.cfg.offsets.is_empty() {
            audit.offsets = ctx.cfg.offsets.clone();
        }
        let report = fairness_audit(&runs, &audit);
        let rows: Vec<AuditRow> = report
            .types
            .iter()
            .flat_map(|t| {
                t.offsets.iter().map(move |s| AuditRow {
                    type_index: t.type_index + 1,
                    d: s.d,
                    max_reject_accept: s.max_reject_accept,
                    max_accept_reject: s.max_accept_reject,
                    sigma: s.sigma,
                    bound: s.bound,
                    mean_reject_accept: s.mean_reject_accept,
                    mean_accept_reject: s.mean_accept_reject,
                    uncond_max_reject_accept: s.uncond_max_reject_accept,
                    uncond_max_accept_reject: s.uncond_max_accept_reject,
                    uncond_argmax: s.uncond_argmax,
                    pass: s.pass,
                })
            })
            .collect();
        out.json("audit.json", &report)?;
        out.write("audit.csv", &csv_rows(&rows)?)?;
        report.verdict
    };
    out.finish("audit", ctx.seed, &ctx.cfg, streams(ctx.seed, reps, spec.is_pricing()))?;
    let label = match verdict {
        Verdict::Pass => "PASS",
        Verdict::Fail => "FAIL",
        Verdict::LowPower => "LOW POWER",
    };
    println!("audit {}: {label}", spec.id);
    Ok(verdict.exit_code())
}

#[derive(Serialize)]
struct RegretSummary<'a> {
    policy: &'a str,
    /// Least-squares slope of log regret on log T; absent when any regret
    /// is non-positive.
    slope: Option<f64>,
    reports: &'a [RegretReport],
}

fn cmd_regret_sweep(ctx: &Context, horizons: &[usize]) -> Result<i32> {
    let spec = ctx.policy()?;
    if spec.is_pricing() {
        return Err(Error::invalid("regret-sweep supports admission policies only"));
    }
    let horizons = if horizons.is_empty() { ctx.cfg.horizons.as_slice() } else { horizons };
    if horizons.len() < 3 {
        return Err(Error::invalid("regret-sweep needs at least three horizons"));
    }
    let template = load_instance(ctx.instance_path()?)?;
    let reps = ctx.replications(200);
    let factory = |inst: &Instance, src: RandomSource| spec.build(inst, src);
    let reports = horizons
        .iter()
        .map(|&t| estimate_regret(&at_horizon(&template, t)?, &spec.id, &factory, reps, ctx.seed))
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = reports.iter().map(|r| r.horizon as f64).collect();
    let ys: Vec<f64> = reports.iter().map(|r| r.regret).collect();
    let slope = loglog_slope(&xs, &ys);
    let mut out = Outputs::new(ctx.out.clone())?;
    out.write("regret.csv", &csv_rows(&reports)?)?;
    out.json("regret_summary.json", &RegretSummary { policy: &spec.id, slope, reports: &reports })?;
    out.finish("regret-sweep", ctx.seed, &ctx.cfg, Vec::new())?;
    match slope {
        Some(s) => println!("{}: log-log regret slope {s:.4}", spec.id),
        None => println!("{}: log-log regret slope not applicable", spec.id),
    }
    Ok(0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrSummaryRow {
    pub m_scale: f64,
    pub base_ratio: f64,
    pub gp_ratio: f64,
    pub gap: f64,
    /// `gap * m / ln m`.
    pub gap_scaled: f64,
}

fn cmd_cr_sweep(ctx: &Context, m_scales: &[f64], base: Option<&str>) -> Result<i32> {
    let spec = ctx.policy()?;
    let m_scales = if m_scales.is_empty() { ctx.cfg.m_scales.as_slice() } else { m_scales };
    if m_scales.len() < 3 {
        return Err(Error::invalid("cr-sweep needs at least three values of m_scale"));
    }
    let base_id = base
        .map(str::to_string)
        .or_else(|| ctx.cfg.base_policy.clone())
        .unwrap_or_else(|| spec.id.trim_start_matches("gp-").to_string());
    let base = PolicySpec::new(&base_id, spec.params.clone())?;
    let families = if ctx.cfg.families.is_empty() { default_families() } else { ctx.cfg.families.clone() };
    let template = load_instance(ctx.instance_path()?)?;
    let reps = ctx.replications(100);

    let base_factory = |inst: &Instance, src: RandomSource| base.build(inst, src);
    let gp_factory = |inst: &Instance, src: RandomSource| spec.build(inst, src);
    let base_rep = empirical_cr(&template, &base.id, &base_factory, &families, m_scales, reps, ctx.seed)?;
    let gp_rep = empirical_cr(&template, &spec.id, &gp_factory, &families, m_scales, reps, ctx.seed)?;

    let summary: Vec<CrSummaryRow> = base_rep
        .ratios
        .iter()
        .zip(&gp_rep.ratios)
        .map(|(&(m, b), &(_, g))| {
            let gap = b - g;
            CrSummaryRow { m_scale: m, base_ratio: b, gp_ratio: g, gap, gap_scaled: gap * m / m.ln() }
        })
        .collect();
    let records: Vec<CrRecord> = base_rep.records.iter().chain(&gp_rep.records).cloned().collect();
    let mut out = Outputs::new(ctx.out.clone())?;
    out.write("cr_records.csv", &render(|b| write_cr_csv(&records, b))?)?;
    out.write("cr_summary.csv", &csv_rows(&summary)?)?;
    let skipped: Vec<&String> = base_rep.skipped.iter().chain(&gp_rep.skipped).collect();
    if !skipped.is_empty() {
        out.json("cr_skipped.json", &skipped)?;
    }
    out.finish("cr-sweep", ctx.seed, &ctx.cfg, Vec::new())?;
    for row in &summary {
        println!(
            "m={}: {} {:.4}, {} {:.4}, gap*m/ln m {:.4}",
            row.m_scale, base.id, row.base_ratio, spec.id, row.gp_ratio, row.gap_scaled
        );
    }
    Ok(0)
}

/// Arrival events from a CSV with a `type` column (0 = no arrival).
pub fn read_events(path: &Path) -> Result<Vec<usize>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let col = rdr
        .headers()?
        .iter()
        .position(|h| h == "type")
        .ok_or_else(|| Error::invalid(format!("{}: no `type` column", path.display())))?;
    rdr.records()
        .map(|rec| {
            let rec = rec?;
            rec[col]
                .parse::<usize>()
                .map_err(|e| Error::invalid(format!("bad type `{}`: {e}", &rec[col])))
        })
        .collect()
}

#[derive(Serialize)]
struct OracleReport {
    horizon: usize,
    counts: Vec<u64>,
    value: f64,
}

fn cmd_oracle(ctx: &Context, trace: &Path) -> Result<i32> {
    let inst = load_instance(ctx.instance_path()?)?;
    let arrivals = ArrivalSequence::from_events(read_events(trace)?, inst.n_types())?;
    let inst = Instance { horizon: arrivals.horizon(), ..inst };
    let value = hindsight_value(&inst, &arrivals)?;
    let mut out = Outputs::new(ctx.out.clone())?;
    out.json("oracle.json", &OracleReport { horizon: inst.horizon, counts: arrivals.counts.clone(), value })?;
    out.finish("oracle", ctx.seed, &ctx.cfg, Vec::new())?;
    println!("{value}");
    Ok(0)
}

fn cmd_validate(ctx: &Context) -> Result<i32> {
    let path = ctx.instance_path()?;
    let report = match ctx.cfg.policy.as_deref() {
        Some(id) if PRICING_IDS.contains(&id) => {
            load_pricing_instance(path)?;
            Default::default()
        }
        _ => validate_instance(&load_instance(path)?),
    };
    let mut out = Outputs::new(ctx.out.clone())?;
    out.json("validation.json", &report)?;
    out.finish("validate", ctx.seed, &ctx.cfg, Vec::new())?;
    for v in &report.violations {
        println!("{}: {}", v.field, v.message);
    }
    println!("{}", if report.is_ok() { "valid" } else { "invalid" });
    Ok(if report.is_ok() { 0 } else { 2 })
}
