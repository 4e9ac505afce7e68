//! Subcommand implementations. Each returns whether every sampler converged.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::time::Duration;

use prefeval_core::analysis::{
    budget_curve, build_report, format_curve_table, format_report_table, human_distribution, human_reference,
    naive_decision, protocol_distribution, CurveCampaign, DistributionPair,
};
use prefeval_core::decision::{decide_pair, PairEvidence};
use prefeval_core::io::{
    build_manifest, load_json, load_preference_records, save_json, save_preference_records, split_by_source,
    to_canonical_json,
};
use prefeval_core::protocol::{
    system_pairs, AnnotationSource, PairStatus, Protocol, ProtocolConfig, ProtocolResult, ReplayPool,
    SimulatedOracle, SourceError,
};
use prefeval_core::simulator::{generate_campaign, SyntheticCampaignSpec, MU_SIM};
use prefeval_core::{
    confusion_counts, CountTriple, MixtureMatrix, PreferenceOutcome, PreferenceRecord, ProbabilityTriple, RatingSource,
    SystemId, SystemPair,
};
use prefeval_service::{drive_live, spawn, LiveQueue, SampleCatalog, ServiceConfig};

use crate::{AnalyzeArgs, CurveArgs, DecideArgs, InputArgs, ProtocolArgs, SimulateArgs};

pub enum Status {
    Done,
    NotConverged,
}

#[derive(Debug)]
pub struct CliError(String);

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<prefeval_core::Error> for CliError {
    fn from(e: prefeval_core::Error) -> Self {
        CliError(e.to_string())
    }
}

impl From<SourceError> for CliError {
    fn from(e: SourceError) -> Self {
        CliError(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError(e.to_string())
    }
}

type CmdResult = Result<Status, CliError>;

fn fail<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError(msg.into()))
}

fn read_records(path: &Path, input: &InputArgs) -> Result<Vec<PreferenceRecord>, CliError> {
    let records = load_preference_records(path, !input.lenient)
        .map_err(|e| CliError(format!("{}: {e}", path.display())))?;
    Ok(match &input.metric_name {
        Some(name) => records
            .into_iter()
            .filter(|r| r.source == RatingSource::Human || r.metric_name.as_deref() == Some(name))
            .collect(),
        None => records,
    })
}

fn read_metric(path: Option<&Path>, input: &InputArgs) -> Result<Vec<PreferenceRecord>, CliError> {
    let Some(path) = path else {
        return Ok(Vec::new());
    };
    let (human, metric) = split_by_source(read_records(path, input)?);
    if !human.is_empty() {
        return fail(format!("{}: metric rating file contains human ratings", path.display()));
    }
    Ok(metric)
}

fn parse_pair(s: &str) -> Result<SystemPair, CliError> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| CliError(format!("pair '{s}' is not of the form FIRST:SECOND")))?;
    Ok(SystemPair::new(a, b)?)
}

fn system_ids(names: &[String]) -> Vec<SystemId> {
    names.iter().map(|s| SystemId::new(s.trim())).collect()
}

fn converged(ok: bool) -> Status {
    if ok {
        Status::Done
    } else {
        Status::NotConverged
    }
}

pub fn decide(args: &DecideArgs) -> CmdResult {
    let cfg = args.decision.config();
    cfg.validate()?;
    let mut records = read_records(&args.human, &args.input)?;
    if let Some(m) = &args.metric {
        records.extend(read_metric(Some(m), &args.input)?);
    }
    let pair = match &args.pair {
        Some(p) => {
            let pair = parse_pair(p)?;
            records.retain(|r| r.outcome_for(&pair).is_some());
            pair
        }
        None => {
            let pairs: BTreeSet<(&SystemId, &SystemId)> = records
                .iter()
                .map(|r| (Ord::min(&r.system_a, &r.system_b), Ord::max(&r.system_a, &r.system_b)))
                .collect();
            match (pairs.len(), records.first()) {
                (1, Some(r)) => SystemPair::new(r.system_a.clone(), r.system_b.clone())?,
                (0, _) | (_, None) => return fail("no ratings to decide from"),
                _ => return fail("the ratings cover several system pairs; choose one with --pair"),
            }
        }
    };
    let evidence = PairEvidence::from_records(&pair, &records)?;
    let decision = decide_pair(&evidence, &cfg)?;
    print!("{}", to_canonical_json(&decision)?);
    Ok(converged(decision.converged))
}

fn parse_triple(s: &str) -> Result<ProbabilityTriple, CliError> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError(format!("'{s}' is not a comma-separated W,D,L triple")))?;
    match parts[..] {
        [w, d, l] => Ok(ProbabilityTriple::new(w, d, l)?),
        _ => fail(format!("'{s}' is not a comma-separated W,D,L triple")),
    }
}

fn parse_oracle(spec: &str) -> Result<SimulatedOracle, CliError> {
    if !spec.contains('=') {
        return Ok(SimulatedOracle::uniform(parse_triple(spec)?));
    }
    let mut map = BTreeMap::new();
    for entry in spec.split(';').filter(|e| !e.trim().is_empty()) {
        let (pair, triple) = entry
            .split_once('=')
            .ok_or_else(|| CliError(format!("'{entry}' is not of the form A:B=W,D,L")))?;
        map.insert(parse_pair(pair.trim())?.key(), parse_triple(triple)?);
    }
    Ok(SimulatedOracle::per_pair(map))
}

fn run_rounds<S: AnnotationSource>(protocol: &mut Protocol, source: &mut S, checkpoint: Option<&Path>) -> Result<(), CliError> {
    loop {
        let more = protocol.step(source);
        if let Some(path) = checkpoint {
            save_json(path, protocol.state())?;
        }
        if !more? {
            return Ok(());
        }
    }
}

fn load_pool(path: &Path, limit: Option<usize>, input: &InputArgs) -> Result<ReplayPool, CliError> {
    let pool = ReplayPool::new(read_records(path, input)?).map_err(|e| CliError(format!("{}: {e}", path.display())))?;
    Ok(match limit {
        Some(n) => pool.truncated(n),
        None => pool,
    })
}

fn protocol_summary(result: &ProtocolResult) -> String {
    let width = result.pairs.keys().map(String::len).max().unwrap_or(4).max(4);
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  {:<9}  {:>7}  {:>11}  {:>7}", "pair", "status", "verdict", "annotations", "theta");
    for (key, rec) in &result.pairs {
        let status = match rec.status {
            PairStatus::Undecided => "undecided",
            PairStatus::Decided => "decided",
            PairStatus::Exhausted => "exhausted",
        };
        let (verdict, theta) = match &rec.decision {
            Some(d) if rec.status == PairStatus::Decided => (d.verdict.symbol(), format!("{:.4}", d.theta)),
            Some(d) => ("=", format!("{:.4}", d.theta)),
            None => ("=", "-".to_string()),
        };
        let _ = writeln!(
            out,
            "{key:<width$}  {status:<9}  {verdict:>7}  {:>11}  {theta:>7}",
            rec.annotations_used
        );
    }
    let _ = writeln!(
        out,
        "rounds {}, annotations {}, budget remaining {}, order edges {}{}",
        result.rounds,
        result.total_annotations,
        result.budget_remaining,
        result.partial_order.edges.len(),
        if result.partial_order.cycle_flag { ", cycles present" } else { "" }
    );
    out
}

fn live_error(e: prefeval_core::Error, checkpoint: Option<&Path>) -> CliError {
    match (&e, checkpoint) {
        (prefeval_core::Error::Source(SourceError::Timeout { .. }), Some(path)) => CliError(format!(
            "{e}; the run was saved to {} and can be continued with --resume",
            path.display()
        )),
        _ => CliError(e.to_string()),
    }
}

pub fn protocol(args: &ProtocolArgs) -> CmdResult {
    let systems = system_ids(&args.systems);
    let metric = read_metric(args.metric_ratings.as_deref(), &args.input)?;
    let checkpoint = args.checkpoint.as_deref();
    let mut protocol = match &args.resume {
        Some(path) => Protocol::resume(load_json(path)?, &metric)?,
        None => {
            let cfg = ProtocolConfig {
                batch_size: args.batch,
                budget: args.budget,
                decision: args.decision.config(),
            };
            Protocol::new(&systems, &metric, cfg)?
        }
    };
    if protocol.state().systems != systems {
        return fail("the saved run was started with a different system list");
    }
    let timeout = Duration::from_secs(args.timeout);

    if let Some(path) = &args.annotation_pool {
        let mut pool = load_pool(path, args.pool_limit, &args.input)?;
        run_rounds(&mut protocol, &mut pool, checkpoint)?;
    } else if let Some(spec) = &args.oracle_p {
        let mut oracle = parse_oracle(spec)?;
        if let Some(cap) = args.oracle_capacity {
            oracle = oracle.with_capacity(cap);
        }
        run_rounds(&mut protocol, &mut oracle, checkpoint)?;
    } else if let Some(url) = &args.live {
        let mut live = LiveQueue::new(url, timeout)?;
        drive_live(&mut protocol, &mut live, checkpoint).map_err(|e| live_error(e, checkpoint))?;
    } else if let Some(addr) = &args.serve {
        let catalog = args.catalog.as_deref().map(SampleCatalog::load).transpose()?;
        let server = spawn(
            addr,
            ServiceConfig {
                catalog,
                ui_dir: args.ui_dir.clone(),
                ..ServiceConfig::default()
            },
        )
        .map_err(|e| CliError(format!("cannot listen on {addr}: {e}")))?;
        eprintln!("annotation service listening on {}", server.url());
        let mut live = LiveQueue::new(&server.url(), timeout)?;
        drive_live(&mut protocol, &mut live, checkpoint).map_err(|e| live_error(e, checkpoint))?;
    }

    let result = protocol.finish()?;
    save_json(&args.out, &result)?;
    print!("{}", protocol_summary(&result));
    let all_converged = result.pairs.values().all(|r| r.decision.is_none_or(|d| d.converged));
    Ok(converged(all_converged))
}

/// Orient `verdicts` to the canonical pairs, accepting keys given the other
/// way round.
fn align_verdicts(
    pairs: &[SystemPair],
    verdicts: &BTreeMap<String, PreferenceOutcome>,
) -> Result<BTreeMap<String, PreferenceOutcome>, CliError> {
    pairs
        .iter()
        .map(|p| {
            let v = match (verdicts.get(&p.key()), verdicts.get(&p.reversed().key())) {
                (Some(v), _) => *v,
                (None, Some(v)) => v.flipped(),
                (None, None) => return fail(format!("no automated verdict for {p}")),
            };
            Ok((p.key(), v))
        })
        .collect()
}

pub fn analyze(args: &AnalyzeArgs) -> CmdResult {
    let cfg = args.decision.config();
    cfg.validate()?;
    let (human, _) = split_by_source(read_records(&args.human, &args.input)?);
    let systems = match &args.systems {
        Some(s) => system_ids(s),
        None => {
            let set: BTreeSet<SystemId> = human
                .iter()
                .flat_map(|r| [r.system_a.clone(), r.system_b.clone()])
                .collect();
            set.into_iter().collect()
        }
    };
    let pairs = system_pairs(&systems)?;
    let reference = human_reference(&systems, &human, &cfg)?;
    let reference_verdicts: BTreeMap<String, PreferenceOutcome> =
        reference.iter().map(|(k, (v, _))| (k.clone(), *v)).collect();
    let human_dists: BTreeMap<String, ProbabilityTriple> = reference
        .iter()
        .map(|(k, (_, c))| (k.clone(), human_distribution(c)))
        .collect();

    let (label, report) = if let Some(path) = &args.result {
        let result: ProtocolResult = load_json(path)?;
        let automated = align_verdicts(&pairs, &result.verdicts())?;
        let protocol_dists: BTreeMap<String, ProbabilityTriple> = pairs
            .iter()
            .map(|p| {
                let rec = result
                    .pairs
                    .get(&p.key())
                    .ok_or_else(|| CliError(format!("the result has no pair {p}")))?;
                Ok((p.key(), protocol_distribution(rec)))
            })
            .collect::<Result<_, CliError>>()?;
        let dists = DistributionPair {
            protocol: &protocol_dists,
            human: &human_dists,
        };
        let report = build_report(
            &reference_verdicts,
            &automated,
            Some(dists),
            Some((result.total_annotations, human.len() as u64)),
        )?;
        ("protocol", report)
    } else if let Some(path) = &args.verdicts {
        let verdicts: BTreeMap<String, PreferenceOutcome> = load_json(path)?;
        let automated = align_verdicts(&pairs, &verdicts)?;
        ("verdicts", build_report(&reference_verdicts, &automated, None, None)?)
    } else if let Some(path) = &args.naive {
        let metric = read_metric(Some(path), &args.input)?;
        let automated: BTreeMap<String, PreferenceOutcome> = pairs
            .iter()
            .map(|p| {
                let mut counts = CountTriple::default();
                for o in metric.iter().filter_map(|r| r.outcome_for(p)) {
                    counts.add(o, 1);
                }
                (p.key(), naive_decision(&counts, cfg.gamma))
            })
            .collect();
        ("naive", build_report(&reference_verdicts, &automated, None, None)?)
    } else {
        return fail("choose --result, --verdicts or --naive");
    };

    print!("{}", format_report_table(&[(label, &report)]));
    if let Some(out) = &args.out {
        save_json(out, &report)?;
    }
    Ok(Status::Done)
}

pub fn simulate(args: &SimulateArgs) -> CmdResult {
    let mu = match args.mu.as_str() {
        "ideal" => MU_SIM,
        "identity" => MixtureMatrix::identity(),
        path => {
            let mu: MixtureMatrix = load_json(path).map_err(|e| CliError(format!("{path}: {e}")))?;
            mu.validate()?;
            mu
        }
    };
    let mut spec = SyntheticCampaignSpec::ladder(args.systems, args.step, args.tie, args.samples, mu, args.seed)?;
    spec.metric_name = args.metric_name.clone();
    if let Some(n) = args.human_per_pair {
        spec = spec.with_human_pool(n);
    }
    let campaign = generate_campaign(&spec)?;

    fs::create_dir_all(&args.out_dir)?;
    save_preference_records(args.out_dir.join("human.jsonl"), &campaign.human)?;
    save_preference_records(args.out_dir.join("metric.jsonl"), &campaign.metric)?;
    let all: Vec<PreferenceRecord> = campaign.human.iter().chain(&campaign.metric).cloned().collect();
    save_json(args.out_dir.join("manifest.json"), &build_manifest(&all))?;
    save_json(args.out_dir.join("campaign.json"), &spec)?;

    let metric_by_id: BTreeMap<&str, PreferenceOutcome> =
        campaign.metric.iter().map(|r| (r.sample_id.as_str(), r.outcome)).collect();
    let paired: Vec<(PreferenceOutcome, PreferenceOutcome)> = campaign
        .human
        .iter()
        .filter_map(|h| metric_by_id.get(h.sample_id.as_str()).map(|m| (*m, h.outcome)))
        .collect();
    let conf = confusion_counts(&paired);
    println!(
        "{} systems, {} human and {} metric ratings written to {}",
        campaign.systems.len(),
        campaign.human.len(),
        campaign.metric.len(),
        args.out_dir.display()
    );
    println!("empirical confusion (columns: human >, =, <; rows: metric >, =, <)");
    let cols: Vec<[f64; 3]> = PreferenceOutcome::ALL
        .iter()
        .map(|o| conf.column(*o).frequencies().map_or([f64::NAN; 3], |f| f.as_array()))
        .collect();
    for row in 0..3 {
        let cells: Vec<String> = cols.iter().map(|c| format!("{:.3}", c[row])).collect();
        println!("  {}", cells.join("  "));
    }
    Ok(Status::Done)
}

fn parse_budget(s: &str, available: u64) -> Result<u64, CliError> {
    let s = s.trim();
    if let Some(pct) = s.strip_suffix('%') {
        let pct: f64 = pct
            .parse()
            .map_err(|_| CliError(format!("budget '{s}' is not a number or percentage")))?;
        if !(0.0..=100.0).contains(&pct) {
            return fail(format!("budget '{s}' is outside 0%..100%"));
        }
        Ok((available as f64 * pct / 100.0).round() as u64)
    } else {
        s.parse().map_err(|_| CliError(format!("budget '{s}' is not a number or percentage")))
    }
}

pub fn curve(args: &CurveArgs) -> CmdResult {
    let systems = system_ids(&args.systems);
    let metric = read_metric(args.metric_ratings.as_deref(), &args.input)?;
    let pool = load_pool(&args.annotation_pool, args.pool_limit, &args.input)?;
    let available = pool.records().count() as u64;
    let budgets: Vec<u64> = args
        .budgets
        .iter()
        .map(|b| parse_budget(b, available))
        .collect::<Result<_, _>>()?;
    let campaign = CurveCampaign {
        systems,
        metric,
        pool,
        config: ProtocolConfig {
            batch_size: args.batch,
            budget: 0,
            decision: args.decision.config(),
        },
    };
    let points = budget_curve(&campaign, &budgets)?;
    print!("{}", format_curve_table(&points));
    if let Some(out) = &args.out {
        save_json(out, &points)?;
    }
    Ok(Status::Done)
}
