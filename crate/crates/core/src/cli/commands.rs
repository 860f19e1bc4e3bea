use std::fs::File;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::config::{check_shares, with_parameter, ConfigError, RunConfig};
use super::output::{file_label, fmt_num, fmt_opt, OutputDir};
use crate::centralized::{solve_centralized, CentralMarket, CentralWelfare, CentralizedContract};
use crate::distortion::{Distortion, DistortionSet};
use crate::error::Error;
use crate::ingest::{self, LossPanel, Month, ParseOptions};
use crate::posolver::{
    prelec_deductible, settle, solve_robust, welfare_report, AgentSpec, DeductibleSplit,
    LayerAllocation, MarketReport, WeightRule,
};
use crate::riskmeasure::{EmpiricalSpace, LossProfile};

pub const DEFAULT_OUTPUT_DIR: &str = "out";

/// Failure of a command, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error("input error: {0}")]
    Input(Error),
    #[error("solver error: {0}")]
    Solver(Error),
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Input(_) => 2,
            CommandError::Solver(_) => 3,
            CommandError::Config(_) => 4,
        }
    }
}

impl From<Error> for CommandError {
    fn from(e: Error) -> Self {
        match e {
            Error::Format(_) | Error::EmptyPanel | Error::LengthMismatch { .. } => CommandError::Input(e),
            Error::Unsupported(msg) | Error::InvalidWeights(msg) => CommandError::Config(ConfigError(msg)),
            other => CommandError::Solver(other),
        }
    }
}

pub type CommandResult<T> = std::result::Result<T, CommandError>;

/// Config plus command-line overrides.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub config: RunConfig,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub loss_column: Option<String>,
    pub alpha: Option<f64>,
    pub weights: Option<String>,
}

impl Inputs {
    pub fn new(config: RunConfig) -> Self {
        Inputs { config, data: None, out: None, loss_column: None, alpha: None, weights: None }
    }

    fn output(&self) -> OutputDir {
        let dir = self
            .out
            .clone()
            .or_else(|| self.config.output.dir.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
        OutputDir::new(dir)
    }

    fn weight_rule(&self) -> CommandResult<WeightRule> {
        let rule = match self.weights.as_deref() {
            None => self.config.welfare.weights.rule()?,
            Some("equal") => WeightRule::Equal,
            Some("last") => WeightRule::AllToLast,
            Some(file) => {
                let shares = read_numbers(Path::new(file))?;
                check_shares(&shares, self.config.agents.len())?;
                WeightRule::Shares(shares)
            }
        };
        Ok(rule)
    }

    fn panel(&self) -> CommandResult<LossPanel> {
        let path = self
            .data
            .clone()
            .or_else(|| self.config.data.path.clone())
            .ok_or_else(|| ConfigError("no data file in config or --data".into()))?;
        let loss_column = self
            .loss_column
            .clone()
            .or_else(|| self.config.data.loss_column.clone())
            .unwrap_or_else(|| ingest::DEFAULT_LOSS_COLUMN.to_string());
        let agents = self.config.agents.iter().map(|a| a.data_label().to_string()).collect();
        let options = ParseOptions::default().with_loss_column(loss_column).with_agents(agents);
        let file = File::open(&path)
            .map_err(|e| Error::Format(format!("cannot open {}: {e}", path.display())))?;
        let report = ingest::parse_losses(file, &options)?;
        if !report.rejected.is_empty() {
            log::warn!("{} rows rejected from {}", report.rejected.len(), path.display());
        }
        let mut panel = report.panel;
        panel.agents = self.config.agents.iter().map(|a| a.label.clone()).collect();
        if panel.month_count() == 0 {
            return Err(Error::EmptyPanel.into());
        }
        Ok(panel)
    }

    /// Market participants built from the panel.
    fn market(&self, panel: &LossPanel) -> CommandResult<Vec<AgentSpec>> {
        let (shared, profiles) = panel.to_space()?;
        let mut agents = Vec::with_capacity(profiles.len());
        for (i, (a, x)) in self.config.agents.iter().zip(profiles).enumerate() {
            let belief = match &a.weights_file {
                Some(path) => EmpiricalSpace::new(read_numbers(path)?).map_err(|e| {
                    Error::Format(format!("{}: {e}", path.display()))
                })?,
                None => shared.clone(),
            };
            agents.push(AgentSpec::new(a.label.clone(), belief, self.config.distortion_set(i)?, x)?);
        }
        Ok(agents)
    }
}

/// Numbers separated by commas or whitespace.
fn read_numbers(path: &Path) -> CommandResult<Vec<f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Format(format!("cannot read {}: {e}", path.display())))?;
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::Format(format!("{}: bad number {t:?}", path.display())).into())
        })
        .collect()
}

pub fn validate_config(inputs: &Inputs) -> CommandResult<String> {
    let c = &inputs.config;
    c.validate()?;
    let rule = inputs.weight_rule()?;
    if let Some(alpha) = inputs.alpha {
        c.insurer_alpha(Some(alpha))?;
    }
    let candidates: usize = c.agents.iter().map(|a| a.distortions.len()).product();
    Ok(format!(
        "config ok: {} agents, {} candidate combinations, weights {:?}",
        c.agents.len(),
        candidates,
        rule
    ))
}

pub fn summary(inputs: &Inputs) -> CommandResult<OutputDir> {
    let panel = inputs.panel()?;
    let stats = ingest::summary_stats(&panel)?;
    let corr = ingest::correlation(&panel)?;
    let mut out = inputs.output();
    let rows: Vec<Vec<String>> = stats
        .iter()
        .map(|s| {
            vec![
                s.agent.clone(),
                fmt_num(s.mean),
                fmt_num(s.median),
                fmt_num(s.var_5),
                fmt_num(s.max),
                fmt_num(s.std_dev),
            ]
        })
        .collect();
    out.csv("summary.csv", &["agent", "mean", "median", "var_5", "max", "std_dev"], &rows)?;
    let mut header = vec!["agent"];
    header.extend(panel.agents.iter().map(String::as_str));
    let rows: Vec<Vec<String>> = panel
        .agents
        .iter()
        .zip(&corr)
        .map(|(a, row)| std::iter::once(a.clone()).chain(row.iter().map(|r| fmt_opt(*r))).collect())
        .collect();
    out.csv("correlation.csv", &header, &rows)?;
    Ok(out)
}

/// States ordered by aggregate loss, ties by month.
fn sorted_states(s: &LossProfile) -> Vec<usize> {
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s.values()[a].total_cmp(&s.values()[b]));
    order
}

const RETENTION_HEADER: [&str; 6] =
    ["rank", "month", "aggregate_loss", "endowment", "retained", "retained_normalized"];

fn retention_rows(
    months: &[Month],
    s: &LossProfile,
    x: &LossProfile,
    normalized: impl Fn(usize) -> f64,
    offset: f64,
) -> Vec<Vec<String>> {
    sorted_states(s)
        .into_iter()
        .enumerate()
        .map(|(rank, w)| {
            let n = normalized(w);
            vec![
                rank.to_string(),
                months[w].to_string(),
                fmt_num(s.values()[w]),
                fmt_num(x.values()[w]),
                fmt_num(n + offset),
                fmt_num(n),
            ]
        })
        .collect()
}

/// Summary of a decentralized run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecentralizedReport {
    pub value: f64,
    /// Attaining candidate per agent, as `family(parameters)`.
    pub chosen_distortions: Vec<String>,
    pub exhaustive: bool,
    /// Two-agent deductible split when every agent is Prelec.
    pub deductible: Option<DeductibleSplit>,
    pub market: MarketReport,
}

/// Solved and settled decentralized market.
pub struct Decentralized {
    pub allocation: LayerAllocation,
    pub report: DecentralizedReport,
}

pub fn solve_decentralized(agents: &[AgentSpec], inputs: &Inputs) -> CommandResult<Decentralized> {
    let solution = solve_robust(agents, inputs.config.solver.options())?;
    let allocation = settle(agents, &solution.allocation, &inputs.weight_rule()?)?;
    let market = welfare_report(agents, &allocation)?;
    let common_belief = agents.iter().all(|a| a.belief == agents[0].belief);
    let deductible = if common_belief && agents.iter().all(|a| a.distortions.is_singleton()) {
        let ds: Vec<Distortion> = agents.iter().map(|a| a.distortions.get(0).clone()).collect();
        let s = LossProfile::sum(agents.iter().map(|a| &a.endowment))?;
        prelec_deductible(&s, &agents[0].belief, &ds).ok()
    } else {
        None
    };
    let chosen_distortions = agents
        .iter()
        .zip(&solution.chosen)
        .map(|(a, &c)| a.distortions.get(c).family().to_string())
        .collect();
    Ok(Decentralized {
        allocation,
        report: DecentralizedReport {
            value: solution.value,
            chosen_distortions,
            exhaustive: solution.exhaustive,
            deductible,
            market,
        },
    })
}

pub fn po_decentralized(inputs: &Inputs) -> CommandResult<OutputDir> {
    let panel = inputs.panel()?;
    let agents = inputs.market(&panel)?;
    let solved = solve_decentralized(&agents, inputs)?;
    let s = LossProfile::sum(agents.iter().map(|a| &a.endowment))?;
    let mut out = inputs.output();
    out.json("allocation.json", &solved.allocation)?;
    out.json("market_report.json", &solved.report)?;
    for (i, a) in agents.iter().enumerate() {
        let alloc = &solved.allocation;
        let rows = retention_rows(
            &panel.months,
            &s,
            &a.endowment,
            |w| alloc.retained(i, s.values()[w]),
            alloc.side_payments[i],
        );
        out.csv(&format!("retention_decentralized_{}.csv", file_label(&a.label)), &RETENTION_HEADER, &rows)?;
    }
    Ok(out)
}

fn central(inputs: &Inputs) -> CommandResult<(LossPanel, CentralMarket, CentralizedContract, CentralWelfare)> {
    let panel = inputs.panel()?;
    let agents = inputs.market(&panel)?;
    let market = CentralMarket::from_agents(&agents, inputs.config.insurer_alpha(inputs.alpha)?)?;
    let (contract, welfare) = solve_centralized(&market)?;
    Ok((panel, market, contract, welfare))
}

pub fn po_centralized(inputs: &Inputs) -> CommandResult<OutputDir> {
    let (panel, market, contract, welfare) = central(inputs)?;
    let s = LossProfile::sum(market.policyholders.iter().map(|p| &p.endowment))?;
    let mut out = inputs.output();
    out.json("contract.json", &contract)?;
    out.json("welfare.json", &welfare)?;
    let mut deductibles = Vec::new();
    for (i, p) in market.policyholders.iter().enumerate() {
        let ind = &contract.indemnities[i];
        let x = &p.endowment;
        let rows =
            retention_rows(&panel.months, &s, x, |w| ind.retention(x.values()[w]), contract.premiums[i]);
        out.csv(&format!("retention_centralized_{}.csv", file_label(&p.label)), &RETENTION_HEADER, &rows)?;
        let kind = if ind.cedes_nothing() {
            "no-cession"
        } else if ind.deductible().is_some() {
            "deductible"
        } else {
            "non-deductible"
        };
        deductibles.push(vec![p.label.clone(), fmt_opt(ind.deductible()), kind.to_string()]);
    }
    out.csv("deductibles.csv", &["agent", "deductible", "contract"], &deductibles)?;
    Ok(out)
}

pub fn stackelberg(inputs: &Inputs) -> CommandResult<OutputDir> {
    let (_, _, _, welfare) = central(inputs)?;
    let rows: Vec<Vec<String>> = welfare
        .policyholders
        .iter()
        .map(|p| {
            vec![
                p.label.clone(),
                fmt_num(p.premium),
                fmt_num(p.initial_risk),
                fmt_num(p.retained_risk),
                fmt_num(p.gain),
            ]
        })
        .collect();
    let mut out = inputs.output();
    out.csv(
        "stackelberg_premiums.csv",
        &["agent", "premium", "initial_risk", "retained_risk", "policyholder_gain"],
        &rows,
    )?;
    out.json("stackelberg_welfare.json", &welfare)?;
    Ok(out)
}

/// One row of the sweep table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    /// Relative probabilistic risk aversion of the swept distortion at 1/2;
    /// constant in `t` for the power family.
    pub rpra: Option<f64>,
    pub centralized_average_gain: f64,
    pub decentralized_average_gain: f64,
    /// `100 (centralized - decentralized) / centralized`.
    pub percent_decrease: Option<f64>,
}

pub fn sweep_rows(agents: &[AgentSpec], inputs: &Inputs) -> CommandResult<Vec<SweepRow>> {
    let sweep = inputs
        .config
        .sweep
        .as_ref()
        .ok_or_else(|| ConfigError("config has no [sweep] section".into()))?;
    let idx = inputs
        .config
        .agent_index(&sweep.agent)
        .ok_or_else(|| ConfigError(format!("unknown sweep agent {:?}", sweep.agent)))?;
    let base = inputs.config.agents[idx].distortions[0].clone();
    let alpha = inputs.config.insurer_alpha(inputs.alpha)?;
    sweep
        .values
        .par_iter()
        .map(|&value| -> CommandResult<SweepRow> {
            let d = Distortion::new(with_parameter(&base, &sweep.parameter, value)?)?;
            let mut market = agents.to_vec();
            market[idx].distortions = DistortionSet::singleton(d.clone());
            let decentralized = solve_decentralized(&market, inputs)?;
            let (_, welfare) = solve_centralized(&CentralMarket::from_agents(&market, alpha)?)?;
            let c = welfare.average_gain;
            let dec = decentralized.report.market.average_gain;
            Ok(SweepRow {
                value,
                rpra: d.rpra(0.5).ok(),
                centralized_average_gain: c,
                decentralized_average_gain: dec,
                percent_decrease: (c != 0.0).then(|| 100.0 * (c - dec) / c),
            })
        })
        .collect()
}

pub fn sweep(inputs: &Inputs) -> CommandResult<OutputDir> {
    let panel = inputs.panel()?;
    let agents = inputs.market(&panel)?;
    let rows = sweep_rows(&agents, inputs)?;
    let parameter = inputs.config.sweep.as_ref().map_or("value", |s| s.parameter.as_str());
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                fmt_num(r.value),
                fmt_opt(r.rpra),
                fmt_num(r.centralized_average_gain),
                fmt_num(r.decentralized_average_gain),
                fmt_opt(r.percent_decrease),
            ]
        })
        .collect();
    let mut out = inputs.output();
    out.csv(
        "sweep.csv",
        &[parameter, "rpra", "centralized_average_gain", "decentralized_average_gain", "percent_decrease"],
        &table,
    )?;
    Ok(out)
}
