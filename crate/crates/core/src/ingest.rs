//! Monthly loss panels built from claim-level CSV exports.
//!
//! Input rows carry a loss date, an agent label (for flood claims the US
//! state) and a loss amount. Rows are summed per `(month, agent)`; every month
//! between the first and last observed month becomes one equally likely
//! state, with zero loss wherever an agent had no claims.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::riskmeasure::{self, EmpiricalSpace, LossProfile};

pub const DATE_COLUMN: &str = "dateOfLoss";
pub const AGENT_COLUMN: &str = "state";
pub const DEFAULT_LOSS_COLUMN: &str = "amountPaid";

/// Calendar month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Month {
    pub year: i32,
    pub month: u32,
}

impl Month {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::Format(format!("month {month} outside 1..=12")));
        }
        Ok(Month { year, month })
    }

    pub fn next(self) -> Month {
        if self.month == 12 {
            Month { year: self.year + 1, month: 1 }
        } else {
            Month { year: self.year, month: self.month + 1 }
        }
    }

    /// Parses the `YYYY-MM` prefix of an ISO 8601 date or timestamp.
    pub fn parse(s: &str) -> Result<Month> {
        let s = s.trim();
        let bad = || Error::Format(format!("unparseable date {s:?}"));
        let mut parts = s.splitn(3, '-');
        let year: i32 = parts.next().filter(|y| y.len() == 4).ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let month_part = parts.next().ok_or_else(bad)?;
        let month: u32 = month_part.get(..2).ok_or_else(bad)?.parse().map_err(|_| bad())?;
        Month::new(year, month).map_err(|_| bad())
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

/// Losses per month and agent.
#[derive(Debug, Clone, PartialEq)]
pub struct LossPanel {
    pub months: Vec<Month>,
    pub agents: Vec<String>,
    /// `losses[t][i]`: loss of agent `i` in month `t`.
    pub losses: Vec<Vec<f64>>,
}

/// A row that did not make it into the panel.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectedRow {
    /// 1-based line number in the input, header included.
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParseReport {
    pub panel: LossPanel,
    pub accepted: usize,
    pub rejected: Vec<RejectedRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParseOptions {
    pub date_column: String,
    pub agent_column: String,
    pub loss_column: String,
    /// Keep only these agents, in this order. `None` keeps every agent found,
    /// sorted by label.
    pub agents: Option<Vec<String>>,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            date_column: DATE_COLUMN.into(),
            agent_column: AGENT_COLUMN.into(),
            loss_column: DEFAULT_LOSS_COLUMN.into(),
            agents: None,
        }
    }
}

impl ParseOptions {
    pub fn with_loss_column(mut self, column: impl Into<String>) -> Self {
        self.loss_column = column.into();
        self
    }

    pub fn with_agents(mut self, agents: Vec<String>) -> Self {
        self.agents = Some(agents);
        self
    }
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Format(format!("missing required column {name:?}")))
}

/// Reads claim rows and aggregates them into a monthly panel.
pub fn parse_losses(input: impl Read, options: &ParseOptions) -> Result<ParseReport> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(input);
    let headers = reader.headers().map_err(|e| Error::Format(e.to_string()))?.clone();
    let date_idx = column(&headers, &options.date_column)?;
    let agent_idx = column(&headers, &options.agent_column)?;
    let loss_idx = column(&headers, &options.loss_column)?;
    let wanted: Option<BTreeSet<&str>> =
        options.agents.as_ref().map(|a| a.iter().map(String::as_str).collect());

    let mut cells: BTreeMap<(Month, String), Vec<f64>> = BTreeMap::new();
    let mut seen_agents = BTreeSet::new();
    let mut seen_months = BTreeSet::new();
    let mut rejected = Vec::new();
    let mut accepted = 0;
    for record in reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                rejected.push(RejectedRow { line, reason: e.to_string() });
                continue;
            }
        };
        let line = record.position().map_or(0, |p| p.line());
        let row = (|| -> std::result::Result<(Month, String, f64), String> {
            let field = |i: usize| record.get(i).ok_or_else(|| format!("missing field {i}"));
            let month = Month::parse(field(date_idx)?).map_err(|e| e.to_string())?;
            let agent = field(agent_idx)?.trim().to_string();
            if agent.is_empty() {
                return Err("empty agent label".into());
            }
            let raw = field(loss_idx)?.trim();
            let loss = if raw.is_empty() {
                0.0
            } else {
                raw.parse::<f64>().map_err(|_| format!("unparseable loss {raw:?}"))?
            };
            if !loss.is_finite() {
                return Err(format!("non-finite loss {raw:?}"));
            }
            if loss < 0.0 {
                return Err(format!("negative loss {loss}"));
            }
            Ok((month, agent, loss))
        })();
        match row {
            Ok((month, agent, loss)) => {
                // months of filtered-out agents still belong to the observed range
                seen_months.insert(month);
                if wanted.as_ref().is_some_and(|w| !w.contains(agent.as_str())) {
                    continue;
                }
                accepted += 1;
                seen_agents.insert(agent.clone());
                cells.entry((month, agent)).or_default().push(loss);
            }
            Err(reason) => rejected.push(RejectedRow { line, reason }),
        }
    }
    for r in &rejected {
        log::warn!("line {}: {}", r.line, r.reason);
    }

    let agents: Vec<String> = match &options.agents {
        Some(list) => list.clone(),
        None => seen_agents.into_iter().collect(),
    };
    let months = match (seen_months.first(), seen_months.last()) {
        (Some(first), Some(last)) => {
            let mut out = vec![*first];
            while out[out.len() - 1] < *last {
                let next = out[out.len() - 1].next();
                out.push(next);
            }
            out
        }
        _ => Vec::new(),
    };
    // summing in sorted order makes the cell independent of row order
    let totals: BTreeMap<(Month, String), f64> = cells
        .into_iter()
        .map(|(key, mut amounts)| {
            amounts.sort_by(f64::total_cmp);
            (key, amounts.iter().sum())
        })
        .collect();
    let losses = months
        .iter()
        .map(|m| {
            agents
                .iter()
                .map(|a| totals.get(&(*m, a.clone())).copied().unwrap_or(0.0))
                .collect()
        })
        .collect();
    Ok(ParseReport { panel: LossPanel { months, agents, losses }, accepted, rejected })
}

/// Column names of the canonical panel CSV.
pub const CANONICAL_HEADER: [&str; 3] = ["month", "agent", "loss"];

impl LossPanel {
    pub fn month_count(&self) -> usize {
        self.months.len()
    }

    pub fn agent_index(&self, label: &str) -> Option<usize> {
        self.agents.iter().position(|a| a == label)
    }

    pub fn series(&self, agent: usize) -> Vec<f64> {
        self.losses.iter().map(|row| row[agent]).collect()
    }

    /// Uniform space over the months and one loss profile per agent.
    pub fn to_space(&self) -> Result<(EmpiricalSpace, Vec<LossProfile>)> {
        if self.months.is_empty() {
            return Err(Error::EmptyPanel);
        }
        let space = EmpiricalSpace::uniform(self.months.len())?;
        let profiles = (0..self.agents.len())
            .map(|i| LossProfile::endowment(self.series(i)))
            .collect::<Result<_>>()?;
        Ok((space, profiles))
    }

    /// Writes `month,agent,loss` rows, months ascending, agents in panel order.
    pub fn write_canonical(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Format(e.to_string());
        w.write_record(CANONICAL_HEADER).map_err(io)?;
        for (m, row) in self.months.iter().zip(&self.losses) {
            for (a, loss) in self.agents.iter().zip(row) {
                w.write_record([m.to_string(), a.clone(), format!("{loss:?}")]).map_err(io)?;
            }
        }
        w.flush().map_err(|e| Error::Format(e.to_string()))
    }

    /// Reads a panel written by [`LossPanel::write_canonical`].
    pub fn read_canonical(mut input: impl Read) -> Result<LossPanel> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes).map_err(|e| Error::Format(e.to_string()))?;
        // agent order is the order of first appearance, not alphabetical
        let mut order: Vec<String> = Vec::new();
        let mut reader = csv::Reader::from_reader(bytes.as_slice());
        for record in reader.records() {
            let record = record.map_err(|e| Error::Format(e.to_string()))?;
            let agent = record.get(1).unwrap_or("").trim();
            if !order.iter().any(|a| a == agent) {
                order.push(agent.to_string());
            }
        }
        let options = ParseOptions {
            date_column: CANONICAL_HEADER[0].into(),
            agent_column: CANONICAL_HEADER[1].into(),
            loss_column: CANONICAL_HEADER[2].into(),
            agents: Some(order),
        };
        let report = parse_losses(bytes.as_slice(), &options)?;
        if let Some(bad) = report.rejected.first() {
            return Err(Error::Format(format!("line {}: {}", bad.line, bad.reason)));
        }
        Ok(report.panel)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub agent: String,
    pub mean: f64,
    pub median: f64,
    /// `VaR_{5%}` on the uniform space over months.
    pub var_5: f64,
    pub max: f64,
    /// Sample standard deviation (divisor `m - 1`).
    pub std_dev: f64,
}

/// Level of the VaR column of [`summary_stats`].
pub const SUMMARY_VAR_LEVEL: f64 = 0.05;

pub fn summary_stats(panel: &LossPanel) -> Result<Vec<SummaryStats>> {
    let m = panel.month_count();
    if m == 0 {
        return Err(Error::EmptyPanel);
    }
    if m < 2 {
        return Err(Error::Undefined("standard deviation needs at least two months".into()));
    }
    let (space, profiles) = panel.to_space()?;
    panel
        .agents
        .iter()
        .zip(&profiles)
        .map(|(agent, profile)| {
            let xs = profile.values();
            let mean = xs.iter().sum::<f64>() / m as f64;
            let mut sorted = xs.to_vec();
            sorted.sort_by(f64::total_cmp);
            let median = if m % 2 == 1 {
                sorted[m / 2]
            } else {
                0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
            };
            let var_ss = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
            Ok(SummaryStats {
                agent: agent.clone(),
                mean,
                median,
                var_5: riskmeasure::var(&space, profile, SUMMARY_VAR_LEVEL)?,
                max: sorted[m - 1],
                std_dev: (var_ss / (m - 1) as f64).sqrt(),
            })
        })
        .collect()
}

/// Pearson correlation matrix; `None` where an agent has zero variance.
/// The diagonal is exactly one.
pub fn correlation(panel: &LossPanel) -> Result<Vec<Vec<Option<f64>>>> {
    let m = panel.month_count();
    if m < 2 {
        return Err(Error::Undefined("correlation needs at least two months".into()));
    }
    let n = panel.agents.len();
    let centered: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let s = panel.series(i);
            let mean = s.iter().sum::<f64>() / m as f64;
            s.iter().map(|x| x - mean).collect()
        })
        .collect();
    let norms: Vec<f64> =
        centered.iter().map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    let mut out = vec![vec![None; n]; n];
    for i in 0..n {
        out[i][i] = Some(1.0);
        for j in (i + 1)..n {
            if norms[i] == 0.0 || norms[j] == 0.0 {
                continue;
            }
            let dot: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
            let r = (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0);
            out[i][j] = Some(r);
            out[j][i] = Some(r);
        }
    }
    Ok(out)
}
