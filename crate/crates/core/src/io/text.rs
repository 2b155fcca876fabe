//! Whitespace-separated text artifacts exchanged between subcommands.
//! Floats are written in shortest round-trip form; `-` marks absent values.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::adaptive::{CostModel, PlanStatus, Policy, QueryCandidate, QueryPlan};
use crate::dynamic::DynamicTag;
use crate::error::{Error, Result};
use crate::pipeline::SampleAnalysis;
use crate::record::Domain;
use crate::taxonomy::StaticTag;

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "-".to_string(), |x| x.to_string())
}

fn parse_field<T: FromStr>(s: &str, what: &str, line: usize) -> Result<T> {
    s.parse().map_err(|_| Error::Parse(format!("line {line}: bad {what} {s:?}")))
}

fn parse_opt<T: FromStr>(s: &str, what: &str, line: usize) -> Result<Option<T>> {
    if s == "-" {
        Ok(None)
    } else {
        parse_field(s, what, line).map(Some)
    }
}

/// Data lines with their 1-based line numbers, comments and blanks skipped.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.trim();
        (!l.is_empty() && !l.starts_with('#')).then(|| (i + 1, l.split_whitespace().collect()))
    })
}

fn check_index(found: &str, expected: usize, line: usize) -> Result<()> {
    let i: usize = parse_field(found, "index", line)?;
    if i != expected {
        return Err(Error::Parse(format!("line {line}: index {i}, expected {expected}")));
    }
    Ok(())
}

fn fields<'a>(f: &'a [&'a str], n: usize, line: usize) -> Result<&'a [&'a str]> {
    if f.len() != n {
        return Err(Error::Parse(format!("line {line}: expected {n} fields, found {}", f.len())));
    }
    Ok(f)
}

/// Ground truth: a class label and, for synthetic data, the planted tag.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub labels: Vec<usize>,
    pub planted: Vec<Option<DynamicTag>>,
}

pub fn format_truth(t: &Truth) -> String {
    let mut s = String::from("# index label planted_tag\n");
    for (i, (y, p)) in t.labels.iter().zip(&t.planted).enumerate() {
        let _ = writeln!(s, "{i} {y} {}", fmt_opt(*p));
    }
    s
}

pub fn parse_truth(text: &str) -> Result<Truth> {
    let mut t = Truth { labels: Vec::new(), planted: Vec::new() };
    for (line, f) in data_lines(text) {
        let f = fields(&f, 3, line)?;
        check_index(f[0], t.labels.len(), line)?;
        t.labels.push(parse_field(f[1], "label", line)?);
        t.planted.push(parse_opt(f[2], "tag", line)?);
    }
    Ok(t)
}

/// One line of a tags file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TagRow {
    pub tag: DynamicTag,
    pub static_li: StaticTag,
    pub eu: f64,
    pub entropy: f64,
    pub d_uar: Option<f64>,
    pub d_uai: Option<f64>,
    pub static_hi: Option<StaticTag>,
    pub oracle: Option<DynamicTag>,
}

impl TagRow {
    pub fn from_analysis(a: &SampleAnalysis) -> Self {
        Self {
            tag: a.surrogate.label.tag,
            static_li: a.static_li.tag,
            eu: a.static_li.eu_score,
            entropy: a.entropy,
            d_uar: a.surrogate.d_uar,
            d_uai: a.surrogate.d_uai,
            static_hi: a.static_hi.map(|h| h.tag),
            oracle: a.oracle,
        }
    }

    pub fn candidate(&self) -> QueryCandidate {
        QueryCandidate { tag: self.tag, static_li: self.static_li, ranking: self.d_uar, entropy: self.entropy }
    }
}

pub fn format_tags(rows: &[TagRow]) -> String {
    let mut s = String::from("# index tag static_li eu entropy d_uar d_uai static_hi oracle\n");
    for (i, r) in rows.iter().enumerate() {
        let _ = writeln!(
            s,
            "{i} {} {} {} {} {} {} {} {}",
            r.tag,
            r.static_li,
            r.eu,
            r.entropy,
            fmt_opt(r.d_uar),
            fmt_opt(r.d_uai),
            fmt_opt(r.static_hi),
            fmt_opt(r.oracle)
        );
    }
    s
}

pub fn parse_tags(text: &str) -> Result<Vec<TagRow>> {
    let mut rows = Vec::new();
    for (line, f) in data_lines(text) {
        let f = fields(&f, 9, line)?;
        check_index(f[0], rows.len(), line)?;
        rows.push(TagRow {
            tag: parse_field(f[1], "tag", line)?,
            static_li: parse_field(f[2], "static tag", line)?,
            eu: parse_field(f[3], "eu", line)?,
            entropy: parse_field(f[4], "entropy", line)?,
            d_uar: parse_opt(f[5], "d_uar", line)?,
            d_uai: parse_opt(f[6], "d_uai", line)?,
            static_hi: parse_opt(f[7], "static tag", line)?,
            oracle: parse_opt(f[8], "tag", line)?,
        });
    }
    Ok(rows)
}

/// A plan with the policy and costs that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanFile {
    pub policy: Policy,
    pub cost: CostModel,
    pub plan: QueryPlan,
}

pub fn format_plan(p: &PlanFile) -> String {
    let status = match p.plan.status {
        PlanStatus::Ok => "ok",
        PlanStatus::BudgetBelowLiCost => "budget-below-li-cost",
    };
    let mut s = String::new();
    let _ = writeln!(s, "# policy = {}", p.policy);
    let _ = writeln!(s, "# budget = {}", fmt_opt(p.plan.budget));
    let _ = writeln!(s, "# t_li = {}", p.cost.t_li());
    let _ = writeln!(s, "# t_hi = {}", p.cost.t_hi());
    let _ = writeln!(s, "# n_total = {}", p.plan.n_total);
    let _ = writeln!(s, "# realized_cost = {}", p.plan.realized_cost);
    let _ = writeln!(s, "# status = {status}");
    let _ = writeln!(s, "# index score");
    for (i, sc) in p.plan.selected.iter().zip(&p.plan.ranking_scores) {
        let _ = writeln!(s, "{i} {sc}");
    }
    s
}

pub fn parse_plan(text: &str) -> Result<PlanFile> {
    let mut meta = std::collections::BTreeMap::new();
    for l in text.lines() {
        if let Some((k, v)) = l.strip_prefix('#').and_then(|r| r.split_once('=')) {
            meta.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    let get = |k: &str| meta.get(k).map(String::as_str).ok_or_else(|| Error::Parse(format!("plan lacks {k}")));
    let policy: Policy = get("policy")?.parse()?;
    let budget = parse_opt(get("budget")?, "budget", 0)?;
    let cost = CostModel::new(parse_field(get("t_li")?, "t_li", 0)?, parse_field(get("t_hi")?, "t_hi", 0)?)?;
    let n_total: usize = parse_field(get("n_total")?, "n_total", 0)?;
    let status = match get("status")? {
        "ok" => PlanStatus::Ok,
        "budget-below-li-cost" => PlanStatus::BudgetBelowLiCost,
        other => return Err(Error::Parse(format!("unknown plan status {other:?}"))),
    };
    let mut selected = Vec::new();
    let mut ranking_scores = Vec::new();
    for (line, f) in data_lines(text) {
        let f = fields(&f, 2, line)?;
        let i: usize = parse_field(f[0], "index", line)?;
        if i >= n_total {
            return Err(Error::Parse(format!("line {line}: index {i} out of range")));
        }
        selected.push(i);
        ranking_scores.push(parse_field(f[1], "score", line)?);
    }
    let realized_cost = cost.realized(selected.len(), n_total);
    Ok(PlanFile {
        policy,
        cost,
        plan: QueryPlan { selected, ranking_scores, realized_cost, budget, n_total, status },
    })
}

/// Per-sample provenance written next to a fused dump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusedMeta {
    pub provenance: Domain,
    pub certain: Option<bool>,
    pub eu: Option<f64>,
}

pub fn format_fused_meta(rows: &[FusedMeta]) -> String {
    let mut s = String::from("# index provenance certain eu\n");
    for (i, r) in rows.iter().enumerate() {
        let _ = writeln!(s, "{i} {} {} {}", r.provenance, fmt_opt(r.certain.map(u8::from)), fmt_opt(r.eu));
    }
    s
}

pub fn parse_fused_meta(text: &str) -> Result<Vec<FusedMeta>> {
    let mut rows = Vec::new();
    for (line, f) in data_lines(text) {
        let f = fields(&f, 4, line)?;
        check_index(f[0], rows.len(), line)?;
        let certain = match f[2] {
            "-" => None,
            "0" => Some(false),
            "1" => Some(true),
            other => return Err(Error::Parse(format!("line {line}: bad certain flag {other:?}"))),
        };
        rows.push(FusedMeta {
            provenance: parse_field(f[1], "domain", line)?,
            certain,
            eu: parse_opt(f[3], "eu", line)?,
        });
    }
    Ok(rows)
}

pub fn read_text(path: impl AsRef<Path>) -> Result<String> {
    Ok(fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truth_round_trip() {
        let t = Truth { labels: vec![0, 5, 2], planted: vec![Some(DynamicTag::Uar), None, Some(DynamicTag::C)] };
        assert_eq!(parse_truth(&format_truth(&t)).unwrap(), t);
        assert!(parse_truth("1 0 C\n").is_err());
    }

    #[test]
    fn tags_round_trip() {
        let rows = vec![
            TagRow {
                tag: DynamicTag::Uar,
                static_li: StaticTag::Ua,
                eu: 1.25,
                entropy: 0.1 + 0.2,
                d_uar: Some(0.3),
                d_uai: Some(2.0),
                static_hi: Some(StaticTag::C),
                oracle: Some(DynamicTag::Uar),
            },
            TagRow {
                tag: DynamicTag::Ue,
                static_li: StaticTag::Ue,
                eu: 9.0,
                entropy: 1.0,
                d_uar: None,
                d_uai: None,
                static_hi: None,
                oracle: None,
            },
        ];
        assert_eq!(parse_tags(&format_tags(&rows)).unwrap(), rows);
    }

    #[test]
    fn plan_round_trip() {
        let p = PlanFile {
            policy: Policy::MaxAu,
            cost: CostModel::new(1.0, 250.0).unwrap(),
            plan: QueryPlan {
                selected: vec![4, 1],
                ranking_scores: vec![-1.5, -0.25],
                realized_cost: 101.0,
                budget: Some(120.0),
                n_total: 5,
                status: PlanStatus::Ok,
            },
        };
        assert_eq!(parse_plan(&format_plan(&p)).unwrap(), p);
    }

    #[test]
    fn fused_meta_round_trip() {
        let rows = vec![
            FusedMeta { provenance: Domain::Hi, certain: Some(true), eu: Some(3.5) },
            FusedMeta { provenance: Domain::Li, certain: None, eu: None },
        ];
        assert_eq!(parse_fused_meta(&format_fused_meta(&rows)).unwrap(), rows);
    }
}
