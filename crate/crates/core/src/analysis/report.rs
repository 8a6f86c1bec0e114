//! Tabular summaries of scored trials: per-trial CSV rows and a markdown
//! table with the paradox rates per domain.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{bootstrap_ci, mann_whitney_u, summarize, summarize_macro, AnalysisError, Interval, MannWhitney};
use crate::protocol::{ParadoxClass, TrialRecord};

pub const BOOTSTRAP_REPLICATES: usize = 10_000;
pub const BOOTSTRAP_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub domain: String,
    pub agent: String,
    pub n_iterations: usize,
    /// `None` for a trial with no iterations.
    pub rates: Option<(f64, f64, f64)>,
    pub counts: [usize; 4],
}

pub fn per_trial_rows(trials: &[TrialRecord]) -> Vec<TrialRow> {
    trials
        .iter()
        .map(|t| {
            let counts = t.class_counts();
            let rates = summarize(std::slice::from_ref(t)).ok().map(|s| (s.actsr, s.asr, s.gap_pp));
            TrialRow {
                domain: t.domain_id.clone(),
                agent: t.agent_id.clone(),
                n_iterations: t.iterations.len(),
                rates,
                counts: ParadoxClass::ALL.map(|c| counts.get(&c).copied().unwrap_or(0)),
            }
        })
        .collect()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn trial_rows_csv(rows: &[TrialRow]) -> String {
    let mut out = String::from(
        "domain,agent,n_iterations,actsr,asr,gap_pp,type_a,type_b,aligned_success,aligned_failure\n",
    );
    for r in rows {
        let rates = match r.rates {
            Some((a, b, g)) => format!("{a:.4},{b:.4},{g:.2}"),
            None => ",,".into(),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            csv_field(&r.domain),
            csv_field(&r.agent),
            r.n_iterations,
            rates,
            r.counts[0],
            r.counts[1],
            r.counts[2],
            r.counts[3]
        );
    }
    out
}

/// Two-domain comparison of per-trial gap samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainComparison {
    pub first: String,
    pub second: String,
    /// Pooled gap of `first` minus pooled gap of `second`, in pp.
    pub difference_pp: f64,
    pub mann_whitney: MannWhitney,
    pub ci: Interval,
}

fn per_trial_gaps(trials: &[&TrialRecord]) -> Vec<f64> {
    trials
        .iter()
        .filter_map(|t| summarize(std::slice::from_ref(*t)).ok().map(|s| s.gap_pp))
        .collect()
}

pub fn domain_comparison(
    first: &str,
    a: &[&TrialRecord],
    second: &str,
    b: &[&TrialRecord],
    seed: u64,
) -> Result<DomainComparison, AnalysisError> {
    let owned = |v: &[&TrialRecord]| v.iter().map(|t| (*t).clone()).collect::<Vec<_>>();
    let gap_a = summarize(&owned(a))?.gap_pp;
    let gap_b = summarize(&owned(b))?.gap_pp;
    let xs = per_trial_gaps(a);
    let ys = per_trial_gaps(b);
    Ok(DomainComparison {
        first: first.to_string(),
        second: second.to_string(),
        difference_pp: gap_a - gap_b,
        mann_whitney: mann_whitney_u(&xs, &ys)?,
        ci: bootstrap_ci(&xs, &ys, BOOTSTRAP_REPLICATES, BOOTSTRAP_LEVEL, seed)?,
    })
}

fn pct(v: f64) -> String {
    format!("{:.1}%", 100.0 * v)
}

fn signed_pp(v: f64) -> String {
    // avoid "-0.0"
    let v = if v.abs() < 5e-11 { 0.0 } else { v };
    format!("{v:+.1}pp")
}

/// Markdown summary: one column per domain with pooled rates and class
/// counts; with exactly two domains, the comparison statistics follow.
pub fn render_summary_markdown(trials: &[TrialRecord], seed: u64) -> Result<String, AnalysisError> {
    if trials.is_empty() {
        return Err(AnalysisError::EmptyInput("no trial records".into()));
    }
    let mut by_domain: BTreeMap<&str, Vec<&TrialRecord>> = BTreeMap::new();
    for t in trials {
        by_domain.entry(t.domain_id.as_str()).or_default().push(t);
    }

    let mut columns = Vec::new();
    for (domain, ts) in &by_domain {
        let owned: Vec<TrialRecord> = ts.iter().map(|t| (*t).clone()).collect();
        let pooled = summarize(&owned)?;
        let macro_rates = summarize_macro(&owned)?;
        columns.push((*domain, ts.len(), pooled, macro_rates));
    }

    let mut out = String::new();
    out.push_str("## Observed paradox\n\n");
    out.push('|');
    out.push_str(" |");
    for (d, ..) in &columns {
        let _ = write!(out, " {d} |");
    }
    out.push_str("\n|---|");
    for _ in &columns {
        out.push_str("---:|");
    }
    out.push('\n');
    let mut row = |label: &str, f: &dyn Fn(&(&str, usize, super::ScoreSummary, super::MacroRates)) -> String| {
        let _ = write!(out, "| {label} |");
        for c in &columns {
            let _ = write!(out, " {} |", f(c));
        }
        out.push('\n');
    };
    row("Trials", &|c| c.1.to_string());
    row("Iterations", &|c| c.2.n_iterations.to_string());
    row("ActSR", &|c| pct(c.2.actsr));
    row("ASR", &|c| pct(c.2.asr));
    row("Gap", &|c| format!("**{}**", signed_pp(c.2.gap_pp)));
    row("ActSR (mean of trials)", &|c| pct(c.3.actsr));
    row("ASR (mean of trials)", &|c| pct(c.3.asr));
    row("Gap (mean of trials)", &|c| signed_pp(c.3.gap_pp));
    for class in ParadoxClass::ALL {
        row(class.as_str(), &|c| c.2.count(class).to_string());
    }

    if columns.len() == 2 {
        let (first, second) = (columns[0].0, columns[1].0);
        let cmp = domain_comparison(first, &by_domain[first], second, &by_domain[second], seed)?;
        out.push_str(&format!("\n## {first} vs {second}\n\n"));
        let _ = writeln!(out, "- Observed difference: {:.1} pp", cmp.difference_pp);
        let _ = writeln!(
            out,
            "- Bootstrap {:.0}% CI: [{:.1}, {:.1}] pp (B={}, seed={})",
            BOOTSTRAP_LEVEL * 100.0,
            cmp.ci.lower,
            cmp.ci.upper,
            BOOTSTRAP_REPLICATES,
            seed
        );
        let _ = writeln!(
            out,
            "- Mann-Whitney U: {:.1}, p = {} ({})",
            cmp.mann_whitney.u,
            format_p(cmp.mann_whitney.p_two_sided),
            if cmp.mann_whitney.exact { "exact" } else { "normal approximation" }
        );
    }
    Ok(out)
}

/// Fixed notation down to 1e-4, scientific below.
fn format_p(p: f64) -> String {
    if p >= 1e-4 {
        format!("{p:.4}")
    } else {
        format!("{p:.3e}")
    }
}
