//! Trial and score files, the cosine baseline classifier, and equal error
//! rate evaluation.

use std::collections::HashMap;
use std::fmt;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::{fmt_sig9, parse_f64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrialLabel {
    Target,
    Nontarget,
}

impl TrialLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            TrialLabel::Target => "target",
            TrialLabel::Nontarget => "nontarget",
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            TrialLabel::Target => TrialLabel::Nontarget,
            TrialLabel::Nontarget => TrialLabel::Target,
        }
    }
}

impl fmt::Display for TrialLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trial {
    pub enroll: String,
    pub test: String,
    pub label: TrialLabel,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrialList {
    pub trials: Vec<Trial>,
}

impl TrialList {
    pub fn new(trials: Vec<Trial>) -> Self {
        Self { trials }
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut trials = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            let [enroll, test, label] = toks[..] else {
                return Err(Error::parse(i + 1, "expected \"<enroll> <test> <label>\""));
            };
            let label = match label {
                "target" => TrialLabel::Target,
                "nontarget" => TrialLabel::Nontarget,
                other => return Err(Error::parse(i + 1, format!("unknown label {other:?}"))),
            };
            trials.push(Trial {
                enroll: enroll.to_string(),
                test: test.to_string(),
                label,
            });
        }
        Ok(Self { trials })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.trials {
            let _ = writeln!(s, "{} {} {}", t.enroll, t.test, t.label);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredTrial {
    pub enroll: String,
    pub test: String,
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreSet {
    pub scores: Vec<ScoredTrial>,
}

impl ScoreSet {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.scores.iter().map(|s| s.score)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut scores = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            let [enroll, test, score] = toks[..] else {
                return Err(Error::parse(i + 1, "expected \"<enroll> <test> <score>\""));
            };
            scores.push(ScoredTrial {
                enroll: enroll.to_string(),
                test: test.to_string(),
                score: parse_f64(score, i + 1)?,
            });
        }
        Ok(Self { scores })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.scores {
            let _ = writeln!(s, "{} {} {}", t.enroll, t.test, fmt_sig9(t.score));
        }
        s
    }

    /// Splits scores into (target, nontarget) using the aligned trial list.
    pub fn split_by_label(&self, trials: &TrialList) -> Result<(Vec<f64>, Vec<f64>)> {
        if self.len() != trials.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} scores", trials.len()),
                found: format!("{}", self.len()),
            });
        }
        let mut tar = Vec::new();
        let mut non = Vec::new();
        for (i, (s, t)) in self.scores.iter().zip(&trials.trials).enumerate() {
            if s.enroll != t.enroll || s.test != t.test {
                return Err(Error::parse(
                    i + 1,
                    format!(
                        "score ({}, {}) does not match trial ({}, {})",
                        s.enroll, s.test, t.enroll, t.test
                    ),
                ));
            }
            if !s.score.is_finite() {
                return Err(Error::NonFinite(format!("score on line {}", i + 1)));
            }
            match t.label {
                TrialLabel::Target => tar.push(s.score),
                TrialLabel::Nontarget => non.push(s.score),
            }
        }
        Ok((tar, non))
    }
}

/// Cosine similarity of two non-zero vectors.
pub fn cosine_score(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("dimension {}", a.len()),
            found: format!("{}", b.len()),
        });
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Eer {
    pub eer: f64,
    pub threshold: f64,
}

/// Finds the FAR = FRR crossing along a sequence of operating points
/// `(threshold, far, frr)` ordered by increasing threshold, interpolating
/// linearly between the two points that bracket it.
pub(crate) fn crossing(points: &[(f64, f64, f64)]) -> Eer {
    let k = points
        .iter()
        .position(|&(_, far, frr)| far - frr <= 0.0)
        .expect("the +inf operating point has FAR 0 and FRR 1");
    let (t_k, far_k, frr_k) = points[k];
    if far_k == frr_k || k == 0 {
        return Eer {
            eer: far_k,
            threshold: t_k,
        };
    }
    let (t_p, far_p, frr_p) = points[k - 1];
    let (d_p, d_k) = (far_p - frr_p, far_k - frr_k);
    let alpha = d_p / (d_p - d_k);
    let threshold = if t_p.is_infinite() {
        t_k
    } else if t_k.is_infinite() {
        t_p
    } else {
        t_p + alpha * (t_k - t_p)
    };
    Eer {
        eer: far_p + alpha * (far_k - far_p),
        threshold,
    }
}

/// EER from raw target and nontarget scores. A nontarget scoring exactly at
/// the threshold counts as a false accept.
pub fn eer_from_scores(targets: &[f64], nontargets: &[f64]) -> Result<Eer> {
    if targets.is_empty() || nontargets.is_empty() {
        return Err(Error::Precondition(
            "EER needs at least one target and one nontarget trial".into(),
        ));
    }
    let mut tar = targets.to_vec();
    let mut non = nontargets.to_vec();
    tar.sort_by(f64::total_cmp);
    non.sort_by(f64::total_cmp);
    let mut all: Vec<f64> = tar.iter().chain(&non).copied().collect();
    all.sort_by(f64::total_cmp);
    all.dedup();

    let (nt, nn) = (tar.len() as f64, non.len() as f64);
    let mut points = Vec::with_capacity(all.len() + 2);
    points.push((f64::NEG_INFINITY, 1.0, 0.0));
    for &theta in &all {
        let rejected_tar = tar.partition_point(|&s| s < theta) as f64;
        let accepted_non = nn - non.partition_point(|&s| s < theta) as f64;
        points.push((theta, accepted_non / nn, rejected_tar / nt));
    }
    points.push((f64::INFINITY, 0.0, 1.0));
    Ok(crossing(&points))
}

pub fn compute_eer(scores: &ScoreSet, trials: &TrialList) -> Result<Eer> {
    let (tar, non) = scores.split_by_label(trials)?;
    eer_from_scores(&tar, &non)
}

// ---------------------------------------------------------------------------
// Grouped report

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GroupKey {
    pub subset: String,
    pub sex: String,
}

impl GroupKey {
    pub fn new(subset: impl Into<String>, sex: impl Into<String>) -> Self {
        Self {
            subset: subset.into(),
            sex: sex.into(),
        }
    }

    /// Reads one "<subset> <sex>" line per trial.
    pub fn parse_list(text: &str) -> Result<Vec<GroupKey>> {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                let toks: Vec<&str> = l.split_whitespace().collect();
                match toks[..] {
                    [subset, sex] => Ok(GroupKey::new(subset, sex)),
                    _ => Err(Error::parse(i + 1, "expected \"<subset> <sex>\"")),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellEer {
    pub subset: String,
    pub sex: String,
    pub eer: f64,
    pub threshold: f64,
    pub n_target: usize,
    pub n_nontarget: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsetAverage {
    pub subset: String,
    pub eer: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub cells: Vec<CellEer>,
    pub subset_averages: Vec<SubsetAverage>,
    /// Mean of the per-subset averages.
    pub total_average_of_subsets: f64,
    /// Mean over every subset × sex cell.
    pub total_average_of_cells: f64,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Per-group EERs with subset averages and both total-average conventions.
/// `groups[i]` is the group of trial `i`; groups appear in first-seen order.
pub fn eval_report(scores: &ScoreSet, trials: &TrialList, groups: &[GroupKey]) -> Result<Report> {
    if groups.len() != trials.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} group labels", trials.len()),
            found: format!("{}", groups.len()),
        });
    }
    let (_, _) = scores.split_by_label(trials)?;

    let mut order: Vec<&GroupKey> = Vec::new();
    let mut members: HashMap<&GroupKey, (Vec<f64>, Vec<f64>)> = HashMap::new();
    for ((s, t), g) in scores.scores.iter().zip(&trials.trials).zip(groups) {
        let entry = members.entry(g).or_insert_with(|| {
            order.push(g);
            (Vec::new(), Vec::new())
        });
        match t.label {
            TrialLabel::Target => entry.0.push(s.score),
            TrialLabel::Nontarget => entry.1.push(s.score),
        }
    }
    if order.is_empty() {
        return Err(Error::Precondition("no trials to evaluate".into()));
    }

    let mut cells = Vec::with_capacity(order.len());
    for g in &order {
        let (tar, non) = &members[g];
        let e = eer_from_scores(tar, non).map_err(|_| {
            Error::Precondition(format!("group {}/{} lacks target or nontarget trials", g.subset, g.sex))
        })?;
        cells.push(CellEer {
            subset: g.subset.clone(),
            sex: g.sex.clone(),
            eer: e.eer,
            threshold: e.threshold,
            n_target: tar.len(),
            n_nontarget: non.len(),
        });
    }

    let mut subsets: Vec<&str> = Vec::new();
    for c in &cells {
        if !subsets.contains(&c.subset.as_str()) {
            subsets.push(&c.subset);
        }
    }
    let subset_averages: Vec<SubsetAverage> = subsets
        .iter()
        .map(|&s| SubsetAverage {
            subset: s.to_string(),
            eer: mean(cells.iter().filter(|c| c.subset == s).map(|c| c.eer)),
        })
        .collect();

    Ok(Report {
        total_average_of_subsets: mean(subset_averages.iter().map(|a| a.eer)),
        total_average_of_cells: mean(cells.iter().map(|c| c.eer)),
        cells,
        subset_averages,
    })
}

impl Report {
    /// Aligned text table, EERs as percentages with two decimals.
    pub fn to_table(&self, ansi: bool) -> String {
        let (bold, reset) = if ansi { ("\x1b[1m", "\x1b[0m") } else { ("", "") };
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{bold}{:<12} {:<10} {:>8} {:>9} {:>11}{reset}",
            "subset", "sex", "EER(%)", "targets", "nontargets"
        );
        for avg in &self.subset_averages {
            for c in self.cells.iter().filter(|c| c.subset == avg.subset) {
                let _ = writeln!(
                    s,
                    "{:<12} {:<10} {:>8.2} {:>9} {:>11}",
                    c.subset,
                    c.sex,
                    100.0 * c.eer,
                    c.n_target,
                    c.n_nontarget
                );
            }
            let _ = writeln!(s, "{:<12} {:<10} {:>8.2}", avg.subset, "average", 100.0 * avg.eer);
        }
        let _ = writeln!(
            s,
            "total average (mean of subset averages): {:.2}",
            100.0 * self.total_average_of_subsets
        );
        let _ = writeln!(
            s,
            "total average (mean of all cells):       {:.2}",
            100.0 * self.total_average_of_cells
        );
        s
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
