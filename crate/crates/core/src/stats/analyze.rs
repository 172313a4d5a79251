use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::friedman::{friedman, SubjectMeans};
use super::pearson::{pearson_test, Correlation};
use super::posthoc::{bonferroni_posthoc, PairwiseResult, SIGNIFICANCE};
use super::{Method, StatsError, TestResult};
use crate::dataset::{Demographics, TlxRow, TLX_SCALES};
use crate::record::TrialRecord;
use crate::widget::Condition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    PM,
    PX,
    PY,
    PZ,
    RM,
    RX,
    RZ,
    TT,
}

impl Metric {
    pub const ALL: [Metric; 8] =
        [Metric::PM, Metric::PX, Metric::PY, Metric::PZ, Metric::RM, Metric::RX, Metric::RZ, Metric::TT];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::PM => "PM",
            Metric::PX => "PX",
            Metric::PY => "PY",
            Metric::PZ => "PZ",
            Metric::RM => "RM",
            Metric::RX => "RX",
            Metric::RZ => "RZ",
            Metric::TT => "TT",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Metric::PM | Metric::PX | Metric::PY | Metric::PZ => "mm",
            Metric::RM | Metric::RX | Metric::RZ => "deg",
            Metric::TT => "s",
        }
    }

    /// Per-trial value. Component metrics are absolute deviations.
    pub fn value(self, r: &TrialRecord) -> f64 {
        let e = &r.error;
        match self {
            Metric::PM => e.pm,
            Metric::PX => e.pe_vec.x.abs(),
            Metric::PY => e.pe_vec.y.abs(),
            Metric::PZ => e.pe_vec.z.abs(),
            Metric::RM => e.rm,
            Metric::RX => e.re_x.abs(),
            Metric::RZ => e.re_z.abs(),
            Metric::TT => r.task_time,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Descriptive {
    pub condition: String,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
}

/// Five-number summary plus mean, over subject means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSummary {
    pub condition: String,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Metric name (`PM`, ..., `TT`) or NASA-TLX scale name.
    pub metric: String,
    pub unit: String,
    pub descriptives: Vec<Descriptive>,
    pub boxes: Vec<BoxSummary>,
    pub friedman: Option<TestResult>,
    /// Why no omnibus test was run, if it wasn't.
    pub friedman_note: Option<String>,
    pub posthoc: Vec<PairwiseResult>,
}

impl MetricReport {
    /// Omnibus significant, or no omnibus test possible (two conditions).
    pub fn omnibus_significant(&self) -> bool {
        match &self.friedman {
            Some(t) => t.p_value <= SIGNIFICANCE,
            None => self.descriptives.len() == 2,
        }
    }

    /// Significant post hoc pairs in which `condition` has the lower values.
    pub fn wins(&self, condition: &str) -> u32 {
        if !self.omnibus_significant() {
            return 0;
        }
        self.posthoc.iter().filter(|p| p.significant && p.lower.as_deref() == Some(condition)).count() as u32
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub condition: String,
    pub x: String,
    pub y: String,
    pub result: Option<Correlation>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarRow {
    pub condition: String,
    /// One score per entry of [`StatsReport::radar_axes`].
    pub scores: Vec<u32>,
    pub total: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub n_subjects: usize,
    pub n_trials: usize,
    pub conditions: Vec<String>,
    pub metrics: Vec<MetricReport>,
    pub correlations: Vec<CorrelationEntry>,
    pub demographics: Vec<CorrelationEntry>,
    pub tlx: Vec<MetricReport>,
    pub tlx_correlations: Vec<CorrelationEntry>,
    pub radar_axes: Vec<String>,
    pub radar: Vec<RadarRow>,
}

/// Subject ids and the subject × condition mean matrix of one per-trial
/// quantity.
fn cell_means(
    conditions: &[Condition],
    items: impl Iterator<Item = (u32, Condition, f64)>,
) -> Result<(Vec<u32>, SubjectMeans), StatsError> {
    let mut acc: BTreeMap<u32, Vec<(f64, usize)>> = BTreeMap::new();
    for (subject, cond, v) in items {
        let Some(j) = conditions.iter().position(|c| *c == cond) else { continue };
        let row = acc.entry(subject).or_insert_with(|| vec![(0.0, 0); conditions.len()]);
        row[j].0 += v;
        row[j].1 += 1;
    }
    let mut subjects = Vec::with_capacity(acc.len());
    let mut rows = Vec::with_capacity(acc.len());
    for (subject, cells) in acc {
        if let Some(j) = cells.iter().position(|c| c.1 == 0) {
            return Err(StatsError::MissingCell { subject: subject.to_string(), condition: conditions[j].to_string() });
        }
        subjects.push(subject);
        rows.push(cells.iter().map(|(s, n)| s / *n as f64).collect());
    }
    let labels = conditions.iter().map(|c| c.to_string()).collect();
    Ok((subjects, SubjectMeans::new(labels, rows)?))
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn describe(label: &str, col: &[f64]) -> (Descriptive, BoxSummary) {
    let n = col.len();
    let mean = col.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 { (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() } else { 0.0 };
    let mut sorted = col.to_vec();
    sorted.sort_by(f64::total_cmp);
    (
        Descriptive { condition: label.to_string(), n, mean, sd },
        BoxSummary {
            condition: label.to_string(),
            min: sorted[0],
            q1: quantile(&sorted, 0.25),
            median: quantile(&sorted, 0.5),
            q3: quantile(&sorted, 0.75),
            max: sorted[n - 1],
            mean,
        },
    )
}

fn metric_report(name: &str, unit: &str, m: &SubjectMeans) -> Result<MetricReport, StatsError> {
    let (descriptives, boxes) = m.conditions().iter().enumerate().map(|(j, c)| describe(c, &m.column(j))).unzip();
    let (friedman, friedman_note) = match friedman(m) {
        Ok(t) => (Some(t), None),
        Err(e @ (StatsError::UseWilcoxon(_) | StatsError::TooFew { .. })) => (None, Some(e.to_string())),
        Err(e) => return Err(e),
    };
    let posthoc = if m.n_conditions() >= 2 { bonferroni_posthoc(m)? } else { Vec::new() };
    Ok(MetricReport {
        metric: name.to_string(),
        unit: unit.to_string(),
        descriptives,
        boxes,
        friedman,
        friedman_note,
        posthoc,
    })
}

fn correlate(condition: &str, x: &str, y: &str, xs: &[f64], ys: &[f64]) -> CorrelationEntry {
    let (result, note) = match pearson_test(xs, ys) {
        Ok(c) => (Some(c), None),
        Err(e) => (None, Some(e.to_string())),
    };
    CorrelationEntry { condition: condition.to_string(), x: x.to_string(), y: y.to_string(), result, note }
}

/// Full analysis of a trial dataset, optionally joined with NASA-TLX scores
/// and demographics (matched on subject id).
///
/// Everything is computed on per-subject condition means. Conditions appear
/// in their canonical order, restricted to the ones present in `records`.
pub fn analyze(
    records: &[TrialRecord],
    tlx: Option<&[TlxRow]>,
    demographics: Option<&[Demographics]>,
) -> Result<StatsReport, StatsError> {
    if records.is_empty() {
        return Err(StatsError::NoTrials);
    }
    let present: BTreeSet<Condition> = records.iter().map(|r| r.condition).collect();
    let conditions: Vec<Condition> = Condition::ALL.into_iter().filter(|c| present.contains(c)).collect();
    let labels: Vec<String> = conditions.iter().map(|c| c.to_string()).collect();

    let mut metrics = Vec::new();
    let mut means: BTreeMap<Metric, (Vec<u32>, SubjectMeans)> = BTreeMap::new();
    for metric in Metric::ALL {
        let (subjects, m) = cell_means(&conditions, records.iter().map(|r| (r.subject, r.condition, metric.value(r))))?;
        metrics.push(metric_report(metric.as_str(), metric.unit(), &m)?);
        means.insert(metric, (subjects, m));
    }
    let subjects = means[&Metric::PM].0.clone();

    let mut correlations = Vec::new();
    for (j, label) in labels.iter().enumerate() {
        for (x, y) in [(Metric::RM, Metric::TT), (Metric::PM, Metric::TT), (Metric::RM, Metric::PM)] {
            let xs = means[&x].1.column(j);
            let ys = means[&y].1.column(j);
            correlations.push(correlate(label, x.as_str(), y.as_str(), &xs, &ys));
        }
    }

    let mut demo_entries = Vec::new();
    if let Some(demo) = demographics {
        let by_subject: BTreeMap<u32, &Demographics> = demo.iter().map(|d| (d.subject, d)).collect();
        let matched: Vec<(usize, &Demographics)> =
            subjects.iter().enumerate().filter_map(|(i, s)| by_subject.get(s).map(|d| (i, *d))).collect();
        for (j, label) in labels.iter().enumerate() {
            for (name, get) in
                [("age", (|d: &Demographics| d.age) as fn(&Demographics) -> f64), ("gaming", |d| d.gaming)]
            {
                let xs: Vec<f64> = matched.iter().map(|(_, d)| get(d)).collect();
                for metric in [Metric::PM, Metric::RM] {
                    let col = means[&metric].1.column(j);
                    let ys: Vec<f64> = matched.iter().map(|(i, _)| col[*i]).collect();
                    demo_entries.push(correlate(label, name, metric.as_str(), &xs, &ys));
                }
            }
        }
    }

    let mut tlx_reports = Vec::new();
    let mut tlx_correlations = Vec::new();
    if let Some(tlx) = tlx {
        for (s, scale) in TLX_SCALES.iter().enumerate() {
            let (_, m) = cell_means(&conditions, tlx.iter().map(|t| (t.subject, t.condition, t.scales[s])))?;
            tlx_reports.push(metric_report(scale, "", &m)?);
        }
        let raw = |t: &TlxRow| t.scales.iter().sum::<f64>() / TLX_SCALES.len() as f64;
        let (tlx_subjects, raw_means) = cell_means(&conditions, tlx.iter().map(|t| (t.subject, t.condition, raw(t))))?;
        let idx: Vec<(usize, usize)> = tlx_subjects
            .iter()
            .enumerate()
            .filter_map(|(ti, s)| subjects.iter().position(|x| x == s).map(|mi| (ti, mi)))
            .collect();
        for (j, label) in labels.iter().enumerate() {
            let raw_col = raw_means.column(j);
            let xs: Vec<f64> = idx.iter().map(|(ti, _)| raw_col[*ti]).collect();
            for metric in [Metric::PM, Metric::RM, Metric::TT] {
                let col = means[&metric].1.column(j);
                let ys: Vec<f64> = idx.iter().map(|(_, mi)| col[*mi]).collect();
                tlx_correlations.push(correlate(label, "raw_tlx", metric.as_str(), &xs, &ys));
            }
        }
    }

    let axes: Vec<&MetricReport> = metrics.iter().chain(&tlx_reports).collect();
    let radar = labels
        .iter()
        .map(|c| {
            let scores: Vec<u32> = axes.iter().map(|m| m.wins(c)).collect();
            RadarRow { condition: c.clone(), total: scores.iter().sum(), scores }
        })
        .collect();

    Ok(StatsReport {
        n_subjects: subjects.len(),
        n_trials: records.len(),
        conditions: labels,
        radar_axes: axes.iter().map(|m| m.metric.clone()).collect(),
        metrics,
        correlations,
        demographics: demo_entries,
        tlx: tlx_reports,
        tlx_correlations,
        radar,
    })
}

fn fmt_p(p: f64) -> String {
    if p < 0.001 {
        "p<.001".to_string()
    } else {
        format!("p={:.3}", p).replacen("0.", ".", 1)
    }
}

fn stars(p: f64) -> &'static str {
    if p <= 0.001 {
        "***"
    } else if p <= 0.01 {
        "**"
    } else if p <= SIGNIFICANCE {
        "*"
    } else {
        ""
    }
}

fn method_tag(m: Method) -> &'static str {
    match m {
        Method::FriedmanChiSquare => "chi-square",
        Method::FriedmanExact => "exact",
        Method::WilcoxonExact => "exact",
        Method::WilcoxonNormal => "normal",
        Method::PearsonT => "t",
    }
}

fn write_metric(out: &mut String, m: &MetricReport) {
    let unit = if m.unit.is_empty() { String::new() } else { format!(" [{}]", m.unit) };
    let _ = writeln!(out, "{}{}", m.metric, unit);
    let _ = writeln!(out, "  {:<12} {:>4} {:>10} {:>10} {:>10}", "condition", "n", "mean", "sd", "median");
    for (d, b) in m.descriptives.iter().zip(&m.boxes) {
        let _ = writeln!(out, "  {:<12} {:>4} {:>10.3} {:>10.3} {:>10.3}", d.condition, d.n, d.mean, d.sd, b.median);
    }
    match (&m.friedman, &m.friedman_note) {
        (Some(f), _) => {
            let _ = writeln!(
                out,
                "  Friedman: chi2={:.2}, {}, Kendall's W={:.2} ({})",
                f.statistic,
                fmt_p(f.p_value),
                f.effect_size.unwrap_or(0.0),
                method_tag(f.method)
            );
        }
        (None, Some(note)) => {
            let _ = writeln!(out, "  Friedman: not run ({note})");
        }
        (None, None) => {}
    }
    for p in &m.posthoc {
        let detail = match &p.test {
            Some(t) => {
                format!("V={:.1}, z={:.2}, r={:.2}", t.statistic, t.z.unwrap_or(0.0), t.effect_size.unwrap_or(0.0))
            }
            None => "no non-zero differences".to_string(),
        };
        let lower = p.lower.as_deref().map(|l| format!(" lower: {l}")).unwrap_or_default();
        let _ = writeln!(
            out,
            "    {} vs {}: {}, pbonf{} {}{}",
            p.a,
            p.b,
            detail,
            fmt_p(p.p_bonf).trim_start_matches('p'),
            stars(p.p_bonf),
            lower
        );
    }
    out.push('\n');
}

fn write_correlations(out: &mut String, title: &str, entries: &[CorrelationEntry]) {
    if entries.is_empty() {
        return;
    }
    let _ = writeln!(out, "{title}");
    for e in entries {
        match &e.result {
            Some(c) => {
                let _ = writeln!(
                    out,
                    "  {:<12} r({}, {})={:+.3}, {} ({}), n={}",
                    e.condition,
                    e.x,
                    e.y,
                    c.r,
                    fmt_p(c.p_value),
                    c.strength.as_str(),
                    c.n
                );
            }
            None => {
                let _ = writeln!(
                    out,
                    "  {:<12} r({}, {}) undefined: {}",
                    e.condition,
                    e.x,
                    e.y,
                    e.note.as_deref().unwrap_or("")
                );
            }
        }
    }
    out.push('\n');
}

impl StatsReport {
    /// Human-readable summary in the usual reporting style.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "subjects: {}, trials: {}", self.n_subjects, self.n_trials);
        let _ = writeln!(out, "conditions: {}\n", self.conditions.join(", "));
        for m in &self.metrics {
            write_metric(&mut out, m);
        }
        write_correlations(&mut out, "Correlations (subject means)", &self.correlations);
        write_correlations(&mut out, "Demographics", &self.demographics);
        if !self.tlx.is_empty() {
            let _ = writeln!(out, "NASA-TLX\n");
            for m in &self.tlx {
                write_metric(&mut out, m);
            }
        }
        write_correlations(&mut out, "Raw TLX correlations", &self.tlx_correlations);
        let _ = writeln!(out, "Radar scores");
        let _ = writeln!(out, "  {:<12} {} total", "condition", self.radar_axes.join(" "));
        for r in &self.radar {
            let cells: Vec<String> =
                r.scores.iter().zip(&self.radar_axes).map(|(s, a)| format!("{:>w$}", s, w = a.len())).collect();
            let _ = writeln!(out, "  {:<12} {} {:>5}", r.condition, cells.join(" "), r.total);
        }
        out
    }

    /// `condition,<axis...>,total` rows.
    pub fn to_radar_csv(&self) -> String {
        let mut out = format!("condition,{},total\n", self.radar_axes.join(","));
        for r in &self.radar {
            let cells: Vec<String> = r.scores.iter().map(u32::to_string).collect();
            let _ = writeln!(out, "{},{},{}", r.condition, cells.join(","), r.total);
        }
        out
    }

    pub fn metric(&self, m: Metric) -> Option<&MetricReport> {
        self.metrics.iter().find(|r| r.metric == m.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{GuidanceError, Pose, Vec3};

    fn record(subject: u32, condition: Condition, trial: u32, pm: f64, rm: f64, tt: f64) -> TrialRecord {
        TrialRecord {
            subject,
            condition,
            trial,
            target: Pose::from_position(Vec3::new(0.0, 0.0, 50.0)),
            error: GuidanceError::from_components(Vec3::new(pm, 0.0, 0.0), rm, 0.0),
            task_time: tt,
            timed_out: false,
            seed: 0,
        }
    }

    #[test]
    fn identical_conditions() {
        let mut recs = Vec::new();
        for s in 0..12 {
            for c in Condition::ALL {
                for t in 0..2 {
                    let v = 1.0 + s as f64 * 0.1 + t as f64;
                    recs.push(record(s, c, t, v, v * 2.0, v + 3.0));
                }
            }
        }
        let rep = analyze(&recs, None, None).unwrap();
        assert_eq!(rep.metrics.len(), 8);
        assert!(rep.metrics.iter().flat_map(|m| &m.posthoc).all(|p| !p.significant));
        assert!(rep.radar.iter().all(|r| r.scores == rep.radar[0].scores));
        let json = serde_json::to_string(&rep).unwrap();
        let back: StatsReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rep);
    }

    #[test]
    fn dominant_condition_scores() {
        let mut recs = Vec::new();
        for s in 0..20 {
            for (j, c) in Condition::ALL.into_iter().enumerate() {
                let noise = ((s * 7 + j as u32 * 3) % 5) as f64;
                let pm = if c == Condition::Dwta { 0.1 + s as f64 * 0.001 } else { 2.0 + noise };
                recs.push(record(s, c, 0, pm, 1.0 + noise, 5.0));
            }
        }
        let rep = analyze(&recs, None, None).unwrap();
        let pm = rep.metric(Metric::PM).unwrap();
        assert_eq!(pm.wins("DWTA"), 3);
        assert!(rep.to_text().contains("DWTA"));
        assert!(rep.to_radar_csv().starts_with("condition,PM,PX,PY,PZ,RM,RX,RZ,TT,total\n"));
    }

    #[test]
    fn missing_cell_names_subject() {
        let recs = vec![
            record(1, Condition::EntryPoint, 0, 1.0, 1.0, 1.0),
            record(1, Condition::TargetAxis, 0, 1.0, 1.0, 1.0),
            record(2, Condition::EntryPoint, 0, 1.0, 1.0, 1.0),
        ];
        assert_eq!(
            analyze(&recs, None, None).unwrap_err(),
            StatsError::MissingCell { subject: "2".into(), condition: "TargetAxis".into() }
        );
        assert_eq!(analyze(&[], None, None).unwrap_err(), StatsError::NoTrials);
    }

    #[test]
    fn quantiles_interpolate() {
        let (_, b) = describe("x", &[4.0, 1.0, 3.0, 2.0]);
        assert_eq!((b.min, b.q1, b.median, b.q3, b.max), (1.0, 1.75, 2.5, 3.25, 4.0));
    }
}
