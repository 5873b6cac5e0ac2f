//! Segmentation-style metrics for anomaly sensitivity.
//!
//! Two protocols:
//! * `AllPoints`: every point is evaluated; points the pipeline never labeled
//!   predict negative, so a missed anomaly is a false negative.
//! * `BothLabeled`: only points labeled by both the pipeline and the ground
//!   truth are evaluated.
//!
//! Groups are micro-averaged: counts are summed, then metrics computed once.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Table-1 style: all points.
    #[serde(alias = "table1")]
    AllPoints,
    /// Table-2 style: points labeled by both.
    #[serde(alias = "table2")]
    BothLabeled,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::AllPoints => "all_points",
            Protocol::BothLabeled => "both_labeled",
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table1" | "all_points" => Ok(Protocol::AllPoints),
            "table2" | "both_labeled" => Ok(Protocol::BothLabeled),
            _ => Err(format!("unknown protocol {s:?} (expected table1 or table2)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl Add for ConfusionCounts {
    type Output = ConfusionCounts;

    fn add(self, o: ConfusionCounts) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: ConfusionCounts) {
        *self = *self + o;
    }
}

impl std::iter::Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = ConfusionCounts>>(iter: I) -> Self {
        iter.fold(ConfusionCounts::default(), Add::add)
    }
}

/// Counts over points where `eval_mask` is true.
pub fn confusion(pred: &[bool], gt: &[bool], eval_mask: &[bool]) -> Result<ConfusionCounts, Error> {
    check_len("gt", pred.len(), gt.len())?;
    check_len("eval mask", pred.len(), eval_mask.len())?;
    let mut c = ConfusionCounts::default();
    for ((&p, &g), &e) in pred.iter().zip(gt).zip(eval_mask) {
        if !e {
            continue;
        }
        match (p, g) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub iou: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// IoU, precision, recall and F1; every 0/0 is 0.
pub fn metrics(c: &ConfusionCounts) -> Metrics {
    let (tp, fp, fn_) = (c.tp as f64, c.fp as f64, c.fn_ as f64);
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    Metrics {
        iou: ratio(tp, tp + fp + fn_),
        precision,
        recall,
        f1: ratio(2.0 * precision * recall, precision + recall),
    }
}

/// Counts for one frame contributing to a named group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSample {
    pub key: String,
    pub counts: ConfusionCounts,
    /// Units this sample adds to the row's `n` column (frames or instances).
    pub units: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub group: String,
    pub n: u64,
    pub counts: ConfusionCounts,
    pub metrics: Metrics,
}

/// Sums counts per group and computes metrics on the sums. Row order
/// follows `groups`; a listed group with no samples is an error.
pub fn aggregate_by(groups: &[String], samples: &[GroupSample]) -> Result<Vec<ReportRow>, Error> {
    if groups.is_empty() {
        return Err(Error::EmptyGroup(String::new()));
    }
    let mut acc: BTreeMap<&str, (u64, ConfusionCounts, bool)> = BTreeMap::new();
    for s in samples {
        let e = acc.entry(s.key.as_str()).or_default();
        e.0 += s.units;
        e.1 += s.counts;
        e.2 = true;
    }
    groups
        .iter()
        .map(|g| {
            let (n, counts, seen) = acc.get(g.as_str()).copied().unwrap_or_default();
            if !seen {
                return Err(Error::EmptyGroup(g.clone()));
            }
            Ok(ReportRow {
                group: g.clone(),
                n,
                counts,
                metrics: metrics(&counts),
            })
        })
        .collect()
}

fn pct(v: f64) -> String {
    format!("{:.1}", v * 100.0)
}

/// Aligned text table with a metadata header.
pub fn format_table(title: &str, protocol: Protocol, group_label: &str, n_label: &str, rows: &[ReportRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {title}");
    let _ = writeln!(out, "# protocol: {}", protocol.name());
    let _ = writeln!(out, "# averaging: micro (counts summed within each group)");
    let width = rows.iter().map(|r| r.group.len()).chain([group_label.len()]).max().unwrap_or(0);
    let _ = writeln!(
        out,
        "{:<width$}  {:>9}  {:>6}  {:>6}  {:>6}  {:>6}",
        group_label, n_label, "mIoU", "mP", "mR", "mF1"
    );
    for r in rows {
        let m = r.metrics;
        let _ = writeln!(
            out,
            "{:<width$}  {:>9}  {:>6}  {:>6}  {:>6}  {:>6}",
            r.group,
            r.n,
            pct(m.iou),
            pct(m.precision),
            pct(m.recall),
            pct(m.f1)
        );
    }
    out
}

#[derive(Serialize)]
struct CsvRow<'a> {
    group: &'a str,
    n: u64,
    #[serde(rename = "mIoU")]
    iou: String,
    #[serde(rename = "mP")]
    precision: String,
    #[serde(rename = "mR")]
    recall: String,
    #[serde(rename = "mF1")]
    f1: String,
    tp: u64,
    fp: u64,
    #[serde(rename = "fn")]
    fn_: u64,
    tn: u64,
}

/// Machine-readable rows: `group,n,mIoU,mP,mR,mF1,tp,fp,fn,tn`, percentages
/// to one decimal.
pub fn format_csv(rows: &[ReportRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(CsvRow {
            group: &r.group,
            n: r.n,
            iou: pct(r.metrics.iou),
            precision: pct(r.metrics.precision),
            recall: pct(r.metrics.recall),
            f1: pct(r.metrics.f1),
            tp: r.counts.tp,
            fp: r.counts.fp,
            fn_: r.counts.fn_,
            tn: r.counts.tn,
        })
        .expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_prediction_counts() {
        let gt: Vec<bool> = (0..100).map(|i| i < 40).collect();
        let c = confusion(&gt, &gt, &[true; 100]).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 40, fp: 0, fn_: 0, tn: 60 });
        let m = metrics(&c);
        assert_eq!((m.iou, m.precision, m.recall, m.f1), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn hand_enumerated_universe() {
        // universe {a,b,c,d}; pred {a,b}; gt {b,c}
        let pred = [true, true, false, false];
        let gt = [false, true, true, false];
        let c = confusion(&pred, &gt, &[true; 4]).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 1, fp: 1, fn_: 1, tn: 1 });
        let m = metrics(&c);
        assert_eq!(m.iou, 1.0 / 3.0);
        assert_eq!((m.precision, m.recall, m.f1), (0.5, 0.5, 0.5));
    }

    #[test]
    fn zero_counts_are_zero() {
        assert_eq!(metrics(&ConfusionCounts::default()), Metrics::default());
        assert_eq!(metrics(&ConfusionCounts { tn: 50, ..Default::default() }), Metrics::default());
    }

    #[test]
    fn eval_mask_restricts() {
        let c = confusion(&[false, true], &[true, true], &[false, true]).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 1, ..Default::default() });
        assert!(confusion(&[true], &[true, false], &[true]).is_err());
    }

    #[test]
    fn group_aggregation() {
        let a = ConfusionCounts { tp: 3, fp: 1, fn_: 2, tn: 10 };
        let b = ConfusionCounts { tp: 1, fp: 3, fn_: 0, tn: 5 };
        let samples = vec![
            GroupSample { key: "x".into(), counts: a, units: 1 },
            GroupSample { key: "x".into(), counts: b, units: 1 },
            GroupSample { key: "y".into(), counts: a, units: 1 },
        ];
        let rows = aggregate_by(&["x".into(), "y".into()], &samples).unwrap();
        assert_eq!(rows[0].n, 2);
        // summed: tp 4, fp 4, fn 2 → iou 0.4, p 0.5, r 2/3, f1 4/7
        assert_eq!(rows[0].metrics.iou, 0.4);
        assert_eq!(rows[0].metrics.precision, 0.5);
        assert!((rows[0].metrics.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((rows[0].metrics.f1 - 4.0 / 7.0).abs() < 1e-15);
        assert_eq!(rows[1].metrics, metrics(&a));
        assert_eq!(aggregate_by(&["z".into()], &samples), Err(Error::EmptyGroup("z".into())));
    }

    #[test]
    fn animal_row_pattern() {
        let samples = vec![GroupSample {
            key: "animal".into(),
            counts: ConfusionCounts { tn: 120, ..Default::default() },
            units: 5,
        }];
        let rows = aggregate_by(&["animal".into()], &samples).unwrap();
        let csv = format_csv(&rows);
        assert_eq!(csv.lines().nth(1).unwrap(), "animal,5,0.0,0.0,0.0,0.0,0,0,0,120");
        let table = format_table("t", Protocol::BothLabeled, "superclass", "#instances", &rows);
        assert!(table.contains("# protocol: both_labeled"));
    }

    #[test]
    fn protocol_names() {
        assert_eq!("table1".parse::<Protocol>().unwrap(), Protocol::AllPoints);
        assert_eq!("table2".parse::<Protocol>().unwrap(), Protocol::BothLabeled);
        assert!("table3".parse::<Protocol>().is_err());
    }

    proptest! {
        #[test]
        fn metric_ordering(tp in 1u64..1000, fp in 0u64..1000, fn_ in 0u64..1000) {
            let c = ConfusionCounts { tp, fp, fn_, tn: 0 };
            let m = metrics(&c);
            let (lo, hi) = (m.precision.min(m.recall), m.precision.max(m.recall));
            prop_assert!(m.iou <= lo + 1e-12);
            prop_assert!(lo <= m.f1 + 1e-12 && m.f1 <= hi + 1e-12);
            prop_assert!((m.f1 - 2.0 * m.precision * m.recall / (m.precision + m.recall)).abs() < 1e-12);

            let more = metrics(&ConfusionCounts { tp: tp + 1, ..c });
            prop_assert!(more.iou >= m.iou && more.precision >= m.precision);
            prop_assert!(more.recall >= m.recall && more.f1 >= m.f1);
        }

        #[test]
        fn protocol_two_is_restriction(bits in prop::collection::vec((any::<bool>(), any::<bool>(), any::<bool>()), 0..200)) {
            let pred: Vec<bool> = bits.iter().map(|b| b.0).collect();
            let gt: Vec<bool> = bits.iter().map(|b| b.1).collect();
            let both: Vec<bool> = bits.iter().map(|b| b.2).collect();
            let p2 = confusion(&pred, &gt, &both).unwrap();
            let restricted = confusion(
                &pred.iter().zip(&both).filter(|x| *x.1).map(|x| *x.0).collect::<Vec<_>>(),
                &gt.iter().zip(&both).filter(|x| *x.1).map(|x| *x.0).collect::<Vec<_>>(),
                &vec![true; both.iter().filter(|b| **b).count()],
            ).unwrap();
            prop_assert_eq!(p2, restricted);
        }
    }
}
