//! Pixel-level scoring of predicted crack masks: precision index (PI),
//! sensitivity index (SI) and Dice similarity coefficient (DSC).

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::BinaryMask;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        Self { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn add(&self, other: &ConfusionCounts) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            fn_: self.fn_ + other.fn_,
            tn: self.tn + other.tn,
        }
    }
}

/// Per-pixel tally; `pred` is the prediction, `gt` the ground truth.
pub fn confusion(pred: &BinaryMask, gt: &BinaryMask) -> Result<ConfusionCounts> {
    pred.check_dims(gt.dims())?;
    let mut c = ConfusionCounts::default();
    for (&p, &g) in pred.bits().iter().zip(gt.bits()) {
        match (p, g) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub pi: f64,
    pub si: f64,
    pub dsc: f64,
}

/// `PI = TP/(TP+FP)`, `SI = TP/(TP+FN)`, `DSC = 2TP/(2TP+FP+FN)`.
///
/// Empty denominators: PI is 1 when the ground truth is empty too (nothing
/// predicted, nothing to predict) and 0 otherwise; SI is 1 when the
/// prediction is empty too and 0 otherwise; DSC of two empty masks is 1.
pub fn scores(c: &ConfusionCounts) -> Scores {
    let ratio = |num: u64, den: u64, vacuous: bool| {
        if den == 0 {
            if vacuous {
                1.0
            } else {
                0.0
            }
        } else {
            num as f64 / den as f64
        }
    };
    Scores {
        pi: ratio(c.tp, c.tp + c.fp, c.fn_ == 0),
        si: ratio(c.tp, c.tp + c.fn_, c.fp == 0),
        dsc: ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_, true),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lighting {
    Normal,
    Low,
}

impl Lighting {
    pub fn as_str(&self) -> &'static str {
        match self {
            Lighting::Normal => "normal",
            Lighting::Low => "low",
        }
    }
}

impl FromStr for Lighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "normal" => Ok(Lighting::Normal),
            "low" => Ok(Lighting::Low),
            other => Err(Error::InvalidInput(format!(
                "unknown lighting label {other:?} (normal|low)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub lighting: Lighting,
    pub counts: ConfusionCounts,
    pub pi: f64,
    pub si: f64,
    pub dsc: f64,
}

impl MethodReport {
    pub fn from_counts(
        method: impl Into<String>,
        lighting: Lighting,
        counts: ConfusionCounts,
    ) -> Self {
        let s = scores(&counts);
        Self {
            method: method.into(),
            lighting,
            counts,
            pi: s.pi,
            si: s.si,
            dsc: s.dsc,
        }
    }
}

pub struct EvalRow<'a> {
    pub method: &'a str,
    pub lighting: Lighting,
    pub pred: &'a BinaryMask,
    pub gt: &'a BinaryMask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub reports: Vec<MethodReport>,
    pub table: String,
}

/// One report per method x lighting, in first-appearance order. Rows of the
/// same group are pooled by summing their confusion counts.
pub fn compare(rows: &[EvalRow<'_>]) -> Result<Comparison> {
    let mut reports: Vec<MethodReport> = Vec::new();
    for row in rows {
        let c = confusion(row.pred, row.gt)?;
        match reports
            .iter_mut()
            .find(|r| r.method == row.method && r.lighting == row.lighting)
        {
            Some(r) => *r = MethodReport::from_counts(row.method, row.lighting, r.counts.add(&c)),
            None => reports.push(MethodReport::from_counts(row.method, row.lighting, c)),
        }
    }
    let table = render_table(&reports);
    Ok(Comparison { reports, table })
}

/// Aligned text table, four decimals.
pub fn render_table(reports: &[MethodReport]) -> String {
    let width = reports
        .iter()
        .map(|r| r.method.len())
        .max()
        .unwrap_or(0)
        .max("method".len());
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:<8}  {:>6}  {:>6}  {:>6}",
        "method", "lighting", "PI", "SI", "DSC"
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{:<width$}  {:<8}  {:>6.4}  {:>6.4}  {:>6.4}",
            r.method,
            r.lighting.as_str(),
            r.pi,
            r.si,
            r.dsc
        );
    }
    out
}

/// Published field-study scores (method, lighting, PI, SI, DSC). Kept for
/// display and comparison only; the source images are not available, so
/// nothing here is recomputed or used as a pass/fail target.
pub const FIELD_STUDY_SCORES: [(&str, Lighting, f64, f64, f64); 6] = [
    ("proposed", Lighting::Normal, 0.9360, 0.6507, 0.7677),
    ("proposed", Lighting::Low, 0.0079, 0.7365, 0.0156),
    (
        "sauvola-pietikainen",
        Lighting::Normal,
        0.9210,
        0.8555,
        0.8871,
    ),
    ("sauvola-pietikainen", Lighting::Low, 0.7679, 0.8831, 0.8215),
    ("otsu", Lighting::Normal, 0.0076, 0.9734, 0.0151),
    ("otsu", Lighting::Low, 0.0089, 0.8836, 0.0177),
];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use proptest::prelude::*;

    fn mask(w: usize, h: usize, bits: &[u8]) -> BinaryMask {
        BinaryMask::new(w, h, bits.iter().map(|&b| b == 1).collect()).unwrap()
    }

    #[test]
    fn confusion_examples() {
        let gt = mask(3, 2, &[1, 0, 1, 1, 0, 0]);
        let c = confusion(&gt, &gt).unwrap();
        assert_eq!((c.fp, c.fn_, c.tp), (0, 0, 3));

        let none = BinaryMask::empty(3, 2);
        let c = confusion(&none, &gt).unwrap();
        assert_eq!((c.tp, c.fn_), (0, 3));

        let pred = mask(2, 2, &[1, 0, 1, 0]);
        let gt = mask(2, 2, &[1, 1, 0, 0]);
        assert_eq!(
            confusion(&pred, &gt).unwrap(),
            ConfusionCounts::new(1, 1, 1, 1)
        );

        assert!(confusion(&pred, &BinaryMask::empty(3, 2)).is_err());
    }

    #[test]
    fn score_examples() {
        let s = scores(&ConfusionCounts::new(8, 2, 2, 88));
        assert!(
            (s.pi - 0.8).abs() < 1e-15 && (s.si - 0.8).abs() < 1e-15 && (s.dsc - 0.8).abs() < 1e-15
        );
        let perfect = scores(&ConfusionCounts::new(5, 0, 0, 5));
        assert_eq!((perfect.pi, perfect.si, perfect.dsc), (1.0, 1.0, 1.0));
        for c in [
            ConfusionCounts::new(0, 3, 0, 1),
            ConfusionCounts::new(0, 0, 4, 1),
            ConfusionCounts::new(0, 2, 2, 0),
        ] {
            let s = scores(&c);
            assert_eq!((s.pi, s.si, s.dsc), (0.0, 0.0, 0.0), "{c:?}");
        }
        let empty = scores(&ConfusionCounts::new(0, 0, 0, 9));
        assert_eq!((empty.pi, empty.si, empty.dsc), (1.0, 1.0, 1.0));
    }

    #[test]
    fn comparison_reproduces_published_scores() {
        for (method, lighting, pi, si, dsc) in FIELD_STUDY_SCORES {
            let counts = synth::counts_for_scores(pi, si, dsc);
            let (pred, gt) = synth::masks_with_counts(&counts, 200);
            let rows = [EvalRow {
                method,
                lighting,
                pred: &pred,
                gt: &gt,
            }];
            let cmp = compare(&rows).unwrap();
            let r = &cmp.reports[0];
            assert_eq!(r.counts, counts);
            let round = |v: f64| (v * 1e4).round() / 1e4;
            assert_eq!(
                (round(r.pi), round(r.si), round(r.dsc)),
                (pi, si, dsc),
                "{method} {lighting:?}"
            );
        }
    }

    #[test]
    fn table_layout() {
        let gt = mask(2, 2, &[1, 1, 0, 0]);
        let pred = mask(2, 2, &[1, 0, 1, 0]);
        let cmp = compare(&[EvalRow {
            method: "otsu",
            lighting: Lighting::Low,
            pred: &pred,
            gt: &gt,
        }])
        .unwrap();
        assert_eq!(cmp.reports.len(), 1);
        assert_eq!(
            cmp.table,
            "method  lighting      PI      SI     DSC\notsu    low       0.5000  0.5000  0.5000\n"
        );
        let json = serde_json::to_string(&cmp.reports).unwrap();
        assert!(json.contains("\"lighting\":\"low\""));
    }

    #[test]
    fn rows_pool_per_group() {
        let gt = mask(2, 2, &[1, 1, 0, 0]);
        let a = mask(2, 2, &[1, 1, 0, 0]);
        let b = mask(2, 2, &[0, 0, 1, 1]);
        let rows = [
            EvalRow {
                method: "m",
                lighting: Lighting::Normal,
                pred: &a,
                gt: &gt,
            },
            EvalRow {
                method: "m",
                lighting: Lighting::Normal,
                pred: &b,
                gt: &gt,
            },
            EvalRow {
                method: "m",
                lighting: Lighting::Low,
                pred: &a,
                gt: &gt,
            },
        ];
        let cmp = compare(&rows).unwrap();
        assert_eq!(cmp.reports.len(), 2);
        assert_eq!(cmp.reports[0].counts, ConfusionCounts::new(2, 2, 2, 2));
        assert_eq!(cmp.reports[1].dsc, 1.0);
    }

    #[test]
    fn lighting_labels() {
        assert_eq!("LOW".parse::<Lighting>().unwrap(), Lighting::Low);
        assert!("dusk".parse::<Lighting>().is_err());
    }

    proptest! {
        #[test]
        fn scores_bounded_and_harmonic(tp in 0u64..10_000, fp in 0u64..10_000, fn_ in 0u64..10_000, tn in 0u64..10_000) {
            let s = scores(&ConfusionCounts::new(tp, fp, fn_, tn));
            for v in [s.pi, s.si, s.dsc] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            if tp + fp > 0 && tp + fn_ > 0 && s.pi + s.si > 0.0 {
                let h = 2.0 * s.pi * s.si / (s.pi + s.si);
                prop_assert!((h - s.dsc).abs() <= 1e-12);
            }
        }

        #[test]
        fn swapping_arguments_swaps_errors(bits in proptest::collection::vec(0u8..4, 48)) {
            let pred = BinaryMask::new(8, 6, bits.iter().map(|b| b & 1 == 1).collect()).unwrap();
            let gt = BinaryMask::new(8, 6, bits.iter().map(|b| b & 2 == 2).collect()).unwrap();
            let a = confusion(&pred, &gt).unwrap();
            let b = confusion(&gt, &pred).unwrap();
            prop_assert_eq!(a.tp, b.tp);
            prop_assert_eq!(a.fp, b.fn_);
            prop_assert_eq!(a.fn_, b.fp);
            prop_assert_eq!(a.total(), 48);
            let (sa, sb) = (scores(&a), scores(&b));
            prop_assert_eq!(sa.pi, sb.si);
            prop_assert_eq!(sa.dsc, sb.dsc);
        }
    }
}
