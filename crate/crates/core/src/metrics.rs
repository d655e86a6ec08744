//! Confusion matrices, per-class F1, and multi-seed aggregation.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::de::Error as _;
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::fusion::MethodVariant;
use crate::taxonomy::{ActivityClass, NUM_CLASSES};

/// `counts[truth][predicted]`, 0-based model rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    /// Panics if the slices differ in length.
    pub fn new(truth: &[ActivityClass], predicted: &[ActivityClass]) -> Self {
        assert_eq!(truth.len(), predicted.len(), "truth and predictions differ in length");
        let mut counts = [[0u64; NUM_CLASSES]; NUM_CLASSES];
        for (t, p) in truth.iter().zip(predicted) {
            counts[t.model_index()][p.model_index()] += 1;
        }
        Self { counts }
    }

    pub fn count(&self, truth: ActivityClass, predicted: ActivityClass) -> u64 {
        self.counts[truth.model_index()][predicted.model_index()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self, class: ActivityClass) -> u64 {
        self.counts[class.model_index()].iter().sum()
    }

    pub fn predicted(&self, class: ActivityClass) -> u64 {
        self.counts.iter().map(|row| row[class.model_index()]).sum()
    }

    pub fn correct(&self) -> u64 {
        (0..NUM_CLASSES).map(|i| self.counts[i][i]).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassMetric {
    pub class: ActivityClass,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// Precision or recall had a zero denominator and was taken as 0.
    pub zero_division: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassificationMetrics {
    pub total: u64,
    pub correct: u64,
    /// Fraction in `[0, 1]`.
    pub accuracy: f64,
    pub per_class: Vec<ClassMetric>,
    /// Unweighted mean of the 18 per-class F1 scores.
    pub macro_f1: f64,
    /// Support-weighted mean of the per-class F1 scores.
    pub weighted_f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ClassificationMetrics {
    pub fn from_confusion(cm: &ConfusionMatrix) -> Self {
        let total = cm.total();
        let correct = cm.correct();
        let per_class: Vec<ClassMetric> = ActivityClass::all()
            .map(|class| {
                let tp = cm.count(class, class);
                let support = cm.support(class);
                let predicted = cm.predicted(class);
                let precision = ratio(tp, predicted);
                let recall = ratio(tp, support);
                let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
                ClassMetric { class, precision, recall, f1, support, zero_division: support == 0 || predicted == 0 }
            })
            .collect();
        let macro_f1 = per_class.iter().map(|c| c.f1).sum::<f64>() / NUM_CLASSES as f64;
        let weighted_f1 = if total == 0 {
            0.0
        } else {
            per_class.iter().map(|c| c.f1 * c.support as f64).sum::<f64>() / total as f64
        };
        Self { total, correct, accuracy: ratio(correct, total), per_class, macro_f1, weighted_f1 }
    }

    pub fn compute(truth: &[ActivityClass], predicted: &[ActivityClass]) -> Self {
        Self::from_confusion(&ConfusionMatrix::new(truth, predicted))
    }
}

/// One class's row in a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub name: String,
    pub f1: f64,
    pub support: u64,
}

/// Per-class entries keyed by 1-based class index, kept in index order.
#[derive(Clone, Debug, PartialEq)]
pub struct PerClass(pub Vec<(ActivityClass, ClassReport)>);

impl Serialize for PerClass {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (class, entry) in &self.0 {
            map.serialize_entry(&class.index().to_string(), entry)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for PerClass {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = BTreeMap::<String, ClassReport>::deserialize(deserializer)?;
        let mut entries = Vec::with_capacity(raw.len());
        for (key, entry) in raw {
            let class = key
                .parse::<usize>()
                .ok()
                .and_then(ActivityClass::from_index)
                .ok_or_else(|| D::Error::custom(alloc::format!("bad class key {key:?}")))?;
            entries.push((class, entry));
        }
        entries.sort_by_key(|(c, _)| *c);
        Ok(PerClass(entries))
    }
}

/// Accuracy and F1 for one method variant over one or more seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub variant: MethodVariant,
    pub seeds: Vec<u64>,
    pub accuracy_mean_pct: f64,
    /// Sample standard deviation over seeds; 0 for a single seed.
    pub accuracy_std_pct: f64,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub per_class: PerClass,
    /// Classes whose F1 was set to 0 because precision or recall was undefined.
    #[serde(default)]
    pub zero_division_classes: Vec<usize>,
}

impl MetricsReport {
    pub fn single_run(variant: MethodVariant, seed: u64, metrics: &ClassificationMetrics) -> Self {
        let per_class = metrics
            .per_class
            .iter()
            .map(|c| {
                (c.class, ClassReport { name: c.class.canonical_name().into(), f1: c.f1, support: c.support })
            })
            .collect();
        Self {
            variant,
            seeds: alloc::vec![seed],
            accuracy_mean_pct: metrics.accuracy * 100.0,
            accuracy_std_pct: 0.0,
            macro_f1: metrics.macro_f1,
            weighted_f1: metrics.weighted_f1,
            per_class: PerClass(per_class),
            zero_division_classes: metrics
                .per_class
                .iter()
                .filter(|c| c.zero_division)
                .map(|c| c.class.index())
                .collect(),
        }
    }

    pub fn class(&self, class: ActivityClass) -> Option<&ClassReport> {
        self.per_class.0.iter().find(|(c, _)| *c == class).map(|(_, r)| r)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AggregateError {
    Empty,
    VariantMismatch { expected: MethodVariant, found: MethodVariant },
}

impl fmt::Display for AggregateError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AggregateError::Empty => f.write_str("no reports to aggregate"),
            AggregateError::VariantMismatch { expected, found } => {
                write!(f, "cannot aggregate {found} report with {expected} reports")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for AggregateError {}

/// Arithmetic mean, computed as offsets from the first value so that
/// identical inputs return that value exactly.
pub fn mean(values: &[f64]) -> f64 {
    match values.first() {
        None => 0.0,
        Some(&first) => first + values.iter().map(|v| v - first).sum::<f64>() / values.len() as f64,
    }
}

/// Sample standard deviation (`n - 1` denominator), 0 for fewer than two values.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    libm::sqrt(ss / (values.len() - 1) as f64)
}

/// Mean ± sample std of accuracy across reports, with F1 scores averaged.
///
/// Per-class support is taken from the first report; all reports are
/// expected to cover the same test set.
pub fn aggregate_seeds(reports: &[MetricsReport]) -> Result<MetricsReport, AggregateError> {
    let first = reports.first().ok_or(AggregateError::Empty)?;
    if let Some(other) = reports.iter().find(|r| r.variant != first.variant) {
        return Err(AggregateError::VariantMismatch { expected: first.variant, found: other.variant });
    }
    let collect = |f: &dyn Fn(&MetricsReport) -> f64| reports.iter().map(f).collect::<Vec<f64>>();
    let accuracies = collect(&|r| r.accuracy_mean_pct);

    let mut seeds: Vec<u64> = Vec::new();
    for s in reports.iter().flat_map(|r| r.seeds.iter().copied()) {
        if !seeds.contains(&s) {
            seeds.push(s);
        }
    }
    let per_class = first
        .per_class
        .0
        .iter()
        .map(|(class, entry)| {
            let f1s: Vec<f64> = reports.iter().map(|r| r.class(*class).map_or(0.0, |c| c.f1)).collect();
            (*class, ClassReport { name: entry.name.clone(), f1: mean(&f1s), support: entry.support })
        })
        .collect();
    let mut zero_division_classes: Vec<usize> =
        reports.iter().flat_map(|r| r.zero_division_classes.iter().copied()).collect();
    zero_division_classes.sort_unstable();
    zero_division_classes.dedup();

    Ok(MetricsReport {
        variant: first.variant,
        seeds,
        accuracy_mean_pct: mean(&accuracies),
        accuracy_std_pct: sample_std(&accuracies),
        macro_f1: mean(&collect(&|r| r.macro_f1)),
        weighted_f1: mean(&collect(&|r| r.weighted_f1)),
        per_class: PerClass(per_class),
        zero_division_classes,
    })
}

/// Relative change of `value` over `baseline`, in percent.
pub fn relative_improvement_pct(baseline: f64, value: f64) -> f64 {
    (value - baseline) / baseline * 100.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;

    fn c(i: usize) -> ActivityClass {
        ActivityClass::from_index(i).unwrap()
    }

    fn report(variant: MethodVariant, acc: f64) -> MetricsReport {
        let truth: Vec<ActivityClass> = ActivityClass::all().collect();
        let mut r = MetricsReport::single_run(variant, 1, &ClassificationMetrics::compute(&truth, &truth));
        r.accuracy_mean_pct = acc;
        r
    }

    #[test]
    fn perfect_predictions() {
        let truth: Vec<ActivityClass> = ActivityClass::all().chain(ActivityClass::all()).collect();
        let m = ClassificationMetrics::compute(&truth, &truth);
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.macro_f1, 1.0);
        assert!(m.per_class.iter().all(|c| c.f1 == 1.0 && c.support == 2 && !c.zero_division));
    }

    #[test]
    fn absent_class_is_flagged() {
        let truth = vec![c(1), c(2), c(2)];
        let pred = vec![c(1), c(2), c(1)];
        let m = ClassificationMetrics::compute(&truth, &pred);
        let absent = m.per_class[17];
        assert_eq!((absent.f1, absent.support, absent.zero_division), (0.0, 0, true));
        assert!(!m.per_class[0].zero_division);
        // class 1: P = 1/2, R = 1 -> F1 = 2/3; class 2: P = 1, R = 1/2 -> 2/3
        assert!((m.per_class[0].f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.per_class[1].f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.macro_f1 - (4.0 / 3.0) / 18.0).abs() < 1e-15);
        assert!((m.weighted_f1 - 2.0 / 3.0).abs() < 1e-15);
        let r = MetricsReport::single_run(MethodVariant::M1, 3, &m);
        assert_eq!(r.zero_division_classes, (3..=18).collect::<Vec<_>>());
    }

    #[test]
    fn aggregate_closed_forms() {
        let reports = [1.0, 2.0, 3.0].map(|a| report(MethodVariant::M2, a));
        let agg = aggregate_seeds(&reports).unwrap();
        assert_eq!(agg.accuracy_mean_pct, 2.0);
        assert_eq!(agg.accuracy_std_pct, 1.0);

        let one = aggregate_seeds(&reports[..1]).unwrap();
        assert_eq!(one.accuracy_std_pct, 0.0);

        let copies = vec![reports[1].clone(); 4];
        assert_eq!(aggregate_seeds(&copies).unwrap(), reports[1]);

        let mixed = [report(MethodVariant::M1, 1.0), report(MethodVariant::M3, 1.0)];
        assert_eq!(
            aggregate_seeds(&mixed),
            Err(AggregateError::VariantMismatch { expected: MethodVariant::M1, found: MethodVariant::M3 })
        );
        assert_eq!(aggregate_seeds(&[]), Err(AggregateError::Empty));
    }

    #[test]
    fn improvement_convention() {
        assert!((relative_improvement_pct(79.64, 89.1) - 11.88).abs() < 0.005);
        assert!((relative_improvement_pct(79.64, 90.5) - 13.64).abs() < 0.005);
        assert_eq!(relative_improvement_pct(50.0, 50.0), 0.0);
    }
}
