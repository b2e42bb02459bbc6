use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerformanceMetric {
    Ccr,
    F1,
}

impl std::str::FromStr for PerformanceMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ccr" => Ok(PerformanceMetric::Ccr),
            "f1" => Ok(PerformanceMetric::F1),
            other => Err(format!("unknown metric {other:?} (expected ccr or f1)")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    /// Binary counts with `positive` as the positive class.
    pub fn tally(truth: &[u32], predicted: &[u32], positive: u32) -> Self {
        let mut c = ConfusionCounts::default();
        for (&t, &p) in truth.iter().zip(predicted) {
            match (t == positive, p == positive) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn ccr(&self) -> f64 {
        if self.total() == 0 {
            return 0.0;
        }
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    /// `tp / (tp + (fp + fn) / 2)`; zero when there are no true positives.
    pub fn f1(&self) -> f64 {
        if self.tp == 0 {
            return 0.0;
        }
        self.tp as f64 / (self.tp as f64 + 0.5 * (self.fp + self.fn_) as f64)
    }
}

/// Scores predictions. Labels within `{0, 1}` are treated as binary with
/// positive class 1; otherwise CCR is the exact-match rate and F1 is the
/// macro average of one-vs-rest F1 over every label that occurs.
pub fn score(truth: &[u32], predicted: &[u32], metric: PerformanceMetric) -> f64 {
    let binary = truth.iter().chain(predicted).all(|&l| l <= 1);
    match metric {
        PerformanceMetric::Ccr => {
            if truth.is_empty() {
                return 0.0;
            }
            let hits = truth.iter().zip(predicted).filter(|(t, p)| t == p).count();
            hits as f64 / truth.len() as f64
        }
        PerformanceMetric::F1 if binary => ConfusionCounts::tally(truth, predicted, 1).f1(),
        PerformanceMetric::F1 => {
            let mut labels: Vec<u32> = truth.iter().chain(predicted).copied().collect();
            labels.sort_unstable();
            labels.dedup();
            let sum: f64 = labels
                .iter()
                .map(|&l| ConfusionCounts::tally(truth, predicted, l).f1())
                .sum();
            sum / labels.len() as f64
        }
    }
}
