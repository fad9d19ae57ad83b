//! Classification metrics. Counters are kept as exact integers; MCA/MPCA
//! are exposed both as exact rationals and as derived f64 percentages, so
//! the trace/total and mean-recall identities can be checked without
//! floating-point slack.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::Serialize;

/// Evaluation outcome: the confusion matrix plus independently tracked
/// correctness counters (fused, per path, individual actions).
#[derive(Debug, Clone, Serialize)]
pub struct MetricReport {
    /// `confusion[true_class][predicted_class]` counts.
    pub confusion: Vec<Vec<u64>>,
    /// Episodes evaluated.
    pub total: u64,
    /// Fused-prediction correct count, tracked separately from the matrix.
    pub correct: u64,
    pub st_correct: Option<u64>,
    pub ts_correct: Option<u64>,
    pub indiv_correct: u64,
    pub indiv_total: u64,
}

impl MetricReport {
    pub fn new(classes: usize) -> Self {
        Self {
            confusion: vec![vec![0; classes]; classes],
            total: 0,
            correct: 0,
            st_correct: None,
            ts_correct: None,
            indiv_correct: 0,
            indiv_total: 0,
        }
    }

    pub fn classes(&self) -> usize {
        self.confusion.len()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|i| self.confusion[i][i]).sum()
    }

    /// Support (row sum) of one true class.
    pub fn support(&self, class: usize) -> u64 {
        self.confusion[class].iter().sum()
    }

    /// Multi-class accuracy as an exact rational percentage:
    /// `100 · trace / total`.
    pub fn mca_ratio(&self) -> BigRational {
        if self.total == 0 {
            return BigRational::zero();
        }
        BigRational::new(BigInt::from(100u32) * BigInt::from(self.trace()), BigInt::from(self.total))
    }

    /// Mean per-class accuracy as an exact rational percentage: the mean of
    /// `100 · diagonal / row sum` over classes with non-zero support.
    pub fn mpca_ratio(&self) -> BigRational {
        let mut sum = BigRational::zero();
        let mut populated = 0u64;
        for i in 0..self.classes() {
            let s = self.support(i);
            if s == 0 {
                continue;
            }
            populated += 1;
            sum += BigRational::new(
                BigInt::from(100u32) * BigInt::from(self.confusion[i][i]),
                BigInt::from(s),
            );
        }
        if populated == 0 {
            return BigRational::zero();
        }
        sum / BigRational::from(BigInt::from(populated))
    }

    pub fn mca(&self) -> f64 {
        self.mca_ratio().to_f64().unwrap_or(0.0)
    }

    pub fn mpca(&self) -> f64 {
        self.mpca_ratio().to_f64().unwrap_or(0.0)
    }

    pub fn st_mca(&self) -> Option<f64> {
        self.st_correct
            .map(|c| percentage(c, self.total))
    }

    pub fn ts_mca(&self) -> Option<f64> {
        self.ts_correct
            .map(|c| percentage(c, self.total))
    }

    /// Individual-action accuracy over all actors.
    pub fn indiv_mca(&self) -> f64 {
        percentage(self.indiv_correct, self.indiv_total)
    }

    /// Render the confusion matrix as CSV with class names as the header
    /// row and first column (rows = true class).
    pub fn confusion_csv(&self, class_names: &[String]) -> String {
        let mut out = String::from("true\\pred");
        for name in class_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (i, row) in self.confusion.iter().enumerate() {
            out.push_str(&class_names[i]);
            for v in row {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }
}

pub(crate) fn percentage(count: u64, total: u64) -> f64 {
    if total == 0 {
        return 0.0;
    }
    BigRational::new(BigInt::from(100u32) * BigInt::from(count), BigInt::from(total))
        .to_f64()
        .unwrap_or(0.0)
}
