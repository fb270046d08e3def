//! Brute-force classification metrics written directly from their
//! definitions, independent of the library's confusion matrix.

pub struct BruteMetrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub weighted_f1: f64,
}

fn f1_for(labels: &[usize], preds: &[usize], class: usize) -> f64 {
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut fn_ = 0.0;
    for i in 0..labels.len() {
        let is_true = labels[i] == class;
        let is_pred = preds[i] == class;
        if is_true && is_pred {
            tp += 1.0;
        } else if is_pred {
            fp += 1.0;
        } else if is_true {
            fn_ += 1.0;
        }
    }
    let denom = 2.0 * tp + fp + fn_;
    if denom == 0.0 {
        0.0
    } else {
        2.0 * tp / denom
    }
}

pub fn brute_metrics(labels: &[usize], preds: &[usize], classes: usize) -> BruteMetrics {
    let n = labels.len() as f64;
    let correct = labels.iter().zip(preds).filter(|(a, b)| a == b).count() as f64;
    let mut present = Vec::new();
    let mut weighted = 0.0;
    for c in 0..classes {
        let support = labels.iter().filter(|&&l| l == c).count();
        if support > 0 {
            let f1 = f1_for(labels, preds, c);
            present.push(f1);
            weighted += f1 * support as f64;
        }
    }
    BruteMetrics {
        accuracy: correct / n,
        macro_f1: present.iter().sum::<f64>() / present.len() as f64,
        weighted_f1: weighted / n,
    }
}
