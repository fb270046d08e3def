use std::fmt::Write;

use essaycbm::inference::{GradingResult, InterventionResult};
use essaycbm::train::EvalReport;

pub fn report(r: &EvalReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "model kind     {}", r.model_kind);
    let _ = writeln!(s, "samples        {}", r.samples);
    let _ = writeln!(s, "accuracy       {:.4}", r.grade_accuracy);
    let _ = writeln!(s, "macro-F1       {:.4}", r.grade_macro_f1);
    let _ = writeln!(s, "weighted-F1    {:.4}", r.grade_weighted_f1);
    if !r.concept_accuracy.is_empty() {
        let _ = writeln!(s, "\n{:<28} {:>8} {:>8}", "concept", "acc", "macro-F1");
        for ((name, acc), f1) in r.concept_names.iter().zip(&r.concept_accuracy).zip(&r.concept_macro_f1) {
            let _ = writeln!(s, "{name:<28} {acc:>8.4} {f1:>8.4}");
        }
    }
    let _ = writeln!(s, "\ngrade confusion (rows = true, columns = predicted)");
    for row in &r.grade_confusion.0 {
        let cells: Vec<String> = row.iter().map(|c| format!("{c:>5}")).collect();
        let _ = writeln!(s, "{}", cells.join(""));
    }
    s
}

pub fn grading(r: &GradingResult) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "essay {}  model {}", &r.essay_id[..12], r.model_id);
    let _ = writeln!(s, "{:>2} {:<28} {:>5} {:>10}", "#", "concept", "score", "confidence");
    for c in &r.concepts {
        let _ = writeln!(s, "{:>2} {:<28} {:>5} {:>10.3}", c.index, c.name, c.score, c.confidence);
    }
    let _ = writeln!(s, "grade {} (p = {:.3})", r.grade, r.grade_probs[r.grade as usize]);
    s
}

pub fn intervention(base: &GradingResult, out: &InterventionResult) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:>2} {:<28} {:>9} {:>9}", "#", "concept", "predicted", "effective");
    for c in &base.concepts {
        let eff = out.effective_concepts.get(c.index - 1);
        let mark = if eff != c.score { " *" } else { "" };
        let _ = writeln!(s, "{:>2} {:<28} {:>9} {:>9}{mark}", c.index, c.name, c.score, eff);
    }
    let _ = writeln!(s, "grade {} -> {}", base.grade, out.grade);
    s
}
