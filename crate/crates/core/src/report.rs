//! Rendering of evaluation results: the five result tables as aligned plain
//! text, plus machine-readable JSON and CSV exports.

use serde::{Deserialize, Serialize};

use crate::eval::{target_achievement, EvalReport, MetricBlock, SignatureFlag};
use crate::pipeline::MethodId;
use crate::schema::{FieldCategory, Schema};

pub const EVAL_FORMAT_VERSION: u32 = 1;

const UNDEFINED: &str = "—";

fn fmt_metric(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.3}"),
        None => UNDEFINED.to_string(),
    }
}

fn fmt_rate_pct(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{:.1}%", v * 100.0),
        None => UNDEFINED.to_string(),
    }
}

fn render_table(title: &str, header: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.chars().count());
        }
    }
    let render_row = |cells: &[String]| {
        cells
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{:<width$}", c, width = widths[i]))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = String::new();
    out.push_str(title);
    out.push('\n');
    out.push_str(&render_row(header));
    out.push('\n');
    out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("--"));
    out.push('\n');
    for row in rows {
        out.push_str(&render_row(row));
        out.push('\n');
    }
    out
}

fn find<'a>(reports: &'a [EvalReport], model: &str, method: MethodId) -> Option<&'a EvalReport> {
    reports.iter().find(|r| r.model == model && r.method == method)
}

fn metric_of(block: &MetricBlock, which: Metric) -> Option<f64> {
    match which {
        Metric::F1 => block.f1,
        Metric::Precision => block.precision,
        Metric::Recall => block.recall,
    }
}

#[derive(Debug, Clone, Copy)]
enum Metric {
    F1,
    Precision,
    Recall,
}

fn render_overall_table(
    title: &str,
    which: Metric,
    reports: &[EvalReport],
    model_order: &[String],
) -> String {
    let mut header = vec!["Model".to_string()];
    header.extend(MethodId::ALL.iter().map(|m| m.display_name().to_string()));
    let rows: Vec<Vec<String>> = model_order
        .iter()
        .map(|model| {
            let mut row = vec![model.clone()];
            for method in MethodId::ALL {
                let cell = find(reports, model, method)
                    .map(|r| fmt_metric(metric_of(&r.overall, which)))
                    .unwrap_or_else(|| UNDEFINED.to_string());
                row.push(cell);
            }
            row
        })
        .collect();
    render_table(title, &header, &rows)
}

fn render_category_block(
    title: &str,
    which: Metric,
    reports: &[EvalReport],
    model_order: &[String],
) -> String {
    let mut header = vec!["Model".to_string()];
    header.extend(FieldCategory::ALL.iter().map(|c| c.short_name().to_string()));
    let rows: Vec<Vec<String>> = model_order
        .iter()
        .map(|model| {
            let mut row = vec![model.clone()];
            for category in FieldCategory::ALL {
                let cell = find(reports, model, MethodId::SingleStep)
                    .and_then(|r| r.per_category.get(category.short_name()))
                    .map(|c| fmt_metric(metric_of(&c.metrics, which)))
                    .unwrap_or_else(|| UNDEFINED.to_string());
                row.push(cell);
            }
            row
        })
        .collect();
    render_table(title, &header, &rows)
}

fn render_rejection_table(reports: &[EvalReport], model_order: &[String]) -> String {
    let header: Vec<String> =
        ["Model", "Lenient", "Moderate", "Stringent", "Target Achievement"]
            .map(str::to_string)
            .to_vec();
    let mut rows = Vec::new();
    for model in model_order {
        let rate = |method: MethodId| {
            find(reports, model, method).and_then(|r| r.rejection.as_ref()).and_then(|s| s.rate)
        };
        let rates = [
            rate(MethodId::ReflectiveLenient),
            rate(MethodId::ReflectiveModerate),
            rate(MethodId::ReflectiveStringent),
        ];
        if rates.iter().all(|r| r.is_none()) {
            continue;
        }
        let achievement = match (rates[0], rates[1], rates[2]) {
            (Some(l), Some(m), Some(s)) => {
                target_achievement(l * 100.0, m * 100.0, s * 100.0)
            }
            _ => UNDEFINED.to_string(),
        };
        rows.push(vec![
            model.clone(),
            fmt_rate_pct(rates[0]),
            fmt_rate_pct(rates[1]),
            fmt_rate_pct(rates[2]),
            achievement,
        ]);
    }
    if rows.is_empty() {
        return String::new();
    }
    render_table("Validation Rejection Rates", &header, &rows)
}

fn render_signature_notes(reports: &[EvalReport]) -> String {
    let mut out = String::new();
    for report in reports {
        if report.flags.overall.is_empty() {
            continue;
        }
        let flags = report
            .flags
            .overall
            .iter()
            .map(|f| match f {
                SignatureFlag::PerfectRecall => "PERFECT_RECALL",
                SignatureFlag::OverExtraction => "OVER_EXTRACTION",
            })
            .collect::<Vec<_>>()
            .join(" + ");
        out.push_str(&format!(
            "flag: {} / {} -> {} (recall {}, precision {})\n",
            report.model,
            report.method.display_name(),
            flags,
            fmt_metric(report.overall.recall),
            fmt_metric(report.overall.precision),
        ));
    }
    out
}

/// The full plain-text report: overall F1/precision/recall tables, the
/// per-category single-step block, rejection rates, and diagnostic flags.
pub fn render_tables(reports: &[EvalReport], model_order: &[String]) -> String {
    let mut out = String::new();
    out.push_str(&render_overall_table("F1 Score Results", Metric::F1, reports, model_order));
    out.push('\n');
    out.push_str(&render_overall_table("Precision Results", Metric::Precision, reports, model_order));
    out.push('\n');
    out.push_str(&render_overall_table("Recall Results", Metric::Recall, reports, model_order));
    out.push('\n');
    out.push_str("Category-wise Performance Analysis (Single-step Extraction)\n\n");
    out.push_str(&render_category_block("(a) F1 Score", Metric::F1, reports, model_order));
    out.push('\n');
    out.push_str(&render_category_block("(b) Precision", Metric::Precision, reports, model_order));
    out.push('\n');
    out.push_str(&render_category_block("(c) Recall", Metric::Recall, reports, model_order));
    out.push('\n');
    let rejection = render_rejection_table(reports, model_order);
    if !rejection.is_empty() {
        out.push_str(&rejection);
        out.push('\n');
    }
    let notes = render_signature_notes(reports);
    if !notes.is_empty() {
        out.push_str(&notes);
    }
    out
}

/// Flat CSV rows: one per (model, method, scope) where scope is a field, a
/// category, or the overall block.
pub fn render_csv(reports: &[EvalReport], schema: &Schema) -> String {
    let mut out = String::from("model,method,scope,name,precision,recall,f1,tp,fp,fn,tn\n");
    let cell = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for report in reports {
        out.push_str(&format!(
            "{},{},overall,overall,{},{},{},{},{},{},{}\n",
            report.model,
            report.method,
            cell(report.overall.precision),
            cell(report.overall.recall),
            cell(report.overall.f1),
            report.overall_counts.tp,
            report.overall_counts.fp,
            report.overall_counts.fn_,
            report.overall_counts.tn,
        ));
        for category in FieldCategory::ALL {
            if let Some(c) = report.per_category.get(category.short_name()) {
                out.push_str(&format!(
                    "{},{},category,{},{},{},{},,,,\n",
                    report.model,
                    report.method,
                    category.short_name(),
                    cell(c.metrics.precision),
                    cell(c.metrics.recall),
                    cell(c.metrics.f1),
                ));
            }
        }
        for field in &schema.fields {
            if let Some(fe) = report.per_field.get(&field.name) {
                out.push_str(&format!(
                    "{},{},field,{},{},{},{},{},{},{},{}\n",
                    report.model,
                    report.method,
                    field.name,
                    cell(fe.metrics.precision),
                    cell(fe.metrics.recall),
                    cell(fe.metrics.f1),
                    fe.counts.tp,
                    fe.counts.fp,
                    fe.counts.fn_,
                    fe.counts.tn,
                ));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalBundle {
    pub format_version: u32,
    pub reports: Vec<EvalReport>,
}

impl EvalBundle {
    pub fn new(reports: Vec<EvalReport>) -> Self {
        EvalBundle { format_version: EVAL_FORMAT_VERSION, reports }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("eval bundle serializes");
        s.push('\n');
        s
    }
}
