//! Human-readable summaries of sweep reports.

use std::fmt::Write;

use crate::sweep::SweepReport;

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into())
}

pub fn render(report: &SweepReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>4} {:>5} {:>5} {:>4} {:<20} {:<14} {:>6} {:>10} {:>10} {:>10} {:>6} {:>10}",
        "cell", "n", "delta", "k", "protocol", "adversary", "runs", "median", "p95", "predictor", "viol", "ratio"
    );
    let fit_of = |c: &crate::sweep::CellResult| {
        report
            .fits
            .iter()
            .find(|f| f.protocol == c.params.protocol && f.adversary == c.params.adversary)
            .and_then(|f| f.fit)
    };
    for c in &report.cells {
        let p = &c.params;
        let ratio = match (fit_of(c), c.predictor, c.median) {
            (Some(f), Some(x), Some(y)) => Some(y / (f.constant * x)),
            _ => None,
        };
        let opt = |v: Option<String>| v.unwrap_or_else(|| "-".into());
        let _ = writeln!(
            out,
            "{:>4} {:>5} {:>5} {:>4} {:<20} {:<14} {:>6} {:>10} {:>10} {:>10} {:>6} {:>10}",
            c.id,
            opt(p.n.map(|v| v.to_string())),
            opt(p.delta.map(|v| v.to_string())),
            opt(p.k.map(|v| v.to_string())),
            p.protocol.as_str(),
            p.adversary.to_string(),
            c.runs,
            cell(c.median),
            cell(c.p95),
            cell(c.predictor),
            c.violations,
            cell(ratio),
        );
    }
    for f in &report.fits {
        let _ = write!(out, "fit {} / {}:", f.protocol, f.adversary);
        match f.fit {
            Some(fit) => {
                let _ = write!(
                    out,
                    " C={:.4} R2={:.4} ratio range [{:.3}, {:.3}]",
                    fit.constant, fit.r_squared, fit.min_ratio, fit.max_ratio
                );
            }
            None => out.push_str(" no predictor"),
        }
        if let Some(ll) = f.loglog {
            let _ = write!(out, " log-log slope {:.3}", ll.slope);
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sweep::{run_sweep, SweepConfig};

    #[test]
    fn renders_every_cell_and_fit() {
        let cfg: SweepConfig = serde_json::from_str(
            r#"{"family":"spread","n":[4,6],"protocols":["centralized-spread"],"metric":"average-progress",
                "predictor":"delta-prime","max_rounds":100,"seeds":[1]}"#,
        )
        .unwrap();
        let text = render(&run_sweep(&cfg).unwrap());
        assert_eq!(text.lines().count(), 4);
        assert!(text.contains("fit centralized-spread / full"));
    }
}
