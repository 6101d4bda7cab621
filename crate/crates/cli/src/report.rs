//! Plain-text score tables.

use std::fmt::Write;

use dofp::metrics::{summarize, EvalReport, Scores};
use dofp::pipeline::REFERENCE_ROWS;
use dofp::PatternKind;

const COLUMNS: [&str; 9] = ["I0", "I45", "I90", "I135", "S0", "S1", "S2", "DoP", "AoP err"];

fn row(out: &mut String, method: &str, level: &str, cells: [String; 9]) {
    let _ = write!(out, "{method:<34} {level:<7}");
    for c in cells {
        let _ = write!(out, " {c:>9}");
    }
    out.push('\n');
}

fn cells(s: &Scores) -> [String; 9] {
    let p = s.psnrs();
    std::array::from_fn(|i| {
        if i < 8 {
            match p[i] {
                dofp::metrics::Psnr::Identical => "inf".into(),
                dofp::metrics::Psnr::Db(v) => format!("{v:.2}"),
            }
        } else {
            format!("{:.2}", s.aop_err)
        }
    })
}

/// Per-method means; published rows follow when `pattern` matches them.
pub fn scores_table(reports: &[EvalReport], pattern: Option<PatternKind>) -> String {
    let mut out = String::new();
    row(&mut out, "method", "level", COLUMNS.map(str::to_string));
    for (method, level, scores) in summarize(reports) {
        row(&mut out, &method, &level, cells(&scores));
    }
    if let Some(p) = pattern {
        let levels: Vec<&str> = reports.iter().map(|r| r.noise_level.as_str()).collect();
        for r in REFERENCE_ROWS.iter().filter(|r| r.pattern == p && levels.contains(&r.level)) {
            let mut c: [String; 9] = std::array::from_fn(|_| String::new());
            for (i, v) in r.psnr.iter().enumerate() {
                c[i] = format!("{v:.2}");
            }
            c[8] = format!("{:.2}", r.aop_err);
            row(&mut out, &format!("published: {}", r.method), r.level, c);
        }
    }
    out
}
