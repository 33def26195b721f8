//! Rendering helpers and serialization of extended reals.

/// Serde adapter for `f64` values that may be infinite or NaN: finite values
/// are JSON numbers, the rest are the strings `"inf"`, `"-inf"` and `"nan"`.
pub mod ext {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(de::Error::custom(format!(
                    "invalid extended real `{other}`"
                ))),
            },
        }
    }
}

/// [`ext`] applied elementwise to a vector.
pub mod ext_vec {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Ext(#[serde(with = "super::ext")] f64);

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|&x| Ext(x)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Ok(Vec::<Ext>::deserialize(d)?
            .into_iter()
            .map(|e| e.0)
            .collect())
    }
}

use crate::boundary::{BoundaryClass, ExtendedRealVerdict};
use crate::martingale::{expected_regime, FullReport, MartingaleVerdict, SideReport};
use crate::mc::EstimateWithCI;
use crate::pipeline::{ClassifyDoc, ReportDoc, ScaleCheck, VerdictDoc, VerifyDoc};
use std::fmt::Write as _;

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6e}")
    } else if v.is_nan() {
        "-".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn integral(v: &ExtendedRealVerdict) -> String {
    if v.diverged {
        format!(
            "diverges (partial sum {} after {} cuts)",
            num(*v.partial_sums.last().unwrap_or(&f64::NAN)),
            v.partial_sums.len()
        )
    } else {
        format!("{} ({} cuts)", num(v.value), v.partial_sums.len())
    }
}

fn class_line(out: &mut String, c: &BoundaryClass) {
    let nature = c.nature.as_ref().map_or("not needed".to_string(), integral);
    let _ = writeln!(
        out,
        "  {:<5}  {:<20}  access: {}",
        c.side,
        c.kind,
        integral(&c.access)
    );
    let _ = writeln!(out, "  {:<5}  {:<20}  nature: {}", "", "", nature);
}

pub fn render_classify(doc: &ClassifyDoc) -> String {
    let mut out = format!("boundary classification for {}\n", doc.diffusion);
    class_line(&mut out, &doc.alpha);
    class_line(&mut out, &doc.beta);
    out
}

fn estimate(e: &EstimateWithCI) -> String {
    format!(
        "{} ± {} (99%, n = {})",
        num(e.mean),
        num(e.half_width),
        e.n_effective
    )
}

fn verdict_line(out: &mut String, v: &MartingaleVerdict) {
    let _ = write!(out, "  {:<15} {}", v.process, v.verdict);
    if let (Some(sup), Some(sub)) = (v.supermartingale, v.submartingale) {
        let _ = write!(out, " (supermartingale: {sup}, submartingale: {sub})");
    }
    out.push('\n');
}

pub fn render_verdicts(doc: &VerdictDoc) -> String {
    let mut out = format!("martingale verdicts for {}\n", doc.diffusion);
    for v in [&doc.alpha, &doc.beta, &doc.scale_process] {
        verdict_line(&mut out, v);
    }
    out
}

fn side_table(out: &mut String, s: &SideReport) {
    let _ = writeln!(
        out,
        "endpoint {}: {} ({})",
        s.side, s.class.kind, s.verdict.verdict
    );
    let Some(expected) = expected_regime(s.class.kind) else {
        let _ = writeln!(out, "  accessible: the limit table does not apply");
        return;
    };
    let _ = writeln!(
        out,
        "  {:<4} {:<12} {:<20} {:<14} column",
        "row", "rates", "regime", "value"
    );
    for w in &s.rows {
        let rates = match w.s {
            Some(s) => format!("{}, {}", w.r, s),
            None => format!("{}", w.r),
        };
        let mark = if w.regime == expected {
            "ok"
        } else {
            "DISCORDANT"
        };
        let _ = writeln!(
            out,
            "  {:<4} {:<12} {:<20} {:<14} {}",
            w.row,
            rates,
            w.regime,
            num(w.value),
            mark
        );
    }
    match s.concordant {
        Some(true) => {
            let _ = writeln!(out, "  all rows in the {expected} column");
        }
        Some(false) => {
            let _ = writeln!(out, "  discordant rows: {}", s.discordant_rows.join(", "));
        }
        None => {}
    }
}

pub fn render_table(doc: &FullReport) -> String {
    let rates: Vec<String> = doc.rates.iter().map(|r| r.to_string()).collect();
    let mut out = format!(
        "limit table for {} at rates {}\n",
        doc.diffusion,
        rates.join(", ")
    );
    side_table(&mut out, &doc.alpha);
    side_table(&mut out, &doc.beta);
    let _ = writeln!(out, "scale process: {}", doc.scale_process.verdict);
    out
}

pub fn render_verify(doc: &VerifyDoc) -> String {
    let sim = &doc.simulation;
    let mut out = format!(
        "{} side {} ({}), r = {}, x = {}, t = {}, dt = {}, {} paths, seed {}\n",
        doc.diffusion,
        doc.side,
        doc.direction,
        doc.r,
        sim.initial_state,
        sim.horizon,
        sim.step,
        sim.paths,
        sim.seed
    );
    let _ = writeln!(out, "  deficit   {}", estimate(&doc.deficit));
    let _ = writeln!(
        out,
        "  outcome   {} (expected {}: {})",
        doc.outcome,
        doc.expected,
        if doc.agrees { "agrees" } else { "DISAGREES" }
    );
    for w in &doc.deficit.warnings {
        let _ = writeln!(out, "  warning   {w}");
    }
    for p in &doc.profile {
        let _ = writeln!(out, "  t = {:<8} {}", p.t, estimate(&p.deficit));
    }
    if let Some(ri) = &doc.ratio_identity {
        let _ = writeln!(
            out,
            "  ratio identity at {}: lhs {} rhs {}",
            ri.side,
            num(ri.lhs),
            estimate(&ri.rhs)
        );
        let _ = writeln!(out, "  truncation bound {}", num(ri.truncation_bound));
    }
    out
}

fn scale_check(out: &mut String, s: &ScaleCheck) {
    let _ = writeln!(
        out,
        "scale process deficit {} (expected {})",
        estimate(&s.deficit),
        s.expected
    );
    if let Some(a) = s.agrees {
        let _ = writeln!(out, "  {}", if a { "agrees" } else { "DISAGREES" });
    }
}

pub fn render_report(doc: &ReportDoc) -> String {
    let mut out = render_table(&doc.table);
    out.push('\n');
    out.push_str(&render_verify(&doc.alpha));
    out.push_str(&render_verify(&doc.beta));
    scale_check(&mut out, &doc.scale_process);
    out
}
