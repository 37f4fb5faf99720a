use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use super::{arc_width, Constraint, ElementKind, KeyEvent, RuleDiagnostic};

/// Ranges narrower than this many degrees are warned about.
pub const NARROW_RANGE_DEG: f64 = 5.0;
/// Inter-state thresholds above this many seconds are warned about.
pub const LONG_INTERVAL_S: f64 = 10.0;

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

pub fn has_errors(diags: &[RuleDiagnostic]) -> bool {
    diags.iter().any(RuleDiagnostic::is_error)
}

/// Checks every structural invariant of a key event.
///
/// Returns an empty list for a clean event. Warnings flag legal but
/// suspicious settings (very narrow direction ranges, very long intervals).
pub fn validate_event(ev: &KeyEvent) -> Vec<RuleDiagnostic> {
    let mut out = Vec::new();
    let root = ev.event_id.as_str();

    if !is_identifier(&ev.event_id) {
        out.push(RuleDiagnostic::error(root, format!("event id `{}` is not an identifier", ev.event_id)));
    }
    if ev.action_label.is_empty() {
        out.push(RuleDiagnostic::error(root, "action label is empty"));
    }
    if ev.states.is_empty() {
        out.push(RuleDiagnostic::error(root, "event has no states"));
    }
    let expected = ev.states.len().saturating_sub(1);
    if ev.intervals.len() != expected {
        out.push(RuleDiagnostic::error(root, format!("expected {expected} intervals, found {}", ev.intervals.len())));
    }
    for (k, &thr) in ev.intervals.iter().enumerate() {
        let loc = format!("{root}/interval[{k}]");
        if !(thr.is_finite() && thr > 0.0) {
            out.push(RuleDiagnostic::error(loc, format!("threshold must be finite and positive (got {thr})")));
        } else if thr > LONG_INTERVAL_S {
            out.push(RuleDiagnostic::warning(loc, format!("threshold {thr} s is unusually long")));
        }
    }

    // kind of every variable across states, keyed by name
    let mut seen: BTreeMap<&str, (&ElementKind, &str)> = BTreeMap::new();

    for (si, st) in ev.states.iter().enumerate() {
        let sloc = format!("{root}/{}", st.name);
        if !is_identifier(&st.name) {
            out.push(RuleDiagnostic::error(sloc.clone(), format!("state name `{}` is not an identifier", st.name)));
        }
        if ev.states[..si].iter().any(|o| o.name == st.name) {
            out.push(RuleDiagnostic::error(sloc.clone(), format!("duplicate state name `{}`", st.name)));
        }
        if st.elements.is_empty() {
            out.push(RuleDiagnostic::error(sloc.clone(), "state declares no elements"));
        }

        for (di, d) in st.elements.iter().enumerate() {
            let dloc = format!("{sloc}/{}", d.var);
            if !is_identifier(&d.var) {
                out.push(RuleDiagnostic::error(dloc.clone(), format!("variable `{}` is not an identifier", d.var)));
            }
            if st.elements[..di].iter().any(|o| o.var == d.var) {
                out.push(RuleDiagnostic::error(dloc.clone(), format!("variable `{}` declared twice", d.var)));
            }
            match &d.kind {
                ElementKind::Object { class } if class.is_empty() => {
                    out.push(RuleDiagnostic::error(dloc.clone(), "object class is empty"));
                }
                ElementKind::BodyPart { owner, .. }
                    if !matches!(st.decl(owner).map(|o| &o.kind), Some(ElementKind::Person)) =>
                {
                    out.push(RuleDiagnostic::error(
                        dloc.clone(),
                        format!("owner `{owner}` of `{}` is not a person of this state", d.var),
                    ));
                }
                ElementKind::BodyPart { part, owner } => {
                    let twin = st.elements[..di].iter().find(|o| {
                        matches!(&o.kind, ElementKind::BodyPart { part: p, owner: w } if p.keypoint() == part.keypoint() && w == owner)
                    });
                    if let Some(t) = twin {
                        out.push(RuleDiagnostic::warning(
                            dloc.clone(),
                            format!("`{}` and `{}` are the same body part of `{owner}`; the state can never match", t.var, d.var),
                        ));
                    }
                }
                _ => {}
            }
            match seen.get(d.var.as_str()) {
                Some((kind, first)) if *kind != &d.kind => out.push(RuleDiagnostic::error(
                    dloc,
                    format!("`{}` is declared differently in state `{first}`", d.var),
                )),
                Some(_) => {}
                None => {
                    seen.insert(&d.var, (&d.kind, &st.name));
                }
            }
        }

        for (ci, c) in st.constraints.iter().enumerate() {
            let cloc = format!("{sloc}/constraint[{ci}]");
            for v in c.vars() {
                if st.decl(v).is_none() {
                    out.push(RuleDiagnostic::error(cloc.clone(), format!("undeclared variable `{v}`")));
                }
            }
            match c {
                Constraint::Direction { anchor, target, deg_min, deg_max } => {
                    if anchor == target {
                        out.push(RuleDiagnostic::error(cloc.clone(), "direction anchor and target are the same element"));
                    }
                    let mut bad = false;
                    for (name, v) in [("deg_min", *deg_min), ("deg_max", *deg_max)] {
                        if !(v.is_finite() && (0.0..360.0).contains(&v)) {
                            bad = true;
                            out.push(RuleDiagnostic::error(cloc.clone(), format!("{name} must lie in [0, 360) (got {v})")));
                        }
                    }
                    if !bad {
                        let w = arc_width(*deg_min, *deg_max);
                        if w < NARROW_RANGE_DEG {
                            out.push(RuleDiagnostic::warning(cloc, format!("direction range is only {w} degrees wide")));
                        }
                    }
                }
                Constraint::Contact { a, b, iou_min } => {
                    if let Some(t) = iou_min {
                        if !(0.0..=1.0).contains(t) {
                            out.push(RuleDiagnostic::error(cloc.clone(), format!("iou threshold must lie in [0, 1] (got {t})")));
                        }
                    }
                    if a == b {
                        out.push(RuleDiagnostic::warning(cloc, "contact of an element with itself always holds"));
                    }
                }
                Constraint::DistanceOrder { lesser, greater } => {
                    let same = (lesser.0 == greater.0 && lesser.1 == greater.1)
                        || (lesser.0 == greater.1 && lesser.1 == greater.0);
                    if same {
                        out.push(RuleDiagnostic::error(cloc.clone(), "distance order compares a pair with itself"));
                    }
                    if lesser.0 == lesser.1 || greater.0 == greater.1 {
                        out.push(RuleDiagnostic::warning(cloc, "distance pair joins an element to itself"));
                    }
                }
            }
        }
    }
    out
}
