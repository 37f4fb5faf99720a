use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::{self, Write};

use super::{validate_event, Constraint, ElementKind, KeyEvent, RuleDiagnostic};

fn write_str_lit(out: &mut impl Write, s: &str) -> fmt::Result {
    out.write_char('"')?;
    for c in s.chars() {
        match c {
            '"' => out.write_str("\\\"")?,
            '\\' => out.write_str("\\\\")?,
            '\n' => out.write_str("\\n")?,
            '\t' => out.write_str("\\t")?,
            c => out.write_char(c)?,
        }
    }
    out.write_char('"')
}

/// Writes one event in canonical layout: two-space indentation, one
/// declaration or constraint per line, numbers in shortest round-trip form.
pub fn write_event(out: &mut impl Write, ev: &KeyEvent) -> fmt::Result {
    writeln!(out, "event {} {{", ev.event_id)?;
    out.write_str("  action ")?;
    write_str_lit(out, &ev.action_label)?;
    out.write_char('\n')?;
    for st in &ev.states {
        writeln!(out, "  state {} {{", st.name)?;
        for d in &st.elements {
            match &d.kind {
                ElementKind::Person => writeln!(out, "    person {}", d.var)?,
                ElementKind::Object { class } => {
                    out.write_str("    object ")?;
                    write_str_lit(out, class)?;
                    writeln!(out, " {}", d.var)?;
                }
                ElementKind::BodyPart { part, owner } => writeln!(out, "    part {part} {} of {owner}", d.var)?,
            }
        }
        for c in &st.constraints {
            match c {
                Constraint::Direction { anchor, target, deg_min, deg_max } => {
                    writeln!(out, "    dir({anchor} -> {target}) in [{deg_min} deg, {deg_max} deg]")?
                }
                Constraint::Contact { a, b, iou_min: None } => writeln!(out, "    contact({a}, {b})")?,
                Constraint::Contact { a, b, iou_min: Some(t) } => writeln!(out, "    contact({a}, {b}, iou {t})")?,
                Constraint::DistanceOrder { lesser, greater } => {
                    writeln!(out, "    closer({}, {}; {}, {})", lesser.0, lesser.1, greater.0, greater.1)?
                }
            }
        }
        out.write_str("  }\n")?;
    }
    for (k, thr) in ev.intervals.iter().enumerate() {
        writeln!(out, "  interval {} -> {} max {thr} s", ev.states[k].name, ev.states[k + 1].name)?;
    }
    out.write_str("}\n")
}

/// Renders events as rule source. Events carrying error diagnostics are rejected.
pub fn serialize_events(events: &[KeyEvent]) -> Result<String, Vec<RuleDiagnostic>> {
    let errors: Vec<RuleDiagnostic> = events.iter().flat_map(validate_event).filter(|d| d.is_error()).collect();
    if !errors.is_empty() {
        return Err(errors);
    }
    let mut out = String::new();
    for (i, ev) in events.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        write_event(&mut out, ev).expect("writing to a String cannot fail");
    }
    Ok(out)
}
