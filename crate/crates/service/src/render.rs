//! Plain-text and markdown renderings for the terminal.

use std::fmt::Write;

use scenescout_core::exploration::DirectionOption;
use scenescout_core::geo::PointKind;
use scenescout_core::preview::{PreviewResult, PreviewSegment, SegmentStatus};

pub const DIRECTIONS_HEADING: &str = "Which Direction Would You Like to Explore Next?";
pub const SUGGESTED_LABEL: &str = "(Suggested direction)";

fn cell(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .replace('|', "\\|")
}

fn kind_label(k: PointKind) -> &'static str {
    match k {
        PointKind::MidBlock => "mid-block",
        PointKind::Intersection => "intersection",
        PointKind::Destination => "destination",
    }
}

fn segment_label(s: &PreviewSegment) -> String {
    format!(
        "{} ({}, {:.0} m)",
        s.index + 1,
        kind_label(s.sample.kind),
        s.sample.distance_from_start
    )
}

/// A segment table with Short, Medium and Long columns, then the destination
/// sections.
pub fn preview_markdown(r: &PreviewResult) -> String {
    let name = &r.request.destination_name;
    let mut out = format!("# Route to {name}\n\n");
    out.push_str("| Segment | Short | Medium | Long |\n|---|---|---|---|\n");
    for s in &r.segments {
        let label = segment_label(s);
        match (&s.status, &s.triple) {
            (SegmentStatus::Described, Some(t)) => {
                let _ = writeln!(
                    out,
                    "| {label} | {} | {} | {} |",
                    cell(&t.short),
                    cell(&t.medium),
                    cell(&t.long)
                );
            }
            _ => {
                let why = match s.status {
                    SegmentStatus::ImageryUnavailable => "No street-level imagery here.".to_string(),
                    _ => format!(
                        "Description unavailable: {}",
                        s.error.as_deref().unwrap_or("unknown error")
                    ),
                };
                let why = cell(&why);
                let _ = writeln!(out, "| {label} | {why} | {why} | {why} |");
            }
        }
    }
    let _ = write!(out, "\n## Destination: {name}\n");
    match &r.destination.detail {
        Some(d) => {
            for (heading, body) in [
                (format!("Description of Path Closer to {name}"), &d.path_summary),
                (format!("Visual Description of the {name}"), &d.place_summary),
                ("Mobility Cues".to_string(), &d.mobility_cues),
                (format!("Description of the Sidewalk Near {name}"), &d.sidewalk),
                (format!("Textual Cues Near {name}"), &d.signage_text),
            ] {
                let _ = write!(out, "\n### {heading}\n\n{}\n", body.trim());
            }
        }
        None => {
            let _ = write!(
                out,
                "\nDestination description unavailable: {}\n",
                r.destination.error.as_deref().unwrap_or("unknown error")
            );
        }
    }
    out
}

/// Numbered direction list with the suggested option marked.
pub fn directions_text(options: &[DirectionOption]) -> String {
    let mut out = format!("{DIRECTIONS_HEADING}\n");
    for o in options {
        let mark = if o.suggested {
            format!(" {SUGGESTED_LABEL}")
        } else {
            String::new()
        };
        let back = if o.previously_traveled {
            " (previously traveled)"
        } else {
            ""
        };
        let _ = writeln!(
            out,
            "{}. Heading {} on {}{back}{mark}\n   {}",
            o.idx,
            o.cardinal,
            o.street_name,
            o.description.body.trim()
        );
    }
    out
}
