//! Prompt templates, builders, response parsers and the ask-and-parse loop.

mod ask;
mod parse;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::Cardinal;
use crate::providers::Place;

pub use ask::{ask, AskError, Asked};
pub use parse::{
    parse_choice, parse_destination, parse_direction, parse_keywords, parse_place_type,
    parse_triple, DescriptionTriple, DestinationDetail, DirectionChoice, ParseError,
    ParseErrorKind,
};

/// Bumped whenever a template's wording changes.
pub const TEMPLATE_VERSION: &str = "v1";

pub const DESCRIPTION_TEMPERATURE: f64 = 0.2;
pub const SELECTOR_TEMPERATURE: f64 = 0.0;

/// Sentences kept from a direction description.
pub const MAX_DIRECTION_SENTENCES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    Segment,
    Intersection,
    Destination,
    Direction,
    Selector,
    ExplorationBlock,
    Keywords,
    PlaceType,
}

impl TemplateId {
    pub const ALL: [TemplateId; 8] = [
        TemplateId::Segment,
        TemplateId::Intersection,
        TemplateId::Destination,
        TemplateId::Direction,
        TemplateId::Selector,
        TemplateId::ExplorationBlock,
        TemplateId::Keywords,
        TemplateId::PlaceType,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::Segment => "segment",
            TemplateId::Intersection => "intersection",
            TemplateId::Destination => "destination",
            TemplateId::Direction => "direction",
            TemplateId::Selector => "selector",
            TemplateId::ExplorationBlock => "exploration_block",
            TemplateId::Keywords => "keywords",
            TemplateId::PlaceType => "place_type",
        }
    }

    /// Raw template text, with `{{`/`}}` escapes and `{name}` slots.
    pub fn source(self) -> &'static str {
        match self {
            TemplateId::Segment => include_str!("../../templates/segment.txt"),
            TemplateId::Intersection => include_str!("../../templates/intersection.txt"),
            TemplateId::Destination => include_str!("../../templates/destination.txt"),
            TemplateId::Direction => include_str!("../../templates/direction.txt"),
            TemplateId::Selector => include_str!("../../templates/selector.txt"),
            TemplateId::ExplorationBlock => include_str!("../../templates/exploration_block.txt"),
            TemplateId::Keywords => include_str!("../../templates/keywords.txt"),
            TemplateId::PlaceType => include_str!("../../templates/place_type.txt"),
        }
    }

    /// Temperature used when the template is sent to the model.
    pub fn temperature(self) -> f64 {
        match self {
            TemplateId::Selector => SELECTOR_TEMPERATURE,
            _ => DESCRIPTION_TEMPERATURE,
        }
    }
}

impl std::fmt::Display for TemplateId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PromptError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("template {template} has no value for {{{name}}}")]
    Unbound { template: TemplateId, name: String },
    #[error("template {template} is malformed near byte {at}")]
    Malformed { template: TemplateId, at: usize },
}

/// A rendered prompt, ready to send.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub template: TemplateId,
    pub text: String,
}

/// Placeholder names in order of appearance.
pub fn placeholders(template: TemplateId) -> Vec<String> {
    let mut names = Vec::new();
    let _ = walk(template, |piece| {
        if let Piece::Slot(name) = piece {
            names.push(name.to_string());
        }
        Ok(())
    });
    names
}

enum Piece<'a> {
    Literal(&'a str),
    Slot(&'a str),
}

fn walk<'a>(
    template: TemplateId,
    mut visit: impl FnMut(Piece<'a>) -> Result<(), PromptError>,
) -> Result<(), PromptError> {
    let src = template.source();
    let bytes = src.as_bytes();
    let mut i = 0;
    let mut lit_start = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'{' if bytes.get(i + 1) == Some(&b'{') => {
                visit(Piece::Literal(&src[lit_start..i + 1]))?;
                i += 2;
                lit_start = i;
            }
            b'}' if bytes.get(i + 1) == Some(&b'}') => {
                visit(Piece::Literal(&src[lit_start..i + 1]))?;
                i += 2;
                lit_start = i;
            }
            b'{' => {
                let close = src[i..]
                    .find('}')
                    .ok_or(PromptError::Malformed { template, at: i })?;
                visit(Piece::Literal(&src[lit_start..i]))?;
                visit(Piece::Slot(&src[i + 1..i + close]))?;
                i += close + 1;
                lit_start = i;
            }
            b'}' => return Err(PromptError::Malformed { template, at: i }),
            _ => i += 1,
        }
    }
    visit(Piece::Literal(&src[lit_start..]))
}

/// Renders with format-string semantics: `{{` and `}}` become literal braces
/// and `{name}` is replaced by its value. Values are inserted as-is, so braces
/// inside them are never re-expanded.
pub fn render(template: TemplateId, values: &[(&str, &str)]) -> Result<Prompt, PromptError> {
    let mut text = String::with_capacity(template.source().len() + 256);
    walk(template, |piece| {
        match piece {
            Piece::Literal(s) => text.push_str(s),
            Piece::Slot(name) => {
                let value = values
                    .iter()
                    .find(|(k, _)| *k == name)
                    .map(|(_, v)| *v)
                    .ok_or_else(|| PromptError::Unbound {
                        template,
                        name: name.to_string(),
                    })?;
                text.push_str(value);
            }
        }
        Ok(())
    })?;
    Ok(Prompt { template, text })
}

/// Case-insensitively unique keywords in insertion order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct KeywordSet(Vec<String>);

impl KeywordSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a trimmed keyword unless it is empty or already present in any
    /// letter case. Returns whether it was added.
    pub fn insert(&mut self, keyword: &str) -> bool {
        let k = keyword.trim();
        if k.is_empty() || self.contains(k) {
            return false;
        }
        self.0.push(k.to_string());
        true
    }

    pub fn extend<I, S>(&mut self, keywords: I) -> usize
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        keywords
            .into_iter()
            .filter(|k| self.insert(k.as_ref()))
            .count()
    }

    pub fn contains(&self, keyword: &str) -> bool {
        let k = keyword.trim().to_lowercase();
        self.0.iter().any(|e| e.to_lowercase() == k)
    }

    pub fn as_slice(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<String>> for KeywordSet {
    fn from(v: Vec<String>) -> Self {
        let mut set = KeywordSet::new();
        set.extend(v);
        set
    }
}

impl From<KeywordSet> for Vec<String> {
    fn from(k: KeywordSet) -> Self {
        k.0
    }
}

/// Runtime context substituted into the description templates.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentContext {
    pub prev_description: Option<String>,
    pub nearby_places: Vec<Place>,
    pub intent: Option<String>,
    pub keywords: KeywordSet,
    pub current_heading: Cardinal,
}

impl AgentContext {
    pub fn new(current_heading: Cardinal) -> Self {
        Self {
            prev_description: None,
            nearby_places: Vec::new(),
            intent: None,
            keywords: KeywordSet::new(),
            current_heading,
        }
    }
}

const NONE: &str = "None";

fn or_none(s: Option<&str>) -> &str {
    match s.map(str::trim) {
        Some(t) if !t.is_empty() => t,
        _ => NONE,
    }
}

/// One place per line: `Name (category), 42 meters north`. Empty → `None`.
pub fn render_places(places: &[Place]) -> String {
    if places.is_empty() {
        return NONE.to_string();
    }
    let mut out = String::new();
    for (i, p) in places.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = write!(
            out,
            "{} ({}), {} meters {}",
            p.name,
            p.category,
            p.distance_m.round() as i64,
            p.relative_direction.label().to_lowercase()
        );
    }
    out
}

pub fn build_segment_prompt(ctx: &AgentContext) -> Result<Prompt, PromptError> {
    let places = render_places(&ctx.nearby_places);
    render(
        TemplateId::Segment,
        &[
            ("prev_description", or_none(ctx.prev_description.as_deref())),
            ("nearby_places", &places),
        ],
    )
}

pub fn build_intersection_prompt(ctx: &AgentContext) -> Result<Prompt, PromptError> {
    let places = render_places(&ctx.nearby_places);
    render(TemplateId::Intersection, &[("nearby_places", &places)])
}

pub fn build_destination_prompt(context: &str, place_name: &str) -> Result<Prompt, PromptError> {
    if place_name.trim().is_empty() {
        return Err(PromptError::InvalidArgument(
            "destination place name is empty".to_string(),
        ));
    }
    render(
        TemplateId::Destination,
        &[("context", context), ("place_name", place_name)],
    )
}

pub fn build_direction_prompt(
    intent: &str,
    street_name: &str,
    new_heading: Cardinal,
    curr_heading: Cardinal,
    place_type: Option<&str>,
) -> Result<Prompt, PromptError> {
    let place_type = match place_type.map(str::trim) {
        Some(p) if !p.is_empty() => p,
        _ => "unspecified",
    };
    render(
        TemplateId::Direction,
        &[
            ("intention", intent),
            ("street_name", street_name),
            ("new_heading", new_heading.label()),
            ("curr_heading", curr_heading.label()),
            ("place_type", place_type),
        ],
    )
}

/// A candidate road offered to the selector, by 1-based option index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoadCandidate {
    pub idx: usize,
    pub description: String,
}

pub fn build_selector_prompt(
    intent: &str,
    roads: &[RoadCandidate],
    from_road_idx: Option<usize>,
) -> Result<Prompt, PromptError> {
    if roads.len() < 2 {
        return Err(PromptError::InvalidArgument(format!(
            "selector needs at least 2 candidate roads, got {}",
            roads.len()
        )));
    }
    let listing = roads
        .iter()
        .map(|r| format!("{}: {}", r.idx, r.description.trim()))
        .collect::<Vec<_>>()
        .join("\n");
    let from = from_road_idx.map_or_else(|| NONE.to_string(), |i| i.to_string());
    render(
        TemplateId::Selector,
        &[
            ("intention", intent),
            ("road_descriptions", &listing),
            ("from_road_idx", &from),
        ],
    )
}

pub fn build_exploration_block_prompt(
    ctx: &AgentContext,
    place_type: &str,
) -> Result<Prompt, PromptError> {
    let intent = match ctx.intent.as_deref().map(str::trim) {
        Some(i) if !i.is_empty() => i,
        _ => {
            return Err(PromptError::InvalidArgument(
                "exploration prompt needs an intent".to_string(),
            ))
        }
    };
    let labels = if ctx.keywords.is_empty() {
        NONE.to_string()
    } else {
        ctx.keywords.as_slice().join(", ")
    };
    let places = render_places(&ctx.nearby_places);
    render(
        TemplateId::ExplorationBlock,
        &[
            ("intention", intent),
            ("place_type", or_none(Some(place_type))),
            ("cared_secondary_categories", &labels),
            ("nearby_places", &places),
            ("prev_description", or_none(ctx.prev_description.as_deref())),
        ],
    )
}

pub fn build_keywords_prompt(intent: &str) -> Result<Prompt, PromptError> {
    if intent.trim().is_empty() {
        return Err(PromptError::InvalidArgument("intent is empty".to_string()));
    }
    render(TemplateId::Keywords, &[("intention", intent.trim())])
}

pub fn build_place_type_prompt(intent: &str) -> Result<Prompt, PromptError> {
    if intent.trim().is_empty() {
        return Err(PromptError::InvalidArgument("intent is empty".to_string()));
    }
    render(TemplateId::PlaceType, &[("intention", intent.trim())])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::GeoCoordinate;

    fn place(name: &str, category: &str, d: f64, dir: Cardinal) -> Place {
        Place {
            name: name.into(),
            category: category.into(),
            coord: GeoCoordinate::new(0.0, 0.0).unwrap(),
            distance_m: d,
            relative_direction: dir,
        }
    }

    #[test]
    fn every_template_renders_without_leftover_slots() {
        for t in TemplateId::ALL {
            let names = placeholders(t);
            let values: Vec<(&str, &str)> = names.iter().map(|n| (n.as_str(), "X")).collect();
            let p = render(t, &values).unwrap();
            for n in &names {
                assert!(!p.text.contains(&format!("{{{n}}}")), "{t}: {n}");
            }
            assert!(!p.text.contains("{{"), "{t}");
        }
    }

    #[test]
    fn unbound_slot_is_an_error() {
        assert!(matches!(
            render(TemplateId::Intersection, &[]),
            Err(PromptError::Unbound { .. })
        ));
    }

    #[test]
    fn values_are_not_reexpanded() {
        let p = render(TemplateId::Intersection, &[("nearby_places", "{prev_description} {{x}}")]).unwrap();
        assert!(p.text.contains("Nearby Places: {prev_description} {{x}}"));
    }

    #[test]
    fn places_render_one_per_line() {
        let s = render_places(&[
            place("Whole Foods", "supermarket", 42.4, Cardinal::Northeast),
            place("Bus 62", "bus stop", 68.0, Cardinal::North),
        ]);
        assert_eq!(s, "Whole Foods (supermarket), 42 meters northeast\nBus 62 (bus stop), 68 meters north");
        assert_eq!(render_places(&[]), "None");
    }

    #[test]
    fn segment_prev_and_none() {
        let mut ctx = AgentContext::new(Cardinal::North);
        let p = build_segment_prompt(&ctx).unwrap();
        assert!(p.text.contains("Previous Description: None\nNearby Places: None\n"));
        ctx.prev_description = Some("A mural on the left wall.".into());
        let p = build_segment_prompt(&ctx).unwrap();
        assert!(p.text.contains("Previous Description: A mural on the left wall.\n"));
        assert!(p.text.contains("\"long_description\":   <longer description"));
    }

    #[test]
    fn destination_requires_name() {
        assert!(build_destination_prompt("ctx", " ").is_err());
        let p = build_destination_prompt("", "bus stop").unwrap();
        assert!(p.text.contains("Context: \nPlace: bus stop\n"));
    }

    #[test]
    fn selector_needs_two_roads() {
        let one = [RoadCandidate { idx: 1, description: "a".into() }];
        assert!(matches!(
            build_selector_prompt("x", &one, Some(2)),
            Err(PromptError::InvalidArgument(_))
        ));
        let two = [
            RoadCandidate { idx: 2, description: "Leads to residential area".into() },
            RoadCandidate { idx: 3, description: "Leads to a shopping district".into() },
        ];
        let p = build_selector_prompt("find a grocery store", &two, Some(1)).unwrap();
        assert!(p.text.contains("Road Descriptions: 2: Leads to residential area\n3: Leads to a shopping district\n"));
        assert!(p.text.contains("Previously Traveled Road: Road 1\n"));
    }

    #[test]
    fn exploration_block_needs_intent() {
        let ctx = AgentContext::new(Cardinal::East);
        assert!(build_exploration_block_prompt(&ctx, "cafe").is_err());
    }

    #[test]
    fn keyword_set_dedupes_case_insensitively() {
        let mut k = KeywordSet::from(vec!["Parks".to_string(), "parks".to_string()]);
        assert_eq!(k.len(), 1);
        assert_eq!(k.extend(["PARKS", " schools ", ""]), 1);
        assert_eq!(k.as_slice(), ["Parks", "schools"]);
    }
}
