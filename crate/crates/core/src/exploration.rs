//! Virtual exploration: an intent-driven walk over the panorama graph where a
//! person picks the direction at every intersection.
//!
//! Sessions are event-sourced. Every operation first computes its events from
//! the current state and only then applies them, so a failed operation leaves
//! the session untouched and [`replay`] of the history rebuilds it exactly.

use std::collections::BTreeSet;
use std::fmt;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{Cardinal, GeoCoordinate, HeadingDeg, PointKind};
use crate::preview::views_for;
use crate::prompt::{
    self, ask, build_direction_prompt, build_exploration_block_prompt, build_keywords_prompt,
    build_place_type_prompt, build_selector_prompt, parse_choice, parse_direction,
    parse_keywords, parse_place_type, parse_triple, AgentContext, DescriptionTriple, KeywordSet,
    RoadCandidate,
};
use crate::providers::{
    ImageRef, PanoId, PanoLink, PanoramaMeta, Place, ProviderError, Providers, ViewRequest,
};

pub const SCHEMA: &str = "exploration.v1";
pub const DEFAULT_STEP_BUDGET: u32 = 200;
pub const MAX_TURN_DEG: f64 = 45.0;
pub const DIRECTION_FOV_DEG: f64 = 90.0;
pub const UNNAMED_STREET: &str = "unnamed street";
pub const PLACEHOLDER_BODY: &str = "No description is available for this direction.";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionId(pub String);

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    AwaitingKeywords,
    Walking,
    AtIntersection,
    Ended,
}

impl SessionStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SessionStatus::AwaitingKeywords => "awaiting_keywords",
            SessionStatus::Walking => "walking",
            SessionStatus::AtIntersection => "at_intersection",
            SessionStatus::Ended => "ended",
        }
    }
}

impl fmt::Display for SessionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectionDescription {
    pub street_name: String,
    pub travel_heading: Cardinal,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionOption {
    /// 1-based.
    pub idx: usize,
    pub street_name: String,
    pub heading: HeadingDeg,
    pub cardinal: Cardinal,
    pub target: PanoId,
    pub view: ViewRequest,
    pub description: DirectionDescription,
    pub previously_traveled: bool,
    pub suggested: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    UserRequested,
    StepBudget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SessionEvent {
    Started {
        id: SessionId,
        intent: String,
        place_type: String,
        keywords: Vec<String>,
        position: PanoId,
        heading: HeadingDeg,
        step_budget: u32,
    },
    KeywordsAdded {
        added: Vec<String>,
    },
    BlockDescribed {
        position: PanoId,
        heading: HeadingDeg,
        views: Vec<ViewRequest>,
        places: Vec<Place>,
        prompt: String,
        triple: DescriptionTriple,
    },
    BlockFailed {
        position: PanoId,
        heading: HeadingDeg,
        views: Vec<ViewRequest>,
        error: String,
    },
    Moved {
        from: PanoId,
        to: PanoId,
        heading: HeadingDeg,
        status_after: SessionStatus,
    },
    DeadEnd {
        position: PanoId,
        heading: HeadingDeg,
    },
    DirectionsOffered {
        position: PanoId,
        options: Vec<DirectionOption>,
    },
    SuggestionMade {
        position: PanoId,
        idx: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
    Decided {
        position: PanoId,
        chosen: usize,
        suggested: Option<usize>,
        options_offered: usize,
    },
    Ended {
        reason: EndReason,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationSession {
    pub id: SessionId,
    pub intent: String,
    pub place_type: String,
    pub keywords: KeywordSet,
    pub position: PanoId,
    pub heading: HeadingDeg,
    pub visited_edges: BTreeSet<(PanoId, PanoId)>,
    pub history: Vec<SessionEvent>,
    pub status: SessionStatus,
    pub arrived_from: Option<PanoId>,
    pub last_description: Option<String>,
    pub steps_taken: u32,
    pub step_budget: u32,
    /// Options offered at the current position, if any.
    pub offered: Option<Vec<DirectionOption>>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExplorationError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{op} is not allowed while {status}")]
    InvalidState {
        op: &'static str,
        status: SessionStatus,
    },
    #[error("no panorama coverage: {0}")]
    NoCoverage(ProviderError),
    #[error(transparent)]
    Provider(ProviderError),
    #[error(transparent)]
    Prompt(#[from] prompt::PromptError),
    #[error("cannot replay history: {0}")]
    Replay(String),
}

type Result<T> = std::result::Result<T, ExplorationError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExplorationConfig {
    pub step_budget: u32,
    pub places_radius_m: f64,
}

impl Default for ExplorationConfig {
    fn default() -> Self {
        Self {
            step_budget: DEFAULT_STEP_BUDGET,
            places_radius_m: 100.0,
        }
    }
}

fn require(op: &'static str, status: SessionStatus, allowed: &[SessionStatus]) -> Result<()> {
    if allowed.contains(&status) {
        Ok(())
    } else {
        Err(ExplorationError::InvalidState { op, status })
    }
}

/// Starts a session at the panorama nearest `start`. Default keywords and the
/// place type come from one model call each; if either call fails the session
/// starts without them.
pub fn start_session(
    providers: &Providers,
    id: SessionId,
    intent: &str,
    start: GeoCoordinate,
    cfg: &ExplorationConfig,
) -> Result<ExplorationSession> {
    let intent = intent.trim();
    if intent.is_empty() {
        return Err(ExplorationError::InvalidArgument("intent is empty".to_string()));
    }
    let pano = providers
        .panoramas
        .nearest_panorama(start)
        .map_err(|e| match e {
            e @ ProviderError::NoCoverage { .. } => ExplorationError::NoCoverage(e),
            e => ExplorationError::Provider(e),
        })?;
    let model = providers.model.as_ref();
    let keywords = match ask(model, &build_keywords_prompt(intent)?, &[], parse_keywords) {
        Ok(a) => a.value,
        Err(e) => {
            tracing::warn!(error = %e, "no default keywords");
            Vec::new()
        }
    };
    let place_type = match ask(model, &build_place_type_prompt(intent)?, &[], parse_place_type) {
        Ok(a) => a.value,
        Err(e) => {
            tracing::warn!(error = %e, "no place type");
            String::new()
        }
    };
    let started = SessionEvent::Started {
        id,
        intent: intent.to_string(),
        place_type,
        keywords,
        heading: pano.links.first().map_or(HeadingDeg::NORTH, |l| l.heading),
        position: pano.id,
        step_budget: cfg.step_budget,
    };
    replay(&[started])
}

/// Rebuilds a session from its event history.
pub fn replay(events: &[SessionEvent]) -> Result<ExplorationSession> {
    let (first, rest) = events
        .split_first()
        .ok_or_else(|| ExplorationError::Replay("empty history".to_string()))?;
    let SessionEvent::Started {
        id,
        intent,
        place_type,
        keywords,
        position,
        heading,
        step_budget,
    } = first
    else {
        return Err(ExplorationError::Replay(
            "history must begin with a start event".to_string(),
        ));
    };
    let mut s = ExplorationSession {
        id: id.clone(),
        intent: intent.clone(),
        place_type: place_type.clone(),
        keywords: KeywordSet::from(keywords.clone()),
        position: position.clone(),
        heading: *heading,
        visited_edges: BTreeSet::new(),
        history: vec![first.clone()],
        status: SessionStatus::AwaitingKeywords,
        arrived_from: None,
        last_description: None,
        steps_taken: 0,
        step_budget: *step_budget,
        offered: None,
    };
    for e in rest {
        if matches!(e, SessionEvent::Started { .. }) {
            return Err(ExplorationError::Replay("second start event".to_string()));
        }
        s.apply(e.clone());
    }
    Ok(s)
}

impl ExplorationSession {
    fn apply(&mut self, e: SessionEvent) {
        match &e {
            SessionEvent::Started { .. } => {}
            SessionEvent::KeywordsAdded { added } => {
                self.keywords.extend(added);
                self.status = SessionStatus::Walking;
            }
            SessionEvent::BlockDescribed { triple, .. } => {
                self.last_description = Some(triple.long.clone());
            }
            SessionEvent::BlockFailed { .. } => {}
            SessionEvent::Moved {
                from,
                to,
                heading,
                status_after,
            } => {
                self.visited_edges.insert((from.clone(), to.clone()));
                self.arrived_from = Some(from.clone());
                self.position = to.clone();
                self.heading = *heading;
                self.status = *status_after;
                self.steps_taken += 1;
                self.offered = None;
            }
            SessionEvent::DeadEnd { .. } => {
                self.status = SessionStatus::AtIntersection;
                self.offered = None;
            }
            SessionEvent::DirectionsOffered { options, .. } => {
                self.offered = Some(options.clone());
            }
            SessionEvent::SuggestionMade { idx, .. } => {
                if let Some(options) = &mut self.offered {
                    for o in options.iter_mut() {
                        o.suggested = Some(o.idx) == *idx;
                    }
                }
            }
            SessionEvent::Decided { .. } => {}
            SessionEvent::Ended { .. } => self.status = SessionStatus::Ended,
        }
        self.history.push(e);
    }

    fn commit(&mut self, events: Vec<SessionEvent>) {
        for e in events {
            self.apply(e);
        }
    }

    /// The suggested option index at the current position, if any.
    pub fn suggestion(&self) -> Option<usize> {
        self.offered
            .as_ref()?
            .iter()
            .find(|o| o.suggested)
            .map(|o| o.idx)
    }

    fn move_events(&self, from: PanoId, link: &PanoLink, status: SessionStatus) -> Vec<SessionEvent> {
        let mut events = vec![SessionEvent::Moved {
            from,
            to: link.target.clone(),
            heading: link.heading,
            status_after: status,
        }];
        if self.steps_taken + 1 >= self.step_budget {
            events.push(SessionEvent::Ended {
                reason: EndReason::StepBudget,
            });
        }
        events
    }

    fn context(&self, providers: &Providers, pano: &PanoramaMeta, radius_m: f64) -> Result<AgentContext> {
        let mut ctx = AgentContext::new(self.heading.cardinal());
        ctx.intent = Some(self.intent.clone());
        ctx.keywords = self.keywords.clone();
        ctx.prev_description = self.last_description.clone();
        ctx.nearby_places = providers
            .places
            .nearby_places(pano.coord, radius_m)
            .map_err(ExplorationError::Provider)?;
        Ok(ctx)
    }
}

fn current_pano(providers: &Providers, s: &ExplorationSession) -> Result<PanoramaMeta> {
    providers
        .panoramas
        .panorama(&s.position)
        .map_err(ExplorationError::Provider)
}

pub fn add_keywords<S: AsRef<str>>(session: &mut ExplorationSession, additions: &[S]) -> Result<Vec<String>> {
    require(
        "add_keywords",
        session.status,
        &[SessionStatus::AwaitingKeywords, SessionStatus::Walking],
    )?;
    let mut probe = session.keywords.clone();
    let added: Vec<String> = additions
        .iter()
        .map(|a| a.as_ref().trim().to_string())
        .filter(|a| probe.insert(a))
        .collect();
    session.commit(vec![SessionEvent::KeywordsAdded {
        added: added.clone(),
    }]);
    Ok(added)
}

/// Describes the forward half-view at the current position. A model or
/// imagery failure is recorded as a failed block and returned as `Err` inside
/// `Ok`; the session stays walking.
pub fn describe_block(
    providers: &Providers,
    session: &mut ExplorationSession,
    cfg: &ExplorationConfig,
) -> Result<std::result::Result<DescriptionTriple, String>> {
    require("describe_block", session.status, &[SessionStatus::Walking])?;
    let pano = current_pano(providers, session)?;
    let ctx = session.context(providers, &pano, cfg.places_radius_m)?;
    let prompt = build_exploration_block_prompt(&ctx, &session.place_type)?;
    let views = views_for(&pano.id, session.heading, PointKind::MidBlock);
    let outcome = views
        .iter()
        .map(|v| providers.panoramas.render_view(v))
        .collect::<std::result::Result<Vec<ImageRef>, _>>()
        .map_err(|e| e.to_string())
        .and_then(|images| {
            ask(providers.model.as_ref(), &prompt, &images, parse_triple)
                .map(|a| a.value)
                .map_err(|e| e.to_string())
        });
    let event = match &outcome {
        Ok(triple) => SessionEvent::BlockDescribed {
            position: pano.id.clone(),
            heading: session.heading,
            views,
            places: ctx.nearby_places.clone(),
            prompt: prompt.text,
            triple: triple.clone(),
        },
        Err(error) => SessionEvent::BlockFailed {
            position: pano.id.clone(),
            heading: session.heading,
            views,
            error: error.clone(),
        },
    };
    session.commit(vec![event]);
    Ok(outcome)
}

/// Follows the link closest to the current heading, if one lies within 45°.
pub fn step_forward(providers: &Providers, session: &mut ExplorationSession) -> Result<()> {
    require("step_forward", session.status, &[SessionStatus::Walking])?;
    let pano = current_pano(providers, session)?;
    let best = pano
        .links
        .iter()
        .map(|l| (l.heading.angular_distance(session.heading), l))
        .filter(|(d, _)| *d <= MAX_TURN_DEG)
        .min_by(|a, b| a.0.total_cmp(&b.0));
    let events = match best {
        None => vec![SessionEvent::DeadEnd {
            position: pano.id.clone(),
            heading: session.heading,
        }],
        Some((_, link)) => {
            let target = providers
                .panoramas
                .panorama(&link.target)
                .map_err(ExplorationError::Provider)?;
            let status = if target.degree() >= 3 {
                SessionStatus::AtIntersection
            } else {
                SessionStatus::Walking
            };
            session.move_events(pano.id.clone(), link, status)
        }
    };
    session.commit(events);
    Ok(())
}

/// Links from `pano` in link order with the way back (if any) moved last.
fn ordered_links<'a>(pano: &'a PanoramaMeta, arrived_from: Option<&PanoId>) -> Vec<(&'a PanoLink, bool)> {
    let is_back = |l: &PanoLink| Some(&l.target) == arrived_from;
    let mut out: Vec<(&PanoLink, bool)> = pano.links.iter().filter(|l| !is_back(l)).map(|l| (l, false)).collect();
    out.extend(pano.links.iter().filter(|l| is_back(l)).map(|l| (l, true)));
    out
}

/// Lists every way out of the current intersection, each with a short model
/// description of what lies that way. Options already offered here are
/// returned unchanged.
pub fn enumerate_directions(
    providers: &Providers,
    session: &mut ExplorationSession,
) -> Result<Vec<DirectionOption>> {
    require(
        "enumerate_directions",
        session.status,
        &[SessionStatus::AtIntersection],
    )?;
    if let Some(options) = &session.offered {
        return Ok(options.clone());
    }
    let pano = current_pano(providers, session)?;
    let links = ordered_links(&pano, session.arrived_from.as_ref());
    let curr = session.heading.cardinal();
    let place_type = (!session.place_type.is_empty()).then_some(session.place_type.as_str());
    let options: Vec<DirectionOption> = links
        .par_iter()
        .enumerate()
        .map(|(i, (link, back))| {
            let street_name = link.street.clone().unwrap_or_else(|| UNNAMED_STREET.to_string());
            let view = ViewRequest::new(pano.id.clone(), link.heading, DIRECTION_FOV_DEG);
            let described = build_direction_prompt(
                &session.intent,
                &street_name,
                link.heading.cardinal(),
                curr,
                place_type,
            )
            .map_err(|e| e.to_string())
            .and_then(|prompt| {
                let image = providers.panoramas.render_view(&view).map_err(|e| e.to_string())?;
                ask(providers.model.as_ref(), &prompt, &[image], parse_direction)
                    .map(|a| a.value)
                    .map_err(|e| e.to_string())
            });
            let (body, error) = match described {
                Ok(body) => (body, None),
                Err(e) => (PLACEHOLDER_BODY.to_string(), Some(e)),
            };
            DirectionOption {
                idx: i + 1,
                description: DirectionDescription {
                    street_name: street_name.clone(),
                    travel_heading: link.heading.cardinal(),
                    body,
                },
                street_name,
                heading: link.heading,
                cardinal: link.heading.cardinal(),
                target: link.target.clone(),
                view,
                previously_traveled: *back,
                suggested: false,
                error,
            }
        })
        .collect();
    session.commit(vec![SessionEvent::DirectionsOffered {
        position: pano.id.clone(),
        options: options.clone(),
    }]);
    Ok(options)
}

/// Asks the selector which offered option best fits the intent. Returns the
/// suggested index, or `None` when there is no usable suggestion.
pub fn suggest_direction(
    providers: &Providers,
    session: &mut ExplorationSession,
) -> Result<Option<usize>> {
    require(
        "suggest_direction",
        session.status,
        &[SessionStatus::AtIntersection],
    )?;
    let options = match &session.offered {
        Some(o) => o.clone(),
        None => enumerate_directions(providers, session)?,
    };
    let from_idx = options.iter().find(|o| o.previously_traveled).map(|o| o.idx);
    let forward = options.iter().filter(|o| !o.previously_traveled).count();
    let outcome: std::result::Result<(usize, String), String> = if options.len() < 2 {
        Err("fewer than two options".to_string())
    } else {
        let roads: Vec<RoadCandidate> = options
            .iter()
            .map(|o| RoadCandidate {
                idx: o.idx,
                description: o.description.body.clone(),
            })
            .collect();
        build_selector_prompt(&session.intent, &roads, from_idx)
            .map_err(|e| e.to_string())
            .and_then(|prompt| {
                let images = options
                    .iter()
                    .map(|o| providers.panoramas.render_view(&o.view))
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| e.to_string())?;
                let n = options.len();
                ask(providers.model.as_ref(), &prompt, &images, |raw| parse_choice(raw, n))
                    .map(|a| (a.value.idx, a.value.reason))
                    .map_err(|e| e.to_string())
            })
            .and_then(|(idx, reason)| {
                if Some(idx) == from_idx && forward >= 2 {
                    Err(format!("selector chose the previously traveled road {idx}"))
                } else {
                    Ok((idx, reason))
                }
            })
    };
    let event = match &outcome {
        Ok((idx, reason)) => SessionEvent::SuggestionMade {
            position: session.position.clone(),
            idx: Some(*idx),
            reason: Some(reason.clone()),
            error: None,
        },
        Err(e) => SessionEvent::SuggestionMade {
            position: session.position.clone(),
            idx: None,
            reason: None,
            error: Some(e.clone()),
        },
    };
    session.commit(vec![event]);
    Ok(outcome.ok().map(|(i, _)| i))
}

/// Turns to option `idx` (1-based) and takes one step along it.
pub fn choose_direction(
    providers: &Providers,
    session: &mut ExplorationSession,
    idx: usize,
) -> Result<()> {
    require(
        "choose_direction",
        session.status,
        &[SessionStatus::AtIntersection],
    )?;
    let pano = current_pano(providers, session)?;
    let links = ordered_links(&pano, session.arrived_from.as_ref());
    if idx == 0 || idx > links.len() {
        return Err(ExplorationError::InvalidArgument(format!(
            "direction {idx} outside 1..={}",
            links.len()
        )));
    }
    let link = links[idx - 1].0;
    // the target must exist before anything is committed
    providers
        .panoramas
        .panorama(&link.target)
        .map_err(ExplorationError::Provider)?;
    let mut events = vec![SessionEvent::Decided {
        position: pano.id.clone(),
        chosen: idx,
        suggested: session.suggestion(),
        options_offered: links.len(),
    }];
    events.extend(session.move_events(pano.id.clone(), link, SessionStatus::Walking));
    session.commit(events);
    Ok(())
}

pub fn end_session(session: &mut ExplorationSession) -> Result<()> {
    if session.status == SessionStatus::Ended {
        return Err(ExplorationError::InvalidState {
            op: "end_session",
            status: session.status,
        });
    }
    session.commit(vec![SessionEvent::Ended {
        reason: EndReason::UserRequested,
    }]);
    Ok(())
}

/// First line of an `exploration.v1` log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub schema: String,
    pub session: SessionId,
    pub created_at: DateTime<Utc>,
}

/// Serializes the session as JSON lines: a header, then one event per line.
pub fn to_log(session: &ExplorationSession, created_at: DateTime<Utc>) -> String {
    let header = LogHeader {
        schema: SCHEMA.to_string(),
        session: session.id.clone(),
        created_at,
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for e in &session.history {
        out.push_str(&serde_json::to_string(e).expect("event serializes"));
        out.push('\n');
    }
    out
}

/// Parses a log written by [`to_log`] and replays it. A truncated final line
/// (from a crash mid-write) is ignored.
pub fn from_log(text: &str) -> Result<(LogHeader, ExplorationSession)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: LogHeader = lines
        .next()
        .ok_or_else(|| ExplorationError::Replay("empty log".to_string()))
        .and_then(|l| {
            serde_json::from_str(l).map_err(|e| ExplorationError::Replay(format!("header: {e}")))
        })?;
    if header.schema != SCHEMA {
        return Err(ExplorationError::Replay(format!(
            "unsupported schema {}",
            header.schema
        )));
    }
    let lines: Vec<&str> = lines.collect();
    let mut events = Vec::with_capacity(lines.len());
    for (i, l) in lines.iter().enumerate() {
        match serde_json::from_str::<SessionEvent>(l) {
            Ok(e) => events.push(e),
            Err(_) if i + 1 == lines.len() && !text.ends_with('\n') => break,
            Err(e) => return Err(ExplorationError::Replay(format!("line {}: {e}", i + 2))),
        }
    }
    Ok((header, replay(&events)?))
}
