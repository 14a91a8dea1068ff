//! Closed caption grammar over a vocabulary of under sixty words.
//!
//! Each change event is described by one of 12 clause templates (3 subject
//! forms x 4 verb forms) plus a relative-position phrase; multi-event
//! scenes join one clause per event with "and". Zero-event scenes draw
//! from six fixed no-change sentences. The grammar is invertible:
//! [`parse_caption`] recovers the exact (kind, event) set from any
//! generated sentence, which is what the truthfulness tests check.

use super::scene::{ChangeEvent, ObjectKind};
use crate::rng::Rng;
use std::collections::BTreeSet;

pub const NO_CHANGE_TEMPLATES: [&str; 6] = [
    "the scene is the same as before",
    "there is no difference",
    "nothing has changed",
    "no change has occurred",
    "the two scenes look identical",
    "everything remains the same",
];

const APPEAR_VERBS: [&str; 4] = ["appears", "has appeared", "shows up", "has been added"];
const DISAPPEAR_VERBS: [&str; 4] = ["disappears", "has disappeared", "is gone", "has been removed"];

/// Coarse 3x3 position grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub row_band: usize,
    pub col_band: usize,
}

impl Region {
    pub fn from_position(y: usize, x: usize, image_size: usize) -> Self {
        let band = |v: usize| (v * 3 / image_size).min(2);
        Region {
            row_band: band(y),
            col_band: band(x),
        }
    }

    pub fn name(&self) -> &'static str {
        const NAMES: [[&str; 3]; 3] = [
            ["top left", "top", "top right"],
            ["left", "center", "right"],
            ["bottom left", "bottom", "bottom right"],
        ];
        NAMES[self.row_band][self.col_band]
    }
}

fn subject(kind: ObjectKind, event: ChangeEvent, variant: usize) -> &'static str {
    match kind {
        ObjectKind::Building => match (event, variant) {
            (ChangeEvent::Appear, 2) => "a new building",
            (_, 0) => "a building",
            (_, 1) => "one building",
            _ => "the building",
        },
        ObjectKind::Road => match (event, variant) {
            (ChangeEvent::Appear, 2) => "a new road",
            (_, 0) => "a road",
            (_, 1) => "one road",
            _ => "the road",
        },
        ObjectKind::Vegetation => match (event, variant) {
            (ChangeEvent::Appear, 2) => "new vegetation",
            (_, 0) => "some vegetation",
            (_, 1) => "a patch of vegetation",
            _ => "the vegetation",
        },
    }
}

fn clause(kind: ObjectKind, event: ChangeEvent, region: Region, template: usize, prep_in: bool) -> String {
    let subj = subject(kind, event, template % 3);
    let verb = match event {
        ChangeEvent::Appear => APPEAR_VERBS[(template / 3) % 4],
        ChangeEvent::Disappear => DISAPPEAR_VERBS[(template / 3) % 4],
        ChangeEvent::None => unreachable!("no clause for event-free objects"),
    };
    let prep = if prep_in { "in" } else { "at" };
    format!("{subj} {verb} {prep} the {} of the scene", region.name())
}

/// Five distinct captions that all truthfully describe `events`
/// (kind, event, region triples in scene order).
pub fn generate_captions(
    events: &[(ObjectKind, ChangeEvent, Region)],
    rng: &mut Rng,
) -> Vec<String> {
    if events.is_empty() {
        return rng
            .choose_distinct(NO_CHANGE_TEMPLATES.len(), 5)
            .into_iter()
            .map(|i| NO_CHANGE_TEMPLATES[i].to_string())
            .collect();
    }
    rng.choose_distinct(12, 5)
        .into_iter()
        .map(|base| {
            let clauses: Vec<String> = events
                .iter()
                .enumerate()
                .map(|(i, &(kind, event, region))| {
                    // Vary the template across clauses of one caption while
                    // keeping caption-to-caption distinctness via `base`.
                    clause(kind, event, region, (base + 5 * i) % 12, rng.below(2) == 1)
                })
                .collect();
            clauses.join(" and ")
        })
        .collect()
}

/// Inverts the grammar: the set of (kind, event) pairs a caption asserts.
/// No-change sentences yield the empty set; `None` means the sentence is
/// not part of the grammar.
pub fn parse_caption(caption: &str) -> Option<BTreeSet<(ObjectKind, ChangeEvent)>> {
    let trimmed = caption.trim();
    if NO_CHANGE_TEMPLATES.contains(&trimmed) {
        return Some(BTreeSet::new());
    }
    let mut events = BTreeSet::new();
    for part in trimmed.split(" and ") {
        let kind = if part.contains("building") {
            ObjectKind::Building
        } else if part.contains("road") {
            ObjectKind::Road
        } else if part.contains("vegetation") {
            ObjectKind::Vegetation
        } else {
            return None;
        };
        // Disappear verbs first: "disappears" contains "appears", so the
        // appear check must not run on unclassified text.
        let event = if DISAPPEAR_VERBS.iter().any(|v| part.contains(v)) {
            ChangeEvent::Disappear
        } else if APPEAR_VERBS.iter().any(|v| part.contains(v)) {
            ChangeEvent::Appear
        } else {
            return None;
        };
        events.insert((kind, event));
    }
    Some(events)
}

/// Every surface form the grammar can emit, for vocabulary-size checks and
/// building caption vocabularies without scanning a dataset.
pub fn vocabulary_words() -> BTreeSet<String> {
    let mut words = BTreeSet::new();
    let mut add = |text: &str| {
        for w in crate::metrics::tokenize::tokenize(text) {
            words.insert(w);
        }
    };
    for t in NO_CHANGE_TEMPLATES {
        add(t);
    }
    add("and in at of the scene top left right bottom center");
    for kind in [ObjectKind::Building, ObjectKind::Road, ObjectKind::Vegetation] {
        for event in [ChangeEvent::Appear, ChangeEvent::Disappear] {
            for variant in 0..3 {
                add(subject(kind, event, variant));
            }
        }
    }
    for v in APPEAR_VERBS.iter().chain(DISAPPEAR_VERBS.iter()) {
        add(v);
    }
    words
}
