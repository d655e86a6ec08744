//! The 18-class driver activity taxonomy and annotation label normalization.

use alloc::string::String;
use core::fmt;

use serde::{Deserialize, Serialize};

/// Number of activity classes.
pub const NUM_CLASSES: usize = 18;

/// (display name, canonical name), indexed by `class index - 1`.
const CLASSES: [(&str, &str); NUM_CLASSES] = [
    ("Normal forward driving", "normal_forward_driving"),
    ("Drinking", "drinking"),
    ("Phone call (right)", "phone_call_right"),
    ("Phone call (left)", "phone_call_left"),
    ("Eating", "eating"),
    ("Texting (right)", "texting_right"),
    ("Texting (left)", "texting_left"),
    ("Hair / makeup", "hair_makeup"),
    ("Reaching behind", "reaching_behind"),
    ("Adjusting control panel", "adjusting_control_panel"),
    ("Picking up from floor (driver)", "picking_up_from_floor_driver"),
    ("Picking up from floor (passenger)", "picking_up_from_floor_passenger"),
    ("Talking to passenger at the right", "talking_to_passenger_at_the_right"),
    ("Talking to passenger at backseat", "talking_to_passenger_at_backseat"),
    ("Yawning", "yawning"),
    ("Hand on head", "hand_on_head"),
    ("Singing with music", "singing_with_music"),
    ("Shaking or dancing with music", "shaking_or_dancing_with_music"),
];

const SYNONYMS: &str = include_str!("../data/label_synonyms.txt");

/// One of the 18 driver activities, identified by its 1-based class index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct ActivityClass(u8);

impl ActivityClass {
    /// Class from its 1-based index.
    pub fn from_index(index: usize) -> Option<Self> {
        (1..=NUM_CLASSES).contains(&index).then_some(Self(index as u8))
    }

    /// 1-based index, as used in annotation files, manifests and reports.
    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// 0-based row of this class in the classifier output layer.
    ///
    /// This and [`ActivityClass::from_model_index`] are the only places the
    /// two numbering schemes meet.
    pub fn model_index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn from_model_index(row: usize) -> Option<Self> {
        Self::from_index(row + 1)
    }

    pub fn canonical_name(self) -> &'static str {
        CLASSES[self.model_index()].1
    }

    pub fn display_name(self) -> &'static str {
        CLASSES[self.model_index()].0
    }

    pub fn all() -> impl Iterator<Item = ActivityClass> + Clone {
        (1..=NUM_CLASSES as u8).map(ActivityClass)
    }
}

impl fmt::Display for ActivityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.index(), self.canonical_name())
    }
}

impl TryFrom<u8> for ActivityClass {
    type Error = LabelError;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        Self::from_index(value as usize).ok_or(LabelError::IndexOutOfRange(value as usize))
    }
}

impl From<ActivityClass> for u8 {
    fn from(class: ActivityClass) -> u8 {
        class.0
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LabelError {
    Empty,
    UnknownLabel { raw: String },
    IndexOutOfRange(usize),
}

impl fmt::Display for LabelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelError::Empty => f.write_str("empty activity label"),
            LabelError::UnknownLabel { raw } => write!(f, "unknown activity label {raw:?}"),
            LabelError::IndexOutOfRange(i) => {
                write!(f, "class index {i} outside 1..={NUM_CLASSES}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for LabelError {}

/// Reduces a raw label to its lookup key.
///
/// Lowercases, treats every non-alphanumeric character as a word break,
/// moves parenthesized qualifiers after the main text, and joins the words
/// with underscores. Apostrophes are dropped without breaking the word.
/// `normalized_key("  PHONE CALL (RIGHT) ")` is `"phone_call_right"`.
pub fn normalized_key(raw: &str) -> String {
    let mut main = String::new();
    let mut qualifier = String::new();
    let mut depth = 0usize;
    for c in raw.chars() {
        match c {
            '(' => {
                depth += 1;
                qualifier.push(' ');
            }
            ')' => {
                depth = depth.saturating_sub(1);
                qualifier.push(' ');
            }
            '\'' | '\u{2019}' => {}
            _ => {
                let target = if depth > 0 { &mut qualifier } else { &mut main };
                if c.is_alphanumeric() {
                    target.extend(c.to_lowercase());
                } else {
                    target.push(' ');
                }
            }
        }
    }
    let mut key = String::with_capacity(main.len() + qualifier.len());
    for word in main.split_whitespace().chain(qualifier.split_whitespace()) {
        if !key.is_empty() {
            key.push('_');
        }
        key.push_str(word);
    }
    key
}

fn synonym_target(key: &str) -> Option<&'static str> {
    SYNONYMS
        .lines()
        .map(str::trim)
        .filter(|line| !line.is_empty() && !line.starts_with('#'))
        .filter_map(|line| line.split_once('='))
        .find(|(variant, _)| variant.trim() == key)
        .map(|(_, canonical)| canonical.trim())
}

/// Maps a raw annotation label onto its activity class.
///
/// Unknown labels are an error rather than a best guess.
pub fn normalize_label(raw: &str) -> Result<ActivityClass, LabelError> {
    if raw.trim().is_empty() {
        return Err(LabelError::Empty);
    }
    let key = normalized_key(raw);
    let canonical = synonym_target(&key).unwrap_or(key.as_str());
    ActivityClass::all()
        .find(|class| class.canonical_name() == canonical)
        .ok_or_else(|| LabelError::UnknownLabel { raw: raw.into() })
}

/// The synonym table as `(variant, canonical)` pairs.
pub fn synonyms() -> impl Iterator<Item = (&'static str, &'static str)> {
    SYNONYMS
        .lines()
        .map(str::trim)
        .filter(|line| !line.is_empty() && !line.starts_with('#'))
        .filter_map(|line| line.split_once('='))
        .map(|(variant, canonical)| (variant.trim(), canonical.trim()))
}
