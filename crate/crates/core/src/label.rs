//! Binary class labels.
//!
//! The positive class is encoded as target `0` and the negative class as
//! target `1`, so a classifier's sigmoid output estimates the probability of
//! the *negative* class.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    /// Numeric BCE target: positive is 0, negative is 1.
    #[inline]
    pub fn target(self) -> f64 {
        match self {
            Label::Positive => 0.0,
            Label::Negative => 1.0,
        }
    }

    #[inline]
    pub fn from_target(bit: u8) -> Self {
        if bit == 0 {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    /// Class assigned to a predicted probability of the negative class.
    #[inline]
    pub fn from_probability(p: f64, threshold: f64) -> Self {
        if p >= threshold {
            Label::Negative
        } else {
            Label::Positive
        }
    }

    #[inline]
    pub fn other(self) -> Self {
        match self {
            Label::Positive => Label::Negative,
            Label::Negative => Label::Positive,
        }
    }
}

/// Per-row label state of a (partially) labeled dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelState {
    Positive,
    Negative,
    Unlabeled,
}

impl LabelState {
    #[inline]
    pub fn label(self) -> Option<Label> {
        match self {
            LabelState::Positive => Some(Label::Positive),
            LabelState::Negative => Some(Label::Negative),
            LabelState::Unlabeled => None,
        }
    }

    #[inline]
    pub fn is_labeled(self) -> bool {
        self != LabelState::Unlabeled
    }
}

impl From<Label> for LabelState {
    fn from(label: Label) -> Self {
        match label {
            Label::Positive => LabelState::Positive,
            Label::Negative => LabelState::Negative,
        }
    }
}
