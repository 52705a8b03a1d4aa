//! System dialog acts: the engine's output and the NLG's input.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DialogAct {
    Ask,
    Inform,
    ConfirmExplicit,
    ConfirmImplicit,
    Hello,
    Bye,
    Handoff,
    Relay,
    Rephrase,
    Instruct,
}

impl DialogAct {
    pub const ALL: [DialogAct; 10] = [
        DialogAct::Ask,
        DialogAct::Inform,
        DialogAct::ConfirmExplicit,
        DialogAct::ConfirmImplicit,
        DialogAct::Hello,
        DialogAct::Bye,
        DialogAct::Handoff,
        DialogAct::Relay,
        DialogAct::Rephrase,
        DialogAct::Instruct,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DialogAct::Ask => "ASK",
            DialogAct::Inform => "INFORM",
            DialogAct::ConfirmExplicit => "CONFIRM_EXPLICIT",
            DialogAct::ConfirmImplicit => "CONFIRM_IMPLICIT",
            DialogAct::Hello => "HELLO",
            DialogAct::Bye => "BYE",
            DialogAct::Handoff => "HANDOFF",
            DialogAct::Relay => "RELAY",
            DialogAct::Rephrase => "REPHRASE",
            DialogAct::Instruct => "INSTRUCT",
        }
    }

    /// Acts after which the floor passes to the user.
    pub fn awaits_user(self) -> bool {
        matches!(self, DialogAct::Ask | DialogAct::ConfirmExplicit)
    }
}

impl fmt::Display for DialogAct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DialogAct {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DialogAct::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown dialog act `{s}`"))
    }
}

/// Content carried by a dialog act.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActValue {
    None,
    /// Literal text, e.g. a remote agent reply or a value to confirm.
    Text { text: String },
    /// A reference to an ontology concept, e.g. the slot being asked for.
    Concept { name: String },
    /// Named slots under a value class, e.g. a weather report.
    Filled {
        class: String,
        slots: BTreeMap<String, String>,
    },
}

impl ActValue {
    pub fn text(s: impl Into<String>) -> Self {
        ActValue::Text { text: s.into() }
    }

    pub fn concept(name: impl Into<String>) -> Self {
        ActValue::Concept { name: name.into() }
    }

    pub fn filled<K: Into<String>, V: Into<String>>(
        class: impl Into<String>,
        slots: impl IntoIterator<Item = (K, V)>,
    ) -> Self {
        ActValue::Filled {
            class: class.into(),
            slots: slots.into_iter().map(|(k, v)| (k.into(), v.into())).collect(),
        }
    }

    /// Template selector for this payload, if any.
    pub fn value_class(&self) -> Option<&str> {
        match self {
            ActValue::Concept { name } => Some(name),
            ActValue::Filled { class, .. } => Some(class),
            ActValue::None | ActValue::Text { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Act {
    pub act: DialogAct,
    pub value: ActValue,
}

impl Act {
    pub fn new(act: DialogAct, value: ActValue) -> Self {
        Act { act, value }
    }

    pub fn bare(act: DialogAct) -> Self {
        Act::new(act, ActValue::None)
    }
}

impl fmt::Display for Act {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.value {
            ActValue::None => write!(f, "({}, _)", self.act),
            ActValue::Text { text } => write!(f, "({}, {text:?})", self.act),
            ActValue::Concept { name } => write!(f, "({}, {name})", self.act),
            ActValue::Filled { class, slots } => write!(f, "({}, {class}{slots:?})", self.act),
        }
    }
}

/// Ordered list of acts produced for one system turn.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemAction {
    pub acts: Vec<Act>,
}

impl SystemAction {
    pub fn new(acts: Vec<Act>) -> Self {
        SystemAction { acts }
    }

    pub fn is_empty(&self) -> bool {
        self.acts.is_empty()
    }

    pub fn contains(&self, act: DialogAct) -> bool {
        self.acts.iter().any(|a| a.act == act)
    }

    pub fn kinds(&self) -> Vec<DialogAct> {
        self.acts.iter().map(|a| a.act).collect()
    }
}

impl fmt::Display for SystemAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, a) in self.acts.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str("]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn act_names_round_trip() {
        for a in DialogAct::ALL {
            assert_eq!(a.as_str().parse::<DialogAct>().unwrap(), a);
        }
        assert!("CONFIRM".parse::<DialogAct>().is_err());
    }

    #[test]
    fn display_is_tuple_like() {
        let sa = SystemAction::new(vec![
            Act::new(DialogAct::ConfirmImplicit, ActValue::text("Pittsburgh")),
            Act::new(DialogAct::Ask, ActValue::concept("food_type")),
        ]);
        assert_eq!(sa.to_string(), "[(CONFIRM_IMPLICIT, \"Pittsburgh\"), (ASK, food_type)]");
    }
}
