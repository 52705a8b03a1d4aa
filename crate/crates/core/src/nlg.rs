//! Template-based surface realization of [`SystemAction`]s.
//!
//! Template file lines look like `ACT[:VALUE_CLASS] => text with {slot}s`.
//! Repeating a key adds an alternative; the choice among alternatives is
//! driven by a seed so output stays reproducible.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::act::{Act, ActValue, DialogAct, SystemAction};

#[derive(Debug, Error, PartialEq)]
pub enum NlgError {
    #[error("no template for {act}{}", .class.as_deref().map(|c| format!(":{c}")).unwrap_or_default())]
    MissingTemplate { act: DialogAct, class: Option<String> },
    #[error("template for {act} uses unresolved placeholder {{{placeholder}}}")]
    UnresolvedPlaceholder { act: DialogAct, placeholder: String },
    #[error("template file line {line}: {message}")]
    Parse { line: usize, message: String },
}

type TemplateKey = (DialogAct, Option<String>);

#[derive(Debug, Clone, Default)]
pub struct TemplateSet {
    templates: BTreeMap<TemplateKey, Vec<String>>,
}

impl TemplateSet {
    pub fn parse(source: &str) -> Result<Self, NlgError> {
        let mut set = TemplateSet::default();
        for (idx, raw) in source.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| NlgError::Parse {
                line: idx + 1,
                message,
            };
            let (key, text) = line
                .split_once("=>")
                .ok_or_else(|| parse_err("expected `ACT[:CLASS] => text`".into()))?;
            let key = key.trim();
            let (act, class) = match key.split_once(':') {
                Some((a, c)) => (a.trim(), Some(c.trim().to_string())),
                None => (key, None),
            };
            let act: DialogAct = act.parse().map_err(parse_err)?;
            set.add(act, class.as_deref(), text.trim());
        }
        Ok(set)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NlgError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| NlgError::Parse {
            line: 0,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::parse(&text)
    }

    pub fn add(&mut self, act: DialogAct, class: Option<&str>, template: &str) {
        self.templates
            .entry((act, class.map(str::to_string)))
            .or_default()
            .push(template.to_string());
    }

    /// Alternatives for `(act, class)`, falling back to the class-less entry.
    pub fn lookup(&self, act: DialogAct, class: Option<&str>) -> Option<&[String]> {
        class
            .and_then(|c| self.templates.get(&(act, Some(c.to_string()))))
            .or_else(|| self.templates.get(&(act, None)))
            .map(Vec::as_slice)
    }

    /// True when `act` can be rendered without consulting the template table.
    fn is_verbatim(act: &Act) -> bool {
        matches!(act.act, DialogAct::Relay | DialogAct::Instruct)
            && matches!(act.value, ActValue::Text { .. })
    }

    /// Checks that `act` would render, without picking an alternative.
    pub fn check(&self, act: &Act) -> Result<(), NlgError> {
        if Self::is_verbatim(act) {
            return Ok(());
        }
        let alts = self.lookup(act.act, act.value.value_class()).ok_or_else(|| missing(act))?;
        for t in alts {
            fill(act, t)?;
        }
        Ok(())
    }
}

fn missing(act: &Act) -> NlgError {
    NlgError::MissingTemplate {
        act: act.act,
        class: act.value.value_class().map(str::to_string),
    }
}

fn resolve<'a>(value: &'a ActValue, name: &str) -> Option<&'a str> {
    match (value, name) {
        (ActValue::Text { text }, "value") => Some(text),
        (ActValue::Concept { name: c }, "value" | "concept") => Some(c),
        (ActValue::Filled { class, .. }, "concept") => Some(class),
        (ActValue::Filled { slots, .. }, slot) => slots.get(slot).map(String::as_str),
        _ => None,
    }
}

fn fill(act: &Act, template: &str) -> Result<String, NlgError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after.find('}').ok_or_else(|| NlgError::UnresolvedPlaceholder {
            act: act.act,
            placeholder: after.to_string(),
        })?;
        let name = &after[..close];
        let value = resolve(&act.value, name).ok_or_else(|| NlgError::UnresolvedPlaceholder {
            act: act.act,
            placeholder: name.to_string(),
        })?;
        out.push_str(value);
        rest = &after[close + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Renders acts in order, joined by single spaces.
pub fn render(action: &SystemAction, templates: &TemplateSet, seed: u64) -> Result<String, NlgError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts = Vec::with_capacity(action.acts.len());
    for act in &action.acts {
        if TemplateSet::is_verbatim(act) {
            if let ActValue::Text { text } = &act.value {
                parts.push(text.clone());
            }
            continue;
        }
        let alts = templates
            .lookup(act.act, act.value.value_class())
            .ok_or_else(|| missing(act))?;
        let pick = if alts.len() > 1 { rng.gen_range(0..alts.len()) } else { 0 };
        parts.push(fill(act, &alts[pick])?);
    }
    Ok(parts.join(" "))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn templates() -> TemplateSet {
        TemplateSet::parse(
            "CONFIRM_IMPLICIT => I believe you said {value}.\n\
             ASK:food_type => What kind of food do you want?\n\
             ASK => What is your {concept}?\n\
             HELLO => Hi.\n\
             HELLO => Hello.\n\
             INFORM:weather => {condition} in {location}.\n",
        )
        .unwrap()
    }

    #[test]
    fn confirm_then_ask() {
        let sa = SystemAction::new(vec![
            Act::new(DialogAct::ConfirmImplicit, ActValue::text("Pittsburgh")),
            Act::new(DialogAct::Ask, ActValue::concept("food_type")),
        ]);
        assert_eq!(
            render(&sa, &templates(), 0).unwrap(),
            "I believe you said Pittsburgh. What kind of food do you want?"
        );
    }

    #[test]
    fn empty_action_renders_empty() {
        assert_eq!(render(&SystemAction::default(), &templates(), 0).unwrap(), "");
    }

    #[test]
    fn relay_is_verbatim() {
        let text = "Any {braces} stay as-is.";
        let sa = SystemAction::new(vec![Act::new(DialogAct::Relay, ActValue::text(text))]);
        assert_eq!(render(&sa, &TemplateSet::default(), 7).unwrap(), text);
    }

    #[test]
    fn class_fallback_and_slots() {
        let sa = SystemAction::new(vec![
            Act::new(DialogAct::Ask, ActValue::concept("location")),
            Act::new(
                DialogAct::Inform,
                ActValue::filled("weather", [("condition", "Sunny"), ("location", "Boston")]),
            ),
        ]);
        assert_eq!(
            render(&sa, &templates(), 0).unwrap(),
            "What is your location? Sunny in Boston."
        );
    }

    #[test]
    fn missing_template_and_placeholder() {
        let sa = SystemAction::new(vec![Act::bare(DialogAct::Bye)]);
        assert_eq!(
            render(&sa, &templates(), 0),
            Err(NlgError::MissingTemplate {
                act: DialogAct::Bye,
                class: None
            })
        );
        let sa = SystemAction::new(vec![Act::new(
            DialogAct::Inform,
            ActValue::filled("weather", [("condition", "Rain")]),
        )]);
        assert!(matches!(
            render(&sa, &templates(), 0),
            Err(NlgError::UnresolvedPlaceholder { .. })
        ));
    }

    #[test]
    fn seeded_choice_is_deterministic() {
        let sa = SystemAction::new(vec![Act::bare(DialogAct::Hello); 8]);
        let t = templates();
        let a = render(&sa, &t, 42).unwrap();
        assert_eq!(a, render(&sa, &t, 42).unwrap());
        let seen: std::collections::BTreeSet<_> =
            (0..16).map(|s| render(&sa, &t, s).unwrap()).collect();
        assert!(seen.len() > 1);
    }

    #[test]
    fn bad_act_name_is_parse_error() {
        assert!(matches!(
            TemplateSet::parse("GREET => hi"),
            Err(NlgError::Parse { line: 1, .. })
        ));
    }
}
