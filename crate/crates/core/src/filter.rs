//! Two-level control filtering: a static type whitelist (hard) and an
//! agent-requested subset (soft).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::LabelMap;
use crate::backend::{ControlInfo, ControlType};

pub const DEFAULT_SOFT_TRIGGER: usize = 40;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FilterError {
    #[error("UNKNOWN_LABEL: {0}")]
    UnknownLabel(String),
    #[error("allowed_types must not be empty")]
    EmptyWhitelist,
    #[error("unknown control type name {0}")]
    UnknownTypeName(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterConfig {
    allowed_types: BTreeSet<ControlType>,
    /// Listing size above which prompts mention the SCREENSHOT option.
    pub soft_trigger_threshold: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig { allowed_types: ControlType::ALL.into_iter().collect(), soft_trigger_threshold: DEFAULT_SOFT_TRIGGER }
    }
}

impl FilterConfig {
    pub fn new(allowed: impl IntoIterator<Item = ControlType>, soft_trigger_threshold: usize) -> Result<Self, FilterError> {
        let allowed_types: BTreeSet<_> = allowed.into_iter().collect();
        if allowed_types.is_empty() {
            return Err(FilterError::EmptyWhitelist);
        }
        Ok(FilterConfig { allowed_types, soft_trigger_threshold: soft_trigger_threshold.max(1) })
    }

    /// Parses case-sensitive type names, as written under `filter.allowed_types`.
    pub fn from_names<S: AsRef<str>>(names: &[S], soft_trigger_threshold: usize) -> Result<Self, FilterError> {
        let types = names
            .iter()
            .map(|n| ControlType::from_name(n.as_ref()).ok_or_else(|| FilterError::UnknownTypeName(n.as_ref().to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(types, soft_trigger_threshold)
    }

    pub fn allows(&self, ty: ControlType) -> bool {
        self.allowed_types.contains(&ty)
    }

    pub fn allowed_types(&self) -> &BTreeSet<ControlType> {
        &self.allowed_types
    }
}

/// Keeps enabled controls of whitelisted types, in order.
pub fn hard_filter(controls: &[ControlInfo], config: &FilterConfig) -> Vec<ControlInfo> {
    controls
        .iter()
        .filter(|c| c.enabled && c.kind.known().is_some_and(|t| config.allows(t)))
        .cloned()
        .collect()
}

/// The controls named by `requested_labels`, in request order, without duplicates.
pub fn soft_refilter(
    controls: &[ControlInfo],
    requested_labels: &[String],
    label_map: &LabelMap,
) -> Result<Vec<ControlInfo>, FilterError> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for label in requested_labels {
        let id = label_map.get(label).ok_or_else(|| FilterError::UnknownLabel(label.clone()))?;
        if !seen.insert(id.to_string()) {
            continue;
        }
        let control = controls
            .iter()
            .find(|c| c.control_id == id)
            .ok_or_else(|| FilterError::UnknownLabel(label.clone()))?;
        out.push(control.clone());
    }
    Ok(out)
}
