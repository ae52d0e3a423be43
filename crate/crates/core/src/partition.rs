use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::decision::GroupKey;
use crate::error::{Error, Result};

/// Per-group result of an audit. Groups that fail a precondition stay in the
/// map with the reason instead of being dropped.
#[derive(Debug, Clone, PartialEq)]
pub enum GroupOutcome<T> {
    Estimated(T),
    Skipped(Error),
}

impl<T> GroupOutcome<T> {
    pub fn estimate(&self) -> Option<&T> {
        match self {
            GroupOutcome::Estimated(t) => Some(t),
            GroupOutcome::Skipped(_) => None,
        }
    }

    pub fn skip_reason(&self) -> Option<&Error> {
        match self {
            GroupOutcome::Estimated(_) => None,
            GroupOutcome::Skipped(e) => Some(e),
        }
    }

    pub fn into_result(self) -> Result<T> {
        match self {
            GroupOutcome::Estimated(t) => Ok(t),
            GroupOutcome::Skipped(e) => Err(e),
        }
    }
}

impl<T> From<Result<T>> for GroupOutcome<T> {
    fn from(r: Result<T>) -> Self {
        match r {
            Ok(t) => GroupOutcome::Estimated(t),
            Err(e) => GroupOutcome::Skipped(e),
        }
    }
}

/// Splits `items` by the key `key_of` assigns, preserving input order
/// within each part.
pub(crate) fn partition_by<'a, T, F>(items: &'a [T], mut key_of: F) -> Result<BTreeMap<GroupKey, Vec<&'a T>>>
where
    F: FnMut(&T) -> Result<GroupKey>,
{
    let mut parts: BTreeMap<GroupKey, Vec<&T>> = BTreeMap::new();
    for item in items {
        parts.entry(key_of(item)?).or_default().push(item);
    }
    Ok(parts)
}
