use std::collections::HashMap;

use chrono::NaiveDate;

use crate::error::{Error, Result};

pub type TimeId = usize;

/// Reserved id for unknown or absent time information.
pub const UNKNOWN_TIME: TimeId = 0;

/// Label written for [`UNKNOWN_TIME`] in `time_id` files.
pub const UNKNOWN_LABEL: &str = "unknown";

/// Chronological sort key: year-only labels sort before any date in that year.
type TimeKey = (i32, u32, u32);

fn parse_label(label: &str) -> Result<TimeKey> {
    let bad = || Error::TimeLabel(label.to_string());
    let (sign, body) = match label.strip_prefix('-') {
        Some(rest) => (-1, rest),
        None => (1, label),
    };
    let parts: Vec<&str> = body.split('-').collect();
    if parts.iter().any(|p| p.is_empty() || !p.bytes().all(|b| b.is_ascii_digit())) {
        return Err(bad());
    }
    let year: i32 = parts[0].parse().map_err(|_| bad())?;
    let year = sign * year;
    match parts.len() {
        1 => Ok((year, 0, 0)),
        2 => {
            let month: u32 = parts[1].parse().map_err(|_| bad())?;
            if !(1..=12).contains(&month) {
                return Err(bad());
            }
            Ok((year, month, 0))
        }
        3 => {
            let month: u32 = parts[1].parse().map_err(|_| bad())?;
            let day: u32 = parts[2].parse().map_err(|_| bad())?;
            NaiveDate::from_ymd_opt(year, month, day).ok_or_else(bad)?;
            Ok((year, month, day))
        }
        _ => Err(bad()),
    }
}

/// Dense index over the shared time set of two graphs. Id 0 is the
/// unknown-time sentinel and is counted as a member of the set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TimeIndex {
    labels: Vec<String>,
    ids: HashMap<String, TimeId>,
}

impl Default for TimeIndex {
    fn default() -> Self {
        Self::unknown_only()
    }
}

impl TimeIndex {
    /// An index holding only the unknown-time sentinel.
    pub fn unknown_only() -> Self {
        Self::from_real_labels(Vec::new())
    }

    fn from_real_labels(real: Vec<String>) -> Self {
        let mut labels = Vec::with_capacity(real.len() + 1);
        labels.push(UNKNOWN_LABEL.to_string());
        labels.extend(real);
        let ids = labels
            .iter()
            .enumerate()
            .skip(1)
            .map(|(id, l)| (l.clone(), id))
            .collect();
        Self { labels, ids }
    }

    /// Builds an index from `(id, label)` entries as found in a `time_id`
    /// file. Real ids must be dense in `1..=n`; an entry for id 0 is optional
    /// and its label is ignored.
    pub fn from_entries(entries: &[(TimeId, String)]) -> std::result::Result<Self, String> {
        let real: Vec<&(TimeId, String)> = entries.iter().filter(|(id, _)| *id != UNKNOWN_TIME).collect();
        let n = real.len();
        let mut slots: Vec<Option<String>> = vec![None; n + 1];
        for (id, label) in real {
            if *id > n {
                return Err(format!("time id {id} breaks the dense range 1..={n}"));
            }
            if slots[*id].replace(label.clone()).is_some() {
                return Err(format!("time id {id} defined twice"));
            }
        }
        let labels: Vec<String> = slots.into_iter().skip(1).map(|s| s.expect("dense")).collect();
        let index = Self::from_real_labels(labels);
        if index.ids.len() != index.num_real() {
            return Err("duplicate time label".to_string());
        }
        Ok(index)
    }

    /// Number of ids including the sentinel.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    /// Always false: the sentinel is always present.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn num_real(&self) -> usize {
        self.labels.len() - 1
    }

    pub fn label(&self, id: TimeId) -> Option<&str> {
        self.labels.get(id).map(String::as_str)
    }

    /// Id of a real label. The sentinel label is not looked up.
    pub fn id(&self, label: &str) -> Option<TimeId> {
        self.ids.get(label).copied()
    }

    /// `(id, label)` pairs in id order, sentinel first.
    pub fn entries(&self) -> impl Iterator<Item = (TimeId, &str)> {
        self.labels.iter().enumerate().map(|(i, l)| (i, l.as_str()))
    }
}

/// Builds the shared time index over the union of two label sets, sorted
/// chronologically with real ids starting at 1.
///
/// Labels must already be normalised to `YYYY`, `YYYY-MM` or `YYYY-MM-DD`.
pub fn unify_time_sets<S: AsRef<str>>(first: &[S], second: &[S]) -> Result<TimeIndex> {
    let mut keyed = Vec::with_capacity(first.len() + second.len());
    for label in first.iter().chain(second) {
        let label = label.as_ref().trim();
        keyed.push((parse_label(label)?, label.to_string()));
    }
    keyed.sort();
    keyed.dedup();
    for pair in keyed.windows(2) {
        if pair[0].0 == pair[1].0 {
            // e.g. "2005-1-1" and "2005-01-01"
            return Err(Error::TimeLabel(format!(
                "`{}` and `{}` denote the same time",
                pair[0].1, pair[1].1
            )));
        }
    }
    Ok(TimeIndex::from_real_labels(keyed.into_iter().map(|(_, l)| l).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_sets_share_one_id() {
        let idx = unify_time_sets(&["2005-01-01"], &["2005-01-01"]).unwrap();
        assert_eq!(idx.len(), 2);
        assert_eq!(idx.num_real(), 1);
        assert_eq!(idx.id("2005-01-01"), Some(1));
    }

    #[test]
    fn disjoint_years_sorted() {
        let idx = unify_time_sets(&["2006"], &["2005"]).unwrap();
        assert_eq!(idx.id("2005"), Some(1));
        assert_eq!(idx.id("2006"), Some(2));
        assert_eq!(idx.label(UNKNOWN_TIME), Some(UNKNOWN_LABEL));
    }

    #[test]
    fn chronological_not_lexicographic() {
        let idx = unify_time_sets(&["-0044", "1999", "476"], &["2000-02-29"]).unwrap();
        assert_eq!(idx.id("-0044"), Some(1));
        assert_eq!(idx.id("476"), Some(2));
        assert_eq!(idx.id("1999"), Some(3));
        assert_eq!(idx.id("2000-02-29"), Some(4));
    }

    #[test]
    fn daily_icews_range() {
        let start = NaiveDate::from_ymd_opt(2005, 1, 1).unwrap();
        let end = NaiveDate::from_ymd_opt(2015, 12, 31).unwrap();
        let labels: Vec<String> = start
            .iter_days()
            .take_while(|d| *d <= end)
            .map(|d| d.format("%Y-%m-%d").to_string())
            .collect();
        let (a, b) = labels.split_at(2000);
        let idx = unify_time_sets(a, b).unwrap();
        assert_eq!(idx.num_real(), 4017);
        assert_eq!(idx.id("2005-01-01"), Some(1));
        assert_eq!(idx.id("2015-12-31"), Some(4017));
    }

    #[test]
    fn rejects_garbage() {
        for bad in ["", "yesterday", "2005-13-01", "2005-02-30", "20x5", "2005--01"] {
            assert!(unify_time_sets(&[bad], &[] as &[&str]).is_err(), "{bad}");
        }
    }

    #[test]
    fn from_entries_requires_dense_ids() {
        let ok = TimeIndex::from_entries(&[(0, "?".into()), (2, "b".into()), (1, "a".into())]).unwrap();
        assert_eq!(ok.id("b"), Some(2));
        assert!(TimeIndex::from_entries(&[(1, "a".into()), (3, "c".into())]).is_err());
        assert!(TimeIndex::from_entries(&[(1, "a".into()), (1, "b".into())]).is_err());
    }
}
