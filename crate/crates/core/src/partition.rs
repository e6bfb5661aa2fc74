use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Assignment of points to disjoint segments. `-1` marks an unassigned point.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Partition {
    pub labels: Vec<i64>,
    pub num_segments: usize,
}

impl Partition {
    /// Relabel arbitrary ids to `0..k` in order of first occurrence.
    /// Negative ids stay unassigned.
    pub fn renumbered(raw: &[i64]) -> Self {
        let mut map: HashMap<i64, i64> = HashMap::new();
        let labels = raw
            .iter()
            .map(|&id| {
                if id < 0 {
                    -1
                } else {
                    let next = map.len() as i64;
                    *map.entry(id).or_insert(next)
                }
            })
            .collect();
        Partition {
            labels,
            num_segments: map.len(),
        }
    }

    /// Wrap labels, checking they are contiguous from zero.
    pub fn from_labels(labels: Vec<i64>) -> Result<Self> {
        let max = labels.iter().copied().max().unwrap_or(-1);
        let mut seen = vec![false; (max + 1).max(0) as usize];
        for &l in &labels {
            if l < -1 {
                return Err(Error::Labels(format!("label {l} is below -1")));
            }
            if l >= 0 {
                seen[l as usize] = true;
            }
        }
        if let Some(gap) = seen.iter().position(|s| !s) {
            return Err(Error::Labels(format!("label {gap} has no members")));
        }
        Ok(Partition {
            num_segments: seen.len(),
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn segment_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_segments];
        for &l in &self.labels {
            if l >= 0 {
                sizes[l as usize] += 1;
            }
        }
        sizes
    }

    /// Point ids of every segment, each list ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.num_segments];
        for (i, &l) in self.labels.iter().enumerate() {
            if l >= 0 {
                members[l as usize].push(i);
            }
        }
        members
    }

    pub fn check_invariants(&self) -> Result<()> {
        let check = Partition::from_labels(self.labels.clone())?;
        if check.num_segments != self.num_segments {
            return Err(Error::Labels(format!(
                "num_segments is {} but labels span {}",
                self.num_segments, check.num_segments
            )));
        }
        Ok(())
    }
}

/// Parse a labels file: one integer per line, line `i` is point `i`.
pub fn parse_labels(text: &str) -> Result<Vec<i64>> {
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            line.trim()
                .parse::<i64>()
                .map_err(|_| Error::Labels(format!("line {}: `{}` is not an integer", i + 1, line.trim())))
        })
        .collect()
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<i64>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text).map_err(|e| Error::Labels(format!("{}: {e}", path.display())))
}

pub fn format_labels(labels: &[i64]) -> String {
    let mut out = String::with_capacity(labels.len() * 3);
    for l in labels {
        out.push_str(&l.to_string());
        out.push('\n');
    }
    out
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[i64]) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(format_labels(labels).as_bytes())
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renumber_by_first_occurrence() {
        let p = Partition::renumbered(&[7, 7, -3, 2, 9, 2]);
        assert_eq!(p.labels, vec![0, 0, -1, 1, 2, 1]);
        assert_eq!(p.num_segments, 3);
        assert_eq!(p.segment_sizes(), vec![2, 2, 1]);
        p.check_invariants().unwrap();
    }

    #[test]
    fn from_labels_rejects_gaps() {
        assert!(Partition::from_labels(vec![0, 2]).is_err());
        assert!(Partition::from_labels(vec![0, -2]).is_err());
        assert_eq!(Partition::from_labels(vec![-1, 1, 0]).unwrap().num_segments, 2);
    }

    #[test]
    fn labels_text() {
        let labels = vec![3, -1, 0];
        assert_eq!(parse_labels(&format_labels(&labels)).unwrap(), labels);
        assert!(parse_labels("1\nx\n").is_err());
    }
}
