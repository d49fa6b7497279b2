//! Channel-labelled detection timestamp streams.
//!
//! Timestamps are integer picoseconds. A stream carries its observation span
//! `[start, end)` so that empty windows still know where they are; every tag
//! satisfies `start <= tag < end` unless the span is empty.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PS_PER_S: f64 = 1e12;

/// Converts seconds to the nearest integer picosecond.
pub fn seconds_to_ps(s: f64) -> i64 {
    (s * PS_PER_S).round() as i64
}

pub fn ps_to_seconds(ps: i64) -> f64 {
    ps as f64 / PS_PER_S
}

/// Detector channel identity.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    D1,
    D2,
    D3,
    D4,
    /// Synthetic channel, e.g. a one-way probe stream.
    Named(String),
}

impl Channel {
    pub const DETECTORS: [Channel; 4] = [Channel::D1, Channel::D2, Channel::D3, Channel::D4];

    /// Index 0..3 for the four physical detectors.
    pub fn index(&self) -> Option<u8> {
        match self {
            Channel::D1 => Some(0),
            Channel::D2 => Some(1),
            Channel::D3 => Some(2),
            Channel::D4 => Some(3),
            Channel::Named(_) => None,
        }
    }

    pub fn from_index(i: u8) -> Option<Channel> {
        Channel::DETECTORS.get(i as usize).cloned()
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Channel::D1 => f.write_str("D1"),
            Channel::D2 => f.write_str("D2"),
            Channel::D3 => f.write_str("D3"),
            Channel::D4 => f.write_str("D4"),
            Channel::Named(name) => f.write_str(name),
        }
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "D1" => Ok(Channel::D1),
            "D2" => Ok(Channel::D2),
            "D3" => Ok(Channel::D3),
            "D4" => Ok(Channel::D4),
            "" => Err(Error::arg("empty channel label")),
            other => Ok(Channel::Named(other.to_string())),
        }
    }
}

/// Half-open observation interval in picoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start_ps: i64,
    pub end_ps: i64,
}

impl Span {
    pub fn new(start_ps: i64, end_ps: i64) -> Result<Self> {
        if start_ps > end_ps {
            return Err(Error::arg(format!(
                "span start {start_ps} ps exceeds end {end_ps} ps"
            )));
        }
        Ok(Span { start_ps, end_ps })
    }

    pub fn len_ps(&self) -> i64 {
        self.end_ps - self.start_ps
    }

    pub fn duration_s(&self) -> f64 {
        ps_to_seconds(self.len_ps())
    }

    pub fn is_empty(&self) -> bool {
        self.start_ps == self.end_ps
    }

    pub fn contains(&self, t: i64) -> bool {
        t >= self.start_ps && t < self.end_ps
    }

    pub fn hull(&self, other: &Span) -> Span {
        Span {
            start_ps: self.start_ps.min(other.start_ps),
            end_ps: self.end_ps.max(other.end_ps),
        }
    }

    pub fn intersection(&self, other: &Span) -> Option<Span> {
        let start = self.start_ps.max(other.start_ps);
        let end = self.end_ps.min(other.end_ps);
        (start <= end).then_some(Span {
            start_ps: start,
            end_ps: end,
        })
    }
}

/// Time-ordered detection timestamps of one channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeTagStream {
    channel: Channel,
    tags: Vec<i64>,
    span: Span,
}

impl TimeTagStream {
    /// Validating constructor: tags must be sorted and inside the span.
    pub fn new(channel: Channel, tags: Vec<i64>, span: Span) -> Result<Self> {
        if let Some(i) = tags.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::arg(format!(
                "channel {channel}: tags not sorted at index {}",
                i + 1
            )));
        }
        if let (Some(&first), Some(&last)) = (tags.first(), tags.last()) {
            if !span.contains(first) || !span.contains(last) {
                return Err(Error::arg(format!(
                    "channel {channel}: tags [{first}, {last}] outside span [{}, {})",
                    span.start_ps, span.end_ps
                )));
            }
        }
        Ok(TimeTagStream {
            channel,
            tags,
            span,
        })
    }

    pub fn empty(channel: Channel, span: Span) -> Self {
        TimeTagStream {
            channel,
            tags: Vec::new(),
            span,
        }
    }

    /// Sorts `tags` and widens `nominal` just enough to contain all of them.
    pub fn covering(channel: Channel, mut tags: Vec<i64>, nominal: Span) -> Self {
        tags.sort_unstable();
        let mut span = nominal;
        if let (Some(&first), Some(&last)) = (tags.first(), tags.last()) {
            span.start_ps = span.start_ps.min(first);
            span.end_ps = span.end_ps.max(last + 1);
        }
        TimeTagStream {
            channel,
            tags,
            span,
        }
    }

    pub fn channel(&self) -> &Channel {
        &self.channel
    }

    pub fn tags(&self) -> &[i64] {
        &self.tags
    }

    pub fn span(&self) -> Span {
        self.span
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn into_tags(self) -> Vec<i64> {
        self.tags
    }

    pub fn with_channel(mut self, channel: Channel) -> Self {
        self.channel = channel;
        self
    }

    /// Tags in `[t0_ps, t1_ps)`; the result's span is the window itself.
    pub fn slice_window(&self, t0_ps: i64, t1_ps: i64) -> Result<TimeTagStream> {
        let span = Span::new(t0_ps, t1_ps)?;
        let lo = self.tags.partition_point(|&t| t < t0_ps);
        let hi = self.tags.partition_point(|&t| t < t1_ps);
        Ok(TimeTagStream {
            channel: self.channel.clone(),
            tags: self.tags[lo..hi.max(lo)].to_vec(),
            span,
        })
    }

    /// Sorted union keeping duplicates; the span becomes the hull of both.
    pub fn merge(&self, other: &TimeTagStream) -> Result<TimeTagStream> {
        if self.channel != other.channel {
            return Err(Error::arg(format!(
                "cannot merge channel {} with {}",
                self.channel, other.channel
            )));
        }
        let (a, b) = (&self.tags, &other.tags);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                out.push(a[i]);
                i += 1;
            } else {
                out.push(b[j]);
                j += 1;
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        Ok(TimeTagStream {
            channel: self.channel.clone(),
            tags: out,
            span: self.span.hull(&other.span),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream(tags: &[i64], span: (i64, i64)) -> TimeTagStream {
        TimeTagStream::new(Channel::D1, tags.to_vec(), Span::new(span.0, span.1).unwrap()).unwrap()
    }

    #[test]
    fn slice_is_half_open() {
        let s = stream(&[10, 20, 30], (0, 100));
        assert_eq!(s.slice_window(15, 30).unwrap().tags(), &[20]);
        assert_eq!(s.slice_window(0, 100).unwrap().tags(), &[10, 20, 30]);
        assert!(s.slice_window(40, 50).unwrap().is_empty());
        let w = s.slice_window(15, 30).unwrap();
        assert_eq!(w.span(), Span::new(15, 30).unwrap());
    }

    #[test]
    fn inverted_window_is_rejected() {
        let s = stream(&[10], (0, 100));
        assert!(matches!(s.slice_window(30, 15), Err(Error::Argument(_))));
    }

    #[test]
    fn merge_examples() {
        let a = stream(&[1, 3], (0, 10));
        assert_eq!(a.merge(&stream(&[2], (0, 10))).unwrap().tags(), &[1, 2, 3]);
        let b = stream(&[1, 2], (0, 10));
        assert_eq!(b.merge(&stream(&[], (0, 10))).unwrap().tags(), &[1, 2]);
        let c = stream(&[1], (0, 10));
        assert_eq!(c.merge(&c).unwrap().tags(), &[1, 1]);
    }

    #[test]
    fn merge_takes_span_hull() {
        let a = stream(&[1], (0, 10));
        let b = stream(&[12], (10, 20));
        assert_eq!(a.merge(&b).unwrap().span(), Span::new(0, 20).unwrap());
    }

    #[test]
    fn merge_rejects_channel_mismatch() {
        let a = stream(&[1], (0, 10));
        let b = a.clone().with_channel(Channel::D2);
        assert!(a.merge(&b).is_err());
    }

    #[test]
    fn constructor_checks_invariants() {
        let span = Span::new(0, 10).unwrap();
        assert!(TimeTagStream::new(Channel::D1, vec![3, 2], span).is_err());
        assert!(TimeTagStream::new(Channel::D1, vec![10], span).is_err());
        assert!(Span::new(5, 4).is_err());
    }

    #[test]
    fn covering_widens_span() {
        let s = TimeTagStream::covering(Channel::D2, vec![50, -5, 7], Span::new(0, 10).unwrap());
        assert_eq!(s.tags(), &[-5, 7, 50]);
        assert_eq!(s.span(), Span::new(-5, 51).unwrap());
    }

    #[test]
    fn channel_labels_round_trip() {
        for ch in Channel::DETECTORS {
            assert_eq!(ch.to_string().parse::<Channel>().unwrap(), ch);
            assert_eq!(Channel::from_index(ch.index().unwrap()), Some(ch));
        }
        assert_eq!("probe".parse::<Channel>().unwrap(), Channel::Named("probe".into()));
    }
}
