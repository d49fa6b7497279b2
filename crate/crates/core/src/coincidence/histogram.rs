use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::tagstream::TimeTagStream;

/// Binned distribution of arrival-time differences `d = t_b − t_a`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceHistogram {
    pub bin_width_ps: i64,
    /// Left edge of the first bin in delay space.
    pub offset_origin_ps: i64,
    pub counts: Vec<u64>,
    pub n_left: u64,
    pub n_right: u64,
    pub integration_s: f64,
}

impl CoincidenceHistogram {
    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn bin_center_ps(&self, i: usize) -> f64 {
        self.offset_origin_ps as f64 + (i as f64 + 0.5) * self.bin_width_ps as f64
    }

    /// Same counts with the delay axis translated by `delta_ps`.
    pub fn shifted(&self, delta_ps: i64) -> Self {
        CoincidenceHistogram {
            offset_origin_ps: self.offset_origin_ps + delta_ps,
            ..self.clone()
        }
    }

    /// CSV with columns `delay_ps,counts` (delay = bin center).
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "delay_ps,counts")?;
        for (i, c) in self.counts.iter().enumerate() {
            writeln!(w, "{},{}", self.bin_center_ps(i), c)?;
        }
        Ok(())
    }
}

fn check_params(window_ps: i64, bin_width_ps: i64) -> Result<()> {
    if bin_width_ps < 1 || window_ps < bin_width_ps {
        return Err(Error::arg(format!(
            "need window >= bin width >= 1 (window {window_ps} ps, bin {bin_width_ps} ps)"
        )));
    }
    Ok(())
}

/// Counts every ordered pair with `|t_b − t_a − guess| <= window`.
///
/// Bin index is `⌊(d − origin) / bin_width⌋` with
/// `origin = guess − window`. The sweep keeps a lower cursor into `b` that
/// only moves forward, so the cost is linear in the inputs plus the number
/// of counted pairs.
pub fn cross_correlate(
    a: &TimeTagStream,
    b: &TimeTagStream,
    window_ps: i64,
    bin_width_ps: i64,
    offset_guess_ps: i64,
) -> Result<CoincidenceHistogram> {
    check_params(window_ps, bin_width_ps)?;
    let origin = offset_guess_ps - window_ps;
    let n_bins = (2 * window_ps / bin_width_ps) as usize + 1;
    let mut counts = vec![0u64; n_bins];
    let bt = b.tags();
    let mut lo = 0usize;
    for &ta in a.tags() {
        let low = ta + origin;
        let high = ta + offset_guess_ps + window_ps;
        while lo < bt.len() && bt[lo] < low {
            lo += 1;
        }
        for &tb in bt[lo..].iter().take_while(|&&tb| tb <= high) {
            counts[((tb - low) / bin_width_ps) as usize] += 1;
        }
    }
    let integration_s = a
        .span()
        .intersection(&b.span())
        .map_or(0.0, |s| s.duration_s());
    Ok(CoincidenceHistogram {
        bin_width_ps,
        offset_origin_ps: origin,
        counts,
        n_left: a.len() as u64,
        n_right: b.len() as u64,
        integration_s,
    })
}

/// Coarse search for the coincidence peak of `b` relative to `a`.
///
/// The sparser stream drives the sweep over at most `max_tags` of its tags;
/// delays in `[−search_ps, search_ps]` are binned at `coarse_bin_ps` and the
/// center of the fullest bin is returned. `None` when no pair was found.
pub fn locate_delay(
    a: &TimeTagStream,
    b: &TimeTagStream,
    search_ps: i64,
    coarse_bin_ps: i64,
    max_tags: usize,
) -> Result<Option<i64>> {
    check_params(search_ps, coarse_bin_ps)?;
    let (driver, other, sign) = if a.len() <= b.len() { (a, b, 1) } else { (b, a, -1) };
    let take = driver.len().min(max_tags);
    if take == 0 {
        return Ok(None);
    }
    let prefix = TimeTagStream::covering(
        driver.channel().clone(),
        driver.tags()[..take].to_vec(),
        driver.span(),
    );
    let h = cross_correlate(&prefix, other, search_ps, coarse_bin_ps, 0)?;
    let (imax, &cmax) = h
        .counts
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.cmp(y.1).then(y.0.cmp(&x.0)))
        .expect("non-empty histogram");
    if cmax == 0 {
        return Ok(None);
    }
    Ok(Some(sign * h.bin_center_ps(imax).round() as i64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tagstream::{Channel, Span};

    fn s(tags: &[i64]) -> TimeTagStream {
        TimeTagStream::new(Channel::D1, tags.to_vec(), Span::new(-10, 1_000_000_000).unwrap()).unwrap()
    }

    #[test]
    fn worked_example() {
        let a = s(&[1000, 5000, 9000]);
        let b = s(&[1200, 5210, 9180]);
        let h = cross_correlate(&a, &b, 500, 100, 0).unwrap();
        assert_eq!(h.offset_origin_ps, -500);
        assert_eq!(h.n_bins(), 11);
        let mut expected = vec![0; 11];
        expected[6] = 1; // d = 180
        expected[7] = 2; // d = 200, 210
        assert_eq!(h.counts, expected);
    }

    #[test]
    fn self_correlation_peaks_at_zero() {
        let a = s(&[10, 2000, 4000, 6000]);
        let h = cross_correlate(&a, &a, 100, 10, 0).unwrap();
        let zero_bin = ((0 - h.offset_origin_ps) / h.bin_width_ps) as usize;
        assert_eq!(h.counts[zero_bin], 4);
        assert_eq!(h.total(), 4);
    }

    #[test]
    fn out_of_window_is_empty() {
        let h = cross_correlate(&s(&[0]), &s(&[1_000_000]), 500, 10, 0).unwrap();
        assert_eq!(h.total(), 0);
        assert!(h.n_bins() >= 3);
    }

    #[test]
    fn empty_stream_gives_zero_histogram() {
        let h = cross_correlate(&s(&[]), &s(&[1, 2]), 50, 10, 0).unwrap();
        assert_eq!(h.total(), 0);
        assert_eq!(h.n_left, 0);
    }

    #[test]
    fn rejects_bad_binning() {
        assert!(cross_correlate(&s(&[]), &s(&[]), 5, 10, 0).is_err());
        assert!(cross_correlate(&s(&[]), &s(&[]), 5, 0, 0).is_err());
    }

    #[test]
    fn csv_uses_bin_centers() {
        let h = cross_correlate(&s(&[0]), &s(&[0]), 10, 10, 0).unwrap();
        let mut out = Vec::new();
        h.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text, "delay_ps,counts\n-5,0\n5,1\n15,0\n");
    }

    #[test]
    fn locate_finds_large_delay() {
        let a: Vec<i64> = (0..200).map(|i| i * 1_000_000).collect();
        let b: Vec<i64> = a.iter().map(|t| t + 42_345).collect();
        let (sa, sb) = (s(&a), s(&b));
        let d = locate_delay(&sa, &sb, 100_000, 1000, 1000).unwrap().unwrap();
        assert!((d - 42_345).abs() <= 500, "{d}");
        let d = locate_delay(&sb, &sa, 100_000, 1000, 1000).unwrap().unwrap();
        assert!((d + 42_345).abs() <= 500, "{d}");
    }
}
