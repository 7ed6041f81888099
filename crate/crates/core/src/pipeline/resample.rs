//! Hourly resampling of raw device streams.

use super::{HourStamp, HourlySeries, RawSeries};

/// Resamples a raw stream to hourly averages.
///
/// Each hour's value is the arithmetic mean of the raw samples whose
/// timestamp falls in `[h, h+1)`; NA samples contribute nothing. Hours with
/// no (non-NA) samples are NA. An empty input yields an empty series.
pub fn resample_hourly(raw: &RawSeries) -> HourlySeries {
    let samples = raw.samples();
    if samples.is_empty() {
        return HourlySeries {
            sensor_id: raw.sensor_id.clone(),
            start_hour: HourStamp(0),
            values: Vec::new(),
        };
    }
    let start = HourStamp::from_unix_seconds(samples[0].0);
    let end = HourStamp::from_unix_seconds(samples[samples.len() - 1].0);
    let len = (end.0 - start.0 + 1) as usize;
    let mut sums = vec![0.0; len];
    let mut counts = vec![0usize; len];
    for &(ts, value) in samples {
        if let Some(v) = value {
            let slot = (HourStamp::from_unix_seconds(ts).0 - start.0) as usize;
            sums[slot] += v;
            counts[slot] += 1;
        }
    }
    let values = sums
        .into_iter()
        .zip(counts)
        .map(|(s, n)| if n == 0 { None } else { Some(s / n as f64) })
        .collect();
    HourlySeries {
        sensor_id: raw.sensor_id.clone(),
        start_hour: start,
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use std::collections::BTreeMap;

    fn secs(hour: i64, minute: i64) -> i64 {
        hour * 3600 + minute * 60
    }

    #[test]
    fn mean_of_two_samples_in_one_hour() {
        let raw = RawSeries::new(
            "s",
            vec![(secs(10, 5), Some(4.0)), (secs(10, 35), Some(6.0))],
        )
        .unwrap();
        let hourly = resample_hourly(&raw);
        assert_eq!(hourly.start_hour, HourStamp(10));
        assert_eq!(hourly.values, vec![Some(5.0)]);
    }

    #[test]
    fn hour_with_no_samples_is_na_not_missing_slot() {
        let raw = RawSeries::new(
            "s",
            vec![(secs(10, 0), Some(1.0)), (secs(12, 0), Some(3.0))],
        )
        .unwrap();
        let hourly = resample_hourly(&raw);
        assert_eq!(hourly.values, vec![Some(1.0), None, Some(3.0)]);
    }

    #[test]
    fn empty_input_gives_empty_series() {
        let raw = RawSeries::new("s", vec![]).unwrap();
        assert!(resample_hourly(&raw).is_empty());
    }

    #[test]
    fn na_samples_do_not_contribute() {
        let raw = RawSeries::new(
            "s",
            vec![
                (secs(5, 0), None),
                (secs(5, 30), Some(8.0)),
                (secs(6, 10), None),
            ],
        )
        .unwrap();
        let hourly = resample_hourly(&raw);
        assert_eq!(hourly.values, vec![Some(8.0), None]);
    }

    /// Brute-force oracle: an independent group-by-hour mean over random data.
    #[test]
    fn random_samples_match_brute_force_group_by() {
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        let mut ts = 0i64;
        let mut samples = Vec::new();
        for _ in 0..1000 {
            ts += rng.gen_range(60..7200);
            let v = if rng.gen_bool(0.1) {
                None
            } else {
                Some(rng.gen_range(-50.0..50.0))
            };
            samples.push((ts, v));
        }
        let raw = RawSeries::new("s", samples.clone()).unwrap();
        let hourly = resample_hourly(&raw);

        let mut groups: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
        for (t, v) in samples {
            if let Some(v) = v {
                groups.entry(t.div_euclid(3600)).or_default().push(v);
            }
        }
        for (i, v) in hourly.values.iter().enumerate() {
            let hour = hourly.start_hour.0 + i as i64;
            match groups.get(&hour) {
                Some(vs) => {
                    let mean = vs.iter().sum::<f64>() / vs.len() as f64;
                    assert!((v.unwrap() - mean).abs() < 1e-12);
                }
                None => assert!(v.is_none()),
            }
        }
    }

    /// Feeding the hourly output back in (as hour-aligned raw samples) is a
    /// no-op.
    #[test]
    fn resample_is_idempotent_on_its_own_output() {
        let raw = RawSeries::new(
            "s",
            vec![
                (secs(2, 10), Some(4.0)),
                (secs(2, 50), Some(8.0)),
                (secs(4, 0), Some(1.0)),
            ],
        )
        .unwrap();
        let first = resample_hourly(&raw);
        let echoed = RawSeries::new(
            "s",
            first
                .values
                .iter()
                .enumerate()
                .map(|(i, v)| (first.hour_at(i).as_unix_seconds(), *v))
                .collect(),
        )
        .unwrap();
        let second = resample_hourly(&echoed);
        assert_eq!(first, second);
    }
}
