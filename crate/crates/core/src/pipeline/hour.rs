//! Hourly timestamps as whole hours since the Unix epoch.

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use std::fmt;

use super::DataError;

/// One UTC hour, stored as hours since 1970-01-01T00:00:00Z.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HourStamp(pub i64);

impl HourStamp {
    /// Floors a Unix-seconds timestamp to its hour.
    pub fn from_unix_seconds(secs: i64) -> Self {
        HourStamp(secs.div_euclid(3600))
    }

    pub fn as_unix_seconds(self) -> i64 {
        self.0 * 3600
    }

    /// Parses an ISO-8601 / RFC 3339 UTC timestamp and floors it to the hour.
    pub fn parse(s: &str) -> Result<Self, DataError> {
        let dt = DateTime::parse_from_rfc3339(s).map_err(|e| DataError::Timestamp {
            value: s.to_string(),
            reason: e.to_string(),
        })?;
        Ok(Self::from_unix_seconds(dt.timestamp()))
    }

    pub fn succ(self) -> Self {
        HourStamp(self.0 + 1)
    }
}

impl fmt::Display for HourStamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dt: DateTime<Utc> = Utc
            .timestamp_opt(self.as_unix_seconds(), 0)
            .single()
            .expect("hour stamp in representable range");
        write!(f, "{}", dt.format("%Y-%m-%dT%H:%M:%SZ"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_format_round_trip() {
        let h = HourStamp::parse("2021-03-04T05:00:00Z").unwrap();
        assert_eq!(h.to_string(), "2021-03-04T05:00:00Z");
    }

    #[test]
    fn sub_hour_precision_floors() {
        let a = HourStamp::parse("2021-03-04T05:59:59Z").unwrap();
        let b = HourStamp::parse("2021-03-04T05:00:00Z").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.succ().to_string(), "2021-03-04T06:00:00Z");
    }

    #[test]
    fn bad_timestamp_is_a_data_error() {
        assert!(HourStamp::parse("yesterday").is_err());
    }
}
