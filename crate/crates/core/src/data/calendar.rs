use chrono::{Datelike, NaiveDateTime, Timelike};

use crate::error::{Error, Result};

pub const MINUTES_PER_DAY: u32 = 24 * 60;

/// Time-of-day slot and day of week (Monday = 0) of one step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TimeFeatures {
    pub slot: usize,
    pub weekday: usize,
}

/// Maps step indices of a regularly sampled series to calendar features.
/// Naive local clock; no time zones.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Calendar {
    start: NaiveDateTime,
    interval_minutes: u32,
    len: usize,
    start_minute: u64,
    start_weekday: u64,
}

impl Calendar {
    pub fn new(start: NaiveDateTime, interval_minutes: u32, len: usize) -> Result<Self> {
        if interval_minutes == 0 || MINUTES_PER_DAY % interval_minutes != 0 {
            return Err(Error::Data(format!(
                "interval of {interval_minutes} minutes does not divide 24h"
            )));
        }
        if start.second() != 0 || start.nanosecond() != 0 {
            return Err(Error::Data(format!("start {start} is not on a whole minute")));
        }
        Ok(Self {
            start,
            interval_minutes,
            len,
            start_minute: u64::from(start.hour() * 60 + start.minute()),
            start_weekday: u64::from(start.weekday().num_days_from_monday()),
        })
    }

    pub fn start(&self) -> NaiveDateTime {
        self.start
    }

    pub fn interval_minutes(&self) -> u32 {
        self.interval_minutes
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn slots_per_day(&self) -> usize {
        (MINUTES_PER_DAY / self.interval_minutes) as usize
    }

    pub fn features(&self, index: usize) -> Result<TimeFeatures> {
        if index >= self.len {
            return Err(Error::Calendar {
                index,
                len: self.len,
            });
        }
        let minutes = self.start_minute + index as u64 * u64::from(self.interval_minutes);
        let day = u64::from(MINUTES_PER_DAY);
        Ok(TimeFeatures {
            slot: ((minutes % day) / u64::from(self.interval_minutes)) as usize,
            weekday: ((self.start_weekday + minutes / day) % 7) as usize,
        })
    }

    pub fn timestamp(&self, index: usize) -> NaiveDateTime {
        self.start + chrono::Duration::minutes(index as i64 * i64::from(self.interval_minutes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn jan1() -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2018, 1, 1)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap()
    }

    #[test]
    fn next_day_wraps_slot() {
        let cal = Calendar::new(jan1(), 5, 1000).unwrap();
        let f0 = cal.features(0).unwrap();
        let f = cal.features(288).unwrap();
        assert_eq!(f.slot, 0);
        assert_eq!(f.weekday, (f0.weekday + 1) % 7);
        // 2018-01-01 was a Monday
        assert_eq!(f0.weekday, 0);
    }

    #[test]
    fn full_year_matches_date_arithmetic() {
        let start = NaiveDate::from_ymd_opt(2017, 3, 4)
            .unwrap()
            .and_hms_opt(13, 35, 0)
            .unwrap();
        let cal = Calendar::new(start, 5, 365 * 288).unwrap();
        for i in 0..cal.len() {
            let ts = start + chrono::Duration::minutes(5 * i as i64);
            let f = cal.features(i).unwrap();
            assert_eq!(f.slot, ((ts.hour() * 60 + ts.minute()) / 5) as usize, "step {i}");
            assert_eq!(f.weekday, ts.weekday().num_days_from_monday() as usize);
        }
    }

    #[test]
    fn rejects_bad_interval_and_range() {
        assert!(Calendar::new(jan1(), 7, 10).is_err());
        let cal = Calendar::new(jan1(), 15, 10).unwrap();
        assert_eq!(cal.slots_per_day(), 96);
        assert!(matches!(cal.features(10), Err(Error::Calendar { .. })));
    }
}
