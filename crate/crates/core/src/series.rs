//! Stations, daily series and calendar arithmetic.
//!
//! A [`StationSeries`] always covers a contiguous run of calendar days; days
//! without an observation are stored as `None` rather than skipped.

use chrono::{Datelike, Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub id: String,
    pub name: String,
    /// Degrees east.
    pub longitude: f64,
    /// Degrees north.
    pub latitude: f64,
    /// Meters above sea level.
    pub elevation: f64,
}

impl Station {
    pub fn new(
        id: impl Into<String>,
        name: impl Into<String>,
        longitude: f64,
        latitude: f64,
        elevation: f64,
    ) -> Result<Self> {
        let station = Station {
            id: id.into(),
            name: name.into(),
            longitude,
            latitude,
            elevation,
        };
        station.validate()?;
        Ok(station)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: &str| {
            Err(Error::InvalidStation {
                id: self.id.clone(),
                reason: reason.to_string(),
            })
        };
        if self.id.is_empty() {
            return fail("empty id");
        }
        if !(-180.0..=180.0).contains(&self.longitude) {
            return fail("longitude outside [-180, 180]");
        }
        if !(-90.0..=90.0).contains(&self.latitude) {
            return fail("latitude outside [-90, 90]");
        }
        if !(self.elevation >= -500.0) || !self.elevation.is_finite() {
            return fail("elevation below -500 m");
        }
        Ok(())
    }
}

pub fn is_leap_year(year: i32) -> bool {
    (year % 4 == 0 && year % 100 != 0) || year % 400 == 0
}

pub fn year_length(year: i32) -> u32 {
    if is_leap_year(year) {
        366
    } else {
        365
    }
}

/// Calendar position of one day as used by the seasonal terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DayContext {
    pub year: i32,
    pub month: u32,
    /// 1..=365, or 1..=366 in leap years.
    pub day_of_year: u32,
    pub year_length: u32,
}

impl DayContext {
    pub fn from_date(date: NaiveDate) -> Self {
        DayContext {
            year: date.year(),
            month: date.month(),
            day_of_year: date.ordinal(),
            year_length: year_length(date.year()),
        }
    }

    /// 2π·day_of_year / year_length.
    pub fn angle(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.day_of_year as f64 / self.year_length as f64
    }

    /// (sin, cos) of [`DayContext::angle`].
    pub fn harmonics(&self) -> (f64, f64) {
        self.angle().sin_cos()
    }
}

/// Daily maximum temperatures at one station over consecutive days.
#[derive(Debug, Clone, PartialEq)]
pub struct StationSeries {
    pub station: Station,
    pub start_date: NaiveDate,
    /// °C, one entry per day starting at `start_date`.
    pub values: Vec<Option<f64>>,
}

impl StationSeries {
    pub fn new(station: Station, start_date: NaiveDate, values: Vec<Option<f64>>) -> Self {
        StationSeries {
            station,
            start_date,
            values,
        }
    }

    /// Builds a gap-free series from dated observations. Days between the
    /// first and last observation that are absent become missing; repeated
    /// dates are rejected.
    pub fn from_observations(
        station: Station,
        observations: &[(NaiveDate, Option<f64>)],
    ) -> Result<Self> {
        let mut obs: Vec<_> = observations.to_vec();
        obs.sort_by_key(|(d, _)| *d);
        let Some(&(start, _)) = obs.first() else {
            return Ok(StationSeries::new(station, NaiveDate::MIN, Vec::new()));
        };
        let end = obs.last().map(|(d, _)| *d).unwrap_or(start);
        let n = (end - start).num_days() as usize + 1;
        let mut values = vec![None; n];
        let mut seen = vec![false; n];
        for (date, value) in obs {
            let i = (date - start).num_days() as usize;
            if seen[i] {
                return Err(Error::InvalidData(format!(
                    "duplicate date {date} for station {}",
                    station.id
                )));
            }
            seen[i] = true;
            values[i] = value;
        }
        Ok(StationSeries::new(station, start, values))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn date(&self, index: usize) -> NaiveDate {
        self.start_date + Duration::days(index as i64)
    }

    pub fn end_date(&self) -> Option<NaiveDate> {
        self.len().checked_sub(1).map(|i| self.date(i))
    }

    pub fn day(&self, index: usize) -> DayContext {
        DayContext::from_date(self.date(index))
    }

    pub fn day_of_year(&self, index: usize) -> u32 {
        self.day(index).day_of_year
    }

    /// Calendar year of the entry at `index`.
    pub fn year(&self, index: usize) -> i32 {
        self.date(index).year()
    }

    pub fn observed_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    /// Sub-series restricted to `[from, to]` (inclusive), clipped to the
    /// available span.
    pub fn window(&self, from: NaiveDate, to: NaiveDate) -> StationSeries {
        let Some(end) = self.end_date() else {
            return self.clone();
        };
        let from = from.max(self.start_date);
        let to = to.min(end);
        if from > to {
            return StationSeries::new(self.station.clone(), from, Vec::new());
        }
        let a = (from - self.start_date).num_days() as usize;
        let b = (to - self.start_date).num_days() as usize;
        StationSeries::new(self.station.clone(), from, self.values[a..=b].to_vec())
    }
}
