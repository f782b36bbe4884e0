//! Business-day calendar and the quarterly rebalance schedule.
//!
//! A business day is any weekday that is not in the holiday set. The default
//! holiday set is the US market calendar (computed from the recurrence rules,
//! including Good Friday via the Gregorian Easter computus); callers with
//! exchange-specific needs can supply their own holiday list.
//!
//! Rebalancing happens on the last business days of March, June, September,
//! and December. Quarterly statements become usable on the last business day
//! of the calendar quarter *after* the one they cover — e.g. a fiscal quarter
//! ending 2020-03-31 is not visible to any query dated before 2020-06-30.

use std::collections::BTreeSet;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use thiserror::Error;

/// Errors raised when validating an explicit rebalance schedule.
#[derive(Debug, Error)]
pub enum CalendarError {
    #[error("rebalance date {0} is not in a quarter-end month (Mar/Jun/Sep/Dec)")]
    NotQuarterEndMonth(NaiveDate),
    #[error("rebalance date {date} is not the last business day of its month (expected {expected})")]
    NotLastBusinessDay { date: NaiveDate, expected: NaiveDate },
    #[error("rebalance dates out of order: {prev} is not before {next}")]
    OutOfOrder { prev: NaiveDate, next: NaiveDate },
    #[error("rebalance schedule is empty")]
    Empty,
}

// ---------------------------------------------------------------------------
// Holiday rules
// ---------------------------------------------------------------------------

/// Gregorian Easter Sunday (anonymous/Meeus computus).
fn easter_sunday(year: i32) -> NaiveDate {
    let a = year % 19;
    let b = year / 100;
    let c = year % 100;
    let d = b / 4;
    let e = b % 4;
    let f = (b + 8) / 25;
    let g = (b - f + 1) / 3;
    let h = (19 * a + b - d - g + 15) % 30;
    let i = c / 4;
    let k = c % 4;
    let l = (32 + 2 * e + 2 * i - h - k) % 7;
    let m = (a + 11 * h + 22 * l) / 451;
    let month = (h + l - 7 * m + 114) / 31;
    let day = (h + l - 7 * m + 114) % 31 + 1;
    NaiveDate::from_ymd_opt(year, month as u32, day as u32).expect("computus yields a valid date")
}

fn nth_weekday(year: i32, month: u32, weekday: Weekday, nth: u32) -> NaiveDate {
    let first = NaiveDate::from_ymd_opt(year, month, 1).expect("valid month start");
    let offset = (7 + weekday.num_days_from_monday() as i64
        - first.weekday().num_days_from_monday() as i64)
        % 7;
    first + Duration::days(offset + 7 * (nth as i64 - 1))
}

fn last_weekday_of_month(year: i32, month: u32, weekday: Weekday) -> NaiveDate {
    let last = last_day_of_month(year, month);
    let offset = (7 + last.weekday().num_days_from_monday() as i64
        - weekday.num_days_from_monday() as i64)
        % 7;
    last - Duration::days(offset)
}

fn last_day_of_month(year: i32, month: u32) -> NaiveDate {
    let (ny, nm) = if month == 12 { (year + 1, 1) } else { (year, month + 1) };
    NaiveDate::from_ymd_opt(ny, nm, 1).expect("valid month start") - Duration::days(1)
}

/// Fixed-date holiday shifted per market convention: Saturday observances move
/// to Friday, Sunday observances to Monday. New Year's Day is the exception —
/// when Jan 1 falls on a Saturday the market simply does not observe it.
fn observed(date: NaiveDate, saturday_to_friday: bool) -> Option<NaiveDate> {
    match date.weekday() {
        Weekday::Sat => saturday_to_friday.then(|| date - Duration::days(1)),
        Weekday::Sun => Some(date + Duration::days(1)),
        _ => Some(date),
    }
}

fn us_market_holidays(year: i32, out: &mut BTreeSet<NaiveDate>) {
    let ymd = |m: u32, d: u32| NaiveDate::from_ymd_opt(year, m, d).expect("valid holiday date");
    // New Year's Day: Saturday occurrences are not made up.
    if let Some(d) = observed(ymd(1, 1), false) {
        out.insert(d);
    }
    out.insert(nth_weekday(year, 1, Weekday::Mon, 3)); // Martin Luther King Jr. Day
    out.insert(nth_weekday(year, 2, Weekday::Mon, 3)); // Washington's Birthday
    out.insert(easter_sunday(year) - Duration::days(2)); // Good Friday
    out.insert(last_weekday_of_month(year, 5, Weekday::Mon)); // Memorial Day
    if year >= 2022 {
        if let Some(d) = observed(ymd(6, 19), true) {
            out.insert(d); // Juneteenth (market observance began 2022)
        }
    }
    if let Some(d) = observed(ymd(7, 4), true) {
        out.insert(d); // Independence Day
    }
    out.insert(nth_weekday(year, 9, Weekday::Mon, 1)); // Labor Day
    out.insert(nth_weekday(year, 11, Weekday::Thu, 4)); // Thanksgiving
    if let Some(d) = observed(ymd(12, 25), true) {
        out.insert(d); // Christmas
    }
}

const HOLIDAY_YEARS: std::ops::RangeInclusive<i32> = 1980..=2099;

// ---------------------------------------------------------------------------
// Business-day calendar
// ---------------------------------------------------------------------------

/// Weekend-plus-holiday trading calendar.
#[derive(Debug, Clone)]
pub struct BusinessCalendar {
    holidays: BTreeSet<NaiveDate>,
}

impl BusinessCalendar {
    /// Calendar with the computed US market holiday set (1980–2099).
    pub fn us_market() -> Self {
        let mut holidays = BTreeSet::new();
        for year in HOLIDAY_YEARS {
            us_market_holidays(year, &mut holidays);
        }
        Self { holidays }
    }

    /// Calendar with an explicit holiday list (weekends are always non-business).
    pub fn with_holidays(holidays: impl IntoIterator<Item = NaiveDate>) -> Self {
        Self { holidays: holidays.into_iter().collect() }
    }

    /// US market calendar with ad-hoc closures merged in (e.g. disaster days).
    pub fn us_market_with(extra: impl IntoIterator<Item = NaiveDate>) -> Self {
        let mut cal = Self::us_market();
        cal.holidays.extend(extra);
        cal
    }

    pub fn is_business_day(&self, day: NaiveDate) -> bool {
        !matches!(day.weekday(), Weekday::Sat | Weekday::Sun) && !self.holidays.contains(&day)
    }

    /// Greatest business day `<= day`.
    pub fn business_day_at_or_before(&self, day: NaiveDate) -> NaiveDate {
        let mut d = day;
        while !self.is_business_day(d) {
            d -= Duration::days(1);
        }
        d
    }

    /// The business day `n` steps strictly before `day` (`n = 0` means the
    /// greatest business day `< day`... callers pass `n >= 1` for "n business
    /// days back from `day`", counting `day` itself if it is a business day).
    pub fn business_days_back(&self, day: NaiveDate, n: u32) -> NaiveDate {
        let mut d = self.business_day_at_or_before(day);
        for _ in 0..n {
            d = self.business_day_at_or_before(d - Duration::days(1));
        }
        d
    }

    /// All business days in `[from, to]`, ascending.
    pub fn business_days(&self, from: NaiveDate, to: NaiveDate) -> Vec<NaiveDate> {
        let mut days = Vec::new();
        let mut d = from;
        while d <= to {
            if self.is_business_day(d) {
                days.push(d);
            }
            d += Duration::days(1);
        }
        days
    }

    pub fn last_business_day_of_month(&self, year: i32, month: u32) -> NaiveDate {
        self.business_day_at_or_before(last_day_of_month(year, month))
    }

    /// Last business day of calendar quarter `q` (1-based) of `year`.
    pub fn quarter_last_business_day(&self, year: i32, quarter: u32) -> NaiveDate {
        debug_assert!((1..=4).contains(&quarter));
        self.last_business_day_of_month(year, quarter * 3)
    }

    /// Default availability date for a statement covering the quarter that
    /// contains `period_end`: the last business day of the following quarter.
    pub fn derive_available_from(&self, period_end: NaiveDate) -> NaiveDate {
        let (year, quarter) = quarter_of(period_end);
        let (ny, nq) = if quarter == 4 { (year + 1, 1) } else { (year, quarter + 1) };
        self.quarter_last_business_day(ny, nq)
    }

    /// Last business day of the quarter before the one containing `day`.
    /// For a rebalance date this is the previous rebalance date, which makes
    /// `[previous, day]` the trailing one-quarter trading window.
    pub fn previous_quarter_last_business_day(&self, day: NaiveDate) -> NaiveDate {
        let (year, quarter) = quarter_of(day);
        let (py, pq) = if quarter == 1 { (year - 1, 4) } else { (year, quarter - 1) };
        self.quarter_last_business_day(py, pq)
    }

    /// Quarter-end rebalance dates falling inside `[from, to]`.
    pub fn rebalance_dates(&self, from: NaiveDate, to: NaiveDate) -> Vec<NaiveDate> {
        let (mut year, mut quarter) = quarter_of(from);
        let mut dates = Vec::new();
        loop {
            let d = self.quarter_last_business_day(year, quarter);
            if d > to {
                break;
            }
            if d >= from {
                dates.push(d);
            }
            if quarter == 4 {
                year += 1;
                quarter = 1;
            } else {
                quarter += 1;
            }
        }
        dates
    }
}

/// `(year, quarter)` of a date, quarter 1-based.
pub fn quarter_of(day: NaiveDate) -> (i32, u32) {
    (day.year(), (day.month() - 1) / 3 + 1)
}

// ---------------------------------------------------------------------------
// Rebalance schedule
// ---------------------------------------------------------------------------

/// Strictly increasing quarter-end rebalance dates.
#[derive(Debug, Clone)]
pub struct RebalanceCalendar {
    dates: Vec<NaiveDate>,
}

impl RebalanceCalendar {
    /// Validates that every date is the last business day of a quarter-end
    /// month and that the sequence is strictly increasing.
    pub fn new(dates: Vec<NaiveDate>, cal: &BusinessCalendar) -> Result<Self, CalendarError> {
        if dates.is_empty() {
            return Err(CalendarError::Empty);
        }
        for (i, &d) in dates.iter().enumerate() {
            if !matches!(d.month(), 3 | 6 | 9 | 12) {
                return Err(CalendarError::NotQuarterEndMonth(d));
            }
            let expected = cal.last_business_day_of_month(d.year(), d.month());
            if d != expected {
                return Err(CalendarError::NotLastBusinessDay { date: d, expected });
            }
            if i > 0 && dates[i - 1] >= d {
                return Err(CalendarError::OutOfOrder { prev: dates[i - 1], next: d });
            }
        }
        Ok(Self { dates })
    }

    /// All rebalance dates in `[from, to]` under `cal`.
    pub fn from_range(cal: &BusinessCalendar, from: NaiveDate, to: NaiveDate) -> Result<Self, CalendarError> {
        Self::new(cal.rebalance_dates(from, to), cal)
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    /// The rebalance date immediately after `day`, if any.
    pub fn next_after(&self, day: NaiveDate) -> Option<NaiveDate> {
        self.dates.iter().copied().find(|&d| d > day)
    }

    pub fn first(&self) -> NaiveDate {
        self.dates[0]
    }

    pub fn last(&self) -> NaiveDate {
        *self.dates.last().expect("schedule is non-empty")
    }
}
