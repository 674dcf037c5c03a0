//! Return computation and movement labeling.
//!
//! Weekly returns map onto twelve movement labels: `U1`..`U5` and `U5+` for
//! upward moves (0-1%, 1-2%, 2-3%, 3-4%, 4-5%, over 5%) and `D1`..`D5+` for
//! the corresponding downward bands. Band boundaries are half-open: band `k`
//! covers `[(k-1)%, k%)` of the absolute return, `5+` covers everything at or
//! above 5%. A return of exactly zero labels as `U1`.
//!
//! Returns are simple (not log) returns throughout.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market_data::DailyBar;

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("close price must be positive, got {0}")]
    NonPositiveClose(f64),
    #[error("return is not finite")]
    NonFiniteReturn,
    #[error("no bars to compute returns over")]
    EmptyBars,
    #[error("bars must be strictly ascending by date, {0} repeats or regresses")]
    UnsortedBars(NaiveDate),
    #[error("unknown movement label {0:?}")]
    UnknownLabel(String),
}

/// Direction of a weekly move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Up,
    Down,
}

/// Percent band of a weekly move. Band `k` covers `[(k-1)%, k%)` of the
/// absolute return; `FivePlus` covers 5% and above.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Band {
    One,
    Two,
    Three,
    Four,
    Five,
    FivePlus,
}

impl Band {
    /// Band index 1..=6, where 6 is the open-ended `5+` band.
    pub fn index(self) -> u8 {
        match self {
            Band::One => 1,
            Band::Two => 2,
            Band::Three => 3,
            Band::Four => 4,
            Band::Five => 5,
            Band::FivePlus => 6,
        }
    }

    fn suffix(self) -> &'static str {
        match self {
            Band::One => "1",
            Band::Two => "2",
            Band::Three => "3",
            Band::Four => "4",
            Band::Five => "5",
            Band::FivePlus => "5+",
        }
    }
}

/// One of the twelve weekly movement labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MovementLabel {
    pub direction: Direction,
    pub band: Band,
}

impl MovementLabel {
    /// All twelve labels, up bands first.
    pub const ALL: [MovementLabel; 12] = {
        const BANDS: [Band; 6] = [
            Band::One,
            Band::Two,
            Band::Three,
            Band::Four,
            Band::Five,
            Band::FivePlus,
        ];
        let mut all = [MovementLabel {
            direction: Direction::Up,
            band: Band::One,
        }; 12];
        let mut i = 0;
        while i < 6 {
            all[i] = MovementLabel {
                direction: Direction::Up,
                band: BANDS[i],
            };
            all[i + 6] = MovementLabel {
                direction: Direction::Down,
                band: BANDS[i],
            };
            i += 1;
        }
        all
    };

    /// Parse a label token such as `U3` or `d5+` (case-insensitive).
    pub fn parse(s: &str) -> Result<Self, LabelError> {
        let t = s.trim();
        let direction = match t.chars().next() {
            Some('U') | Some('u') => Direction::Up,
            Some('D') | Some('d') => Direction::Down,
            _ => return Err(LabelError::UnknownLabel(s.to_string())),
        };
        let band = match &t[1..] {
            "1" => Band::One,
            "2" => Band::Two,
            "3" => Band::Three,
            "4" => Band::Four,
            "5" => Band::Five,
            "5+" => Band::FivePlus,
            _ => return Err(LabelError::UnknownLabel(s.to_string())),
        };
        Ok(MovementLabel { direction, band })
    }
}

impl std::fmt::Display for MovementLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let d = match self.direction {
            Direction::Up => 'U',
            Direction::Down => 'D',
        };
        write!(f, "{}{}", d, self.band.suffix())
    }
}

/// Daily closes with per-day simple returns for one week.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSeries {
    pub dates: Vec<NaiveDate>,
    pub closes: Vec<f64>,
    /// Simple return fractions; `returns[0]` is computed against the prior
    /// week's final close, `returns[i]` against `closes[i-1]` for `i >= 1`.
    pub returns: Vec<f64>,
}

/// Daily simple returns for `bars`, with the first return computed against
/// `prior_close` (the previous week's final close).
pub fn daily_returns(bars: &[DailyBar], prior_close: f64) -> Result<ReturnSeries, LabelError> {
    if bars.is_empty() {
        return Err(LabelError::EmptyBars);
    }
    if prior_close <= 0.0 {
        return Err(LabelError::NonPositiveClose(prior_close));
    }
    let mut dates = Vec::with_capacity(bars.len());
    let mut closes = Vec::with_capacity(bars.len());
    let mut returns = Vec::with_capacity(bars.len());
    let mut prev = prior_close;
    let mut prev_date = None;
    for bar in bars {
        if bar.close <= 0.0 {
            return Err(LabelError::NonPositiveClose(bar.close));
        }
        if let Some(p) = prev_date {
            if bar.date <= p {
                return Err(LabelError::UnsortedBars(bar.date));
            }
        }
        dates.push(bar.date);
        closes.push(bar.close);
        returns.push(bar.close / prev - 1.0);
        prev = bar.close;
        prev_date = Some(bar.date);
    }
    Ok(ReturnSeries {
        dates,
        closes,
        returns,
    })
}

/// Weekly simple return: `final_close / prior_close - 1`.
pub fn weekly_return(prior_close: f64, final_close: f64) -> Result<f64, LabelError> {
    if prior_close <= 0.0 {
        return Err(LabelError::NonPositiveClose(prior_close));
    }
    if final_close <= 0.0 {
        return Err(LabelError::NonPositiveClose(final_close));
    }
    Ok(final_close / prior_close - 1.0)
}

/// Map a weekly return fraction onto one of the twelve movement labels.
///
/// The sign selects up/down (exactly zero maps to `U1`); the band is chosen
/// from the absolute return percentage under the half-open convention.
pub fn movement_label(weekly_return: f64) -> Result<MovementLabel, LabelError> {
    if !weekly_return.is_finite() {
        return Err(LabelError::NonFiniteReturn);
    }
    let direction = if weekly_return < 0.0 {
        Direction::Down
    } else {
        Direction::Up
    };
    let pct = weekly_return.abs() * 100.0;
    let band = if pct < 1.0 {
        Band::One
    } else if pct < 2.0 {
        Band::Two
    } else if pct < 3.0 {
        Band::Three
    } else if pct < 4.0 {
        Band::Four
    } else if pct < 5.0 {
        Band::Five
    } else {
        Band::FivePlus
    };
    Ok(MovementLabel { direction, band })
}

/// Up/down direction of a label.
pub fn direction(label: MovementLabel) -> Direction {
    label.direction
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bar(date: &str, close: f64) -> DailyBar {
        DailyBar {
            ticker: "T".to_string(),
            date: date.parse().unwrap(),
            close,
        }
    }

    #[test]
    fn daily_returns_against_prior_close() {
        let series =
            daily_returns(&[bar("2024-06-03", 102.0), bar("2024-06-04", 101.0)], 100.0).unwrap();
        assert!((series.returns[0] - 0.02).abs() < 1e-12);
        assert!((series.returns[1] - (101.0 / 102.0 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn daily_returns_identity() {
        let series = daily_returns(&[bar("2024-06-03", 100.0)], 100.0).unwrap();
        assert_eq!(series.returns, vec![0.0]);
    }

    #[test]
    fn daily_returns_five_bar_spreadsheet_check() {
        // Expected values recomputed independently: r[i] = c[i]/c[i-1] - 1.
        let closes = [182.5, 184.1, 183.0, 186.7, 185.2];
        let prior = 180.0;
        let bars: Vec<DailyBar> = closes
            .iter()
            .enumerate()
            .map(|(i, &c)| DailyBar {
                ticker: "T".into(),
                date: chrono::NaiveDate::from_ymd_opt(2024, 6, 3 + i as u32).unwrap(),
                close: c,
            })
            .collect();
        let series = daily_returns(&bars, prior).unwrap();
        let expected = [
            182.5 / 180.0 - 1.0,
            184.1 / 182.5 - 1.0,
            183.0 / 184.1 - 1.0,
            186.7 / 183.0 - 1.0,
            185.2 / 186.7 - 1.0,
        ];
        for (got, want) in series.returns.iter().zip(expected) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn daily_returns_rejects_bad_input() {
        assert!(matches!(
            daily_returns(&[], 100.0),
            Err(LabelError::EmptyBars)
        ));
        assert!(matches!(
            daily_returns(&[bar("2024-06-03", -1.0)], 100.0),
            Err(LabelError::NonPositiveClose(_))
        ));
        assert!(matches!(
            daily_returns(&[bar("2024-06-03", 100.0)], 0.0),
            Err(LabelError::NonPositiveClose(_))
        ));
        assert!(matches!(
            daily_returns(&[bar("2024-06-04", 100.0), bar("2024-06-04", 101.0)], 99.0),
            Err(LabelError::UnsortedBars(_))
        ));
    }

    #[test]
    fn weekly_return_examples() {
        assert!((weekly_return(100.0, 103.0).unwrap() - 0.03).abs() < 1e-12);
        assert_eq!(weekly_return(100.0, 100.0).unwrap(), 0.0);
        assert!((weekly_return(200.0, 190.0).unwrap() + 0.05).abs() < 1e-12);
        assert!(weekly_return(0.0, 100.0).is_err());
        assert!(weekly_return(100.0, -3.0).is_err());
    }

    #[test]
    fn movement_label_band_examples() {
        assert_eq!(movement_label(0.025).unwrap().to_string(), "U3");
        assert_eq!(movement_label(-0.062).unwrap().to_string(), "D5+");
        assert_eq!(movement_label(0.0).unwrap().to_string(), "U1");
        assert_eq!(movement_label(0.05).unwrap().to_string(), "U5+");
        assert_eq!(movement_label(-0.0099).unwrap().to_string(), "D1");
        assert!(movement_label(f64::NAN).is_err());
        assert!(movement_label(f64::INFINITY).is_err());
    }

    #[test]
    fn direction_examples() {
        assert_eq!(
            direction(MovementLabel::parse("U5+").unwrap()),
            Direction::Up
        );
        assert_eq!(direction(MovementLabel::parse("D1").unwrap()), Direction::Down);
        assert_eq!(direction(movement_label(0.001).unwrap()), Direction::Up);
    }

    #[test]
    fn label_round_trips_through_display() {
        for label in MovementLabel::ALL {
            assert_eq!(MovementLabel::parse(&label.to_string()).unwrap(), label);
        }
        assert_eq!(
            MovementLabel::parse("u5+").unwrap().to_string(),
            "U5+"
        );
        assert!(MovementLabel::parse("X3").is_err());
        assert!(MovementLabel::parse("U6").is_err());
        assert!(MovementLabel::parse("U").is_err());
    }

    proptest! {
        #[test]
        fn band_monotone_within_sign(a in -0.2f64..0.2, b in -0.2f64..0.2) {
            let (lo, hi) = if a.abs() <= b.abs() { (a.abs(), b.abs()) } else { (b.abs(), a.abs()) };
            let lo_band = movement_label(lo).unwrap().band;
            let hi_band = movement_label(hi).unwrap().band;
            prop_assert!(lo_band <= hi_band);
        }

        #[test]
        fn sign_coherence(r in -0.5f64..0.5) {
            let label = movement_label(r).unwrap();
            let expected = if r >= 0.0 { Direction::Up } else { Direction::Down };
            prop_assert_eq!(label.direction, expected);
        }

        #[test]
        fn daily_weekly_consistency(closes in proptest::collection::vec(1.0f64..500.0, 1..8), prior in 1.0f64..500.0) {
            let bars: Vec<DailyBar> = closes.iter().enumerate().map(|(i, &c)| DailyBar {
                ticker: "T".into(),
                date: chrono::NaiveDate::from_ymd_opt(2024, 1, 1).unwrap() + chrono::Days::new(i as u64),
                close: c,
            }).collect();
            let series = daily_returns(&bars, prior).unwrap();
            let compounded: f64 = series.returns.iter().map(|r| 1.0 + r).product();
            let weekly = weekly_return(prior, *closes.last().unwrap()).unwrap();
            prop_assert!((compounded - (1.0 + weekly)).abs() <= 1e-12 * (1.0 + weekly.abs()));
        }
    }
}
