use std::f64::consts::PI;

use chrono::{Datelike, Duration, NaiveDate};

/// `[sin, cos]` of day-of-year over 365, `[sin, cos]` of month over 12, and
/// the calendar year, for day index `day` counted from January 1 of
/// `start_year`. Day-of-year and month are 0-based.
pub fn temporal_encodings(day: u32, start_year: i32) -> [f64; 5] {
    let date = NaiveDate::from_ymd_opt(start_year, 1, 1).expect("valid year") + Duration::days(day as i64);
    let doy = date.ordinal0() as f64;
    let month = date.month0() as f64;
    let a = 2.0 * PI * doy / 365.0;
    let b = 2.0 * PI * month / 12.0;
    [a.sin(), a.cos(), b.sin(), b.cos(), date.year() as f64]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn origin_and_quarter() {
        let e = temporal_encodings(0, 2021);
        assert!(e[0].abs() < 1e-15 && (e[1] - 1.0).abs() < 1e-15);
        assert_eq!(e[4], 2021.0);
        let q = temporal_encodings(91, 2021);
        assert!((q[0] - 1.0).abs() < 1e-3 && q[1].abs() < 0.03);
    }

    #[test]
    fn december_is_next_to_january() {
        let jan = temporal_encodings(10, 2021);
        let jun = temporal_encodings(160, 2021);
        let dec = temporal_encodings(350, 2021);
        assert!(dist(&dec[2..4], &jan[2..4]) < dist(&jun[2..4], &jan[2..4]));
    }

    #[test]
    fn rolls_into_next_year() {
        let e = temporal_encodings(365, 2021);
        assert_eq!(e[4], 2022.0);
        assert!(e[0].abs() < 1e-15);
    }
}
