use std::f64::consts::PI;

use chrono::{DateTime, Datelike, Timelike, Utc};

/// Sun zenith and azimuth (degrees; azimuth from north, clockwise) for a
/// site at `latitude`/`longitude` (degrees, east positive) and a UTC instant.
///
/// Uses the Spencer Fourier series for declination and the equation of time
/// followed by hour-angle geometry. No refraction correction. Agreement with
/// the full NOAA algorithm is within about 0.5° for 1950–2050.
pub fn solar_position(latitude: f64, longitude: f64, timestamp: DateTime<Utc>) -> (f64, f64) {
    let days_in_year = if chrono::NaiveDate::from_ymd_opt(timestamp.year(), 2, 29).is_some() {
        366.0
    } else {
        365.0
    };
    let hour = timestamp.hour() as f64
        + timestamp.minute() as f64 / 60.0
        + timestamp.second() as f64 / 3600.0;
    let g = 2.0 * PI / days_in_year * (timestamp.ordinal0() as f64 + (hour - 12.0) / 24.0);

    let eq_time = 229.18
        * (0.000075 + 0.001868 * g.cos()
            - 0.032077 * g.sin()
            - 0.014615 * (2.0 * g).cos()
            - 0.040849 * (2.0 * g).sin());
    let decl = 0.006918 - 0.399912 * g.cos() + 0.070257 * g.sin() - 0.006758 * (2.0 * g).cos()
        + 0.000907 * (2.0 * g).sin()
        - 0.002697 * (3.0 * g).cos()
        + 0.00148 * (3.0 * g).sin();

    let true_solar_minutes = hour * 60.0 + eq_time + 4.0 * longitude;
    let hour_angle = (true_solar_minutes / 4.0 - 180.0).to_radians();

    let lat = latitude.to_radians();
    let cos_zenith = lat.sin() * decl.sin() + lat.cos() * decl.cos() * hour_angle.cos();
    let zenith = cos_zenith.clamp(-1.0, 1.0).acos().to_degrees();

    let y = hour_angle.sin() * decl.cos();
    let x = hour_angle.cos() * decl.cos() * lat.sin() - decl.sin() * lat.cos();
    let azimuth = (y.atan2(x).to_degrees() + 180.0).rem_euclid(360.0);
    // rem_euclid can return 360.0 for tiny negative inputs
    let azimuth = if azimuth >= 360.0 { 0.0 } else { azimuth };
    (zenith, azimuth)
}
