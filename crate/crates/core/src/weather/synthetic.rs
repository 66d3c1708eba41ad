//! Seeded synthetic hourly weather for a site, used when no measured file is
//! available. Clear-sky GHI follows the Haurwitz model; a day-to-day AR(1)
//! cloudiness process scales it and the Erbs correlation splits the result
//! into beam and diffuse parts.

use std::f64::consts::PI;

use chrono::{Datelike, Duration, TimeZone, Timelike, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{solar_position, Site, WeatherRecord, DEFAULT_ALBEDO};
use crate::error::{Error, Result};

const SOLAR_CONSTANT: f64 = 1367.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticWeather {
    pub year: i32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_albedo")]
    pub albedo: f64,
    /// Drop this many trailing hours so the record count matches a target
    /// file length (e.g. a feed with a couple of missing samples).
    #[serde(default)]
    pub truncate_hours: usize,
}

fn default_seed() -> u64 {
    2016
}

fn default_albedo() -> f64 {
    DEFAULT_ALBEDO
}

impl SyntheticWeather {
    pub fn new(year: i32, seed: u64) -> Self {
        SyntheticWeather {
            year,
            seed,
            albedo: DEFAULT_ALBEDO,
            truncate_hours: 0,
        }
    }

    /// One record per UTC hour of the year, stamped at half past the hour.
    pub fn generate(&self, site: Site) -> Result<Vec<WeatherRecord>> {
        if !(-90.0..=90.0).contains(&site.latitude) {
            return Err(Error::invalid("latitude", format!("{} outside [-90, 90]", site.latitude)));
        }
        if !(0.0..=1.0).contains(&self.albedo) {
            return Err(Error::invalid("albedo", format!("{} outside [0, 1]", self.albedo)));
        }
        let start = Utc
            .with_ymd_and_hms(self.year, 1, 1, 0, 30, 0)
            .single()
            .ok_or_else(|| Error::invalid("year", self.year.to_string()))?;
        let leap = chrono::NaiveDate::from_ymd_opt(self.year, 2, 29).is_some();
        let hours = if leap { 8784 } else { 8760 };
        let hours = hours - self.truncate_hours.min(hours);

        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let wind_dist = Gamma::new(2.0, 1.4).expect("valid gamma parameters");
        let mut day_state: f64 = 0.0;
        let mut hour_state: f64 = 0.0;
        let mut day_temp_noise: f64 = 0.0;
        let mut wind: f64 = 2.5;
        let mut current_day = u32::MAX;
        let mut out = Vec::with_capacity(hours);

        for h in 0..hours {
            let timestamp = start + Duration::hours(h as i64);
            let doy = timestamp.ordinal();
            if doy != current_day {
                current_day = doy;
                let e: f64 = rng.sample(StandardNormal);
                day_state = 0.65 * day_state + 0.76 * e;
                let t: f64 = rng.sample(StandardNormal);
                day_temp_noise = 0.7 * day_temp_noise + 1.5 * t;
            }
            let e: f64 = rng.sample(StandardNormal);
            hour_state = 0.7 * hour_state + 0.71 * e;
            wind = 0.8 * wind + 0.2 * wind_dist.sample(&mut rng);

            let (zenith, azimuth) = solar_position(site.latitude, site.longitude, timestamp);
            let season = (2.0 * PI * (doy as f64 - 172.0) / 365.25).cos();
            let hemisphere = site.latitude.signum();
            // cloudier winters in the hemisphere's cold season
            let latent = day_state + 0.45 * hemisphere * season + 0.35;
            let day_clearness = 0.15 + 0.8 / (1.0 + (-1.8 * latent).exp());
            let clearness = (day_clearness + 0.06 * hour_state).clamp(0.03, 1.0);

            let cos_z = zenith.to_radians().cos();
            let (dni, dhi, ghi) = if cos_z > 0.0 {
                let clear_ghi = 1098.0 * cos_z * (-0.057 / cos_z.max(0.01)).exp();
                let ghi = clearness * clear_ghi;
                let extra = SOLAR_CONSTANT * (1.0 + 0.033 * (2.0 * PI * doy as f64 / 365.0).cos()) * cos_z;
                let kt = (ghi / extra).clamp(0.0, 1.0);
                let diffuse_fraction = erbs(kt);
                let dhi = diffuse_fraction * ghi;
                let dni = if cos_z > 0.065 { ((ghi - dhi) / cos_z).min(1100.0) } else { 0.0 };
                let dhi = ghi - dni * cos_z;
                (dni, dhi.max(0.0), ghi)
            } else {
                (0.0, 0.0, 0.0)
            };

            let local_hour = (timestamp.hour() as f64 + timestamp.minute() as f64 / 60.0 + site.longitude / 15.0)
                .rem_euclid(24.0);
            let ambient_temp = 13.0 + 10.0 * hemisphere * season
                + 5.0 * (2.0 * PI * (local_hour - 9.0) / 24.0).sin() * (0.4 + 0.6 * clearness)
                + day_temp_noise;

            out.push(WeatherRecord {
                timestamp,
                dni,
                dhi,
                ghi,
                ambient_temp,
                wind_speed: wind,
                albedo: self.albedo,
                sun_zenith: zenith,
                sun_azimuth: azimuth,
            });
        }
        Ok(out)
    }
}

/// Erbs diffuse fraction as a function of the clearness index.
fn erbs(kt: f64) -> f64 {
    if kt <= 0.22 {
        1.0 - 0.09 * kt
    } else if kt <= 0.8 {
        0.9511 - 0.1604 * kt + 4.388 * kt.powi(2) - 16.638 * kt.powi(3) + 12.336 * kt.powi(4)
    } else {
        0.165
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weather::exclude_night;

    const SITE: Site = Site {
        latitude: 45.0,
        longitude: 10.0,
    };

    #[test]
    fn leap_year_length_and_daytime_share() {
        let recs = SyntheticWeather::new(2016, 1).generate(SITE).unwrap();
        assert_eq!(recs.len(), 8784);
        let day = exclude_night(&recs);
        let share = day.len() as f64 / recs.len() as f64;
        assert!((0.45..0.55).contains(&share), "{share}");
    }

    #[test]
    fn deterministic_under_seed() {
        let a = SyntheticWeather::new(2016, 9).generate(SITE).unwrap();
        let b = SyntheticWeather::new(2016, 9).generate(SITE).unwrap();
        let c = SyntheticWeather::new(2016, 10).generate(SITE).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn physical_ranges() {
        for r in SyntheticWeather::new(2015, 3).generate(SITE).unwrap() {
            assert!(r.dni >= 0.0 && r.dhi >= 0.0 && r.ghi >= 0.0);
            assert!(r.ghi < 1300.0);
            let closure = r.dni * r.sun_zenith.to_radians().cos() + r.dhi;
            if r.sun_zenith < 90.0 {
                assert!((closure - r.ghi).abs() < 1e-9, "{closure} {}", r.ghi);
            }
            assert!(r.wind_speed > 0.0);
        }
    }

    #[test]
    fn truncation() {
        let mut gen = SyntheticWeather::new(2016, 1);
        gen.truncate_hours = 2;
        assert_eq!(gen.generate(SITE).unwrap().len(), 8782);
    }
}
