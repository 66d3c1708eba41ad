//! Hourly meteorological inputs and the irradiance coefficients that feed
//! the linearized module model.
//!
//! Angles are degrees at every public boundary and radians internally.
//! Sun azimuth is measured from north, clockwise.

mod csv;
mod solar;
mod synthetic;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use self::csv::{parse_weather_csv, write_weather_csv, ColumnSchema};
pub(crate) use self::csv::{format_utc, parse_utc};
pub use self::solar::solar_position;
pub use self::synthetic::SyntheticWeather;

pub const DEFAULT_ALBEDO: f64 = 0.2;
pub const DEFAULT_AMBIENT_TEMP: f64 = 20.0;
pub const DEFAULT_WIND_SPEED: f64 = 1.0;

/// Minimum global horizontal irradiance (W/m²) for a record to count as daytime.
pub const NIGHT_GHI_THRESHOLD: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub latitude: f64,
    pub longitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeatherRecord {
    pub timestamp: DateTime<Utc>,
    /// Beam normal irradiance, W/m².
    pub dni: f64,
    /// Diffuse horizontal irradiance, W/m².
    pub dhi: f64,
    /// Global horizontal irradiance, W/m².
    pub ghi: f64,
    pub ambient_temp: f64,
    pub wind_speed: f64,
    pub albedo: f64,
    pub sun_zenith: f64,
    pub sun_azimuth: f64,
}

impl WeatherRecord {
    /// Copy of this record with the three irradiance channels scaled.
    pub fn with_irradiance_scaled(&self, dni: f64, dhi: f64, ghi: f64) -> Self {
        WeatherRecord {
            dni: self.dni * dni,
            dhi: self.dhi * dhi,
            ghi: self.ghi * ghi,
            ..self.clone()
        }
    }
}

/// The four orientation-free irradiance coefficients of one hour. Plane of
/// array irradiance for a surface of tilt `β` and azimuth `γ` is
/// `a1·cosβ + a2·sinβ·cosγ + a3·sinβ·sinγ + a4`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AVector {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
}

impl AVector {
    pub fn to_array(self) -> [f64; 4] {
        [self.a1, self.a2, self.a3, self.a4]
    }
}

pub fn a_vector(record: &WeatherRecord) -> AVector {
    let zenith = record.sun_zenith.to_radians();
    let azimuth = record.sun_azimuth.to_radians();
    let reflected = 0.5 * record.albedo * record.ghi;
    let beam_horizontal = record.dni * zenith.sin();
    AVector {
        a1: record.dni * zenith.cos() + 0.5 * record.dhi - reflected,
        a2: beam_horizontal * azimuth.cos(),
        a3: beam_horizontal * azimuth.sin(),
        a4: 0.5 * record.dhi + reflected,
    }
}

pub fn is_daytime(record: &WeatherRecord) -> bool {
    record.sun_zenith < 90.0 && record.ghi > NIGHT_GHI_THRESHOLD
}

/// Keeps records with the sun above the horizon and measurable GHI, in order.
pub fn exclude_night(records: &[WeatherRecord]) -> Vec<WeatherRecord> {
    records.iter().filter(|r| is_daytime(r)).cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn record(dni: f64, dhi: f64, ghi: f64, zenith: f64, azimuth: f64, albedo: f64) -> WeatherRecord {
        WeatherRecord {
            timestamp: Utc.with_ymd_and_hms(2016, 6, 1, 12, 0, 0).unwrap(),
            dni,
            dhi,
            ghi,
            ambient_temp: 20.0,
            wind_speed: 1.0,
            albedo,
            sun_zenith: zenith,
            sun_azimuth: azimuth,
        }
    }

    // Isotropic-sky transposition written from the angle of incidence.
    fn poa_isotropic(r: &WeatherRecord, tilt: f64, azimuth: f64) -> f64 {
        let (z, g) = (r.sun_zenith.to_radians(), r.sun_azimuth.to_radians());
        let (b, gs) = (tilt.to_radians(), azimuth.to_radians());
        let cos_aoi = z.cos() * b.cos() + z.sin() * b.sin() * (g - gs).cos();
        r.dni * cos_aoi + r.dhi * (1.0 + b.cos()) / 2.0 + r.albedo * r.ghi * (1.0 - b.cos()) / 2.0
    }

    fn eval(a: AVector, tilt: f64, azimuth: f64) -> f64 {
        let (b, g) = (tilt.to_radians(), azimuth.to_radians());
        a.a1 * b.cos() + a.a2 * b.sin() * g.cos() + a.a3 * b.sin() * g.sin() + a.a4
    }

    #[test]
    fn dark_sky_is_zero() {
        assert_eq!(a_vector(&record(0.0, 0.0, 0.0, 40.0, 120.0, 0.2)), AVector::default());
    }

    #[test]
    fn overhead_beam() {
        let a = a_vector(&record(1000.0, 0.0, 1000.0, 0.0, 180.0, 0.0));
        assert!((a.a1 - 1000.0).abs() < 1e-12);
        assert!(a.a2.abs() < 1e-12 && a.a3.abs() < 1e-12 && a.a4 == 0.0);
    }

    #[test]
    fn south_sun_matches_isotropic_formula() {
        let r = record(800.0, 100.0, 792.8, 30.0, 180.0, 0.2);
        let a = a_vector(&r);
        // a1 = 800 cos30 + 50 - 79.28, a2 = -400, a3 ~ 0, a4 = 50 + 79.28
        assert!((a.a1 - (692.820_323_027_550_9 + 50.0 - 79.28)).abs() < 1e-9);
        assert!((a.a2 + 400.0).abs() < 1e-9);
        assert!(a.a3.abs() < 1e-9);
        assert!((a.a4 - 129.28).abs() < 1e-12);
        for (tilt, az) in [(0.0, 0.0), (30.0, 180.0), (60.0, 90.0), (90.0, 270.0)] {
            let lhs = eval(a, tilt, az);
            let rhs = poa_isotropic(&r, tilt, az);
            assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1.0), "{tilt} {az}");
        }
    }

    #[test]
    fn night_filter() {
        let recs = vec![
            record(0.0, 0.0, 0.0, 100.0, 0.0, 0.2),
            record(600.0, 80.0, 500.0, 30.0, 180.0, 0.2),
            record(0.0, 0.5, 0.5, 89.0, 80.0, 0.2),
        ];
        let kept = exclude_night(&recs);
        assert_eq!(kept, vec![recs[1].clone()]);
        assert_eq!(exclude_night(&kept), kept);
    }

    proptest! {
        #[test]
        fn a_vector_is_linear_in_irradiance(
            dni in 0.0..1100.0f64, dhi in 0.0..500.0f64, ghi in 0.0..1200.0f64,
            z in 0.0..89.9f64, g in 0.0..360.0f64, rho in 0.0..1.0f64, k in 0.0..5.0f64,
        ) {
            let a = a_vector(&record(dni, dhi, ghi, z, g, rho)).to_array();
            let s = a_vector(&record(k * dni, k * dhi, k * ghi, z, g, rho)).to_array();
            for i in 0..4 {
                prop_assert!((s[i] - k * a[i]).abs() <= 1e-9 * (1.0 + s[i].abs()));
            }
            prop_assert!(a[3] >= 0.0);
        }

        #[test]
        fn exclude_night_idempotent(zs in proptest::collection::vec((0.0..180.0f64, 0.0..5.0f64), 0..40)) {
            let recs: Vec<_> = zs.iter().map(|&(z, ghi)| record(0.0, 0.0, ghi, z, 0.0, 0.2)).collect();
            let once = exclude_night(&recs);
            prop_assert_eq!(exclude_night(&once), once.clone());
            prop_assert!(once.iter().all(|r| r.sun_zenith < 90.0));
        }
    }
}
