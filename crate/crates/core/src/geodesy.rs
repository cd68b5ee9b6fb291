//! WGS84 → UTM conversion, local-frame shifting and altitude synchronisation.
//!
//! The Transverse Mercator mapping uses the Krüger series truncated at the
//! fourth power of the third flattening, which is sub-millimetre inside a
//! zone.

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::scalar::Real;

const WGS84_A: f64 = 6_378_137.0;
const WGS84_F: f64 = 1.0 / 298.257_223_563;
const UTM_K0: f64 = 0.9996;
const FALSE_EASTING: f64 = 500_000.0;
const FALSE_NORTHING_SOUTH: f64 = 10_000_000.0;
const MAX_UTM_LATITUDE: f64 = 84.0;

/// Default horizontal search radius for [`altitude_sync`], meters.
pub const DEFAULT_SYNC_RADIUS: f64 = 50.0;

/// Point in the pipeline's shifted metric frame: x east, y north, z up.
pub type LocalMetricPoint<T = f64> = Vec3<T>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeodeticPoint<T = f64> {
    /// Degrees, WGS84.
    pub latitude: T,
    /// Degrees, WGS84.
    pub longitude: T,
    /// Meters in the vertical datum of the source GDEM.
    pub altitude: T,
}

impl<T: Real> GeodeticPoint<T> {
    pub fn new(latitude: T, longitude: T, altitude: T) -> Result<Self> {
        let p = Self {
            latitude,
            longitude,
            altitude,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let lat = self.latitude.as_f64();
        let lon = self.longitude.as_f64();
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) || !self.altitude.is_finite() {
            return Err(Error::InvalidGeodetic(format!("lat {lat}, lon {lon}, alt {}", self.altitude)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtmZone {
    /// 1..=60.
    pub number: u8,
    pub north: bool,
}

impl UtmZone {
    pub fn new(number: u8, north: bool) -> Result<Self> {
        if !(1..=60).contains(&number) {
            return Err(Error::InvalidZone(number));
        }
        Ok(Self { number, north })
    }

    /// Standard 6° zone containing `longitude` (no Norway/Svalbard exceptions).
    pub fn from_lon_lat(longitude: f64, latitude: f64) -> Self {
        let lon = ((longitude + 180.0).rem_euclid(360.0)) - 180.0;
        let number = (((lon + 180.0) / 6.0).floor() as i64).clamp(0, 59) as u8 + 1;
        Self {
            number,
            north: latitude >= 0.0,
        }
    }

    pub fn central_meridian(&self) -> f64 {
        -183.0 + 6.0 * self.number as f64
    }

    pub fn contains_longitude(&self, longitude: f64) -> bool {
        let d = longitude - self.central_meridian();
        let d = (d + 180.0).rem_euclid(360.0) - 180.0;
        d.abs() <= 3.0 + 1e-9
    }

    /// Parses `32N`, `35s`, ...
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Config(format!("bad UTM zone {s:?}, expected e.g. 32N"));
        let (num, hemi) = s.split_at(s.len().checked_sub(1).ok_or_else(bad)?);
        let number: u8 = num.parse().map_err(|_| bad())?;
        let north = match hemi {
            "N" | "n" => true,
            "S" | "s" => false,
            _ => return Err(bad()),
        };
        Self::new(number, north)
    }
}

impl std::fmt::Display for UtmZone {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}{}", self.number, if self.north { 'N' } else { 'S' })
    }
}

struct KruegerSeries {
    /// Rectifying radius scaled by k0.
    k0a: f64,
    alpha: [f64; 4],
    beta: [f64; 4],
    delta: [f64; 4],
    /// 2√n / (1 + n)
    e_conf: f64,
}

impl KruegerSeries {
    fn wgs84() -> Self {
        let n = WGS84_F / (2.0 - WGS84_F);
        let (n2, n3, n4) = (n * n, n * n * n, n * n * n * n);
        let a_rect = WGS84_A / (1.0 + n) * (1.0 + n2 / 4.0 + n4 / 64.0);
        Self {
            k0a: UTM_K0 * a_rect,
            alpha: [
                n / 2.0 - 2.0 * n2 / 3.0 + 5.0 * n3 / 16.0 + 41.0 * n4 / 180.0,
                13.0 * n2 / 48.0 - 3.0 * n3 / 5.0 + 557.0 * n4 / 1440.0,
                61.0 * n3 / 240.0 - 103.0 * n4 / 140.0,
                49561.0 * n4 / 161280.0,
            ],
            beta: [
                n / 2.0 - 2.0 * n2 / 3.0 + 37.0 * n3 / 96.0 - n4 / 360.0,
                n2 / 48.0 + n3 / 15.0 - 437.0 * n4 / 1440.0,
                17.0 * n3 / 480.0 - 37.0 * n4 / 840.0,
                4397.0 * n4 / 161280.0,
            ],
            delta: [
                2.0 * n - 2.0 * n2 / 3.0 - 2.0 * n3 + 116.0 * n4 / 45.0,
                7.0 * n2 / 3.0 - 8.0 * n3 / 5.0 - 227.0 * n4 / 45.0,
                56.0 * n3 / 15.0 - 136.0 * n4 / 35.0,
                4279.0 * n4 / 630.0,
            ],
            e_conf: 2.0 * n.sqrt() / (1.0 + n),
        }
    }
}

/// Forward UTM projection: returns `(easting, northing)` in meters.
///
/// The zone need not contain the point (a warning is logged); accuracy
/// degrades away from the central meridian.
pub fn geodetic_to_utm<T: Real>(p: &GeodeticPoint<T>, zone: UtmZone) -> Result<(T, T)> {
    p.validate()?;
    let lat = p.latitude.as_f64();
    let lon = p.longitude.as_f64();
    if lat.abs() > MAX_UTM_LATITUDE {
        return Err(Error::UnsupportedLatitude(lat));
    }
    if !zone.contains_longitude(lon) {
        log::warn!("longitude {lon} lies outside UTM zone {zone}");
    }
    let k = KruegerSeries::wgs84();
    let phi = lat.to_radians();
    let lambda = (lon - zone.central_meridian()).to_radians();

    let sin_phi = phi.sin();
    let t = (sin_phi.atanh() - k.e_conf * (k.e_conf * sin_phi).atanh()).sinh();
    let xi_p = t.atan2(lambda.cos());
    let eta_p = (lambda.sin() / (1.0 + t * t).sqrt()).atanh();

    let mut xi = xi_p;
    let mut eta = eta_p;
    for (j, a) in k.alpha.iter().enumerate() {
        let m = 2.0 * (j + 1) as f64;
        xi += a * (m * xi_p).sin() * (m * eta_p).cosh();
        eta += a * (m * xi_p).cos() * (m * eta_p).sinh();
    }
    let easting = FALSE_EASTING + k.k0a * eta;
    let false_northing = if zone.north { 0.0 } else { FALSE_NORTHING_SOUTH };
    let northing = false_northing + k.k0a * xi;
    Ok((T::lit(easting), T::lit(northing)))
}

/// Inverse UTM projection: returns `(latitude, longitude)` in degrees.
pub fn utm_to_geodetic<T: Real>(easting: T, northing: T, zone: UtmZone) -> (T, T) {
    let k = KruegerSeries::wgs84();
    let false_northing = if zone.north { 0.0 } else { FALSE_NORTHING_SOUTH };
    let xi = (northing.as_f64() - false_northing) / k.k0a;
    let eta = (easting.as_f64() - FALSE_EASTING) / k.k0a;

    let mut xi_p = xi;
    let mut eta_p = eta;
    for (j, b) in k.beta.iter().enumerate() {
        let m = 2.0 * (j + 1) as f64;
        xi_p -= b * (m * xi).sin() * (m * eta).cosh();
        eta_p -= b * (m * xi).cos() * (m * eta).sinh();
    }
    let chi = (xi_p.sin() / eta_p.cosh()).asin();
    let mut phi = chi;
    for (j, d) in k.delta.iter().enumerate() {
        let m = 2.0 * (j + 1) as f64;
        phi += d * (m * chi).sin();
    }
    let lambda = eta_p.sinh().atan2(xi_p.cos());
    (
        T::lit(phi.to_degrees()),
        T::lit(zone.central_meridian() + lambda.to_degrees()),
    )
}

/// Offset subtracted from UTM coordinates to center the local frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GlobalShift<T = f64> {
    pub shift_x: T,
    pub shift_y: T,
    pub shift_z: T,
}

impl<T: Real> GlobalShift<T> {
    pub fn new(shift_x: T, shift_y: T, shift_z: T) -> Self {
        Self {
            shift_x,
            shift_y,
            shift_z,
        }
    }

    pub fn invert(&self, p: LocalMetricPoint<T>) -> (T, T, T) {
        (p.x + self.shift_x, p.y + self.shift_y, p.z + self.shift_z)
    }
}

pub fn apply_global_shift<T: Real>(easting: T, northing: T, altitude: T, shift: &GlobalShift<T>) -> LocalMetricPoint<T> {
    Vec3::new(easting - shift.shift_x, northing - shift.shift_y, altitude - shift.shift_z)
}

/// Vertical offset that maps a relative UAV height onto the GDEM datum.
///
/// Picks the GDEM point horizontally nearest to `reference_xy` (ties go to
/// the lowest index) and returns its altitude minus `reference_height`.
pub fn altitude_sync<T: Real>(
    reference_height: T,
    reference_xy: (T, T),
    gdem: &[LocalMetricPoint<T>],
    radius: T,
) -> Result<T> {
    let mut best: Option<(T, usize)> = None;
    for (i, p) in gdem.iter().enumerate() {
        let dx = p.x - reference_xy.0;
        let dy = p.y - reference_xy.1;
        let d2 = dx * dx + dy * dy;
        if best.map_or(true, |(b, _)| d2 < b) {
            best = Some((d2, i));
        }
    }
    match best {
        Some((d2, i)) if d2 <= radius * radius => Ok(gdem[i].z - reference_height),
        _ => Err(Error::SyncPointNotFound { radius: radius.as_f64() }),
    }
}

/// Coordinate interpretation of an ASCII XYZ file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum XyzKind {
    /// `lon lat alt` in WGS84 degrees.
    Geodetic,
    /// `x y z` already in a metric frame.
    Metric,
}

/// Parse whitespace-separated triples, one per line; `#` starts a comment.
pub fn read_xyz(reader: impl BufRead) -> Result<Vec<[f64; 3]>> {
    let mut out = Vec::new();
    let mut offset = 0u64;
    for line in reader.lines() {
        let line = line.map_err(|e| Error::Format {
            offset,
            reason: e.to_string(),
        })?;
        let line_len = line.len() as u64 + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if !content.is_empty() {
            let vals: Vec<f64> = content
                .split_whitespace()
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|_| Error::Format {
                    offset,
                    reason: format!("unparsable XYZ line {content:?}"),
                })?;
            if vals.len() != 3 || vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::Format {
                    offset,
                    reason: format!("expected three finite numbers, got {content:?}"),
                });
            }
            out.push([vals[0], vals[1], vals[2]]);
        }
        offset += line_len;
    }
    Ok(out)
}

/// Result of bringing raw XYZ triples into the local metric frame.
#[derive(Debug, Clone)]
pub struct LocalFrame {
    pub points: Vec<LocalMetricPoint<f64>>,
    pub shift: GlobalShift<f64>,
    pub zone: Option<UtmZone>,
}

/// Convert XYZ triples to the local frame.
///
/// Geodetic input is projected to UTM. The zone comes from the mean
/// longitude unless overridden. Without an explicit shift, the horizontal
/// shift is the rounded mean of the projected coordinates and the vertical
/// shift is zero.
pub fn to_local_frame(
    triples: &[[f64; 3]],
    kind: XyzKind,
    zone_override: Option<UtmZone>,
    shift_override: Option<GlobalShift<f64>>,
) -> Result<LocalFrame> {
    if triples.is_empty() {
        return Err(Error::DegenerateTerrain("empty XYZ input".into()));
    }
    let n = triples.len() as f64;
    let (metric, zone) = match kind {
        XyzKind::Metric => (triples.to_vec(), None),
        XyzKind::Geodetic => {
            let zone = match zone_override {
                Some(z) => z,
                None => {
                    let mean_lon = triples.iter().map(|t| t[0]).sum::<f64>() / n;
                    let mean_lat = triples.iter().map(|t| t[1]).sum::<f64>() / n;
                    UtmZone::from_lon_lat(mean_lon, mean_lat)
                }
            };
            let mut out = Vec::with_capacity(triples.len());
            for t in triples {
                let p = GeodeticPoint::new(t[1], t[0], t[2])?;
                let (e, nn) = geodetic_to_utm(&p, zone)?;
                out.push([e, nn, t[2]]);
            }
            (out, Some(zone))
        }
    };
    let shift = shift_override.unwrap_or_else(|| {
        let mx = metric.iter().map(|t| t[0]).sum::<f64>() / n;
        let my = metric.iter().map(|t| t[1]).sum::<f64>() / n;
        GlobalShift::new(mx.round(), my.round(), 0.0)
    });
    let points = metric
        .iter()
        .map(|t| apply_global_shift(t[0], t[1], t[2], &shift))
        .collect();
    Ok(LocalFrame { points, shift, zone })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn geo(lat: f64, lon: f64) -> GeodeticPoint {
        GeodeticPoint::new(lat, lon, 0.0).unwrap()
    }

    #[test]
    fn central_meridian_on_equator() {
        let z = UtmZone::new(32, true).unwrap();
        let (e, n) = geodetic_to_utm(&geo(0.0, 9.0), z).unwrap();
        assert!((e - 500_000.0).abs() < 1e-9);
        assert!(n.abs() < 1e-9);
        let (_, n) = geodetic_to_utm(&geo(0.0, 9.0), UtmZone::new(32, false).unwrap()).unwrap();
        assert!((n - 10_000_000.0).abs() < 1e-9);
    }

    // Golden values from PROJ (pyproj 3, EPSG:4326 → EPSG:326xx/327xx).
    #[test]
    fn golden_values_match_proj() {
        let cases = [
            (47.0, 9.0, "32N", 500_000.000_000, 5_205_164.110_152),
            (48.2, 10.5, "32N", 611_458.685_792, 5_339_617.543_069),
            (51.9, 7.3, "32N", 383_038.285_278, 5_751_281.659_824),
            (60.0, 6.2, "32N", 343_853.566_030, 6_654_716.392_473),
            (-25.75, 28.7, "35S", 670_506.204_083, 7_150_902.455_287),
            (45.2, 29.6, "35N", 704_205.217_674, 5_008_457.019_597),
        ];
        for (lat, lon, zone, e_ref, n_ref) in cases {
            let (e, n) = geodetic_to_utm(&geo(lat, lon), UtmZone::parse(zone).unwrap()).unwrap();
            assert!((e - e_ref).abs() < 1e-3, "{lat},{lon}: easting {e} vs {e_ref}");
            assert!((n - n_ref).abs() < 1e-3, "{lat},{lon}: northing {n} vs {n_ref}");
        }
    }

    #[test]
    fn latitude_limits() {
        let z = UtmZone::new(32, true).unwrap();
        assert!(matches!(geodetic_to_utm(&geo(84.5, 9.0), z), Err(Error::UnsupportedLatitude(_))));
        assert!(GeodeticPoint::new(91.0, 0.0, 0.0).is_err());
        assert!(GeodeticPoint::new(0.0, -181.0, 0.0).is_err());
    }

    #[test]
    fn zone_derivation_and_parse() {
        assert_eq!(UtmZone::from_lon_lat(9.0, 47.0), UtmZone::new(32, true).unwrap());
        assert_eq!(UtmZone::from_lon_lat(-180.0, -1.0), UtmZone::new(1, false).unwrap());
        assert_eq!(UtmZone::from_lon_lat(179.99, 1.0).number, 60);
        assert_eq!(UtmZone::parse("35s").unwrap().to_string(), "35S");
        assert!(UtmZone::parse("61N").is_err());
        assert!(UtmZone::parse("N").is_err());
    }

    #[test]
    fn global_shift_examples() {
        let s = GlobalShift::new(500_000.0, 5_200_000.0, 0.0);
        assert_eq!(apply_global_shift(500_000.0, 5_200_000.0, 300.0, &s), Vec3::new(0.0, 0.0, 300.0));
        let id = GlobalShift::default();
        assert_eq!(apply_global_shift(1.5, -2.5, 3.0, &id), Vec3::new(1.5, -2.5, 3.0));
    }

    #[test]
    fn altitude_sync_examples() {
        let gdem = vec![Vec3::new(0.0, 0.0, 412.0), Vec3::new(30.0, 0.0, 420.0)];
        assert_eq!(altitude_sync(0.0, (1.0, 1.0), &gdem, 50.0).unwrap(), 412.0);
        assert_eq!(altitude_sync(50.0, (1.0, 1.0), &gdem, 50.0).unwrap(), 362.0);
        assert!(matches!(
            altitude_sync(0.0, (500.0, 0.0), &gdem, 50.0),
            Err(Error::SyncPointNotFound { .. })
        ));
        // equidistant: lowest index wins
        assert_eq!(altitude_sync(0.0, (15.0, 0.0), &gdem, 50.0).unwrap(), 412.0);
    }

    #[test]
    fn xyz_parsing() {
        let text = "# header\n9.0 47.0 400\n\n 9.001 47.001 401 # trailing\n";
        let pts = read_xyz(text.as_bytes()).unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[1], [9.001, 47.001, 401.0]);
        assert!(matches!(read_xyz("1 2\n".as_bytes()), Err(Error::Format { offset: 0, .. })));
        assert!(matches!(read_xyz("1 2 3\n1 x 3\n".as_bytes()), Err(Error::Format { offset: 6, .. })));
    }

    #[test]
    fn local_frame_geodetic() {
        let triples = [[9.0, 47.0, 400.0], [9.01, 47.01, 410.0]];
        let lf = to_local_frame(&triples, XyzKind::Geodetic, None, None).unwrap();
        assert_eq!(lf.zone, Some(UtmZone::new(32, true).unwrap()));
        let mean_x = (lf.points[0].x + lf.points[1].x) / 2.0;
        assert!(mean_x.abs() < 1.0);
        assert_eq!(lf.points[0].z, 400.0);
    }

    fn brute_nearest(gdem: &[Vec3<f64>], x: f64, y: f64) -> usize {
        let d = |p: &Vec3<f64>| (p.x - x).powi(2) + (p.y - y).powi(2);
        let mut best = 0;
        for i in 1..gdem.len() {
            if d(&gdem[i]) < d(&gdem[best]) {
                best = i;
            }
        }
        best
    }

    proptest! {
        #[test]
        fn utm_round_trip(lat in -80.0f64..84.0, dlon in -3.0f64..3.0, zone in 1u8..=60) {
            let z = UtmZone::new(zone, lat >= 0.0).unwrap();
            let lon = z.central_meridian() + dlon;
            let (e, n) = geodetic_to_utm(&geo(lat, lon), z).unwrap();
            let (lat2, lon2) = utm_to_geodetic(e, n, z);
            prop_assert!((lat2 - lat).abs() < 1e-9);
            prop_assert!((lon2 - lon).abs() < 1e-9);
        }

        #[test]
        fn shift_round_trip(e in 160_000.0f64..840_000.0, n in 0.0f64..9_300_000.0, a in -500.0f64..9000.0,
                            ox in -1e6f64..1e6, oy in -1e6f64..1e6, sz in -100.0f64..100.0) {
            // realistic UTM input, shift keeps the local frame within ±1e6 m
            let s = GlobalShift::new(e - ox, n - oy, sz);
            let (e2, n2, a2) = s.invert(apply_global_shift(e, n, a, &s));
            prop_assert!((e2 - e).abs() < 1e-9 && (n2 - n).abs() < 1e-9 && (a2 - a).abs() < 1e-9);
        }

        #[test]
        fn sync_is_brute_force_nearest_and_order_free(
            pts in prop::collection::vec((-40.0f64..40.0, -40.0f64..40.0, 300.0f64..500.0), 1..40),
            rx in -10.0f64..10.0, ry in -10.0f64..10.0, h in 0.0f64..100.0,
        ) {
            let gdem: Vec<_> = pts.iter().map(|&(x, y, z)| Vec3::new(x, y, z)).collect();
            let shift = altitude_sync(h, (rx, ry), &gdem, 1e3).unwrap();
            prop_assert_eq!(shift, gdem[brute_nearest(&gdem, rx, ry)].z - h);
            let mut rev = gdem.clone();
            rev.reverse();
            let d = |p: &Vec3<f64>| (p.x - rx).powi(2) + (p.y - ry).powi(2);
            let dmin = gdem.iter().map(d).fold(f64::INFINITY, f64::min);
            let unique = gdem.iter().filter(|p| d(p) == dmin).count() == 1;
            if unique {
                prop_assert_eq!(altitude_sync(h, (rx, ry), &rev, 1e3).unwrap(), shift);
            }
        }
    }
}
