//! Local ENU, ECEF and geodetic coordinates on the WGS-84 ellipsoid.
//!
//! ECEF to geodetic uses Vermeille's closed form. With `k` his auxiliary root
//! and `D = k * sqrt(X^2 + Y^2) / (k + e^2)`:
//!
//! ```text
//! phi    = 2 atan(Z / (D + sqrt(D^2 + Z^2)))
//! lambda = 2 atan(Y / (X + sqrt(X^2 + Y^2)))
//! h      = (k + e^2 - 1) / k * sqrt(D^2 + Z^2)
//! ```

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeodesyError {
    #[error("point {0:?} is too close to the geocenter for a geodetic solution")]
    NearGeocenter([f64; 3]),
    #[error("geodetic coordinate out of range: {0}")]
    OutOfRange(String),
}

/// Reference ellipsoid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Datum {
    /// Semi-major axis, m.
    pub a: f64,
    /// Flattening.
    pub f: f64,
}

impl Datum {
    pub const WGS84: Datum = Datum {
        a: 6_378_137.0,
        f: 1.0 / 298.257_223_563,
    };

    /// First eccentricity squared.
    pub fn e2(&self) -> f64 {
        self.f * (2.0 - self.f)
    }

    /// Semi-minor axis.
    pub fn b(&self) -> f64 {
        self.a * (1.0 - self.f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnuCoord {
    pub e: f64,
    pub n: f64,
    pub u: f64,
}

impl EnuCoord {
    pub fn new(e: f64, n: f64, u: f64) -> Self {
        Self { e, n, u }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.e, self.n, self.u)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EcefCoord {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl EcefCoord {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }
}

/// Latitude and longitude in radians, altitude above the ellipsoid in meters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeodeticCoord {
    pub phi: f64,
    pub lambda: f64,
    pub z_alt: f64,
}

impl GeodeticCoord {
    pub fn new(phi: f64, lambda: f64, z_alt: f64) -> Result<Self, GeodesyError> {
        if !(-FRAC_PI_2..=FRAC_PI_2).contains(&phi) {
            return Err(GeodesyError::OutOfRange(format!("latitude {phi} rad")));
        }
        if !(lambda > -PI && lambda <= PI) {
            return Err(GeodesyError::OutOfRange(format!("longitude {lambda} rad")));
        }
        if !z_alt.is_finite() {
            return Err(GeodesyError::OutOfRange(format!("altitude {z_alt}")));
        }
        Ok(Self { phi, lambda, z_alt })
    }

    /// Longitude is wrapped into (-180, 180].
    pub fn from_degrees(lat_deg: f64, lon_deg: f64, alt_m: f64) -> Result<Self, GeodesyError> {
        let mut lon = lon_deg.rem_euclid(360.0);
        if lon > 180.0 {
            lon -= 360.0;
        }
        Self::new(lat_deg.to_radians(), lon.to_radians(), alt_m)
    }

    pub fn lat_deg(&self) -> f64 {
        self.phi.to_degrees()
    }

    pub fn lon_deg(&self) -> f64 {
        self.lambda.to_degrees()
    }
}

impl Datum {
    pub fn geodetic_to_ecef(&self, g: &GeodeticCoord) -> EcefCoord {
        let e2 = self.e2();
        let (sp, cp) = g.phi.sin_cos();
        let (sl, cl) = g.lambda.sin_cos();
        let n = self.a / (1.0 - e2 * sp * sp).sqrt();
        EcefCoord {
            x: (n + g.z_alt) * cp * cl,
            y: (n + g.z_alt) * cp * sl,
            z: (n * (1.0 - e2) + g.z_alt) * sp,
        }
    }

    pub fn ecef_to_geodetic(&self, c: &EcefCoord) -> Result<GeodeticCoord, GeodesyError> {
        let (x, y, z) = (c.x, c.y, c.z);
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(GeodesyError::OutOfRange(format!("non-finite ECEF {c:?}")));
        }
        let a = self.a;
        let e2 = self.e2();
        let e4 = e2 * e2;
        let rho = x.hypot(y);

        if rho < 1e-9 {
            if z.abs() < 1e-9 {
                return Err(GeodesyError::NearGeocenter([x, y, z]));
            }
            return Ok(GeodeticCoord {
                phi: FRAC_PI_2.copysign(z),
                lambda: 0.0,
                z_alt: z.abs() - self.b(),
            });
        }

        let p = (rho / a).powi(2);
        let q = (1.0 - e2) * (z / a).powi(2);
        let r = (p + q - e4) / 6.0;
        if r <= 0.0 {
            // inside the evolute of the ellipse, tens of km from the center
            return Err(GeodesyError::NearGeocenter([x, y, z]));
        }
        let s = e4 * p * q / (4.0 * r * r * r);
        let t = (1.0 + s + (s * (2.0 + s)).sqrt()).cbrt();
        let u = r * (1.0 + t + 1.0 / t);
        let v = (u * u + e4 * q).sqrt();
        let w = e2 * (u + v - q) / (2.0 * v);
        let k = (u + v + w * w).sqrt() - w;
        let d = k * rho / (k + e2);
        let dz = d.hypot(z);

        let phi = 2.0 * (z / (d + dz)).atan();
        let lambda = half_angle_longitude(x, y);
        let z_alt = (k + e2 - 1.0) / k * dz;
        if !(phi.is_finite() && z_alt.is_finite()) {
            return Err(GeodesyError::NearGeocenter([x, y, z]));
        }
        Ok(GeodeticCoord { phi, lambda, z_alt })
    }

    pub fn enu_to_ecef(&self, p: &EnuCoord, origin: &GeodeticCoord) -> EcefCoord {
        let o = self.geodetic_to_ecef(origin).to_vector();
        let v = o + enu_rotation(origin).transpose() * p.to_vector();
        EcefCoord::new(v.x, v.y, v.z)
    }

    pub fn ecef_to_enu(&self, c: &EcefCoord, origin: &GeodeticCoord) -> EnuCoord {
        let o = self.geodetic_to_ecef(origin).to_vector();
        EnuCoord::from_vector(&(enu_rotation(origin) * (c.to_vector() - o)))
    }

    pub fn enu_to_geodetic(
        &self,
        p: &EnuCoord,
        origin: &GeodeticCoord,
    ) -> Result<GeodeticCoord, GeodesyError> {
        self.ecef_to_geodetic(&self.enu_to_ecef(p, origin))
    }

    pub fn geodetic_to_enu(&self, g: &GeodeticCoord, origin: &GeodeticCoord) -> EnuCoord {
        self.ecef_to_enu(&self.geodetic_to_ecef(g), origin)
    }
}

/// `2 atan(Y / (X + sqrt(X^2 + Y^2)))`, with the equivalent `(rho - X) / Y`
/// form for `X < 0` to avoid cancellation. Returns values in (-pi, pi].
pub fn half_angle_longitude(x: f64, y: f64) -> f64 {
    let rho = x.hypot(y);
    if x >= 0.0 {
        2.0 * (y / (x + rho)).atan()
    } else if y == 0.0 {
        PI
    } else {
        2.0 * ((rho - x) / y).atan()
    }
}

/// Rows are the east, north and up unit vectors expressed in ECEF.
pub fn enu_rotation(origin: &GeodeticCoord) -> Matrix3<f64> {
    let (sp, cp) = origin.phi.sin_cos();
    let (sl, cl) = origin.lambda.sin_cos();
    Matrix3::new(-sl, cl, 0.0, -sp * cl, -sp * sl, cp, cp * cl, cp * sl, sp)
}

pub fn geodetic_to_ecef(g: &GeodeticCoord) -> EcefCoord {
    Datum::WGS84.geodetic_to_ecef(g)
}

pub fn ecef_to_geodetic(c: &EcefCoord) -> Result<GeodeticCoord, GeodesyError> {
    Datum::WGS84.ecef_to_geodetic(c)
}

pub fn enu_to_ecef(p: &EnuCoord, origin: &GeodeticCoord) -> EcefCoord {
    Datum::WGS84.enu_to_ecef(p, origin)
}

pub fn ecef_to_enu(c: &EcefCoord, origin: &GeodeticCoord) -> EnuCoord {
    Datum::WGS84.ecef_to_enu(c, origin)
}

pub fn enu_to_geodetic(
    p: &EnuCoord,
    origin: &GeodeticCoord,
) -> Result<GeodeticCoord, GeodesyError> {
    Datum::WGS84.enu_to_geodetic(p, origin)
}

pub fn geodetic_to_enu(g: &GeodeticCoord, origin: &GeodeticCoord) -> EnuCoord {
    Datum::WGS84.geodetic_to_enu(g, origin)
}
