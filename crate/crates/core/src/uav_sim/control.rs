use nalgebra::{Matrix3, Vector3};

use super::{UavParams, UavState};

/// Desired position with its first two derivatives and a yaw angle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Reference {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
    pub yaw: f64,
}

impl Reference {
    pub fn fixed(position: Vector3<f64>) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            acceleration: Vector3::zeros(),
            yaw: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControllerGains {
    /// 1/s^2
    pub kp: Vector3<f64>,
    /// 1/s
    pub kv: Vector3<f64>,
    /// N m per rad of attitude error
    pub kr: Vector3<f64>,
    /// N m s
    pub kw: Vector3<f64>,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            kp: Vector3::new(6.0, 6.0, 8.0),
            kv: Vector3::new(4.0, 4.0, 5.0),
            kr: Vector3::new(2.0, 2.0, 0.3),
            kw: Vector3::new(0.18, 0.18, 0.1),
        }
    }
}

/// Cascaded PD: position error to a thrust direction, attitude error on SO(3)
/// to body torque, then the inverse rotor mixer.
#[derive(Clone, Debug)]
pub struct PositionController {
    pub gains: ControllerGains,
}

impl PositionController {
    pub fn new(gains: ControllerGains) -> Self {
        Self { gains }
    }

    pub fn rotor_speeds(&self, s: &UavState, reference: &Reference, p: &UavParams) -> [f64; 4] {
        let g = &self.gains;
        let e_x = reference.position - s.x;
        let e_v = reference.velocity - s.v;
        let mut a_cmd = g.kp.component_mul(&e_x)
            + g.kv.component_mul(&e_v)
            + reference.acceleration
            + Vector3::new(0.0, 0.0, p.gravity);
        // keep the thrust vector above the horizon
        a_cmd.z = a_cmd.z.max(0.2 * p.gravity);
        let tilt_limit = 0.6f64; // ~31 deg
        let horiz = a_cmd.xy().norm();
        if horiz > tilt_limit.tan() * a_cmd.z {
            let scale = tilt_limit.tan() * a_cmd.z / horiz;
            a_cmd.x *= scale;
            a_cmd.y *= scale;
        }

        let b3 = s.r * Vector3::z();
        let f = p.mass * a_cmd.dot(&b3);

        let b3_d = a_cmd.normalize();
        let b1_c = Vector3::new(reference.yaw.cos(), reference.yaw.sin(), 0.0);
        let b2_d = b3_d.cross(&b1_c).normalize();
        let b1_d = b2_d.cross(&b3_d);
        let r_d = Matrix3::from_columns(&[b1_d, b2_d, b3_d]);

        let e_r_mat = (r_d.transpose() * s.r - s.r.transpose() * r_d) * 0.5;
        let e_r = Vector3::new(e_r_mat[(2, 1)], e_r_mat[(0, 2)], e_r_mat[(1, 0)]);
        let tau = -g.kr.component_mul(&e_r) - g.kw.component_mul(&s.omega)
            + s.omega.cross(&(p.inertia * s.omega));
        mix(f, &tau, p)
    }
}

/// Inverse of the thrust/torque map, clamped to the rotor speed range.
pub fn mix(f: f64, tau: &Vector3<f64>, p: &UavParams) -> [f64; 4] {
    let a = f / p.k_omega;
    let b = tau.x / (p.k_omega * p.arm_length);
    let c = tau.y / (p.k_omega * p.arm_length);
    let d = tau.z / p.k_d;
    let odd = (a - d) / 2.0; // w1^2 + w3^2
    let even = (a + d) / 2.0; // w2^2 + w4^2
    let sq = [
        (odd - b) / 2.0,
        (even - c) / 2.0,
        (odd + b) / 2.0,
        (even + c) / 2.0,
    ];
    let max_sq = p.omega_max * p.omega_max;
    sq.map(|s| s.clamp(0.0, max_sq).sqrt())
}
