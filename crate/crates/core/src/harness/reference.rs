//! Reference trajectory: a spiral whose radius builds linearly for the first
//! 20 s, then a constant-radius circle at fixed angular speed. Height and
//! orientation references are constant. The rate is analytic (product rule
//! through the radius buildup).

use nalgebra::Vector6;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    /// Total experiment length, seconds.
    pub duration: f64,
    /// Radius buildup time, seconds.
    pub buildup: f64,
    /// Angular speed, rad/s.
    pub omega: f64,
    /// Final circle radius, meters.
    pub radius: f64,
    /// Transient/stable phase boundary, seconds.
    pub transient_end: f64,
    /// Control period, seconds.
    pub dt: f64,
    /// Constant height reference, meters.
    pub z_ref: f64,
    /// Constant orientation reference, radians.
    pub orientation_ref: [f64; 3],
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol {
            duration: 60.0,
            buildup: 20.0,
            omega: 0.5,
            radius: 0.05,
            transient_end: 22.3,
            dt: 0.02,
            z_ref: 0.03,
            orientation_ref: [0.0; 3],
        }
    }
}

impl Protocol {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.duration > 0.0) || !(self.buildup > 0.0) {
            return Err(Error::Config("protocol times must be positive".into()));
        }
        if self.transient_end >= self.duration {
            return Err(Error::Config(
                "transient_end must fall inside the experiment".into(),
            ));
        }
        Ok(())
    }

    pub fn ticks(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }
}

/// Reference pose and pose rate at time t.
pub fn reference(t: f64, proto: &Protocol) -> Result<(Vector6<f64>, Vector6<f64>)> {
    if !(0.0..=proto.duration).contains(&t) {
        return Err(Error::OutOfRange(format!(
            "reference time {t} outside [0, {}]",
            proto.duration
        )));
    }
    let (rho, rho_dot) = if t < proto.buildup {
        (proto.radius * t / proto.buildup, proto.radius / proto.buildup)
    } else {
        (proto.radius, 0.0)
    };
    let (s, c) = (proto.omega * t).sin_cos();
    let mut r = Vector6::zeros();
    r[0] = rho * c;
    r[1] = rho * s;
    r[2] = proto.z_ref;
    for i in 0..3 {
        r[3 + i] = proto.orientation_ref[i];
    }
    let mut r_dot = Vector6::zeros();
    r_dot[0] = rho_dot * c - rho * proto.omega * s;
    r_dot[1] = rho_dot * s + rho * proto.omega * c;
    Ok((r, r_dot))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn starts_at_center_with_radial_rate() {
        let p = Protocol::default();
        let (r, rd) = reference(0.0, &p).unwrap();
        assert_eq!((r[0], r[1]), (0.0, 0.0));
        assert_eq!(r[2], p.z_ref);
        assert!((rd[0] - p.radius / p.buildup).abs() < 1e-15);
        assert_eq!(rd[1], 0.0);
    }

    #[test]
    fn full_radius_at_end_of_buildup() {
        let p = Protocol::default();
        let (r, _) = reference(20.0, &p).unwrap();
        let norm = (r[0] * r[0] + r[1] * r[1]).sqrt();
        assert!((norm - 0.05).abs() < 1e-12);
    }

    #[test]
    fn circle_phase_is_periodic() {
        let p = Protocol::default();
        let period = 2.0 * std::f64::consts::PI / p.omega;
        let (a, _) = reference(20.0, &p).unwrap();
        let (b, _) = reference(20.0 + period, &p).unwrap();
        assert!((a - b).norm() < 1e-9);
    }

    #[test]
    fn rate_matches_finite_difference() {
        let p = Protocol::default();
        let h = 1e-7;
        for t in [3.0, 19.5, 25.0, 47.0] {
            let (_, rd) = reference(t, &p).unwrap();
            let (rp, _) = reference(t + h, &p).unwrap();
            let (rm, _) = reference(t - h, &p).unwrap();
            let fd = (rp - rm) / (2.0 * h);
            assert!((rd - fd).norm() < 1e-5, "t = {t}");
        }
    }

    #[test]
    fn stable_window_covers_three_revolutions() {
        let p = Protocol::default();
        let window = p.duration - p.transient_end;
        let three = 3.0 * 2.0 * std::f64::consts::PI / p.omega;
        assert!((window - three).abs() < 0.01, "window {window} vs {three}");
    }

    #[test]
    fn rejects_out_of_range_time() {
        let p = Protocol::default();
        assert!(matches!(reference(-0.1, &p), Err(Error::OutOfRange(_))));
        assert!(matches!(reference(60.1, &p), Err(Error::OutOfRange(_))));
    }
}
