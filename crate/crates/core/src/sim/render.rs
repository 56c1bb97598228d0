//! Pinhole wireframe renderer for the next gate.
//!
//! The camera sits at the drone position looking along body x with a 90 degree
//! horizontal field of view over 16 pixels (focal length 8 px). Continuous image
//! coordinates run over `[0, 16)`; pixel `(row, col)` covers
//! `[row, row + 1) x [col, col + 1)`.

use rand_distr::{Distribution, StandardNormal};

use super::{world_to_body, DroneState, Gate, Vec3};
use crate::perception::{Observation, IMAGE_SIDE};
use crate::rng::Rng;

pub const FOCAL_PX: f64 = 8.0;
/// Segments are clipped to body-frame depth `x >= NEAR_PLANE`, m.
pub const NEAR_PLANE: f64 = 0.05;

const SIDE: f64 = IMAGE_SIDE as f64;
const CENTER: f64 = SIDE / 2.0;

/// Body-frame point to continuous image coordinates `(col, row)`.
fn project(b: &Vec3) -> (f64, f64) {
    (CENTER - FOCAL_PX * b.y / b.x, CENTER - FOCAL_PX * b.z / b.x)
}

/// Continuous image coordinates of the four aperture corners, or `None` when the
/// gate center is not in front of the camera or a corner is behind the near plane.
pub fn project_gate_corners(state: &DroneState, gate: &Gate) -> Option<[(f64, f64); 4]> {
    let center = world_to_body(&(gate.center - state.position), state.yaw);
    if center.x <= NEAR_PLANE {
        return None;
    }
    let mut out = [(0.0, 0.0); 4];
    for (o, c) in out.iter_mut().zip(gate.corners()) {
        let b = world_to_body(&(c - state.position), state.yaw);
        if b.x < NEAR_PLANE {
            return None;
        }
        *o = project(&b);
    }
    Some(out)
}

/// Clips a 3-D body-frame segment to the near plane.
fn clip_near(a: Vec3, b: Vec3) -> Option<(Vec3, Vec3)> {
    match (a.x >= NEAR_PLANE, b.x >= NEAR_PLANE) {
        (true, true) => Some((a, b)),
        (false, false) => None,
        (a_in, _) => {
            let t = (NEAR_PLANE - a.x) / (b.x - a.x);
            let m = a + (b - a) * t;
            if a_in {
                Some((a, m))
            } else {
                Some((m, b))
            }
        }
    }
}

/// Liang-Barsky clip of a 2-D segment to `[0, SIDE] x [0, SIDE]`.
fn clip_image(p0: (f64, f64), p1: (f64, f64)) -> Option<((f64, f64), (f64, f64))> {
    let (dx, dy) = (p1.0 - p0.0, p1.1 - p0.1);
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    for (p, q) in [
        (-dx, p0.0),
        (dx, SIDE - p0.0),
        (-dy, p0.1),
        (dy, SIDE - p0.1),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
        }
    }
    if t0 > t1 {
        return None;
    }
    Some((
        (p0.0 + t0 * dx, p0.1 + t0 * dy),
        (p0.0 + t1 * dx, p0.1 + t1 * dy),
    ))
}

fn to_pixel(v: f64) -> i64 {
    (v.floor() as i64).clamp(0, IMAGE_SIDE as i64 - 1)
}

/// Integer Bresenham line between two pixels, inclusive.
fn draw_line(pixels: &mut [f64], (c0, r0): (i64, i64), (c1, r1): (i64, i64)) {
    let dx = (c1 - c0).abs();
    let dy = -(r1 - r0).abs();
    let sx = if c0 < c1 { 1 } else { -1 };
    let sy = if r0 < r1 { 1 } else { -1 };
    let (mut c, mut r) = (c0, r0);
    let mut err = dx + dy;
    loop {
        pixels[(r as usize) * IMAGE_SIDE + c as usize] = 1.0;
        if c == c1 && r == r1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            c += sx;
        }
        if e2 <= dx {
            err += dx;
            r += sy;
        }
    }
}

/// Renders the gate's aperture edges at intensity 1, adds Gaussian pixel noise,
/// and clamps to `[0, 1]`. One noise draw per pixel, row-major, when
/// `pixel_noise_std > 0`.
pub fn render_observation(
    state: &DroneState,
    gate: &Gate,
    pixel_noise_std: f64,
    rng: &mut Rng,
) -> Observation {
    let mut pixels = vec![0.0; IMAGE_SIDE * IMAGE_SIDE];
    let center = world_to_body(&(gate.center - state.position), state.yaw);
    if center.x > NEAR_PLANE {
        let corners = gate.corners().map(|c| world_to_body(&(c - state.position), state.yaw));
        for k in 0..4 {
            let Some((a, b)) = clip_near(corners[k], corners[(k + 1) % 4]) else {
                continue;
            };
            let Some((p0, p1)) = clip_image(project(&a), project(&b)) else {
                continue;
            };
            draw_line(
                &mut pixels,
                (to_pixel(p0.0), to_pixel(p0.1)),
                (to_pixel(p1.0), to_pixel(p1.1)),
            );
        }
    }
    if pixel_noise_std > 0.0 {
        for p in pixels.iter_mut() {
            let n: f64 = StandardNormal.sample(rng);
            *p = (*p + pixel_noise_std * n).clamp(0.0, 1.0);
        }
    }
    Observation::new(pixels).expect("renderer emits valid frames")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn facing_gate(distance: f64) -> (DroneState, Gate) {
        let gate = Gate {
            center: Vec3::new(distance, 0.0, 2.0),
            yaw: 0.0,
            half_aperture: 0.75,
        };
        (DroneState::at_rest(Vec3::new(0.0, 0.0, 2.0), 0.0), gate)
    }

    #[test]
    fn nothing_in_front_is_blank() {
        let (mut s, g) = facing_gate(3.0);
        s.yaw = std::f64::consts::PI;
        let obs = render_observation(&s, &g, 0.0, &mut rng::stream(0, &[]));
        assert!(obs.pixels().iter().all(|&p| p == 0.0));
    }

    #[test]
    fn square_view_is_symmetric() {
        // at 2.5 m the corners project to 8 +- 8 * 0.75 / 2.5 = 8 +- 2.4,
        // i.e. pixels 5 and 10 along both axes
        let (s, g) = facing_gate(2.5);
        let c = project_gate_corners(&s, &g).unwrap();
        for (col, row) in c {
            assert!(((col - 8.0).abs() - 2.4).abs() < 1e-12);
            assert!(((row - 8.0).abs() - 2.4).abs() < 1e-12);
        }
        let obs = render_observation(&s, &g, 0.0, &mut rng::stream(0, &[]));
        for r in 0..16 {
            for col in 0..16 {
                let on_edge = ((r == 5 || r == 10) && (5..=10).contains(&col))
                    || ((col == 5 || col == 10) && (5..=10).contains(&r));
                assert_eq!(obs.pixel(r, col), if on_edge { 1.0 } else { 0.0 }, "({r},{col})");
                assert_eq!(obs.pixel(r, col), obs.pixel(15 - r, col));
                assert_eq!(obs.pixel(r, col), obs.pixel(r, 15 - col));
            }
        }
    }

    #[test]
    fn noisy_pixels_stay_in_range() {
        let (s, g) = facing_gate(4.0);
        let mut r = rng::stream(3, &[]);
        for _ in 0..20 {
            let obs = render_observation(&s, &g, 0.3, &mut r);
            assert!(obs.pixels().iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }

    #[test]
    fn very_close_gate_is_clipped_not_crashing() {
        let (s, g) = facing_gate(0.1);
        let obs = render_observation(&s, &g, 0.0, &mut rng::stream(0, &[]));
        assert!(obs.pixels().iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn oblique_gate_partially_behind() {
        let gate = Gate {
            center: Vec3::new(0.6, 0.0, 2.0),
            yaw: std::f64::consts::FRAC_PI_2,
            half_aperture: 0.75,
        };
        let s = DroneState::at_rest(Vec3::new(0.0, 0.0, 2.0), 0.0);
        assert!(project_gate_corners(&s, &gate).is_none());
        let obs = render_observation(&s, &gate, 0.0, &mut rng::stream(0, &[]));
        assert!(obs.pixels().iter().any(|&p| p == 1.0));
    }
}
