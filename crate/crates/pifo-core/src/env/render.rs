//! Deterministic 64x64 binary rendering of environment states.
//!
//! Every predicate is evaluated at pixel centers with closed (`<=`)
//! comparisons, and horizontal positions are computed in centered coordinates
//! (`u = column + 0.5 - 32`), so mirroring a column index negates `u`
//! exactly. Scenes that are geometrically symmetric therefore mirror bit for
//! bit when the state mirrors — a property the tests rely on.

use alloc::vec;
use alloc::vec::Vec;

use super::{cartpole, mountain_car, point_mass};
use crate::{CoreError, Result};

pub const FRAME_SIZE: usize = 64;
pub const FRAME_PIXELS: usize = FRAME_SIZE * FRAME_SIZE;

/// A binary 64x64 frame, row-major, values 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    data: Vec<u8>,
}

impl Frame {
    /// Builds a frame by evaluating `lit(row, col)` at every pixel.
    pub fn from_fn(lit: impl Fn(usize, usize) -> bool) -> Frame {
        let mut data = vec![0u8; FRAME_PIXELS];
        for r in 0..FRAME_SIZE {
            for c in 0..FRAME_SIZE {
                data[r * FRAME_SIZE + c] = lit(r, c) as u8;
            }
        }
        Frame { data }
    }

    /// Wraps raw 0/1 bytes; anything else is rejected.
    pub fn from_bytes01(data: Vec<u8>) -> Result<Frame> {
        if data.len() != FRAME_PIXELS {
            return Err(CoreError::Shape {
                op: "frame",
                lhs: vec![data.len()],
                rhs: vec![FRAME_PIXELS],
            });
        }
        if data.iter().any(|&v| v > 1) {
            return Err(CoreError::Usage("frame bytes must be 0 or 1"));
        }
        Ok(Frame { data })
    }

    pub fn pixel(&self, row: usize, col: usize) -> u8 {
        self.data[row * FRAME_SIZE + col]
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    /// Writes the frame as 0.0/1.0 into a 4096-element slice.
    pub fn fill_f64(&self, out: &mut [f64]) {
        for (o, &v) in out.iter_mut().zip(&self.data) {
            *o = v as f64;
        }
    }

    pub fn count_lit(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }
}

/// Horizontal pixel-center coordinate relative to the image center.
fn u_of(col: usize) -> f64 {
    (col as f64 + 0.5) - (FRAME_SIZE as f64 / 2.0)
}

/// Vertical pixel-center coordinate relative to the image center
/// (increases downward, like row indices).
fn v_of(row: usize) -> f64 {
    (row as f64 + 0.5) - (FRAME_SIZE as f64 / 2.0)
}

// ───────────────────────── cartpole ─────────────────────────

/// Pixels per world unit: the track [-2.4, 2.4] spans the image width.
const CART_SCALE: f64 = FRAME_SIZE as f64 / (2.0 * cartpole::TRACK_LIMIT);
const TRACK_ROW: usize = 48;
const CART_HALF_W: f64 = 6.0;
const CART_ROW_MIN: usize = 45;
const CART_ROW_MAX: usize = 50;
/// Pole base in centered coordinates: the top of the cart body.
const POLE_BASE_V: f64 = 13.0;
const POLE_LEN_PX: f64 = 24.0;

pub(crate) fn render_cartpole(s: &[f64]) -> Frame {
    let cart_u = s[0] * CART_SCALE;
    let theta = s[2];
    let tip_du = POLE_LEN_PX * libm::sin(theta);
    let tip_dv = -POLE_LEN_PX * libm::cos(theta);
    let len2 = tip_du * tip_du + tip_dv * tip_dv;
    Frame::from_fn(|r, c| {
        if r == TRACK_ROW {
            return true;
        }
        let u = u_of(c);
        if (CART_ROW_MIN..=CART_ROW_MAX).contains(&r) && (u - cart_u).abs() <= CART_HALF_W {
            return true;
        }
        // Distance from the pixel center to the pole segment.
        let v = v_of(r);
        let wx = u - cart_u;
        let wy = v - POLE_BASE_V;
        let t = ((wx * tip_du + wy * tip_dv) / len2).clamp(0.0, 1.0);
        let dx = wx - t * tip_du;
        let dy = wy - t * tip_dv;
        dx * dx + dy * dy <= 1.0
    })
}

// ───────────────────────── mountain car ─────────────────────────

const MC_SPAN: f64 = mountain_car::MAX_POS - mountain_car::MIN_POS;
const MC_ROW_TOP: f64 = 8.0;
const MC_ROW_RANGE: f64 = 48.0;
const MC_CAR_RADIUS: f64 = 3.0;
const MC_CAR_LIFT: f64 = 4.0;

/// Terrain height in fractional rows for a world position.
fn mc_terrain_row(p: f64) -> f64 {
    MC_ROW_TOP + (1.0 - libm::sin(3.0 * p)) * 0.5 * MC_ROW_RANGE
}

pub(crate) fn render_mountain_car(s: &[f64]) -> Frame {
    let p = s[0];
    let car_x = (p - mountain_car::MIN_POS) * (FRAME_SIZE as f64 / MC_SPAN);
    let car_y = mc_terrain_row(p) - MC_CAR_LIFT;
    Frame::from_fn(|r, c| {
        let cx = c as f64 + 0.5;
        let cy = r as f64 + 0.5;
        // Terrain curve: one pixel of thickness around the sine profile.
        let p_col = mountain_car::MIN_POS + cx * (MC_SPAN / FRAME_SIZE as f64);
        if (cy - mc_terrain_row(p_col)).abs() <= 0.5 {
            return true;
        }
        let dx = cx - car_x;
        let dy = cy - car_y;
        dx * dx + dy * dy <= MC_CAR_RADIUS * MC_CAR_RADIUS
    })
}

// ───────────────────────── point mass ─────────────────────────

/// Pixels per world unit: [-1, 1]^2 spans the image.
const PM_SCALE: f64 = FRAME_SIZE as f64 / 2.0;
const PM_GOAL_RADIUS: f64 = 5.0;
const PM_GOAL_HALF_THICKNESS: f64 = 0.5;
const PM_MASS_RADIUS: f64 = 3.0;

/// Centered pixel coordinates of a world point (y points up in the world,
/// down in the image).
pub(crate) fn pm_pixel(x: f64, y: f64) -> (f64, f64) {
    (x * PM_SCALE, -y * PM_SCALE)
}

pub(crate) fn render_point_mass(s: &[f64]) -> Frame {
    let (mu, mv) = pm_pixel(s[0], s[1]);
    let (gu, gv) = pm_pixel(point_mass::GOAL[0], point_mass::GOAL[1]);
    Frame::from_fn(|r, c| {
        let u = u_of(c);
        let v = v_of(r);
        let du = u - mu;
        let dv = v - mv;
        if du * du + dv * dv <= PM_MASS_RADIUS * PM_MASS_RADIUS {
            return true;
        }
        let eu = u - gu;
        let ev = v - gv;
        (libm::sqrt(eu * eu + ev * ev) - PM_GOAL_RADIUS).abs() <= PM_GOAL_HALF_THICKNESS
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{render, EnvId};

    fn mirrored(f: &Frame) -> Frame {
        Frame::from_fn(|r, c| f.pixel(r, FRAME_SIZE - 1 - c) == 1)
    }

    #[test]
    fn frames_are_binary_and_nonempty() {
        let states: [(EnvId, &[f64]); 3] = [
            (EnvId::CartpoleBalance, &[0.1, 0.0, -0.05, 0.0]),
            (EnvId::MountainCar, &[-0.5, 0.0]),
            (EnvId::PointMass, &[-0.3, 0.4, 0.0, 0.0]),
        ];
        for (id, s) in states {
            let f = render(id, s);
            assert!(f.data().iter().all(|&v| v <= 1));
            let lit = f.count_lit();
            assert!(lit > 0 && lit < FRAME_PIXELS, "{id}: {lit} pixels");
        }
    }

    #[test]
    fn rendering_is_a_pure_function_of_state() {
        let s = [0.37, -1.0, 0.12, 0.5];
        assert_eq!(render(EnvId::CartpoleBalance, &s), render(EnvId::CartpoleBalance, &s));
    }

    #[test]
    fn cartpole_centered_upright_layout() {
        let f = render(EnvId::CartpoleBalance, &[0.0, 0.0, 0.0, 0.0]);
        // Track spans the full row 48 outside the cart.
        assert_eq!(f.pixel(48, 0), 1);
        assert_eq!(f.pixel(48, 63), 1);
        // Cart body: rows 45..=50, 12 columns centered on the image.
        assert_eq!(f.pixel(45, 26), 1);
        assert_eq!(f.pixel(50, 37), 1);
        assert_eq!(f.pixel(45, 25), 0);
        assert_eq!(f.pixel(44, 30), 0);
        // Pole: a 2-px-wide vertical bar above the cart.
        assert_eq!(f.pixel(30, 31), 1);
        assert_eq!(f.pixel(30, 32), 1);
        assert_eq!(f.pixel(30, 29), 0);
        assert_eq!(f.pixel(30, 34), 0);
        // Tip ends 24 px above the base (v = 13 down to -11 => rows >= 20).
        assert_eq!(f.pixel(20, 31), 1);
        assert_eq!(f.pixel(18, 31), 0);
    }

    #[test]
    fn cartpole_mirror_is_exact() {
        let states = [
            [0.7, 0.0, 0.15, 0.0],
            [-1.3, 0.0, -0.19, 0.0],
            [0.05, 0.0, 0.02, 0.0],
            [2.2, 0.0, 0.11, 0.0],
        ];
        for s in states {
            let sm: alloc::vec::Vec<f64> = s.iter().map(|v| -v).collect();
            assert_eq!(render(EnvId::CartpoleBalance, &s), mirrored(&render(EnvId::CartpoleBalance, &sm)));
        }
    }

    #[test]
    fn point_mass_mirror_is_exact_away_from_goal_ring() {
        // The mass disc mirrors exactly; the goal ring does not move. Compare
        // pixels outside both the ring and its mirror image.
        let s = [0.62, -0.35, 0.0, 0.0];
        let sm = [-0.62, -0.35, 0.0, 0.0];
        let f = render(EnvId::PointMass, &s);
        let fm = render(EnvId::PointMass, &sm);
        let (gu, gv) = pm_pixel(0.5, 0.5);
        let mut compared = 0;
        for r in 0..FRAME_SIZE {
            for c in 0..FRAME_SIZE {
                let (u, v) = (u_of(c), v_of(r));
                let near = |cu: f64| {
                    let du = u - cu;
                    let dv = v - gv;
                    (libm::sqrt(du * du + dv * dv) - PM_GOAL_RADIUS).abs() <= 1.5
                };
                if near(gu) || near(-gu) {
                    continue;
                }
                assert_eq!(f.pixel(r, c), fm.pixel(r, FRAME_SIZE - 1 - c));
                compared += 1;
            }
        }
        assert!(compared > 3500);
    }

    #[test]
    fn point_mass_at_goal_fills_ring_center() {
        let f = render(EnvId::PointMass, &[0.5, 0.5, 0.0, 0.0]);
        // Goal center is at world (0.5, 0.5) => pixel area around (row 15.5,
        // col 47.5).
        assert_eq!(f.pixel(16, 48), 1, "mass disc covers the ring center");
        // The ring itself sits ~5 px out from the center.
        assert_eq!(f.pixel(16, 52), 1);
        assert_eq!(f.pixel(16, 56), 0);
    }

    #[test]
    fn mountain_car_sits_above_terrain() {
        let p = -0.5;
        let f = render(EnvId::MountainCar, &[p, 0.0]);
        let col = ((p - mountain_car::MIN_POS) * (FRAME_SIZE as f64 / MC_SPAN)) as usize;
        let terrain = mc_terrain_row(p);
        let car_row = (terrain - MC_CAR_LIFT) as usize;
        assert_eq!(f.pixel(car_row, col), 1, "car body");
        assert_eq!(f.pixel(terrain as usize, col), 1, "terrain under car");
        assert_eq!(f.pixel(2, col), 0, "sky is empty");
        // Terrain exists in every column.
        for c in 0..FRAME_SIZE {
            assert!((0..FRAME_SIZE).any(|r| f.pixel(r, c) == 1), "column {c}");
        }
    }

    #[test]
    fn mountain_car_moves_right_with_position() {
        let a = render(EnvId::MountainCar, &[-0.9, 0.0]);
        let b = render(EnvId::MountainCar, &[0.3, 0.0]);
        let center = |p: f64| {
            let col = (p - mountain_car::MIN_POS) * (FRAME_SIZE as f64 / MC_SPAN);
            (mc_terrain_row(p) - MC_CAR_LIFT, col)
        };
        let (ra, ca) = center(-0.9);
        let (rb, cb) = center(0.3);
        // Each frame lights its own car center and not the other's.
        assert_eq!(a.pixel(ra as usize, ca as usize), 1);
        assert_eq!(b.pixel(rb as usize, cb as usize), 1);
        assert_eq!(a.pixel(rb as usize, cb as usize), 0);
        assert_eq!(b.pixel(ra as usize, ca as usize), 0);
    }
}
