//! Fast-marching (Telea) inpainting of depth holes.
//!
//! Holes are filled in order of their arrival time `T` of a front that
//! starts on the hole boundary and moves inward at unit speed. `T` solves
//! the Eikonal equation `|grad T| = 1` with the first-order upwind scheme on
//! the 4-neighborhood. When the front reaches a pixel `p`, its value is
//!
//! ```text
//!          sum_q w(p,q) * (I(q) + grad I(q) . (p - q))
//! I(p) = ---------------------------------------------
//!                     sum_q w(p,q)
//! ```
//!
//! over already-valued pixels `q` within `radius`, with
//! `w = dir * dst * lev`:
//!
//! * `dir = |(p - q) / |p - q| . N(p)|`, `N = grad T / |grad T|`,
//! * `dst = 1 / |p - q|^2`,
//! * `lev = 1 / (1 + |T(q) - T(p)|)`.
//!
//! The estimate is clamped to the range of the contributing values so a
//! fill never leaves the span of its known neighborhood.
//!
//! Sky pixels are neither sources nor targets. Hole pixels that cannot be
//! reached from any known pixel without crossing sky are filled in a second
//! pass in which the sky is temporarily treated as a hole; only those
//! pixels keep the second-pass value.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::depth::{DepthMap, Sample};

pub const DEFAULT_RADIUS: usize = 5;

const DIR_FLOOR: f64 = 1e-6;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InpaintError {
    #[error("cannot inpaint: the depth map has no valid pixels")]
    NoKnownPixels,
    #[error("inpainting radius must be at least 1")]
    ZeroRadius,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Flag {
    Known,
    Band,
    Inside,
    Blocked,
}

impl Flag {
    #[inline]
    fn has_value(self) -> bool {
        matches!(self, Flag::Known | Flag::Band)
    }
}

#[derive(Clone, Copy, Debug)]
struct FrontEntry {
    t: f64,
    y: usize,
    x: usize,
}

impl PartialEq for FrontEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for FrontEntry {}

impl PartialOrd for FrontEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for FrontEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.t
            .total_cmp(&other.t)
            .then(self.y.cmp(&other.y))
            .then(self.x.cmp(&other.x))
    }
}

/// Fills every invalid non-sky pixel of `depth`. Valid and sky pixels are
/// returned unchanged.
pub fn inpaint_telea(depth: &DepthMap, radius: usize) -> Result<DepthMap, InpaintError> {
    if radius == 0 {
        return Err(InpaintError::ZeroRadius);
    }
    let (w, h) = depth.dims();
    let holes = depth.invalid_count();
    if holes == 0 {
        return Ok(depth.clone());
    }
    if depth.valid_count() == 0 {
        return Err(InpaintError::NoKnownPixels);
    }

    let mut values = vec![0.0; w * h];
    let mut flags = vec![Flag::Inside; w * h];
    for (i, s) in depth.samples().iter().enumerate() {
        match *s {
            Sample::Depth(d) => {
                values[i] = d;
                flags[i] = Flag::Known;
            }
            Sample::Sky => flags[i] = Flag::Blocked,
            Sample::Invalid => {}
        }
    }

    let mut first = Marcher::new(w, h, radius, values, flags);
    first.run();

    let orphans: Vec<usize> = (0..w * h).filter(|&i| first.flags[i] == Flag::Inside).collect();
    let mut values = first.values;
    if !orphans.is_empty() {
        let flags = first
            .flags
            .iter()
            .map(|f| match f {
                Flag::Blocked | Flag::Inside => Flag::Inside,
                _ => Flag::Known,
            })
            .collect();
        let mut second = Marcher::new(w, h, radius, values.clone(), flags);
        second.run();
        for &i in &orphans {
            values[i] = second.values[i];
        }
    }

    let mut out = depth.clone();
    for (i, s) in depth.samples().iter().enumerate() {
        if *s == Sample::Invalid {
            out.set(i % w, i / w, Sample::Depth(values[i]));
        }
    }
    Ok(out)
}

struct Marcher {
    w: usize,
    h: usize,
    radius: usize,
    values: Vec<f64>,
    flags: Vec<Flag>,
    t: Vec<f64>,
}

impl Marcher {
    fn new(w: usize, h: usize, radius: usize, values: Vec<f64>, flags: Vec<Flag>) -> Self {
        let t = flags
            .iter()
            .map(|f| if f.has_value() { 0.0 } else { f64::INFINITY })
            .collect();
        Self {
            w,
            h,
            radius,
            values,
            flags,
            t,
        }
    }

    fn neighbors(&self, x: usize, y: usize) -> impl Iterator<Item = (usize, usize)> {
        let (w, h) = (self.w, self.h);
        [
            (x.wrapping_sub(1), y),
            (x + 1, y),
            (x, y.wrapping_sub(1)),
            (x, y + 1),
        ]
        .into_iter()
        .filter(move |&(nx, ny)| nx < w && ny < h)
    }

    fn run(&mut self) {
        let mut heap = BinaryHeap::new();
        for y in 0..self.h {
            for x in 0..self.w {
                let i = y * self.w + x;
                if self.flags[i] == Flag::Known
                    && self
                        .neighbors(x, y)
                        .any(|(nx, ny)| self.flags[ny * self.w + nx] == Flag::Inside)
                {
                    self.flags[i] = Flag::Band;
                    heap.push(Reverse(FrontEntry { t: 0.0, y, x }));
                }
            }
        }
        while let Some(Reverse(FrontEntry { x, y, .. })) = heap.pop() {
            self.flags[y * self.w + x] = Flag::Known;
            let next: Vec<(usize, usize)> = self.neighbors(x, y).collect();
            for (nx, ny) in next {
                let j = ny * self.w + nx;
                if self.flags[j] != Flag::Inside {
                    continue;
                }
                let t = self.arrival_time(nx, ny);
                self.t[j] = t;
                self.values[j] = self.estimate(nx, ny);
                self.flags[j] = Flag::Band;
                heap.push(Reverse(FrontEntry { t, y: ny, x: nx }));
            }
        }
    }

    #[inline]
    fn usable_t(&self, x: isize, y: isize) -> Option<f64> {
        if x < 0 || y < 0 || x as usize >= self.w || y as usize >= self.h {
            return None;
        }
        let i = y as usize * self.w + x as usize;
        self.flags[i].has_value().then_some(self.t[i])
    }

    /// Upwind solution of `|grad T| = 1` from one vertical and one
    /// horizontal neighbor.
    fn solve_pair(a: Option<f64>, b: Option<f64>) -> f64 {
        match (a, b) {
            (Some(ta), Some(tb)) => {
                let d = ta - tb;
                if d.abs() >= 1.0 {
                    1.0 + ta.min(tb)
                } else {
                    0.5 * (ta + tb + (2.0 - d * d).sqrt())
                }
            }
            (Some(ta), None) => 1.0 + ta,
            (None, Some(tb)) => 1.0 + tb,
            (None, None) => f64::INFINITY,
        }
    }

    fn arrival_time(&self, x: usize, y: usize) -> f64 {
        let (x, y) = (x as isize, y as isize);
        let up = self.usable_t(x, y - 1);
        let down = self.usable_t(x, y + 1);
        let left = self.usable_t(x - 1, y);
        let right = self.usable_t(x + 1, y);
        [
            Self::solve_pair(up, left),
            Self::solve_pair(down, left),
            Self::solve_pair(up, right),
            Self::solve_pair(down, right),
        ]
        .into_iter()
        .fold(f64::INFINITY, f64::min)
    }

    /// Central difference where both sides are usable, one-sided otherwise.
    fn diff(lo: Option<f64>, mid: f64, hi: Option<f64>) -> f64 {
        match (lo, hi) {
            (Some(l), Some(h)) => 0.5 * (h - l),
            (None, Some(h)) => h - mid,
            (Some(l), None) => mid - l,
            (None, None) => 0.0,
        }
    }

    #[inline]
    fn usable_value(&self, x: isize, y: isize) -> Option<f64> {
        if x < 0 || y < 0 || x as usize >= self.w || y as usize >= self.h {
            return None;
        }
        let i = y as usize * self.w + x as usize;
        self.flags[i].has_value().then_some(self.values[i])
    }

    fn estimate(&self, x: usize, y: usize) -> f64 {
        let (xi, yi) = (x as isize, y as isize);
        let tp = self.t[y * self.w + x];
        let gx = Self::diff(self.usable_t(xi - 1, yi), tp, self.usable_t(xi + 1, yi));
        let gy = Self::diff(self.usable_t(xi, yi - 1), tp, self.usable_t(xi, yi + 1));
        let gnorm = (gx * gx + gy * gy).sqrt();
        let normal = (gnorm > 0.0).then(|| (gx / gnorm, gy / gnorm));

        let r = self.radius as isize;
        let r2 = (r * r) as f64;
        let mut num = 0.0;
        let mut den = 0.0;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for qy in (yi - r).max(0)..=(yi + r).min(self.h as isize - 1) {
            for qx in (xi - r).max(0)..=(xi + r).min(self.w as isize - 1) {
                let qi = qy as usize * self.w + qx as usize;
                if !self.flags[qi].has_value() {
                    continue;
                }
                let (rx, ry) = ((xi - qx) as f64, (yi - qy) as f64);
                let len2 = rx * rx + ry * ry;
                if len2 == 0.0 || len2 > r2 {
                    continue;
                }
                let len = len2.sqrt();
                let dir = match normal {
                    Some((nx, ny)) => ((rx * nx + ry * ny) / len).abs().max(DIR_FLOOR),
                    None => 1.0,
                };
                let dst = 1.0 / len2;
                let lev = 1.0 / (1.0 + (self.t[qi] - tp).abs());
                let wgt = dir * dst * lev;

                let iq = self.values[qi];
                let gix = Self::diff(self.usable_value(qx - 1, qy), iq, self.usable_value(qx + 1, qy));
                let giy = Self::diff(self.usable_value(qx, qy - 1), iq, self.usable_value(qx, qy + 1));
                num += wgt * (iq + gix * rx + giy * ry);
                den += wgt;
                lo = lo.min(iq);
                hi = hi.max(iq);
            }
        }
        debug_assert!(den > 0.0, "front pixel always has a valued neighbor");
        (num / den).clamp(lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn map_from(w: usize, h: usize, f: impl Fn(usize, usize) -> Sample) -> DepthMap {
        let samples = (0..w * h).map(|i| f(i % w, i / w)).collect();
        DepthMap::from_samples(w, h, samples).unwrap()
    }

    #[test]
    fn constant_surround_fills_exactly() {
        let c = 7.25;
        let m = map_from(20, 15, |x, y| {
            if (6..13).contains(&x) && (4..10).contains(&y) {
                Sample::Invalid
            } else {
                Sample::Depth(c)
            }
        });
        let out = inpaint_telea(&m, DEFAULT_RADIUS).unwrap();
        for s in out.samples() {
            assert!((s.depth().unwrap() - c).abs() < 1e-6);
        }
    }

    #[test]
    fn ramp_hole_is_recovered() {
        let ramp = |x: usize| 10.0 + 0.5 * x as f64;
        let hole = |x: usize, y: usize| (14..17).contains(&x) && (4..12).contains(&y);
        let m = map_from(32, 16, |x, y| {
            if hole(x, y) {
                Sample::Invalid
            } else {
                Sample::Depth(ramp(x))
            }
        });
        let out = inpaint_telea(&m, 5).unwrap();
        // value difference between the known pixels flanking the hole
        let span = ramp(17) - ramp(13);
        let mut max_err: f64 = 0.0;
        for y in 0..16 {
            for x in 0..32 {
                if hole(x, y) {
                    max_err = max_err.max((out.depth(x, y).unwrap() - ramp(x)).abs());
                }
            }
        }
        assert!(max_err < 0.05 * span, "max error {max_err} vs span {span}");
    }

    #[test]
    fn no_holes_is_identity() {
        let m = map_from(5, 4, |x, y| {
            if y == 0 {
                Sample::Sky
            } else {
                Sample::Depth(1.0 + x as f64 + y as f64)
            }
        });
        assert_eq!(inpaint_telea(&m, 3).unwrap(), m);
    }

    #[test]
    fn errors() {
        let m = map_from(3, 3, |_, _| Sample::Invalid);
        assert_eq!(inpaint_telea(&m, 5), Err(InpaintError::NoKnownPixels));
        let m = map_from(3, 3, |_, _| Sample::Depth(1.0));
        assert_eq!(inpaint_telea(&m, 0), Err(InpaintError::ZeroRadius));
    }

    #[test]
    fn sky_is_not_filled_and_isolated_holes_still_fill() {
        // column 0..3 known, a sky band at x = 4, hole pocket x = 6 enclosed by sky
        let m = map_from(9, 5, |x, y| match x {
            0..=3 => Sample::Depth(4.0 + y as f64),
            6 if y == 2 => Sample::Invalid,
            _ => Sample::Sky,
        });
        let out = inpaint_telea(&m, 5).unwrap();
        assert_eq!(out.sky_count(), m.sky_count());
        let v = out.depth(6, 2).unwrap();
        assert!((4.0..=8.0).contains(&v));
        assert_eq!(out.invalid_count(), 0);
    }

    fn arb_map() -> impl Strategy<Value = DepthMap> {
        (2usize..=24, 2usize..=24).prop_flat_map(|(w, h)| {
            proptest::collection::vec(
                prop_oneof![
                    3 => (0.5f64..80.0).prop_map(Sample::Depth),
                    2 => Just(Sample::Invalid),
                    1 => Just(Sample::Sky),
                ],
                w * h,
            )
            .prop_filter_map("need a known pixel", move |s| {
                s.iter().any(|v| v.is_valid()).then(|| DepthMap::from_samples(w, h, s).unwrap())
            })
        })
    }

    proptest! {
        #[test]
        fn fills_within_known_range_and_preserves_knowns(m in arb_map(), radius in 1usize..7) {
            let out = inpaint_telea(&m, radius).unwrap();
            let (lo, hi) = m.value_range().unwrap();
            prop_assert_eq!(out.invalid_count(), 0);
            for (a, b) in m.samples().iter().zip(out.samples()) {
                match *a {
                    Sample::Depth(d) => prop_assert_eq!(b.depth().unwrap().to_bits(), d.to_bits()),
                    Sample::Sky => prop_assert!(b.is_sky()),
                    Sample::Invalid => {
                        let v = b.depth().unwrap();
                        prop_assert!(v >= lo && v <= hi, "{v} outside [{lo}, {hi}]");
                    }
                }
            }
            prop_assert_eq!(inpaint_telea(&m, radius).unwrap(), out);
        }
    }
}
