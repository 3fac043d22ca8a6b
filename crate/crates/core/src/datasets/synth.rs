//! Flat 2-D renderer for articulated machines: a truck body with cab,
//! platform and two wheels, and a crane arm of two or three links ending in a
//! hook, over a textured background.
//!
//! Labels are the fine vocabulary in [`super::FINE_CLASSES`]. Parts are
//! painted arm first, truck second, so the truck's pixels do not depend on
//! the arm articulation.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, LabelMask};
use crate::rng;

pub const BACKGROUND: u8 = 0;
pub const BASE: u8 = 1;
pub const CAB: u8 = 2;
pub const WHEEL_FRONT: u8 = 3;
pub const WHEEL_REAR: u8 = 4;
pub const ARM_LINKS: [u8; 3] = [5, 6, 7];
pub const HOOK: u8 = 8;
pub const PLATFORM: u8 = 9;

/// Part colors. The truck body and the crane are each painted in one color
/// family: neighbouring parts differ by 20 to 35 RGB units, far less than the
/// gap between the families and the background.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Palette {
    pub background: [u8; 3],
    /// Peak deviation of the smooth background texture, per channel.
    pub texture_amplitude: f32,
    pub base: [u8; 3],
    pub cab: [u8; 3],
    pub wheel: [u8; 3],
    pub platform: [u8; 3],
    pub links: [[u8; 3]; 3],
    pub hook: [u8; 3],
}

impl Default for Palette {
    fn default() -> Self {
        Self {
            background: [95, 125, 85],
            texture_amplitude: 10.0,
            base: [220, 120, 30],
            cab: [235, 140, 50],
            wheel: [45, 45, 50],
            platform: [200, 105, 40],
            links: [[50, 90, 200], [40, 105, 215], [60, 100, 190]],
            hook: [70, 85, 180],
        }
    }
}

impl Palette {
    /// Color key for each text prompt the mock logit provider understands:
    /// `crane` sits between the three link colors, `truck` on the body.
    pub fn prompt_keys(&self) -> BTreeMap<String, [u8; 3]> {
        let mut key = [0u8; 3];
        for (c, k) in key.iter_mut().enumerate() {
            *k = (self.links.iter().map(|l| l[c] as u32).sum::<u32>() / 3) as u8;
        }
        BTreeMap::from([("crane".to_string(), key), ("truck".to_string(), self.base)])
    }

    fn color(&self, label: u8) -> [u8; 3] {
        match label {
            BASE => self.base,
            CAB => self.cab,
            WHEEL_FRONT | WHEEL_REAR => self.wheel,
            PLATFORM => self.platform,
            HOOK => self.hook,
            l if ARM_LINKS.contains(&l) => self.links[(l - ARM_LINKS[0]) as usize],
            _ => self.background,
        }
    }
}

/// Axis-aligned rectangle `(x, y, w, h)` with `(x, y)` its top-left corner.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: f32,
    pub y: f32,
    pub w: f32,
    pub h: f32,
}

impl Rect {
    fn contains(&self, px: f32, py: f32) -> bool {
        px >= self.x && px < self.x + self.w && py >= self.y && py < self.y + self.h
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    /// Truck body; cab, platform and wheels are placed relative to it.
    pub base: Rect,
    pub cab_width: f32,
    pub cab_height: f32,
    /// Cab on the right end of the base (otherwise the left end).
    pub cab_right: bool,
    pub platform_width: f32,
    pub platform_height: f32,
    pub wheel_radius: f32,
    /// Link lengths, two or three.
    pub link_lengths: Vec<f32>,
    /// Absolute link angles in degrees, counter-clockwise from +x (up is
    /// positive).
    pub link_angles: Vec<f32>,
    pub link_width: f32,
    pub hook_size: f32,
    /// Cut a background window into the middle of the base.
    pub hole: bool,
    pub texture_seed: u64,
    /// Per-pixel uniform noise amplitude.
    pub noise: u8,
    pub palette: Palette,
}

struct Layout {
    base: Rect,
    cab: Rect,
    platform: Rect,
    hole: Option<Rect>,
    wheels: [(f32, f32); 2],
    links: Vec<([f32; 2], [f32; 2])>,
    hook: Rect,
}

fn segment_distance(p: [f32; 2], a: [f32; 2], b: [f32; 2]) -> f32 {
    let (abx, aby) = (b[0] - a[0], b[1] - a[1]);
    let len2 = abx * abx + aby * aby;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * abx + (p[1] - a[1]) * aby) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (cx, cy) = (a[0] + t * abx, a[1] + t * aby);
    ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt()
}

impl SceneSpec {
    fn layout(&self) -> Layout {
        let b = self.base;
        let cab_x = if self.cab_right { b.x + b.w - self.cab_width } else { b.x };
        let cab = Rect {
            x: cab_x,
            y: b.y - self.cab_height,
            w: self.cab_width,
            h: self.cab_height,
        };
        let plat_x = if self.cab_right { b.x + 2.0 } else { b.x + b.w - 2.0 - self.platform_width };
        let platform = Rect {
            x: plat_x,
            y: b.y - self.platform_height,
            w: self.platform_width,
            h: self.platform_height,
        };
        let r = self.wheel_radius;
        let left = (b.x + r + 1.0, b.y + b.h);
        let right = (b.x + b.w - r - 1.0, b.y + b.h);
        let wheels = if self.cab_right { [right, left] } else { [left, right] };
        let mut start = [platform.x + platform.w / 2.0, platform.y];
        let mut links = Vec::new();
        for (&len, &deg) in self.link_lengths.iter().zip(&self.link_angles) {
            let a = deg.to_radians();
            let end = [start[0] + len * a.cos(), start[1] - len * a.sin()];
            links.push((start, end));
            start = end;
        }
        let s = self.hook_size;
        let hook = Rect {
            x: start[0] - s / 2.0,
            y: start[1],
            w: s,
            h: s,
        };
        let hole = self.hole.then_some(Rect {
            x: b.x + b.w * 0.3,
            y: b.y + b.h * 0.25,
            w: b.w * 0.4,
            h: b.h * 0.5,
        });
        Layout {
            base: b,
            cab,
            platform,
            hole,
            wheels,
            links,
            hook,
        }
    }

    /// Label at pixel center `(x + 0.5, y + 0.5)`, later parts painting over
    /// earlier ones.
    fn label_at(&self, l: &Layout, x: usize, y: usize) -> u8 {
        let p = [x as f32 + 0.5, y as f32 + 0.5];
        let mut label = BACKGROUND;
        for (i, &(a, b)) in l.links.iter().enumerate() {
            if segment_distance(p, a, b) <= self.link_width / 2.0 {
                label = ARM_LINKS[i];
            }
        }
        if l.hook.contains(p[0], p[1]) {
            label = HOOK;
        }
        if l.base.contains(p[0], p[1]) && !l.hole.is_some_and(|h| h.contains(p[0], p[1])) {
            label = BASE;
        }
        if l.platform.contains(p[0], p[1]) {
            label = PLATFORM;
        }
        if l.cab.contains(p[0], p[1]) {
            label = CAB;
        }
        for (i, &(cx, cy)) in l.wheels.iter().enumerate() {
            if (p[0] - cx).powi(2) + (p[1] - cy).powi(2) <= self.wheel_radius.powi(2) {
                label = if i == 0 { WHEEL_FRONT } else { WHEEL_REAR };
            }
        }
        label
    }

    /// Fine labels this spec declares.
    pub fn parts(&self) -> Vec<u8> {
        let mut parts = vec![BASE, CAB, WHEEL_FRONT, WHEEL_REAR, PLATFORM, HOOK];
        parts.extend(&ARM_LINKS[..self.link_lengths.len()]);
        parts.sort_unstable();
        parts
    }

    pub fn validate(&self, size: (usize, usize)) -> Result<()> {
        if !(2..=3).contains(&self.link_lengths.len()) || self.link_lengths.len() != self.link_angles.len() {
            return Err(Error::Spec("an arm has two or three links, one angle each".into()));
        }
        let l = self.layout();
        let (w, h) = (size.0 as f32, size.1 as f32);
        let inside = |x0: f32, y0: f32, x1: f32, y1: f32| x0 >= 0.0 && y0 >= 0.0 && x1 <= w && y1 <= h;
        let r = self.wheel_radius;
        let mut ok = [l.base, l.cab, l.platform, l.hook]
            .iter()
            .all(|q| inside(q.x, q.y, q.x + q.w, q.y + q.h));
        ok &= l.wheels.iter().all(|&(cx, cy)| inside(cx - r, cy - r, cx + r, cy + r));
        let hw = self.link_width / 2.0;
        ok &= l.links.iter().all(|&(a, b)| {
            inside(
                a[0].min(b[0]) - hw,
                a[1].min(b[1]) - hw,
                a[0].max(b[0]) + hw,
                a[1].max(b[1]) + hw,
            )
        });
        if !ok {
            return Err(Error::Spec(format!("part outside the {}x{} canvas", size.0, size.1)));
        }
        Ok(())
    }

    /// Random machine scaled to `size`, redrawn until it fits the canvas and
    /// every part is visible.
    pub fn random(seed: u64, size: (usize, usize), hole: bool) -> Self {
        let s = size.0.min(size.1) as f32;
        for attempt in 0..1000u64 {
            let mut r = rng::stream(seed, "scene", &[attempt]);
            let bw = s * r.random_range(0.45..0.6);
            let bh = s * r.random_range(0.11..0.15);
            let wheel = s * r.random_range(0.06..0.08);
            let bx = r.random_range(2.0..(size.0 as f32 - bw - 2.0).max(3.0));
            let by = size.1 as f32 - bh - wheel - r.random_range(2.0..s * 0.08);
            let links = if r.random_bool(0.5) { 3 } else { 2 };
            let mut lengths = vec![s * r.random_range(0.22..0.3), s * r.random_range(0.18..0.25)];
            let first: f32 = r.random_range(40.0..80.0);
            let lean = if r.random_bool(0.5) { 1.0 } else { -1.0 };
            let mut angles = vec![
                if lean > 0.0 { first } else { 180.0 - first },
                if lean > 0.0 {
                    r.random_range(-20.0..30.0)
                } else {
                    180.0 - r.random_range(-20.0..30.0)
                },
            ];
            if links == 3 {
                lengths.push(s * r.random_range(0.1..0.15));
                angles.push(if lean > 0.0 { r.random_range(-70.0..-30.0) } else { 180.0 + r.random_range(30.0..70.0) });
            }
            let spec = SceneSpec {
                base: Rect { x: bx, y: by, w: bw, h: bh },
                cab_width: s * r.random_range(0.14..0.18),
                cab_height: s * r.random_range(0.12..0.16),
                cab_right: r.random_bool(0.5),
                platform_width: s * r.random_range(0.16..0.22),
                platform_height: s * r.random_range(0.04..0.05),
                wheel_radius: wheel,
                link_lengths: lengths,
                link_angles: angles,
                link_width: (s * 0.065).max(3.0),
                hook_size: (s * 0.06).max(3.0),
                hole,
                texture_seed: rng::derive(seed, &[attempt, 1]),
                noise: 3,
                palette: Palette::default(),
            };
            if spec.validate(size).is_ok() && spec.visible_parts(size) == spec.parts() {
                return spec;
            }
        }
        unreachable!("scene sampling failed for a {}x{} canvas", size.0, size.1)
    }

    fn visible_parts(&self, size: (usize, usize)) -> Vec<u8> {
        let l = self.layout();
        let mut seen = [false; 10];
        for y in 0..size.1 {
            for x in 0..size.0 {
                seen[self.label_at(&l, x, y) as usize] = true;
            }
        }
        (1..10u8).filter(|&i| seen[i as usize]).collect()
    }
}

/// Smooth value noise in `[-1, 1]` on an 8-pixel lattice.
fn texture(seed: u64, x: usize, y: usize) -> f32 {
    const CELL: f32 = 8.0;
    let (fx, fy) = (x as f32 / CELL, y as f32 / CELL);
    let (ix, iy) = (fx.floor() as u64, fy.floor() as u64);
    let (tx, ty) = (fx - fx.floor(), fy - fy.floor());
    let v = |i: u64, j: u64| rng::hash_unit(seed, &[i, j]) * 2.0 - 1.0;
    let top = v(ix, iy) * (1.0 - tx) + v(ix + 1, iy) * tx;
    let bottom = v(ix, iy + 1) * (1.0 - tx) + v(ix + 1, iy + 1) * tx;
    top * (1.0 - ty) + bottom * ty
}

/// Renders `spec` into an image and a fine-label mask.
pub fn generate_scene(spec: &SceneSpec, size: (usize, usize)) -> Result<(Image, LabelMask)> {
    spec.validate(size)?;
    let l = spec.layout();
    let mask = LabelMask::from_fn(size.0, size.1, |x, y| spec.label_at(&l, x, y));
    let pal = &spec.palette;
    let image = Image::from_fn(size.0, size.1, |x, y| {
        let label = mask.get(x, y);
        let mut rgb = pal.color(label).map(|c| c as f32);
        if label == BACKGROUND {
            let t = texture(spec.texture_seed, x, y) * pal.texture_amplitude;
            rgb.iter_mut().for_each(|c| *c += t);
        }
        for (ch, c) in rgb.iter_mut().enumerate() {
            let u = rng::hash_unit(spec.texture_seed, &[x as u64, y as u64, ch as u64 + 7]);
            *c += (u * 2.0 - 1.0) * spec.noise as f32;
        }
        rgb.map(|c| c.round().clamp(0.0, 255.0) as u8)
    })?;
    Ok((image, mask))
}

/// `count` random scenes of `size`, item `i` drawn from `derive(seed, i)`.
pub fn generate_dataset(count: usize, size: (usize, usize), seed: u64, hole: bool) -> Result<Vec<(Image, LabelMask)>> {
    (0..count)
        .map(|i| generate_scene(&SceneSpec::random(rng::derive(seed, &[i as u64]), size, hole), size))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const SIZE: (usize, usize) = (96, 96);

    #[test]
    fn rendering_is_deterministic() {
        let spec = SceneSpec::random(3, SIZE, false);
        assert_eq!(generate_scene(&spec, SIZE).unwrap(), generate_scene(&spec, SIZE).unwrap());
    }

    #[test]
    fn mask_labels_match_declared_parts() {
        for seed in 0..20 {
            let spec = SceneSpec::random(seed, SIZE, seed % 2 == 0);
            let (_, mask) = generate_scene(&spec, SIZE).unwrap();
            let mut expected = spec.parts();
            expected.insert(0, BACKGROUND);
            assert_eq!(mask.labels(), expected, "seed {seed}");
            for p in spec.parts() {
                assert!(mask.count(p) > 0);
            }
        }
    }

    #[test]
    fn arm_angle_changes_only_arm_pixels() {
        let a = SceneSpec::random(11, SIZE, false);
        let mut b = a.clone();
        b.link_angles[1] += 15.0;
        let (_, ma) = generate_scene(&a, SIZE).unwrap();
        let (_, mb) = generate_scene(&b, SIZE).unwrap();
        let arm = |l: u8| ARM_LINKS.contains(&l) || l == HOOK;
        let mut differ = 0;
        for y in 0..SIZE.1 {
            for x in 0..SIZE.0 {
                let (la, lb) = (ma.get(x, y), mb.get(x, y));
                assert_eq!(la == BASE, lb == BASE);
                if la != lb {
                    differ += 1;
                    assert!(arm(la) || arm(lb));
                }
            }
        }
        assert!(differ > 0);
    }

    #[test]
    fn hole_variant_opens_the_base() {
        let spec = SceneSpec::random(5, SIZE, false);
        let holed = SceneSpec { hole: true, ..spec.clone() };
        let (_, solid) = generate_scene(&spec, SIZE).unwrap();
        let (_, open) = generate_scene(&holed, SIZE).unwrap();
        assert!(open.count(BASE) < solid.count(BASE));
        let b = spec.base;
        let (cx, cy) = ((b.x + b.w / 2.0) as usize, (b.y + b.h / 2.0) as usize);
        assert_ne!(open.get(cx, cy), BASE);
    }

    #[test]
    fn out_of_canvas_is_a_spec_error() {
        let mut spec = SceneSpec::random(1, SIZE, false);
        spec.base.x = 90.0;
        assert!(matches!(generate_scene(&spec, SIZE), Err(Error::Spec(_))));
    }

    #[test]
    fn crane_key_is_near_every_link() {
        let pal = Palette::default();
        let key = pal.prompt_keys()["crane"];
        for link in pal.links {
            let d: f32 = (0..3).map(|c| (link[c] as f32 - key[c] as f32).powi(2)).sum::<f32>().sqrt();
            assert!(d < 48.0, "{d}");
        }
    }
}
