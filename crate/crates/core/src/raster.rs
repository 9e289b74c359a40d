//! Binary instance maps and skeleton pose maps in the union-box frame.

use std::fmt::Write as _;

use crate::error::Result;
use crate::geometry::{frame_coords, normalize_to_union, union_box, BBox, UnionBox};
use crate::scene::Keypoint;

pub const DEFAULT_GRID: usize = 64;
pub const GRAY_MIN: f64 = 0.15;
pub const GRAY_MAX: f64 = 0.95;

/// Limbs of the 17-point keypoint layout (nose, eyes, ears, shoulders,
/// elbows, wrists, hips, knees, ankles), as 0-based index pairs. Drawing
/// order is list order; limb `i` gets `limb_gray(i)`.
pub const SKELETON: [(usize, usize); 19] = [
    (15, 13),
    (13, 11),
    (16, 14),
    (14, 12),
    (11, 12),
    (5, 11),
    (6, 12),
    (5, 6),
    (5, 7),
    (6, 8),
    (7, 9),
    (8, 10),
    (1, 2),
    (0, 1),
    (0, 2),
    (1, 3),
    (2, 4),
    (3, 5),
    (4, 6),
];

/// Gray values evenly spaced over `[0.15, 0.95]` in limb order.
pub fn limb_gray(limb: usize) -> f64 {
    gray(limb, SKELETON.len())
}

fn gray(limb: usize, limbs: usize) -> f64 {
    if limbs < 2 {
        return GRAY_MIN;
    }
    GRAY_MIN + (GRAY_MAX - GRAY_MIN) * limb as f64 / (limbs - 1) as f64
}

/// Channel-major `channels x grid x grid` map.
#[derive(Debug, Clone, PartialEq)]
pub struct MapTensor {
    pub channels: usize,
    pub grid: usize,
    pub values: Vec<f64>,
}

impl MapTensor {
    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.grid * self.grid;
        &self.values[c * n..(c + 1) * n]
    }

    /// Copy into a row-major `grid x grid x channels` buffer.
    pub fn write_hwc(&self, out: &mut [f64]) {
        let n = self.grid * self.grid;
        assert_eq!(out.len(), n * self.channels);
        for c in 0..self.channels {
            for (i, v) in self.channel(c).iter().enumerate() {
                out[i * self.channels + c] = *v;
            }
        }
    }

    /// Plain-text dump, one grid row per line.
    pub fn to_text(&self, c: usize) -> String {
        let mut s = String::new();
        for row in self.channel(c).chunks(self.grid) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.2}")).collect();
            s.push_str(&cells.join(" "));
            s.push('\n');
        }
        s
    }

    /// ASCII portable graymap (P2) with values scaled to 0..=255.
    pub fn to_pgm(&self, c: usize) -> String {
        let mut s = format!("P2\n{} {}\n255\n", self.grid, self.grid);
        for row in self.channel(c).chunks(self.grid) {
            let cells: Vec<String> = row.iter().map(|v| ((v * 255.0).round() as u8).to_string()).collect();
            let _ = writeln!(s, "{}", cells.join(" "));
        }
        s
    }
}

pub fn rasterize_instance_map(b: &BBox, u: &UnionBox, grid: usize) -> Result<Vec<f64>> {
    let cb = normalize_to_union(b, u, grid)?;
    let mut map = vec![0.0; grid * grid];
    for y in cb.y1..=cb.y2 {
        map[y * grid + cb.x1..=y * grid + cb.x2].fill(1.0);
    }
    Ok(map)
}

fn keypoint_cell(k: &Keypoint, u: &UnionBox, grid: usize) -> (i64, i64) {
    let (fx, fy) = frame_coords(k.x, k.y, &u.bbox, grid);
    let last = grid as i64 - 1;
    let cell = |v: f64| {
        let v = if v.is_finite() { v.floor() } else { 0.0 };
        (v.clamp(i64::MIN as f64, i64::MAX as f64) as i64).clamp(0, last)
    };
    (cell(fx), cell(fy))
}

/// Integer line from `a` to `b` inclusive, all octants.
pub fn bresenham(a: (i64, i64), b: (i64, i64)) -> Vec<(i64, i64)> {
    let (mut x, mut y) = a;
    let dx = (b.0 - x).abs();
    let dy = -(b.1 - y).abs();
    let sx = if x < b.0 { 1 } else { -1 };
    let sy = if y < b.1 { 1 } else { -1 };
    let mut err = dx + dy;
    let mut out = Vec::with_capacity((dx - dy + 1) as usize);
    loop {
        out.push((x, y));
        if (x, y) == b {
            return out;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Skeleton lines in the union frame. Limbs with an invisible endpoint are
/// skipped, out-of-frame endpoints are clipped to the border, and later
/// limbs overwrite earlier ones.
pub fn rasterize_pose_map(keypoints: &[Keypoint], u: &UnionBox, grid: usize, skeleton: &[(usize, usize)]) -> Vec<f64> {
    let mut map = vec![0.0; grid * grid];
    let n = skeleton.len();
    for (i, &(a, b)) in skeleton.iter().enumerate() {
        let (Some(ka), Some(kb)) = (keypoints.get(a), keypoints.get(b)) else {
            continue;
        };
        if !ka.visible || !kb.visible {
            continue;
        }
        let gray = gray(i, n);
        for (x, y) in bresenham(keypoint_cell(ka, u, grid), keypoint_cell(kb, u, grid)) {
            map[y as usize * grid + x as usize] = gray;
        }
    }
    map
}

/// Two-channel `[human, object]` map for the classifier's spatial stream.
pub fn build_spatial_map(human: &BBox, object: &BBox, grid: usize) -> Result<MapTensor> {
    let u = union_box(human, object);
    let mut values = rasterize_instance_map(human, &u, grid)?;
    values.extend(rasterize_instance_map(object, &u, grid)?);
    Ok(MapTensor { channels: 2, grid, values })
}

/// Three-channel `[pose, human, object]` map for the interactiveness
/// network. Missing keypoints give an all-zero pose channel.
pub fn build_spatial_pose_tensor(
    human: &BBox,
    object: &BBox,
    keypoints: Option<&[Keypoint]>,
    grid: usize,
) -> Result<MapTensor> {
    let u = union_box(human, object);
    let mut values = match keypoints {
        Some(k) => rasterize_pose_map(k, &u, grid, &SKELETON),
        None => vec![0.0; grid * grid],
    };
    values.extend(rasterize_instance_map(human, &u, grid)?);
    values.extend(rasterize_instance_map(object, &u, grid)?);
    Ok(MapTensor { channels: 3, grid, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::union_box;
    use proptest::prelude::*;

    fn kp(x: f64, y: f64) -> Keypoint {
        Keypoint { x, y, visible: true }
    }

    #[test]
    fn gray_range_and_order() {
        assert_eq!(limb_gray(0), GRAY_MIN);
        assert!((limb_gray(18) - GRAY_MAX).abs() < 1e-15);
        for i in 1..19 {
            assert!(limb_gray(i) > limb_gray(i - 1));
        }
        // Every keypoint takes part in some limb.
        let mut seen = [false; 17];
        for (a, b) in SKELETON {
            seen[a] = true;
            seen[b] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn instance_map_examples() {
        let ub = BBox::new(10.0, 20.0, 110.0, 70.0);
        let u = union_box(&ub, &BBox::new(20.0, 30.0, 40.0, 50.0));
        assert!(rasterize_instance_map(&ub, &u, 64).unwrap().iter().all(|&v| v == 1.0));

        let left = BBox::new(10.0, 20.0, 60.0, 70.0);
        let m = rasterize_instance_map(&left, &u, 64).unwrap();
        for y in 0..64 {
            for x in 0..64 {
                assert_eq!(m[y * 64 + x], if x < 32 { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn instance_map_sum_equals_cell_count() {
        let u = union_box(&BBox::new(0.0, 0.0, 37.0, 91.0), &BBox::new(12.3, 40.1, 88.8, 120.0));
        for b in [u.human, u.object, BBox::new(5.5, 5.5, 6.0, 100.0)] {
            let cb = normalize_to_union(&b, &u, 64).unwrap();
            let m = rasterize_instance_map(&b, &u, 64).unwrap();
            let mut count = 0;
            for y in 0..64 {
                for x in 0..64 {
                    let inside = (cb.x1..=cb.x2).contains(&x) && (cb.y1..=cb.y2).contains(&y);
                    assert_eq!(m[y * 64 + x], inside as u8 as f64);
                    count += inside as usize;
                }
            }
            assert_eq!(m.iter().sum::<f64>() as usize, count);
            assert_eq!(count, cb.cells());
        }
    }

    #[test]
    fn invisible_keypoints_give_empty_pose() {
        let u = union_box(&BBox::new(0.0, 0.0, 10.0, 10.0), &BBox::new(5.0, 5.0, 20.0, 20.0));
        let kps: Vec<_> = (0..17).map(|i| Keypoint { x: i as f64, y: 3.0, visible: false }).collect();
        assert!(rasterize_pose_map(&kps, &u, 64, &SKELETON).iter().all(|&v| v == 0.0));
        let t = build_spatial_pose_tensor(&u.human, &u.object, None, 64).unwrap();
        assert!(t.channel(0).iter().all(|&v| v == 0.0));
        assert!(t.channel(1).contains(&1.0));
    }

    #[test]
    fn horizontal_limb_fills_one_row() {
        let u = union_box(&BBox::new(0.0, 0.0, 64.0, 64.0), &BBox::new(10.0, 10.0, 20.0, 20.0));
        let mut kps = vec![Keypoint { x: 0.0, y: 0.0, visible: false }; 17];
        // Limb (5, 7) is index 8; span the whole frame at y = 20.5.
        kps[5] = kp(0.0, 20.5);
        kps[7] = kp(64.0, 20.5);
        let m = rasterize_pose_map(&kps, &u, 64, &SKELETON);
        for y in 0..64 {
            for x in 0..64 {
                let want = if y == 20 { limb_gray(8) } else { 0.0 };
                assert_eq!(m[y * 64 + x], want);
            }
        }
    }

    #[test]
    fn later_limbs_overwrite() {
        let u = union_box(&BBox::new(0.0, 0.0, 64.0, 64.0), &BBox::new(10.0, 10.0, 20.0, 20.0));
        let mut kps = vec![Keypoint { x: 0.0, y: 0.0, visible: false }; 17];
        kps[5] = kp(0.5, 10.5);
        kps[7] = kp(40.5, 10.5); // limb 8, horizontal
        kps[9] = kp(20.5, 0.5); // limb 10 = (7, 9) from (40,10) to (20,0)
        kps[6] = kp(20.5, 30.5);
        kps[8] = kp(20.5, 0.5); // limb 9 = (6, 8), vertical at x = 20
        let m = rasterize_pose_map(&kps, &u, 64, &SKELETON);
        assert_eq!(m[10 * 64 + 20], limb_gray(9));
        assert_eq!(m[10 * 64 + 40], limb_gray(10));
        assert_eq!(m[10 * 64 + 5], limb_gray(8));
    }

    #[test]
    fn bresenham_matches_oracle() {
        // Oracle: for shallow lines, exactly one cell per column nearest the ideal line.
        for &(a, b) in &[((0, 0), (10, 3)), ((3, 7), (-5, 2)), ((0, 0), (0, 5)), ((2, 2), (2, 2)), ((0, 0), (-7, -7))] {
            let pts = bresenham(a, b);
            assert_eq!(pts[0], a);
            assert_eq!(*pts.last().unwrap(), b);
            let (dx, dy) = (b.0 - a.0, b.1 - a.1);
            assert_eq!(pts.len() as i64, dx.abs().max(dy.abs()) + 1);
            for w in pts.windows(2) {
                assert!((w[1].0 - w[0].0).abs() <= 1 && (w[1].1 - w[0].1).abs() <= 1);
            }
            if dx.abs() >= dy.abs() && dx != 0 {
                for &(x, y) in &pts {
                    let ideal = a.1 as f64 + dy as f64 * (x - a.0) as f64 / dx as f64;
                    assert!((y as f64 - ideal).abs() <= 0.5 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn channels_match_instance_maps() {
        let h = BBox::new(3.0, 4.0, 30.0, 60.0);
        let o = BBox::new(25.0, 30.0, 70.0, 45.0);
        let kps: Vec<_> = (0..17).map(|i| kp(5.0 + i as f64, 10.0 + 2.0 * i as f64)).collect();
        let u = union_box(&h, &o);
        let t = build_spatial_pose_tensor(&h, &o, Some(&kps), 64).unwrap();
        assert_eq!(t.channel(1), &rasterize_instance_map(&h, &u, 64).unwrap()[..]);
        assert_eq!(t.channel(2), &rasterize_instance_map(&o, &u, 64).unwrap()[..]);
        let s = build_spatial_map(&h, &o, 64).unwrap();
        assert_eq!(s.channel(0), t.channel(1));
        assert_eq!(s.channel(1), t.channel(2));
        let mut hwc = vec![0.0; 3 * 64 * 64];
        t.write_hwc(&mut hwc);
        assert_eq!(hwc[(7 * 64 + 9) * 3 + 2], t.channel(2)[7 * 64 + 9]);
    }

    #[test]
    fn dumps_have_expected_shape() {
        let t = build_spatial_map(&BBox::new(0.0, 0.0, 4.0, 4.0), &BBox::new(2.0, 2.0, 8.0, 8.0), 4).unwrap();
        let pgm = t.to_pgm(0);
        assert!(pgm.starts_with("P2\n4 4\n255\n"));
        assert_eq!(pgm.lines().count(), 3 + 4);
        assert_eq!(t.to_text(1).lines().next().unwrap(), "0.00 0.00 0.00 0.00");
    }

    proptest! {
        #[test]
        fn pose_values_in_range(coords in proptest::collection::vec((-50.0..150.0f64, -50.0..150.0f64, any::<bool>()), 17)) {
            let u = union_box(&BBox::new(0.0, 0.0, 60.0, 90.0), &BBox::new(40.0, 20.0, 100.0, 70.0));
            let kps: Vec<_> = coords.iter().map(|&(x, y, v)| Keypoint { x, y, visible: v }).collect();
            let m = rasterize_pose_map(&kps, &u, 64, &SKELETON);
            prop_assert!(m.iter().all(|&v| v == 0.0 || (GRAY_MIN..=GRAY_MAX).contains(&v)));
        }

        #[test]
        fn translation_invariant(h in (0..200i32, 0..200i32, 1..200i32, 1..200i32), o in (0..200i32, 0..200i32, 1..200i32, 1..200i32),
                                 pts in proptest::collection::vec((0..400i32, 0..400i32), 17), dx in -100..100i32, dy in -100..100i32) {
            // Quarter-unit coordinates and integer offsets keep the shifted arithmetic exact.
            let q = |v: i32| v as f64 * 0.25;
            let hb = BBox::new(q(h.0), q(h.1), q(h.0 + h.2), q(h.1 + h.3));
            let ob = BBox::new(q(o.0), q(o.1), q(o.0 + o.2), q(o.1 + o.3));
            let kps: Vec<_> = pts.iter().map(|&(x, y)| kp(q(x), q(y))).collect();
            let (fx, fy) = (dx as f64, dy as f64);
            let moved: Vec<_> = kps.iter().map(|k| k.translate(fx, fy)).collect();
            let a = build_spatial_pose_tensor(&hb, &ob, Some(&kps), 64).unwrap();
            let b = build_spatial_pose_tensor(&hb.translate(fx, fy), &ob.translate(fx, fy), Some(&moved), 64).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
