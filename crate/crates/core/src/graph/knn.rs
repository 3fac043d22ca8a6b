use std::cmp::Ordering;

/// Above this node count k-NN queries go through a uniform grid index.
pub const EXACT_KNN_LIMIT: usize = 5000;

#[inline]
fn dist2(a: [f32; 2], b: [f32; 2]) -> f32 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

#[inline]
fn by_dist_then_index(a: &(f32, u32), b: &(f32, u32)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// The `m` nearest other points of every point, nearest first, ties broken by
/// lower index. `m` is clamped to `n - 1`.
pub fn spatial_knn(coords: &[[f32; 2]], m: usize) -> Vec<Vec<u32>> {
    let n = coords.len();
    let m = m.min(n.saturating_sub(1));
    if m == 0 {
        return vec![Vec::new(); n];
    }
    if n < EXACT_KNN_LIMIT {
        exact(coords, m)
    } else {
        gridded(coords, m)
    }
}

fn exact(coords: &[[f32; 2]], m: usize) -> Vec<Vec<u32>> {
    let mut scratch: Vec<(f32, u32)> = Vec::with_capacity(coords.len());
    coords
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            scratch.clear();
            scratch.extend(
                coords
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(j, &o)| (dist2(c, o), j as u32)),
            );
            if m < scratch.len() {
                scratch.select_nth_unstable_by(m - 1, by_dist_then_index);
                scratch.truncate(m);
            }
            scratch.sort_unstable_by(by_dist_then_index);
            scratch.iter().map(|&(_, j)| j).collect()
        })
        .collect()
}

/// Grid-bucket search: rings of cells are scanned outward until the ring's
/// inner distance bound exceeds the current m-th best distance. Results are
/// identical to [`exact`].
fn gridded(coords: &[[f32; 2]], m: usize) -> Vec<Vec<u32>> {
    let n = coords.len();
    let (mut min_x, mut min_y, mut max_x, mut max_y) = (f32::MAX, f32::MAX, f32::MIN, f32::MIN);
    for c in coords {
        min_x = min_x.min(c[0]);
        min_y = min_y.min(c[1]);
        max_x = max_x.max(c[0]);
        max_y = max_y.max(c[1]);
    }
    let span = (max_x - min_x).max(max_y - min_y).max(1e-3);
    // Aim for about four points per cell.
    let per_side = ((n as f32 / 4.0).sqrt().ceil() as usize).max(1);
    let cell = span / per_side as f32 * 1.0001;
    let gx = per_side + 1;
    let gy = per_side + 1;
    let cell_of = |c: [f32; 2]| {
        (
            (((c[0] - min_x) / cell) as usize).min(gx - 1),
            (((c[1] - min_y) / cell) as usize).min(gy - 1),
        )
    };
    let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); gx * gy];
    for (i, &c) in coords.iter().enumerate() {
        let (cx, cy) = cell_of(c);
        buckets[cy * gx + cx].push(i as u32);
    }
    let mut cand: Vec<(f32, u32)> = Vec::new();
    coords
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let (cx, cy) = cell_of(c);
            cand.clear();
            let mut ring = 0usize;
            loop {
                let x0 = cx as isize - ring as isize;
                let x1 = cx as isize + ring as isize;
                let y0 = cy as isize - ring as isize;
                let y1 = cy as isize + ring as isize;
                for yy in y0..=y1 {
                    for xx in x0..=x1 {
                        let on_ring = yy == y0 || yy == y1 || xx == x0 || xx == x1;
                        if !on_ring || xx < 0 || yy < 0 || xx as usize >= gx || yy as usize >= gy {
                            continue;
                        }
                        for &j in &buckets[yy as usize * gx + xx as usize] {
                            if j as usize != i {
                                cand.push((dist2(c, coords[j as usize]), j));
                            }
                        }
                    }
                }
                let covered = x0 <= 0 && y0 <= 0 && x1 as usize >= gx - 1 && y1 as usize >= gy - 1;
                if cand.len() >= m {
                    cand.select_nth_unstable_by(m - 1, by_dist_then_index);
                    // Anything outside the scanned square is at least `ring * cell` away.
                    let bound = ring as f32 * cell;
                    if cand[m - 1].0 < bound * bound || covered {
                        break;
                    }
                }
                if covered {
                    break;
                }
                ring += 1;
            }
            cand.truncate(m.min(cand.len()));
            cand.sort_unstable_by(by_dist_then_index);
            cand.iter().map(|&(_, j)| j).collect()
        })
        .collect()
}
