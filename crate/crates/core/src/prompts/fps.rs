use rand::Rng;

use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FpsStart {
    /// Start from a seeded uniform draw.
    Seeded(u64),
    /// Start from the point nearest the centroid.
    Centroid,
    /// Start from a given index.
    Index(usize),
}

fn d2(a: [f32; 2], b: [f32; 2]) -> f32 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Greedy farthest point sampling. Returns indices in selection order; when
/// `n` is at least the set size every index is returned in input order. Ties
/// go to the lowest index.
pub fn farthest_point_sampling(points: &[[f32; 2]], n: usize, start: FpsStart) -> Vec<usize> {
    let len = points.len();
    if n >= len {
        return (0..len).collect();
    }
    if n == 0 {
        return Vec::new();
    }
    let first = match start {
        FpsStart::Seeded(seed) => rng::stream(seed, "fps-start", &[]).random_range(0..len),
        FpsStart::Index(i) => i.min(len - 1),
        FpsStart::Centroid => {
            let cx = points.iter().map(|p| p[0] as f64).sum::<f64>() / len as f64;
            let cy = points.iter().map(|p| p[1] as f64).sum::<f64>() / len as f64;
            let c = [cx as f32, cy as f32];
            let mut best = 0;
            for i in 1..len {
                if d2(points[i], c) < d2(points[best], c) {
                    best = i;
                }
            }
            best
        }
    };
    let mut chosen = vec![first];
    let mut nearest: Vec<f32> = points.iter().map(|&p| d2(p, points[first])).collect();
    while chosen.len() < n {
        let mut best = 0;
        for i in 1..len {
            if nearest[i] > nearest[best] {
                best = i;
            }
        }
        chosen.push(best);
        for i in 0..len {
            nearest[i] = nearest[i].min(d2(points[i], points[best]));
        }
    }
    chosen
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square_corners() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        assert_eq!(farthest_point_sampling(&pts, 2, FpsStart::Index(0)), vec![0, 3]);
    }

    #[test]
    fn oversized_request_is_identity() {
        let pts = [[0.0, 0.0], [5.0, 0.0]];
        assert_eq!(farthest_point_sampling(&pts, 5, FpsStart::Seeded(3)), vec![0, 1]);
    }

    #[test]
    fn centroid_start() {
        let pts = [[0.0, 0.0], [10.0, 0.0], [5.0, 1.0], [5.0, -6.0]];
        assert_eq!(farthest_point_sampling(&pts, 1, FpsStart::Centroid), vec![2]);
    }
}
