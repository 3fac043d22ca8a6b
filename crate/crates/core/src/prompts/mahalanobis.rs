/// Mean and regularized sample covariance `[[sxx, sxy], [sxy, syy]]`.
///
/// The covariance uses the `n - 1` denominator and gets `eps * I` added with
/// `eps = 1e-6 * trace / 2`.
pub fn mean_and_covariance(points: &[[f64; 2]]) -> ([f64; 2], [[f64; 2]; 2]) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let my = points.iter().map(|p| p[1]).sum::<f64>() / n;
    let denom = (n - 1.0).max(1.0);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p[0] - mx, p[1] - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let (sxx, sxy, syy) = (sxx / denom, sxy / denom, syy / denom);
    let eps = 1e-6 * (sxx + syy) / 2.0;
    ([mx, my], [[sxx + eps, sxy], [sxy, syy + eps]])
}

/// Inverse of a symmetric 2x2 matrix, or its pseudo-inverse when singular.
pub fn inverse_2x2(m: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let (a, b, d) = (m[0][0], m[0][1], m[1][1]);
    let det = a * d - b * b;
    let scale = (a * a + 2.0 * b * b + d * d).sqrt();
    if scale > 0.0 && det.abs() > 1e-12 * scale * scale {
        return [[d / det, -b / det], [-b / det, a / det]];
    }
    // Eigen-decomposition; invert only the non-negligible eigenvalues.
    let tr = a + d;
    let disc = (((a - d) / 2.0).powi(2) + b * b).sqrt();
    let mut out = [[0.0; 2]; 2];
    for lambda in [tr / 2.0 + disc, tr / 2.0 - disc] {
        if lambda.abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE) || lambda == 0.0 {
            continue;
        }
        let v = if b.abs() > 0.0 {
            [lambda - d, b]
        } else if (lambda - a).abs() <= (lambda - d).abs() {
            [1.0, 0.0]
        } else {
            [0.0, 1.0]
        };
        let norm2 = v[0] * v[0] + v[1] * v[1];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] += v[i] * v[j] / (norm2 * lambda);
            }
        }
    }
    out
}

/// Mahalanobis distance of every point to the set's mean.
pub fn mahalanobis_distances(points: &[[f64; 2]]) -> Vec<f64> {
    if points.is_empty() {
        return Vec::new();
    }
    let (mu, cov) = mean_and_covariance(points);
    let inv = inverse_2x2(cov);
    points
        .iter()
        .map(|p| {
            let (dx, dy) = (p[0] - mu[0], p[1] - mu[1]);
            let q = dx * (inv[0][0] * dx + inv[0][1] * dy) + dy * (inv[1][0] * dx + inv[1][1] * dy);
            q.max(0.0).sqrt()
        })
        .collect()
}

/// Distances divided by their maximum, so they lie in [0, 1]. An all-zero
/// set stays zero.
pub fn normalized_mahalanobis(points: &[[f64; 2]]) -> Vec<f64> {
    let d = mahalanobis_distances(points);
    let max = d.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 {
        d.iter().map(|v| v / max).collect()
    } else {
        d
    }
}

/// Indices kept by the normalized-distance threshold. Sets of fewer than three
/// points pass through.
pub fn mahalanobis_inliers(points: &[[f64; 2]], threshold: f64) -> Vec<usize> {
    if points.len() < 3 {
        return (0..points.len()).collect();
    }
    normalized_mahalanobis(points)
        .iter()
        .enumerate()
        .filter(|(_, &d)| d <= threshold)
        .map(|(i, _)| i)
        .collect()
}
