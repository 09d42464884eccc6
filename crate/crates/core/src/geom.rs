//! Small dense types and planar geometry helpers.

use nalgebra::{Matrix2, Vector2};

pub type Vec2 = Vector2<f64>;
pub type Mat2 = Matrix2<f64>;

/// Clockwise rotation by a quarter turn: `(a, b) -> (b, -a)`.
#[inline]
pub fn rot_cw(v: Vec2) -> Vec2 {
    Vec2::new(v.y, -v.x)
}

#[inline]
pub fn sym(m: &Mat2) -> Mat2 {
    (m + m.transpose()) * 0.5
}

#[inline]
pub fn skew(m: &Mat2) -> Mat2 {
    (m - m.transpose()) * 0.5
}

/// Frobenius product `A : B`.
#[inline]
pub fn ddot(a: &Mat2, b: &Mat2) -> f64 {
    a.component_mul(b).sum()
}

/// Skew matrix `[[0, w], [-w, 0]]`.
#[inline]
pub fn skew_from(w: f64) -> Mat2 {
    Mat2::new(0.0, w, -w, 0.0)
}

/// Scalar coordinate of the skew part, inverse of [`skew_from`].
#[inline]
pub fn skew_coord(m: &Mat2) -> f64 {
    0.5 * (m[(0, 1)] - m[(1, 0)])
}

/// Angles in `[0, 2pi)` where the circle `B_rho(center)` crosses the given
/// circles, sorted.
pub fn circle_crossings(center: Vec2, rho: f64, breaks: &[(Vec2, f64)]) -> Vec<f64> {
    let tau = 2.0 * std::f64::consts::PI;
    let mut out = Vec::new();
    for &(c, r) in breaks {
        let v = c - center;
        let d = v.norm();
        if d <= (rho - r).abs() || d >= rho + r {
            continue;
        }
        let half = ((rho * rho + d * d - r * r) / (2.0 * rho * d)).clamp(-1.0, 1.0).acos();
        let phi = v.y.atan2(v.x);
        out.push((phi + half).rem_euclid(tau));
        out.push((phi - half).rem_euclid(tau));
    }
    out.sort_by(f64::total_cmp);
    out.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    out
}

/// Signed area of a closed polygon; positive when counter-clockwise.
pub fn signed_area(poly: &[Vec2]) -> f64 {
    let n = poly.len();
    let mut a = 0.0;
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        a += p.x * q.y - q.x * p.y;
    }
    0.5 * a
}

/// Even-odd point-in-polygon test.
pub fn point_in_polygon(poly: &[Vec2], p: Vec2) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Distance from `p` to the segment `[a, b]`.
pub fn dist_point_segment(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Distance from `p` to the polygon boundary.
pub fn dist_to_polygon_boundary(poly: &[Vec2], p: Vec2) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| dist_point_segment(p, poly[i], poly[(i + 1) % n]))
        .fold(f64::INFINITY, f64::min)
}

fn orient(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    (b - a).perp(&(c - a))
}

/// Proper or touching intersection of two closed segments.
pub fn segments_intersect(p1: Vec2, p2: Vec2, q1: Vec2, q2: Vec2) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |a: Vec2, b: Vec2, c: Vec2, d: f64| {
        d == 0.0
            && c.x >= a.x.min(b.x)
            && c.x <= a.x.max(b.x)
            && c.y >= a.y.min(b.y)
            && c.y <= a.y.max(b.y)
    };
    on(q1, q2, p1, d1) || on(q1, q2, p2, d2) || on(p1, p2, q1, d3) || on(p1, p2, q2, d4)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Gauss-Legendre rule mapped to `[a, b]`.
pub fn gauss_on(a: f64, b: f64, n: usize) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(n);
    let h = 0.5 * (b - a);
    let c = 0.5 * (a + b);
    x.iter().zip(&w).map(|(&xi, &wi)| (c + h * xi, h * wi)).collect()
}

/// Pairwise (cascade) summation, used where summation order must not depend
/// on thread scheduling.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}
