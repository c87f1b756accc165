//! Planar polygon helpers used for spot/PD overlap.

pub type Point2 = [f64; 2];

/// Signed shoelace area; positive for counter-clockwise vertex order.
pub fn signed_area(poly: &[Point2]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        acc += a[0] * b[1] - a[1] * b[0];
    }
    0.5 * acc
}

pub fn area(poly: &[Point2]) -> f64 {
    signed_area(poly).abs()
}

fn cross(o: Point2, a: Point2, b: Point2) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// True when every turn has the same sign (collinear turns are ignored).
pub fn is_convex(poly: &[Point2]) -> bool {
    let n = poly.len();
    if n < 4 {
        return true;
    }
    let mut sign = 0.0f64;
    for i in 0..n {
        let c = cross(poly[i], poly[(i + 1) % n], poly[(i + 2) % n]);
        if c.abs() <= f64::EPSILON * 16.0 {
            continue;
        }
        if sign == 0.0 {
            sign = c.signum();
        } else if c.signum() != sign {
            return false;
        }
    }
    true
}

/// Returns the polygon in counter-clockwise order.
pub fn to_ccw(poly: &[Point2]) -> Vec<Point2> {
    let mut v = poly.to_vec();
    if signed_area(&v) < 0.0 {
        v.reverse();
    }
    v
}

/// Keeps the part of `poly` on the left of the directed line `a → b`.
fn clip_half_plane(poly: &[Point2], a: Point2, b: Point2, out: &mut Vec<Point2>) {
    out.clear();
    let n = poly.len();
    if n == 0 {
        return;
    }
    for i in 0..n {
        let s = poly[i];
        let e = poly[(i + 1) % n];
        let ds = cross(a, b, s);
        let de = cross(a, b, e);
        let s_in = ds >= 0.0;
        let e_in = de >= 0.0;
        if s_in != e_in {
            let t = ds / (ds - de);
            out.push([s[0] + (e[0] - s[0]) * t, s[1] + (e[1] - s[1]) * t]);
        }
        if e_in {
            out.push(e);
        }
    }
}

/// Sutherland–Hodgman clip of `subject` by a convex counter-clockwise `clip`.
pub fn clip_convex(subject: &[Point2], clip: &[Point2]) -> Vec<Point2> {
    let mut cur = subject.to_vec();
    let mut next = Vec::with_capacity(subject.len() + clip.len());
    let m = clip.len();
    for i in 0..m {
        if cur.len() < 3 {
            return Vec::new();
        }
        clip_half_plane(&cur, clip[i], clip[(i + 1) % m], &mut next);
        std::mem::swap(&mut cur, &mut next);
    }
    if cur.len() < 3 {
        Vec::new()
    } else {
        cur
    }
}

/// Splits a simple polygon into triangles by ear clipping.
pub fn triangulate(poly: &[Point2]) -> Vec<[Point2; 3]> {
    let mut idx: Vec<usize> = (0..poly.len()).collect();
    let ccw = signed_area(poly) >= 0.0;
    let mut tris = Vec::new();
    let mut guard = 0;
    while idx.len() > 3 && guard < 4 * poly.len() * poly.len() {
        guard += 1;
        let n = idx.len();
        let mut clipped = false;
        for k in 0..n {
            let (ia, ib, ic) = (idx[(k + n - 1) % n], idx[k], idx[(k + 1) % n]);
            let (a, b, c) = (poly[ia], poly[ib], poly[ic]);
            let turn = cross(a, b, c);
            if (ccw && turn <= 0.0) || (!ccw && turn >= 0.0) {
                continue;
            }
            let contains_other = idx.iter().any(|&j| {
                if j == ia || j == ib || j == ic {
                    return false;
                }
                let p = poly[j];
                let (d1, d2, d3) = (cross(a, b, p), cross(b, c, p), cross(c, a, p));
                if ccw {
                    d1 >= 0.0 && d2 >= 0.0 && d3 >= 0.0
                } else {
                    d1 <= 0.0 && d2 <= 0.0 && d3 <= 0.0
                }
            });
            if contains_other {
                continue;
            }
            tris.push([a, b, c]);
            idx.remove(k);
            clipped = true;
            break;
        }
        if !clipped {
            break;
        }
    }
    if idx.len() == 3 {
        tris.push([poly[idx[0]], poly[idx[1]], poly[idx[2]]]);
    }
    tris
}

/// Area of `subject ∩ clip` where `clip` is convex. Concave subjects are
/// triangulated first.
pub fn intersection_area(subject: &[Point2], clip: &[Point2]) -> f64 {
    if subject.len() < 3 || clip.len() < 3 {
        return 0.0;
    }
    let clip = to_ccw(clip);
    if is_convex(subject) {
        area(&clip_convex(subject, &clip))
    } else {
        triangulate(subject)
            .iter()
            .map(|t| area(&clip_convex(t, &clip)))
            .sum()
    }
}

/// Axis-aligned square centred at `c` with side `side`, counter-clockwise.
pub fn square(c: Point2, side: f64) -> [Point2; 4] {
    let h = 0.5 * side;
    [
        [c[0] - h, c[1] - h],
        [c[0] + h, c[1] - h],
        [c[0] + h, c[1] + h],
        [c[0] - h, c[1] + h],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn overlapping_squares() {
        let a = square([0.0, 0.0], 1.0);
        let b = square([0.5, 0.0], 1.0);
        assert_abs_diff_eq!(intersection_area(&a, &b), 0.5, epsilon = 1e-15);
        let c = square([3.0, 0.0], 1.0);
        assert_eq!(intersection_area(&a, &c), 0.0);
    }

    #[test]
    fn clockwise_subject_gives_positive_area() {
        let mut a = square([0.0, 0.0], 2.0).to_vec();
        a.reverse();
        let b = square([1.0, 1.0], 2.0);
        assert_abs_diff_eq!(intersection_area(&a, &b), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn concave_quad_triangulated() {
        // Dart: reflex vertex at (0, 0.2).
        let dart = [[-1.0, -1.0], [0.0, 0.2], [1.0, -1.0], [0.0, 1.0]];
        assert!(!is_convex(&dart));
        let tris = triangulate(&dart);
        assert_eq!(tris.len(), 2);
        let tri_area: f64 = tris.iter().map(|t| area(t)).sum();
        assert_abs_diff_eq!(tri_area, area(&dart), epsilon = 1e-14);
        let big = square([0.0, 0.0], 10.0);
        assert_abs_diff_eq!(intersection_area(&dart, &big), area(&dart), epsilon = 1e-14);
        // Upper half plane y >= 0 inside a large box.
        let upper = [[-5.0, 0.0], [5.0, 0.0], [5.0, 5.0], [-5.0, 5.0]];
        // Above y = 0: triangle (0,1),(−1/6·…) computed by hand.
        // Left edge (-1,-1)→(0,1) crosses y=0 at x=-0.5; right edge at x=0.5.
        // Reflex edges (-1,-1)→(0,0.2) and (0,0.2)→(1,-1) cross y=0 at x=∓1/6.
        let expected = 0.5 * 1.0 * 1.0 - 0.5 * (1.0 / 3.0) * 0.2;
        assert_abs_diff_eq!(intersection_area(&dart, &upper), expected, epsilon = 1e-14);
    }
}
