//! Points, geodesics and charts on the unit sphere S^n ⊂ R^{n+1}.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

pub type Point = DVector<f64>;

/// The pole `e_n`, used as the symmetry axis of zonal models.
pub fn north(n: usize) -> Point {
    let mut p = DVector::zeros(n + 1);
    p[n] = 1.0;
    p
}

pub fn south(n: usize) -> Point {
    -north(n)
}

pub fn normalize(mut x: Point) -> Point {
    let r = x.norm();
    x /= r;
    x
}

/// Geodesic distance, accurate for nearby and nearly antipodal points.
pub fn distance(a: &Point, x: &Point) -> f64 {
    let c = a.dot(x);
    let s = (x - a * c).norm();
    s.atan2(c)
}

/// Unit tangent direction at `a` pointing towards `x`, with the distance.
/// Returns `None` when `x = ±a`.
pub fn direction(a: &Point, x: &Point) -> (f64, Option<Point>) {
    let c = a.dot(x);
    let t = x - a * c;
    let s = t.norm();
    let th = s.atan2(c);
    if s < 1e-300 {
        (th, None)
    } else {
        (th, Some(t / s))
    }
}

/// Orthonormal basis of the tangent space at `a` (deterministic Gram-Schmidt).
pub fn tangent_frame(a: &Point) -> Vec<Point> {
    let dim = a.len();
    let mut frame: Vec<Point> = Vec::with_capacity(dim - 1);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| a[i].abs().partial_cmp(&a[j].abs()).unwrap().then(i.cmp(&j)));
    for &i in &order {
        if frame.len() == dim - 1 {
            break;
        }
        let mut v = DVector::zeros(dim);
        v[i] = 1.0;
        v -= a * a.dot(&v);
        for f in &frame {
            let d = f.dot(&v);
            v -= f * d;
        }
        let r = v.norm();
        if r > 1e-8 {
            frame.push(v / r);
        }
    }
    frame
}

/// Exponential map at `a` applied to a tangent vector.
pub fn exp_map(a: &Point, v: &Point) -> Point {
    let t = v.norm();
    if t < 1e-300 {
        return a.clone();
    }
    normalize(a * t.cos() + v * (t.sin() / t))
}

/// Point with geodesic normal coordinates `coords` at `a` in `frame`.
pub fn exp_coords(a: &Point, frame: &[Point], coords: &[f64]) -> Point {
    let mut v = DVector::zeros(a.len());
    for (f, c) in frame.iter().zip(coords) {
        v += f * *c;
    }
    exp_map(a, &v)
}

/// Geodesic normal coordinates of `x` about `a`.
pub fn log_coords(a: &Point, frame: &[Point], x: &Point) -> Vec<f64> {
    match direction(a, x) {
        (_, None) => vec![0.0; frame.len()],
        (th, Some(d)) => frame.iter().map(|f| th * f.dot(&d)).collect(),
    }
}

/// Flat chart about `a`: `|y| = 2 tan(θ/2)`, in which the conformal metric
/// `g_a = e^{2u_a} g` is Euclidean.
pub fn chart_to_point(a: &Point, frame: &[Point], y: &[f64]) -> Point {
    let r: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    let th = 2.0 * (r / 2.0).atan();
    if r < 1e-300 {
        return a.clone();
    }
    let coords: Vec<f64> = y.iter().map(|v| v / r * th).collect();
    exp_coords(a, frame, &coords)
}

pub fn point_to_chart(a: &Point, frame: &[Point], x: &Point) -> Vec<f64> {
    match direction(a, x) {
        (_, None) => vec![0.0; frame.len()],
        (th, Some(d)) => {
            let r = 2.0 * (th / 2.0).tan();
            frame.iter().map(|f| r * f.dot(&d)).collect()
        }
    }
}

/// Uniformly distributed point on S^n.
pub fn random_point<R: Rng>(n: usize, rng: &mut R) -> Point {
    loop {
        let v = DVector::from_fn(n + 1, |_, _| rng.sample::<f64, _>(StandardNormal));
        let r = v.norm();
        if r > 1e-8 {
            return v / r;
        }
    }
}

/// Random rotation of R^{n+1} (orthogonal matrix with determinant one).
pub fn random_rotation<R: Rng>(n: usize, rng: &mut R) -> nalgebra::DMatrix<f64> {
    let d = n + 1;
    let m = nalgebra::DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = m.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            for i in 0..d {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    if q.determinant() < 0.0 {
        for i in 0..d {
            q[(i, 0)] = -q[(i, 0)];
        }
    }
    q
}
