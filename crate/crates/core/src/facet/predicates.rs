//! Orientation and in-circle predicates with a floating-point filter and an
//! exact rational fallback when the filter cannot certify the sign.

use nalgebra::Vector2;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

const EPS: f64 = f64::EPSILON * 0.5;
const ORIENT_BOUND: f64 = (3.0 + 16.0 * EPS) * EPS;
const INCIRCLE_BOUND: f64 = (10.0 + 96.0 * EPS) * EPS;

fn exact(v: f64) -> BigRational {
    BigRational::from_float(v).expect("finite coordinate")
}

fn signed_value(exact: &BigRational) -> f64 {
    if exact.is_zero() {
        return 0.0;
    }
    let approx = exact.to_f64().unwrap_or(0.0);
    if approx != 0.0 {
        approx
    } else if exact.is_positive() {
        f64::MIN_POSITIVE
    } else {
        -f64::MIN_POSITIVE
    }
}

/// Twice the signed area of `(a, b, c)`: positive when counter-clockwise.
/// The sign is always exact.
pub fn orient2d(a: &Vector2<f64>, b: &Vector2<f64>, c: &Vector2<f64>) -> f64 {
    let left = (a.x - c.x) * (b.y - c.y);
    let right = (a.y - c.y) * (b.x - c.x);
    let det = left - right;
    if det.abs() >= ORIENT_BOUND * (left.abs() + right.abs()) {
        return det;
    }
    signed_value(&orient2d_exact(a, b, c))
}

pub fn orient2d_exact(a: &Vector2<f64>, b: &Vector2<f64>, c: &Vector2<f64>) -> BigRational {
    let (ax, ay, bx, by, cx, cy) = (
        exact(a.x),
        exact(a.y),
        exact(b.x),
        exact(b.y),
        exact(c.x),
        exact(c.y),
    );
    (&ax - &cx) * (&by - &cy) - (&ay - &cy) * (&bx - &cx)
}

/// Positive when `d` lies strictly inside the circle through the
/// counter-clockwise triangle `(a, b, c)`. The sign is always exact.
pub fn incircle(a: &Vector2<f64>, b: &Vector2<f64>, c: &Vector2<f64>, d: &Vector2<f64>) -> f64 {
    let (adx, ady) = (a.x - d.x, a.y - d.y);
    let (bdx, bdy) = (b.x - d.x, b.y - d.y);
    let (cdx, cdy) = (c.x - d.x, c.y - d.y);
    let (bc, cb) = (bdx * cdy, cdx * bdy);
    let (ca, ac) = (cdx * ady, adx * cdy);
    let (ab, ba) = (adx * bdy, bdx * ady);
    let alift = adx * adx + ady * ady;
    let blift = bdx * bdx + bdy * bdy;
    let clift = cdx * cdx + cdy * cdy;
    let det = alift * (bc - cb) + blift * (ca - ac) + clift * (ab - ba);
    let permanent = (bc.abs() + cb.abs()) * alift
        + (ca.abs() + ac.abs()) * blift
        + (ab.abs() + ba.abs()) * clift;
    if det.abs() > INCIRCLE_BOUND * permanent {
        return det;
    }
    signed_value(&incircle_exact(a, b, c, d))
}

pub fn incircle_exact(
    a: &Vector2<f64>,
    b: &Vector2<f64>,
    c: &Vector2<f64>,
    d: &Vector2<f64>,
) -> BigRational {
    let (dx, dy) = (exact(d.x), exact(d.y));
    let rel = |p: &Vector2<f64>| (exact(p.x) - &dx, exact(p.y) - &dy);
    let (adx, ady) = rel(a);
    let (bdx, bdy) = rel(b);
    let (cdx, cdy) = rel(c);
    let lift = |x: &BigRational, y: &BigRational| x * x + y * y;
    let alift = lift(&adx, &ady);
    let blift = lift(&bdx, &bdy);
    let clift = lift(&cdx, &cdy);
    alift * (&bdx * &cdy - &cdx * &bdy)
        + blift * (&cdx * &ady - &adx * &cdy)
        + clift * (&adx * &bdy - &bdx * &ady)
}

/// Sign of an exact value as -1, 0 or 1.
pub fn sign(v: &BigRational) -> i32 {
    if v.is_zero() {
        0
    } else if v.is_positive() {
        1
    } else {
        -1
    }
}
