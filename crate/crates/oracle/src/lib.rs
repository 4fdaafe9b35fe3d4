//! Reference computations for checking the tetraproj operators.
//!
//! Everything here works on plain `[f64; 3]` arrays and shares no code with
//! the production crate, so a bug in one path cannot hide in the other:
//!
//! + [`exact_triangle`] evaluates the ray/triangle test in exact integer
//!   arithmetic (every finite `f64` is a dyadic rational, so the inputs can be
//!   scaled to a common power of two and handled as big integers).
//! + [`tet_chord`] clips a line against the four face half-spaces of a
//!   tetrahedron (Cyrus-Beck), never touching barycentric coordinates.
//! + [`least_squares`] solves dense systems through an SVD.
//! + [`voxel_integral_by_planes`] and [`voxel_integral_by_sampling`] integrate
//!   a voxel grid along a segment by brute force.

use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

pub type P3 = [f64; 3];

fn sub(a: P3, b: P3) -> P3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: P3, b: P3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: P3, b: P3) -> P3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

// ---------------------------------------------------------------------------
// Exact ray/triangle
// ---------------------------------------------------------------------------

/// Result of an exact ray/triangle evaluation.
#[derive(Debug, Clone)]
pub struct ExactTriangle {
    /// Determinant is exactly zero (ray parallel to, or lying in, the plane).
    pub parallel: bool,
    /// The line meets the closed triangle.
    pub hit: bool,
    /// Ray parameter of the plane crossing, correctly rounded.
    pub t: Option<f64>,
    /// Barycentric coordinates (u, v), rounded to `f64`.
    pub u: f64,
    pub v: f64,
    /// Smallest of u, v, 1-u-v: negative outside, zero on an edge.
    pub margin: f64,
    /// The exact determinant `(r2 - r1) x (p3 - p1) · (p2 - p1)` in world
    /// units, rounded, for comparing against cut-offs.
    pub det: f64,
}

fn decompose(x: f64) -> (BigInt, i32) {
    assert!(x.is_finite(), "oracle input must be finite");
    if x == 0.0 {
        return (BigInt::zero(), 0);
    }
    let bits = x.to_bits();
    let sign = if bits >> 63 == 0 { 1i64 } else { -1i64 };
    let exp_bits = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & 0x000f_ffff_ffff_ffff;
    let (mant, exp) = if exp_bits == 0 {
        (frac, -1074)
    } else {
        (frac | 0x0010_0000_0000_0000, exp_bits - 1075)
    };
    (BigInt::from(sign * mant as i64), exp)
}

/// Scales a set of floats to integers sharing one power-of-two denominator
/// `2^-exp`; returns the integers and `exp`.
fn to_common_integers(values: &[f64]) -> (Vec<BigInt>, i32) {
    let parts: Vec<(BigInt, i32)> = values.iter().map(|&x| decompose(x)).collect();
    let min_exp = parts
        .iter()
        .filter(|(m, _)| !m.is_zero())
        .map(|&(_, e)| e)
        .min()
        .unwrap_or(0);
    let ints = parts
        .into_iter()
        .map(|(m, e)| if m.is_zero() { m } else { m << ((e - min_exp) as usize) })
        .collect();
    (ints, min_exp)
}

/// `x · 2^exp` rounded to f64.
fn scaled_f64(x: &BigInt, exp: i32) -> f64 {
    let one = BigInt::from(1);
    let r = if exp >= 0 {
        BigRational::from_integer(x << exp as usize)
    } else {
        BigRational::new(x.clone(), one << (-exp) as usize)
    };
    r.to_f64().unwrap_or(f64::NAN)
}

type I3 = [BigInt; 3];

fn isub(a: &I3, b: &I3) -> I3 {
    [&a[0] - &b[0], &a[1] - &b[1], &a[2] - &b[2]]
}

fn idot(a: &I3, b: &I3) -> BigInt {
    &a[0] * &b[0] + &a[1] * &b[1] + &a[2] * &b[2]
}

fn icross(a: &I3, b: &I3) -> I3 {
    [
        &a[1] * &b[2] - &a[2] * &b[1],
        &a[2] * &b[0] - &a[0] * &b[2],
        &a[0] * &b[1] - &a[1] * &b[0],
    ]
}

fn ratio_f64(num: &BigInt, den: &BigInt) -> f64 {
    BigRational::new(num.clone(), den.clone())
        .to_f64()
        .unwrap_or(f64::NAN)
}

/// Exact evaluation of the line through `r1`, `r2` against triangle
/// `p1 p2 p3`, using the same barycentric parametrization as
/// Möller-Trumbore (u along p2-p1, v along p3-p1, point = r1 + t (r2-r1)).
pub fn exact_triangle(r1: P3, r2: P3, p1: P3, p2: P3, p3: P3) -> ExactTriangle {
    let flat: Vec<f64> = [r1, r2, p1, p2, p3].iter().flatten().copied().collect();
    let (ints, exp) = to_common_integers(&flat);
    let pt = |i: usize| -> I3 {
        [ints[3 * i].clone(), ints[3 * i + 1].clone(), ints[3 * i + 2].clone()]
    };
    let (r1, r2, p1, p2, p3) = (pt(0), pt(1), pt(2), pt(3), pt(4));
    let d = isub(&r2, &r1);
    let e1 = isub(&p2, &p1);
    let e2 = isub(&p3, &p1);
    let q = icross(&d, &e2);
    let a = idot(&e1, &q);
    if a.is_zero() {
        return ExactTriangle {
            parallel: true,
            hit: false,
            t: None,
            u: f64::NAN,
            v: f64::NAN,
            margin: f64::NAN,
            det: 0.0,
        };
    }
    // The determinant is cubic in the coordinates.
    let det = scaled_f64(&a, 3 * exp);
    let s = isub(&r1, &p1);
    let u_num = idot(&s, &q);
    let r = icross(&s, &e1);
    let v_num = idot(&d, &r);
    let t_num = idot(&e2, &r);
    let w_num = &a - &u_num - &v_num;
    // Normalize to a positive denominator so sign tests read directly.
    let (a, u_num, v_num, w_num, t_num) = if a.is_negative() {
        (-a, -u_num, -v_num, -w_num, -t_num)
    } else {
        (a, u_num, v_num, w_num, t_num)
    };
    let hit = !u_num.is_negative() && !v_num.is_negative() && !w_num.is_negative();
    let min_num = u_num.clone().min(v_num.clone()).min(w_num.clone());
    ExactTriangle {
        parallel: false,
        hit,
        t: Some(ratio_f64(&t_num, &a)),
        u: ratio_f64(&u_num, &a),
        v: ratio_f64(&v_num, &a),
        margin: ratio_f64(&min_num, &a),
        det,
    }
}

// ---------------------------------------------------------------------------
// Line clipping
// ---------------------------------------------------------------------------

/// Clips the line `r1 + t (r2 - r1)` against half-spaces `n·x <= c`.
/// Returns the parameter interval, or `None` when it is empty.
pub fn clip_halfspaces(r1: P3, r2: P3, halfspaces: &[(P3, f64)]) -> Option<(f64, f64)> {
    let d = sub(r2, r1);
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for &(n, c) in halfspaces {
        let nd = dot(n, d);
        let slack = c - dot(n, r1);
        if nd == 0.0 {
            if slack < 0.0 {
                return None;
            }
            continue;
        }
        let t = slack / nd;
        if nd > 0.0 {
            hi = hi.min(t);
        } else {
            lo = lo.max(t);
        }
    }
    (lo <= hi).then_some((lo, hi))
}

/// Half-spaces (outward normal, offset) bounding a tetrahedron.
pub fn tet_halfspaces(tet: &[P3; 4]) -> [(P3, f64); 4] {
    std::array::from_fn(|k| {
        let others: Vec<P3> = (0..4).filter(|&j| j != k).map(|j| tet[j]).collect();
        let mut n = cross(sub(others[1], others[0]), sub(others[2], others[0]));
        if dot(n, sub(tet[k], others[0])) > 0.0 {
            n = [-n[0], -n[1], -n[2]];
        }
        (n, dot(n, others[0]))
    })
}

/// Parameter interval of the line inside a tetrahedron (unbounded in t).
pub fn tet_chord(r1: P3, r2: P3, tet: &[P3; 4]) -> Option<(f64, f64)> {
    clip_halfspaces(r1, r2, &tet_halfspaces(tet))
}

/// Length of the line inside the tetrahedron, in world units.
pub fn tet_chord_length(r1: P3, r2: P3, tet: &[P3; 4]) -> f64 {
    let len = dot(sub(r2, r1), sub(r2, r1)).sqrt();
    tet_chord(r1, r2, tet).map_or(0.0, |(a, b)| (b - a).max(0.0) * len)
}

/// Barycentric point-in-tetrahedron test with a slack on each coordinate.
pub fn point_in_tet(p: P3, tet: &[P3; 4], slack: f64) -> bool {
    let vol = |a: P3, b: P3, c: P3, d: P3| dot(sub(b, a), cross(sub(c, a), sub(d, a)));
    let total = vol(tet[0], tet[1], tet[2], tet[3]);
    (0..4).all(|k| {
        let mut q = *tet;
        q[k] = p;
        vol(q[0], q[1], q[2], q[3]) / total >= -slack
    })
}

// ---------------------------------------------------------------------------
// Dense linear algebra
// ---------------------------------------------------------------------------

/// Dense row-major matrix helpers for materialized system matrices.
pub fn matvec(rows: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    rows.iter()
        .map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

pub fn matvec_transposed(rows: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let n = rows.first().map_or(0, Vec::len);
    let mut out = vec![0.0; n];
    for (r, &yj) in rows.iter().zip(y) {
        for (o, a) in out.iter_mut().zip(r) {
            *o += a * yj;
        }
    }
    out
}

/// Minimum-norm least-squares solution of `rows · x = b`.
pub fn least_squares(rows: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let m = rows.len();
    let n = rows.first().map_or(0, Vec::len);
    let a = DMatrix::from_fn(m, n, |i, j| rows[i][j]);
    let rhs = DVector::from_column_slice(b);
    let svd = a.svd(true, true);
    let sol = svd.solve(&rhs, 1e-13).expect("SVD solve");
    sol.iter().copied().collect()
}

/// Smallest and largest singular values.
pub fn singular_range(rows: &[Vec<f64>]) -> (f64, f64) {
    let m = rows.len();
    let n = rows.first().map_or(0, Vec::len);
    let a = DMatrix::from_fn(m, n, |i, j| rows[i][j]);
    let sv = a.singular_values();
    (sv.min(), sv.max())
}

// ---------------------------------------------------------------------------
// Voxel integration
// ---------------------------------------------------------------------------

/// Axis-aligned voxel grid description for the brute-force integrators.
/// Voxel `(i, j, k)` spans `origin + [i, i+1) * spacing` etc; values are
/// stored x-fastest.
pub struct Grid<'a> {
    pub dims: [usize; 3],
    pub spacing: P3,
    pub origin: P3,
    pub values: &'a [f32],
}

impl Grid<'_> {
    fn value_at(&self, p: P3) -> f64 {
        let mut idx = [0usize; 3];
        for a in 0..3 {
            let f = ((p[a] - self.origin[a]) / self.spacing[a]).floor();
            if f < 0.0 || f >= self.dims[a] as f64 {
                return 0.0;
            }
            idx[a] = f as usize;
        }
        self.values[idx[0] + self.dims[0] * (idx[1] + self.dims[1] * idx[2])] as f64
    }
}

/// Integrates along the segment `r1 -> r2` by collecting every plane crossing
/// of every grid plane, sorting them, and evaluating each piece at its
/// midpoint.
pub fn voxel_integral_by_planes(grid: &Grid, r1: P3, r2: P3) -> f64 {
    let d = sub(r2, r1);
    let len = dot(d, d).sqrt();
    let mut alphas = vec![0.0, 1.0];
    for a in 0..3 {
        if d[a] == 0.0 {
            continue;
        }
        for i in 0..=grid.dims[a] {
            let plane = grid.origin[a] + i as f64 * grid.spacing[a];
            let t = (plane - r1[a]) / d[a];
            if (0.0..=1.0).contains(&t) {
                alphas.push(t);
            }
        }
    }
    alphas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    alphas
        .windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            let p = [r1[0] + mid * d[0], r1[1] + mid * d[1], r1[2] + mid * d[2]];
            (w[1] - w[0]) * len * grid.value_at(p)
        })
        .sum()
}

/// Midpoint-rule sampling with `steps` equal sub-intervals of `r1 -> r2`.
pub fn voxel_integral_by_sampling(grid: &Grid, r1: P3, r2: P3, steps: usize) -> f64 {
    let d = sub(r2, r1);
    let len = dot(d, d).sqrt();
    let h = 1.0 / steps as f64;
    (0..steps)
        .map(|s| {
            let t = (s as f64 + 0.5) * h;
            grid.value_at([r1[0] + t * d[0], r1[1] + t * d[1], r1[2] + t * d[2]])
        })
        .sum::<f64>()
        * h
        * len
}
