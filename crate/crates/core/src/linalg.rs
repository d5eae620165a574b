//! Dense complex matrix exponential by scaling and squaring with Padé
//! approximants (Higham 2005). Degrees 3, 5, 7, 9 are used for small
//! 1-norms, degree 13 with scaling otherwise.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA_13: f64 = 5.371920351148152;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

pub fn one_norm(a: &DMatrix<C64>) -> f64 {
    a.column_iter()
        .map(|col| col.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn scaled(m: &DMatrix<C64>, s: f64) -> DMatrix<C64> {
    m * C64::new(s, 0.0)
}

/// `exp(A)` for a square complex matrix.
pub fn expm(a: &DMatrix<C64>) -> DMatrix<C64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm requires a square matrix");
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    if n == 1 {
        return DMatrix::from_element(1, 1, a[(0, 0)].exp());
    }
    let norm = one_norm(a);
    let ident = DMatrix::<C64>::identity(n, n);

    for &(m, theta) in &THETA {
        if norm <= theta {
            let coeffs: &[f64] = match m {
                3 => &B3,
                5 => &B5,
                7 => &B7,
                _ => &B9,
            };
            return pade_low(a, &ident, coeffs);
        }
    }

    let s = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let a = scaled(a, 0.5f64.powi(s));
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &B13;
    let u_inner = &a6 * (scaled(&a6, b[13]) + scaled(&a4, b[11]) + scaled(&a2, b[9]))
        + scaled(&a6, b[7])
        + scaled(&a4, b[5])
        + scaled(&a2, b[3])
        + scaled(&ident, b[1]);
    let u = &a * u_inner;
    let v = &a6 * (scaled(&a6, b[12]) + scaled(&a4, b[10]) + scaled(&a2, b[8]))
        + scaled(&a6, b[6])
        + scaled(&a4, b[4])
        + scaled(&a2, b[2])
        + scaled(&ident, b[0]);
    let mut r = solve_pade(&u, &v);
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

fn pade_low(a: &DMatrix<C64>, ident: &DMatrix<C64>, b: &[f64]) -> DMatrix<C64> {
    let a2 = a * a;
    // even powers A^0, A^2, A^4, ...
    let mut powers = vec![ident.clone(), a2.clone()];
    while powers.len() * 2 < b.len() {
        let next = powers.last().unwrap() * &a2;
        powers.push(next);
    }
    let mut u_inner = DMatrix::<C64>::zeros(a.nrows(), a.ncols());
    let mut v = DMatrix::<C64>::zeros(a.nrows(), a.ncols());
    for (k, p) in powers.iter().enumerate() {
        if 2 * k + 1 < b.len() {
            u_inner += scaled(p, b[2 * k + 1]);
        }
        v += scaled(p, b[2 * k]);
    }
    let u = a * u_inner;
    solve_pade(&u, &v)
}

fn solve_pade(u: &DMatrix<C64>, v: &DMatrix<C64>) -> DMatrix<C64> {
    let p = v + u;
    let q = v - u;
    q.lu()
        .solve(&p)
        .expect("Padé denominator is singular; the scaling step keeps it well conditioned")
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent route: Taylor series on `A/2^s`, then squaring.
    fn taylor_expm(a: &DMatrix<C64>) -> DMatrix<C64> {
        let n = a.nrows();
        let s = (one_norm(a).max(1e-300).log2().ceil() as i32 + 4).max(0);
        let a = a * C64::new(0.5f64.powi(s), 0.0);
        let mut term = DMatrix::<C64>::identity(n, n);
        let mut sum = term.clone();
        for k in 1..40 {
            term = &term * &a * C64::new(1.0 / k as f64, 0.0);
            sum += &term;
        }
        for _ in 0..s {
            sum = &sum * &sum;
        }
        sum
    }

    fn max_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
        (a - b).camax()
    }

    #[test]
    fn rotation_generator() {
        for theta in [0.0, 1e-3, 0.3, 1.7, 12.0, 150.0] {
            let a = DMatrix::from_row_slice(
                2,
                2,
                &[
                    C64::new(0.0, 0.0),
                    C64::new(-theta, 0.0),
                    C64::new(theta, 0.0),
                    C64::new(0.0, 0.0),
                ],
            );
            let e = expm(&a);
            assert!((e[(0, 0)].re - theta.cos()).abs() < 1e-12);
            assert!((e[(1, 0)].re - theta.sin()).abs() < 1e-12);
            assert!((e[(0, 1)].re + theta.sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn diagonal_matrix() {
        let d = [C64::new(0.5, 2.0), C64::new(-3.0, 0.1), C64::new(0.0, -40.0)];
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&d));
        let e = expm(&a);
        for (i, z) in d.iter().enumerate() {
            assert!((e[(i, i)] - z.exp()).norm() < 1e-12 * z.exp().norm().max(1.0));
        }
    }

    #[test]
    fn matches_taylor_route_at_every_pade_degree() {
        let base = DMatrix::from_fn(6, 6, |r, c| {
            C64::new(((r * 7 + c * 3) % 5) as f64 - 2.0, ((r + 2 * c) % 3) as f64 - 1.0)
        });
        for scale in [1e-3, 3e-2, 0.1, 0.3, 0.6, 2.0, 9.0] {
            let a = &base * C64::new(scale, 0.0);
            let e1 = expm(&a);
            let e2 = taylor_expm(&a);
            let tol = 1e-11 * e2.camax().max(1.0);
            assert!(max_diff(&e1, &e2) < tol, "scale {scale}: {}", max_diff(&e1, &e2));
        }
    }

    #[test]
    fn anti_hermitian_gives_unitary() {
        let h = DMatrix::from_fn(8, 8, |r, c| {
            let x = ((r * 13 + c * 5) % 7) as f64 * 0.4;
            let y = ((r * 3 + c * 11) % 5) as f64 * 0.3;
            C64::new(x, y)
        });
        let herm = (&h + h.adjoint()) * C64::new(0.0, -1.0);
        let u = expm(&herm);
        let id = DMatrix::<C64>::identity(8, 8);
        assert!(max_diff(&(u.adjoint() * &u), &id) < 1e-12);
    }
}
