//! Dense matrix exponential via scaling-and-squaring with a [13/13] Padé
//! approximant. The matrices handled here are small (at most 17x17), so no
//! order selection is needed; one fixed high order plus scaling is accurate
//! to well below 1e-10 relative error.

use nalgebra::DMatrix;

/// Padé [13/13] numerator coefficients for the exponential.
const PADE13: [f64; 14] = [
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

/// Scaling threshold for the order-13 approximant (Higham 2005).
const THETA13: f64 = 5.371920351148152;

/// Computes `e^{A t}` for a square matrix `A`.
///
/// Panics if `A` is not square or contains non-finite entries.
pub fn matrix_exponential(a: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    assert!(a.is_square(), "matrix exponential requires a square matrix");
    assert!(
        a.iter().all(|x| x.is_finite()) && t.is_finite(),
        "matrix exponential requires finite input"
    );
    let n = a.nrows();
    let at = a * t;

    let norm = one_norm(&at);
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as u32
    } else {
        0
    };
    let scaled = &at / 2f64.powi(squarings as i32);

    let mut result = pade13(&scaled, n);
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

fn one_norm(a: &DMatrix<f64>) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn pade13(a: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let eye = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;

    let u_inner = &a6 * (PADE13[13] * &a6 + PADE13[11] * &a4 + PADE13[9] * &a2)
        + PADE13[7] * &a6
        + PADE13[5] * &a4
        + PADE13[3] * &a2
        + PADE13[1] * &eye;
    let u = a * u_inner;
    let v = &a6 * (PADE13[12] * &a6 + PADE13[10] * &a4 + PADE13[8] * &a2)
        + PADE13[6] * &a6
        + PADE13[4] * &a4
        + PADE13[2] * &a2
        + PADE13[0] * &eye;

    let denom = &v - &u;
    let numer = &v + &u;
    denom
        .lu()
        .solve(&numer)
        .expect("Padé denominator is singular; input matrix is pathological")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngExt;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_time_gives_identity() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, -4.0, 5.0, 6.0, 7.0, -8.0, 9.0]);
        let e = matrix_exponential(&a, 0.0);
        assert!((e - DMatrix::identity(3, 3)).norm() < 1e-14);
    }

    #[test]
    fn diagonal_matrix_exponentiates_entrywise() {
        // Mirrors the lag block diag(-1/tau_k) of the platoon realization.
        let taus = [0.3, 0.25, 0.2];
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            3,
            taus.iter().map(|tau| -1.0 / tau),
        ));
        let t = 0.7;
        let e = matrix_exponential(&a, t);
        for (k, tau) in taus.iter().enumerate() {
            let expect = (-t / tau).exp();
            assert!((e[(k, k)] - expect).abs() <= 1e-12 * expect.abs());
        }
        assert!(e.iter().enumerate().all(|(idx, v)| {
            let (r, c) = (idx % 3, idx / 3);
            r == c || v.abs() < 1e-15
        }));
    }

    #[test]
    fn semigroup_property_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.random_range(2..=6);
            let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-10.0..10.0));
            let t: f64 = rng.random_range(0.0..1.0);
            let s: f64 = rng.random_range(0.0..1.0);
            let whole = matrix_exponential(&a, t + s);
            let split = matrix_exponential(&a, t) * matrix_exponential(&a, s);
            let rel = (&whole - &split).norm() / whole.norm();
            assert!(rel < 1e-9, "semigroup violation: rel err {rel}");
        }
    }

    #[test]
    fn derivative_matches_a_times_exponential() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = DMatrix::from_fn(5, 5, |_, _| rng.random_range(-3.0..3.0));
        let t = 0.4;
        let h = 1e-6;
        let fd = (matrix_exponential(&a, t + h) - matrix_exponential(&a, t - h)) / (2.0 * h);
        let exact = &a * matrix_exponential(&a, t);
        let rel = (&fd - &exact).norm() / exact.norm();
        assert!(rel < 1e-7, "derivative mismatch: rel err {rel}");
    }
}
