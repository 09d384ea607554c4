use nalgebra::{DMatrix, DVector};

/// Diagonal similarity `D⁻¹ A D` that equalizes row and column norms.
///
/// Parlett–Reinsch iteration with power-of-two scale factors, so the
/// transformation is exact in floating point. Returns the balanced matrix
/// and the diagonal of `D`.
pub fn balance(a: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let n = a.nrows();
    let mut b = a.clone();
    let mut d = DVector::from_element(n, 1.0);
    const RADIX: f64 = 2.0;
    let mut converged = false;
    let mut sweeps = 0;
    while !converged && sweeps < 100 {
        converged = true;
        sweeps += 1;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += b[(j, i)].abs();
                    r += b[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut cs = c;
            while cs < r / RADIX {
                f *= RADIX;
                cs *= RADIX * RADIX;
            }
            while cs > r * RADIX {
                f /= RADIX;
                cs /= RADIX * RADIX;
            }
            if (c * f + r / f) < 0.95 * s {
                converged = false;
                d[i] *= f;
                for j in 0..n {
                    b[(i, j)] /= f;
                }
                for j in 0..n {
                    b[(j, i)] *= f;
                }
            }
        }
    }
    (b, d)
}
