use nalgebra::{ComplexField, DMatrix};

/// Default relative singular-value threshold for rank decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

/// Number of singular values above `rel_tol` times the largest one.
///
/// Works for real and complex matrices. The zero (or empty) matrix has rank 0.
pub fn numerical_rank<T>(a: &DMatrix<T>, rel_tol: f64) -> usize
where
    T: ComplexField<RealField = f64>,
{
    if a.is_empty() {
        return 0;
    }
    let sv = a.clone().singular_values();
    let largest = sv.iter().copied().fold(0.0, f64::max);
    if largest == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * largest).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, Complex};

    #[test]
    fn identity_has_full_rank() {
        assert_eq!(numerical_rank(&DMatrix::<f64>::identity(3, 3), DEFAULT_RANK_TOL), 3);
    }

    #[test]
    fn outer_product_is_rank_one() {
        assert_eq!(numerical_rank(&dmatrix![1.0, 1.0; 1.0, 1.0], DEFAULT_RANK_TOL), 1);
    }

    #[test]
    fn zero_matrix_is_rank_zero() {
        assert_eq!(numerical_rank(&DMatrix::<f64>::zeros(3, 4), DEFAULT_RANK_TOL), 0);
    }

    #[test]
    fn complex_rank() {
        let i = Complex::new(0.0, 1.0);
        let one = Complex::new(1.0, 0.0);
        // second row is i times the first
        let a = dmatrix![one, i; i, -one];
        assert_eq!(numerical_rank(&a, DEFAULT_RANK_TOL), 1);
    }
}
