//! Tensor-product Lagrange basis on the reference square with equispaced nodes.

use crate::scalar::{Real, Vec2};

use super::SpaceError;

/// Values (`d = 0`), first (`d = 1`) or second (`d = 2`) derivatives of the
/// 1D Lagrange basis of order `p` at `t`. Valid for any real `t`.
fn lagrange_1d<T: Real>(p: usize, t: T, d: usize) -> [T; 3] {
    let c = T::lit;
    match (p, d) {
        (1, 0) => [T::one() - t, t, T::zero()],
        (1, 1) => [-T::one(), T::one(), T::zero()],
        (1, _) => [T::zero(); 3],
        (2, 0) => [
            c(2.0) * t * t - c(3.0) * t + T::one(),
            c(4.0) * t - c(4.0) * t * t,
            c(2.0) * t * t - t,
        ],
        (2, 1) => [c(4.0) * t - c(3.0), c(4.0) - c(8.0) * t, c(4.0) * t - T::one()],
        (2, _) => [c(4.0), c(-8.0), c(4.0)],
        _ => unreachable!("order checked by the caller"),
    }
}

/// Evaluates all `(p+1)^2` local basis functions, or their partial
/// derivatives of order `deriv = (d1, d2)` with respect to the reference
/// coordinates, at `xi`. Local numbering is x-fastest: `k = a + (p+1) b`.
///
/// `xi` may lie outside the unit square, which gives the canonical
/// polynomial extension of the element basis.
pub fn shape_eval<T: Real>(p: usize, xi: Vec2<T>, deriv: (usize, usize)) -> Result<Vec<T>, SpaceError> {
    if !(1..=2).contains(&p) {
        return Err(SpaceError::UnsupportedOrder(p));
    }
    if deriv.0 + deriv.1 > 2 {
        return Err(SpaceError::DerivativeOrder(deriv.0 + deriv.1));
    }
    let bx = lagrange_1d(p, xi[0], deriv.0);
    let by = lagrange_1d(p, xi[1], deriv.1);
    let n = p + 1;
    let mut out = Vec::with_capacity(n * n);
    for b in by.iter().take(n) {
        for a in bx.iter().take(n) {
            out.push(*a * *b);
        }
    }
    Ok(out)
}

/// Values and reference gradients in one pass, for assembly loops.
pub(crate) fn values_and_gradients<T: Real>(p: usize, xi: Vec2<T>, vals: &mut Vec<T>, grads: &mut Vec<Vec2<T>>) {
    let n = p + 1;
    let (vx, dx) = (lagrange_1d(p, xi[0], 0), lagrange_1d(p, xi[0], 1));
    let (vy, dy) = (lagrange_1d(p, xi[1], 0), lagrange_1d(p, xi[1], 1));
    vals.clear();
    grads.clear();
    for b in 0..n {
        for a in 0..n {
            vals.push(vx[a] * vy[b]);
            grads.push([dx[a] * vy[b], vx[a] * dy[b]]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nodal_and_extrapolated_values() {
        assert_eq!(shape_eval(1, [0.0, 0.0], (0, 0)).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(shape_eval(1, [2.0, 0.0], (0, 0)).unwrap(), vec![-1.0, 2.0, 0.0, 0.0]);
        for p in 1..=2 {
            for a in 0..=p {
                for b in 0..=p {
                    let xi = [a as f64 / p as f64, b as f64 / p as f64];
                    let v = shape_eval(p, xi, (0, 0)).unwrap();
                    for (k, val) in v.iter().enumerate() {
                        let expected = if k == a + (p + 1) * b { 1.0 } else { 0.0 };
                        assert!((val - expected).abs() < 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn second_derivative_of_quadratic_bubble() {
        let h = 0.125f64;
        for &x in &[-1.0, 0.0, 0.3, 2.5] {
            let d = shape_eval(2, [x, 0.5], (2, 0)).unwrap();
            // centre function has local index 4
            assert!((d[4] / (h * h) + 8.0 / (h * h)).abs() < 1e-9);
        }
    }

    #[test]
    fn errors() {
        assert_eq!(shape_eval::<f64>(3, [0.0, 0.0], (0, 0)), Err(SpaceError::UnsupportedOrder(3)));
        assert_eq!(shape_eval::<f64>(1, [0.0, 0.0], (2, 1)), Err(SpaceError::DerivativeOrder(3)));
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let e = 1e-6f64;
        for p in 1..=2 {
            let xi: [f64; 2] = [0.37, -0.61];
            let d1 = shape_eval(p, xi, (1, 0)).unwrap();
            let d2 = shape_eval(p, xi, (0, 1)).unwrap();
            let dxy = shape_eval(p, xi, (1, 1)).unwrap();
            let plus = shape_eval(p, [xi[0] + e, xi[1]], (0, 0)).unwrap();
            let minus = shape_eval(p, [xi[0] - e, xi[1]], (0, 0)).unwrap();
            let up = shape_eval(p, [xi[0], xi[1] + e], (0, 0)).unwrap();
            let down = shape_eval(p, [xi[0], xi[1] - e], (0, 0)).unwrap();
            let up1 = shape_eval(p, [xi[0], xi[1] + e], (1, 0)).unwrap();
            let down1 = shape_eval(p, [xi[0], xi[1] - e], (1, 0)).unwrap();
            for k in 0..d1.len() {
                assert!((d1[k] - (plus[k] - minus[k]) / (2.0 * e)).abs() < 1e-8);
                assert!((d2[k] - (up[k] - down[k]) / (2.0 * e)).abs() < 1e-8);
                assert!((dxy[k] - (up1[k] - down1[k]) / (2.0 * e)).abs() < 1e-8);
            }
            let mut v = Vec::new();
            let mut g = Vec::new();
            values_and_gradients(p, xi, &mut v, &mut g);
            assert_eq!(v, shape_eval(p, xi, (0, 0)).unwrap());
            assert!(g.iter().zip(&d1).all(|(g, d)| g[0] == *d));
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn partition_of_unity(x in -3.0f64..3.0, y in -3.0f64..3.0, p in 1usize..=2) {
                let v = shape_eval(p, [x, y], (0, 0)).unwrap();
                prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                let d = shape_eval(p, [x, y], (1, 0)).unwrap();
                prop_assert!(d.iter().sum::<f64>().abs() < 1e-12);
            }
        }
    }
}
