//! Forward operations and their vector-Jacobian products.
//!
//! Every `*_vjp` takes the upstream cotangent and returns cotangents for
//! the inputs of the matching forward call. No broadcasting anywhere.

use super::{NumericsError, Tensor2D};

pub fn matmul(a: &Tensor2D, b: &Tensor2D) -> Result<Tensor2D, NumericsError> {
    if a.cols() != b.rows() {
        return Err(NumericsError::ShapeMismatch {
            expected: format!("{}x? for lhs {}x{}", a.cols(), a.rows(), a.cols()),
            got: format!("{}x{}", b.rows(), b.cols()),
        });
    }
    let (n, k, m) = (a.rows(), a.cols(), b.cols());
    let mut out = Tensor2D::zeros(n, m);
    for i in 0..n {
        for p in 0..k {
            let aip = a.get(i, p);
            if aip == 0.0 {
                continue;
            }
            for j in 0..m {
                let v = out.get(i, j) + aip * b.get(p, j);
                out.set(i, j, v);
            }
        }
    }
    Ok(out)
}

/// Cotangents of `matmul(a, b)`: (upstream·bᵀ, aᵀ·upstream).
pub fn matmul_vjp(
    a: &Tensor2D,
    b: &Tensor2D,
    upstream: &Tensor2D,
) -> Result<(Tensor2D, Tensor2D), NumericsError> {
    if upstream.shape() != (a.rows(), b.cols()) {
        return Err(NumericsError::ShapeMismatch {
            expected: format!("{}x{}", a.rows(), b.cols()),
            got: format!("{}x{}", upstream.rows(), upstream.cols()),
        });
    }
    let grad_a = matmul(upstream, &b.transpose())?;
    let grad_b = matmul(&a.transpose(), upstream)?;
    Ok((grad_a, grad_b))
}

/// Row-wise softmax with max-subtraction for stability. Each output row
/// sums to 1.
pub fn softmax_rows(x: &Tensor2D) -> Tensor2D {
    let mut out = x.clone();
    for r in 0..x.rows() {
        let row = &mut out.data_mut()[r * x.cols()..(r + 1) * x.cols()];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Cotangent of `softmax_rows` given its output `y`:
/// per row, y ⊙ (u − (u·y)·1).
pub fn softmax_rows_vjp(y: &Tensor2D, upstream: &Tensor2D) -> Tensor2D {
    assert_eq!(y.shape(), upstream.shape(), "softmax vjp shape mismatch");
    let mut out = Tensor2D::zeros(y.rows(), y.cols());
    for r in 0..y.rows() {
        let dot: f64 = (0..y.cols()).map(|c| upstream.get(r, c) * y.get(r, c)).sum();
        for c in 0..y.cols() {
            out.set(r, c, y.get(r, c) * (upstream.get(r, c) - dot));
        }
    }
    out
}

pub fn relu(x: &Tensor2D) -> Tensor2D {
    x.map(|v| v.max(0.0))
}

/// Subgradient at 0 is 0.
pub fn relu_vjp(x: &Tensor2D, upstream: &Tensor2D) -> Tensor2D {
    assert_eq!(x.shape(), upstream.shape(), "relu vjp shape mismatch");
    Tensor2D::from_fn(x.rows(), x.cols(), |r, c| {
        if x.get(r, c) > 0.0 {
            upstream.get(r, c)
        } else {
            0.0
        }
    })
}

/// Row-wise L2 normalization. Exactly-zero rows stay zero.
pub fn l2_normalize_rows(x: &Tensor2D) -> Tensor2D {
    let mut out = x.clone();
    for r in 0..x.rows() {
        let norm = row_norm(x, r);
        if norm > 0.0 {
            for c in 0..x.cols() {
                out.set(r, c, x.get(r, c) / norm);
            }
        }
    }
    out
}

/// Cotangent of `l2_normalize_rows`; zero rows receive zero gradient
/// (subgradient choice that avoids NaN on degenerate embeddings).
pub fn l2_normalize_rows_vjp(x: &Tensor2D, upstream: &Tensor2D) -> Tensor2D {
    assert_eq!(x.shape(), upstream.shape(), "l2 normalize vjp shape mismatch");
    let mut out = Tensor2D::zeros(x.rows(), x.cols());
    for r in 0..x.rows() {
        let norm = row_norm(x, r);
        if norm == 0.0 {
            continue;
        }
        let dot: f64 = (0..x.cols())
            .map(|c| upstream.get(r, c) * x.get(r, c) / norm)
            .sum();
        for c in 0..x.cols() {
            let y = x.get(r, c) / norm;
            out.set(r, c, (upstream.get(r, c) - dot * y) / norm);
        }
    }
    out
}

fn row_norm(x: &Tensor2D, r: usize) -> f64 {
    x.row(r).iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Horizontal concatenation. All parts must share the row count.
pub fn concat_cols(parts: &[&Tensor2D]) -> Result<Tensor2D, NumericsError> {
    if parts.is_empty() {
        return Err(NumericsError::EmptyShape);
    }
    let rows = parts[0].rows();
    for p in parts {
        if p.rows() != rows {
            return Err(NumericsError::ShapeMismatch {
                expected: format!("{rows} rows"),
                got: format!("{} rows", p.rows()),
            });
        }
    }
    let total: usize = parts.iter().map(|p| p.cols()).sum();
    let mut out = Tensor2D::zeros(rows, total);
    for r in 0..rows {
        let mut off = 0;
        for p in parts {
            for c in 0..p.cols() {
                out.set(r, off + c, p.get(r, c));
            }
            off += p.cols();
        }
    }
    Ok(out)
}

/// Splits the upstream cotangent back into the widths of the original
/// parts.
pub fn concat_cols_vjp(
    upstream: &Tensor2D,
    widths: &[usize],
) -> Result<Vec<Tensor2D>, NumericsError> {
    let total: usize = widths.iter().sum();
    if total != upstream.cols() {
        return Err(NumericsError::ShapeMismatch {
            expected: format!("{total} cols"),
            got: format!("{} cols", upstream.cols()),
        });
    }
    let mut out = Vec::with_capacity(widths.len());
    let mut off = 0;
    for &w in widths {
        out.push(Tensor2D::from_fn(upstream.rows(), w, |r, c| {
            upstream.get(r, off + c)
        }));
        off += w;
    }
    Ok(out)
}

pub fn add(x: &Tensor2D, y: &Tensor2D) -> Result<Tensor2D, NumericsError> {
    if x.shape() != y.shape() {
        return Err(NumericsError::ShapeMismatch {
            expected: format!("{}x{}", x.rows(), x.cols()),
            got: format!("{}x{}", y.rows(), y.cols()),
        });
    }
    Ok(Tensor2D::from_fn(x.rows(), x.cols(), |r, c| {
        x.get(r, c) + y.get(r, c)
    }))
}

/// Both addends receive the upstream cotangent unchanged.
pub fn add_vjp(upstream: &Tensor2D) -> (Tensor2D, Tensor2D) {
    (upstream.clone(), upstream.clone())
}

pub fn scale(x: &Tensor2D, c: f64) -> Tensor2D {
    x.map(|v| v * c)
}

pub fn scale_vjp(upstream: &Tensor2D, c: f64) -> Tensor2D {
    scale(upstream, c)
}

#[cfg(test)]
mod tests {
    use super::super::finite_diff_check;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_matmul_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor2D::random_uniform(4, 4, -1.0, 1.0, &mut rng);
        let out = matmul(&Tensor2D::identity(4), &x).unwrap();
        assert_eq!(out.max_abs_diff(&x), 0.0);
    }

    #[test]
    fn matmul_hand_example() {
        let a = Tensor2D::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor2D::from_vec(2, 1, vec![1.0, 1.0]).unwrap();
        let out = matmul(&a, &b).unwrap();
        assert_eq!(out.data(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_shape_mismatch_errors() {
        let a = Tensor2D::zeros(2, 3);
        let b = Tensor2D::zeros(2, 3);
        assert!(matmul(&a, &b).is_err());
    }

    #[test]
    fn softmax_uniform_rows() {
        let x = Tensor2D::from_vec(1, 5, vec![2.5; 5]).unwrap();
        let y = softmax_rows(&x);
        for c in 0..5 {
            assert!((y.get(0, c) - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_closed_form_quarters() {
        let x = Tensor2D::from_vec(1, 2, vec![0.0, 3.0_f64.ln()]).unwrap();
        let y = softmax_rows(&x);
        assert!((y.get(0, 0) - 0.25).abs() < 1e-12);
        assert!((y.get(0, 1) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = Tensor2D::random_uniform(6, 9, -30.0, 30.0, &mut rng);
        let y = softmax_rows(&x);
        for r in 0..6 {
            let s: f64 = y.row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn relu_and_l2_basics() {
        let x = Tensor2D::from_vec(1, 2, vec![-1.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 2.0]);
        let v = Tensor2D::from_vec(1, 2, vec![3.0, 4.0]).unwrap();
        let n = l2_normalize_rows(&v);
        assert!((n.get(0, 0) - 0.6).abs() < 1e-15);
        assert!((n.get(0, 1) - 0.8).abs() < 1e-15);
        let z = Tensor2D::zeros(1, 2);
        assert_eq!(l2_normalize_rows(&z).data(), &[0.0, 0.0]);
    }

    #[test]
    fn l2_normalized_rows_have_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let x = Tensor2D::random_uniform(5, 7, -2.0, 2.0, &mut rng);
        let y = l2_normalize_rows(&x);
        for r in 0..5 {
            let n: f64 = y.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn concat_paper_widths() {
        let blocks: Vec<Tensor2D> = (0..16).map(|_| Tensor2D::zeros(2, 64)).collect();
        let refs: Vec<&Tensor2D> = blocks.iter().collect();
        let out = concat_cols(&refs).unwrap();
        assert_eq!(out.shape(), (2, 1024));
    }

    #[test]
    fn concat_mismatch_errors() {
        let a = Tensor2D::zeros(2, 3);
        let b = Tensor2D::zeros(3, 3);
        assert!(concat_cols(&[&a, &b]).is_err());
    }

    /// Scalarize a tensor-valued op through a fixed random projection and
    /// check its vjp against central differences.
    fn check_unary(
        name: &str,
        rows: usize,
        cols: usize,
        seed: u64,
        fwd: impl Fn(&Tensor2D) -> Tensor2D,
        vjp: impl Fn(&Tensor2D, &Tensor2D) -> Tensor2D,
        tol: f64,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor2D::random_uniform(rows, cols, -1.0, 1.0, &mut rng);
        let proj = Tensor2D::random_uniform(rows, cols, -1.0, 1.0, &mut rng);
        let loss = |t: &Tensor2D| -> f64 {
            let y = fwd(t);
            y.data().iter().zip(proj.data()).map(|(a, b)| a * b).sum()
        };
        let analytic = vjp(&x, &proj);
        let f = |flat: &[f64]| {
            let t = Tensor2D::from_vec(rows, cols, flat.to_vec()).unwrap();
            loss(&t)
        };
        let err = finite_diff_check(&f, x.data(), analytic.data(), 1e-5);
        assert!(err < tol, "{name}: rel err {err}");
    }

    #[test]
    fn elementwise_vjps_match_finite_differences() {
        for seed in 0..20u64 {
            check_unary(
                "softmax",
                3,
                5,
                seed,
                softmax_rows,
                |x, u| softmax_rows_vjp(&softmax_rows(x), u),
                1e-5,
            );
            check_unary("relu", 3, 5, 100 + seed, relu, relu_vjp, 1e-5);
            check_unary(
                "l2norm",
                3,
                5,
                200 + seed,
                l2_normalize_rows,
                l2_normalize_rows_vjp,
                1e-5,
            );
            check_unary(
                "scale",
                3,
                5,
                300 + seed,
                |x| scale(x, -2.5),
                |_, u| scale_vjp(u, -2.5),
                1e-6,
            );
        }
    }

    #[test]
    fn add_and_concat_vjps_match_finite_differences() {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
            let x = Tensor2D::random_uniform(3, 4, -1.0, 1.0, &mut rng);
            let y = Tensor2D::random_uniform(3, 4, -1.0, 1.0, &mut rng);
            let z = Tensor2D::random_uniform(3, 2, -1.0, 1.0, &mut rng);
            let proj_add = Tensor2D::random_uniform(3, 4, -1.0, 1.0, &mut rng);
            let proj_cat = Tensor2D::random_uniform(3, 6, -1.0, 1.0, &mut rng);

            let (gx, gy) = add_vjp(&proj_add);
            let fx = |flat: &[f64]| {
                let t = Tensor2D::from_vec(3, 4, flat.to_vec()).unwrap();
                let s = add(&t, &y).unwrap();
                s.data().iter().zip(proj_add.data()).map(|(a, b)| a * b).sum()
            };
            let fy = |flat: &[f64]| {
                let t = Tensor2D::from_vec(3, 4, flat.to_vec()).unwrap();
                let s = add(&x, &t).unwrap();
                s.data().iter().zip(proj_add.data()).map(|(a, b)| a * b).sum()
            };
            assert!(finite_diff_check(&fx, x.data(), gx.data(), 1e-5) < 1e-8);
            assert!(finite_diff_check(&fy, y.data(), gy.data(), 1e-5) < 1e-8);

            let parts = concat_cols_vjp(&proj_cat, &[4, 2]).unwrap();
            let fc = |flat: &[f64]| {
                let t = Tensor2D::from_vec(3, 4, flat.to_vec()).unwrap();
                let s = concat_cols(&[&t, &z]).unwrap();
                s.data().iter().zip(proj_cat.data()).map(|(a, b)| a * b).sum()
            };
            let fz = |flat: &[f64]| {
                let t = Tensor2D::from_vec(3, 2, flat.to_vec()).unwrap();
                let s = concat_cols(&[&x, &t]).unwrap();
                s.data().iter().zip(proj_cat.data()).map(|(a, b)| a * b).sum()
            };
            assert!(finite_diff_check(&fc, x.data(), parts[0].data(), 1e-5) < 1e-8);
            assert!(finite_diff_check(&fz, z.data(), parts[1].data(), 1e-5) < 1e-8);
        }
    }

    #[test]
    fn matmul_vjp_matches_finite_differences() {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(40 + seed);
            let a = Tensor2D::random_uniform(3, 4, -1.0, 1.0, &mut rng);
            let b = Tensor2D::random_uniform(4, 2, -1.0, 1.0, &mut rng);
            let proj = Tensor2D::random_uniform(3, 2, -1.0, 1.0, &mut rng);
            let (ga, gb) = matmul_vjp(&a, &b, &proj).unwrap();
            let fa = |flat: &[f64]| {
                let t = Tensor2D::from_vec(3, 4, flat.to_vec()).unwrap();
                let y = matmul(&t, &b).unwrap();
                y.data().iter().zip(proj.data()).map(|(p, q)| p * q).sum()
            };
            let fb = |flat: &[f64]| {
                let t = Tensor2D::from_vec(4, 2, flat.to_vec()).unwrap();
                let y = matmul(&a, &t).unwrap();
                y.data().iter().zip(proj.data()).map(|(p, q)| p * q).sum()
            };
            let ea = finite_diff_check(&fa, a.data(), ga.data(), 1e-5);
            let eb = finite_diff_check(&fb, b.data(), gb.data(), 1e-5);
            assert!(ea < 1e-6 && eb < 1e-6, "matmul vjp errs {ea} {eb}");
        }
    }
}
