//! Small dense linear algebra over the jet ring.

use nalgebra::DMatrix;

use crate::jet::Jet;

pub type JetMat = Vec<Vec<Jet>>;

pub fn zeros(rows: usize, cols: usize, order: usize) -> JetMat {
    vec![vec![Jet::zero(order); cols]; rows]
}

pub fn identity(n: usize, order: usize) -> JetMat {
    let mut m = zeros(n, n, order);
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = Jet::constant(1.0, order);
    }
    m
}

pub fn truncate(m: &JetMat, order: usize) -> JetMat {
    m.iter()
        .map(|row| row.iter().map(|x| x.truncate(order)).collect())
        .collect()
}

pub fn mul(a: &JetMat, b: &JetMat) -> JetMat {
    let inner = b.len();
    a.iter()
        .map(|row| {
            (0..b[0].len())
                .map(|j| {
                    let mut acc = &row[0] * &b[0][j];
                    for k in 1..inner {
                        acc += &row[k] * &b[k][j];
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

pub fn constant_terms(m: &JetMat) -> DMatrix<f64> {
    let rows = m.len();
    let cols = if rows == 0 { 0 } else { m[0].len() };
    DMatrix::from_fn(rows, cols, |i, j| m[i][j].value())
}

/// Solves `a x = b` column-wise by Gaussian elimination with partial pivoting
/// on constant terms. Fails with the offending pivot when
/// `|pivot| < rel_tol * max row norm`.
pub fn solve(a: &JetMat, b: &JetMat, rel_tol: f64) -> Result<JetMat, f64> {
    let n = a.len();
    let mut a = a.clone();
    let mut b = b.clone();
    let row_norm = a
        .iter()
        .map(|row| row.iter().map(|x| x.value() * x.value()).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let floor = rel_tol * row_norm;
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| {
                a[i][col]
                    .value()
                    .abs()
                    .total_cmp(&a[j][col].value().abs())
            })
            .expect("nonempty");
        let pv = a[piv][col].value();
        if !(pv.abs() > floor) {
            return Err(pv);
        }
        a.swap(piv, col);
        b.swap(piv, col);
        let inv = a[col][col].recip().expect("pivot checked");
        for row in (col + 1)..n {
            let factor = &a[row][col] * &inv;
            if factor.max_abs() == 0.0 {
                continue;
            }
            for k in col..n {
                let t = &factor * &a[col][k];
                a[row][k] -= t;
            }
            for k in 0..b[row].len() {
                let t = &factor * &b[col][k];
                b[row][k] -= t;
            }
        }
    }
    let cols = b[0].len();
    let mut x = b.clone();
    for row in (0..n).rev() {
        let inv = a[row][row].recip().expect("pivot checked");
        for k in 0..cols {
            let mut acc = b[row][k].clone();
            for j in (row + 1)..n {
                acc -= &a[row][j] * &x[j][k];
            }
            x[row][k] = &acc * &inv;
        }
    }
    Ok(x)
}

pub fn inverse(a: &JetMat, rel_tol: f64) -> Result<JetMat, f64> {
    let order = a[0][0].order();
    solve(a, &identity(a.len(), order), rel_tol)
}

/// Jets of all leading principal minors `Delta_1 .. Delta_N`.
///
/// Uses Laplace expansion along the last row with memoisation over column
/// subsets, so no pivot is ever divided by and vanishing minors are fine.
pub fn leading_minors(m: &JetMat) -> Vec<Jet> {
    let n = m.len();
    assert!(n <= 16, "leading_minors is exponential in the size");
    let order = m[0][0].order();
    let mut d: Vec<Option<Jet>> = vec![None; 1 << n];
    d[0] = Some(Jet::constant(1.0, order));
    // process subsets in order of popcount so that smaller ones are ready
    let mut by_size: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
    for s in 1usize..(1 << n) {
        by_size[s.count_ones() as usize].push(s);
    }
    for (k, subsets) in by_size.iter().enumerate().skip(1) {
        let row = k - 1;
        for &s in subsets {
            let mut acc: Option<Jet> = None;
            let mut pos = 0;
            for j in 0..n {
                if s & (1 << j) == 0 {
                    continue;
                }
                let minor = d[s & !(1 << j)].as_ref().expect("smaller subset");
                let mut term = &m[row][j] * minor;
                if (row + pos) % 2 == 1 {
                    term = -term;
                }
                acc = Some(match acc {
                    None => term,
                    Some(a) => a + term,
                });
                pos += 1;
            }
            d[s] = acc;
        }
    }
    (1..=n)
        .map(|i| d[(1 << i) - 1].clone().expect("computed"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(v: f64) -> Jet {
        Jet::from_coeffs(vec![v, 0.0])
    }

    #[test]
    fn minors_of_antidiagonal() {
        let m = vec![
            vec![c(0.0), c(0.0), c(1.0)],
            vec![c(0.0), c(1.0), c(0.0)],
            vec![c(1.0), c(0.0), c(0.0)],
        ];
        let d: Vec<f64> = leading_minors(&m).iter().map(|j| j.value()).collect();
        assert_eq!(d, vec![0.0, 0.0, -1.0]);
    }

    #[test]
    fn minors_match_lu_and_derivative() {
        // A(h) = A0 + h A1; d/dh det = det(A0) tr(A0^{-1} A1)
        let a0 = [[2.0, 1.0, 0.5], [1.0, 3.0, -1.0], [0.5, -1.0, 4.0]];
        let a1 = [[0.1, 0.0, 0.2], [0.0, -0.3, 0.0], [0.2, 0.0, 0.5]];
        let m: JetMat = (0..3)
            .map(|i| (0..3).map(|j| Jet::from_coeffs(vec![a0[i][j], a1[i][j]])).collect())
            .collect();
        let d = leading_minors(&m);
        let m0 = nalgebra::Matrix3::from_fn(|i, j| a0[i][j]);
        let m1 = nalgebra::Matrix3::from_fn(|i, j| a1[i][j]);
        let det = m0.determinant();
        let ddet = det * (m0.try_inverse().unwrap() * m1).trace();
        assert!((d[2].value() - det).abs() < 1e-12);
        assert!((d[2].coeffs()[1] - ddet).abs() < 1e-12);
        assert!((d[0].value() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn inverse_round_trip() {
        let m = vec![
            vec![Jet::from_coeffs(vec![0.0, 1.0]), Jet::from_coeffs(vec![2.0, 0.0])],
            vec![Jet::from_coeffs(vec![3.0, 1.0]), Jet::from_coeffs(vec![1.0, -1.0])],
        ];
        let inv = inverse(&m, 1e-12).unwrap();
        let id = mul(&m, &inv);
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((id[i][j].value() - want).abs() < 1e-14);
                assert!(id[i][j].coeffs()[1].abs() < 1e-14);
            }
        }
        let singular = vec![vec![c(1.0), c(2.0)], vec![c(2.0), c(4.0)]];
        assert!(inverse(&singular, 1e-12).is_err());
    }
}
