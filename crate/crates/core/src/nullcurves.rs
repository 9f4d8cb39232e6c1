//! Null curves: reparametrization coefficients, Wilczynski invariants of the
//! tractor ODE, null helices and the Lorentzian frame.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::frenet::{self, FrameBuilder};
use crate::geometry::{CurveSpec, MetricSpec};
use crate::jet::{Jet, JetError};
use crate::jetmat::{self, JetMat};
use crate::tractor::{self, Analysis, GramDet, GramTable, TractorJet, RANK_TOL};

/// `(A_k, B_k, C_k)` from `A_0 = r + 1`, `B_0 = C_0 = 0` and
/// `A_{k+1} = A_k + r - k`, `B_{k+1} = B_k + A_k`, `C_{k+1} = C_k - (r - k - 1) A_k`.
pub fn reparam_coefficients(r: usize, k: usize) -> (i64, i64, i64) {
    let r = r as i64;
    let (mut a, mut b, mut c) = (r + 1, 0i64, 0i64);
    for j in 0..k as i64 {
        let (na, nb, nc) = (a + r - j, b + a, c - (r - j - 1) * a);
        a = na;
        b = nb;
        c = nc;
    }
    (a, b, c)
}

fn missing() -> Error {
    Error::Jet(JetError::OrderExhausted)
}

fn d(j: &Jet) -> Result<Jet> {
    Ok(j.shift_derivative()?)
}

fn common(a: &Jet, b: &Jet) -> (Jet, Jet) {
    let k = a.order().min(b.order());
    (a.truncate(k), b.truncate(k))
}

/// `Θ_4 = -εβ - r(r+3)/10 εα'' + (r+3)(2r+5)(5r+4) / (10(r+1)(r+2)(2r+3)) α²`
pub fn theta4(gt: &GramTable) -> Result<Jet> {
    let r = gt.r as f64;
    let eps = gt.eps;
    let a = gt.alpha().ok_or_else(missing)?;
    let b = gt.beta().ok_or_else(missing)?;
    let a2 = d(&d(a)?)?;
    let k = b.order().min(a2.order());
    let c = (r + 3.0) * (2.0 * r + 5.0) * (5.0 * r + 4.0) / (10.0 * (r + 1.0) * (r + 2.0) * (2.0 * r + 3.0));
    let a = a.truncate(k);
    Ok(b.truncate(k).scale(-eps) - a2.truncate(k).scale(eps * r * (r + 3.0) / 10.0) + (&a * &a).scale(c))
}

/// Coefficients `q_0 … q_{2r+2}` of `𝕋^{(2r+3)} + Σ q_j 𝕋^{(j)} (≡ 0 mod the span)`, obtained by
/// pairing with `𝕋, …, 𝕋^{(2r+2)}` and solving over jets.
pub fn q_coefficients(gt: &GramTable) -> Result<Vec<Jet>> {
    let k = 2 * gt.r + 3;
    if gt.len() <= k {
        return Err(missing());
    }
    let ord = gt.get(k - 1, k).order();
    let a: JetMat = (0..k).map(|i| (0..k).map(|j| gt.get(i, j).truncate(ord)).collect()).collect();
    let b: JetMat = (0..k).map(|i| vec![-gt.get(i, k).truncate(ord)]).collect();
    let q = jetmat::solve(&a, &b, 1e-12).map_err(|p| Error::Degenerate(format!("𝕋..𝕌^(2r+1) dependent (pivot {:e})", p)))?;
    Ok(q.into_iter().map(|mut row| row.remove(0)).collect())
}

/// `(q_{2r+2}, q_{2r+1}, q_{2r}, q_{2r-1})` in closed form; the last is absent for `r = 0`.
pub fn q_closed_form(gt: &GramTable) -> Result<(Jet, Jet, Jet, Option<Jet>)> {
    let r = gt.r as f64;
    let eps = gt.eps;
    let a = gt.alpha().ok_or_else(missing)?;
    let a1 = d(a)?;
    let q2 = Jet::zero(a.order());
    let q1 = a.scale(eps);
    let q0 = a1.scale(eps * (2.0 * r + 1.0) / 2.0);
    let qm = if gt.r >= 1 {
        let b = gt.beta().ok_or_else(missing)?;
        let a2 = d(&a1)?;
        let k = b.order().min(a2.order());
        let at = a.truncate(k);
        Some(b.truncate(k).scale(-eps) + a2.truncate(k).scale(eps * r * r / 2.0) + &at * &at)
    } else {
        None
    };
    Ok((q2, q1, q0, qm))
}

/// `(Θ_3, Θ_4)` of `y^{(k)} + q_{k-2} y^{(k-2)} + … + q_0 y = 0`, `q` indexed by `j`.
pub fn wilczynski_from_coeffs(q: &[Jet], k: usize) -> Result<(Jet, Jet)> {
    if k < 4 || q.len() < k - 1 {
        return Err(Error::Unsupported(format!("Wilczynski Θ_4 needs order k >= 4, got {}", k)));
    }
    let kf = k as f64;
    let qk2 = &q[k - 2];
    let qk3 = &q[k - 3];
    let qk4 = &q[k - 4];
    let (a, b) = common(qk3, &d(qk2)?);
    let theta3 = a - b.scale((kf - 2.0) / 2.0);
    let t1 = d(qk3)?;
    let t2 = d(&d(qk2)?)?;
    let ord = qk4.order().min(t2.order());
    let sq = (qk2 * qk2).truncate(ord);
    let c = (5.0 * kf + 7.0) * (kf - 2.0) * (kf - 3.0) / (10.0 * kf * (kf + 1.0) * (kf - 1.0));
    let theta4 = qk4.truncate(ord) - t1.truncate(ord).scale((kf - 3.0) / 2.0)
        + t2.truncate(ord).scale((kf - 2.0) * (kf - 3.0) / 10.0)
        - sq.scale(c);
    Ok((theta3, theta4))
}

/// `Θ_5 = q_{k-5} - (k-4)/2 q'_{k-4}`, valid in Laguerre–Forsyth form (`q_{k-2} = q_{k-3} = 0`).
pub fn theta5_laguerre_forsyth(q: &[Jet], k: usize) -> Result<Jet> {
    if k < 5 {
        return Err(Error::Unsupported(format!("Θ_5 needs order k >= 5, got {}", k)));
    }
    let (a, b) = common(&q[k - 5], &d(&q[k - 4])?);
    Ok(a - b.scale((k as f64 - 4.0) / 2.0))
}

/// ODE coefficients and the first Wilczynski invariants at the base point.
#[derive(Debug, Clone)]
pub struct WilczynskiData {
    pub r: usize,
    /// `q_0 … q_{2r+2}`
    pub q: Vec<Jet>,
    pub theta3: f64,
    pub theta4: f64,
    /// Present for `r >= 1`; meaningful when the parametrization is projective.
    pub theta5: Option<f64>,
}

impl WilczynskiData {
    /// The semi-canonical coefficient `q_{2r+2}`.
    pub fn q_top(&self) -> f64 {
        self.q[2 * self.r + 2].value()
    }
}

pub fn wilczynski(gt: &GramTable) -> Result<WilczynskiData> {
    let k = 2 * gt.r + 3;
    let q = q_coefficients(gt)?;
    let (theta3, theta4) = if k >= 4 {
        let (a, b) = wilczynski_from_coeffs(&q, k)?;
        (a.value(), b.value())
    } else {
        // third-order equation: Θ_3 only, Θ_4 from the closed form (= Δ_4)
        let (a, b) = common(&q[0], &d(&q[1])?.scale(0.5));
        ((a - b).value(), theta4(gt)?.value())
    };
    let theta5 = if k >= 5 {
        Some(theta5_laguerre_forsyth(&q, k)?.value())
    } else {
        None
    };
    Ok(WilczynskiData {
        r: gt.r,
        q,
        theta3,
        theta4,
        theta5,
    })
}

/// Threshold for `Θ_4` relative to the sizes of the quantities it is built from.
pub fn theta4_threshold(gt: &GramTable) -> f64 {
    let a = gt.alpha().map(|a| a.value().abs()).unwrap_or(0.0);
    let b = gt.beta().map(|b| b.value().abs()).unwrap_or(0.0);
    let a2 = gt
        .alpha()
        .and_then(|a| a.derivative(2).ok())
        .map(f64::abs)
        .unwrap_or(0.0);
    RANK_TOL * (1.0 + a * a + b + a2)
}

#[derive(Debug, Clone)]
pub struct HelixReport {
    pub r: usize,
    /// `Δ_{2r+4}` when `2r + 4 <= n + 2`.
    pub delta: Option<GramDet>,
    pub theta4: f64,
    pub theta4_threshold: f64,
    /// Largest slot of `𝕌^{(2r+2)}` after projective reparametrization.
    pub top: f64,
    pub top_threshold: f64,
    pub helix: bool,
}

/// Null helix test: vanishing `Δ_{2r+4}` and `Θ_4`, and `𝕌^{(2r+2)} = 0` in a projective
/// parameter. For `r = 0` the same signals are `Δ_4 = -Φ` and `𝕌'' = 0`, i.e. the circle test.
pub fn helix_check(ms: &MetricSpec, cs: &CurveSpec, t0: f64, order: usize, r: Option<usize>) -> Result<HelixReport> {
    let an = Analysis::new(ms, cs, t0, order, r)?;
    let r = an.r;
    let n = an.dim();
    let dets = an.determinants();
    let delta = if 2 * r + 4 <= n + 2 {
        Some(*dets.get(2 * r + 3).ok_or_else(missing)?)
    } else {
        None
    };
    let th = theta4(&an.gram)?.value();
    let th_tol = theta4_threshold(&an.gram);
    let pr = tractor::projective_reparametrize(ms, cs, &[t0], order, Some(r))?;
    let param = pr.points[0].inverse()?;
    let pan = Analysis::with_param(ms, cs, &param, Some(r))?;
    let top_idx = 2 * r + 3;
    let top_t = pan.seq.get(top_idx).ok_or_else(missing)?;
    let top = top_t.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = pan.seq[..top_idx]
        .iter()
        .fold(1.0f64, |m, t| m.max(t.value_norm()));
    let top_tol = 1e-7 * scale;
    let helix = delta.map_or(true, |d| d.is_zero()) && th.abs() <= th_tol && top <= top_tol;
    Ok(HelixReport {
        r,
        delta,
        theta4: th,
        theta4_threshold: th_tol,
        top,
        top_threshold: top_tol,
        helix,
    })
}

/// Which of the admissible `(k, ℓ)` with `k + ℓ = ½α'` builds `𝕌_3, 𝕌_4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KlChoice {
    /// `k = 0`, `ℓ = ½α'`
    #[default]
    Standard,
    /// `k = ½α'`, `ℓ = 0`
    Swapped,
}

#[derive(Debug, Clone)]
pub struct LorentzReport {
    pub n: usize,
    pub delta5: f64,
    /// `Δ_6` (identically zero when `n = 3`).
    pub delta6: Option<GramDet>,
    pub theta4: f64,
    /// Number of frame tractors that could be built, `n + 2` when generic.
    pub rank: usize,
    pub theta4_threshold: f64,
    pub density: Option<f64>,
    /// Frame route `K_1 … K_{n-2}`; `None` is zero by convention or not defined.
    pub k: Vec<Option<f64>>,
    /// Determinant route for `K_3 …` (entries for `K_1, K_2` are `None`).
    pub k_det: Vec<Option<f64>>,
    /// `K` list with the swapped `(k, ℓ)` choice.
    pub k_swapped: Vec<Option<f64>>,
    pub frame_gram_residual: f64,
    pub frenet_residual: f64,
    /// `K_2 + 2/5 K_1'' - 8/25 K_1² - ½ sgn Θ_4` for `n = 3`.
    pub dim3_residual: Option<f64>,
    pub helix: bool,
}

struct LorentzFrame {
    k: Vec<Option<f64>>,
    gram_residual: f64,
    frenet_residual: f64,
    dim3: Option<f64>,
}

/// Frame, curvatures and checks for a null curve in Lorentzian signature.
pub fn lorentz_null(ms: &MetricSpec, cs: &CurveSpec, t0: f64, order: usize) -> Result<LorentzReport> {
    let n = ms.dim();
    let (p, q) = ms.signature();
    if p.min(q) != 1 {
        return Err(Error::Unsupported(format!("Lorentzian signature required, got ({}, {})", p, q)));
    }
    let an = Analysis::new(ms, cs, t0, order, Some(1))?;
    let dets = an.determinants();
    let delta5 = dets.get(4).ok_or_else(missing)?.value;
    let delta6 = if n >= 4 { Some(*dets.get(5).ok_or_else(missing)?) } else { None };
    let th_jet = theta4(&an.gram)?;
    let th = th_jet.value();
    let th_tol = theta4_threshold(&an.gram);

    let rho = if n >= 4 {
        let d6 = delta6.expect("n >= 4");
        if d6.value < -d6.threshold {
            return Err(Error::Degenerate(format!("Δ_6 = {:e} < 0 on a null curve", d6.value)));
        }
        if d6.is_zero() {
            None
        } else {
            let j = an.gram.determinant_jets(6).pop().expect("six minors");
            Some(j.powf(1.0 / 6.0)?)
        }
    } else if th.abs() <= th_tol {
        None
    } else {
        let a = if th < 0.0 { -th_jet.clone() } else { th_jet.clone() };
        Some(a.powf(0.25)?)
    };

    let helix = delta6.map_or(true, |d| d.is_zero()) && th.abs() <= th_tol;
    let rank = if n >= 4 {
        (6..=n + 2)
            .find(|&i| dets.get(i - 1).map_or(true, |d| d.is_zero()))
            .map_or(n + 2, |i| i - 1)
    } else {
        5
    };
    let nk = if n >= 4 { n - 2 } else { 2 };
    let mut report = LorentzReport {
        n,
        delta5,
        delta6,
        theta4: th,
        theta4_threshold: th_tol,
        density: rho.as_ref().map(|r| r.value()),
        rank,
        k: vec![None; nk],
        k_det: vec![None; nk],
        k_swapped: vec![None; nk],
        frame_gram_residual: 0.0,
        frenet_residual: 0.0,
        dim3_residual: None,
        helix,
    };
    let Some(rho) = rho else {
        return Ok(report);
    };
    let main = lorentz_frame(&an, &rho, KlChoice::Standard, th.signum(), rank)?;
    let alt = lorentz_frame(&an, &rho, KlChoice::Swapped, th.signum(), rank)?;
    report.k = main.k;
    report.k_swapped = alt.k;
    report.frame_gram_residual = main.gram_residual;
    report.frenet_residual = main.frenet_residual;
    report.dim3_residual = main.dim3;
    if let Some(d6) = delta6 {
        let g1 = d6.value.powf(1.0 / 6.0);
        for i in 3..=n.saturating_sub(2) {
            if i + 4 > dets.len() {
                break;
            }
            let (a, b, c) = (dets[i + 1], dets[i + 3], dets[i + 2]);
            if a.is_zero() || b.is_zero() || c.is_zero() {
                break;
            }
            report.k_det[i - 1] = Some(frenet::clamped_sqrt(a.value * b.value, a.threshold * b.value.abs())? / (c.value * g1));
        }
    }
    Ok(report)
}

fn lorentz_frame(an: &Analysis, rho: &Jet, kl: KlChoice, theta_sign: f64, rank: usize) -> Result<LorentzFrame> {
    let cd = &an.cd;
    let n = an.dim();
    let total = if n >= 4 { rank } else { 5 };
    let s = frenet::s_derived_sequence(an, rho, total - 1)?;
    let p = |x: &TractorJet, y: &TractorJet| cd.pair(x, y);
    let alpha = p(&s[3], &s[3]);
    let beta = p(&s[4], &s[4]);
    let alpha1 = frenet::ds(&alpha, rho)?;
    let (kc, lc) = match kl {
        KlChoice::Standard => (Jet::zero(alpha1.order()), alpha1.scale(0.5)),
        KlChoice::Swapped => (alpha1.scale(0.5), Jet::zero(alpha1.order())),
    };
    let u3 = s[3]
        .scale(-1.0)
        .plus(&s[1].times(&alpha.scale(-0.5)))
        .plus(&s[0].times(&kc));
    let a2 = &alpha * &alpha;
    let (a2, b) = common(&a2, &beta);
    let u4 = s[4]
        .plus(&s[2].times(&alpha))
        .plus(&s[1].times(&lc))
        .plus(&s[0].times(&(a2 - b).scale(0.5)));
    let corner = vec![s[0].clone(), s[1].clone(), s[2].clone(), u3, u4];
    let mut fb = FrameBuilder::new(cd, corner, antidiag(5));
    for si in s.iter().take(total).skip(5) {
        fb.push_orthonormal(si)?;
    }
    let frame = fb.frame;
    let dframe: Vec<TractorJet> = frame
        .iter()
        .map(|u| Ok(cd.tractor_d(u)?.times(&rho.recip()?)))
        .collect::<Result<_>>()?;
    let pv = |x: &TractorJet, y: &TractorJet| cd.pair(x, y).value();
    let nk = if n >= 4 { n - 2 } else { 2 };
    let mut k = vec![None; nk];
    k[0] = Some(pv(&dframe[2], &frame[3]));
    k[1] = Some(pv(&dframe[3], &frame[4]));
    // curvatures past the rank of a partial frame stay unset
    for i in (3..=nk).take_while(|i| i + 3 < frame.len()) {
        k[i - 1] = Some(pv(&dframe[i + 2], &frame[i + 3]));
    }
    let kv = |i: usize| k[i - 1].unwrap_or(0.0);
    // right-hand sides of the Frenet system
    let m = frame.len();
    let mut coeff = DMatrix::<f64>::zeros(m, m);
    coeff[(0, 1)] = 1.0;
    coeff[(1, 2)] = 1.0;
    coeff[(2, 1)] = kv(1);
    coeff[(2, 3)] = -1.0;
    coeff[(3, 0)] = kv(2);
    coeff[(3, 2)] = -kv(1);
    coeff[(3, 4)] = -1.0;
    coeff[(4, 1)] = -kv(2);
    if m > 5 {
        coeff[(4, 5)] = 1.0;
        coeff[(5, 0)] = -1.0;
        if m > 6 {
            coeff[(5, 6)] = kv(3);
        }
        for i in 6..m {
            coeff[(i, i - 1)] = -kv(i - 3);
            if i + 1 < m {
                coeff[(i, i + 1)] = kv(i - 2);
            }
        }
    }
    let frenet_residual = frenet::system_residual(&frame, &dframe, &coeff);
    let gram_residual = fb_gram_residual(cd, &frame, &antidiag_plus_identity(m));
    let dim3 = if n == 3 {
        let k1 = alpha.scale(-0.5);
        let k1pp = frenet::ds(&frenet::ds(&k1, rho)?, rho)?;
        let k2 = kv(2);
        Some(k2 + 0.4 * k1pp.value() - 0.32 * k1.value() * k1.value() - 0.5 * theta_sign)
    } else {
        None
    };
    Ok(LorentzFrame {
        k,
        gram_residual,
        frenet_residual,
        dim3,
    })
}

fn antidiag(m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, m, |i, j| if i + j == m - 1 { 1.0 } else { 0.0 })
}

/// Antidiagonal 5×5 corner followed by the identity.
fn antidiag_plus_identity(m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, m, |i, j| {
        if i < 5 && j < 5 {
            if i + j == 4 {
                1.0
            } else {
                0.0
            }
        } else if i == j {
            1.0
        } else {
            0.0
        }
    })
}

fn fb_gram_residual(cd: &crate::geometry::CurvatureData, frame: &[TractorJet], want: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..frame.len() {
        for j in 0..frame.len() {
            let v = cd.pair(&frame[i], &frame[j]).value();
            worst = worst.max((v - want[(i, j)]).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samples;

    #[test]
    fn coefficient_recurrences() {
        assert_eq!(reparam_coefficients(0, 1), (1, 1, 1));
        assert_eq!(reparam_coefficients(1, 2), (3, 5, 3));
        for r in 0..=6usize {
            let (a, b, c) = reparam_coefficients(r, r + 1);
            let rr = r as i64;
            assert_eq!(2 * a, (rr + 1) * (rr + 2));
            assert_eq!(6 * b, (rr + 1) * (rr + 2) * (2 * rr + 3));
            assert_eq!(-8 * c, (rr + 1) * (rr + 2) * (rr * rr - rr - 4));
            assert_eq!(a * a + 2 * c, 3 * b);
        }
    }

    #[test]
    fn trivial_ode_has_zero_invariants() {
        let q = vec![Jet::zero(4); 6];
        let (t3, t4) = wilczynski_from_coeffs(&q, 7).unwrap();
        assert_eq!(t3.max_abs(), 0.0);
        assert_eq!(t4.max_abs(), 0.0);
    }

    #[test]
    fn lorentz_gram_display_and_theta4_on_a_null_curve() {
        let (ms, cs) = samples::null_curve(4, &[0.3, -0.2, 0.5], 0.0);
        let an = Analysis::new(&ms, &cs, 0.2, 13, None).unwrap();
        assert_eq!(an.r, 1);
        let g = |i, j| an.gram.get(i, j).value();
        let alpha = g(3, 3);
        let beta = g(4, 4);
        let a1 = an.gram.alpha().unwrap().derivative(1).unwrap();
        let a2 = an.gram.alpha().unwrap().derivative(2).unwrap();
        let b1 = an.gram.beta().unwrap().derivative(1).unwrap();
        let want = [
            [0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, -1.0, 0.0, alpha],
            [0.0, 0.0, 1.0, 0.0, -alpha, -1.5 * a1],
            [0.0, -1.0, 0.0, alpha, 0.5 * a1, 0.5 * a2 - beta],
            [1.0, 0.0, -alpha, 0.5 * a1, beta, 0.5 * b1],
        ];
        for (i, row) in want.iter().enumerate() {
            for (j, w) in row.iter().enumerate() {
                assert!((g(i, j) - w).abs() < 1e-8 * (1.0 + w.abs()), "({}, {}): {} vs {}", i, j, g(i, j), w);
            }
        }
        let th = theta4(&an.gram).unwrap().value();
        assert!((th + (25.0 * beta + 10.0 * a2 - 21.0 * alpha * alpha) / 25.0).abs() < 1e-9 * (1.0 + th.abs()));
        let w = wilczynski(&an.gram).unwrap();
        assert!(w.q_top().abs() < 1e-9);
        assert!(w.theta3.abs() < 1e-7);
        assert!((w.theta4 - th).abs() < 1e-7 * (1.0 + th.abs()));
        let (q2, q1, q0, qm) = q_closed_form(&an.gram).unwrap();
        assert!(q2.value().abs() < 1e-12);
        assert!((w.q[3].value() - q1.value()).abs() < 1e-8);
        assert!((w.q[2].value() - q0.value()).abs() < 1e-8);
        assert!((w.q[1].value() - qm.unwrap().value()).abs() < 1e-7);
        let d6 = an.determinants()[5].value;
        let gamma = an.gram.gamma().unwrap().value();
        let closed = gamma + a2 * alpha - 2.0 * beta * alpha - 2.25 * a1 * a1 + alpha.powi(3);
        assert!((d6 - closed).abs() < 1e-8 * (1.0 + d6.abs()));
    }

    #[test]
    fn null_cartan_helix() {
        let (ms, cs) = samples::null_cartan_helix(4, 0.0);
        let rep = helix_check(&ms, &cs, 0.3, 13, None).unwrap();
        assert!(rep.helix, "{:?}", rep);
        let (ms, cs) = samples::null_cartan_helix(4, 0.3);
        let rep = helix_check(&ms, &cs, 0.3, 13, None).unwrap();
        assert!(!rep.helix);
        assert!(rep.theta4.abs() > 1e3 * rep.theta4_threshold);
    }

    #[test]
    fn lorentz_frame_checks() {
        let (ms, cs) = samples::null_curve(5, &[0.3, -0.2, 0.5, 0.1], 0.2);
        let rep = lorentz_null(&ms, &cs, 0.1, 14).unwrap();
        assert!((rep.delta5 - 1.0).abs() < 1e-9);
        assert!(rep.delta6.unwrap().value > 0.0);
        assert!(rep.frame_gram_residual < 1e-8, "{}", rep.frame_gram_residual);
        assert!(rep.frenet_residual < 1e-7, "{}", rep.frenet_residual);
        let k1 = rep.k[0].unwrap();
        assert!((k1 - rep.k_swapped[0].unwrap()).abs() < 1e-8 * (1.0 + k1.abs()));
        for i in 2..rep.k.len() {
            let (a, b, c) = (rep.k[i].unwrap(), rep.k_swapped[i].unwrap(), rep.k_det[i].unwrap());
            assert!((a - b).abs() < 1e-8 * (1.0 + a.abs()));
            assert!((a - c).abs() < 1e-6 * (1.0 + a.abs()), "K{} {} vs {}", i + 1, a, c);
        }
    }

    #[test]
    fn dim3_relation() {
        let (ms, cs) = samples::null_curve(3, &[0.4, -0.3, 0.2], 0.0);
        let rep = lorentz_null(&ms, &cs, 0.1, 12).unwrap();
        assert!(rep.delta6.is_none());
        assert!(rep.dim3_residual.unwrap().abs() < 1e-6, "{:?}", rep);
        assert!(rep.frenet_residual < 1e-7);
    }
}
