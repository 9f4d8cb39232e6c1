//! Tractor Frenet frame and conformal curvatures for curves with a
//! nondegenerate tangent (`r = 0`), plus the classical Frenet oracle.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::{CurvatureData, CurveSpec, MetricSpec};
use crate::jet::{Jet, JetError};
use crate::tractor::{Analysis, TractorJet, RANK_TOL};

/// `f' / ρ`, the derivative with respect to the parameter with density `ρ`.
pub fn ds(f: &Jet, rho: &Jet) -> Result<Jet> {
    let d = f.shift_derivative()?;
    let k = d.order().min(rho.order());
    Ok(&d.truncate(k) / &rho.truncate(k))
}

/// `S_0 = ρ^{r+1} 𝕋`, `S_{j+1} = ρ^{-1} D S_j` for `j < m`: the derived sequence with respect
/// to the parameter `s` with `ds = ρ dt`, computed pointwise.
pub fn s_derived_sequence(an: &Analysis, rho: &Jet, m: usize) -> Result<Vec<TractorJet>> {
    let w = rho.powi(an.r as i32 + 1)?;
    let inv = rho.recip()?;
    let mut out = vec![an.lift().times(&w)];
    for _ in 0..m {
        let last = out.last().expect("nonempty");
        if last.order() == 0 {
            return Err(Error::Jet(JetError::OrderExhausted));
        }
        let next = an.cd.tractor_d(last)?.times(&inv);
        out.push(next);
    }
    Ok(out)
}

/// `sqrt(x)` for `x >= -tol`, treating small negatives as zero.
pub fn clamped_sqrt(x: f64, tol: f64) -> Result<f64> {
    if x >= 0.0 {
        Ok(x.sqrt())
    } else if x >= -tol {
        Ok(0.0)
    } else {
        Err(Error::Degenerate(format!("negative radicand {:e} (misclassified curve?)", x)))
    }
}

/// Largest slot deviation of `D_s 𝕌_i` from `Σ_j c_ij 𝕌_j`, relative to the frame size.
pub fn system_residual(frame: &[TractorJet], dframe: &[TractorJet], coeff: &DMatrix<f64>) -> f64 {
    let scale = frame.iter().fold(1.0f64, |m, u| m.max(u.value_norm()));
    let vals: Vec<Vec<f64>> = frame.iter().map(|u| u.values()).collect();
    let mut worst = 0.0f64;
    for (i, du) in dframe.iter().enumerate() {
        let got = du.values();
        for (s, g) in got.iter().enumerate() {
            let want: f64 = (0..frame.len()).map(|j| coeff[(i, j)] * vals[j][s]).sum();
            worst = worst.max((g - want).abs());
        }
    }
    worst / scale
}

/// Incremental pseudo-orthonormalization against a frame with known Gram matrix.
pub struct FrameBuilder<'a> {
    cd: &'a CurvatureData,
    pub frame: Vec<TractorJet>,
    gram: DMatrix<f64>,
    /// `⟨V_i, V_i⟩` for each orthonormalized member, in order.
    pub norms: Vec<f64>,
}

impl<'a> FrameBuilder<'a> {
    pub fn new(cd: &'a CurvatureData, corner: Vec<TractorJet>, gram: DMatrix<f64>) -> Self {
        FrameBuilder {
            cd,
            frame: corner,
            gram,
            norms: Vec::new(),
        }
    }

    fn project(&self, s: &TractorJet) -> TractorJet {
        let m = self.frame.len();
        let ginv = self.gram.clone().try_inverse().expect("ideal Gram is invertible");
        let pairs: Vec<Jet> = self.frame.iter().map(|f| self.cd.pair(f, s)).collect();
        let mut v = s.clone();
        for j in 0..m {
            let mut c = Jet::zero(pairs[0].order());
            for k in 0..m {
                if ginv[(j, k)] != 0.0 {
                    c += pairs[k].scale(ginv[(j, k)]);
                }
            }
            v = v.minus(&self.frame[j].times(&c));
        }
        v
    }

    /// Appends `V / sqrt|⟨V,V⟩|` where `V` is `s` with its frame components removed
    /// (twice, for stability). Returns `⟨V, V⟩`.
    pub fn push_orthonormal(&mut self, s: &TractorJet) -> Result<f64> {
        let v = self.project(&self.project(s));
        let vv = self.cd.pair(&v, &v);
        let scale = s.value_norm().powi(2).max(1.0);
        if vv.value().abs() <= 1e-14 * scale {
            return Err(Error::IsotropicStep(format!(
                "⟨V,V⟩ = {:e} at frame index {}",
                vv.value(),
                self.frame.len()
            )));
        }
        let sign = vv.value().signum();
        let nrm = if sign < 0.0 { -vv.clone() } else { vv.clone() };
        let u = v.times(&nrm.sqrt()?.recip()?);
        let m = self.frame.len();
        let mut g = DMatrix::zeros(m + 1, m + 1);
        g.view_mut((0, 0), (m, m)).copy_from(&self.gram);
        g[(m, m)] = sign;
        self.gram = g;
        self.frame.push(u);
        self.norms.push(vv.value());
        Ok(vv.value())
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }
}

/// Numeric tractor frame at the base point.
#[derive(Debug, Clone)]
pub struct FrameBundle {
    /// Slot values `(σ, μ, ρ)` of `𝕌_0 …`.
    pub frame: Vec<Vec<f64>>,
    /// Pairings of the computed frame.
    pub gram: DMatrix<f64>,
    /// Largest deviation from the ideal Gram matrix.
    pub gram_residual: f64,
}

#[derive(Debug, Clone)]
pub struct CurvatureReport {
    pub phi: f64,
    /// Number of independent derived tractors (`n + 2` for generic curves).
    pub rank: usize,
    /// `K_1 … K_{n-1}` from the frame; `None` marks zero by convention.
    pub k_frame: Vec<Option<f64>>,
    /// The same from Gram determinants and `Φ` jets.
    pub k_det: Vec<Option<f64>>,
    /// `K_i = sqrt(⟨V_{i+2},V_{i+2}⟩ / ⟨V_{i+1},V_{i+1}⟩)`, `i >= 2`.
    pub k_v: Vec<Option<f64>>,
    pub frenet_residual: Option<f64>,
    pub frame: Option<FrameBundle>,
}

impl CurvatureReport {
    /// Largest relative disagreement between the frame and determinant routes.
    pub fn route_disagreement(&self) -> f64 {
        self.k_frame
            .iter()
            .zip(&self.k_det)
            .filter_map(|(a, b)| Some((a.as_ref()?, b.as_ref()?)))
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs() / (1.0 + a.abs().max(b.abs()))))
    }
}

/// `K_1` in an arbitrary parametrization from jets of `Φ` and `α`.
pub fn k1_from_phi(phi: &Jet, alpha: &Jet) -> Result<f64> {
    let p = phi.value();
    let p1 = phi.derivative(1)?;
    let p2 = phi.derivative(2)?;
    let a = alpha.value();
    Ok(-0.5 * p.powf(-2.5) * (p * p * a - 0.5 * p * p2 + 9.0 / 16.0 * p1 * p1))
}

/// Conformal curvatures of a curve with `r = 0`.
///
/// Definite signature gives the full frame and both routes; indefinite signature
/// only `K_1`, which needs no choices.
pub fn curvatures(ms: &MetricSpec, cs: &CurveSpec, t0: f64, order: usize) -> Result<CurvatureReport> {
    let an = Analysis::new(ms, cs, t0, order, Some(0))?;
    curvatures_of(&an)
}

pub fn curvatures_of(an: &Analysis) -> Result<CurvatureReport> {
    if an.r != 0 {
        return Err(Error::Unsupported(format!("Frenet frame for r = {} curves", an.r)));
    }
    let n = an.dim();
    let (p, q) = an.cd.metric().signature();
    let definite = p.min(q) == 0;
    let dets = an.determinants();
    let phi = an.phi().ok_or(Error::Jet(JetError::OrderExhausted))?;
    let d4 = dets.get(3).ok_or(Error::Jet(JetError::OrderExhausted))?;
    if d4.is_zero() {
        return Err(Error::Vertex(format!("Φ = {:e} at t = {}", phi.value(), an.cd.t0)));
    }
    let alpha = an.gram.alpha().expect("present when Φ is");
    let nk = n - 1;
    let mut k_det = vec![None; nk];
    k_det[0] = Some(k1_from_phi(&phi, alpha)?);
    let rank = (4..=n + 2)
        .find(|&i| dets.get(i - 1).map_or(true, |d| d.is_zero()))
        .map_or(n + 2, |i| i - 1);
    if definite {
        let q4 = (-d4.value).powf(0.25);
        for i in 2..=nk {
            if i + 3 > rank {
                break;
            }
            let (a, b, c) = (dets[i], dets[i + 2], dets[i + 1]);
            k_det[i - 1] = Some(clamped_sqrt(a.value * b.value, a.threshold * b.value.abs())? / (-c.value * q4));
        }
    }

    let abs_phi = if phi.value() < 0.0 { -phi.clone() } else { phi.clone() };
    let rho = abs_phi.powf(0.25)?;
    let count = if definite { rank } else { 3 };
    let s = s_derived_sequence(an, &rho, count - 1)?;
    let cd = &an.cd;
    let s2s2 = cd.pair(&s[2], &s[2]);
    let u2 = s[2].scale(-1.0).minus(&s[0].times(&s2s2.scale(0.5)));
    let corner = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
    let mut fb = FrameBuilder::new(cd, vec![s[0].clone(), s[1].clone(), u2], corner);
    let mut k_frame = vec![None; nk];
    let mut k_v = vec![None; nk];
    if !definite {
        let du1 = cd.tractor_d(&fb.frame[1])?.times(&rho.recip()?);
        k_frame[0] = Some(cd.pair(&du1, &fb.frame[2]).value());
        return Ok(CurvatureReport {
            phi: phi.value(),
            rank,
            k_frame,
            k_det,
            k_v,
            frenet_residual: None,
            frame: None,
        });
    }
    for si in s.iter().skip(3) {
        fb.push_orthonormal(si)?;
    }
    let inv = rho.recip()?;
    let frame = fb.frame.clone();
    let dframe: Vec<TractorJet> = frame
        .iter()
        .map(|u| Ok(cd.tractor_d(u)?.times(&inv)))
        .collect::<Result<_>>()?;
    let pv = |x: &TractorJet, y: &TractorJet| cd.pair(x, y).value();
    let m = frame.len();
    k_frame[0] = Some(pv(&dframe[1], &frame[2]));
    for i in 2..=nk {
        if i + 2 < m {
            k_frame[i - 1] = Some(pv(&dframe[i + 1], &frame[i + 2]));
        }
    }
    // norms[j] = ⟨V_{j+3}, V_{j+3}⟩
    let vv = |i: usize| fb.norms.get(i.wrapping_sub(3)).copied();
    for i in 2..=nk {
        let top = vv(i + 2);
        let bottom = if i + 1 == 3 { Some(1.0) } else { vv(i + 1) };
        if let (Some(a), Some(b)) = (top, bottom) {
            k_v[i - 1] = Some((a / b).sqrt());
        }
    }
    let kv = |i: usize| k_frame.get(i.wrapping_sub(1)).copied().flatten().unwrap_or(0.0);
    let mut coeff = DMatrix::<f64>::zeros(m, m);
    coeff[(0, 1)] = 1.0;
    coeff[(1, 0)] = kv(1);
    coeff[(1, 2)] = -1.0;
    coeff[(2, 1)] = -kv(1);
    if m > 3 {
        coeff[(2, 3)] = -1.0;
        coeff[(3, 0)] = 1.0;
        if m > 4 {
            coeff[(3, 4)] = kv(2);
        }
        for i in 4..m {
            coeff[(i, i - 1)] = -kv(i - 2);
            if i + 1 < m {
                coeff[(i, i + 1)] = kv(i - 1);
            }
        }
    }
    let frenet_residual = system_residual(&frame, &dframe, &coeff);
    let gram = DMatrix::from_fn(m, m, |i, j| pv(&frame[i], &frame[j]));
    let gram_residual = (&gram - fb.gram()).abs().max();
    Ok(CurvatureReport {
        phi: phi.value(),
        rank,
        k_frame,
        k_det,
        k_v,
        frenet_residual: Some(frenet_residual),
        frame: Some(FrameBundle {
            frame: frame.iter().map(|u| u.values()).collect(),
            gram,
            gram_residual,
        }),
    })
}

/// Classical Frenet curvatures `κ_1 … κ_{n-1}` of the curve for the metric itself.
/// Once the osculating flag stops growing the remaining curvatures are zero.
pub fn riemannian_frenet_oracle(ms: &MetricSpec, cs: &CurveSpec, t0: f64, order: usize) -> Result<Vec<f64>> {
    let cd = CurvatureData::new(ms, cs, t0, order)?;
    let n = cd.dim();
    if order < n + 1 {
        return Err(Error::Jet(JetError::OrderExhausted));
    }
    let u = cd.u.clone();
    let speed2 = cd.inner(&u, &u);
    if !(speed2.value() > 0.0) {
        return Err(Error::Degenerate("classical Frenet frame needs a space-like tangent".into()));
    }
    let inv_speed = speed2.sqrt()?.recip()?;
    let d_s = |v: &[Jet]| -> Result<Vec<Jet>> {
        let dv = cd.cov_deriv(v)?;
        let k = dv[0].order();
        let f = inv_speed.truncate(k);
        Ok(dv.iter().map(|x| x * &f).collect())
    };
    let scale_vec = |v: &[Jet], f: &Jet| -> Vec<Jet> {
        let k = v[0].order().min(f.order());
        v.iter().map(|x| &x.truncate(k) * &f.truncate(k)).collect()
    };
    let mut e: Vec<Vec<Jet>> = vec![scale_vec(&u, &inv_speed)];
    let mut w = e[0].clone();
    for _ in 1..n {
        w = d_s(&w)?;
        let mut v = w.clone();
        for _pass in 0..2 {
            for ej in &e {
                let c = cd.inner(&v, ej);
                let k = v[0].order().min(ej[0].order());
                v = v.iter().zip(ej).map(|(a, b)| a.truncate(k) - &b.truncate(k) * &c.truncate(k)).collect();
            }
        }
        let nv = cd.inner(&v, &v);
        let scale = cd.inner(&w, &w).value().abs().max(1.0);
        if nv.value() <= RANK_TOL * RANK_TOL * scale {
            break;
        }
        e.push(scale_vec(&v, &nv.sqrt()?.recip()?));
    }
    let mut kappa = vec![0.0; n - 1];
    for i in 0..e.len() - 1 {
        let de = d_s(&e[i])?;
        kappa[i] = cd.inner(&de, &e[i + 1]).value();
    }
    Ok(kappa)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samples;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn helix(a: f64, b: f64) -> CurveSpec {
        CurveSpec::parse(&[&format!("{a}*cos(t)"), &format!("{a}*sin(t)"), &format!("{b}*t")]).unwrap()
    }

    #[test]
    fn helix_curvatures() {
        let flat = MetricSpec::flat(&["x", "y", "z"], 0);
        for (a, b) in [(0.6, 0.8), (0.8, 0.6)] {
            let rep = curvatures(&flat, &helix(a, b), 0.4, 9).unwrap();
            let k1 = -a / (2.0 * b);
            let k2 = (b / a as f64).sqrt();
            for k in [&rep.k_frame, &rep.k_det] {
                assert!((k[0].unwrap() - k1).abs() < 1e-8, "{:?}", rep);
                assert!((k[1].unwrap() - k2).abs() < 1e-8, "{:?}", rep);
            }
            assert!((rep.k_v[1].unwrap() - k2).abs() < 1e-8);
            assert!(rep.frenet_residual.unwrap() < 1e-8);
            assert!(rep.frame.as_ref().unwrap().gram_residual < 1e-9);
            let kappa = riemannian_frenet_oracle(&flat, &helix(a, b), 0.4, 6).unwrap();
            assert!((kappa[0] - a).abs() < 1e-12 && (kappa[1] - b).abs() < 1e-12);
        }
    }

    #[test]
    fn helix_third_frame_tractor() {
        // with κ' = 0 and P = 0 the third frame tractor is (0, κ1κ2 e3/√Φ, 0)
        let (a, b) = (0.6f64, 0.8f64);
        let flat = MetricSpec::flat(&["x", "y", "z"], 0);
        let t0 = 0.4f64;
        let rep = curvatures(&flat, &helix(a, b), t0, 9).unwrap();
        let u3 = &rep.frame.unwrap().frame[3];
        let e3 = [b * t0.sin(), -b * t0.cos(), a];
        let want: Vec<f64> = e3.iter().map(|x| a * b * x / (a * b)).collect();
        assert!(u3[0].abs() < 1e-10 && u3[4].abs() < 1e-10);
        for i in 0..3 {
            assert!((u3[i + 1] - want[i]).abs() < 1e-10, "{:?} vs {:?}", u3, want);
        }
    }

    #[test]
    fn s_sequence_matches_closed_forms() {
        let ms = MetricSpec::round_sphere(&["x", "y", "z"]);
        let cs = CurveSpec::parse(&["0.3*t + 0.1", "sin(t)", "0.2*t^2"]).unwrap();
        let an = Analysis::new(&ms, &cs, 0.4, 9, None).unwrap();
        let phi = an.phi().unwrap();
        let rho = phi.powf(0.25).unwrap();
        let s = s_derived_sequence(&an, &rho, 2).unwrap();
        let lp = phi.ln().unwrap().derivative(1).unwrap();
        let want1 = an.u(0).plus(&an.lift().scale(0.25 * lp));
        let diff = s[1].minus(&want1).value_norm();
        assert!(diff < 1e-12);
        let f = phi.value().powf(0.25);
        let a = an.gram.alpha().unwrap().value();
        let u2 = s[2].scale(-1.0).minus(&s[0].scale(0.5 * an.cd.pair(&s[2], &s[2]).value()));
        let want2 = an
            .u(1)
            .plus(&an.u(0).scale(0.25 * lp))
            .plus(&an.lift().scale(0.5 * a + lp * lp / 32.0))
            .scale(-1.0 / f);
        assert!(u2.minus(&want2).value_norm() < 1e-10);
    }

    #[test]
    fn generic_scenes_agree_across_routes() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for n in [3, 4] {
            for _ in 0..3 {
                let (ms, cs) = samples::random_scene(&mut rng, n);
                let rep = curvatures(&ms, &cs, 0.1, n + 6).unwrap();
                assert_eq!(rep.rank, n + 2);
                assert!(rep.route_disagreement() < 1e-6, "{:?}", rep);
                assert!(rep.frenet_residual.unwrap() < 1e-7, "{:?}", rep.frenet_residual);
                for i in 1..n - 1 {
                    assert!(rep.k_det[i].unwrap() > 0.0);
                    let (a, b) = (rep.k_v[i].unwrap(), rep.k_det[i].unwrap());
                    assert!((a - b).abs() < 1e-7 * (1.0 + a.abs()));
                }
            }
        }
    }

    #[test]
    fn k2_only_sees_four_derivatives() {
        // K_2 in n = 3 has order 4: a t^5 perturbation leaves it unchanged
        let flat = MetricSpec::flat(&["x", "y", "z"], 0);
        let base = ["0.6*cos(t)", "0.5*sin(t) + 0.1*t^2", "0.8*t"];
        let rep = curvatures(&flat, &CurveSpec::parse(&base).unwrap(), 0.0, 9).unwrap();
        let pert = CurveSpec::parse(&[base[0], base[1], "0.8*t + 0.7*t^5"]).unwrap();
        let rep2 = curvatures(&flat, &pert, 0.0, 9).unwrap();
        let (a, b) = (rep.k_det[1].unwrap(), rep2.k_det[1].unwrap());
        assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()), "{} {}", a, b);
        // while a t^4 term does change it
        let pert = CurveSpec::parse(&[base[0], base[1], "0.8*t + 0.7*t^4"]).unwrap();
        let rep3 = curvatures(&flat, &pert, 0.0, 9).unwrap();
        assert!((rep3.k_det[1].unwrap() - a).abs() > 1e-6);
    }

    #[test]
    fn arc_length_k1_and_vertex() {
        let flat = MetricSpec::flat(&["x", "y", "z"], 0);
        let line = CurveSpec::parse(&["t", "2*t", "0"]).unwrap();
        assert!(matches!(curvatures(&flat, &line, 0.0, 9), Err(Error::Vertex(_))));
        // Φ constant (helix): K_1 = -α / (2 √Φ)
        let an = Analysis::new(&flat, &helix(0.6, 0.8), 0.0, 9, None).unwrap();
        let a = an.gram.alpha().unwrap().value();
        assert!((a - 0.36).abs() < 1e-12);
        let k1 = k1_from_phi(&an.phi().unwrap(), an.gram.alpha().unwrap()).unwrap();
        assert!((k1 + 0.5 * a / 0.48).abs() < 1e-12);
    }

    #[test]
    fn riemannian_oracle_alpha_identity() {
        // ⟨𝕌',𝕌'⟩ = κ1² + 2P(e1,e1) for a unit-speed equator on the round sphere
        let ms = MetricSpec::round_sphere(&["x", "y", "z"]);
        let cs = CurveSpec::parse(&["cos(t)", "sin(t)", "0"]).unwrap();
        let kappa = riemannian_frenet_oracle(&ms, &cs, 0.3, 5).unwrap();
        assert!(kappa.iter().all(|k| k.abs() < 1e-10), "{:?}", kappa);
        let an = Analysis::new(&ms, &cs, 0.3, 6, None).unwrap();
        assert!((an.gram.alpha().unwrap().value() - 1.0).abs() < 1e-10);
        let circle = CurveSpec::parse(&["2*cos(t/2)", "2*sin(t/2)", "0"]).unwrap();
        let flat = MetricSpec::flat(&["x", "y", "z"], 0);
        let k = riemannian_frenet_oracle(&flat, &circle, 0.3, 5).unwrap();
        assert!((k[0] - 0.5).abs() < 1e-12 && k[1] == 0.0);
    }

    #[test]
    fn first_normal_has_unit_norm_in_arc_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (ms, cs) = samples::random_scene(&mut rng, 4);
        let rep = curvatures(&ms, &cs, 0.2, 10).unwrap();
        let g = &rep.frame.unwrap().gram;
        assert!((g[(3, 3)] - 1.0).abs() < 1e-9);
    }
}
