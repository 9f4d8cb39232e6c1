//! Conformal circles, almost Einstein scales and the quantities they conserve.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{Env, Expr};
use crate::geometry::{CurvatureData, CurveSpec, MetricSpec};
use crate::jet::{dot, Jet, JetError};
use crate::nullcurves;
use crate::tractor::{self, Analysis, TractorJet, RANK_TOL};

/// Left minus right of the three circle equations at the base point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleResiduals {
    /// Coordinate norm of the vector residual of the third order equation.
    pub be5: f64,
    /// Residual of the scalar (parametrization) equation.
    pub be6: f64,
    /// Frobenius norm of the skew residual.
    pub be7: f64,
}

pub fn circle_residuals(cd: &CurvatureData) -> Result<CircleResiduals> {
    let n = cd.dim();
    let vel = cd.velocity_sequence(2)?;
    let val = |v: &[Jet]| v.iter().map(|x| x.value()).collect::<Vec<f64>>();
    let (u, u1, u2) = (val(&vel[0]), val(&vel[1]), val(&vel[2]));
    let g: Vec<Vec<f64>> = cd.g().iter().map(|r| r.iter().map(|x| x.value()).collect()).collect();
    let p: Vec<Vec<f64>> = cd.schouten()?.p.iter().map(|r| r.iter().map(|x| x.value()).collect()).collect();
    let ip = |a: &[f64], b: &[f64]| -> f64 {
        (0..n).map(|i| (0..n).map(|j| g[i][j] * a[i] * b[j]).sum::<f64>()).sum()
    };
    let lower = |a: &[f64]| -> Vec<f64> { (0..n).map(|i| (0..n).map(|j| g[i][j] * a[j]).sum()).collect() };
    let ginv: Vec<Vec<f64>> = cd.ginv.iter().map(|r| r.iter().map(|x| x.value()).collect()).collect();
    let pu_low: Vec<f64> = (0..n).map(|a| (0..n).map(|b| p[a][b] * u[b]).sum()).collect();
    let pu_up: Vec<f64> = (0..n).map(|a| (0..n).map(|b| ginv[a][b] * pu_low[b]).sum()).collect();
    let uu = ip(&u, &u);
    let uu1 = ip(&u, &u1);
    let u1u1 = ip(&u1, &u1);
    let puu: f64 = (0..n).map(|a| pu_low[a] * u[a]).sum();

    let be5 = (0..n)
        .map(|a| {
            let rhs = 3.0 / uu * uu1 * u1[a] - 1.5 / uu * u1u1 * u[a] + uu * pu_up[a] - 2.0 * puu * u[a];
            (u2[a] - rhs).powi(2)
        })
        .sum::<f64>()
        .sqrt();
    let be6 = ip(&u, &u2) - (3.0 / uu * uu1 * uu1 - 1.5 * u1u1 - uu * puu);
    let (ul, u1l, u2l) = (lower(&u), lower(&u1), lower(&u2));
    let skew = |x: &[f64], y: &[f64], a: usize, b: usize| 0.5 * (x[a] * y[b] - x[b] * y[a]);
    let mut be7 = 0.0;
    for a in 0..n {
        for b in 0..n {
            let r = skew(&ul, &u2l, a, b) - 3.0 / uu * uu1 * skew(&ul, &u1l, a, b) - uu * skew(&ul, &pu_low, a, b);
            be7 += r * r;
        }
    }
    Ok(CircleResiduals { be5, be6, be7: be7.sqrt() })
}

/// Conformal circle signals at one base point.
#[derive(Debug, Clone, PartialEq)]
pub struct CircleFlags {
    pub residuals: CircleResiduals,
    pub phi: f64,
    pub phi_threshold: f64,
    /// `Φ ≈ 0`.
    pub vertex: bool,
    /// Numerical rank of `𝕋, 𝕌, 𝕌', 𝕌''`.
    pub span_rank: usize,
    /// The span has rank three, so it is a parallel subbundle.
    pub rank3: bool,
    pub u2_norm: f64,
    pub alpha: f64,
    /// `𝕌'' ≈ 0` (which forces `α ≈ 0`): a projectively parametrized circle.
    pub projective: bool,
}

pub fn circle_classify(an: &Analysis, tol: f64) -> Result<CircleFlags> {
    if an.r != 0 {
        return Err(Error::Unsupported(format!("circle test for r = {} curves", an.r)));
    }
    let residuals = circle_residuals(&an.cd)?;
    let dets = an.determinants();
    let d4 = dets.get(3).ok_or(Error::Jet(JetError::OrderExhausted))?;
    let seq = an.seq.get(..4).ok_or(Error::Jet(JetError::OrderExhausted))?;
    let scale = seq[..3].iter().fold(1.0f64, |a, t| a.max(t.value_norm()));
    // unit rows, negligible ones dropped
    let rows: Vec<Vec<f64>> = seq
        .iter()
        .filter(|t| t.value_norm() > RANK_TOL * scale)
        .map(|t| t.values().iter().map(|x| x / t.value_norm()).collect())
        .collect();
    let w = seq[0].dim() + 2;
    let m = DMatrix::<f64>::from_fn(rows.len(), w, |i, j| rows[i][j]);
    let sv = m.singular_values();
    let smax = sv.max();
    let span_rank = sv.iter().filter(|&&s| s > RANK_TOL * smax).count();
    let u2_norm = seq[3].value_norm();
    let alpha = an.gram.alpha().map_or(f64::NAN, |a| a.value());
    Ok(CircleFlags {
        residuals,
        phi: -d4.value,
        phi_threshold: d4.threshold,
        vertex: d4.is_zero(),
        span_rank,
        rank3: span_rank == 3,
        u2_norm,
        alpha,
        projective: u2_norm <= tol * scale,
    })
}

/// `L(σ)` in the fixed scale with its residuals.
#[derive(Debug, Clone)]
pub struct EinsteinSplit {
    pub tractor: TractorJet,
    /// Largest coefficient of `D L(σ)` along the curve.
    pub parallel_residual: f64,
    /// Largest entry of the trace-free part of `∇_a∇_bσ + P_ab σ` along the curve.
    pub hessian_residual: f64,
}

/// `L(σ) = (σ, ∇^aσ, -(Δσ + Jσ)/n)`.
pub fn einstein_split(cd: &CurvatureData, sigma: &Expr) -> Result<EinsteinSplit> {
    let n = cd.dim();
    let ms = cd.metric();
    let coords = ms.coords();
    for v in sigma.variables() {
        if !coords.contains(&v) {
            return Err(Error::InvalidScene(format!("scale uses unknown variable '{}'", v)));
        }
    }
    let k = cd.order;
    let mut env = Env::new(k);
    for (c, xa) in coords.iter().zip(cd.x()) {
        env.set(c, xa.truncate(k));
    }
    let s = sigma.eval(&env)?;
    let d1: Vec<Expr> = coords.iter().map(|c| sigma.diff(c)).collect();
    let ds: Vec<Jet> = d1.iter().map(|e| e.eval(&env)).collect::<std::result::Result<_, _>>()?;
    let mut hess = vec![vec![Jet::zero(k); n]; n];
    for a in 0..n {
        for b in 0..n {
            let mut h = d1[a].diff(&coords[b]).eval(&env)?;
            for c in 0..n {
                h -= &cd.gamma[c][a][b].truncate(k) * &ds[c];
            }
            hess[a][b] = h;
        }
    }
    let sch = cd.schouten()?;
    let ginv: Vec<Vec<Jet>> = cd.ginv.iter().map(|r| r.iter().map(|x| x.truncate(k)).collect()).collect();
    let g: Vec<Vec<Jet>> = cd.g().iter().map(|r| r.iter().map(|x| x.truncate(k)).collect()).collect();
    let mut lap = Jet::zero(k);
    for a in 0..n {
        for b in 0..n {
            lap += &ginv[a][b] * &hess[a][b];
        }
    }
    let trace = lap + &sch.j.truncate(k) * &s;
    let mu: Vec<Jet> = (0..n).map(|a| dot(&ginv[a], &ds)).collect();
    let rho = trace.scale(-1.0 / n as f64);
    let mut hessian_residual: f64 = 0.0;
    for a in 0..n {
        for b in 0..n {
            let r = &hess[a][b] + &(&sch.p[a][b].truncate(k) * &s) - (&g[a][b] * &trace).scale(1.0 / n as f64);
            hessian_residual = hessian_residual.max(r.max_abs());
        }
    }
    let tractor = TractorJet { sigma: s, mu, rho };
    let d = cd.tractor_d(&tractor)?;
    let parallel_residual = std::iter::once(&d.sigma)
        .chain(&d.mu)
        .chain(std::iter::once(&d.rho))
        .fold(0.0f64, |m, j| m.max(j.max_abs()));
    Ok(EinsteinSplit {
        tractor,
        parallel_residual,
        hessian_residual,
    })
}

/// Constant metric of a flat scene at the base point, or `Unsupported`.
fn flat_metric(cd: &CurvatureData) -> Result<DMatrix<f64>> {
    if !cd.metric().is_constant() {
        return Err(Error::Unsupported("flat-model trivialization needs a constant metric".into()));
    }
    let n = cd.dim();
    Ok(DMatrix::from_fn(n, n, |a, b| cd.g()[a][b].value()))
}

/// Slots `(σ, μ, ρ)` at `x` to the constants `(a, b, c)` of the parallel field
/// `σ = a + η(b,x) + c η(x,x)/2, μ = b + c x, ρ = -c` through them.
pub fn flat_trivialization(eta: &DMatrix<f64>, x: &[Jet], t: &TractorJet) -> Vec<Jet> {
    let n = x.len();
    let k = t.order();
    let x: Vec<Jet> = x.iter().map(|v| v.truncate(k)).collect();
    let ip = |v: &[Jet], w: &[Jet]| -> Jet {
        let mut s = Jet::zero(k);
        for a in 0..n {
            for b in 0..n {
                if eta[(a, b)] != 0.0 {
                    s += (&v[a] * &w[b]).scale(eta[(a, b)]);
                }
            }
        }
        s
    };
    let c = -&t.rho;
    let b: Vec<Jet> = (0..n).map(|i| &t.mu[i] + &(&t.rho * &x[i])).collect();
    let a = &t.sigma - &ip(&t.mu, &x) - (&t.rho * &ip(&x, &x)).scale(0.5);
    let mut out = Vec::with_capacity(n + 2);
    out.push(a);
    out.extend(b);
    out.push(c);
    out
}

/// Inverse of [`flat_trivialization`].
pub fn flat_untrivialize(eta: &DMatrix<f64>, x: &[Jet], abc: &[Jet]) -> TractorJet {
    let n = x.len();
    let k = abc[0].order();
    let x: Vec<Jet> = x.iter().map(|v| v.truncate(k)).collect();
    let (a, b, c) = (&abc[0], &abc[1..=n], &abc[n + 1]);
    let mut bx = Jet::zero(k);
    let mut xx = Jet::zero(k);
    for i in 0..n {
        for j in 0..n {
            bx += (&b[i] * &x[j]).scale(eta[(i, j)]);
            xx += (&x[i] * &x[j]).scale(eta[(i, j)]);
        }
    }
    TractorJet {
        sigma: a + &bx + (c * &xx).scale(0.5),
        mu: (0..n).map(|i| &b[i] + &(c * &x[i])).collect(),
        rho: -c,
    }
}

/// Pairing matrix of the constant coordinates `(a, b, c)`: `η(b,b') - ac' - ca'`.
pub fn flat_pairing_matrix(eta: &DMatrix<f64>) -> DMatrix<f64> {
    let n = eta.nrows();
    let mut q = DMatrix::zeros(n + 2, n + 2);
    q[(0, n + 1)] = -1.0;
    q[(n + 1, 0)] = -1.0;
    q.view_mut((1, 1), (n, n)).copy_from(eta);
    q
}

/// Element of the conformal algebra acting on the constant coordinates `(a, b, c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatAdjointTractor {
    pub eta: DMatrix<f64>,
    pub k: DMatrix<f64>,
}

impl FlatAdjointTractor {
    /// Checks skew-symmetry `Q K + Kᵀ Q = 0`.
    pub fn new(eta: DMatrix<f64>, k: DMatrix<f64>) -> Result<Self> {
        let n = eta.nrows();
        if k.nrows() != n + 2 || k.ncols() != n + 2 {
            return Err(Error::InvalidScene(format!(
                "adjoint tractor must be {0}x{0}, got {1}x{2}",
                n + 2,
                k.nrows(),
                k.ncols()
            )));
        }
        let q = flat_pairing_matrix(&eta);
        let s = &q * &k + k.transpose() * &q;
        if s.amax() > 1e-12 * (1.0 + k.amax()) {
            return Err(Error::InvalidScene(format!(
                "adjoint tractor is not skew for the tractor metric (defect {:e})",
                s.amax()
            )));
        }
        Ok(FlatAdjointTractor { eta, k })
    }

    pub fn zero(eta: DMatrix<f64>) -> Self {
        let n = eta.nrows();
        FlatAdjointTractor { eta, k: DMatrix::zeros(n + 2, n + 2) }
    }

    /// `δa = -η(v,b)`, `δb = -c v`.
    pub fn translation(eta: DMatrix<f64>, v: &[f64]) -> Self {
        let n = eta.nrows();
        let mut k = DMatrix::zeros(n + 2, n + 2);
        for i in 0..n {
            for j in 0..n {
                k[(0, 1 + j)] -= v[i] * eta[(i, j)];
            }
            k[(1 + i, n + 1)] = -v[i];
        }
        FlatAdjointTractor { eta, k }
    }

    /// `δb = R b` with `η R` the elementary skew form in the `(i, j)` plane.
    pub fn rotation(eta: DMatrix<f64>, i: usize, j: usize) -> Self {
        let n = eta.nrows();
        let mut omega = DMatrix::zeros(n, n);
        omega[(i, j)] = 1.0;
        omega[(j, i)] = -1.0;
        let r = eta.clone().try_inverse().expect("nondegenerate metric") * omega;
        let mut k = DMatrix::zeros(n + 2, n + 2);
        k.view_mut((1, 1), (n, n)).copy_from(&r);
        FlatAdjointTractor { eta, k }
    }

    /// `δa = a`, `δc = -c`.
    pub fn dilation(eta: DMatrix<f64>) -> Self {
        let n = eta.nrows();
        let mut k = DMatrix::zeros(n + 2, n + 2);
        k[(0, 0)] = 1.0;
        k[(n + 1, n + 1)] = -1.0;
        FlatAdjointTractor { eta, k }
    }

    /// `𝕂(X, Y) = ⟨X, K Y⟩` on constant coordinates.
    pub fn bilinear(&self, x: &[Jet], y: &[Jet]) -> Jet {
        let m = x.len();
        let k = x[0].order().min(y[0].order());
        let qk = flat_pairing_matrix(&self.eta) * &self.k;
        let mut s = Jet::zero(k);
        for i in 0..m {
            for j in 0..m {
                if qk[(i, j)] != 0.0 {
                    s += (&x[i].truncate(k) * &y[j].truncate(k)).scale(qk[(i, j)]);
                }
            }
        }
        s
    }
}

/// `ℓ_a = U^b W_abcd U^c U'^d - 2 u² U^b ∇_[a P_b]c U^c` at the base point.
pub fn ell_form(cd: &CurvatureData) -> Result<Vec<f64>> {
    let n = cd.dim();
    let vel = cd.velocity_sequence(1)?;
    let u: Vec<f64> = vel[0].iter().map(|x| x.value()).collect();
    let u1: Vec<f64> = vel[1].iter().map(|x| x.value()).collect();
    let uu = cd.inner(&vel[0], &vel[0]).value();
    let w = cd.weyl()?;
    let np = cd.nabla_p()?;
    let mut ell = vec![0.0; n];
    for (a, e) in ell.iter_mut().enumerate() {
        let mut s = 0.0;
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    s += u[b] * w[a][b][c][d].value() * u[c] * u1[d];
                }
                let skew = 0.5 * (np[a][b][c].value() - np[b][a][c].value());
                s -= 2.0 * uu * u[b] * skew * u[c];
            }
        }
        *e = s;
    }
    Ok(ell)
}

/// What the conserved quantities are built from.
#[derive(Debug, Clone, Default)]
pub struct Providers {
    pub sigma: Option<Expr>,
    pub adjoint: Option<FlatAdjointTractor>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConservedOptions {
    pub order: usize,
    pub tol: f64,
    /// Pass to a projective parameter first when `α` is not already zero.
    pub reparametrize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConservedSample {
    pub t: f64,
    /// `α` in the given parameter.
    pub alpha: f64,
    /// The curve passes the circle (`r = 0`) or null helix test here.
    pub distinguished: bool,
    pub s: Option<f64>,
    pub ds: Option<f64>,
    pub k: Option<f64>,
    pub dk: Option<f64>,
    /// `𝕂(𝕌, 𝕌^{(2r+1)})`, equal to `k` when `r = 0`.
    pub k_literal: Option<f64>,
    pub dk_literal: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConservedReport {
    pub r: usize,
    pub reparametrized: bool,
    pub samples: Vec<ConservedSample>,
    /// `Some` only when the hypotheses hold at every sample.
    pub conserved: Option<bool>,
    pub warning: Option<String>,
}

/// `𝔰 = ⟨𝕌^{(2r+1)}, L(σ)⟩` and `𝔨 = 𝕂(𝕌^{(2r)}, 𝕌^{(2r+1)})` with their `t`-derivatives,
/// in a projective parameter when requested. For `r = 0` these are `⟨𝕌', 𝕊⟩` and `𝕂(𝕌, 𝕌')`.
pub fn conserved(
    ms: &MetricSpec,
    cs: &CurveSpec,
    r: Option<usize>,
    providers: &Providers,
    points: &[f64],
    opts: ConservedOptions,
) -> Result<ConservedReport> {
    let Some(&first) = points.first() else {
        return Ok(ConservedReport { r: r.unwrap_or(0), reparametrized: false, samples: vec![], conserved: None, warning: None });
    };
    let probe = Analysis::new(ms, cs, first, opts.order, r)?;
    let r = probe.r;
    if providers.adjoint.is_some() && !ms.is_constant() {
        return Err(Error::Unsupported("𝔨 is only available on flat scenes".into()));
    }
    let alphas: Vec<f64> = points
        .iter()
        .map(|&t| {
            let an = Analysis::new(ms, cs, t, 2 * r + 5, Some(r))?;
            Ok(an.gram.alpha().ok_or(Error::Jet(JetError::OrderExhausted))?.value())
        })
        .collect::<Result<_>>()?;
    let needs = alphas.iter().any(|a| a.abs() > opts.tol);
    let reparam = if opts.reparametrize && needs {
        Some(tractor::projective_reparametrize(ms, cs, points, opts.order, Some(r))?)
    } else {
        None
    };
    let mut samples = Vec::with_capacity(points.len());
    for (i, &t) in points.iter().enumerate() {
        let distinguished = nullcurves::helix_check(ms, cs, t, opts.order, Some(r))?.helix;
        let an = match &reparam {
            Some(pr) => Analysis::with_param(ms, cs, &pr.points[i].inverse()?, Some(r))?,
            None => Analysis::new(ms, cs, t, opts.order, Some(r))?,
        };
        let top = an.seq.get(2 * r + 2).ok_or(Error::Jet(JetError::OrderExhausted))?;
        if top.order() < 1 {
            return Err(Error::Jet(JetError::OrderExhausted));
        }
        let mut sample = ConservedSample {
            t,
            alpha: alphas[i],
            distinguished,
            s: None,
            ds: None,
            k: None,
            dk: None,
            k_literal: None,
            dk_literal: None,
        };
        if let Some(sigma) = &providers.sigma {
            let split = einstein_split(&an.cd, sigma)?;
            let s = an.cd.pair(top, &split.tractor);
            sample.s = Some(s.value());
            sample.ds = Some(s.derivative(1)?);
        }
        if let Some(adj) = &providers.adjoint {
            let eta = flat_metric(&an.cd)?;
            if (&eta - &adj.eta).amax() > 1e-12 {
                return Err(Error::InvalidScene("adjoint tractor built for a different metric".into()));
            }
            let triv = |x: &TractorJet| flat_trivialization(&eta, an.cd.x(), x);
            let ytop = triv(top);
            let k = adj.bilinear(&triv(&an.seq[2 * r + 1]), &ytop);
            let kl = adj.bilinear(&triv(&an.seq[1]), &ytop);
            sample.k = Some(k.value());
            sample.dk = Some(k.derivative(1)?);
            sample.k_literal = Some(kl.value());
            sample.dk_literal = Some(kl.derivative(1)?);
        }
        samples.push(sample);
    }
    let all = samples.iter().all(|s| s.distinguished);
    let projective = reparam.is_some() || !needs;
    let (conserved, warning) = if !all {
        (None, Some(if r == 0 { "curve is not a conformal circle" } else { "curve is not a conformal null helix" }.to_string()))
    } else if !projective {
        (None, Some("parameter is not projective".to_string()))
    } else {
        let ok = |v: Option<f64>, dv: Option<f64>| match (v, dv) {
            (Some(v), Some(dv)) => dv.abs() <= opts.tol * (1.0 + v.abs()),
            _ => true,
        };
        (Some(samples.iter().all(|s| ok(s.s, s.ds) && ok(s.k, s.dk))), None)
    };
    Ok(ConservedReport {
        r,
        reparametrized: reparam.is_some(),
        samples,
        conserved,
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;
    use crate::samples;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn flat3() -> MetricSpec {
        MetricSpec::flat(&["x", "y", "z"], 0)
    }

    #[test]
    fn circle_residuals_on_line_and_circle() {
        let cs = CurveSpec::parse(&["1 + 2*t", "-t", "0.5*t"]).unwrap();
        let cd = CurvatureData::new(&flat3(), &cs, 0.3, 4).unwrap();
        let r = circle_residuals(&cd).unwrap();
        assert!(r.be5 < 1e-14 && r.be6.abs() < 1e-14 && r.be7 < 1e-14);
        let (ms, cs) = samples::flat_circle(3, 1.0, "t");
        let cd = CurvatureData::new(&ms, &cs, 0.7, 4).unwrap();
        let r = circle_residuals(&cd).unwrap();
        assert!(r.be7 < 1e-14);
        assert!((r.be6 - 0.5).abs() < 1e-14);
        assert!((r.be5 - 0.5).abs() < 1e-14);
        let cs = CurveSpec::parse(&["0.6*cos(t)", "0.6*sin(t)", "0.8*t"]).unwrap();
        let cd = CurvatureData::new(&flat3(), &cs, 0.7, 4).unwrap();
        assert!(circle_residuals(&cd).unwrap().be7 > 0.1);
    }

    #[test]
    fn circles_on_the_sphere_solve_the_skew_equation() {
        // latitude circles of the stereographic sphere are round circles in the chart
        let ms = MetricSpec::round_sphere(&["x", "y", "z"]);
        let cs = CurveSpec::parse(&["0.4*cos(t + 0.3*t^2)", "0.4*sin(t + 0.3*t^2)", "0.2"]).unwrap();
        let cd = CurvatureData::new(&ms, &cs, 0.2, 4).unwrap();
        assert!(circle_residuals(&cd).unwrap().be7 < 1e-12);
    }

    #[test]
    fn classify_flags() {
        let (ms, cs) = samples::flat_circle(3, 1.5, "t + 0.2*t^3");
        let an = Analysis::new(&ms, &cs, 0.4, 9, None).unwrap();
        let f = circle_classify(&an, 1e-8).unwrap();
        assert!(f.vertex && f.rank3 && !f.projective);
        let (ms, cs) = samples::flat_line(&[0.1, 0.2, 0.3], &[1.0, -1.0, 2.0], "t");
        let an = Analysis::new(&ms, &cs, 0.4, 9, None).unwrap();
        let f = circle_classify(&an, 1e-10).unwrap();
        assert!(f.vertex && f.rank3 && f.projective);
        assert!(f.alpha.abs() < 1e-12);
        let cs = CurveSpec::parse(&["0.6*cos(t)", "0.6*sin(t)", "0.8*t"]).unwrap();
        let an = Analysis::new(&flat3(), &cs, 0.4, 9, None).unwrap();
        let f = circle_classify(&an, 1e-8).unwrap();
        assert!(!f.vertex && !f.rank3 && !f.projective);
        assert!((f.phi - 0.6f64.powi(2) * 0.8f64.powi(2)).abs() < 1e-12);
    }

    #[test]
    fn circle_signals_agree_under_mobius_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for i in 0..10 {
            let g = samples::random_mobius(&mut rng);
            let (ms, cs) = if i % 2 == 0 {
                samples::flat_circle(3, rng.gen_range(0.5..2.0), &g)
            } else {
                samples::flat_line(&[0.2, -0.1, 0.4], &[rng.gen_range(0.5..1.0), 0.3, -0.2], &g)
            };
            let an = Analysis::new(&ms, &cs, 0.1, 9, None).unwrap();
            let f = circle_classify(&an, 1e-8).unwrap();
            assert!(f.vertex && f.rank3, "{} {:?}", g, f);
            // U'' = 0 forces α = 0
            if f.projective {
                assert!(f.alpha.abs() < 1e-8);
            }
        }
        for _ in 0..5 {
            let (ms, cs) = samples::random_scene(&mut rng, 3);
            let an = Analysis::new(&ms, &cs, 0.1, 9, None).unwrap();
            let f = circle_classify(&an, 1e-8).unwrap();
            assert!(!f.vertex && !f.rank3);
        }
    }

    #[test]
    fn einstein_split_flat_and_sphere() {
        let cs = CurveSpec::parse(&["0.3 + t", "t^2", "sin(t)"]).unwrap();
        let cd = CurvatureData::new(&flat3(), &cs, 0.2, 6).unwrap();
        let e = einstein_split(&cd, &parse_expr("1").unwrap()).unwrap();
        let v = e.tractor.values();
        assert_eq!(v, vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(e.parallel_residual == 0.0 && e.hessian_residual == 0.0);
        let e = einstein_split(&cd, &parse_expr("1 + (x^2 + y^2 + z^2)/2").unwrap()).unwrap();
        let x = cs.point(0.2).unwrap();
        let v = e.tractor.values();
        assert!((v[0] - (1.0 + (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / 2.0)).abs() < 1e-14);
        for a in 0..3 {
            assert!((v[1 + a] - x[a]).abs() < 1e-14);
        }
        assert!((v[4] + 1.0).abs() < 1e-14);
        assert!(e.parallel_residual < 1e-12 && e.hessian_residual < 1e-12);
        // direct D: d/dt of the slots with Γ = P = 0
        let cd2 = CurvatureData::new(&flat3(), &cs, 0.2, 6).unwrap();
        let d = cd2.tractor_d(&e.tractor).unwrap();
        let u = cd2.u.iter().map(|x| x.value()).collect::<Vec<_>>();
        let dsig = (0..3).map(|a| x[a] * u[a]).sum::<f64>();
        assert!((e.tractor.sigma.derivative(1).unwrap() - dsig).abs() < 1e-13);
        assert!(d.value_norm() < 1e-13);

        let sphere = MetricSpec::round_sphere(&["x", "y", "z"]);
        let cd = CurvatureData::new(&sphere, &cs, 0.2, 6).unwrap();
        // σ = 1 is Einstein for the round metric; its ρ slot is -J/n = -1/2
        let e = einstein_split(&cd, &parse_expr("1").unwrap()).unwrap();
        assert!((e.tractor.rho.value() + 0.5).abs() < 1e-12);
        assert!(e.parallel_residual < 1e-10 && e.hessian_residual < 1e-10);
        // so is the flat scale, σ^{-2} g = δ
        let e = einstein_split(&cd, &parse_expr("2/(1 + x^2 + y^2 + z^2)").unwrap()).unwrap();
        assert!(e.parallel_residual < 1e-10 && e.hessian_residual < 1e-10);
        // a generic scale is not
        let e = einstein_split(&cd, &parse_expr("1 + x*y").unwrap()).unwrap();
        assert!(e.parallel_residual > 1e-3 && e.hessian_residual > 1e-3);
    }

    #[test]
    fn trivialization_properties() {
        let eta = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 1.0, 1.0]));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let jet = |rng: &mut ChaCha8Rng| Jet::constant(rng.gen_range(-1.0..1.0), 0);
        let zero = vec![Jet::constant(0.0, 0); 3];
        let t = TractorJet { sigma: jet(&mut rng), mu: (0..3).map(|_| jet(&mut rng)).collect(), rho: jet(&mut rng) };
        let abc = flat_trivialization(&eta, &zero, &t);
        assert_eq!(abc[0].value(), t.sigma.value());
        assert_eq!(abc[4].value(), -t.rho.value());
        // parallel field at two points
        let (a, b, c) = (0.3, [0.2, -0.5, 1.1], -0.7);
        for x in [[0.1, 0.2, 0.3], [-1.0, 0.5, 2.0]] {
            let xj: Vec<Jet> = x.iter().map(|v| Jet::constant(*v, 0)).collect();
            let xx: f64 = x.iter().map(|v| v * v).sum();
            let bx: f64 = (0..3).map(|i| b[i] * x[i]).sum();
            let t = TractorJet {
                sigma: Jet::constant(a + bx + c * xx / 2.0, 0),
                mu: (0..3).map(|i| Jet::constant(b[i] + c * x[i], 0)).collect(),
                rho: Jet::constant(-c, 0),
            };
            let abc = flat_trivialization(&eta, &xj, &t);
            assert!((abc[0].value() - a).abs() < 1e-12 && (abc[4].value() - c).abs() < 1e-12);
            for i in 0..3 {
                assert!((abc[1 + i].value() - b[i]).abs() < 1e-12);
            }
            let back = flat_untrivialize(&eta, &xj, &abc);
            assert!(back.minus(&t).value_norm() < 1e-12);
        }
    }

    #[test]
    fn generators_are_skew() {
        let eta = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, 1.0, 1.0, 1.0]));
        for g in [
            FlatAdjointTractor::translation(eta.clone(), &[0.3, -1.0, 0.2, 0.5]),
            FlatAdjointTractor::rotation(eta.clone(), 0, 1),
            FlatAdjointTractor::rotation(eta.clone(), 2, 3),
            FlatAdjointTractor::dilation(eta.clone()),
        ] {
            assert!(FlatAdjointTractor::new(eta.clone(), g.k.clone()).is_ok());
        }
        let mut bad = DMatrix::zeros(6, 6);
        bad[(1, 2)] = 1.0;
        assert!(FlatAdjointTractor::new(eta, bad).is_err());
    }

    #[test]
    fn ell_vanishes_on_conformally_flat_and_not_generally() {
        let cs = CurveSpec::parse(&["0.3 + t", "t^2", "sin(t)", "0.1*t^3"]).unwrap();
        let ms = MetricSpec::conformally_flat(&["x", "y", "z", "w"], 0, "exp(0.3*x - 0.2*y*z + 0.1*w^2)").unwrap();
        let cd = CurvatureData::new(&ms, &cs, 0.2, 5).unwrap();
        // W = 0 forces the Cotton tensor to vanish when n >= 4
        assert!(ell_form(&cd).unwrap().iter().all(|v| v.abs() < 1e-10));
        let sphere = MetricSpec::round_sphere(&["x", "y", "z", "w"]);
        let cd_s = CurvatureData::new(&sphere, &cs, 0.2, 5).unwrap();
        assert!(ell_form(&cd_s).unwrap().iter().all(|v| v.abs() < 1e-10));
        let flat = MetricSpec::flat(&["x", "y", "z", "w"], 0);
        let cd_f = CurvatureData::new(&flat, &cs, 0.2, 5).unwrap();
        assert!(ell_form(&cd_f).unwrap().iter().all(|v| *v == 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ms = samples::random_metric(&mut rng, 4);
        let cd = CurvatureData::new(&ms, &cs, 0.2, 5).unwrap();
        let ell = ell_form(&cd).unwrap();
        assert!(ell.iter().any(|v| v.abs() > 1e-6));
        // U^a ℓ_a = 0 from the skew symmetries of both terms
        let u: f64 = (0..4).map(|a| cd.u[a].value() * ell[a]).sum();
        assert!(u.abs() < 1e-10 * (1.0 + ell.iter().fold(0.0f64, |m, v| m.max(v.abs()))));
    }

    #[test]
    fn conserved_on_flat_circles() {
        let eta = DMatrix::identity(3, 3);
        let opts = ConservedOptions { order: 8, tol: 1e-7, reparametrize: true };
        let (ms, cs) = samples::flat_circle(3, 1.0, "t");
        let pts = [0.0, 0.4, 0.9];
        for sigma in ["1", "1 + (x^2 + y^2 + z^2)/2", "1 + x"] {
            let p = Providers { sigma: Some(parse_expr(sigma).unwrap()), adjoint: Some(FlatAdjointTractor::rotation(eta.clone(), 0, 1)) };
            let rep = conserved(&ms, &cs, None, &p, &pts, opts).unwrap();
            assert!(rep.reparametrized);
            assert_eq!(rep.conserved, Some(true), "{:?}", rep);
            assert!(rep.samples[0].k.unwrap().abs() > 1e-3);
        }
        // without the projective parameter the derivative does not vanish
        let p = Providers { sigma: Some(parse_expr("1 + x").unwrap()), adjoint: None };
        let raw = ConservedOptions { reparametrize: false, ..opts };
        let rep = conserved(&ms, &cs, None, &p, &pts, raw).unwrap();
        assert_eq!(rep.conserved, None);
        assert!(rep.samples.iter().any(|s| s.ds.unwrap().abs() > 1e-3));
        // a zero generator gives zero
        let p = Providers { sigma: None, adjoint: Some(FlatAdjointTractor::zero(eta.clone())) };
        let rep = conserved(&ms, &cs, None, &p, &pts, opts).unwrap();
        assert!(rep.samples.iter().all(|s| s.k == Some(0.0)));
        // translation along an affine line
        let (ms, cs) = samples::flat_line(&[0.0, 0.5, 0.0], &[1.0, 0.2, -0.3], "t");
        let p = Providers { sigma: Some(parse_expr("1").unwrap()), adjoint: Some(FlatAdjointTractor::translation(eta, &[1.0, 0.0, 0.5])) };
        let rep = conserved(&ms, &cs, None, &p, &pts, opts).unwrap();
        assert_eq!(rep.conserved, Some(true));
        assert!(rep.samples.iter().all(|s| s.s.unwrap().abs() < 1e-14));
    }

    #[test]
    fn non_circles_get_a_warning() {
        let cs = CurveSpec::parse(&["0.6*cos(t)", "0.6*sin(t)", "0.8*t"]).unwrap();
        let p = Providers { sigma: Some(parse_expr("1").unwrap()), adjoint: None };
        let opts = ConservedOptions { order: 8, tol: 1e-7, reparametrize: true };
        let rep = conserved(&flat3(), &cs, None, &p, &[0.0, 0.3], opts).unwrap();
        assert!(rep.conserved.is_none() && rep.warning.is_some());
        let ms = MetricSpec::round_sphere(&["x", "y", "z"]);
        let p = Providers { sigma: None, adjoint: Some(FlatAdjointTractor::dilation(DMatrix::identity(3, 3))) };
        assert!(matches!(conserved(&ms, &cs, None, &p, &[0.0], opts), Err(Error::Unsupported(_))));
    }

    #[test]
    fn null_helix_quantities() {
        let (ms, cs) = samples::null_cartan_helix(4, 0.0);
        let eta = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, 1.0, 1.0, 1.0]));
        let p = Providers { sigma: Some(parse_expr("1").unwrap()), adjoint: Some(FlatAdjointTractor::rotation(eta, 0, 1)) };
        let opts = ConservedOptions { order: 13, tol: 1e-6, reparametrize: true };
        let rep = conserved(&ms, &cs, Some(1), &p, &[0.0, 0.2, 0.5], opts).unwrap();
        assert_eq!(rep.r, 1);
        assert_eq!(rep.conserved, Some(true), "{:?}", rep);
    }

    #[test]
    fn pairing_is_preserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let eta = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, 1.0, 1.0]));
        let ms = MetricSpec::flat(&["x", "y", "z"], 1);
        let cs = CurveSpec::parse(&["2*t", "0.3 + t^2", "sin(t)"]).unwrap();
        let cd = CurvatureData::new(&ms, &cs, 0.4, 3).unwrap();
        let rt = |rng: &mut ChaCha8Rng| TractorJet {
            sigma: Jet::from_coeffs((0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()),
            mu: (0..3).map(|_| Jet::from_coeffs((0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())).collect(),
            rho: Jet::from_coeffs((0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()),
        };
        let (x, y) = (rt(&mut rng), rt(&mut rng));
        let lhs = cd.pair(&x, &y);
        let (a, b) = (flat_trivialization(&eta, cd.x(), &x), flat_trivialization(&eta, cd.x(), &y));
        let q = flat_pairing_matrix(&eta);
        let mut rhs = Jet::zero(3);
        for i in 0..5 {
            for j in 0..5 {
                rhs += (&a[i] * &b[j]).scale(q[(i, j)]);
            }
        }
        assert!((&lhs - &rhs).max_abs() < 1e-12);
    }
}
