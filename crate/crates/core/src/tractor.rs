//! Tractor lift of a curve, its derived sequence, Gram data and relative
//! invariants, null order, Schwarzian and reparametrizations.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::expr::{Env, Expr};
use crate::geometry::{CurvatureData, CurveSpec, MetricSpec, PARAM};
use crate::jet::{Jet, JetError};
use crate::jetmat::{self, JetMat};
use crate::nullcurves;

/// Relative zero threshold for Gram determinants and related invariants.
pub const RANK_TOL: f64 = 1e-8;

/// Default jet order for a dimension and signature.
///
/// `n + 6` suffices for curves with a nondegenerate tangent; each possible
/// null order adds three more (two extra derivatives in the lift chain and one
/// in the pseudo-arc-length density).
pub fn default_order(n: usize, signature: (usize, usize)) -> usize {
    n + 6 + 3 * signature.0.min(signature.1)
}

/// A standard tractor along the curve in the splitting of the fixed scale.
#[derive(Debug, Clone, PartialEq)]
pub struct TractorJet {
    pub sigma: Jet,
    pub mu: Vec<Jet>,
    pub rho: Jet,
}

impl TractorJet {
    pub fn zero(n: usize, order: usize) -> Self {
        TractorJet {
            sigma: Jet::zero(order),
            mu: vec![Jet::zero(order); n],
            rho: Jet::zero(order),
        }
    }

    pub fn order(&self) -> usize {
        self.sigma.order()
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn truncate(&self, order: usize) -> Self {
        TractorJet {
            sigma: self.sigma.truncate(order),
            mu: self.mu.iter().map(|m| m.truncate(order)).collect(),
            rho: self.rho.truncate(order),
        }
    }

    /// Slot values at the base point, ordered `(σ, μ^1..μ^n, ρ)`.
    pub fn values(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.mu.len() + 2);
        v.push(self.sigma.value());
        v.extend(self.mu.iter().map(|m| m.value()));
        v.push(self.rho.value());
        v
    }

    fn map(&self, f: impl Fn(&Jet) -> Jet) -> Self {
        TractorJet {
            sigma: f(&self.sigma),
            mu: self.mu.iter().map(&f).collect(),
            rho: f(&self.rho),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|j| j.scale(s))
    }

    /// Product with a scalar jet, at the common order.
    pub fn times(&self, f: &Jet) -> Self {
        let k = self.order().min(f.order());
        let f = f.truncate(k);
        self.map(|j| &j.truncate(k) * &f)
    }

    pub fn plus(&self, other: &TractorJet) -> Self {
        let k = self.order().min(other.order());
        TractorJet {
            sigma: self.sigma.truncate(k) + other.sigma.truncate(k),
            mu: self
                .mu
                .iter()
                .zip(&other.mu)
                .map(|(a, b)| a.truncate(k) + b.truncate(k))
                .collect(),
            rho: self.rho.truncate(k) + other.rho.truncate(k),
        }
    }

    pub fn minus(&self, other: &TractorJet) -> Self {
        self.plus(&other.scale(-1.0))
    }

    /// Euclidean norm of the slot values (coordinate size, not the tractor metric).
    pub fn value_norm(&self) -> f64 {
        self.values().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `(σ̂, μ̂, ρ̂)` in the scale of `f^2 g`, given `f` and `Υ_a` along the curve
    /// and `g^{ab}` of the original scale.
    pub fn rescale(&self, f: &Jet, upsilon: &[Jet], ginv: &JetMat) -> TractorJet {
        let k = self.order();
        let f = f.truncate(k);
        let finv = f.recip().expect("positive rescale factor");
        let ups: Vec<Jet> = upsilon.iter().map(|u| u.truncate(k)).collect();
        let ginv = jetmat::truncate(ginv, k);
        let up: Vec<Jet> = ginv.iter().map(|row| crate::jet::dot(row, &ups)).collect();
        let norm2 = crate::jet::dot(&ups, &up);
        let sigma = &f * &self.sigma;
        let mu = (0..self.dim())
            .map(|a| &(&self.mu[a] + &(&up[a] * &self.sigma)) * &finv)
            .collect();
        let rho = &(&(&self.rho - &crate::jet::dot(&ups, &self.mu)) - &(&norm2 * &self.sigma).scale(0.5)) * &finv;
        TractorJet { sigma, mu, rho }
    }
}

impl CurvatureData {
    /// Tractor connection along the curve, `D = U^c ∇_c`; lowers the order by one.
    pub fn tractor_d(&self, x: &TractorJet) -> Result<TractorJet> {
        let k = x.order();
        if k == 0 {
            return Err(Error::Jet(JetError::OrderExhausted));
        }
        let n = self.dim();
        let al = self.at_order(k - 1);
        self.schouten()?;
        let (pu_low, pu_up) = (al.pu_low.as_ref().expect("n >= 3"), al.pu_up.as_ref().expect("n >= 3"));
        let xt = x.truncate(k - 1);
        let mut sigma = x.sigma.shift_derivative()?;
        sigma -= crate::jet::dot(&al.u_low, &xt.mu);
        let mut mu = Vec::with_capacity(n);
        for a in 0..n {
            let mut m = x.mu[a].shift_derivative()?;
            for c in 0..n {
                m += &al.a[a][c] * &xt.mu[c];
            }
            m += &al.u[a] * &xt.rho;
            m += &pu_up[a] * &xt.sigma;
            mu.push(m);
        }
        let mut rho = x.rho.shift_derivative()?;
        rho -= crate::jet::dot(pu_low, &xt.mu);
        Ok(TractorJet { sigma, mu, rho })
    }

    /// Tractor metric `g(μ,ν) + σπ + ρτ` at the common order.
    pub fn pair(&self, x: &TractorJet, y: &TractorJet) -> Jet {
        let k = x.order().min(y.order());
        let (x, y) = (x.truncate(k), y.truncate(k));
        self.inner(&x.mu, &y.mu) + &x.sigma * &y.rho + &x.rho * &y.sigma
    }

    /// Numeric tractor metric at the base point in slot coordinates.
    pub fn tractor_metric_values(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n + 2, n + 2);
        m[(0, n + 1)] = 1.0;
        m[(n + 1, 0)] = 1.0;
        for a in 0..n {
            for b in 0..n {
                m[(a + 1, b + 1)] = self.g()[a][b].value();
            }
        }
        m
    }

    /// Scale for nullity tests of `g(v, w)`: `|v| |w| max|g_ab|` at the base point.
    pub(crate) fn inner_scale(&self, v: &[Jet], w: &[Jet]) -> f64 {
        let nv = v.iter().map(|x| x.value() * x.value()).sum::<f64>().sqrt();
        let nw = w.iter().map(|x| x.value() * x.value()).sum::<f64>().sqrt();
        let gmax = self.g().iter().flatten().fold(0.0f64, |m, x| m.max(x.value().abs()));
        nv * nw * gmax * self.dim() as f64
    }
}

/// Lift `𝕋 = (0, 0, u^{-1})` with `u = sqrt|g(U^{(r)}, U^{(r)})|`.
pub fn tractor_lift(cd: &CurvatureData, r: usize) -> Result<TractorJet> {
    let vel = cd.velocity_sequence(r)?;
    let ur = &vel[r];
    let nrm = cd.inner(ur, ur);
    let scale = cd.inner_scale(ur, ur);
    if !(nrm.value().abs() > RANK_TOL * scale.max(f64::MIN_POSITIVE)) {
        return Err(Error::DegenerateLift(format!(
            "|U^({})|^2 = {:e} vanishes at t = {} (null geodesic direction or wrong r)",
            r,
            nrm.value(),
            cd.t0
        )));
    }
    let abs = if nrm.value() < 0.0 { -nrm } else { nrm };
    let uinv = abs.sqrt()?.recip()?;
    let n = cd.dim();
    let k = uinv.order();
    Ok(TractorJet {
        sigma: Jet::zero(k),
        mu: vec![Jet::zero(k); n],
        rho: uinv,
    })
}

/// `𝕋, 𝕌 = D𝕋, 𝕌', …` up to `D^m 𝕋`, i.e. `m + 1` tractors.
pub fn derived_sequence(cd: &CurvatureData, r: usize, m: usize) -> Result<Vec<TractorJet>> {
    let lift = tractor_lift(cd, r)?;
    if lift.order() < m {
        return Err(Error::Jet(JetError::OrderExhausted));
    }
    let mut seq = vec![lift];
    for _ in 0..m {
        let next = cd.tractor_d(seq.last().expect("nonempty"))?;
        seq.push(next);
    }
    Ok(seq)
}

/// A Gram determinant value together with its zero threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GramDet {
    pub value: f64,
    /// `RANK_TOL` times the size `Δ_i` would have with row `i` independent of the earlier rows.
    pub threshold: f64,
}

impl GramDet {
    pub fn is_zero(&self) -> bool {
        self.value.abs() <= self.threshold
    }
}

/// Pairings `⟨𝕋^{(i)}, 𝕋^{(j)}⟩` of a derived sequence.
#[derive(Debug, Clone)]
pub struct GramTable {
    pub r: usize,
    pub entries: Vec<Vec<Jet>>,
    /// `ε = ⟨𝕌^{(r)}, 𝕌^{(r)}⟩ = ±1`
    pub eps: f64,
}

pub fn gram_table(cd: &CurvatureData, seq: &[TractorJet], r: usize) -> Result<GramTable> {
    let m = seq.len();
    let mut entries = vec![Vec::<Jet>::with_capacity(m); m];
    for i in 0..m {
        for j in 0..m {
            let v = if j < i {
                entries[j][i].clone()
            } else {
                cd.pair(&seq[i], &seq[j])
            };
            entries[i].push(v);
        }
    }
    let e = entries
        .get(r + 1)
        .map(|row| row[r + 1].value())
        .ok_or(Error::Jet(JetError::OrderExhausted))?;
    if !((e.abs() - 1.0).abs() < 1e-6) {
        return Err(Error::Degenerate(format!("⟨U^({r}),U^({r})⟩ = {e}, expected ±1")));
    }
    Ok(GramTable {
        r,
        entries,
        eps: e.signum(),
    })
}

impl GramTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> &Jet {
        &self.entries[i][j]
    }

    fn diag(&self, k: usize) -> Option<&Jet> {
        self.entries.get(k).map(|row| &row[k])
    }

    /// `α = ⟨𝕌^{(r+1)}, 𝕌^{(r+1)}⟩`
    pub fn alpha(&self) -> Option<&Jet> {
        self.diag(self.r + 2)
    }

    /// `β = ⟨𝕌^{(r+2)}, 𝕌^{(r+2)}⟩`
    pub fn beta(&self) -> Option<&Jet> {
        self.diag(self.r + 3)
    }

    /// `γ = ⟨𝕌^{(r+3)}, 𝕌^{(r+3)}⟩`
    pub fn gamma(&self) -> Option<&Jet> {
        self.diag(self.r + 4)
    }

    pub fn values(&self, size: usize) -> DMatrix<f64> {
        DMatrix::from_fn(size, size, |i, j| self.entries[i][j].value())
    }

    /// `Δ_1 … Δ_upto` at the base point via LU of the constant-term blocks.
    pub fn determinants(&self, upto: usize) -> Vec<GramDet> {
        let upto = upto.min(self.len());
        // rows of the leading block below size 2r + 3 are only nonzero through column 2r + 3
        let width = upto.max(2 * self.r + 3).min(self.len());
        let full = self.values(width);
        // Each Δ_k is judged against the size it would have if row k were independent:
        // the previous determinant times the magnitude of row k.
        let mut scale = 1.0;
        let mut out: Vec<GramDet> = Vec::with_capacity(upto);
        for i in 1..=upto {
            let rowmax = full.row(i - 1).columns(0, i.max(2 * self.r + 3).min(width)).amax();
            let scale_i = scale * rowmax;
            let value = full.view((0, 0), (i, i)).clone_owned().lu().determinant();
            let det = GramDet {
                value,
                threshold: RANK_TOL * scale_i,
            };
            scale = if det.is_zero() { scale_i } else { value.abs() };
            out.push(det);
        }
        out
    }

    /// Jets of `Δ_1 … Δ_upto`, at the order of the last row involved.
    pub fn determinant_jets(&self, upto: usize) -> Vec<Jet> {
        let upto = upto.min(self.len());
        let k = self.entries[upto - 1][upto - 1].order();
        let block: JetMat = (0..upto)
            .map(|i| (0..upto).map(|j| self.entries[i][j].truncate(k)).collect())
            .collect();
        jetmat::leading_minors(&block)
    }
}

/// Smallest `r` for which `U^{(r)}` is not null while `U, …, U^{(r-1)}` are null
/// and independent, searched up to `max_r`.
pub fn r_null_classify(cd: &CurvatureData, max_r: usize) -> Result<usize> {
    let vel = cd.velocity_sequence(max_r.min(cd.order - 1))?;
    let n = cd.dim();
    for r in 0..=max_r.min(vel.len() - 1) {
        let ur = &vel[r];
        let nrm = cd.inner(ur, ur).value();
        let scale = cd.inner_scale(ur, ur);
        if r == 0 && scale == 0.0 {
            return Err(Error::Degenerate(format!("irregular point: U = 0 at t = {}", cd.t0)));
        }
        if nrm.abs() <= RANK_TOL * scale.max(f64::MIN_POSITIVE) {
            continue;
        }
        if r > 0 {
            let m = DMatrix::from_fn(n, r, |a, i| vel[i][a].value());
            let sv = m.svd(false, false).singular_values;
            let top = sv.iter().fold(0.0f64, |s, v| s.max(*v));
            if sv.iter().any(|v| *v <= 1e-8 * top) {
                return Err(Error::Degenerate(format!(
                    "null vectors U..U^({}) are dependent at t = {}",
                    r - 1,
                    cd.t0
                )));
            }
            // consequences of nullity: g(U^(i), U^(j)) vanishes below the antidiagonal i + j = 2r
            // and alternates along it
            for i in 0..=2 * r {
                for j in 0..=(2 * r - i) {
                    if i.max(j) >= vel.len() {
                        continue;
                    }
                    let v = cd.inner(&vel[i], &vel[j]).value();
                    let want = if i + j == 2 * r {
                        if (r as i64 - i as i64) % 2 == 0 {
                            nrm
                        } else {
                            -nrm
                        }
                    } else {
                        0.0
                    };
                    let sc = cd.inner_scale(&vel[i], &vel[j]).max(nrm.abs());
                    if (v - want).abs() > 1e-6 * sc {
                        return Err(Error::Degenerate(format!(
                            "null-order relations fail at t = {}: g(U^({}),U^({})) = {:e}, expected {:e}",
                            cd.t0, i, j, v, want
                        )));
                    }
                }
            }
        }
        return Ok(r);
    }
    Err(Error::Degenerate(format!(
        "all of U..U^({}) are null at t = {} (∞-null)",
        max_r, cd.t0
    )))
}

/// Everything derived from the tractor lift at one base point.
#[derive(Debug)]
pub struct Analysis {
    pub cd: CurvatureData,
    pub r: usize,
    pub seq: Vec<TractorJet>,
    pub gram: GramTable,
}

impl Analysis {
    /// `r = None` classifies the null order first (bounded by `min(p, q)`).
    pub fn new(ms: &MetricSpec, cs: &CurveSpec, t0: f64, order: usize, r: Option<usize>) -> Result<Self> {
        Analysis::from_data(CurvatureData::new(ms, cs, t0, order)?, r)
    }

    pub fn with_param(ms: &MetricSpec, cs: &CurveSpec, param: &Jet, r: Option<usize>) -> Result<Self> {
        Analysis::from_data(CurvatureData::with_param(ms, cs, param)?, r)
    }

    pub fn from_data(cd: CurvatureData, r: Option<usize>) -> Result<Self> {
        let (p, q) = cd.metric().signature();
        let r = match r {
            Some(r) => r,
            None => r_null_classify(&cd, p.min(q))?,
        };
        if cd.order < r + 2 {
            return Err(Error::Jet(JetError::OrderExhausted));
        }
        let m = cd.order - 1 - r;
        let seq = derived_sequence(&cd, r, m)?;
        let gram = gram_table(&cd, &seq, r)?;
        Ok(Analysis { cd, r, seq, gram })
    }

    pub fn dim(&self) -> usize {
        self.cd.dim()
    }

    /// `Δ_1 … Δ_{n+2}` (as far as the sequence reaches).
    pub fn determinants(&self) -> Vec<GramDet> {
        self.gram.determinants(self.dim() + 2)
    }

    /// `Φ = β - α²` for `r = 0`.
    pub fn phi(&self) -> Option<Jet> {
        if self.r != 0 {
            return None;
        }
        let a = self.gram.alpha()?;
        let b = self.gram.beta()?;
        let k = b.order();
        Some(b - &(a * a).truncate(k))
    }

    /// `𝕌^{(k)}`, i.e. `D^{k+1} 𝕋`.
    pub fn u(&self, k: usize) -> &TractorJet {
        &self.seq[k + 1]
    }

    pub fn lift(&self) -> &TractorJet {
        &self.seq[0]
    }
}

/// Which relative invariant defines the arc-length density.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityKind {
    /// `Φ^{1/4}`
    Phi,
    /// `|Δ_{2r+4}|^{1/(2r+4)}`
    Delta(usize),
    /// `|Θ_4|^{1/4}` for null curves in dimension 3
    Theta4,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Density {
    pub kind: DensityKind,
    /// The invariant itself (`Φ`, `Δ_{2r+4}` or `Θ_4`).
    pub invariant: f64,
    pub threshold: f64,
    /// `None` at a vertex (invariant below threshold).
    pub density: Option<f64>,
}

pub fn phi_and_density(an: &Analysis) -> Result<Density> {
    let n = an.dim();
    let r = an.r;
    let dets = an.determinants();
    let (kind, invariant, threshold, weight) = if r == 0 {
        let phi = an.phi().ok_or(Error::Jet(JetError::OrderExhausted))?;
        let d4 = dets.get(3).ok_or(Error::Jet(JetError::OrderExhausted))?;
        (DensityKind::Phi, phi.value(), d4.threshold, 4.0)
    } else if n >= 2 * r + 2 {
        let d = dets
            .get(2 * r + 3)
            .ok_or(Error::Jet(JetError::OrderExhausted))?;
        (DensityKind::Delta(2 * r + 4), d.value, d.threshold, (2 * r + 4) as f64)
    } else {
        let th = nullcurves::theta4(&an.gram)?;
        let scale = an.gram.alpha().map(|a| a.value().abs()).unwrap_or(0.0);
        let b = an.gram.beta().map(|b| b.value().abs()).unwrap_or(0.0);
        (DensityKind::Theta4, th.value(), RANK_TOL * (1.0 + scale * scale + b), 4.0)
    };
    let density = (invariant.abs() > threshold).then(|| invariant.abs().powf(1.0 / weight));
    Ok(Density {
        kind,
        invariant,
        threshold,
        density,
    })
}

/// `S(g) = g'''/g' - 3/2 (g''/g')²` from the jet of `g`; order drops by three.
pub fn schwarzian_of_jet(g: &Jet) -> Result<Jet> {
    let g1 = g.shift_derivative()?;
    let g2 = g1.shift_derivative()?;
    let g3 = g2.shift_derivative()?;
    let k = g3.order();
    if g1.value() == 0.0 || g1.value().abs() < 1e-14 * g.max_abs() {
        return Err(Error::Degenerate("critical point of the reparametrization".into()));
    }
    let g1 = g1.truncate(k);
    let q = &g2.truncate(k) / &g1;
    Ok(&g3 / &g1 - (&q * &q).scale(1.5))
}

/// Schwarzian of `g(t)` about `t0` as a jet of the given order.
pub fn schwarzian(g: &Expr, t0: f64, order: usize) -> Result<Jet> {
    schwarzian_of_jet(&eval_param_fn(g, t0, order + 3)?)
}

fn eval_param_fn(g: &Expr, t0: f64, order: usize) -> Result<Jet> {
    if let Some(v) = g.variables().into_iter().find(|v| v != PARAM) {
        return Err(Error::InvalidScene(format!("reparametrization uses variable `{}`", v)));
    }
    Ok(g.eval(&Env::new(order).with(PARAM, Jet::variable(t0, order)))?)
}

/// Deviations from the reparametrization laws at one base point.
#[derive(Debug, Clone, PartialEq)]
pub struct ReparamReport {
    pub gprime: f64,
    pub schwarzian: f64,
    /// `|α̃ - g'^{-2}(α - 2εB_{r+1}S)|`, relative
    pub alpha: f64,
    /// `|β̃ - g'^{-4}(β - 4Sα + 4S²)|`, relative (`r = 0` only)
    pub beta: Option<f64>,
    /// `𝕋̃ = g'^{r+1}𝕋` and the `𝕌̃, 𝕌̃'` laws, max slot deviation relative to slot size
    pub tractors: f64,
    /// `Ũ''` law with the Schwarzian (`r = 0` only)
    pub second: Option<f64>,
    /// `(i, |Δ̃_i / (g'^{-i(i-2r-3)} Δ_i) - 1|)` for nonvanishing `Δ_i`
    pub weights: Vec<(usize, f64)>,
    /// `|Θ̃_4 - g'^{-4} Θ_4|`, relative
    pub theta4: Option<f64>,
}

impl ReparamReport {
    pub fn worst(&self) -> f64 {
        let mut w = self.alpha.max(self.tractors);
        for v in [self.beta, self.second, self.theta4].into_iter().flatten() {
            w = w.max(v);
        }
        self.weights.iter().fold(w, |m, (_, v)| m.max(*v))
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + a.abs().max(b.abs()))
}

fn max_slot_dev(a: &TractorJet, b: &TractorJet) -> f64 {
    let scale = 1.0 + a.value_norm().max(b.value_norm());
    a.values()
        .iter()
        .zip(b.values())
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
        / scale
}

/// Jet of the old parameter `t(τ)` about `τ0 = g(t0)` for the new parameter `τ = g(t)`.
pub fn inverse_param(g: &Expr, t0: f64, order: usize) -> Result<Jet> {
    let gj = eval_param_fn(g, t0, order)?;
    if !(gj.coeffs().get(1).copied().unwrap_or(0.0) > 0.0) {
        return Err(Error::InvalidScene(format!("reparametrization has g'({}) <= 0", t0)));
    }
    Ok(gj.invert(t0)?)
}

pub fn reparametrize_check(
    ms: &MetricSpec,
    cs: &CurveSpec,
    g: &Expr,
    t0: f64,
    order: usize,
    r: Option<usize>,
) -> Result<ReparamReport> {
    let old = Analysis::new(ms, cs, t0, order, r)?;
    let r = old.r;
    let new = Analysis::with_param(ms, cs, &inverse_param(g, t0, order)?, Some(r))?;
    let gj = eval_param_fn(g, t0, order)?;
    let g1 = gj.derivative(1)?;
    let g2 = gj.derivative(2)?;
    let g3 = gj.derivative(3)?;
    let s_jet = schwarzian_of_jet(&gj)?;
    let s = s_jet.value();
    let eps = old.gram.eps;
    let (_, b_r1, _) = nullcurves::reparam_coefficients(r, r + 1);

    let missing = || Error::Jet(JetError::OrderExhausted);
    let alpha = old.gram.alpha().ok_or_else(missing)?.value();
    let alpha_t = new.gram.alpha().ok_or_else(missing)?.value();
    let alpha_res = rel(alpha_t, g1.powi(-2) * (alpha - 2.0 * eps * b_r1 as f64 * s));

    let beta = if r == 0 {
        let b = old.gram.beta().ok_or_else(missing)?.value();
        let bt = new.gram.beta().ok_or_else(missing)?.value();
        Some(rel(bt, g1.powi(-4) * (b - 4.0 * s * alpha + 4.0 * s * s)))
    } else {
        None
    };

    // 𝕋̃ = g'^{r+1} 𝕋 and 𝕌̃^{(k)} for k = 0, 1 from the general law with A_k, B_k, C_k
    let tval = old.lift().scale(g1.powi(r as i32 + 1));
    let mut tractors = max_slot_dev(new.lift(), &tval);
    for k in 0..=1usize {
        let (ak, bk, ck) = nullcurves::reparam_coefficients(r, k);
        let prev = if k == 0 { old.lift() } else { old.u(k - 1) };
        let mut want = old.u(k).plus(&prev.scale(ak as f64 * g2 / g1));
        if k == 1 {
            want = want.plus(&old.lift().scale(bk as f64 * g3 / g1 - ck as f64 * g2 * g2 / (g1 * g1)));
        }
        let want = want.scale(g1.powi(r as i32 - k as i32));
        tractors = tractors.max(max_slot_dev(new.u(k), &want));
    }
    let second = if r == 0 {
        let s1 = s_jet.derivative(1)?;
        let want = old
            .u(2)
            .plus(&old.u(0).scale(2.0 * s))
            .plus(&old.lift().scale(s1))
            .scale(g1.powi(-2));
        Some(max_slot_dev(new.u(2), &want))
    } else {
        None
    };

    let d_old = old.determinants();
    let d_new = new.determinants();
    let mut weights = Vec::new();
    for i in (2 * r + 4)..=d_old.len().min(d_new.len()) {
        let (a, b) = (d_old[i - 1], d_new[i - 1]);
        if a.is_zero() {
            continue;
        }
        let w = (i * (i - 2 * r - 3)) as i32;
        weights.push((i, (b.value / (g1.powi(-w) * a.value) - 1.0).abs()));
    }
    let theta4 = match (nullcurves::theta4(&old.gram), nullcurves::theta4(&new.gram)) {
        (Ok(a), Ok(b)) => Some(rel(b.value(), g1.powi(-4) * a.value())),
        _ => None,
    };
    Ok(ReparamReport {
        gprime: g1,
        schwarzian: s,
        alpha: alpha_res,
        beta,
        tractors,
        second,
        weights,
        theta4,
    })
}

/// Local projective parameter at one base point.
#[derive(Debug, Clone)]
pub struct ProjectivePoint {
    pub t: f64,
    /// Jet of the new parameter `τ = g(t)` about `t`.
    pub g: Jet,
    /// RK4 steps used to reach this point from the first base point.
    pub steps: usize,
}

impl ProjectivePoint {
    /// Jet of `t(τ)` about `τ0 = g(t)`, for building the reparametrized curve.
    pub fn inverse(&self) -> Result<Jet> {
        Ok(self.g.invert(self.t)?)
    }
}

#[derive(Debug, Clone)]
pub struct ProjectiveReparam {
    pub r: usize,
    pub points: Vec<ProjectivePoint>,
}

/// `(α(t), ε)` with the smallest order that determines them.
fn alpha_value(ms: &MetricSpec, cs: &CurveSpec, t: f64, r: usize) -> Result<(f64, f64)> {
    let an = Analysis::new(ms, cs, t, 2 * r + 4, Some(r))?;
    let a = an.gram.alpha().ok_or(Error::Jet(JetError::OrderExhausted))?;
    Ok((a.value(), an.gram.eps))
}

/// Solves `S(g) = α / (2 ε B_{r+1})` for `h = ln g'` with `h = h' = 0` at the
/// first base point; along the way RK4 carries `(g, h, h')`, locally the
/// Taylor recurrence gives exact jets of `g` to the requested order.
pub fn projective_reparametrize(
    ms: &MetricSpec,
    cs: &CurveSpec,
    base_points: &[f64],
    order: usize,
    r: Option<usize>,
) -> Result<ProjectiveReparam> {
    let Some(&first) = base_points.first() else {
        return Ok(ProjectiveReparam { r: r.unwrap_or(0), points: Vec::new() });
    };
    let probe = Analysis::new(ms, cs, first, 2 * r.unwrap_or(0) + 4 + 1, r)?;
    let r = probe.r;
    let (_, b_r1, _) = nullcurves::reparam_coefficients(r, r + 1);
    let eps = probe.gram.eps;
    let c = 1.0 / (2.0 * eps * b_r1 as f64);

    let rhs = |t: f64, state: [f64; 3]| -> Result<[f64; 3]> {
        let (a, _) = alpha_value(ms, cs, t, r)?;
        let h1 = state[2];
        Ok([state[1].exp(), h1, 0.5 * h1 * h1 + c * a])
    };
    let rk4 = |t0: f64, t1: f64, s0: [f64; 3], steps: usize| -> Result<[f64; 3]> {
        let h = (t1 - t0) / steps as f64;
        let mut s = s0;
        let mut t = t0;
        let add = |s: [f64; 3], k: [f64; 3], f: f64| [s[0] + f * k[0], s[1] + f * k[1], s[2] + f * k[2]];
        for _ in 0..steps {
            let k1 = rhs(t, s)?;
            let k2 = rhs(t + h / 2.0, add(s, k1, h / 2.0))?;
            let k3 = rhs(t + h / 2.0, add(s, k2, h / 2.0))?;
            let k4 = rhs(t + h, add(s, k3, h))?;
            for i in 0..3 {
                s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            t += h;
        }
        Ok(s)
    };

    // state (g, h, h') at the first point: g(t0) = t0 keeps τ = t for projective input
    let mut state = [first, 0.0, 0.0];
    let mut t_prev = first;
    let mut points = Vec::with_capacity(base_points.len());
    for &t in base_points {
        let mut steps = 0;
        if t != t_prev {
            let mut n = 8usize;
            let mut prev = rk4(t_prev, t, state, n)?;
            loop {
                n *= 2;
                let next = rk4(t_prev, t, state, n)?;
                let change = (0..3).fold(0.0f64, |m, i| m.max((next[i] - prev[i]).abs() / (1.0 + next[i].abs())));
                prev = next;
                if change < 1e-9 {
                    break;
                }
                if n > 1 << 14 {
                    return Err(Error::Integration(format!(
                        "RK4 did not settle between t = {} and t = {}",
                        t_prev, t
                    )));
                }
            }
            state = prev;
            steps = n;
        }
        points.push(local_projective_jet(ms, cs, t, order, r, c, state)?);
        points.last_mut().expect("pushed").steps = steps;
        t_prev = t;
    }
    Ok(ProjectiveReparam { r, points })
}

/// Taylor recurrence `(k+1) w_{k+1} = ½ (w²)_k + c α_k` for `w = h'`, then
/// `g' = e^h` and `g = ∫ g'`.
fn local_projective_jet(
    ms: &MetricSpec,
    cs: &CurveSpec,
    t: f64,
    order: usize,
    r: usize,
    c: f64,
    state: [f64; 3],
) -> Result<ProjectivePoint> {
    // α needs 2r + 3 extra orders beyond the target order of g minus two integrations
    let an = Analysis::new(ms, cs, t, order + 2 * r + 3, Some(r))?;
    let alpha = an.gram.alpha().ok_or(Error::Jet(JetError::OrderExhausted))?;
    let ka = alpha.order();
    let a = alpha.coeffs();
    let mut w = vec![0.0; ka + 2];
    w[0] = state[2];
    for k in 0..=ka {
        let sq = (0..=k).fold(0.0, |acc, i| acc + w[i] * w[k - i]);
        w[k + 1] = (0.5 * sq + c * a[k]) / (k as f64 + 1.0);
    }
    let h = Jet::from_coeffs(w).integrate(state[1]);
    let g = h.exp().integrate(state[0]);
    Ok(ProjectivePoint {
        t,
        g: g.truncate(order),
        steps: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;

    fn flat3() -> MetricSpec {
        MetricSpec::flat(&["x", "y", "z"], 0)
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn lift_of_unit_speed_curves() {
        let cs = CurveSpec::parse(&["cos(t)", "sin(t)", "0"]).unwrap();
        let cd = CurvatureData::new(&flat3(), &cs, 0.3, 6).unwrap();
        let t = tractor_lift(&cd, 0).unwrap();
        assert!((t.rho.value() - 1.0).abs() < 1e-15);
        assert!(t.rho.coeffs()[1..].iter().all(|c| c.abs() < 1e-15));
        assert_eq!(t.sigma.max_abs(), 0.0);
    }

    #[test]
    fn null_geodesic_lift_fails() {
        let mink = MetricSpec::flat(&["x0", "x1", "x2"], 1);
        let cs = CurveSpec::parse(&["t", "t", "0"]).unwrap();
        let cd = CurvatureData::new(&mink, &cs, 0.0, 6).unwrap();
        assert!(matches!(tractor_lift(&cd, 1), Err(Error::DegenerateLift(_))));
        assert!(matches!(r_null_classify(&cd, 1), Err(Error::Degenerate(_))));
    }

    #[test]
    fn derived_tractor_slots_match_closed_forms() {
        // random-ish curve in a curved metric; compare 𝕌 and 𝕌' with the explicit slot formulas
        let ms = MetricSpec::parse(
            &["x", "y", "z"],
            &[
                &["exp(0.2*y)", "0.1*z", "0"],
                &["0.1*z", "1 + 0.3*x^2", "0"],
                &["0", "0", "1/(1 + 0.2*x*y)"],
            ],
            (3, 0),
        )
        .unwrap();
        let cs = CurveSpec::parse(&["0.4*t + 0.1*t^2", "sin(t)", "1 - 0.5*t^3"]).unwrap();
        let cd = CurvatureData::new(&ms, &cs, 0.3, 7).unwrap();
        let seq = derived_sequence(&cd, 0, 3).unwrap();
        let vel = cd.velocity_sequence(2).unwrap();
        let uu = cd.inner(&vel[0], &vel[0]).value();
        let u = uu.sqrt();
        let uu1 = cd.inner(&vel[0], &vel[1]).value();
        let uu2 = cd.inner(&vel[0], &vel[2]).value();
        let u1u1 = cd.inner(&vel[1], &vel[1]).value();
        let p = &cd.schouten().unwrap().p;
        let mut puu = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                puu += p[a][b].value() * vel[0][a].value() * vel[0][b].value();
            }
        }
        // 𝕌 = (0, u^{-1}U, -u^{-3} U·U')
        let uvals = seq[1].values();
        assert!(uvals[0].abs() < 1e-14);
        for a in 0..3 {
            assert!(close(uvals[a + 1], vel[0][a].value() / u, 1e-13));
        }
        assert!(close(uvals[4], -uu1 / u.powi(3), 1e-13));
        // 𝕌'
        let avals = seq[2].values();
        assert!(close(avals[0], -u, 1e-13));
        for a in 0..3 {
            let want = vel[1][a].value() / u - 2.0 * uu1 * vel[0][a].value() / u.powi(3);
            assert!(close(avals[a + 1], want, 1e-13));
        }
        let want = -uu2 / u.powi(3) - u1u1 / u.powi(3) + 3.0 * uu1 * uu1 / u.powi(5) - puu / u;
        assert!(close(avals[4], want, 1e-12));
        // ⟨𝕌',𝕌'⟩
        let alpha = cd.pair(&seq[2], &seq[2]).value();
        let want = 3.0 * u1u1 / uu + 2.0 * uu2 / uu - 6.0 * uu1 * uu1 / (uu * uu) + 2.0 * puu;
        assert!(close(alpha, want, 1e-12));
    }

    #[test]
    fn parallel_flat_tractor_has_zero_derivative() {
        // σ = a + b·x + c|x|²/2, μ = b + c x, ρ = -c
        let cs = CurveSpec::parse(&["cos(t)", "t^2", "exp(t)"]).unwrap();
        let cd = CurvatureData::new(&flat3(), &cs, 0.2, 6).unwrap();
        let (a, b, c) = (0.7, [0.3, -1.1, 0.4], 1.3);
        let x = cd.x();
        let mut sigma = Jet::constant(a, 6);
        let mut r2 = Jet::zero(6);
        for i in 0..3 {
            sigma += x[i].scale(b[i]);
            r2 += &x[i] * &x[i];
        }
        sigma += r2.scale(c / 2.0);
        let mu = (0..3).map(|i| &x[i].scale(c) + b[i]).collect();
        let tr = TractorJet {
            sigma,
            mu,
            rho: Jet::constant(-c, 6),
        };
        let d = cd.tractor_d(&tr.truncate(5)).unwrap();
        assert!(d.values().iter().all(|v| v.abs() < 1e-13));
        assert!(d.sigma.max_abs() < 1e-13 && d.rho.max_abs() < 1e-13);
    }

    #[test]
    fn starting_relations_and_generating_rule() {
        let ms = MetricSpec::round_sphere(&["x", "y", "z"]);
        let cs = CurveSpec::parse(&["0.3*t", "sin(t)", "0.2*t^2"]).unwrap();
        let an = Analysis::new(&ms, &cs, 0.4, 9, None).unwrap();
        assert_eq!(an.r, 0);
        let g = &an.gram;
        let v = |i, j| g.get(i, j).value();
        assert!(v(0, 0).abs() < 1e-12 && v(0, 1).abs() < 1e-12);
        assert!((v(0, 2) + 1.0).abs() < 1e-12);
        assert!((v(1, 1) - 1.0).abs() < 1e-12 && v(1, 2).abs() < 1e-12);
        // rule: ⟨X_i, X_{i+j+1}⟩ = ⟨X_i, X_{i+j}⟩' - ⟨X_{i+1}, X_{i+j}⟩
        for i in 0..4 {
            for j in 0..3 {
                let lhs = g.get(i, i + j + 1);
                let d = g.get(i, i + j).shift_derivative().unwrap();
                let rhs = &d.truncate(lhs.order().min(d.order())) - &g.get(i + 1, i + j).truncate(lhs.order().min(d.order()));
                let k = lhs.order().min(rhs.order());
                let diff = &lhs.truncate(k) - &rhs.truncate(k);
                assert!(diff.max_abs() <= 1e-9 * (1.0 + lhs.max_abs()), "{} {}", i, j);
            }
        }
        let dets = an.determinants();
        assert!(dets[0].value.abs() < 1e-12 && dets[1].value.abs() < 1e-12);
        assert!((dets[2].value + 1.0).abs() < 1e-12);
        let phi = an.phi().unwrap().value();
        assert!(close(dets[3].value, -phi, 1e-10));
        // the jet route gives the same Δ values
        let jets = g.determinant_jets(5);
        for i in 0..5 {
            assert!(close(jets[i].value(), dets[i].value, 1e-9));
        }
    }

    #[test]
    fn helix_phi_and_straight_line() {
        let (a, b) = (0.6f64, 0.8f64);
        let cs = CurveSpec::parse(&["0.6*cos(t)", "0.6*sin(t)", "0.8*t"]).unwrap();
        let an = Analysis::new(&flat3(), &cs, 0.5, 9, None).unwrap();
        let d = phi_and_density(&an).unwrap();
        assert!(close(d.invariant, a * a * b * b, 1e-10));
        assert!(close(d.density.unwrap(), (a * b).sqrt(), 1e-10));

        let line = CurveSpec::parse(&["1 + t", "2*t", "-t"]).unwrap();
        let an = Analysis::new(&flat3(), &line, 0.0, 9, None).unwrap();
        assert!(an.determinants()[3].value.abs() < 1e-12);
        assert!(an.u(2).values().iter().all(|v| v.abs() < 1e-12));
        assert!(phi_and_density(&an).unwrap().density.is_none());

        let circle = CurveSpec::parse(&["cos(t)", "sin(t)", "0"]).unwrap();
        let an = Analysis::new(&flat3(), &circle, 0.1, 9, None).unwrap();
        assert!(an.phi().unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn schwarzian_examples() {
        let s = schwarzian(&parse_expr("3*t + 2").unwrap(), 0.4, 3).unwrap();
        assert!(s.max_abs() < 1e-15);
        let s = schwarzian(&parse_expr("(2*t + 1)/(t + 3)").unwrap(), 0.4, 3).unwrap();
        assert!(s.max_abs() < 1e-12);
        let s = schwarzian(&parse_expr("t^2").unwrap(), 1.0, 0).unwrap();
        assert!((s.value() + 1.5).abs() < 1e-15);
        assert!(schwarzian(&parse_expr("t^2").unwrap(), 0.0, 0).is_err());
    }

    #[test]
    fn reparametrization_laws_r0() {
        let ms = MetricSpec::round_sphere(&["x", "y", "z"]);
        let cs = CurveSpec::parse(&["0.3*t", "sin(t)", "0.2*t^2"]).unwrap();
        let id = reparametrize_check(&ms, &cs, &parse_expr("t").unwrap(), 0.4, 9, None).unwrap();
        assert!(id.worst() < 1e-12, "{:?}", id);
        let g = parse_expr("t + 0.3*t^2 + 0.1*sin(2*t)").unwrap();
        let rep = reparametrize_check(&ms, &cs, &g, 0.4, 9, None).unwrap();
        assert!(rep.worst() < 1e-7, "{:?}", rep);
        assert!(rep.weights.len() >= 2);
    }

    #[test]
    fn projective_parameter_kills_alpha() {
        let circle = CurveSpec::parse(&["cos(t)", "sin(t)", "0"]).unwrap();
        let pr = projective_reparametrize(&flat3(), &circle, &[0.2, 0.5, 0.9], 9, None).unwrap();
        for p in &pr.points {
            let an = Analysis::with_param(&flat3(), &circle, &p.inverse().unwrap(), Some(0)).unwrap();
            let a = an.gram.alpha().unwrap().value();
            assert!(a.abs() < 1e-8, "α̃ = {}", a);
        }
        // a line in affine parameter is already projective
        let line = CurveSpec::parse(&["t", "0", "0"]).unwrap();
        let pr = projective_reparametrize(&flat3(), &line, &[0.0, 1.0], 6, None).unwrap();
        for p in &pr.points {
            assert!((p.g.coeffs()[1] - 1.0).abs() < 1e-12);
            assert!(p.g.coeffs()[2..].iter().all(|c| c.abs() < 1e-12));
            assert!((p.g.value() - p.t).abs() < 1e-9);
        }
    }
}
