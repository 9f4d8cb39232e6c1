//! Metric data along a curve: pullbacks of `g` and its coordinate
//! derivatives, Christoffel symbols, Schouten, Weyl and `∇P`, all as jets.

use std::sync::{Arc, OnceLock};

use nalgebra::SymmetricEigen;

use crate::error::{Error, Result};
use crate::expr::{parse_expr, Env, Expr};
use crate::jet::{Jet, JetError};
use crate::jetmat::{self, JetMat};

/// Name of the curve parameter in curve expressions.
pub const PARAM: &str = "t";

/// Relative pivot threshold for singular-metric detection.
pub const PIVOT_TOL: f64 = 1e-12;

type Rank3 = Vec<Vec<Vec<Expr>>>;
type Rank4 = Vec<Vec<Vec<Vec<Expr>>>>;
type Rank5 = Vec<Vec<Vec<Vec<Vec<Expr>>>>>;

#[derive(Debug)]
struct Derivatives {
    /// `d1[a][b][c] = ∂_c g_ab`
    d1: Rank3,
    /// `d2[a][b][c][d] = ∂_d ∂_c g_ab`
    d2: Rank4,
    /// `d3[a][b][c][d][e] = ∂_e ∂_d ∂_c g_ab`, built on first use
    d3: OnceLock<Rank5>,
}

/// A metric representative `g_ab` of the conformal class, given by expressions
/// in the coordinates.
#[derive(Debug, Clone)]
pub struct MetricSpec {
    coords: Vec<String>,
    entries: Vec<Vec<Expr>>,
    signature: (usize, usize),
    derivs: Arc<Derivatives>,
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl MetricSpec {
    /// `signature = (p, q)`: `p` positive and `q` negative directions.
    pub fn new(coords: Vec<String>, entries: Vec<Vec<Expr>>, signature: (usize, usize)) -> Result<Self> {
        let n = coords.len();
        if n == 0 {
            return Err(Error::InvalidScene("no coordinates".into()));
        }
        for (i, c) in coords.iter().enumerate() {
            if !is_identifier(c) || c == PARAM || c == "pi" || c == "e" {
                return Err(Error::InvalidScene(format!("invalid coordinate name `{}`", c)));
            }
            if coords[..i].contains(c) {
                return Err(Error::InvalidScene(format!("duplicate coordinate `{}`", c)));
            }
        }
        if signature.0 + signature.1 != n {
            return Err(Error::InvalidScene(format!(
                "signature {:?} does not add up to dimension {}",
                signature, n
            )));
        }
        if entries.len() != n || entries.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidScene(format!("metric must be a {}x{} array", n, n)));
        }
        for a in 0..n {
            for b in 0..a {
                if entries[a][b] != entries[b][a] {
                    return Err(Error::InvalidScene(format!(
                        "metric is not symmetric: g[{}][{}] = {} but g[{}][{}] = {}",
                        a, b, entries[a][b], b, a, entries[b][a]
                    )));
                }
            }
        }
        for row in &entries {
            for e in row {
                if let Some(v) = e.variables().into_iter().find(|v| !coords.contains(v)) {
                    return Err(Error::InvalidScene(format!(
                        "metric entry `{}` uses undeclared variable `{}`",
                        e, v
                    )));
                }
            }
        }
        let derivs = Arc::new(Derivatives::new(&coords, &entries));
        Ok(MetricSpec {
            coords,
            entries,
            signature,
            derivs,
        })
    }

    pub fn parse(coords: &[&str], entries: &[&[&str]], signature: (usize, usize)) -> Result<Self> {
        let exprs = entries
            .iter()
            .enumerate()
            .map(|(a, row)| {
                row.iter()
                    .enumerate()
                    .map(|(b, s)| parse_expr(s).map_err(|e| Error::parse(format!("metric[{}][{}]", a, b), e)))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        MetricSpec::new(coords.iter().map(|s| s.to_string()).collect(), exprs, signature)
    }

    /// Constant diagonal metric with `q` leading entries `-1` followed by `+1`'s.
    pub fn flat(coords: &[&str], q: usize) -> Self {
        let n = coords.len();
        let entries = (0..n)
            .map(|a| {
                (0..n)
                    .map(|b| {
                        Expr::Num(match (a == b, a < q) {
                            (false, _) => 0.0,
                            (true, true) => -1.0,
                            (true, false) => 1.0,
                        })
                    })
                    .collect()
            })
            .collect();
        MetricSpec::new(coords.iter().map(|s| s.to_string()).collect(), entries, (n - q, q))
            .expect("flat metric is valid")
    }

    /// `g = φ δ` (or `φ η`) for a conformal factor expression `φ`.
    pub fn conformally_flat(coords: &[&str], q: usize, factor: &str) -> Result<Self> {
        let phi = parse_expr(factor).map_err(|e| Error::parse("conformal factor", e))?;
        let flat = MetricSpec::flat(coords, q);
        let entries = flat
            .entries
            .iter()
            .map(|row| row.iter().map(|e| Expr::mul(phi.clone(), e.clone())).collect())
            .collect();
        MetricSpec::new(flat.coords, entries, flat.signature)
    }

    /// Unit round sphere in stereographic coordinates, `4 |dx|^2 / (1 + |x|^2)^2`.
    pub fn round_sphere(coords: &[&str]) -> Self {
        let r2 = coords
            .iter()
            .map(|c| format!("{}^2", c))
            .collect::<Vec<_>>()
            .join("+");
        MetricSpec::conformally_flat(coords, 0, &format!("4/(1+{})^2", r2)).expect("valid sphere metric")
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[String] {
        &self.coords
    }

    pub fn entries(&self) -> &[Vec<Expr>] {
        &self.entries
    }

    pub fn signature(&self) -> (usize, usize) {
        self.signature
    }

    /// True when every entry is a numeric literal.
    pub fn is_constant(&self) -> bool {
        self.entries
            .iter()
            .flatten()
            .all(|e| e.variables().is_empty())
    }

    /// Metric `f^2 g`, i.e. the rescaled representative for the given `f`.
    pub fn conformal_rescale(&self, rs: &RescaleSpec) -> MetricSpec {
        let f2 = Expr::powi(rs.f.clone(), 2);
        let entries = self
            .entries
            .iter()
            .map(|row| row.iter().map(|e| Expr::mul(f2.clone(), e.clone())).collect())
            .collect();
        MetricSpec::new(self.coords.clone(), entries, self.signature).expect("rescale keeps validity")
    }

    fn env(&self, x: &[Jet]) -> Env<Jet> {
        let mut env = Env::new(x[0].order());
        for (c, xa) in self.coords.iter().zip(x) {
            env.set(c, xa.clone());
        }
        env
    }

    fn d3(&self) -> &Rank5 {
        self.derivs.d3.get_or_init(|| {
            let n = self.dim();
            let d2 = &self.derivs.d2;
            let mut out = vec![vec![vec![vec![vec![Expr::Num(0.0); n]; n]; n]; n]; n];
            for a in 0..n {
                for b in a..n {
                    for c in 0..n {
                        for d in c..n {
                            for e in d..n {
                                let v = d2[a][b][c][d].diff(&self.coords[e]);
                                // all orderings of (c, d, e)
                                for (i, j, k) in [(c, d, e), (c, e, d), (d, c, e), (d, e, c), (e, c, d), (e, d, c)] {
                                    out[a][b][i][j][k] = v.clone();
                                    out[b][a][i][j][k] = v.clone();
                                }
                            }
                        }
                    }
                }
            }
            out
        })
    }
}

impl Derivatives {
    fn new(coords: &[String], g: &[Vec<Expr>]) -> Self {
        let n = coords.len();
        let mut d1 = vec![vec![vec![Expr::Num(0.0); n]; n]; n];
        let mut d2 = vec![vec![vec![vec![Expr::Num(0.0); n]; n]; n]; n];
        for a in 0..n {
            for b in a..n {
                for c in 0..n {
                    let v = g[a][b].diff(&coords[c]);
                    d1[a][b][c] = v.clone();
                    d1[b][a][c] = v;
                }
                for c in 0..n {
                    for d in c..n {
                        let v = d1[a][b][c].diff(&coords[d]);
                        for (i, j) in [(c, d), (d, c)] {
                            d2[a][b][i][j] = v.clone();
                            d2[b][a][i][j] = v.clone();
                        }
                    }
                }
            }
        }
        Derivatives {
            d1,
            d2,
            d3: OnceLock::new(),
        }
    }
}

/// Curve components `x^a(t)`.
#[derive(Debug, Clone)]
pub struct CurveSpec {
    components: Vec<Expr>,
}

impl CurveSpec {
    pub fn new(components: Vec<Expr>) -> Result<Self> {
        for e in &components {
            if let Some(v) = e.variables().into_iter().find(|v| v != PARAM) {
                return Err(Error::InvalidScene(format!(
                    "curve component `{}` uses variable `{}`; only `{}` is allowed",
                    e, v, PARAM
                )));
            }
        }
        Ok(CurveSpec { components })
    }

    pub fn parse(components: &[&str]) -> Result<Self> {
        let exprs = components
            .iter()
            .enumerate()
            .map(|(i, s)| parse_expr(s).map_err(|e| Error::parse(format!("curve[{}]", i), e)))
            .collect::<Result<Vec<_>>>()?;
        CurveSpec::new(exprs)
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    /// Component jets with the parameter bound to the given jet.
    pub fn eval_at(&self, t: &Jet) -> Result<Vec<Jet>> {
        let env = Env::new(t.order()).with(PARAM, t.clone());
        self.components
            .iter()
            .map(|c| c.eval(&env).map_err(Error::from))
            .collect()
    }

    /// Component values at a parameter value.
    pub fn point(&self, t: f64) -> Result<Vec<f64>> {
        let env = Env::new(()).with(PARAM, t);
        self.components
            .iter()
            .map(|c| c.eval(&env).map_err(Error::from))
            .collect()
    }
}

/// Scale change `ĝ = f^2 g`, with `Υ_a = ∂_a f / f`.
#[derive(Debug, Clone)]
pub struct RescaleSpec {
    pub f: Expr,
    /// `Υ_a`
    pub upsilon: Vec<Expr>,
    /// `∂_b Υ_a` as `[a][b]`
    pub d_upsilon: Vec<Vec<Expr>>,
}

impl RescaleSpec {
    pub fn new(f: Expr, coords: &[String]) -> Result<Self> {
        if let Some(v) = f.variables().into_iter().find(|v| !coords.contains(v)) {
            return Err(Error::InvalidScene(format!("rescale factor uses undeclared variable `{}`", v)));
        }
        let upsilon: Vec<Expr> = coords
            .iter()
            .map(|c| Expr::div(f.diff(c), f.clone()))
            .collect();
        let d_upsilon = upsilon
            .iter()
            .map(|u| coords.iter().map(|c| u.diff(c)).collect())
            .collect();
        Ok(RescaleSpec { f, upsilon, d_upsilon })
    }

    pub fn parse(f: &str, coords: &[String]) -> Result<Self> {
        let f = parse_expr(f).map_err(|e| Error::parse("rescale factor", e))?;
        RescaleSpec::new(f, coords)
    }

    /// `(f, Υ_a, ∂_b Υ_a)` along the curve, at the order of `x`.
    pub fn along(&self, coords: &[String], x: &[Jet]) -> Result<(Jet, Vec<Jet>, JetMat)> {
        let mut env = Env::new(x[0].order());
        for (c, xa) in coords.iter().zip(x) {
            env.set(c, xa.clone());
        }
        let f = self.f.eval(&env)?;
        if f.value() <= 0.0 {
            return Err(Error::InvalidScene(format!("rescale factor is not positive: {}", f.value())));
        }
        let ups = self
            .upsilon
            .iter()
            .map(|e| e.eval(&env).map_err(Error::from))
            .collect::<Result<Vec<_>>>()?;
        let dups = self
            .d_upsilon
            .iter()
            .map(|row| row.iter().map(|e| e.eval(&env).map_err(Error::from)).collect())
            .collect::<Result<Vec<Vec<_>>>>()?;
        Ok((f, ups, dups))
    }
}

/// Along-curve jets of `g_ab`, `∂_c g_ab` and `∂_d ∂_c g_ab`.
#[derive(Debug, Clone)]
pub struct Pullback {
    pub x: Vec<Jet>,
    pub g: JetMat,
    /// `[a][b][c] = ∂_c g_ab`
    pub dg: Vec<JetMat>,
    /// `[a][b][c][d] = ∂_d ∂_c g_ab`
    pub ddg: Vec<Vec<JetMat>>,
}

pub fn pullback_along(ms: &MetricSpec, cs: &CurveSpec, t0: f64, order: usize) -> Result<Pullback> {
    pullback_with_param(ms, cs, &Jet::variable(t0, order))
}

/// Like [`pullback_along`], with the curve parameter itself given as a jet
/// (used for reparametrized curves `x(t(τ))`).
pub fn pullback_with_param(ms: &MetricSpec, cs: &CurveSpec, param: &Jet) -> Result<Pullback> {
    if cs.dim() != ms.dim() {
        return Err(Error::InvalidScene(format!(
            "curve has {} components, metric dimension is {}",
            cs.dim(),
            ms.dim()
        )));
    }
    let x = cs.eval_at(param)?;
    let env = ms.env(&x);
    let ev = |e: &Expr| e.eval(&env).map_err(Error::from);
    let g = ms
        .entries
        .iter()
        .map(|row| row.iter().map(ev).collect::<Result<Vec<_>>>())
        .collect::<Result<JetMat>>()?;
    let dg = ms
        .derivs
        .d1
        .iter()
        .map(|m| m.iter().map(|row| row.iter().map(ev).collect::<Result<Vec<_>>>()).collect::<Result<JetMat>>())
        .collect::<Result<Vec<_>>>()?;
    let ddg = ms
        .derivs
        .d2
        .iter()
        .map(|a| {
            a.iter()
                .map(|m| m.iter().map(|row| row.iter().map(ev).collect::<Result<Vec<_>>>()).collect::<Result<JetMat>>())
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Pullback { x, g, dg, ddg })
}

/// Numeric signature `(positive, negative)` of a symmetric matrix.
pub fn numeric_signature(g: &JetMat) -> (usize, usize) {
    let m = jetmat::constant_terms(g);
    let eig = SymmetricEigen::new(m);
    let scale = eig.eigenvalues.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    let pos = eig.eigenvalues.iter().filter(|v| **v > 1e-12 * scale).count();
    let neg = eig.eigenvalues.iter().filter(|v| **v < -1e-12 * scale).count();
    (pos, neg)
}

/// Quantities evaluated along the curve whose order is lowered step by step
/// by tractor and velocity derivatives; cached per order.
#[derive(Debug, Clone)]
pub struct AlongAtOrder {
    pub g: JetMat,
    pub u: Vec<Jet>,
    pub u_low: Vec<Jet>,
    /// `A^a_c = Γ^a_bc U^b`
    pub a: JetMat,
    /// `P_ab U^b`, present for `n >= 3`
    pub pu_low: Option<Vec<Jet>>,
    /// `g^{ab} P_bc U^c`
    pub pu_up: Option<Vec<Jet>>,
}

/// Schouten tensor and companions.
#[derive(Debug, Clone)]
pub struct Schouten {
    pub ricci: JetMat,
    pub scalar: Jet,
    pub p: JetMat,
    pub j: Jet,
}

/// Jets along the curve at one base point: metric, Christoffels, Schouten.
#[derive(Debug)]
pub struct CurvatureData {
    metric: MetricSpec,
    pub t0: f64,
    pub order: usize,
    pub pullback: Pullback,
    /// Velocity `U^a = dx^a/dt`, order `K - 1`.
    pub u: Vec<Jet>,
    pub ginv: JetMat,
    /// `[e]` entry is `∂_e g^{ab}`
    pub dginv: Vec<JetMat>,
    /// First-kind symbols `Γ_dbc` as `[d][b][c]`
    pub gamma_low: Vec<JetMat>,
    /// `[d][b][c][e] = ∂_e Γ_dbc`
    pub dgamma_low: Vec<Vec<JetMat>>,
    /// `Γ^a_bc` as `[a][b][c]`
    pub gamma: Vec<JetMat>,
    /// `[a][b][c][e] = ∂_e Γ^a_bc`
    pub dgamma: Vec<Vec<JetMat>>,
    /// `R^a_bcd` as `[a][b][c][d]`
    pub riemann: Vec<Vec<JetMat>>,
    pub schouten: Option<Schouten>,
    along: Vec<OnceLock<AlongAtOrder>>,
}

fn zeros3(n: usize, order: usize) -> Vec<JetMat> {
    vec![jetmat::zeros(n, n, order); n]
}

fn zeros4(n: usize, order: usize) -> Vec<Vec<JetMat>> {
    vec![zeros3(n, order); n]
}

impl CurvatureData {
    pub fn new(ms: &MetricSpec, cs: &CurveSpec, t0: f64, order: usize) -> Result<Self> {
        CurvatureData::with_param(ms, cs, &Jet::variable(t0, order))
    }

    /// Data for the curve `x(t(τ))`, where `param` is the jet of `t(τ)` about
    /// the base value `τ0`; the stored `t0` is the original value `t(τ0)`.
    pub fn with_param(ms: &MetricSpec, cs: &CurveSpec, param: &Jet) -> Result<Self> {
        let order = param.order();
        if order < 1 {
            return Err(Error::Jet(JetError::OrderExhausted));
        }
        let t0 = param.value();
        let n = ms.dim();
        let pb = pullback_with_param(ms, cs, param)?;
        let found = numeric_signature(&pb.g);
        let ginv = jetmat::inverse(&pb.g, PIVOT_TOL).map_err(|pivot| Error::SingularMetric { t0, pivot })?;
        if found != ms.signature {
            return Err(Error::SignatureMismatch {
                t0,
                expected: ms.signature,
                found,
            });
        }
        let u = pb
            .x
            .iter()
            .map(|x| x.shift_derivative())
            .collect::<std::result::Result<Vec<_>, _>>()?;

        let dginv: Vec<JetMat> = (0..n)
            .map(|e| {
                let dge: JetMat = (0..n).map(|a| (0..n).map(|b| pb.dg[a][b][e].clone()).collect()).collect();
                let m = jetmat::mul(&jetmat::mul(&ginv, &dge), &ginv);
                m.into_iter().map(|row| row.into_iter().map(|x| -x).collect()).collect()
            })
            .collect();

        let mut gamma_low = zeros3(n, order);
        let mut dgamma_low = zeros4(n, order);
        for d in 0..n {
            for b in 0..n {
                for c in b..n {
                    let v = (&pb.dg[d][c][b] + &pb.dg[b][d][c] - &pb.dg[b][c][d]).scale(0.5);
                    gamma_low[d][b][c] = v.clone();
                    gamma_low[d][c][b] = v;
                    for e in 0..n {
                        let v = (&pb.ddg[d][c][b][e] + &pb.ddg[b][d][c][e] - &pb.ddg[b][c][d][e]).scale(0.5);
                        dgamma_low[d][b][c][e] = v.clone();
                        dgamma_low[d][c][b][e] = v;
                    }
                }
            }
        }
        let mut gamma = zeros3(n, order);
        let mut dgamma = zeros4(n, order);
        for a in 0..n {
            for b in 0..n {
                for c in b..n {
                    let mut v = Jet::zero(order);
                    for d in 0..n {
                        v += &ginv[a][d] * &gamma_low[d][b][c];
                    }
                    gamma[a][b][c] = v.clone();
                    gamma[a][c][b] = v;
                    for e in 0..n {
                        let mut w = Jet::zero(order);
                        for d in 0..n {
                            w += &dginv[e][a][d] * &gamma_low[d][b][c];
                            w += &ginv[a][d] * &dgamma_low[d][b][c][e];
                        }
                        dgamma[a][b][c][e] = w.clone();
                        dgamma[a][c][b][e] = w;
                    }
                }
            }
        }

        let mut riemann = zeros4(n, order);
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for d in (c + 1)..n {
                        let mut v = &dgamma[a][d][b][c] - &dgamma[a][c][b][d];
                        for e in 0..n {
                            v += &gamma[a][c][e] * &gamma[e][d][b];
                            v -= &gamma[a][d][e] * &gamma[e][c][b];
                        }
                        riemann[a][b][d][c] = -&v;
                        riemann[a][b][c][d] = v;
                    }
                }
            }
        }

        let schouten = (n >= 3).then(|| {
            let mut ricci = jetmat::zeros(n, n, order);
            for b in 0..n {
                for d in 0..n {
                    for a in 0..n {
                        ricci[b][d] += &riemann[a][b][a][d];
                    }
                }
            }
            let mut scalar = Jet::zero(order);
            for b in 0..n {
                for d in 0..n {
                    scalar += &ginv[b][d] * &ricci[b][d];
                }
            }
            let nf = n as f64;
            let mut p = jetmat::zeros(n, n, order);
            for a in 0..n {
                for b in 0..n {
                    p[a][b] = (&ricci[a][b] - &(&pb.g[a][b] * &scalar).scale(1.0 / (2.0 * (nf - 1.0))))
                        .scale(1.0 / (nf - 2.0));
                }
            }
            let mut j = Jet::zero(order);
            for a in 0..n {
                for b in 0..n {
                    j += &ginv[a][b] * &p[a][b];
                }
            }
            Schouten { ricci, scalar, p, j }
        });

        Ok(CurvatureData {
            metric: ms.clone(),
            t0,
            order,
            u,
            ginv,
            dginv,
            gamma_low,
            dgamma_low,
            gamma,
            dgamma,
            riemann,
            schouten,
            along: (0..=order).map(|_| OnceLock::new()).collect(),
            pullback: pb,
        })
    }

    pub fn dim(&self) -> usize {
        self.metric.dim()
    }

    pub fn metric(&self) -> &MetricSpec {
        &self.metric
    }

    pub fn x(&self) -> &[Jet] {
        &self.pullback.x
    }

    pub fn g(&self) -> &JetMat {
        &self.pullback.g
    }

    pub fn schouten(&self) -> Result<&Schouten> {
        self.schouten.as_ref().ok_or(Error::DimensionTooSmall(self.dim()))
    }

    /// Along-curve data truncated to `order` (at most `K - 1`).
    pub fn at_order(&self, order: usize) -> &AlongAtOrder {
        assert!(order < self.order, "velocity is only known to order K-1");
        self.along[order].get_or_init(|| {
            let n = self.dim();
            let g = jetmat::truncate(&self.pullback.g, order);
            let u: Vec<Jet> = self.u.iter().map(|x| x.truncate(order)).collect();
            let u_low = lower(&g, &u);
            let mut a = jetmat::zeros(n, n, order);
            for i in 0..n {
                for c in 0..n {
                    for b in 0..n {
                        a[i][c] += &self.gamma[i][b][c].truncate(order) * &u[b];
                    }
                }
            }
            let (pu_low, pu_up) = match &self.schouten {
                Some(s) => {
                    let p = jetmat::truncate(&s.p, order);
                    let low = (0..n).map(|i| crate::jet::dot(&p[i], &u)).collect::<Vec<_>>();
                    let ginv = jetmat::truncate(&self.ginv, order);
                    let up = (0..n).map(|i| crate::jet::dot(&ginv[i], &low)).collect();
                    (Some(low), Some(up))
                }
                None => (None, None),
            };
            AlongAtOrder {
                g,
                u,
                u_low,
                a,
                pu_low,
                pu_up,
            }
        })
    }

    /// Covariant derivative along the curve of a vector field given as jets.
    pub fn cov_deriv(&self, v: &[Jet]) -> Result<Vec<Jet>> {
        let k = v[0].order();
        if k == 0 {
            return Err(Error::Jet(JetError::OrderExhausted));
        }
        let al = self.at_order(k - 1);
        let n = self.dim();
        let vt: Vec<Jet> = v.iter().map(|x| x.truncate(k - 1)).collect();
        (0..n)
            .map(|i| {
                let mut out = v[i].shift_derivative()?;
                for c in 0..n {
                    out += &al.a[i][c] * &vt[c];
                }
                Ok(out)
            })
            .collect()
    }

    /// `U, U', ..., U^{(m)}`; `U^{(i)}` has order `K - 1 - i`.
    pub fn velocity_sequence(&self, m: usize) -> Result<Vec<Vec<Jet>>> {
        if m + 1 > self.order {
            return Err(Error::Jet(JetError::OrderExhausted));
        }
        let mut out = vec![self.u.clone()];
        for _ in 0..m {
            let next = self.cov_deriv(out.last().expect("nonempty"))?;
            out.push(next);
        }
        Ok(out)
    }

    /// `g(v, w)` with `g` truncated to the common order.
    pub fn inner(&self, v: &[Jet], w: &[Jet]) -> Jet {
        let k = v[0].order().min(w[0].order());
        let g = if k < self.order {
            &self.at_order(k).g
        } else {
            &self.pullback.g
        };
        let vt: Vec<Jet> = v.iter().map(|x| x.truncate(k)).collect();
        let wt: Vec<Jet> = w.iter().map(|x| x.truncate(k)).collect();
        crate::jet::dot(&lower(g, &vt), &wt)
    }

    /// `W_abcd` as `[a][b][c][d]`.
    pub fn weyl(&self) -> Result<Vec<Vec<JetMat>>> {
        let s = self.schouten()?;
        let n = self.dim();
        let g = &self.pullback.g;
        let p = &s.p;
        let mut w = zeros4(n, self.order);
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        let mut v = Jet::zero(self.order);
                        for e in 0..n {
                            v += &g[a][e] * &self.riemann[e][b][c][d];
                        }
                        v -= &g[a][c] * &p[b][d];
                        v += &g[a][d] * &p[b][c];
                        v += &g[b][c] * &p[a][d];
                        v -= &g[b][d] * &p[a][c];
                        w[a][b][c][d] = v;
                    }
                }
            }
        }
        Ok(w)
    }

    /// `∇_e P_bc` as `[e][b][c]`; evaluates third coordinate derivatives of `g`.
    pub fn nabla_p(&self) -> Result<Vec<JetMat>> {
        let s = self.schouten()?;
        let n = self.dim();
        let k = self.order;
        let x = &self.pullback.x;
        let env = self.metric.env(x);
        let d3 = self.metric.d3();
        let mut dddg = vec![zeros4(n, k); n];
        for a in 0..n {
            for b in a..n {
                for c in 0..n {
                    for d in 0..n {
                        for e in 0..n {
                            let v = d3[a][b][c][d][e].eval(&env)?;
                            dddg[a][b][c][d][e] = v.clone();
                            dddg[b][a][c][d][e] = v;
                        }
                    }
                }
            }
        }
        let g = &self.pullback.g;
        let dg = &self.pullback.dg;
        let ddg = &self.pullback.ddg;
        let ginv = &self.ginv;
        let dginv = &self.dginv;
        // ∂_f ∂_e g^{ab}
        let mut ddginv = vec![vec![jetmat::zeros(n, n, k); n]; n];
        for e in 0..n {
            let dge: JetMat = (0..n).map(|a| (0..n).map(|b| dg[a][b][e].clone()).collect()).collect();
            for f in 0..n {
                let ddgef: JetMat = (0..n).map(|a| (0..n).map(|b| ddg[a][b][e][f].clone()).collect()).collect();
                let t1 = jetmat::mul(&jetmat::mul(&dginv[f], &dge), ginv);
                let t2 = jetmat::mul(&jetmat::mul(ginv, &ddgef), ginv);
                let t3 = jetmat::mul(&jetmat::mul(ginv, &dge), &dginv[f]);
                for a in 0..n {
                    for b in 0..n {
                        ddginv[e][f][a][b] = -(&t1[a][b] + &t2[a][b] + &t3[a][b]);
                    }
                }
            }
        }
        // ∂_f ∂_e Γ^a_bc as [a][b][c][e][f]
        let mut ddgamma = vec![zeros4(n, k); n];
        for a in 0..n {
            for b in 0..n {
                for c in b..n {
                    for e in 0..n {
                        for f in e..n {
                            let mut v = Jet::zero(k);
                            for d in 0..n {
                                let ddlow = (&dddg[d][c][b][e][f] + &dddg[b][d][c][e][f] - &dddg[b][c][d][e][f]).scale(0.5);
                                v += &ddginv[e][f][a][d] * &self.gamma_low[d][b][c];
                                v += &dginv[e][a][d] * &self.dgamma_low[d][b][c][f];
                                v += &dginv[f][a][d] * &self.dgamma_low[d][b][c][e];
                                v += &ginv[a][d] * &ddlow;
                            }
                            for (i, j) in [(b, c), (c, b)] {
                                ddgamma[a][i][j][e][f] = v.clone();
                                ddgamma[a][i][j][f][e] = v.clone();
                            }
                        }
                    }
                }
            }
        }
        let gam = &self.gamma;
        let dgam = &self.dgamma;
        // ∂_f Ric_bd = Σ_a ∂_f R^a_bad
        let mut dric = vec![jetmat::zeros(n, n, k); n];
        for f in 0..n {
            for b in 0..n {
                for d in 0..n {
                    let mut v = Jet::zero(k);
                    for a in 0..n {
                        v += &ddgamma[a][d][b][a][f];
                        v -= &ddgamma[a][a][b][d][f];
                        for e in 0..n {
                            v += &dgam[a][a][e][f] * &gam[e][d][b];
                            v += &gam[a][a][e] * &dgam[e][d][b][f];
                            v -= &dgam[a][d][e][f] * &gam[e][a][b];
                            v -= &gam[a][d][e] * &dgam[e][a][b][f];
                        }
                    }
                    dric[f][b][d] = v;
                }
            }
        }
        let nf = n as f64;
        let c1 = 1.0 / (2.0 * (nf - 1.0));
        let mut dp = vec![jetmat::zeros(n, n, k); n];
        for f in 0..n {
            let mut dscalar = Jet::zero(k);
            for b in 0..n {
                for d in 0..n {
                    dscalar += &dginv[f][b][d] * &s.ricci[b][d];
                    dscalar += &ginv[b][d] * &dric[f][b][d];
                }
            }
            for b in 0..n {
                for c in 0..n {
                    let v = &dric[f][b][c] - &(&dscalar * &g[b][c]).scale(c1) - (&s.scalar * &dg[b][c][f]).scale(c1);
                    dp[f][b][c] = v.scale(1.0 / (nf - 2.0));
                }
            }
        }
        let p = &s.p;
        let mut out = vec![jetmat::zeros(n, n, k); n];
        for e in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let mut v = dp[e][b][c].clone();
                    for f in 0..n {
                        v -= &gam[f][e][b] * &p[f][c];
                        v -= &gam[f][e][c] * &p[b][f];
                    }
                    out[e][b][c] = v;
                }
            }
        }
        Ok(out)
    }
}

pub fn lower(g: &JetMat, v: &[Jet]) -> Vec<Jet> {
    g.iter().map(|row| crate::jet::dot(row, v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use crate::samples::{random_metric, trans_rho_residual};

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn euclidean_pullback_is_constant() {
        let ms = MetricSpec::flat(&["x", "y", "z"], 0);
        let cs = CurveSpec::parse(&["cos(t)", "t^3", "exp(t)"]).unwrap();
        let pb = pullback_along(&ms, &cs, 0.3, 5).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                assert_eq!(pb.g[a][b].coeffs()[1..].iter().map(|c| c.abs()).sum::<f64>(), 0.0);
                for c in 0..3 {
                    assert_eq!(pb.dg[a][b][c].max_abs(), 0.0);
                }
            }
        }
    }

    #[test]
    fn exponential_factor_pullback() {
        let ms = MetricSpec::parse(&["x", "y"], &[&["exp(2*x)", "0"], &["0", "exp(2*x)"]], (2, 0)).unwrap();
        let cs = CurveSpec::parse(&["t", "0"]).unwrap();
        let pb = pullback_along(&ms, &cs, 0.5, 4).unwrap();
        // direct Taylor of e^{2(t0+h)}: e^{2 t0} 2^k / k!
        let base = (1.0f64).exp();
        let want = [1.0, 2.0, 2.0, 4.0 / 3.0, 2.0 / 3.0];
        for (k, w) in want.iter().enumerate() {
            assert!(rel_close(pb.g[0][0].coeffs()[k], base * w, 1e-14));
        }
    }

    #[test]
    fn singular_metric_is_reported() {
        let ms = MetricSpec::parse(&["x", "y", "z"], &[&["x", "0", "0"], &["0", "1", "0"], &["0", "0", "1"]], (3, 0)).unwrap();
        let cs = CurveSpec::parse(&["0", "t", "0"]).unwrap();
        assert!(matches!(CurvatureData::new(&ms, &cs, 0.0, 4), Err(Error::SingularMetric { .. })));
    }

    #[test]
    fn signature_and_symmetry_checks() {
        let ms = MetricSpec::flat(&["x", "y", "z"], 1);
        let cs = CurveSpec::parse(&["t", "0", "0"]).unwrap();
        let bad = MetricSpec::new(ms.coords().to_vec(), ms.entries().to_vec(), (3, 0));
        let bad = bad.unwrap();
        assert!(matches!(CurvatureData::new(&bad, &cs, 0.0, 3), Err(Error::SignatureMismatch { .. })));
        let asym = MetricSpec::parse(&["x", "y"], &[&["1", "x"], &["0", "1"]], (2, 0));
        assert!(matches!(asym, Err(Error::InvalidScene(_))));
        let undeclared = MetricSpec::parse(&["x", "y"], &[&["1", "0"], &["0", "t"]], (2, 0));
        assert!(matches!(undeclared, Err(Error::InvalidScene(_))));
    }

    #[test]
    fn sphere_and_polar_christoffels() {
        let sphere = MetricSpec::parse(&["th", "ph"], &[&["1", "0"], &["0", "sin(th)^2"]], (2, 0)).unwrap();
        let cs = CurveSpec::parse(&["0.7 + 0.2*t", "t"]).unwrap();
        let cd = CurvatureData::new(&sphere, &cs, 0.4, 3).unwrap();
        let th = 0.7 + 0.2 * 0.4f64;
        assert!(rel_close(cd.gamma[0][1][1].value(), -th.sin() * th.cos(), 1e-14));
        assert!(rel_close(cd.gamma[1][0][1].value(), th.cos() / th.sin(), 1e-14));

        let polar = MetricSpec::parse(&["r", "ph"], &[&["1", "0"], &["0", "r^2"]], (2, 0)).unwrap();
        let cs = CurveSpec::parse(&["2 + t", "t^2"]).unwrap();
        let cd = CurvatureData::new(&polar, &cs, 0.5, 4).unwrap();
        // Γ^r_φφ = -r along r = 2 + t exactly, coefficientwise
        let want = [-2.5, -1.0, 0.0, 0.0, 0.0];
        for (c, w) in cd.gamma[0][1][1].coeffs().iter().zip(want) {
            assert!((c - w).abs() < 1e-14);
        }
    }

    #[test]
    fn sphere_christoffel_matches_finite_differences_of_g() {
        let sphere = MetricSpec::parse(&["th", "ph"], &[&["1", "0"], &["0", "sin(th)^2"]], (2, 0)).unwrap();
        let th = 1.1f64;
        let h = 1e-6;
        let g11 = |t: f64| t.sin().powi(2);
        // Γ^θ_φφ = -½ ∂_θ g_φφ
        let fd = -0.5 * (g11(th + h) - g11(th - h)) / (2.0 * h);
        let cs = CurveSpec::parse(&["1.1", "t"]).unwrap();
        let cd = CurvatureData::new(&sphere, &cs, 0.0, 2).unwrap();
        assert!((cd.gamma[0][1][1].value() - fd).abs() < 1e-8);
    }

    #[test]
    fn flat_and_sphere_schouten() {
        let cs = CurveSpec::parse(&["0.3*t", "0.1 + t^2", "sin(t)"]).unwrap();
        let flat = MetricSpec::flat(&["x", "y", "z"], 0);
        let cd = CurvatureData::new(&flat, &cs, 0.2, 4).unwrap();
        let s = cd.schouten().unwrap();
        assert!(s.p.iter().flatten().all(|p| p.max_abs() == 0.0));
        assert!(cd.weyl().unwrap().iter().flatten().flatten().flatten().all(|w| w.max_abs() == 0.0));

        let sphere = MetricSpec::round_sphere(&["x", "y", "z"]);
        let cd = CurvatureData::new(&sphere, &cs, 0.2, 4).unwrap();
        let s = cd.schouten().unwrap();
        for a in 0..3 {
            for b in 0..3 {
                let d = &s.p[a][b] - &cd.g()[a][b].scale(0.5);
                assert!(d.max_abs() < 1e-9, "{:?}", d);
            }
        }
        assert!(cd.weyl().unwrap().iter().flatten().flatten().flatten().all(|w| w.max_abs() < 1e-9));
        // ∇P = 0 since P = ½ g
        assert!(cd.nabla_p().unwrap().iter().flatten().flatten().all(|w| w.max_abs() < 1e-8));
    }

    #[test]
    fn velocity_sequences() {
        let flat = MetricSpec::flat(&["x", "y"], 0);
        let line = CurveSpec::parse(&["1 + 2*t", "3 - t"]).unwrap();
        let cd = CurvatureData::new(&flat, &line, 0.0, 4).unwrap();
        let v = cd.velocity_sequence(2).unwrap();
        assert!(v[1].iter().all(|x| x.max_abs() == 0.0));

        let circle = CurveSpec::parse(&["cos(t)", "sin(t)"]).unwrap();
        let cd = CurvatureData::new(&flat, &circle, 0.7, 6).unwrap();
        let v = cd.velocity_sequence(2).unwrap();
        for a in 0..2 {
            let minus_x = -&cd.x()[a].truncate(4);
            assert!((&v[1][a] - &minus_x).max_abs() < 1e-14);
            let minus_u = -&v[0][a].truncate(3);
            assert!((&v[2][a] - &minus_u).max_abs() < 1e-14);
        }
        assert!(cd.velocity_sequence(6).is_err());
    }

    #[test]
    fn great_circle_is_geodesic() {
        // equator of the stereographic sphere: x = tan(s/2)... use |x| = 1 circle, arc-length t
        let sphere = MetricSpec::round_sphere(&["x", "y", "z"]);
        // the circle |x| = 1 in the xy-plane is a great circle with unit speed in the angle
        let cs = CurveSpec::parse(&["cos(t)", "sin(t)", "0"]).unwrap();
        let cd = CurvatureData::new(&sphere, &cs, 0.3, 5).unwrap();
        let v = cd.velocity_sequence(1).unwrap();
        assert!(v[1].iter().all(|x| x.max_abs() < 1e-13));
        assert!(rel_close(cd.inner(&v[0], &v[0]).value(), 1.0, 1e-14));
    }

    #[test]
    fn weyl_is_trace_free_and_metric_compatibility() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [3, 4] {
            let ms = random_metric(&mut rng, n);
            let comps: Vec<String> = (0..n).map(|i| format!("{:.2}*t + {:.2}*t^2", 0.3 + 0.1 * i as f64, 0.05 * i as f64)).collect();
            let refs: Vec<&str> = comps.iter().map(|s| s.as_str()).collect();
            let cs = CurveSpec::parse(&refs).unwrap();
            let cd = CurvatureData::new(&ms, &cs, 0.1, 5).unwrap();
            let w = cd.weyl().unwrap();
            let scale = w.iter().flatten().flatten().flatten().map(|x| x.max_abs()).fold(0.0, f64::max);
            for b in 0..n {
                for d in 0..n {
                    let mut tr = Jet::zero(5);
                    for a in 0..n {
                        for c in 0..n {
                            tr += &cd.ginv[a][c] * &w[a][b][c][d];
                        }
                    }
                    assert!(tr.max_abs() <= 1e-9 * (1.0 + scale), "trace {:?}", tr);
                }
            }
            // d/dt g(X, Y) = g(DX, Y) + g(X, DY)
            let x: Vec<Jet> = (0..n).map(|_| Jet::from_coeffs((0..5).map(|_| rng.gen_range(-1.0..1.0)).collect())).collect();
            let y: Vec<Jet> = (0..n).map(|_| Jet::from_coeffs((0..5).map(|_| rng.gen_range(-1.0..1.0)).collect())).collect();
            let lhs = cd.inner(&x, &y).shift_derivative().unwrap();
            let rhs = &cd.inner(&cd.cov_deriv(&x).unwrap(), &y) + &cd.inner(&x, &cd.cov_deriv(&y).unwrap());
            for (l, r) in lhs.coeffs().iter().zip(rhs.coeffs()) {
                assert!((l - r).abs() <= 1e-9 * (1.0 + l.abs()));
            }
        }
    }

    #[test]
    fn conformally_flat_has_zero_weyl() {
        let ms = MetricSpec::conformally_flat(&["x", "y", "z", "w"], 0, "exp(0.3*x - 0.2*y*z + 0.1*w^2)").unwrap();
        let cs = CurveSpec::parse(&["t", "0.5*t^2", "0.2 - t", "sin(t)"]).unwrap();
        let cd = CurvatureData::new(&ms, &cs, 0.3, 4).unwrap();
        let w = cd.weyl().unwrap();
        assert!(w.iter().flatten().flatten().flatten().all(|x| x.max_abs() < 1e-12));
    }

    #[test]
    fn rescaled_schouten_follows_transformation_law() {
        let flat = MetricSpec::flat(&["x", "y", "z"], 0);
        let cs = CurveSpec::parse(&["t", "t^2", "0.3"]).unwrap();
        assert!(trans_rho_residual(&flat, &cs, "exp(x)", 0.2) < 1e-8);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let curved = random_metric(&mut rng, 3);
        assert!(trans_rho_residual(&curved, &cs, "exp(0.2*x - 0.1*y^2 + 0.3*z)", 0.2) < 1e-8);
        let same = flat.conformal_rescale(&RescaleSpec::parse("1", flat.coords()).unwrap());
        let a = CurvatureData::new(&same, &cs, 0.2, 3).unwrap();
        assert_eq!(a.g()[0][0].value(), 1.0);
    }

    #[test]
    fn rescaled_christoffels_follow_transformation_law() {
        // Γ̂^a_bc = Γ^a_bc + δ^a_b Υ_c + δ^a_c Υ_b - g_bc Υ^a
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let ms = random_metric(&mut rng, 3);
        let cs = CurveSpec::parse(&["0.2*t", "t^2", "0.1 + t"]).unwrap();
        let rs = RescaleSpec::parse("exp(0.3*x*y - 0.2*z)", ms.coords()).unwrap();
        let hat = ms.conformal_rescale(&rs);
        let cd = CurvatureData::new(&ms, &cs, 0.4, 2).unwrap();
        let hd = CurvatureData::new(&hat, &cs, 0.4, 2).unwrap();
        let (_, ups, _) = rs.along(ms.coords(), cd.x()).unwrap();
        let up: Vec<Jet> = (0..3).map(|a| crate::jet::dot(&cd.ginv[a], &ups)).collect();
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    let mut want = cd.gamma[a][b][c].clone() - &cd.g()[b][c] * &up[a];
                    if a == b {
                        want += &ups[c];
                    }
                    if a == c {
                        want += &ups[b];
                    }
                    assert!((&hd.gamma[a][b][c] - &want).max_abs() < 1e-12);
                }
            }
        }
    }
}
