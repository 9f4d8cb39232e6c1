//! Scene generators with known answers, shared by tests, benches and `selftest`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::expr::{parse_expr, Expr};
use crate::geometry::{CurvatureData, CurveSpec, MetricSpec, RescaleSpec, PARAM};
use crate::jet::Jet;

const COORDS: [&str; 6] = ["x", "y", "z", "w", "v", "u"];

pub fn coords(n: usize) -> Vec<&'static str> {
    COORDS[..n].to_vec()
}

/// Polynomial in `t` with coefficients in increasing degree.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn mul(&self, o: &Poly) -> Poly {
        let mut c = vec![0.0; self.0.len() + o.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in o.0.iter().enumerate() {
                c[i + j] += a * b;
            }
        }
        Poly(c)
    }

    pub fn add(&self, o: &Poly) -> Poly {
        let mut c = vec![0.0; self.0.len().max(o.0.len())];
        for (i, a) in self.0.iter().enumerate() {
            c[i] += a;
        }
        for (i, b) in o.0.iter().enumerate() {
            c[i] += b;
        }
        Poly(c)
    }

    pub fn scale(&self, s: f64) -> Poly {
        Poly(self.0.iter().map(|a| a * s).collect())
    }

    pub fn integrate(&self) -> Poly {
        let mut c = vec![0.0];
        c.extend(self.0.iter().enumerate().map(|(i, a)| a / (i as f64 + 1.0)));
        Poly(c)
    }

    pub fn to_expr(&self) -> Expr {
        let t = Expr::var(PARAM);
        self.0
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(k, c)| Expr::mul(Expr::num(*c), Expr::powi(t.clone(), k as i32)))
            .fold(Expr::num(0.0), Expr::add)
    }
}

/// Random analytic Riemannian metric, a small perturbation of the identity near the origin.
pub fn random_metric(rng: &mut ChaCha8Rng, n: usize) -> MetricSpec {
    let names: Vec<String> = coords(n).iter().map(|s| s.to_string()).collect();
    let mut entries = vec![vec![Expr::Num(0.0); n]; n];
    for a in 0..n {
        for b in a..n {
            let mut s = if a == b { "1".to_string() } else { "0".to_string() };
            for c in 0..n {
                s += &format!(" + {:.3}*{}", rng.gen_range(-0.15..0.15), names[c]);
            }
            s += &format!(" + {:.3}*{}*{}", rng.gen_range(-0.1..0.1), names[a], names[b]);
            if a == b {
                s = format!("exp({:.3}*{})*({})", rng.gen_range(-0.3..0.3), names[(a + 1) % n], s);
            }
            let e = parse_expr(&s).expect("generated metric parses");
            entries[a][b] = e.clone();
            entries[b][a] = e;
        }
    }
    MetricSpec::new(names, entries, (n, 0)).expect("generated metric is valid")
}

/// Random curve through a neighbourhood of the origin with generic derivatives.
pub fn random_curve(rng: &mut ChaCha8Rng, n: usize) -> CurveSpec {
    let comps: Vec<String> = (0..n)
        .map(|i| {
            let lin = if i == 0 { 0.7 } else { rng.gen_range(-0.4..0.4) };
            format!(
                "{:.4}*t + {:.4}*t^2 + {:.4}*t^3 + {:.4}*sin({:.3}*t)",
                lin,
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.4..0.4),
                rng.gen_range(-0.2..0.2),
                1.0 + i as f64 + rng.gen_range(0.0..0.5)
            )
        })
        .collect();
    let refs: Vec<&str> = comps.iter().map(|s| s.as_str()).collect();
    CurveSpec::parse(&refs).expect("generated curve parses")
}

pub fn random_scene(rng: &mut ChaCha8Rng, n: usize) -> (MetricSpec, CurveSpec) {
    (random_metric(rng, n), random_curve(rng, n))
}

/// `exp` of a random quadratic polynomial in the coordinates.
pub fn random_rescale(rng: &mut ChaCha8Rng, n: usize) -> String {
    let names = coords(n);
    let mut s = format!("{:.3}", rng.gen_range(-0.2..0.2));
    for (i, c) in names.iter().enumerate() {
        s += &format!(" + {:.3}*{}", rng.gen_range(-0.4..0.4), c);
        s += &format!(" + {:.3}*{}*{}", rng.gen_range(-0.2..0.2), c, names[(i + 1) % n]);
    }
    format!("exp({})", s)
}

/// A random increasing reparametrization `g(t)` near `[-1, 1]`.
pub fn random_reparam(rng: &mut ChaCha8Rng) -> String {
    format!(
        "{:.3} + {:.3}*t + {:.3}*t^2 + {:.3}*sin({:.3}*t)",
        rng.gen_range(-0.3..0.3),
        rng.gen_range(1.0..1.5),
        rng.gen_range(-0.2..0.2),
        rng.gen_range(-0.1..0.1),
        rng.gen_range(0.5..1.5)
    )
}

/// A random Möbius map `(at + b)/(ct + d)` with positive derivative near `[-1, 1]`.
pub fn random_mobius(rng: &mut ChaCha8Rng) -> String {
    let c: f64 = rng.gen_range(-0.3..0.3);
    let d = 1.0;
    let a: f64 = rng.gen_range(0.8..1.6);
    let b: f64 = rng.gen_range(-0.5..0.5);
    // derivative (ad - bc)/(ct + d)^2
    let b = if a * d - b * c <= 0.1 { 0.0 } else { b };
    format!("({:.4}*t + {:.4})/({:.4}*t + {:.4})", a, b, c, d)
}

/// Residual of the Schouten rescaling law at a point of the curve.
pub fn trans_rho_residual(ms: &MetricSpec, cs: &CurveSpec, f: &str, t0: f64) -> f64 {
    let n = ms.dim();
    let rs = RescaleSpec::parse(f, ms.coords()).expect("rescale parses");
    let hat = ms.conformal_rescale(&rs);
    let cd = CurvatureData::new(ms, cs, t0, 3).expect("curvature data");
    let hd = CurvatureData::new(&hat, cs, t0, 3).expect("curvature data");
    let (_, ups, dups) = rs.along(ms.coords(), cd.x()).expect("positive factor");
    let p = &cd.schouten().expect("n >= 3").p;
    let ph = &hd.schouten().expect("n >= 3").p;
    let mut norm2 = Jet::zero(3);
    for a in 0..n {
        for b in 0..n {
            norm2 += &(&cd.ginv[a][b] * &ups[a]) * &ups[b];
        }
    }
    let mut worst: f64 = 0.0;
    for a in 0..n {
        for b in 0..n {
            let mut nabla = dups[b][a].clone();
            for c in 0..n {
                nabla -= &cd.gamma[c][a][b] * &ups[c];
            }
            let rhs = &p[a][b] - &nabla + &ups[a] * &ups[b] - (&norm2 * &cd.g()[a][b]).scale(0.5);
            let d = &ph[a][b] - &rhs;
            worst = worst.max(d.max_abs() / (1.0 + ph[a][b].max_abs()));
        }
    }
    worst
}

/// Minkowski metric `-dx^2 + dy^2 + …` on `n` coordinates, or a conformal multiple
/// `exp(2 bend (y + z/2))` of it when `bend != 0`.
pub fn minkowski(n: usize, bend: f64) -> MetricSpec {
    let names = coords(n);
    if bend == 0.0 {
        MetricSpec::flat(&names, 1)
    } else {
        MetricSpec::conformally_flat(&names, 1, &format!("exp({} * (2*y + z))", bend)).expect("valid factor")
    }
}

/// Null curve from a Pythagorean-hodograph velocity
/// `U = (a² + |b|², a² - |b|², 2ab_1, …, 2ab_{n-2})` with polynomial `a`, `b`.
pub fn null_from(a: &Poly, b: &[Poly]) -> CurveSpec {
    let bb = b.iter().fold(Poly(vec![0.0]), |s, bi| s.add(&bi.mul(bi)));
    let aa = a.mul(a);
    let mut u = vec![aa.add(&bb), aa.add(&bb.scale(-1.0))];
    u.extend(b.iter().map(|bi| a.mul(bi).scale(2.0)));
    CurveSpec::new(u.iter().map(|p| p.integrate().to_expr()).collect()).expect("curve in t")
}

/// A generic null curve in dimension `n` (`c` has at least `n - 1` entries).
pub fn null_curve(n: usize, c: &[f64], bend: f64) -> (MetricSpec, CurveSpec) {
    let a = Poly(vec![1.0, c[0], 0.1]);
    let b: Vec<Poly> = (1..n - 1)
        .map(|i| {
            let mut p = vec![0.0; i + 3];
            if i == 1 {
                p[1] = 0.5;
            }
            p[i + 1] += c[i];
            p[i + 2] = 0.3 / (i as f64 + 1.0);
            Poly(p)
        })
        .collect();
    (minkowski(n, bend), null_from(&a, &b))
}

/// Flat null Cartan helix `U = (1 + t²/4, 1 - t²/4, t, 0, …)` in `R^{n-1,1}`; `delta`
/// bends it off the helix family.
pub fn null_cartan_helix(n: usize, delta: f64) -> (MetricSpec, CurveSpec) {
    let mut a = Poly(vec![1.0]);
    let mut b = vec![Poly(vec![0.0, 0.5])];
    if n >= 4 {
        b.push(Poly(vec![0.0, 0.0, delta]));
        for _ in 4..n {
            b.push(Poly(vec![0.0]));
        }
    } else {
        a = Poly(vec![1.0, 0.0, delta]);
    }
    (minkowski(n, 0.0), null_from(&a, &b))
}

/// Circle of radius `radius` in the `xy` plane of flat `R^n` under the parameter
/// `angle = phase(t)` (an expression in `t`).
pub fn flat_circle(n: usize, radius: f64, phase: &str) -> (MetricSpec, CurveSpec) {
    let mut comps = vec![format!("{radius}*cos({phase})"), format!("{radius}*sin({phase})")];
    comps.extend((2..n).map(|_| "0".to_string()));
    let refs: Vec<&str> = comps.iter().map(|s| s.as_str()).collect();
    (MetricSpec::flat(&coords(n), 0), CurveSpec::parse(&refs).expect("circle parses"))
}

/// Straight line `p + param(t) v` in flat `R^n`.
pub fn flat_line(p: &[f64], v: &[f64], param: &str) -> (MetricSpec, CurveSpec) {
    let comps: Vec<String> = p.iter().zip(v).map(|(a, b)| format!("{a} + {b}*({param})")).collect();
    let refs: Vec<&str> = comps.iter().map(|s| s.as_str()).collect();
    (MetricSpec::flat(&coords(p.len()), 0), CurveSpec::parse(&refs).expect("line parses"))
}

/// Flat curve whose conformal Frenet frame has the constant curvatures `ks`
/// (`K_1 … K_{n-1}`) in its parameter, which is then its conformal arc-length.
/// The frame `F(s) = exp(sA) F_0` is expanded to degree `degree` in constant
/// coordinates `(a, b, c)` and the point is read off as `x = -b / c`.
pub fn conformal_frenet_curve(ks: &[f64], degree: usize) -> (MetricSpec, CurveSpec) {
    let n = ks.len() + 1;
    let m = n + 2;
    let k = |i: usize| ks[i - 1];
    let mut a = DMatrix::<f64>::zeros(m, m);
    a[(0, 1)] = 1.0;
    a[(1, 0)] = k(1);
    a[(1, 2)] = -1.0;
    a[(2, 1)] = -k(1);
    a[(2, 3)] = -1.0;
    a[(3, 0)] = 1.0;
    if n >= 3 && m > 4 {
        a[(3, 4)] = k(2);
    }
    for i in 4..m {
        a[(i, i - 1)] = -k(i - 2);
        if i + 1 < m {
            a[(i, i + 1)] = k(i - 1);
        }
    }
    // 𝕌_0 = (0, 0, -1), 𝕌_1 = (0, e_1, 0), 𝕌_2 = (1, 0, 0), 𝕌_i = (0, e_{i-1}, 0)
    let mut f0 = DMatrix::<f64>::zeros(m, m);
    f0[(0, m - 1)] = -1.0;
    f0[(1, 1)] = 1.0;
    f0[(2, 0)] = 1.0;
    for i in 3..m {
        f0[(i, i - 1)] = 1.0;
    }
    let mut row = f0.row(0).clone_owned();
    let mut coeffs = vec![vec![0.0; degree + 1]; m];
    let mut power = f0.clone();
    let mut fact = 1.0;
    for d in 0..=degree {
        if d > 0 {
            power = &a * &power;
            fact *= d as f64;
            row = power.row(0).clone_owned();
        }
        for j in 0..m {
            coeffs[j][d] = row[j] / fact;
        }
    }
    let c = Poly(coeffs[m - 1].clone()).to_expr();
    let comps = (1..=n)
        .map(|i| Expr::div(Expr::neg(Poly(coeffs[i].clone()).to_expr()), c.clone()))
        .collect();
    (MetricSpec::flat(&coords(n), 0), CurveSpec::new(comps).expect("curve in t"))
}
