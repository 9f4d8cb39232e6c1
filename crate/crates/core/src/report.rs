//! Per-sample reports for scene files and a deterministic JSON writer.

use std::io;

use nalgebra::DMatrix;
use serde::ser::{SerializeMap, Serializer};
use serde::Serialize;

use crate::distinguished::{circle_classify, conserved, ConservedOptions, ConservedReport, FlatAdjointTractor, Providers};
use crate::error::{Error, Result};
use crate::frenet::curvatures_of;
use crate::nullcurves::{helix_check, lorentz_null, theta4};
use crate::scene::Scene;
use crate::tractor::{phi_and_density, reparametrize_check, Analysis, DensityKind};

/// Curvature list serialized as `{"K1": …, "K2": …}` in index order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KList(pub Vec<Option<f64>>);

impl Serialize for KList {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(self.0.len()))?;
        for (i, k) in self.0.iter().enumerate() {
            m.serialize_entry(&format!("K{}", i + 1), k)?;
        }
        m.end()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    Generic,
    Vertex,
    ConformalCircleCandidate,
    RNull,
    /// Every tested derivative is null (or the null derivatives are dependent).
    Degenerate,
}

impl Classification {
    pub fn label(self) -> &'static str {
        match self {
            Classification::Generic => "generic",
            Classification::Vertex => "vertex",
            Classification::ConformalCircleCandidate => "conformal-circle-candidate",
            Classification::RNull => "r-null",
            Classification::Degenerate => "degenerate",
        }
    }
}

/// `r >= 1` is reported as such; for `r = 0` a point whose osculating tractors span
/// rank three at a vertex is a circle candidate.
pub fn classify(an: &Analysis, tol: f64) -> Result<Classification> {
    if an.r >= 1 {
        return Ok(Classification::RNull);
    }
    let f = circle_classify(an, tol)?;
    Ok(if f.vertex && f.rank3 {
        Classification::ConformalCircleCandidate
    } else if f.vertex {
        Classification::Vertex
    } else {
        Classification::Generic
    })
}

fn is_degenerate(e: &Error) -> bool {
    matches!(e, Error::Degenerate(_) | Error::DegenerateLift(_))
}

fn analysis(scene: &Scene, t: f64) -> Result<Analysis> {
    Analysis::new(&scene.metric, &scene.curve, t, scene.order, scene.r)
}

/// K-list at one point. Vertices and unsupported cases give an empty list.
fn k_list(scene: &Scene, an: &Analysis, t: f64) -> Result<Vec<Option<f64>>> {
    let (p, q) = scene.metric.signature();
    if an.r == 0 {
        return match curvatures_of(an) {
            Ok(rep) => Ok(rep.k_frame.iter().zip(&rep.k_det).map(|(a, b)| a.or(*b)).collect()),
            Err(Error::Vertex(_)) => Ok(Vec::new()),
            Err(e) => Err(e),
        };
    }
    if an.r == 1 && p.min(q) == 1 {
        return Ok(lorentz_null(&scene.metric, &scene.curve, t, scene.order)?.k);
    }
    Ok(Vec::new())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantSample {
    pub t: f64,
    pub classification: Classification,
    pub r: Option<usize>,
    pub epsilon: Option<f64>,
    pub deltas: Vec<f64>,
    /// `Φ` for `r = 0`.
    pub phi: Option<f64>,
    /// `Δ_{2r+4}` for `r >= 1`.
    pub delta_top: Option<f64>,
    pub density: Option<f64>,
    pub density_from: Option<String>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    /// `|α|`, zero exactly when the parameter is projective to first order.
    pub projective_residual: Option<f64>,
    pub theta4: Option<f64>,
    #[serde(rename = "K")]
    pub k: KList,
    /// Largest relative change of `Φ`, `Δ_i`, `Θ_4` under `options.rescale_f`.
    pub rescale_deviation: Option<f64>,
    /// Largest deviation from the reparametrization laws under `options.reparam_g`.
    pub reparam_deviation: Option<f64>,
    pub note: Option<String>,
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

pub fn invariants_at(scene: &Scene, t: f64) -> Result<InvariantSample> {
    let an = match analysis(scene, t) {
        Ok(an) => an,
        Err(e) if is_degenerate(&e) => {
            return Ok(InvariantSample {
                t,
                classification: Classification::Degenerate,
                r: None,
                epsilon: None,
                deltas: Vec::new(),
                phi: None,
                delta_top: None,
                density: None,
                density_from: None,
                alpha: None,
                beta: None,
                gamma: None,
                projective_residual: None,
                theta4: None,
                k: KList::default(),
                rescale_deviation: None,
                reparam_deviation: None,
                note: Some(e.to_string()),
            })
        }
        Err(e) => return Err(e),
    };
    let dets = an.determinants();
    let deltas: Vec<f64> = dets.iter().map(|d| d.value).collect();
    let dens = phi_and_density(&an)?;
    let val = |j: Option<&crate::jet::Jet>| j.map(|j| j.value());
    let alpha = val(an.gram.alpha());
    let th = theta4(&an.gram).ok().map(|j| j.value());
    let rescale_deviation = match &scene.rescale {
        None => None,
        Some(rs) => {
            let hat = scene.metric.conformal_rescale(rs);
            let b = Analysis::new(&hat, &scene.curve, t, scene.order, Some(an.r))?;
            let mut w = dets
                .iter()
                .zip(b.determinants())
                .fold(0.0f64, |m, (x, y)| m.max(rel(x.value, y.value)));
            if let (Some(x), Some(y)) = (an.phi(), b.phi()) {
                w = w.max(rel(x.value(), y.value()));
            }
            if let (Some(x), Ok(y)) = (th, theta4(&b.gram)) {
                w = w.max(rel(x, y.value()));
            }
            Some(w)
        }
    };
    let reparam_deviation = match &scene.reparam {
        None => None,
        Some(g) => Some(reparametrize_check(&scene.metric, &scene.curve, g, t, scene.order, Some(an.r))?.worst()),
    };
    let classification = classify(&an, scene.tolerance)?;
    Ok(InvariantSample {
        t,
        classification,
        r: Some(an.r),
        epsilon: Some(an.gram.eps),
        deltas,
        phi: an.phi().map(|p| p.value()),
        delta_top: (an.r >= 1).then(|| dets.get(2 * an.r + 3).map(|d| d.value)).flatten(),
        density: dens.density,
        density_from: Some(
            match dens.kind {
                DensityKind::Phi => "phi".to_string(),
                DensityKind::Delta(i) => format!("delta{}", i),
                DensityKind::Theta4 => "theta4".to_string(),
            },
        ),
        alpha,
        beta: val(an.gram.beta()),
        gamma: val(an.gram.gamma()),
        projective_residual: alpha.map(f64::abs),
        theta4: th,
        k: KList(k_list(scene, &an, t)?),
        rescale_deviation,
        reparam_deviation,
        note: dens.density.is_none().then(|| "invariant below threshold; density undefined".to_string()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassifySample {
    pub t: f64,
    pub classification: Classification,
    pub r: Option<usize>,
    /// `Φ` (or `-Δ_4`) for `r = 0`.
    pub phi: Option<f64>,
    pub vertex: Option<bool>,
    pub span_rank: Option<usize>,
    pub projective: Option<bool>,
    pub note: Option<String>,
}

pub fn classify_at(scene: &Scene, t: f64) -> Result<ClassifySample> {
    let an = match analysis(scene, t) {
        Ok(an) => an,
        Err(e) if is_degenerate(&e) => {
            return Ok(ClassifySample {
                t,
                classification: Classification::Degenerate,
                r: None,
                phi: None,
                vertex: None,
                span_rank: None,
                projective: None,
                note: Some(e.to_string()),
            })
        }
        Err(e) => return Err(e),
    };
    let classification = classify(&an, scene.tolerance)?;
    let flags = (an.r == 0).then(|| circle_classify(&an, scene.tolerance)).transpose()?;
    Ok(ClassifySample {
        t,
        classification,
        r: Some(an.r),
        phi: flags.as_ref().map(|f| f.phi),
        vertex: flags.as_ref().map(|f| f.vertex),
        span_rank: flags.as_ref().map(|f| f.span_rank),
        projective: flags.as_ref().map(|f| f.projective),
        note: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrenetSample {
    pub t: f64,
    pub r: usize,
    /// Number of independent frame tractors.
    pub rank: usize,
    /// Frame route.
    #[serde(rename = "K")]
    pub k: KList,
    /// Determinant route (entries the route does not cover are null).
    #[serde(rename = "K_det")]
    pub k_det: KList,
    pub route_disagreement: Option<f64>,
    pub frenet_residual: Option<f64>,
    /// `K_2 + 2/5 K_1'' - 8/25 K_1² - ½ sgn Θ_4` for null curves with `n = 3`.
    pub dim3_residual: Option<f64>,
    pub note: Option<String>,
}

pub fn frenet_at(scene: &Scene, t: f64) -> Result<FrenetSample> {
    let an = analysis(scene, t)?;
    let (p, q) = scene.metric.signature();
    if an.r == 0 {
        return match curvatures_of(&an) {
            Ok(rep) => Ok(FrenetSample {
                t,
                r: 0,
                rank: rep.rank,
                route_disagreement: Some(rep.route_disagreement()),
                k: KList(rep.k_frame),
                k_det: KList(rep.k_det),
                frenet_residual: rep.frenet_residual,
                dim3_residual: None,
                note: (p.min(q) > 0).then(|| "indefinite signature: K1 only".to_string()),
            }),
            Err(Error::Vertex(m)) => Ok(FrenetSample {
                t,
                r: 0,
                rank: 3,
                k: KList(vec![None; an.dim() - 1]),
                k_det: KList(vec![None; an.dim() - 1]),
                route_disagreement: None,
                frenet_residual: None,
                dim3_residual: None,
                note: Some(format!("vertex: {}", m)),
            }),
            Err(e) => Err(e),
        };
    }
    if an.r == 1 && p.min(q) == 1 {
        let rep = lorentz_null(&scene.metric, &scene.curve, t, scene.order)?;
        let disagreement = rep
            .k
            .iter()
            .zip(&rep.k_det)
            .filter_map(|(a, b)| Some(rel(*a.as_ref()?, *b.as_ref()?)))
            .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
        return Ok(FrenetSample {
            t,
            r: 1,
            rank: rep.rank,
            k: KList(rep.k),
            k_det: KList(rep.k_det),
            route_disagreement: disagreement,
            frenet_residual: Some(rep.frenet_residual),
            dim3_residual: rep.dim3_residual,
            note: rep.density.is_none().then(|| "pseudo-arc-length density vanishes".to_string()),
        });
    }
    Err(Error::Unsupported(format!(
        "Frenet frame for r = {} in signature ({}, {})",
        an.r, p, q
    )))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CircleSample {
    pub t: f64,
    pub be5: f64,
    pub be6: f64,
    pub be7: f64,
    pub phi: f64,
    pub vertex: bool,
    pub span_rank: usize,
    pub rank3: bool,
    pub u2_norm: f64,
    pub alpha: f64,
    pub projective: bool,
}

pub fn circle_at(scene: &Scene, t: f64) -> Result<CircleSample> {
    let an = analysis(scene, t)?;
    let f = circle_classify(&an, scene.tolerance)?;
    Ok(CircleSample {
        t,
        be5: f.residuals.be5,
        be6: f.residuals.be6,
        be7: f.residuals.be7,
        phi: f.phi,
        vertex: f.vertex,
        span_rank: f.span_rank,
        rank3: f.rank3,
        u2_norm: f.u2_norm,
        alpha: f.alpha,
        projective: f.projective,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HelixSample {
    pub t: f64,
    pub r: usize,
    /// `Δ_{2r+4}` when it exists.
    pub delta: Option<f64>,
    pub theta4: f64,
    pub theta4_threshold: f64,
    pub top: f64,
    pub top_threshold: f64,
    pub helix: bool,
}

pub fn helix_at(scene: &Scene, t: f64) -> Result<HelixSample> {
    let rep = helix_check(&scene.metric, &scene.curve, t, scene.order, scene.r)?;
    Ok(HelixSample {
        t,
        r: rep.r,
        delta: rep.delta.map(|d| d.value),
        theta4: rep.theta4,
        theta4_threshold: rep.theta4_threshold,
        top: rep.top,
        top_threshold: rep.top_threshold,
        helix: rep.helix,
    })
}

/// Conserved quantities over all samples; needs `sigma` or `adjoint` in the scene.
pub fn conserved_report(scene: &Scene) -> Result<ConservedReport> {
    if scene.sigma.is_none() && scene.adjoint.is_none() {
        return Err(Error::InvalidScene("conserved needs options.sigma or options.adjoint".into()));
    }
    let adjoint = match &scene.adjoint {
        None => None,
        Some(k) => {
            if !scene.metric.is_constant() {
                return Err(Error::Unsupported("adjoint tractors are only evaluated on flat metrics".into()));
            }
            let env = crate::expr::Env::new(());
            let n = scene.metric.dim();
            let e = scene.metric.entries();
            let mut eta = DMatrix::zeros(n, n);
            for a in 0..n {
                for b in 0..n {
                    eta[(a, b)] = e[a][b].eval(&env)?;
                }
            }
            Some(FlatAdjointTractor::new(eta, k.clone())?)
        }
    };
    let providers = Providers { sigma: scene.sigma.clone(), adjoint };
    let opts = ConservedOptions { order: scene.order, tol: scene.tolerance.max(1e-7), reparametrize: true };
    conserved(&scene.metric, &scene.curve, scene.r, &providers, &scene.samples, opts)
}

/// Header shared by every command's output.
#[derive(Debug, Clone, Serialize)]
pub struct Report<T: Serialize> {
    pub command: String,
    pub dim: usize,
    pub signature: [usize; 2],
    pub jet_order: usize,
    pub tolerance: f64,
    pub samples: T,
}

impl<T: Serialize> Report<T> {
    pub fn new(command: &str, scene: &Scene, samples: T) -> Self {
        let (p, q) = scene.metric.signature();
        Report {
            command: command.to_string(),
            dim: scene.metric.dim(),
            signature: [p, q],
            jet_order: scene.order,
            tolerance: scene.tolerance,
            samples,
        }
    }
}

/// Pretty printing with every float written as `{:.16e}` (17 significant digits).
/// Non-finite floats are written as `null` by the serializer itself.
struct FixedFloats(serde_json::ser::PrettyFormatter<'static>);

impl serde_json::ser::Formatter for FixedFloats {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        write!(w, "{:.16e}", v)
    }
    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        write!(w, "{:.16e}", v as f64)
    }
    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FixedFloats(serde_json::ser::PrettyFormatter::new()));
    value.serialize(&mut ser).expect("reports serialize");
    String::from_utf8(out).expect("JSON is UTF-8")
}
