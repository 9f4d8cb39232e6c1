//! JSON scene files: a metric, a curve, sample points and options.

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::expr::{parse_expr, Expr};
use crate::geometry::{CurveSpec, MetricSpec, RescaleSpec};
use crate::tractor::default_order;

pub const DEFAULT_TOLERANCE: f64 = 1e-8;

/// An expression written either as a string or as a bare number.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ExprText {
    Number(f64),
    Text(String),
}

impl ExprText {
    fn parse(&self, at: impl FnOnce() -> String) -> Result<Expr> {
        match self {
            ExprText::Number(v) => Ok(Expr::num(*v)),
            ExprText::Text(s) => parse_expr(s).map_err(|e| Error::parse(at(), e)),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Samples {
    List(Vec<f64>),
    Range { from: f64, to: f64, count: usize },
}

impl Samples {
    pub fn points(&self) -> Result<Vec<f64>> {
        match *self {
            Samples::List(ref v) => {
                if v.is_empty() {
                    return Err(Error::InvalidScene("t_samples is empty".into()));
                }
                Ok(v.clone())
            }
            Samples::Range { from, to, count } => {
                if count == 0 || !from.is_finite() || !to.is_finite() {
                    return Err(Error::InvalidScene("t_samples range needs finite ends and count >= 1".into()));
                }
                if count == 1 {
                    return Ok(vec![from]);
                }
                let h = (to - from) / (count - 1) as f64;
                Ok((0..count).map(|i| if i + 1 == count { to } else { from + h * i as f64 }).collect())
            }
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneOptions {
    pub jet_order: Option<usize>,
    pub tolerance: Option<f64>,
    pub rescale_f: Option<ExprText>,
    pub reparam_g: Option<ExprText>,
    pub r: Option<usize>,
    pub sigma: Option<ExprText>,
    pub adjoint: Option<Vec<Vec<f64>>>,
}

/// The document as written.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub dim: usize,
    pub signature: [usize; 2],
    pub coords: Vec<String>,
    pub metric: Vec<Vec<ExprText>>,
    pub curve: Vec<ExprText>,
    pub t_samples: Samples,
    #[serde(default)]
    pub options: SceneOptions,
}

/// A validated scene.
#[derive(Debug, Clone)]
pub struct Scene {
    pub metric: MetricSpec,
    pub curve: CurveSpec,
    pub samples: Vec<f64>,
    pub order: usize,
    pub tolerance: f64,
    pub rescale: Option<RescaleSpec>,
    pub reparam: Option<Expr>,
    pub r: Option<usize>,
    pub sigma: Option<Expr>,
    /// Constant `(n+2)×(n+2)` matrix acting on flat-model coordinates.
    pub adjoint: Option<DMatrix<f64>>,
}

impl Scene {
    pub fn from_json(text: &str) -> Result<Scene> {
        let file: SceneFile = serde_json::from_str(text)
            .map_err(|e| Error::InvalidScene(format!("line {}, column {}: {}", e.line(), e.column(), e)))?;
        file.validate()
    }
}

impl SceneFile {
    pub fn validate(self) -> Result<Scene> {
        let n = self.dim;
        let bad = |m: String| Err(Error::InvalidScene(m));
        if self.coords.len() != n {
            return bad(format!("coords has {} names, dim is {}", self.coords.len(), n));
        }
        if self.curve.len() != n {
            return bad(format!("curve has {} components, dim is {}", self.curve.len(), n));
        }
        if self.metric.len() != n {
            return bad(format!("metric has {} rows, dim is {}", self.metric.len(), n));
        }
        if let Some(i) = self.metric.iter().position(|row| row.len() != n) {
            return bad(format!("metric[{}] has {} entries, dim is {}", i, self.metric[i].len(), n));
        }
        let entries = self
            .metric
            .iter()
            .enumerate()
            .map(|(a, row)| {
                row.iter()
                    .enumerate()
                    .map(|(b, e)| e.parse(|| format!("metric[{}][{}]", a, b)))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let signature = (self.signature[0], self.signature[1]);
        let metric = MetricSpec::new(self.coords.clone(), entries, signature)?;
        let comps = self
            .curve
            .iter()
            .enumerate()
            .map(|(i, e)| e.parse(|| format!("curve[{}]", i)))
            .collect::<Result<Vec<_>>>()?;
        let curve = CurveSpec::new(comps)?;
        let samples = self.t_samples.points()?;

        let o = self.options;
        let order = o.jet_order.unwrap_or_else(|| default_order(n, signature));
        let tolerance = o.tolerance.unwrap_or(DEFAULT_TOLERANCE);
        if !(tolerance > 0.0 && tolerance.is_finite()) {
            return bad(format!("options.tolerance must be positive, got {}", tolerance));
        }
        let rescale = o
            .rescale_f
            .map(|f| RescaleSpec::new(f.parse(|| "options.rescale_f".into())?, &self.coords))
            .transpose()?;
        let reparam = o.reparam_g.map(|g| g.parse(|| "options.reparam_g".into())).transpose()?;
        if let Some(v) = reparam.as_ref().and_then(|g| g.variables().into_iter().find(|v| v != crate::geometry::PARAM)) {
            return bad(format!("options.reparam_g uses `{}`; only `t` is allowed", v));
        }
        let sigma = o.sigma.map(|s| s.parse(|| "options.sigma".into())).transpose()?;
        if let Some(v) = sigma.as_ref().and_then(|s| s.variables().into_iter().find(|v| !self.coords.contains(v))) {
            return bad(format!("options.sigma uses undeclared variable `{}`", v));
        }
        let adjoint = match o.adjoint {
            None => None,
            Some(rows) => {
                let m = n + 2;
                if rows.len() != m || rows.iter().any(|r| r.len() != m) {
                    return bad(format!("options.adjoint must be a {}x{} matrix", m, m));
                }
                Some(DMatrix::from_fn(m, m, |i, j| rows[i][j]))
            }
        };
        Ok(Scene {
            metric,
            curve,
            samples,
            order,
            tolerance,
            rescale,
            reparam,
            r: o.r,
            sigma,
            adjoint,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HELIX: &str = r#"{
        "dim": 3, "signature": [3, 0], "coords": ["x", "y", "z"],
        "metric": [[1, 0, 0], [0, 1, 0], [0, 0, 1]],
        "curve": ["0.6*cos(t)", "0.6*sin(t)", "0.8*t"],
        "t_samples": {"from": 0, "to": 1, "count": 3},
        "options": {"r": 0}
    }"#;

    #[test]
    fn reads_a_scene() {
        let s = Scene::from_json(HELIX).unwrap();
        assert_eq!(s.samples, vec![0.0, 0.5, 1.0]);
        assert_eq!(s.order, default_order(3, (3, 0)));
        assert_eq!(s.r, Some(0));
        assert!(s.metric.is_constant());
    }

    #[test]
    fn reports_locations() {
        let bad = HELIX.replace("\"0.8*t\"", "\"0.8*(t\"");
        match Scene::from_json(&bad) {
            Err(Error::Parse { context, .. }) => assert_eq!(context, "curve[2]"),
            other => panic!("{:?}", other),
        }
        let asym = HELIX.replace("[0, 1, 0]", "[\"x\", 1, 0]");
        let e = Scene::from_json(&asym).unwrap_err();
        assert!(e.is_input_error() && e.to_string().contains("symmetric"), "{}", e);
        let e = Scene::from_json("{\"dim\": 3,").unwrap_err();
        assert!(e.to_string().contains("line 1"), "{}", e);
        let e = Scene::from_json(&HELIX.replace("\"r\": 0", "\"rr\": 0")).unwrap_err();
        assert!(e.is_input_error());
    }

    #[test]
    fn sample_ranges() {
        assert_eq!(Samples::Range { from: 1.0, to: 2.0, count: 1 }.points().unwrap(), vec![1.0]);
        assert!(Samples::List(vec![]).points().is_err());
        assert!(Samples::Range { from: 0.0, to: 1.0, count: 0 }.points().is_err());
    }
}
