pub mod distinguished;
pub mod error;
pub mod expr;
pub mod geometry;
pub mod jet;
pub mod jetmat;
pub mod frenet;
pub mod nullcurves;
pub mod report;
pub mod samples;
pub mod scene;
pub mod selftest;
pub mod tractor;

pub use error::{Error, Result};
pub use expr::{parse_expr, Env, EvalError, Expr, Func, ParseError, Ring};
pub use geometry::{CurvatureData, CurveSpec, MetricSpec, RescaleSpec};
pub use jet::{jet_arith, Analytic, ArithOp, Jet, JetError};
pub use report::{to_json, Classification, KList, Report};
pub use scene::{Scene, SceneFile};
pub use tractor::{Analysis, GramTable, TractorJet};
