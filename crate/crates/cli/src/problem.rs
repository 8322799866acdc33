//! Problem files: the JSON schema, parsing with locations, and eager validation.

use std::path::Path;

use epidiff::catalog::{OuterFunction, Plq, PlqPiece, TwiceSemidiff};
use epidiff::composite::ChainSettings;
use epidiff::numkit::{clusters, smat, sym_eig, Polyhedron, SymMatrix};
use epidiff::{CompositeProblem, GridSchedule, PolyMap, Polynomial};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Seed used when neither the command line, the environment nor the file sets one.
pub const DEFAULT_SEED: u64 = 7;

/// A polynomial written either as one expression or as a list of monomials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PolyText {
    Expr(String),
    Terms(Vec<String>),
}

impl PolyText {
    fn build(&self, n_vars: usize, field: &str) -> Result<Polynomial, CliError> {
        let parse = |s: &str| Polynomial::parse(s, n_vars).map_err(|e| CliError::validation(field, e));
        match self {
            PolyText::Expr(s) => parse(s),
            PolyText::Terms(ts) => {
                let mut terms = Vec::new();
                for t in ts {
                    terms.extend(parse(t)?.terms().iter().cloned());
                }
                Polynomial::new(n_vars, terms).map_err(|e| CliError::validation(field, e))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<PolyText>,
    #[serde(rename = "F")]
    pub map: Vec<PolyText>,
    pub g: OuterSpec,
    pub x: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ell: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Catalog tag plus payload. Which payload fields are required depends on `tag`.
///
/// Tags: `plq`, `abs`, `ind_polyhedron`, `ind_nonpos`, `ind_zero`,
/// `ind_neg_semidef`, `max_eig`, `sum_top_eig`, `alpha_eig`, `twice_semidiff`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OuterSpec {
    pub tag: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    /// Matrix order for spectral tags.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub i: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ell: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pieces: Option<Vec<PieceSpec>>,
    #[serde(rename = "G", default, skip_serializing_if = "Option::is_none")]
    pub g: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    #[serde(rename = "E", default, skip_serializing_if = "Option::is_none")]
    pub e: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<PolyText>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<PolyText>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
}

/// `{z : G z ≤ b, E z = d}`, borrowed from a tag or piece.
struct SetSpec<'a> {
    g: &'a Option<Vec<Vec<f64>>>,
    b: &'a Option<Vec<f64>>,
    e: &'a Option<Vec<Vec<f64>>>,
    d: &'a Option<Vec<f64>>,
}

/// One PLQ piece `½⟨A z, z⟩ + ⟨a, z⟩ + alpha` on a polyhedron.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PieceSpec {
    #[serde(rename = "G", default, skip_serializing_if = "Option::is_none")]
    pub g: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    #[serde(rename = "E", default, skip_serializing_if = "Option::is_none")]
    pub e: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<Vec<f64>>,
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub quad: Option<Vec<Vec<f64>>>,
    pub a: Vec<f64>,
    #[serde(default)]
    pub alpha: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius_coeff: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples_per_axis: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius_exponent: Option<f64>,
}

impl ScheduleSpec {
    pub fn apply(&self, mut s: GridSchedule) -> GridSchedule {
        if let Some(t) = self.t0 {
            s.t0 = t;
        }
        if let Some(r) = self.ratio {
            s.ratio = r;
        }
        if let Some(k) = self.steps {
            s.steps = k;
        }
        if let Some(c) = self.radius_coeff {
            s.radius_coeff = c;
        }
        if let Some(k) = self.samples_per_axis {
            s.samples_per_axis = k;
        }
        if let Some(e) = self.radius_exponent {
            s.radius_exponent = e;
        }
        s
    }
}

/// A validated problem with its base point and run settings.
#[derive(Debug, Clone)]
pub struct Instance {
    pub prob: CompositeProblem,
    pub x: DVector<f64>,
    /// Given or `−∇φ(x)`.
    pub v: DVector<f64>,
    pub v_given: bool,
    pub settings: ChainSettings,
}

impl ProblemFile {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem files serialize")
    }

    /// Builds the problem and checks every dimension eagerly. `seed` is the
    /// already-resolved seed.
    pub fn build(&self, seed: u64) -> Result<Instance, CliError> {
        let n = self.x.len();
        if n == 0 {
            return Err(CliError::validation("x", "base point must be nonempty"));
        }
        finite_all("x", &self.x)?;
        let x = DVector::from_column_slice(&self.x);
        let phi = match &self.phi {
            Some(p) => p.build(n, "phi")?,
            None => Polynomial::zero(n),
        };
        if self.map.is_empty() {
            return Err(CliError::validation("F", "at least one component is required"));
        }
        let comps = self
            .map
            .iter()
            .enumerate()
            .map(|(k, c)| c.build(n, &format!("F[{}]", k)))
            .collect::<Result<Vec<_>, _>>()?;
        let map = PolyMap::new(n, comps).map_err(|e| CliError::validation("F", e))?;
        let z = map.eval(&x).map_err(|e| CliError::validation("F", e))?;
        let outer = self.g.build(&z)?;
        if outer.dim() != map.n_out() {
            return Err(CliError::validation(
                "g",
                format!("outer function takes {} arguments but F has {} components", outer.dim(), map.n_out()),
            ));
        }
        let prob = CompositeProblem::new(phi, map, outer).map_err(|e| CliError::validation("g", e))?;
        let (v, v_given) = match &self.v {
            Some(v) => {
                finite_all("v", v)?;
                if v.len() != n {
                    return Err(CliError::validation("v", format!("expected {} entries, got {}", n, v.len())));
                }
                (DVector::from_column_slice(v), true)
            }
            None => (prob.default_v(&x).map_err(|e| CliError::validation("phi", e))?, false),
        };
        for (name, val) in [("kappa", self.kappa), ("ell", self.ell)] {
            if let Some(c) = val {
                if !(c.is_finite() && c >= 0.0) {
                    return Err(CliError::validation(name, "must be a finite nonnegative number"));
                }
            }
        }
        let schedule = self.schedule.clone().unwrap_or_default().apply(GridSchedule::default());
        schedule.validate().map_err(|e| CliError::validation("schedule", e))?;
        let settings = ChainSettings { kappa: self.kappa, ell: self.ell, seed, schedule, ..ChainSettings::default() };
        Ok(Instance { prob, x, v, v_given, settings })
    }
}

impl OuterSpec {
    fn set(&self) -> SetSpec<'_> {
        SetSpec { g: &self.g, b: &self.b, e: &self.e, d: &self.d }
    }

    fn require<T: Copy>(&self, val: Option<T>, name: &str) -> Result<T, CliError> {
        val.ok_or_else(|| CliError::validation(&format!("g.{}", name), format!("required for tag {}", self.tag)))
    }

    /// `z` is `F(x)`, used only to default the group length of `alpha_eig`.
    fn build(&self, z: &DVector<f64>) -> Result<OuterFunction, CliError> {
        let g = match self.tag.as_str() {
            "abs" => OuterFunction::abs(),
            "ind_nonpos" => OuterFunction::ind_nonpos(positive(self.require(self.dim, "dim")?, "g.dim")?),
            "ind_zero" => OuterFunction::ind_zero(positive(self.require(self.dim, "dim")?, "g.dim")?),
            "ind_polyhedron" => OuterFunction::IndPolyhedron(self.set().build(self.dim, "g")?),
            "plq" => {
                let specs = self
                    .pieces
                    .as_ref()
                    .ok_or_else(|| CliError::validation("g.pieces", "required for tag plq"))?;
                if specs.is_empty() {
                    return Err(CliError::validation("g.pieces", "at least one piece is required"));
                }
                let dim = match self.dim {
                    Some(d) => d,
                    None => specs[0].a.len(),
                };
                let pieces = specs
                    .iter()
                    .enumerate()
                    .map(|(k, p)| p.build(dim, &format!("g.pieces[{}]", k)))
                    .collect::<Result<Vec<_>, _>>()?;
                OuterFunction::Plq(Plq::new(pieces).map_err(|e| CliError::validation("g.pieces", e))?)
            }
            "ind_neg_semidef" => OuterFunction::IndNegSemidef { order: self.require(self.n, "n")? },
            "max_eig" => OuterFunction::MaxEig { order: self.require(self.n, "n")? },
            "sum_top_eig" => OuterFunction::SumTopEig { order: self.require(self.n, "n")?, count: self.require(self.i, "i")? },
            "alpha_eig" => {
                let order = self.require(self.n, "n")?;
                let index = self.require(self.i, "i")?;
                let ell = match self.ell {
                    Some(l) => l,
                    None => multiplicity_position(z, order, index)?,
                };
                OuterFunction::AlphaEig { order, index, ell }
            }
            "twice_semidiff" => {
                let m = positive(self.require(self.dim, "dim")?, "g.dim")?;
                let base = self
                    .base
                    .as_ref()
                    .ok_or_else(|| CliError::validation("g.base", "required for tag twice_semidiff"))?
                    .build(m, "g.base")?;
                let h = self
                    .h
                    .as_ref()
                    .ok_or_else(|| CliError::validation("g.h", "required for tag twice_semidiff"))?
                    .build(m, "g.h")?;
                let center = match &self.center {
                    Some(c) => {
                        finite_all("g.center", c)?;
                        if c.len() != m {
                            return Err(CliError::validation("g.center", format!("expected {} entries, got {}", m, c.len())));
                        }
                        DVector::from_column_slice(c)
                    }
                    None => DVector::zeros(m),
                };
                OuterFunction::TwiceSemidiff(TwiceSemidiff::new(base, h, center).map_err(|e| CliError::validation("g", e))?)
            }
            other => return Err(CliError::validation("g.tag", format!("unknown tag {:?}", other))),
        };
        g.validate().map_err(|e| CliError::validation("g", e))?;
        Ok(g)
    }
}

/// Position of `λ_index` inside its eigenvalue cluster at `smat(z)`.
fn multiplicity_position(z: &DVector<f64>, order: usize, index: usize) -> Result<usize, CliError> {
    if index == 0 || index > order {
        return Err(CliError::validation("g.i", "alpha_eig needs 1 <= i <= n"));
    }
    let a = smat(z).map_err(|e| CliError::validation("g.n", e))?;
    if a.n() != order {
        return Err(CliError::validation("g.n", format!("F(x) has matrix order {}, not {}", a.n(), order)));
    }
    let eig = sym_eig(&a);
    let tol = 1e-8 * (1.0 + a.frobenius());
    let cluster = clusters(&eig.values, tol)
        .into_iter()
        .find(|r| r.contains(&(index - 1)))
        .expect("clusters cover every index");
    Ok(index - cluster.start)
}

impl SetSpec<'_> {
    fn build(&self, dim: Option<usize>, field: &str) -> Result<Polyhedron, CliError> {
        let rows = |m: &&Option<Vec<Vec<f64>>>| m.as_ref().and_then(|r| r.first()).map(|r| r.len());
        let dim = match dim.or_else(|| rows(&self.g)).or_else(|| rows(&self.e)) {
            Some(d) => positive(d, &format!("{}.dim", field))?,
            None => return Err(CliError::validation(&format!("{}.dim", field), "required when G and E are empty")),
        };
        let (g, b) = system(self.g, self.b, dim, &format!("{}.G", field), &format!("{}.b", field))?;
        let (e, d) = system(self.e, self.d, dim, &format!("{}.E", field), &format!("{}.d", field))?;
        Polyhedron::new(dim, g, b, e, d).map_err(|e| CliError::validation(field, e))
    }
}

impl PieceSpec {
    fn build(&self, dim: usize, field: &str) -> Result<PlqPiece, CliError> {
        if self.a.len() != dim {
            return Err(CliError::validation(
                &format!("{}.a", field),
                format!("piece dimension {} does not match {}", self.a.len(), dim),
            ));
        }
        finite_all(&format!("{}.a", field), &self.a)?;
        if !self.alpha.is_finite() {
            return Err(CliError::validation(&format!("{}.alpha", field), "must be finite"));
        }
        let set = SetSpec { g: &self.g, b: &self.b, e: &self.e, d: &self.d }.build(Some(dim), field)?;
        let quad = match &self.quad {
            Some(rows) => {
                let m = matrix(rows, dim, &format!("{}.A", field))?;
                if m.nrows() != dim {
                    return Err(CliError::validation(&format!("{}.A", field), format!("expected {} rows, got {}", dim, m.nrows())));
                }
                if (&m - m.transpose()).amax() > 1e-12 * (1.0 + m.amax()) {
                    return Err(CliError::validation(&format!("{}.A", field), "matrix is not symmetric"));
                }
                SymMatrix::symmetrize(&m)
            }
            None => SymMatrix::zeros(dim),
        };
        Ok(PlqPiece { set, quad, lin: DVector::from_column_slice(&self.a), constant: self.alpha })
    }
}

fn system(
    rows: &Option<Vec<Vec<f64>>>,
    rhs: &Option<Vec<f64>>,
    dim: usize,
    mfield: &str,
    vfield: &str,
) -> Result<(DMatrix<f64>, DVector<f64>), CliError> {
    let m = match rows {
        Some(r) => matrix(r, dim, mfield)?,
        None => DMatrix::zeros(0, dim),
    };
    let v = match rhs {
        Some(v) => {
            finite_all(vfield, v)?;
            DVector::from_column_slice(v)
        }
        None if m.nrows() == 0 => DVector::zeros(0),
        None => return Err(CliError::validation(vfield, format!("required when {} is given", mfield))),
    };
    if v.len() != m.nrows() {
        return Err(CliError::validation(vfield, format!("expected {} entries, got {}", m.nrows(), v.len())));
    }
    Ok((m, v))
}

fn matrix(rows: &[Vec<f64>], dim: usize, field: &str) -> Result<DMatrix<f64>, CliError> {
    for (k, r) in rows.iter().enumerate() {
        if r.len() != dim {
            return Err(CliError::validation(field, format!("row {} has {} entries, expected {}", k, r.len(), dim)));
        }
        finite_all(field, r)?;
    }
    Ok(DMatrix::from_fn(rows.len(), dim, |i, j| rows[i][j]))
}

fn finite_all(field: &str, v: &[f64]) -> Result<(), CliError> {
    if v.iter().all(|a| a.is_finite()) {
        Ok(())
    } else {
        Err(CliError::validation(field, "entries must be finite"))
    }
}

fn positive(d: usize, field: &str) -> Result<usize, CliError> {
    if d == 0 {
        Err(CliError::validation(field, "must be positive"))
    } else {
        Ok(d)
    }
}

/// Command line, then `EPIDIFF_SEED`, then the file, then [`DEFAULT_SEED`].
pub fn resolve_seed(flag: Option<u64>, env: Option<&str>, file: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Some(e) = env {
        return e
            .trim()
            .parse()
            .map_err(|_| CliError::validation("EPIDIFF_SEED", format!("{:?} is not an unsigned integer", e)));
    }
    Ok(file.unwrap_or(DEFAULT_SEED))
}

#[cfg(test)]
mod tests {
    use super::*;

    const A1: &str = r#"{"phi": "x2", "F": ["x2 - x1^2"], "g": {"tag": "ind_nonpos", "dim": 1}, "x": [0, 0]}"#;

    fn build(text: &str) -> Result<Instance, CliError> {
        ProblemFile::from_json(text)?.build(DEFAULT_SEED)
    }

    #[test]
    fn minimal_file_builds() {
        let inst = build(A1).unwrap();
        assert_eq!(inst.prob.n(), 2);
        assert_eq!(inst.v, DVector::from_column_slice(&[0.0, -1.0]));
        assert!(!inst.v_given);
    }

    #[test]
    fn missing_dim_is_validation_error() {
        let err = build(r#"{"phi": "x2", "F": ["x2 - x1^2"], "g": {"tag": "ind_nonpos"}, "x": [0, 0]}"#).unwrap_err();
        assert!(matches!(&err, CliError::Validation { field, .. } if field == "g.dim"), "{}", err);
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn plq_piece_dimension_mismatch() {
        let text = r#"{"F": ["x1", "x2"], "x": [0, 0], "g": {"tag": "plq", "pieces": [
            {"G": [[1, 0]], "b": [0], "a": [-1, 0]},
            {"G": [[-1, 0]], "b": [0], "a": [1, 0, 0]}]}}"#;
        let err = build(text).unwrap_err();
        assert!(matches!(&err, CliError::Validation { field, .. } if field == "g.pieces[1].a"), "{}", err);
    }

    #[test]
    fn syntax_error_has_location() {
        let err = ProblemFile::from_json("{\n  \"x\": [0,\n}").unwrap_err();
        match err {
            CliError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("{}", other),
        }
    }

    #[test]
    fn monomial_lists_are_summed() {
        let text = r#"{"phi": ["3 x1^2 x2", "-x1^2 x2", "1"], "F": ["x1"], "g": {"tag": "abs"}, "x": [1, 1]}"#;
        let inst = build(text).unwrap();
        assert_eq!(inst.prob.phi, Polynomial::parse("2 x1^2 x2 + 1", 2).unwrap());
    }

    #[test]
    fn alpha_eig_group_defaults_to_cluster_position() {
        // F(x) = svec(diag(2, 2, 1)); λ2 is the second entry of the top cluster.
        let text = r#"{"F": ["x1", "0", "0", "x1", "0", "x1 - 1"], "x": [2],
            "g": {"tag": "alpha_eig", "n": 3, "i": 2}}"#;
        let inst = build(text).unwrap();
        assert!(matches!(inst.prob.outer, OuterFunction::AlphaEig { ell: 2, .. }));
    }

    #[test]
    fn seed_precedence() {
        assert_eq!(resolve_seed(Some(1), Some("2"), Some(3)).unwrap(), 1);
        assert_eq!(resolve_seed(None, Some("2"), Some(3)).unwrap(), 2);
        assert_eq!(resolve_seed(None, None, Some(3)).unwrap(), 3);
        assert_eq!(resolve_seed(None, None, None).unwrap(), DEFAULT_SEED);
        assert!(resolve_seed(None, Some("x"), None).is_err());
    }
}
