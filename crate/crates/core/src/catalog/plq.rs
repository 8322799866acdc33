use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cone::CONE_TOL;
use crate::error::{Error, Result};
use crate::model::ExtReal;
use crate::numkit::{PolyCone, Polyhedron, SymMatrix};

pub(crate) const ACT_TOL: f64 = 1e-9;
pub(crate) const MEMBER_TOL: f64 = 1e-9;
pub(crate) const SUBDIFF_ACT_TOL: f64 = 1e-8;
const AGREE_TOL: f64 = 1e-9;
const AGREE_SAMPLES: usize = 200;

/// `g(z) = ½⟨A z, z⟩ + ⟨a, z⟩ + α` on the polyhedron `set`.
#[derive(Debug, Clone)]
pub struct PlqPiece {
    pub set: Polyhedron,
    pub quad: SymMatrix,
    pub lin: DVector<f64>,
    pub constant: f64,
}

impl PlqPiece {
    pub fn value(&self, z: &DVector<f64>) -> f64 {
        0.5 * self.quad.quad(z) + self.lin.dot(z) + self.constant
    }

    pub fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        self.quad.matrix() * z + &self.lin
    }
}

/// Convex piecewise linear-quadratic function with domain `∪ C_i`.
#[derive(Debug, Clone)]
pub struct Plq {
    dim: usize,
    pieces: Vec<PlqPiece>,
    full_domain: bool,
}

/// `N_C(z)` as a polyhedron shifted by `shift`: `shift + N_C(z)`.
pub(crate) fn shifted_normal(c: &Polyhedron, z: &DVector<f64>, shift: &DVector<f64>) -> Result<Polyhedron> {
    let n = c.tangent_cone(z, ACT_TOL)?.polar()?;
    let g = n.ineq_matrix().clone();
    let e = n.eq_matrix().clone();
    let h = &g * shift;
    let d = &e * shift;
    Polyhedron::new(c.dim(), g, h, e, d)
}

pub(crate) fn normal_polyhedron(c: &Polyhedron, z: &DVector<f64>) -> Result<Polyhedron> {
    shifted_normal(c, z, &DVector::zeros(c.dim()))
}

/// `u ∈ T²_C(z, w) = T_{T_C(z)}(w)` for a polyhedron `C`.
pub(crate) fn second_order_tangent(
    c: &Polyhedron,
    z: &DVector<f64>,
    w: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<bool> {
    let t = c.tangent_cone(z, ACT_TOL)?;
    if !t.contains(w, MEMBER_TOL) {
        return Err(Error::TangentPreconditionFailed);
    }
    let tol = ACT_TOL * (1.0 + w.norm());
    Ok(t.tangent_cone(w, tol)?.contains(u, MEMBER_TOL))
}

impl Plq {
    /// Checks dimensions and that pieces agree on pairwise intersections
    /// (sampled by projecting random points onto each intersection).
    pub fn new(pieces: Vec<PlqPiece>) -> Result<Self> {
        let dim = pieces
            .first()
            .ok_or_else(|| Error::InvalidInput("PLQ function needs at least one piece".into()))?
            .set
            .dim();
        for (k, p) in pieces.iter().enumerate() {
            if p.set.dim() != dim || p.quad.n() != dim || p.lin.len() != dim {
                return Err(Error::InvalidInput(format!(
                    "PLQ piece {} does not match dimension {}",
                    k, dim
                )));
            }
            if !p.constant.is_finite() || p.lin.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("PLQ piece {} has non-finite data", k)));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x91a7);
        for i in 0..pieces.len() {
            for j in (i + 1)..pieces.len() {
                let both = pieces[i].set.intersect(&pieces[j].set)?;
                if both.is_empty()? {
                    continue;
                }
                for _ in 0..AGREE_SAMPLES {
                    let p = DVector::from_fn(dim, |_, _| rng.gen_range(-5.0..5.0));
                    let q = both.project(&p)?;
                    let (a, b) = (pieces[i].value(&q), pieces[j].value(&q));
                    if (a - b).abs() > AGREE_TOL * (1.0 + a.abs().max(b.abs())) {
                        return Err(Error::InvalidInput(format!(
                            "PLQ pieces {} and {} disagree on their intersection ({} vs {})",
                            i, j, a, b
                        )));
                    }
                }
            }
        }
        let mut plq = Plq { dim, pieces, full_domain: false };
        plq.full_domain = plq.sample_full_domain(&mut rng);
        Ok(plq)
    }

    fn sample_full_domain(&self, rng: &mut ChaCha8Rng) -> bool {
        (0..200).all(|_| {
            let z = DVector::from_fn(self.dim, |_, _| rng.gen_range(-10.0..10.0));
            self.pieces.iter().any(|p| p.set.contains(&z, 1e-12))
        })
    }

    /// `|·|` on the real line.
    pub fn abs() -> Self {
        let one = |s: f64| PlqPiece {
            set: Polyhedron::from_inequalities(
                DMatrix::from_row_slice(1, 1, &[-s]),
                DVector::zeros(1),
            )
            .expect("half-line"),
            quad: SymMatrix::zeros(1),
            lin: DVector::from_element(1, s),
            constant: 0.0,
        };
        Plq::new(vec![one(-1.0), one(1.0)]).expect("absolute value")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pieces(&self) -> &[PlqPiece] {
        &self.pieces
    }

    pub fn has_full_domain(&self) -> bool {
        self.full_domain
    }

    pub(crate) fn eval(&self, z: &DVector<f64>, tol: f64) -> ExtReal {
        self.pieces
            .iter()
            .find(|p| p.set.contains(z, tol))
            .map_or(ExtReal::PlusInf, |p| ExtReal::Finite(p.value(z)))
    }

    /// Pieces whose set contains `z`, in index order.
    pub fn active(&self, z: &DVector<f64>) -> Vec<usize> {
        let tol = ACT_TOL * (1.0 + z.norm());
        (0..self.pieces.len()).filter(|&i| self.pieces[i].set.contains(z, tol)).collect()
    }

    /// `T_{C_i}(z)`.
    pub fn tangent(&self, i: usize, z: &DVector<f64>) -> Result<PolyCone> {
        let tol = ACT_TOL * (1.0 + z.norm());
        self.pieces[i].set.tangent_cone(z, tol)
    }

    /// `∂g(z) = ∩_{active i} (∇g_i(z) + N_{C_i}(z))`.
    pub(crate) fn subdiff(&self, z: &DVector<f64>) -> Result<Polyhedron> {
        let mut out = Polyhedron::whole(self.dim);
        for i in self.active(z) {
            let tol = ACT_TOL * (1.0 + z.norm());
            let n = self.pieces[i].set.tangent_cone(z, tol)?.polar()?;
            let grad = self.pieces[i].gradient(z);
            let part = Polyhedron::new(
                self.dim,
                n.ineq_matrix().clone(),
                n.ineq_matrix() * &grad,
                n.eq_matrix().clone(),
                n.eq_matrix() * &grad,
            )?;
            out = out.intersect(&part)?;
        }
        Ok(out)
    }

    pub(crate) fn tangent_contains(&self, z: &DVector<f64>, w: &DVector<f64>) -> Result<bool> {
        for i in self.active(z) {
            if self.tangent(i, z)?.contains(w, MEMBER_TOL) {
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// Minimum over active pieces whose tangent cone holds `w`; ties go to
    /// the lowest piece index.
    pub(crate) fn subderivative(&self, z: &DVector<f64>, w: &DVector<f64>) -> Result<ExtReal> {
        let mut best = ExtReal::PlusInf;
        for i in self.active(z) {
            if self.tangent(i, z)?.contains(w, MEMBER_TOL) {
                let v = ExtReal::Finite(self.pieces[i].gradient(z).dot(w));
                if v < best {
                    best = v;
                }
            }
        }
        Ok(best)
    }

    pub(crate) fn second_subderivative(
        &self,
        z: &DVector<f64>,
        y: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<ExtReal> {
        let mut best = ExtReal::PlusInf;
        for i in self.active(z) {
            let p = &self.pieces[i];
            let ortho = (y - p.gradient(z)).dot(u).abs() <= CONE_TOL * (1.0 + u.norm()) * (1.0 + y.norm());
            if ortho && self.tangent(i, z)?.contains(u, MEMBER_TOL) {
                let v = ExtReal::Finite(p.quad.quad(u));
                if v < best {
                    best = v;
                }
            }
        }
        Ok(best)
    }

    /// Pieces admitting the arc `z + t w + ½t² u` at first order with slope `dw`.
    pub(crate) fn parabolic_pieces(
        &self,
        z: &DVector<f64>,
        w: &DVector<f64>,
        dw: f64,
    ) -> Result<Vec<(usize, PolyCone)>> {
        let mut out = Vec::new();
        for i in self.active(z) {
            let t = self.tangent(i, z)?;
            if !t.contains(w, MEMBER_TOL) {
                continue;
            }
            let slope = self.pieces[i].gradient(z).dot(w);
            if (slope - dw).abs() > CONE_TOL * (1.0 + w.norm()) * (1.0 + dw.abs()) {
                continue;
            }
            let t2 = t.tangent_cone(w, ACT_TOL * (1.0 + w.norm()))?;
            out.push((i, t2));
        }
        Ok(out)
    }

    pub(crate) fn parabolic_subderivative(
        &self,
        z: &DVector<f64>,
        w: &DVector<f64>,
        u: &DVector<f64>,
        dw: ExtReal,
    ) -> Result<ExtReal> {
        let dw = dw.finite().ok_or(Error::SubderivativeNotFinite)?;
        let mut best = ExtReal::PlusInf;
        for (i, t2) in self.parabolic_pieces(z, w, dw)? {
            if t2.contains(u, MEMBER_TOL) {
                let p = &self.pieces[i];
                let v = ExtReal::Finite(p.quad.quad(w) + p.gradient(z).dot(u));
                if v < best {
                    best = v;
                }
            }
        }
        Ok(best)
    }

    pub(crate) fn second_order_tangent(
        &self,
        z: &DVector<f64>,
        w: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<bool> {
        for i in self.active(z) {
            let t = self.tangent(i, z)?;
            if t.contains(w, MEMBER_TOL) && t.tangent_cone(w, ACT_TOL * (1.0 + w.norm()))?.contains(u, MEMBER_TOL) {
                return Ok(true);
            }
        }
        Ok(false)
    }

    pub(crate) fn project_domain(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        let mut best: Option<(f64, DVector<f64>)> = None;
        for p in &self.pieces {
            if p.set.is_empty()? {
                continue;
            }
            let q = p.set.project(z)?;
            let d = (&q - z).norm();
            if best.as_ref().map_or(true, |(bd, _)| d < *bd) {
                best = Some((d, q));
            }
        }
        best.map(|(_, q)| q).ok_or(Error::EmptyPolyhedron)
    }

    /// `N_{dom g}(z) = ∩_{active i} N_{C_i}(z)`.
    pub(crate) fn domain_normal_cone(&self, z: &DVector<f64>) -> Result<PolyCone> {
        let mut out = PolyCone::whole(self.dim);
        for i in self.active(z) {
            out = out.intersect(&self.tangent(i, z)?.polar()?)?;
        }
        Ok(out)
    }
}
