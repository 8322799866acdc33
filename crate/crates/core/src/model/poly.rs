use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numkit::SymMatrix;

/// Highest total degree accepted.
pub const MAX_DEGREE: u32 = 6;

/// `coeff · Π x_i^{exps[i]}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub coeff: f64,
    pub exps: Vec<u32>,
}

impl Monomial {
    pub fn degree(&self) -> u32 {
        self.exps.iter().sum()
    }

    fn eval_skip(&self, x: &DVector<f64>, dec: &[usize]) -> f64 {
        // Evaluates the monomial with the exponents at `dec` lowered by one
        // each, multiplying in the falling-factorial factors.
        let mut e = self.exps.clone();
        let mut c = self.coeff;
        for &j in dec {
            if e[j] == 0 {
                return 0.0;
            }
            c *= e[j] as f64;
            e[j] -= 1;
        }
        let mut v = c;
        for (i, &k) in e.iter().enumerate() {
            if k > 0 {
                v *= x[i].powi(k as i32);
            }
        }
        v
    }
}

/// A real polynomial in `n_vars` variables `x1 … xn`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    n_vars: usize,
    terms: Vec<Monomial>,
}

impl Polynomial {
    /// Merges duplicate exponents (first-occurrence order) and drops zero terms.
    pub fn new(n_vars: usize, terms: Vec<Monomial>) -> Result<Self> {
        let mut merged: Vec<Monomial> = Vec::new();
        for t in terms {
            if t.exps.len() != n_vars {
                return Err(Error::DimensionMismatch { expected: n_vars, got: t.exps.len() });
            }
            if !t.coeff.is_finite() {
                return Err(Error::InvalidInput("non-finite coefficient".into()));
            }
            if t.degree() > MAX_DEGREE {
                return Err(Error::InvalidInput(format!(
                    "monomial degree {} exceeds {}",
                    t.degree(),
                    MAX_DEGREE
                )));
            }
            match merged.iter_mut().find(|m| m.exps == t.exps) {
                Some(m) => m.coeff += t.coeff,
                None => merged.push(t),
            }
        }
        merged.retain(|m| m.coeff != 0.0);
        Ok(Polynomial { n_vars, terms: merged })
    }

    pub fn zero(n_vars: usize) -> Self {
        Polynomial { n_vars, terms: vec![] }
    }

    pub fn constant(n_vars: usize, c: f64) -> Self {
        Polynomial::new(n_vars, vec![Monomial { coeff: c, exps: vec![0; n_vars] }])
            .expect("constant polynomial")
    }

    /// `Σ c_i x_i + c0`.
    pub fn affine(coeffs: &[f64], c0: f64) -> Self {
        let n = coeffs.len();
        let mut terms = vec![Monomial { coeff: c0, exps: vec![0; n] }];
        for (i, &c) in coeffs.iter().enumerate() {
            let mut e = vec![0; n];
            e[i] = 1;
            terms.push(Monomial { coeff: c, exps: e });
        }
        Polynomial::new(n, terms).expect("affine polynomial")
    }

    /// `Σ_{ij} q_ij x_i x_j` for a symmetric `q`.
    pub fn quadratic_form(q: &SymMatrix) -> Self {
        let n = q.n();
        let mut terms = Vec::new();
        for i in 0..n {
            for j in i..n {
                let c = if i == j { q.matrix()[(i, i)] } else { 2.0 * q.matrix()[(i, j)] };
                let mut e = vec![0; n];
                e[i] += 1;
                e[j] += 1;
                terms.push(Monomial { coeff: c, exps: e });
            }
        }
        Polynomial::new(n, terms).expect("quadratic polynomial")
    }

    /// Parses e.g. `"3 x1^2 x2 - x2"` over the variables `x1 … x{n_vars}`.
    pub fn parse(s: &str, n_vars: usize) -> Result<Self> {
        Parser { src: s.as_bytes(), pos: 0, n_vars }.polynomial()
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(Monomial::degree).max().unwrap_or(0)
    }

    /// True if every monomial has total degree exactly `d` (the zero polynomial qualifies).
    pub fn is_homogeneous(&self, d: u32) -> bool {
        self.terms.iter().all(|m| m.degree() == d)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    fn check(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.n_vars {
            return Err(Error::DimensionMismatch { expected: self.n_vars, got: x.len() });
        }
        Ok(())
    }

    pub fn eval(&self, x: &DVector<f64>) -> Result<f64> {
        self.check(x)?;
        Ok(self.terms.iter().map(|m| m.eval_skip(x, &[])).sum())
    }

    pub fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(x)?;
        Ok(DVector::from_fn(self.n_vars, |j, _| {
            self.terms.iter().map(|m| m.eval_skip(x, &[j])).sum()
        }))
    }

    pub fn hessian(&self, x: &DVector<f64>) -> Result<SymMatrix> {
        self.check(x)?;
        let n = self.n_vars;
        let mut h = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v: f64 = self.terms.iter().map(|m| m.eval_skip(x, &[i, j])).sum();
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        Ok(SymMatrix::new(h).expect("exactly symmetric by construction"))
    }
}

fn fmt_coeff(a: f64) -> String {
    if a != 0.0 && !(1e-4..1e16).contains(&a.abs()) {
        format!("{:e}", a)
    } else {
        format!("{}", a)
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, m) in self.terms.iter().enumerate() {
            let neg = m.coeff < 0.0;
            if k == 0 {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, "{}", if neg { " - " } else { " + " })?;
            }
            let a = m.coeff.abs();
            let factors: Vec<String> = m
                .exps
                .iter()
                .enumerate()
                .filter(|(_, &e)| e > 0)
                .map(|(i, &e)| if e == 1 { format!("x{}", i + 1) } else { format!("x{}^{}", i + 1, e) })
                .collect();
            if factors.is_empty() {
                write!(f, "{}", fmt_coeff(a))?;
            } else if a == 1.0 {
                write!(f, "{}", factors.join(" "))?;
            } else {
                write!(f, "{} {}", fmt_coeff(a), factors.join(" "))?;
            }
        }
        Ok(())
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    n_vars: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::InvalidInput(format!("polynomial parse error at column {}: {}", self.pos + 1, msg))
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn integer(&mut self) -> Option<u32> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.src[start..self.pos]).ok()?.parse().ok()
    }

    fn number(&mut self) -> Result<Option<f64>> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit() || c == b'.') {
            self.pos += 1;
        }
        if self.pos == start {
            return Ok(None);
        }
        if matches!(self.peek(), Some(b'e') | Some(b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some(b'+') | Some(b'-')) {
                self.pos += 1;
            }
            if !matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                self.pos = save;
            } else {
                while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                    self.pos += 1;
                }
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        text.parse::<f64>().map(Some).map_err(|_| {
            self.pos = start;
            self.err(&format!("bad number '{}'", text))
        })
    }

    fn term(&mut self, sign: f64) -> Result<Monomial> {
        self.skip_ws();
        let coeff = self.number()?;
        let mut exps = vec![0u32; self.n_vars];
        let mut any_factor = false;
        loop {
            self.skip_ws();
            let save = self.pos;
            if self.peek() == Some(b'*') {
                self.pos += 1;
                self.skip_ws();
            }
            if self.peek() != Some(b'x') {
                self.pos = save;
                break;
            }
            self.pos += 1;
            let idx = self.integer().ok_or_else(|| self.err("expected variable index after 'x'"))?;
            if idx == 0 || idx as usize > self.n_vars {
                return Err(self.err(&format!("variable x{} out of range 1..={}", idx, self.n_vars)));
            }
            self.skip_ws();
            let mut pow = 1;
            if self.peek() == Some(b'^') {
                self.pos += 1;
                self.skip_ws();
                pow = self.integer().ok_or_else(|| self.err("expected integer exponent"))?;
            }
            exps[idx as usize - 1] += pow;
            any_factor = true;
        }
        if coeff.is_none() && !any_factor {
            return Err(self.err("expected a coefficient or a variable"));
        }
        Ok(Monomial { coeff: sign * coeff.unwrap_or(1.0), exps })
    }

    fn polynomial(&mut self) -> Result<Polynomial> {
        let mut terms = Vec::new();
        self.skip_ws();
        let mut sign = 1.0;
        match self.peek() {
            Some(b'-') => {
                sign = -1.0;
                self.pos += 1;
            }
            Some(b'+') => self.pos += 1,
            _ => {}
        }
        loop {
            terms.push(self.term(sign)?);
            self.skip_ws();
            match self.peek() {
                None => break,
                Some(b'+') => sign = 1.0,
                Some(b'-') => sign = -1.0,
                Some(c) => return Err(self.err(&format!("unexpected character '{}'", c as char))),
            }
            self.pos += 1;
        }
        Polynomial::new(self.n_vars, terms)
    }
}

/// A polynomial map `R^n_in → R^n_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyMap {
    n_in: usize,
    components: Vec<Polynomial>,
}

impl PolyMap {
    pub fn new(n_in: usize, components: Vec<Polynomial>) -> Result<Self> {
        for c in &components {
            if c.n_vars() != n_in {
                return Err(Error::DimensionMismatch { expected: n_in, got: c.n_vars() });
            }
        }
        Ok(PolyMap { n_in, components })
    }

    pub fn parse(components: &[&str], n_in: usize) -> Result<Self> {
        let comps = components
            .iter()
            .map(|s| Polynomial::parse(s, n_in))
            .collect::<Result<Vec<_>>>()?;
        PolyMap::new(n_in, comps)
    }

    pub fn identity(n: usize) -> Self {
        let comps = (0..n)
            .map(|i| {
                let mut c = vec![0.0; n];
                c[i] = 1.0;
                Polynomial::affine(&c, 0.0)
            })
            .collect();
        PolyMap { n_in: n, components: comps }
    }

    /// `x ↦ A x + b`.
    pub fn affine(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<Self> {
        if a.nrows() != b.len() {
            return Err(Error::DimensionMismatch { expected: a.nrows(), got: b.len() });
        }
        let comps = (0..a.nrows())
            .map(|i| {
                let row: Vec<f64> = a.row(i).iter().cloned().collect();
                Polynomial::affine(&row, b[i])
            })
            .collect();
        PolyMap::new(a.ncols(), comps)
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Polynomial] {
        &self.components
    }

    pub fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let vals = self.components.iter().map(|c| c.eval(x)).collect::<Result<Vec<_>>>()?;
        Ok(DVector::from_vec(vals))
    }

    /// `n_out × n_in` Jacobian.
    pub fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let mut j = DMatrix::zeros(self.n_out(), self.n_in);
        for (i, c) in self.components.iter().enumerate() {
            j.set_row(i, &c.gradient(x)?.transpose());
        }
        Ok(j)
    }

    pub fn hessians(&self, x: &DVector<f64>) -> Result<Vec<SymMatrix>> {
        self.components.iter().map(|c| c.hessian(x)).collect()
    }

    /// `∇²F(x)(w, w)`: one Hessian quadratic form per component.
    pub fn second_form(&self, x: &DVector<f64>, w: &DVector<f64>) -> Result<DVector<f64>> {
        if w.len() != self.n_in {
            return Err(Error::DimensionMismatch { expected: self.n_in, got: w.len() });
        }
        let vals = self
            .components
            .iter()
            .map(|c| c.hessian(x).map(|h| h.quad(w)))
            .collect::<Result<Vec<_>>>()?;
        Ok(DVector::from_vec(vals))
    }
}
