//! Analytic resource functions `m(x)` with exact gradient, Hessian and
//! Laplacian.
//!
//! Functions are given as small prefix-notation expression strings, e.g.
//!
//! ```text
//! sub(const 2, add(sq x, sq y))        # 2 - x^2 - y^2
//! add(mul(const 0.75, cos(mul(const 2, mul(pi, x)))), const 0.25)
//! ```
//!
//! Parentheses and commas are decoration: the tokenizer treats them as
//! whitespace and the parser reads pure prefix form by fixed arity. The
//! grammar (documented in the README) admits only smooth primitives, so
//! every parsed function is C^infinity by construction.
//!
//! Derivatives are produced by second-order forward-mode evaluation: each
//! node propagates value, gradient and Hessian together, so the reported
//! derivatives are exact up to rounding and `laplacian` is exactly the
//! trace of `hessian`.

use crate::error::{Error, Result};
use crate::grid::Point;
use serde::{Deserialize, Serialize};

/// Value, gradient and Hessian of a scalar expression at a point.
#[derive(Clone, Copy, Debug)]
pub struct Jet2 {
    pub v: f64,
    pub g: [f64; 2],
    pub h: [[f64; 2]; 2],
}

impl Jet2 {
    fn constant(c: f64) -> Self {
        Jet2 { v: c, g: [0.0; 2], h: [[0.0; 2]; 2] }
    }

    fn coordinate(axis: usize, p: Point) -> Self {
        let mut g = [0.0; 2];
        g[axis] = 1.0;
        Jet2 { v: p[axis], g, h: [[0.0; 2]; 2] }
    }

    fn add(self, o: Self) -> Self {
        let mut h = self.h;
        for i in 0..2 {
            for j in 0..2 {
                h[i][j] += o.h[i][j];
            }
        }
        Jet2 {
            v: self.v + o.v,
            g: [self.g[0] + o.g[0], self.g[1] + o.g[1]],
            h,
        }
    }

    fn neg(self) -> Self {
        let mut h = self.h;
        for row in h.iter_mut() {
            for e in row.iter_mut() {
                *e = -*e;
            }
        }
        Jet2 { v: -self.v, g: [-self.g[0], -self.g[1]], h }
    }

    fn mul(self, o: Self) -> Self {
        let mut h = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                h[i][j] = self.h[i][j] * o.v
                    + self.v * o.h[i][j]
                    + self.g[i] * o.g[j]
                    + self.g[j] * o.g[i];
            }
        }
        Jet2 {
            v: self.v * o.v,
            g: [
                self.g[0] * o.v + self.v * o.g[0],
                self.g[1] * o.v + self.v * o.g[1],
            ],
            h,
        }
    }

    /// Compose with a scalar function given its value and first two
    /// derivatives at `self.v`.
    fn chain(self, f: f64, df: f64, ddf: f64) -> Self {
        let mut h = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                h[i][j] = df * self.h[i][j] + ddf * self.g[i] * self.g[j];
            }
        }
        Jet2 {
            v: f,
            g: [df * self.g[0], df * self.g[1]],
            h,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Expr {
    Const(f64),
    Coord(usize),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Pow(Box<Expr>, i32),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
    /// `gauss1 cx w` = exp(-((x-cx)/w)^2)
    Gauss1 { cx: f64, w: f64 },
    /// `gauss2 cx cy w` = exp(-((x-cx)^2+(y-cy)^2)/w^2)
    Gauss2 { cx: f64, cy: f64, w: f64 },
}

impl Expr {
    fn eval(&self, p: Point) -> Jet2 {
        match self {
            Expr::Const(c) => Jet2::constant(*c),
            Expr::Coord(k) => Jet2::coordinate(*k, p),
            Expr::Add(a, b) => a.eval(p).add(b.eval(p)),
            Expr::Sub(a, b) => a.eval(p).add(b.eval(p).neg()),
            Expr::Mul(a, b) => a.eval(p).mul(b.eval(p)),
            Expr::Neg(a) => a.eval(p).neg(),
            Expr::Pow(a, n) => {
                let u = a.eval(p);
                let n = *n;
                let f = u.v.powi(n);
                let df = n as f64 * u.v.powi(n - 1);
                let ddf = (n * (n - 1)) as f64 * u.v.powi(n - 2);
                u.chain(f, df, ddf)
            }
            Expr::Sin(a) => {
                let u = a.eval(p);
                u.chain(u.v.sin(), u.v.cos(), -u.v.sin())
            }
            Expr::Cos(a) => {
                let u = a.eval(p);
                u.chain(u.v.cos(), -u.v.sin(), -u.v.cos())
            }
            Expr::Exp(a) => {
                let u = a.eval(p);
                let e = u.v.exp();
                u.chain(e, e, e)
            }
            Expr::Gauss1 { cx, w } => {
                let t = Expr::Mul(
                    Box::new(Expr::Const(1.0 / (w * w))),
                    Box::new(Expr::Pow(
                        Box::new(Expr::Sub(
                            Box::new(Expr::Coord(0)),
                            Box::new(Expr::Const(*cx)),
                        )),
                        2,
                    )),
                );
                let u = t.eval(p).neg();
                let e = u.v.exp();
                u.chain(e, e, e)
            }
            Expr::Gauss2 { cx, cy, w } => {
                let r2 = Expr::Add(
                    Box::new(Expr::Pow(
                        Box::new(Expr::Sub(
                            Box::new(Expr::Coord(0)),
                            Box::new(Expr::Const(*cx)),
                        )),
                        2,
                    )),
                    Box::new(Expr::Pow(
                        Box::new(Expr::Sub(
                            Box::new(Expr::Coord(1)),
                            Box::new(Expr::Const(*cy)),
                        )),
                        2,
                    )),
                );
                let t = Expr::Mul(Box::new(Expr::Const(1.0 / (w * w))), Box::new(r2));
                let u = t.eval(p).neg();
                let e = u.v.exp();
                u.chain(e, e, e)
            }
        }
    }

    fn max_coord(&self) -> usize {
        match self {
            Expr::Const(_) => 0,
            Expr::Coord(k) => k + 1,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                a.max_coord().max(b.max_coord())
            }
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Sin(a) | Expr::Cos(a) | Expr::Exp(a) => {
                a.max_coord()
            }
            Expr::Gauss1 { .. } => 1,
            Expr::Gauss2 { .. } => 2,
        }
    }
}

/// The growth-rate function `m(x)`: an analytic expression with exact
/// derivatives, evaluated anywhere in the domain.
#[derive(Clone, Debug)]
pub struct ResourceFunction {
    root: Expr,
    source: String,
}

impl ResourceFunction {
    /// Parse a prefix-notation expression. See the module docs and README
    /// for the grammar.
    pub fn parse(src: &str) -> Result<Self> {
        let cleaned: String = src
            .chars()
            .map(|c| if c == '(' || c == ')' || c == ',' { ' ' } else { c })
            .collect();
        let tokens: Vec<&str> = cleaned.split_whitespace().collect();
        let mut pos = 0usize;
        let root = parse_expr(&tokens, &mut pos)?;
        if pos != tokens.len() {
            return Err(Error::Parse(format!(
                "trailing tokens after expression: {:?}",
                &tokens[pos..]
            )));
        }
        Ok(Self { root, source: src.trim().to_string() })
    }

    /// Number of coordinates the expression references (1 or 2; a constant
    /// expression reports 1).
    pub fn dimension_hint(&self) -> usize {
        self.root.max_coord().max(1)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn jet(&self, p: Point) -> Jet2 {
        self.root.eval(p)
    }

    pub fn value(&self, p: Point) -> f64 {
        self.root.eval(p).v
    }

    pub fn gradient(&self, p: Point) -> [f64; 2] {
        self.root.eval(p).g
    }

    pub fn hessian(&self, p: Point) -> [[f64; 2]; 2] {
        self.root.eval(p).h
    }

    /// Trace of the Hessian; exact by construction.
    pub fn laplacian(&self, p: Point) -> f64 {
        let h = self.root.eval(p).h;
        h[0][0] + h[1][1]
    }

    pub fn gradient_norm_sq(&self, p: Point) -> f64 {
        let g = self.root.eval(p).g;
        g[0] * g[0] + g[1] * g[1]
    }
}

impl Serialize for ResourceFunction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for ResourceFunction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        ResourceFunction::parse(&s).map_err(serde::de::Error::custom)
    }
}

fn parse_number(tokens: &[&str], pos: &mut usize, what: &str) -> Result<f64> {
    let tok = tokens
        .get(*pos)
        .ok_or_else(|| Error::Parse(format!("expected {what}, found end of input")))?;
    *pos += 1;
    if *tok == "pi" {
        return Ok(std::f64::consts::PI);
    }
    tok.parse::<f64>()
        .map_err(|_| Error::Parse(format!("expected {what}, found `{tok}`")))
}

fn parse_expr(tokens: &[&str], pos: &mut usize) -> Result<Expr> {
    let tok = tokens
        .get(*pos)
        .ok_or_else(|| Error::Parse("unexpected end of input".into()))?;
    *pos += 1;
    let sub = |pos: &mut usize| parse_expr(tokens, pos);
    match *tok {
        "x" => Ok(Expr::Coord(0)),
        "y" => Ok(Expr::Coord(1)),
        "pi" => Ok(Expr::Const(std::f64::consts::PI)),
        "const" => Ok(Expr::Const(parse_number(tokens, pos, "number after `const`")?)),
        "add" => Ok(Expr::Add(Box::new(sub(pos)?), Box::new(sub(pos)?))),
        "sub" => Ok(Expr::Sub(Box::new(sub(pos)?), Box::new(sub(pos)?))),
        "mul" => Ok(Expr::Mul(Box::new(sub(pos)?), Box::new(sub(pos)?))),
        "neg" => Ok(Expr::Neg(Box::new(sub(pos)?))),
        "sq" => Ok(Expr::Pow(Box::new(sub(pos)?), 2)),
        "pow" => {
            let base = sub(pos)?;
            let n = parse_number(tokens, pos, "integer exponent")?;
            if n.fract() != 0.0 || n.abs() > 64.0 {
                return Err(Error::Parse(format!("pow exponent must be a small integer, got {n}")));
            }
            Ok(Expr::Pow(Box::new(base), n as i32))
        }
        "sin" => Ok(Expr::Sin(Box::new(sub(pos)?))),
        "cos" => Ok(Expr::Cos(Box::new(sub(pos)?))),
        "exp" => Ok(Expr::Exp(Box::new(sub(pos)?))),
        "gauss1" => {
            let cx = parse_number(tokens, pos, "gauss1 center")?;
            let w = parse_number(tokens, pos, "gauss1 width")?;
            if w <= 0.0 {
                return Err(Error::Parse("gauss1 width must be positive".into()));
            }
            Ok(Expr::Gauss1 { cx, w })
        }
        "gauss2" => {
            let cx = parse_number(tokens, pos, "gauss2 x-center")?;
            let cy = parse_number(tokens, pos, "gauss2 y-center")?;
            let w = parse_number(tokens, pos, "gauss2 width")?;
            if w <= 0.0 {
                return Err(Error::Parse("gauss2 width must be positive".into()));
            }
            Ok(Expr::Gauss2 { cx, cy, w })
        }
        other => {
            // bare numeric literal
            if let Ok(v) = other.parse::<f64>() {
                Ok(Expr::Const(v))
            } else {
                Err(Error::Parse(format!("unknown token `{other}`")))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_gradient(m: &ResourceFunction, p: Point, h: f64) -> [f64; 2] {
        let mut g = [0.0; 2];
        for k in 0..2 {
            let mut pp = p;
            let mut pm = p;
            pp[k] += h;
            pm[k] -= h;
            g[k] = (m.value(pp) - m.value(pm)) / (2.0 * h);
        }
        g
    }

    #[test]
    fn parses_canonical_forms() {
        let m = ResourceFunction::parse("sub(const 2, add(sq x, sq y))").unwrap();
        assert_eq!(m.value([0.5, 0.5]), 1.5);
        assert_eq!(m.dimension_hint(), 2);
        // parens optional: pure prefix works too
        let m2 = ResourceFunction::parse("sub const 2 add sq x sq y").unwrap();
        assert_eq!(m2.value([0.3, -0.4]), m.value([0.3, -0.4]));
        // bare literals accepted
        let m3 = ResourceFunction::parse("sub(2, sq x)").unwrap();
        assert_eq!(m3.value([1.0, 0.0]), 1.0);
    }

    #[test]
    fn rejects_malformed() {
        assert!(ResourceFunction::parse("add x").is_err());
        assert!(ResourceFunction::parse("add x y z").is_err());
        assert!(ResourceFunction::parse("frob x").is_err());
        assert!(ResourceFunction::parse("pow x 0.5").is_err());
    }

    #[test]
    fn quadratic_derivatives_exact() {
        let m = ResourceFunction::parse("sub(const 2, add(sq x, sq y))").unwrap();
        let p = [0.3, -0.7];
        assert_eq!(m.gradient(p), [-0.6, 1.4]);
        assert_eq!(m.hessian(p), [[-2.0, 0.0], [0.0, -2.0]]);
        assert_eq!(m.laplacian(p), -4.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let exprs = [
            "sub(const 2, sq x)",
            "add(mul(const 0.75, cos(mul(const 2, mul(pi, x)))), const 0.25)",
            "mul(sin(mul(const 3, x)), exp(neg(sq y)))",
            "gauss2(0.25, -0.5, 0.4)",
        ];
        let h = 1e-4;
        for src in exprs {
            let m = ResourceFunction::parse(src).unwrap();
            for s in 0..100 {
                // deterministic pseudo-random points in [-0.9, 0.9]^2
                let t = s as f64;
                let p = [
                    0.9 * ((t * 0.7321).sin()),
                    0.9 * ((t * 1.1173 + 0.4).sin()),
                ];
                let g = m.gradient(p);
                let fd = fd_gradient(&m, p, h);
                for k in 0..2 {
                    assert!(
                        (g[k] - fd[k]).abs() <= 10.0 * h * h,
                        "{src}: grad mismatch at {p:?}: {} vs {}",
                        g[k],
                        fd[k]
                    );
                }
            }
        }
    }

    #[test]
    fn hessian_matches_gradient_differences() {
        let m = ResourceFunction::parse("mul(sin(mul(const 3, x)), cos(mul(const 2, y)))").unwrap();
        let h = 1e-4;
        let p = [0.21, -0.37];
        let hess = m.hessian(p);
        for k in 0..2 {
            let mut pp = p;
            let mut pm = p;
            pp[k] += h;
            pm[k] -= h;
            let gp = m.gradient(pp);
            let gm = m.gradient(pm);
            for l in 0..2 {
                let fd = (gp[l] - gm[l]) / (2.0 * h);
                assert!((hess[k][l] - fd).abs() <= 10.0 * h * h);
            }
        }
    }
}
