//! Scalar coefficient functions of the coordinates.
//!
//! Grammar (lowest to highest precedence):
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' '-'? INTEGER)?
//! atom    := NUMBER | VARIABLE | FUNC '(' sum ')' | '(' sum ')'
//! ```
//!
//! Variables are `x1..x{dim}`; callers may register extra aliases (for
//! example `z` for the last coordinate of a model). Functions are `sin`,
//! `cos`, `exp`, `sqrt` and `neg`.

use std::fmt;

use thiserror::Error;

use crate::dual::{DualNumber, Scalar};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown identifier `{name}` at byte {pos}")]
    UnknownIdentifier { pos: usize, name: String },
    #[error("variable x{index} at byte {pos} is out of range for dimension {dim}")]
    VariableOutOfRange { pos: usize, index: usize, dim: usize },
    #[error("division by zero in node at byte {pos}")]
    DivisionByZero { pos: usize },
    #[error("domain error in node at byte {pos}: {msg}")]
    Domain { pos: usize, msg: String },
    #[error("point has length {got}, expected {expected}")]
    PointLength { got: usize, expected: usize },
    #[error("derivative direction {direction} out of range for dimension {dim}")]
    Direction { direction: usize, dim: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
    Sqrt,
}

impl UnaryOp {
    fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "neg",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Exp => "exp",
            UnaryOp::Sqrt => "sqrt",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "neg" => UnaryOp::Neg,
            "sin" => UnaryOp::Sin,
            "cos" => UnaryOp::Cos,
            "exp" => UnaryOp::Exp,
            "sqrt" => UnaryOp::Sqrt,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinaryOp {
    fn symbol(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Sub => '-',
            BinaryOp::Mul => '*',
            BinaryOp::Div => '/',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Const(f64),
    /// Zero-based coordinate index.
    Var(usize),
    Unary(UnaryOp, Box<ExprNode>),
    Binary(BinaryOp, Box<ExprNode>, Box<ExprNode>),
    Pow(Box<ExprNode>, i32),
}

/// Immutable expression tree. `pos` is the byte offset of the node in the
/// source it was parsed from (0 for programmatically built nodes).
#[derive(Debug, Clone, PartialEq)]
pub struct ExprNode {
    pub kind: NodeKind,
    pub pos: usize,
}

impl ExprNode {
    pub fn constant(v: f64) -> Self {
        Self { kind: NodeKind::Const(v), pos: 0 }
    }

    pub fn var(index: usize) -> Self {
        Self { kind: NodeKind::Var(index), pos: 0 }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn binary(op: BinaryOp, lhs: ExprNode, rhs: ExprNode) -> Self {
        Self {
            kind: NodeKind::Binary(op, Box::new(lhs), Box::new(rhs)),
            pos: 0,
        }
    }

    /// `lhs + rhs`, folding literal zeros.
    pub fn add(lhs: ExprNode, rhs: ExprNode) -> Self {
        match (lhs.as_const(), rhs.as_const()) {
            (Some(a), Some(b)) => Self::constant(a + b),
            (Some(a), _) if a == 0.0 => rhs,
            (_, Some(b)) if b == 0.0 => lhs,
            _ => Self::binary(BinaryOp::Add, lhs, rhs),
        }
    }

    /// `lhs * rhs`, folding literal zeros and ones.
    pub fn mul(lhs: ExprNode, rhs: ExprNode) -> Self {
        match (lhs.as_const(), rhs.as_const()) {
            (Some(a), Some(b)) => Self::constant(a * b),
            (Some(a), _) if a == 0.0 => Self::zero(),
            (_, Some(b)) if b == 0.0 => Self::zero(),
            (Some(a), _) if a == 1.0 => rhs,
            (_, Some(b)) if b == 1.0 => lhs,
            _ => Self::binary(BinaryOp::Mul, lhs, rhs),
        }
    }

    pub fn as_const(&self) -> Option<f64> {
        match self.kind {
            NodeKind::Const(v) => Some(v),
            _ => None,
        }
    }

    /// True if the node is the literal constant zero.
    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    /// Largest variable index referenced plus one (0 for constants).
    pub fn min_dim(&self) -> usize {
        match &self.kind {
            NodeKind::Const(_) => 0,
            NodeKind::Var(i) => i + 1,
            NodeKind::Unary(_, a) | NodeKind::Pow(a, _) => a.min_dim(),
            NodeKind::Binary(_, a, b) => a.min_dim().max(b.min_dim()),
        }
    }

    /// True if the expression does not depend on variable `index`.
    pub fn independent_of(&self, index: usize) -> bool {
        match &self.kind {
            NodeKind::Const(_) => true,
            NodeKind::Var(i) => *i != index,
            NodeKind::Unary(_, a) | NodeKind::Pow(a, _) => a.independent_of(index),
            NodeKind::Binary(_, a, b) => a.independent_of(index) && b.independent_of(index),
        }
    }

    pub fn eval_generic<S: Scalar>(&self, point: &[S]) -> Result<S, ExprError> {
        match &self.kind {
            NodeKind::Const(v) => Ok(S::from_f64(*v)),
            NodeKind::Var(i) => point.get(*i).copied().ok_or(ExprError::PointLength {
                got: point.len(),
                expected: i + 1,
            }),
            NodeKind::Unary(op, a) => {
                let v = a.eval_generic(point)?;
                Ok(match op {
                    UnaryOp::Neg => -v,
                    UnaryOp::Sin => v.sin(),
                    UnaryOp::Cos => v.cos(),
                    UnaryOp::Exp => v.exp(),
                    UnaryOp::Sqrt => {
                        if v.re() < 0.0 {
                            return Err(ExprError::Domain {
                                pos: self.pos,
                                msg: format!("sqrt of negative value {}", v.re()),
                            });
                        }
                        if v.sqrt_singular() {
                            return Err(ExprError::Domain {
                                pos: self.pos,
                                msg: "sqrt derivative undefined at 0".into(),
                            });
                        }
                        v.sqrt()
                    }
                })
            }
            NodeKind::Binary(op, a, b) => {
                let l = a.eval_generic(point)?;
                let r = b.eval_generic(point)?;
                Ok(match op {
                    BinaryOp::Add => l + r,
                    BinaryOp::Sub => l - r,
                    BinaryOp::Mul => l * r,
                    BinaryOp::Div => {
                        if r.re() == 0.0 {
                            return Err(ExprError::DivisionByZero { pos: self.pos });
                        }
                        l / r
                    }
                })
            }
            NodeKind::Pow(a, n) => {
                let v = a.eval_generic(point)?;
                if *n < 0 && v.re() == 0.0 {
                    return Err(ExprError::DivisionByZero { pos: self.pos });
                }
                Ok(v.powi(*n))
            }
        }
    }

    /// Value at `point`.
    pub fn eval(&self, point: &[f64]) -> Result<f64, ExprError> {
        self.eval_generic(point)
    }

    /// Value and exact partial derivative along coordinate `direction`.
    pub fn eval_dual(&self, point: &[f64], direction: usize) -> Result<DualNumber, ExprError> {
        if direction >= point.len() {
            return Err(ExprError::Direction { direction, dim: point.len() });
        }
        // Constants are common in frame matrices; skip the seeded copy.
        if let NodeKind::Const(v) = self.kind {
            return Ok(DualNumber::constant(v));
        }
        let seeded: Vec<DualNumber> = point
            .iter()
            .enumerate()
            .map(|(i, &x)| DualNumber::new(x, if i == direction { 1.0 } else { 0.0 }))
            .collect();
        self.eval_generic(&seeded)
    }

    /// Gradient by `m` dual passes.
    pub fn gradient(&self, point: &[f64]) -> Result<Vec<f64>, ExprError> {
        if self.as_const().is_some() {
            return Ok(vec![0.0; point.len()]);
        }
        (0..point.len())
            .map(|d| {
                if self.independent_of(d) {
                    Ok(0.0)
                } else {
                    self.eval_dual(point, d).map(|v| v.deriv)
                }
            })
            .collect()
    }
}

impl fmt::Display for ExprNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            NodeKind::Const(v) => {
                if *v < 0.0 {
                    write!(f, "(-{})", -v)
                } else {
                    write!(f, "{v}")
                }
            }
            NodeKind::Var(i) => write!(f, "x{}", i + 1),
            NodeKind::Unary(op, a) => write!(f, "{}({a})", op.name()),
            NodeKind::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            NodeKind::Pow(a, n) => write!(f, "({a})^{n}"),
        }
    }
}

/// Parses `source` over coordinates `x1..x{dim}`.
pub fn parse(source: &str, dim: usize) -> Result<ExprNode, ExprError> {
    parse_with_aliases(source, dim, &[])
}

/// Like [`parse`], with extra variable names mapped to zero-based indices.
pub fn parse_with_aliases(
    source: &str,
    dim: usize,
    aliases: &[(&str, usize)],
) -> Result<ExprNode, ExprError> {
    if source.trim().is_empty() {
        return Err(ExprError::Syntax { pos: 0, msg: "empty expression".into() });
    }
    let mut p = Parser { src: source.as_bytes(), pos: 0, dim, aliases };
    let e = p.sum()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.err(format!("unexpected `{}`", p.src[p.pos] as char)));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    dim: usize,
    aliases: &'a [(&'a str, usize)],
}

impl Parser<'_> {
    fn err(&self, msg: impl Into<String>) -> ExprError {
        ExprError::Syntax { pos: self.pos, msg: msg.into() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<(), ExprError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected `{}`", c as char)))
        }
    }

    fn sum(&mut self) -> Result<ExprNode, ExprError> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinaryOp::Add,
                Some(b'-') => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            let pos = self.pos;
            self.pos += 1;
            let rhs = self.product()?;
            lhs = ExprNode { kind: NodeKind::Binary(op, Box::new(lhs), Box::new(rhs)), pos };
        }
    }

    fn product(&mut self) -> Result<ExprNode, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinaryOp::Mul,
                Some(b'/') => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            let pos = self.pos;
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = ExprNode { kind: NodeKind::Binary(op, Box::new(lhs), Box::new(rhs)), pos };
        }
    }

    fn unary(&mut self) -> Result<ExprNode, ExprError> {
        if self.peek() == Some(b'-') {
            let pos = self.pos;
            self.pos += 1;
            let inner = self.unary()?;
            return Ok(ExprNode { kind: NodeKind::Unary(UnaryOp::Neg, Box::new(inner)), pos });
        }
        self.power()
    }

    fn power(&mut self) -> Result<ExprNode, ExprError> {
        let base = self.atom()?;
        if self.peek() != Some(b'^') {
            return Ok(base);
        }
        let pos = self.pos;
        self.pos += 1;
        let negative = if self.peek() == Some(b'-') {
            self.pos += 1;
            true
        } else {
            false
        };
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("exponent must be an integer constant"));
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or_default();
        let mut n: i32 = text
            .parse()
            .map_err(|_| ExprError::Syntax { pos: start, msg: "exponent too large".into() })?;
        if negative {
            n = -n;
        }
        if matches!(self.peek(), Some(b'.') | Some(b'e') | Some(b'E')) {
            return Err(self.err("exponent must be an integer constant"));
        }
        Ok(ExprNode { kind: NodeKind::Pow(Box::new(base), n), pos })
    }

    fn atom(&mut self) -> Result<ExprNode, ExprError> {
        let c = self.peek().ok_or_else(|| self.err("unexpected end of input"))?;
        let pos = self.pos;
        if c == b'(' {
            self.pos += 1;
            let e = self.sum()?;
            self.expect(b')')?;
            return Ok(e);
        }
        if c.is_ascii_digit() || c == b'.' {
            return self.number();
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while self.pos < self.src.len()
                && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
            {
                self.pos += 1;
            }
            let name = std::str::from_utf8(&self.src[pos..self.pos]).unwrap_or_default();
            if let Some(op) = UnaryOp::from_name(name) {
                self.expect(b'(')?;
                let arg = self.sum()?;
                self.expect(b')')?;
                return Ok(ExprNode { kind: NodeKind::Unary(op, Box::new(arg)), pos });
            }
            if let Some(&(_, idx)) = self.aliases.iter().find(|(a, _)| *a == name) {
                return Ok(ExprNode { kind: NodeKind::Var(idx), pos });
            }
            if let Some(digits) = name.strip_prefix('x') {
                if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
                    let index: usize = digits.parse().unwrap_or(0);
                    if index == 0 || index > self.dim {
                        return Err(ExprError::VariableOutOfRange { pos, index, dim: self.dim });
                    }
                    return Ok(ExprNode { kind: NodeKind::Var(index - 1), pos });
                }
            }
            return Err(ExprError::UnknownIdentifier { pos, name: name.to_string() });
        }
        Err(self.err(format!("unexpected `{}`", c as char)))
    }

    fn number(&mut self) -> Result<ExprNode, ExprError> {
        let start = self.pos;
        let s = self.src;
        while self.pos < s.len() && (s[self.pos].is_ascii_digit() || s[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < s.len() && (s[self.pos] == b'e' || s[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < s.len() && (s[self.pos] == b'+' || s[self.pos] == b'-') {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < s.len() && s[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if digits == self.pos {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&s[start..self.pos]).unwrap_or_default();
        let v: f64 = text.parse().map_err(|_| ExprError::Syntax {
            pos: start,
            msg: format!("malformed number `{text}`"),
        })?;
        Ok(ExprNode { kind: NodeKind::Const(v), pos: start })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(src: &str, dim: usize, x: &[f64]) -> f64 {
        parse(src, dim).unwrap().eval(x).unwrap()
    }

    #[test]
    fn basic_examples() {
        assert_eq!(ev("x1*sin(x3) + 2", 3, &[2.0, 0.0, 0.0]), 2.0);
        assert_eq!(ev("x2", 5, &[1.0, 7.5, 3.0, 4.0, 5.0]), 7.5);
        assert_eq!(ev("7", 1, &[123.0]), 7.0);
        assert_eq!(ev("exp(x1)", 1, &[0.0]), 1.0);
        assert_eq!(ev("x1^2 + x3^2 + 1", 5, &[1.0, 0.0, 2.0, 0.0, 0.0]), 6.0);
        assert_eq!(ev("-x3", 6, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]), -3.0);
    }

    #[test]
    fn precedence() {
        // ^ binds tighter than unary minus, which binds tighter than * and /.
        assert_eq!(ev("-x1^2", 1, &[3.0]), -9.0);
        assert_eq!(ev("2*-x1", 1, &[3.0]), -6.0);
        assert_eq!(ev("1 - 2 - 3", 1, &[0.0]), -4.0);
        assert_eq!(ev("8 / 4 / 2", 1, &[0.0]), 1.0);
        assert_eq!(ev("1 + 2 * 3", 1, &[0.0]), 7.0);
        assert_eq!(ev("x1^-2", 1, &[2.0]), 0.25);
        assert_eq!(ev("1.5e1 + .5", 1, &[0.0]), 15.5);
        assert_eq!(ev("neg(x1)", 1, &[2.0]), -2.0);
    }

    #[test]
    fn aliases() {
        let e = parse_with_aliases("1 + z", 5, &[("z", 4)]).unwrap();
        assert_eq!(e.eval(&[0.0, 0.0, 0.0, 0.0, 2.0]).unwrap(), 3.0);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(parse("", 2), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse("x1 +", 2), Err(ExprError::Syntax { pos: 4, .. })));
        assert!(matches!(parse("foo(x1)", 2), Err(ExprError::UnknownIdentifier { pos: 0, .. })));
        assert!(matches!(parse("x1 + y", 2), Err(ExprError::UnknownIdentifier { pos: 5, .. })));
        assert!(matches!(
            parse("x3", 2),
            Err(ExprError::VariableOutOfRange { index: 3, dim: 2, .. })
        ));
        assert!(matches!(parse("x0", 2), Err(ExprError::VariableOutOfRange { .. })));
        assert!(matches!(parse("x1^x2", 2), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse("x1^1.5", 2), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse("(x1", 2), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse("x1 x2", 2), Err(ExprError::Syntax { pos: 3, .. })));
    }

    #[test]
    fn eval_errors_carry_location() {
        let e = parse("1 + 1/x1", 1).unwrap();
        assert_eq!(e.eval(&[0.0]), Err(ExprError::DivisionByZero { pos: 5 }));
        let e = parse("sqrt(x1)", 1).unwrap();
        assert!(matches!(e.eval(&[-1.0]), Err(ExprError::Domain { pos: 0, .. })));
        assert!(e.eval(&[0.0]).is_ok());
        assert!(e.eval_dual(&[0.0], 0).is_err());
    }

    #[test]
    fn dual_examples() {
        let e = parse("x1*x2", 2).unwrap();
        assert_eq!(e.eval_dual(&[3.0, 5.0], 0).unwrap(), DualNumber::new(15.0, 5.0));
        let e = parse("sin(x1)", 1).unwrap();
        assert_eq!(e.eval_dual(&[0.0], 0).unwrap(), DualNumber::new(0.0, 1.0));
        let e = parse("-x3", 6).unwrap();
        let x = [0.3, -1.2, 2.5, 0.0, 1.0, 4.0];
        let d = e.eval_dual(&x, 2).unwrap();
        // central-difference oracle
        let h = 1e-6;
        let mut xp = x;
        let mut xm = x;
        xp[2] += h;
        xm[2] -= h;
        let fd = (e.eval(&xp).unwrap() - e.eval(&xm).unwrap()) / (2.0 * h);
        assert_eq!(d.value, -2.5);
        assert!((d.deriv - fd).abs() < 1e-8);
        assert_eq!(d.deriv, -1.0);
        assert!(e.eval_dual(&x, 6).is_err());
    }

    /// Random expression source over `dim` variables; avoids singular points
    /// by keeping divisors and sqrt arguments positive.
    fn arb_source(dim: usize) -> impl Strategy<Value = String> {
        let leaf = prop_oneof![
            (1..=dim).prop_map(|i| format!("x{i}")),
            (-30i32..30).prop_map(|k| format!("{}", f64::from(k) / 10.0)),
        ];
        leaf.prop_recursive(4, 24, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} + {b})")),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} - {b})")),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} * {b})")),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} / (2 + sin({b})))")),
                inner.clone().prop_map(|a| format!("sin({a})")),
                inner.clone().prop_map(|a| format!("cos({a})")),
                inner.clone().prop_map(|a| format!("exp(sin({a}))")),
                inner.clone().prop_map(|a| format!("sqrt(1 + ({a})^2)")),
                (inner.clone(), 0i32..4).prop_map(|(a, n)| format!("({a})^{n}")),
                inner.prop_map(|a| format!("-{a}")),
            ]
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn dual_matches_central_difference(
            src in arb_source(3),
            x in proptest::collection::vec(-2.0f64..2.0, 3),
            dir in 0usize..3,
        ) {
            let e = parse(&src, 3).unwrap();
            let d = e.eval_dual(&x, dir).unwrap();
            prop_assert!((d.value - e.eval(&x).unwrap()).abs() <= 1e-12 * (1.0 + d.value.abs()));
            let h = 1e-6 * x[dir].abs().max(1.0);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[dir] += h;
            xm[dir] -= h;
            let fd = (e.eval(&xp).unwrap() - e.eval(&xm).unwrap()) / (2.0 * h);
            prop_assert!((d.deriv - fd).abs() < 1e-6 * (1.0 + d.deriv.abs()),
                "{src}: dual {} vs fd {fd}", d.deriv);
        }

        #[test]
        fn print_parse_round_trip(src in arb_source(3)) {
            let e = parse(&src, 3).unwrap();
            let printed = e.to_string();
            let again = parse(&printed, 3).unwrap();
            for k in 0..100 {
                let t = f64::from(k);
                let x = [(0.37 * t).sin() * 2.0, (0.71 * t).cos() * 2.0, (0.13 * t).sin()];
                let a = e.eval(&x).unwrap();
                let b = again.eval(&x).unwrap();
                prop_assert!(a == b || (a - b).abs() <= 1e-12 * a.abs().max(1.0), "{src} vs {printed}");
            }
        }
    }
}
