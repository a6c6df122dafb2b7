//! Boolean formulas, their evaluation, complementation, and compilation to
//! monotone threshold-gate policies over a doubled literal universe.
//!
//! Every input bit `x_i` owns two attributes, `pos_i` and `neg_i`. An input
//! assignment is encoded as the set holding exactly one of the two for each
//! bit, so negated literals become ordinary policy leaves and any formula
//! (not only a monotone one) compiles to a monotone access structure.

mod parse;
mod policy;

pub use parse::ParseError;
pub use policy::{PolicyNode, PolicyTree, Witness};

use std::collections::BTreeSet;
use std::fmt;

use rand::Rng;
use thiserror::Error;

use crate::wire::{Decode, Encode, Reader, WireError, Writer};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CircuitError {
    #[error("variable x{index} outside arity {arity}")]
    VariableOutOfRange { index: usize, arity: usize },
    #[error("{gate} gate needs at least two children, found {found}")]
    GateArity { gate: &'static str, found: usize },
    #[error("input has {found} bits but the formula has arity {expected}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("formula is constant after folding; it has no meaningful policy")]
    Degenerate,
    #[error("invalid policy gate: {k}-of-{m}")]
    BadThreshold { k: usize, m: usize },
    #[error(transparent)]
    Parse(#[from] ParseError),
}

/// A node of a Boolean formula. Variables are 1-based.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Formula {
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Not(Box<Formula>),
    Var(usize),
    Const(bool),
}

impl Formula {
    pub fn var(i: usize) -> Self {
        Formula::Var(i)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn and(children: impl IntoIterator<Item = Formula>) -> Self {
        Formula::And(children.into_iter().collect())
    }

    pub fn or(children: impl IntoIterator<Item = Formula>) -> Self {
        Formula::Or(children.into_iter().collect())
    }

    fn max_var(&self) -> usize {
        match self {
            Formula::And(c) | Formula::Or(c) => c.iter().map(Formula::max_var).max().unwrap_or(0),
            Formula::Not(c) => c.max_var(),
            Formula::Var(i) => *i,
            Formula::Const(_) => 0,
        }
    }

    fn check(&self, arity: usize) -> Result<(), CircuitError> {
        match self {
            Formula::And(c) | Formula::Or(c) => {
                if c.len() < 2 {
                    let gate = if matches!(self, Formula::And(_)) { "AND" } else { "OR" };
                    return Err(CircuitError::GateArity { gate, found: c.len() });
                }
                c.iter().try_for_each(|f| f.check(arity))
            }
            Formula::Not(c) => c.check(arity),
            Formula::Var(i) if *i == 0 || *i > arity => Err(CircuitError::VariableOutOfRange {
                index: *i,
                arity,
            }),
            Formula::Var(_) | Formula::Const(_) => Ok(()),
        }
    }

    fn eval(&self, bits: &[bool]) -> bool {
        match self {
            Formula::And(c) => c.iter().all(|f| f.eval(bits)),
            Formula::Or(c) => c.iter().any(|f| f.eval(bits)),
            Formula::Not(c) => !c.eval(bits),
            Formula::Var(i) => bits[i - 1],
            Formula::Const(v) => *v,
        }
    }

    /// Removes constants, collapses double negation and unary gates.
    pub fn fold_constants(&self) -> Formula {
        match self {
            Formula::Var(_) | Formula::Const(_) => self.clone(),
            Formula::Not(inner) => match inner.fold_constants() {
                Formula::Const(v) => Formula::Const(!v),
                Formula::Not(x) => *x,
                other => Formula::not(other),
            },
            Formula::And(children) => fold_gate(children, true),
            Formula::Or(children) => fold_gate(children, false),
        }
    }

    /// Pushes negations down to the variables via De Morgan.
    pub fn negation_normal_form(&self) -> Formula {
        self.nnf(false)
    }

    fn nnf(&self, negate: bool) -> Formula {
        match (self, negate) {
            (Formula::Var(_), false) => self.clone(),
            (Formula::Var(_), true) => Formula::not(self.clone()),
            (Formula::Const(v), n) => Formula::Const(*v ^ n),
            (Formula::Not(inner), n) => inner.nnf(!n),
            (Formula::And(c), false) => Formula::And(c.iter().map(|f| f.nnf(false)).collect()),
            (Formula::And(c), true) => Formula::Or(c.iter().map(|f| f.nnf(true)).collect()),
            (Formula::Or(c), false) => Formula::Or(c.iter().map(|f| f.nnf(false)).collect()),
            (Formula::Or(c), true) => Formula::And(c.iter().map(|f| f.nnf(true)).collect()),
        }
    }

    fn write_prefix(&self, out: &mut String) {
        match self {
            Formula::Var(i) => out.push_str(&format!("x{i}")),
            Formula::Const(v) => out.push(if *v { '1' } else { '0' }),
            Formula::Not(inner) => {
                out.push_str("(not ");
                inner.write_prefix(out);
                out.push(')');
            }
            Formula::And(c) | Formula::Or(c) => {
                out.push_str(if matches!(self, Formula::And(_)) { "(and" } else { "(or" });
                for f in c {
                    out.push(' ');
                    f.write_prefix(out);
                }
                out.push(')');
            }
        }
    }

    fn write_infix(&self, f: &mut fmt::Formatter<'_>, parent_binds_tighter: bool) -> fmt::Result {
        match self {
            Formula::Var(i) => write!(f, "x{i}"),
            Formula::Const(v) => write!(f, "{}", *v as u8),
            Formula::Not(inner) => {
                f.write_str("!")?;
                inner.write_infix(f, true)
            }
            Formula::And(c) | Formula::Or(c) => {
                let is_and = matches!(self, Formula::And(_));
                let wrap = parent_binds_tighter || !is_and;
                if wrap {
                    f.write_str("(")?;
                }
                for (k, child) in c.iter().enumerate() {
                    if k > 0 {
                        f.write_str(if is_and { " & " } else { " | " })?;
                    }
                    child.write_infix(f, is_and)?;
                }
                if wrap {
                    f.write_str(")")?;
                }
                Ok(())
            }
        }
    }
}

fn fold_gate(children: &[Formula], is_and: bool) -> Formula {
    // For AND the absorbing constant is false and the neutral one is true.
    let absorbing = !is_and;
    let mut kept = Vec::with_capacity(children.len());
    for child in children {
        match child.fold_constants() {
            Formula::Const(v) if v == absorbing => return Formula::Const(absorbing),
            Formula::Const(_) => {}
            other => kept.push(other),
        }
    }
    match kept.len() {
        0 => Formula::Const(!absorbing),
        1 => kept.pop().expect("one child"),
        _ if is_and => Formula::And(kept),
        _ => Formula::Or(kept),
    }
}

/// A Boolean function `F: {0,1}^n -> {0,1}` given as a formula tree.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BoolFormula {
    root: Formula,
    arity: usize,
}

impl BoolFormula {
    pub fn new(root: Formula, arity: usize) -> Result<Self, CircuitError> {
        root.check(arity)?;
        Ok(Self { root, arity })
    }

    /// Parses infix text (`&`, `|`, `!`, `xN`, `0`, `1`, parentheses). The
    /// arity is the largest variable index mentioned.
    pub fn parse(text: &str) -> Result<Self, CircuitError> {
        let root = parse::parse_infix(text)?;
        let arity = root.max_var();
        Self::new(root, arity)
    }

    pub fn parse_with_arity(text: &str, arity: usize) -> Result<Self, CircuitError> {
        Self::new(parse::parse_infix(text)?, arity)
    }

    /// Parses the canonical prefix form produced by [`BoolFormula::to_prefix`].
    pub fn parse_prefix(text: &str, arity: usize) -> Result<Self, CircuitError> {
        Self::new(parse::parse_prefix(text)?, arity)
    }

    pub fn root(&self) -> &Formula {
        &self.root
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn evaluate(&self, x: &InputAssignment) -> Result<bool, CircuitError> {
        if x.len() != self.arity {
            return Err(CircuitError::ArityMismatch {
                expected: self.arity,
                found: x.len(),
            });
        }
        Ok(self.root.eval(x.bits()))
    }

    /// The function `F(x) xor 1`.
    pub fn complement(&self) -> BoolFormula {
        let wrapped = match &self.root {
            Formula::Not(inner) => (**inner).clone(),
            other => Formula::not(other.clone()),
        };
        BoolFormula {
            root: wrapped.fold_constants(),
            arity: self.arity,
        }
    }

    /// True when constant folding reduces the whole formula to 0 or 1.
    pub fn is_structurally_constant(&self) -> bool {
        matches!(self.root.fold_constants(), Formula::Const(_))
    }

    pub fn to_policy(&self) -> Result<PolicyTree, CircuitError> {
        let folded = self.root.fold_constants();
        if matches!(folded, Formula::Const(_)) {
            return Err(CircuitError::Degenerate);
        }
        PolicyTree::new(literal_policy(&folded.negation_normal_form()))
    }

    /// Canonical prefix notation, e.g. `(and x1 (not x2))`.
    pub fn to_prefix(&self) -> String {
        let mut s = String::new();
        self.root.write_prefix(&mut s);
        s
    }

    /// Fraction of the `2^n` inputs on which the function is 1.
    pub fn ones_fraction(&self) -> f64 {
        let total = 1u64 << self.arity;
        let ones = (0..total)
            .filter(|&v| self.root.eval(InputAssignment::from_index(v, self.arity).bits()))
            .count();
        ones as f64 / total as f64
    }

    /// A random formula over literals of `arity` variables, without constants.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, arity: usize, max_depth: usize) -> Self {
        assert!(arity >= 1, "random formulas need at least one variable");
        let root = random_node(rng, arity, max_depth);
        Self { root, arity }
    }
}

fn random_node<R: Rng + ?Sized>(rng: &mut R, arity: usize, depth: usize) -> Formula {
    if depth == 0 || rng.gen_bool(0.3) {
        let v = Formula::Var(rng.gen_range(1..=arity));
        return if rng.gen_bool(0.5) { Formula::not(v) } else { v };
    }
    let fanout = rng.gen_range(2..=3);
    let children = (0..fanout).map(|_| random_node(rng, arity, depth - 1)).collect();
    let gate = if rng.gen_bool(0.5) {
        Formula::And(children)
    } else {
        Formula::Or(children)
    };
    if rng.gen_bool(0.15) {
        Formula::not(gate)
    } else {
        gate
    }
}

fn literal_policy(nnf: &Formula) -> PolicyNode {
    match nnf {
        Formula::Var(i) => PolicyNode::Leaf(AttributeId::pos(*i)),
        Formula::Not(inner) => match **inner {
            Formula::Var(i) => PolicyNode::Leaf(AttributeId::neg(i)),
            _ => unreachable!("negation normal form only negates variables"),
        },
        Formula::And(c) => PolicyNode::Gate {
            threshold: c.len(),
            children: c.iter().map(literal_policy).collect(),
        },
        Formula::Or(c) => PolicyNode::Gate {
            threshold: 1,
            children: c.iter().map(literal_policy).collect(),
        },
        Formula::Const(_) => unreachable!("constants are folded before compilation"),
    }
}

impl fmt::Display for BoolFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.write_infix(f, false)
    }
}

impl Encode for BoolFormula {
    fn encode(&self, w: &mut Writer) {
        w.put_u32(self.arity as u32);
        w.put_str(&self.to_prefix());
    }
}

impl Decode for BoolFormula {
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let arity = r.u32()? as usize;
        let text = r.string()?;
        BoolFormula::parse_prefix(&text, arity).map_err(|_| WireError::invalid("formula"))
    }
}

/// An input `x in {0,1}^n`; bit `i` (1-based) is `x_i`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InputAssignment {
    bits: Vec<bool>,
}

impl InputAssignment {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    /// Bit `i` of `value` becomes `x_{i+1}`.
    pub fn from_index(value: u64, arity: usize) -> Self {
        Self {
            bits: (0..arity).map(|i| (value >> i) & 1 == 1).collect(),
        }
    }

    /// Parses a string of `0`/`1` characters, leftmost is `x1`.
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        text.chars()
            .enumerate()
            .filter(|(_, c)| !c.is_whitespace())
            .map(|(pos, c)| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(ParseError::Unexpected { pos, found: other }),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Self::new)
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, arity: usize) -> Self {
        Self {
            bits: (0..arity).map(|_| rng.gen_bool(0.5)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// The characteristic attribute set over the doubled universe.
    pub fn attr_encode(&self) -> AttributeSet {
        attr_encode(self)
    }
}

impl fmt::Display for InputAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// A literal attribute: `pos_i` has id `2(i-1)`, `neg_i` has id `2(i-1)+1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AttributeId(pub u32);

impl AttributeId {
    pub fn pos(var: usize) -> Self {
        assert!(var >= 1, "variables are 1-based");
        AttributeId(2 * (var as u32 - 1))
    }

    pub fn neg(var: usize) -> Self {
        assert!(var >= 1, "variables are 1-based");
        AttributeId(2 * (var as u32 - 1) + 1)
    }

    pub fn var(self) -> usize {
        (self.0 / 2) as usize + 1
    }

    pub fn is_positive(self) -> bool {
        self.0 & 1 == 0
    }

    /// Total literal attributes for `arity` variables.
    pub fn universe_size(arity: usize) -> u32 {
        2 * arity as u32
    }
}

impl fmt::Display for AttributeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.is_positive() { "pos" } else { "neg" };
        write!(f, "{sign}_{}", self.var())
    }
}

impl Encode for AttributeId {
    fn encode(&self, w: &mut Writer) {
        w.put_u32(self.0);
    }
}

impl Decode for AttributeId {
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(AttributeId(r.u32()?))
    }
}

pub type AttributeSet = BTreeSet<AttributeId>;

pub fn attr_encode(x: &InputAssignment) -> AttributeSet {
    x.bits()
        .iter()
        .enumerate()
        .map(|(i, &bit)| {
            if bit {
                AttributeId::pos(i + 1)
            } else {
                AttributeId::neg(i + 1)
            }
        })
        .collect()
}
