//! Lowering of comparisons and boolean expressions to condition trees.
//!
//! Numeric comparisons use the bag-of-bits encoding: an `s`-bit value is
//! presented as `s` single-bit tokens (`AT:0****`, `AT:*1***`, ...), and a
//! comparison against a constant becomes a gate tree over such tokens. Bit
//! positions are MSB-first. Each compiled range comparison uses at most `s`
//! leaves, one per bit position.

use std::fmt;

use super::tree::ConditionNode;
use super::{bit_limit, validate_bits, validate_name, validate_value, PolicyError};
use crate::token::Token;

/// Condition tree over plaintext tokens.
pub type ConditionTree = ConditionNode<Token>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Lt,
    Gt,
    Le,
    Ge,
    Eq,
}

impl CmpOp {
    pub const ALL: [CmpOp; 5] = [CmpOp::Lt, CmpOp::Gt, CmpOp::Le, CmpOp::Ge, CmpOp::Eq];

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Gt => ">",
            CmpOp::Le => "<=",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "=",
        }
    }

    pub fn holds(self, v: u64, k: u64) -> bool {
        match self {
            CmpOp::Lt => v < k,
            CmpOp::Gt => v > k,
            CmpOp::Le => v <= k,
            CmpOp::Ge => v >= k,
            CmpOp::Eq => v == k,
        }
    }
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Comparison {
    StringEq {
        name: String,
        value: String,
    },
    Numeric {
        name: String,
        op: CmpOp,
        constant: u64,
        bits: u32,
    },
}

impl Comparison {
    pub fn string_eq(name: &str, value: &str) -> Result<Self, PolicyError> {
        validate_name(name)?;
        validate_value(value)?;
        Ok(Comparison::StringEq {
            name: name.to_string(),
            value: value.to_string(),
        })
    }

    pub fn numeric(name: &str, op: CmpOp, constant: u64, bits: u32) -> Result<Self, PolicyError> {
        validate_name(name)?;
        validate_bits(constant, bits)?;
        Ok(Comparison::Numeric {
            name: name.to_string(),
            op,
            constant,
            bits,
        })
    }

    pub fn name(&self) -> &str {
        match self {
            Comparison::StringEq { name, .. } | Comparison::Numeric { name, .. } => name,
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        match self {
            Comparison::StringEq { name, value } => {
                validate_name(name)?;
                validate_value(value)
            }
            Comparison::Numeric {
                name,
                constant,
                bits,
                ..
            } => {
                validate_name(name)?;
                validate_bits(*constant, *bits)
            }
        }
    }
}

/// Boolean condition over comparisons, before lowering to gates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    Cmp(Comparison),
    And(Vec<Expr>),
    Or(Vec<Expr>),
    Threshold { k: usize, children: Vec<Expr> },
}

impl Expr {
    /// Every comparison, left to right.
    pub fn comparisons(&self) -> Vec<&Comparison> {
        let mut out = Vec::new();
        self.collect(&mut out);
        out
    }

    fn collect<'a>(&'a self, out: &mut Vec<&'a Comparison>) {
        match self {
            Expr::Cmp(c) => out.push(c),
            Expr::And(cs) | Expr::Or(cs) | Expr::Threshold { children: cs, .. } => {
                cs.iter().for_each(|c| c.collect(out))
            }
        }
    }
}

/// `name:` followed by an `s`-character pattern with `bit` at `pos` and `*`
/// everywhere else.
pub fn bit_token(name: &str, bits: u32, pos: u32, bit: bool) -> Token {
    let pattern: String = (0..bits)
        .map(|i| match (i == pos, bit) {
            (false, _) => '*',
            (true, true) => '1',
            (true, false) => '0',
        })
        .collect();
    Token::new(&format!("{name}:{pattern}")).expect("non-empty")
}

/// Reserved token that no attribute expansion can produce: string tokens
/// always contain `=`, numeric ones only `0`, `1` and `*` after the colon.
pub fn never_token(name: &str) -> Token {
    Token::new(&format!("{name}:!never")).expect("non-empty")
}

/// Value of bit `pos` (MSB-first) of an `s`-bit number.
fn bit_at(v: u64, bits: u32, pos: u32) -> bool {
    (v >> (bits - 1 - pos)) & 1 == 1
}

fn bit_leaf(name: &str, bits: u32, pos: u32, bit: bool) -> ConditionTree {
    ConditionNode::Leaf(bit_token(name, bits, pos, bit))
}

/// Prepends `leaf` to `rest` under an AND (`and = true`) or OR gate, merging
/// into `rest` when it already is a gate of the same kind.
fn prepend(leaf: ConditionTree, rest: ConditionTree, and: bool) -> ConditionTree {
    match rest {
        ConditionNode::Gate {
            threshold,
            mut children,
        } if (and && threshold == children.len()) || (!and && threshold == 1) => {
            children.insert(0, leaf);
            let k = if and { children.len() } else { 1 };
            ConditionNode::Gate {
                threshold: k,
                children,
            }
        }
        rest if and => ConditionNode::and(vec![leaf, rest]),
        rest => ConditionNode::or(vec![leaf, rest]),
    }
}

fn always_true(name: &str, bits: u32) -> ConditionTree {
    ConditionNode::or(vec![bit_leaf(name, bits, 0, false), bit_leaf(name, bits, 0, true)])
}

fn unsatisfiable(name: &str) -> ConditionTree {
    ConditionNode::Leaf(never_token(name))
}

/// `v > k`: the lowest-order position where k has a 0 is the last place v can
/// pull ahead; above it, a 0 in k becomes an OR (v has 1 there, or wins
/// below), a 1 becomes an AND (v must match, and win below).
fn greater_than(name: &str, k: u64, bits: u32) -> ConditionTree {
    let Some(last) = (0..bits).rev().find(|&i| !bit_at(k, bits, i)) else {
        return unsatisfiable(name);
    };
    let mut node = bit_leaf(name, bits, last, true);
    for i in (0..last).rev() {
        node = prepend(bit_leaf(name, bits, i, true), node, bit_at(k, bits, i));
    }
    node
}

/// `v < k`, the mirror image of [`greater_than`].
fn less_than(name: &str, k: u64, bits: u32) -> ConditionTree {
    let Some(last) = (0..bits).rev().find(|&i| bit_at(k, bits, i)) else {
        return unsatisfiable(name);
    };
    let mut node = bit_leaf(name, bits, last, false);
    for i in (0..last).rev() {
        node = prepend(bit_leaf(name, bits, i, false), node, !bit_at(k, bits, i));
    }
    node
}

/// Compiles `name op k` over an `s`-bit attribute into a subtree that is
/// satisfied by the expansion of `v` iff `v op k`.
pub fn compile_numeric(name: &str, op: CmpOp, k: u64, bits: u32) -> Result<ConditionTree, PolicyError> {
    validate_name(name)?;
    validate_bits(k, bits)?;
    let max = bit_limit(bits) - 1;
    Ok(match op {
        CmpOp::Gt => greater_than(name, k, bits),
        CmpOp::Lt => less_than(name, k, bits),
        CmpOp::Ge if k == 0 => always_true(name, bits),
        CmpOp::Ge => greater_than(name, k - 1, bits),
        CmpOp::Le if u128::from(k) == max => always_true(name, bits),
        CmpOp::Le => less_than(name, k + 1, bits),
        CmpOp::Eq => {
            ConditionNode::and((0..bits).map(|i| bit_leaf(name, bits, i, bit_at(k, bits, i))).collect())
        }
    })
}

pub fn compile_comparison(c: &Comparison) -> Result<ConditionTree, PolicyError> {
    match c {
        Comparison::StringEq { name, value } => {
            validate_name(name)?;
            validate_value(value)?;
            Ok(ConditionNode::Leaf(
                Token::new(&format!("{name}={value}")).expect("non-empty"),
            ))
        }
        Comparison::Numeric {
            name,
            op,
            constant,
            bits,
        } => compile_numeric(name, *op, *constant, *bits),
    }
}

/// AND becomes a c-of-c gate, OR a 1-of-c gate, k-of-n a k-of-n gate.
pub fn compile_condition(expr: &Expr) -> Result<ConditionTree, PolicyError> {
    let lower = |cs: &[Expr]| cs.iter().map(compile_condition).collect::<Result<Vec<_>, _>>();
    match expr {
        Expr::Cmp(c) => compile_comparison(c),
        Expr::And(cs) => {
            let children = lower(cs)?;
            ConditionNode::gate(children.len(), children)
        }
        Expr::Or(cs) => ConditionNode::gate(1, lower(cs)?),
        Expr::Threshold { k, children } => ConditionNode::gate(*k, lower(children)?),
    }
}
