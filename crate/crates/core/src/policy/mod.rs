//! Plaintext policy representation: `<S, A, T>` tuples, threshold-gate
//! condition trees, bag-of-bits compilation and the plaintext evaluator.

mod attributes;
mod compile;
mod tree;

pub use attributes::{expand_attributes, AttributeAssignment, AttributeValue, TokenSet};
pub use compile::{
    bit_token, compile_comparison, compile_condition, compile_numeric, never_token, CmpOp,
    Comparison, ConditionTree, Expr,
};
pub use tree::{ConditionNode, Shape};

use crate::token::Token;

/// Widest supported numeric attribute.
pub const MAX_BITS: u32 = 64;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    #[error("threshold {k} is outside 1..={c}")]
    Threshold { k: usize, c: usize },
    #[error("value {value} does not fit in {bits} bits")]
    ConstantOutOfRange { value: u64, bits: u32 },
    #[error("bit width must be in 1..={MAX_BITS}, got {0}")]
    BitWidth(u32),
    #[error("invalid attribute name `{0}`")]
    Name(String),
    #[error("invalid attribute value `{0}`")]
    Value(String),
    #[error("empty token")]
    EmptyToken,
}

impl From<crate::token::EmptyToken> for PolicyError {
    fn from(_: crate::token::EmptyToken) -> Self {
        PolicyError::EmptyToken
    }
}

/// The indexed head of a policy: subject, action, target.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SatTuple {
    pub subject: Token,
    pub action: Token,
    pub target: Token,
}

impl SatTuple {
    pub fn new(subject: &str, action: &str, target: &str) -> Result<Self, PolicyError> {
        Ok(SatTuple {
            subject: Token::new(subject)?,
            action: Token::new(action)?,
            target: Token::new(target)?,
        })
    }

    pub fn items(&self) -> [&Token; 3] {
        [&self.subject, &self.action, &self.target]
    }
}

/// Leaf satisfied iff its token is present; gate iff at least k children are.
pub fn evaluate_plaintext(tree: &ConditionTree, tokens: &TokenSet) -> bool {
    tree.evaluate(&mut |t| tokens.contains(t))
}

/// Characters that delimit words in policy and attribute text.
pub fn is_reserved_char(c: char) -> bool {
    c.is_whitespace() || matches!(c, ',' | '<' | '>' | '(' | ')' | '=' | '#')
}

pub(crate) fn validate_name(name: &str) -> Result<(), PolicyError> {
    if name.is_empty() || name.chars().any(|c| is_reserved_char(c) || c == ':') {
        return Err(PolicyError::Name(name.to_string()));
    }
    Ok(())
}

pub(crate) fn validate_value(value: &str) -> Result<(), PolicyError> {
    if value.is_empty() || value.chars().any(is_reserved_char) {
        return Err(PolicyError::Value(value.to_string()));
    }
    Ok(())
}

pub(crate) fn bit_limit(bits: u32) -> u128 {
    1u128 << bits
}

pub(crate) fn validate_bits(value: u64, bits: u32) -> Result<(), PolicyError> {
    if bits == 0 || bits > MAX_BITS {
        return Err(PolicyError::BitWidth(bits));
    }
    if u128::from(value) >= bit_limit(bits) {
        return Err(PolicyError::ConstantOutOfRange { value, bits });
    }
    Ok(())
}
