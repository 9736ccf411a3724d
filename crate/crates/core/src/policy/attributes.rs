use std::collections::{BTreeMap, BTreeSet};

use super::compile::bit_token;
use super::{validate_bits, validate_name, validate_value, PolicyError};
use crate::token::Token;

/// Canonical token set presented to the evaluator.
pub type TokenSet = BTreeSet<Token>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AttributeValue {
    Str(String),
    Num { value: u64, bits: u32 },
}

/// Contextual attributes of one request, keyed by name.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AttributeAssignment {
    values: BTreeMap<String, AttributeValue>,
}

impl AttributeAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_str(&mut self, name: &str, value: &str) -> Result<(), PolicyError> {
        validate_name(name)?;
        validate_value(value)?;
        self.values
            .insert(name.to_string(), AttributeValue::Str(value.to_string()));
        Ok(())
    }

    pub fn insert_numeric(&mut self, name: &str, value: u64, bits: u32) -> Result<(), PolicyError> {
        validate_name(name)?;
        validate_bits(value, bits)?;
        self.values
            .insert(name.to_string(), AttributeValue::Num { value, bits });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&AttributeValue> {
        self.values.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &AttributeValue)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// String attributes become `name=value`; an `s`-bit numeric attribute
/// becomes `s` single-bit wildcard tokens, MSB first.
pub fn expand_attributes(assignment: &AttributeAssignment) -> Result<TokenSet, PolicyError> {
    let mut out = TokenSet::new();
    for (name, value) in assignment.iter() {
        match value {
            AttributeValue::Str(v) => {
                out.insert(Token::new(&format!("{name}={v}")).expect("non-empty"));
            }
            AttributeValue::Num { value, bits } => {
                validate_bits(*value, *bits)?;
                for pos in 0..*bits {
                    let bit = (value >> (bits - 1 - pos)) & 1 == 1;
                    out.insert(bit_token(name, *bits, pos, bit));
                }
            }
        }
    }
    Ok(out)
}
