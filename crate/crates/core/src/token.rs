use std::fmt;

/// A canonical attribute or keyword string.
///
/// Canonical form has no whitespace at all: surrounding whitespace is trimmed
/// and internal runs are removed. Case is preserved.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Token(String);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("token is empty after normalization")]
pub struct EmptyToken;

impl Token {
    pub fn new(raw: &str) -> Result<Self, EmptyToken> {
        let text: String = raw.split_whitespace().collect();
        if text.is_empty() {
            return Err(EmptyToken);
        }
        Ok(Token(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Canonicalizes a raw attribute or keyword string.
pub fn normalize_token(raw: &str) -> Result<Token, EmptyToken> {
    Token::new(raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(normalize_token("Location=HR-WARD").unwrap().as_str(), "Location=HR-WARD");
        assert_eq!(normalize_token("AT : 0****").unwrap().as_str(), "AT:0****");
        assert_eq!(normalize_token("  Case\tKept ").unwrap().as_str(), "CaseKept");
        assert_eq!(normalize_token("   "), Err(EmptyToken));
        assert_eq!(normalize_token(""), Err(EmptyToken));
    }

    proptest! {
        #[test]
        fn idempotent(raw in "[ a-zA-Z0-9:=*\t-]{1,20}") {
            if let Ok(t) = normalize_token(&raw) {
                prop_assert_eq!(normalize_token(t.as_str()).unwrap(), t.clone());
                prop_assert!(!t.as_str().chars().any(char::is_whitespace));
            }
        }
    }
}
