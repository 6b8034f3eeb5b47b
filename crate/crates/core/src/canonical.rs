//! Canonical JSON: object keys sorted, no insignificant whitespace.

use serde::de::DeserializeOwned;
use serde::Serialize;

/// Serializes `value` canonically. Going through [`serde_json::Value`]
/// sorts object keys, since its map type is ordered.
pub fn to_string<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    let value = serde_json::to_value(value)?;
    serde_json::to_string(&value)
}

/// Parses `text` and checks that it is already in canonical form.
pub fn from_str<T: DeserializeOwned>(text: &str) -> Result<T, CanonicalError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(CanonicalError::Parse)?;
    let canonical = serde_json::to_string(&value).map_err(CanonicalError::Parse)?;
    if canonical != text {
        return Err(CanonicalError::NotCanonical);
    }
    serde_json::from_value(value).map_err(CanonicalError::Parse)
}

#[derive(Debug, thiserror::Error)]
pub enum CanonicalError {
    #[error("invalid JSON: {0}")]
    Parse(serde_json::Error),
    #[error("JSON is not in canonical form")]
    NotCanonical,
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[derive(Serialize, serde::Deserialize, Debug, PartialEq)]
    struct Sample {
        zeta: u32,
        alpha: Vec<String>,
        nested: HashMap<String, i64>,
    }

    #[test]
    fn keys_sorted_without_whitespace() {
        let mut nested = HashMap::new();
        nested.insert("b".to_owned(), 2);
        nested.insert("a".to_owned(), 1);
        let s = Sample {
            zeta: 1,
            alpha: vec!["x y".into()],
            nested,
        };
        let text = to_string(&s).unwrap();
        assert_eq!(text, r#"{"alpha":["x y"],"nested":{"a":1,"b":2},"zeta":1}"#);
        assert_eq!(from_str::<Sample>(&text).unwrap(), s);
    }

    #[test]
    fn rejects_non_canonical_text() {
        assert!(matches!(
            from_str::<serde_json::Value>(r#"{"b":1, "a":2}"#),
            Err(CanonicalError::NotCanonical)
        ));
        assert!(matches!(from_str::<serde_json::Value>("{"), Err(CanonicalError::Parse(_))));
    }
}
