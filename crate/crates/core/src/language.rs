//! The closed set of language labels carried by `\lang{..}` tags.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// One of the thirteen supported language labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LanguageCode {
    En,
    Zh,
    Pt,
    Ar,
    Tr,
    Ru,
    De,
    Fr,
    It,
    Ja,
    Ko,
    Th,
    Vi,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown language code `{0}`")]
pub struct UnknownLanguage(pub String);

impl LanguageCode {
    pub const ALL: [LanguageCode; 13] = [
        LanguageCode::En,
        LanguageCode::Zh,
        LanguageCode::Pt,
        LanguageCode::Ar,
        LanguageCode::Tr,
        LanguageCode::Ru,
        LanguageCode::De,
        LanguageCode::Fr,
        LanguageCode::It,
        LanguageCode::Ja,
        LanguageCode::Ko,
        LanguageCode::Th,
        LanguageCode::Vi,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LanguageCode::En => "en",
            LanguageCode::Zh => "zh",
            LanguageCode::Pt => "pt",
            LanguageCode::Ar => "ar",
            LanguageCode::Tr => "tr",
            LanguageCode::Ru => "ru",
            LanguageCode::De => "de",
            LanguageCode::Fr => "fr",
            LanguageCode::It => "it",
            LanguageCode::Ja => "ja",
            LanguageCode::Ko => "ko",
            LanguageCode::Th => "th",
            LanguageCode::Vi => "vi",
        }
    }

    /// Normalizes a free-form label: trims, lowercases, strips region or
    /// script subtags (`zh-CN`, `pt_BR`) and maps a few common aliases and
    /// English language names. Returns `None` for anything outside the set.
    pub fn normalize(raw: &str) -> Option<LanguageCode> {
        let lowered = raw.trim().to_lowercase().replace('_', "-");
        if lowered.is_empty() {
            return None;
        }
        if let Some(code) = Self::from_alias(&lowered) {
            return Some(code);
        }
        let primary = lowered.split('-').next().unwrap_or_default();
        Self::from_alias(primary)
    }

    fn from_alias(s: &str) -> Option<LanguageCode> {
        let code = match s {
            "en" | "eng" | "english" => LanguageCode::En,
            "zh" | "zho" | "chi" | "cn" | "chinese" | "mandarin" => LanguageCode::Zh,
            "pt" | "por" | "portuguese" => LanguageCode::Pt,
            "ar" | "ara" | "arabic" => LanguageCode::Ar,
            "tr" | "tur" | "turkish" => LanguageCode::Tr,
            "ru" | "rus" | "russian" => LanguageCode::Ru,
            "de" | "deu" | "ger" | "german" => LanguageCode::De,
            "fr" | "fra" | "fre" | "french" => LanguageCode::Fr,
            "it" | "ita" | "italian" => LanguageCode::It,
            "ja" | "jpn" | "jp" | "japanese" => LanguageCode::Ja,
            "ko" | "kor" | "kr" | "korean" => LanguageCode::Ko,
            "th" | "tha" | "thai" => LanguageCode::Th,
            "vi" | "vie" | "vn" | "vietnamese" => LanguageCode::Vi,
            _ => return None,
        };
        Some(code)
    }
}

impl fmt::Display for LanguageCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LanguageCode {
    type Err = UnknownLanguage;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LanguageCode::normalize(s).ok_or_else(|| UnknownLanguage(s.to_string()))
    }
}

impl Serialize for LanguageCode {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for LanguageCode {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_codes_round_trip() {
        for code in LanguageCode::ALL {
            assert_eq!(code.as_str().parse::<LanguageCode>().unwrap(), code);
        }
    }

    #[test]
    fn aliases_and_regions() {
        assert_eq!(LanguageCode::normalize("zh-CN"), Some(LanguageCode::Zh));
        assert_eq!(LanguageCode::normalize(" AR "), Some(LanguageCode::Ar));
        assert_eq!(LanguageCode::normalize("pt_BR"), Some(LanguageCode::Pt));
        assert_eq!(LanguageCode::normalize("Thai"), Some(LanguageCode::Th));
        assert_eq!(LanguageCode::normalize("jp"), Some(LanguageCode::Ja));
        assert_eq!(LanguageCode::normalize("xx"), None);
        assert_eq!(LanguageCode::normalize(""), None);
        assert_eq!(LanguageCode::normalize("es"), None);
    }

    #[test]
    fn serde_uses_lowercase_code() {
        let json = serde_json::to_string(&LanguageCode::Ko).unwrap();
        assert_eq!(json, "\"ko\"");
        let back: LanguageCode = serde_json::from_str("\"KO\"").unwrap();
        assert_eq!(back, LanguageCode::Ko);
        assert!(serde_json::from_str::<LanguageCode>("\"klingon\"").is_err());
    }
}
