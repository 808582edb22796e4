use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

pub const NEUTRAL: &str = "neutral";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EmotionLabel {
    pub id: usize,
    pub name: String,
}

impl EmotionLabel {
    pub fn is_neutral(&self) -> bool {
        self.name == NEUTRAL
    }
}

/// Ordered emotion names; index in the list is the class id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct EmotionVocab {
    names: Vec<String>,
}

impl EmotionVocab {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() < 2 {
            return Err(CoreError::Emotion(format!(
                "need at least 2 emotions, got {}",
                names.len()
            )));
        }
        let neutral = names.iter().filter(|n| *n == NEUTRAL).count();
        if neutral != 1 {
            return Err(CoreError::Emotion(format!(
                "vocabulary must contain \"neutral\" exactly once, found {neutral}"
            )));
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(CoreError::Emotion(format!("duplicate emotion {n:?}")));
            }
        }
        Ok(Self { names })
    }

    /// The eight BEAT emotion categories.
    pub fn beat() -> Self {
        Self::new([
            NEUTRAL,
            "anger",
            "happiness",
            "fear",
            "disgust",
            "sadness",
            "contempt",
            "surprise",
        ])
        .expect("static vocabulary is valid")
    }

    /// Neutral plus the first `extra` BEAT emotions.
    pub fn beat_prefix(extra: usize) -> Result<Self> {
        let beat = Self::beat();
        if extra == 0 || extra >= beat.len() {
            return Err(CoreError::Emotion(format!(
                "BEAT prefix needs 1..{} extra emotions, got {extra}",
                beat.len() - 1
            )));
        }
        Self::new(beat.names[..=extra].iter().cloned())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn label(&self, id: usize) -> Result<EmotionLabel> {
        self.names
            .get(id)
            .map(|name| EmotionLabel {
                id,
                name: name.clone(),
            })
            .ok_or_else(|| CoreError::Emotion(format!("id {id} outside vocabulary of {}", self.len())))
    }

    pub fn by_name(&self, name: &str) -> Result<EmotionLabel> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|id| EmotionLabel {
                id,
                name: name.to_string(),
            })
            .ok_or_else(|| CoreError::Emotion(format!("unknown emotion {name:?}")))
    }

    pub fn neutral(&self) -> EmotionLabel {
        self.by_name(NEUTRAL).expect("validated vocabulary has neutral")
    }

    pub fn labels(&self) -> impl Iterator<Item = EmotionLabel> + '_ {
        self.names.iter().enumerate().map(|(id, name)| EmotionLabel {
            id,
            name: name.clone(),
        })
    }

    /// Checks that `label` is consistent with this vocabulary.
    pub fn check(&self, label: &EmotionLabel) -> Result<()> {
        match self.names.get(label.id) {
            Some(n) if *n == label.name => Ok(()),
            _ => Err(CoreError::Emotion(format!(
                "label {}:{} does not match vocabulary",
                label.id, label.name
            ))),
        }
    }
}

impl TryFrom<Vec<String>> for EmotionVocab {
    type Error = CoreError;

    fn try_from(names: Vec<String>) -> Result<Self> {
        Self::new(names)
    }
}

impl From<EmotionVocab> for Vec<String> {
    fn from(v: EmotionVocab) -> Self {
        v.names
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beat_vocab() {
        let v = EmotionVocab::beat();
        assert_eq!(v.len(), 8);
        assert_eq!(v.neutral().id, 0);
        assert_eq!(v.by_name("surprise").unwrap().id, 7);
        assert!(v.label(8).is_err());
    }

    #[test]
    fn vocabulary_contracts() {
        assert!(EmotionVocab::new(["neutral"]).is_err());
        assert!(EmotionVocab::new(["anger", "fear"]).is_err());
        assert!(EmotionVocab::new(["neutral", "anger", "neutral"]).is_err());
        assert!(EmotionVocab::new(["neutral", "anger", "anger"]).is_err());
        let v = EmotionVocab::beat_prefix(4).unwrap();
        assert_eq!(v.names(), ["neutral", "anger", "happiness", "fear", "disgust"]);
    }

    #[test]
    fn serde_validates() {
        let ok: EmotionVocab = serde_json::from_str(r#"["neutral","fear"]"#).unwrap();
        assert_eq!(ok.len(), 2);
        assert!(serde_json::from_str::<EmotionVocab>(r#"["fear","anger"]"#).is_err());
    }
}
