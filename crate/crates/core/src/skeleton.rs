use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Joint hierarchy and sampling rate of a pose stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonSpec {
    pub joint_names: Vec<String>,
    /// Parent joint per joint; `None` marks the root (`-1` when serialized).
    #[serde(with = "parent_indices")]
    pub parents: Vec<Option<usize>>,
    pub fps: f64,
}

impl SkeletonSpec {
    pub fn new(joint_names: Vec<String>, parents: Vec<Option<usize>>, fps: f64) -> Result<Self> {
        let spec = Self {
            joint_names,
            parents,
            fps,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Eight-joint upper body used by the synthetic desk-scale corpus.
    pub fn upper_body_8() -> Self {
        let names = [
            "spine", "chest", "neck", "head", "l_elbow", "l_wrist", "r_elbow", "r_wrist",
        ];
        let parents = vec![
            None,
            Some(0),
            Some(1),
            Some(2),
            Some(1),
            Some(4),
            Some(1),
            Some(6),
        ];
        Self {
            joint_names: names.iter().map(|s| s.to_string()).collect(),
            parents,
            fps: 15.0,
        }
    }

    pub fn joint_count(&self) -> usize {
        self.joint_names.len()
    }

    pub fn root(&self) -> usize {
        self.parents
            .iter()
            .position(Option::is_none)
            .expect("validated skeleton has a root")
    }

    /// `(child, parent)` pairs, one per non-root joint.
    pub fn bones(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.parents
            .iter()
            .enumerate()
            .filter_map(|(child, parent)| parent.map(|p| (child, p)))
    }

    pub fn validate(&self) -> Result<()> {
        let j = self.joint_names.len();
        if j < 2 {
            return Err(CoreError::Skeleton(format!("need at least 2 joints, got {j}")));
        }
        if self.parents.len() != j {
            return Err(CoreError::Skeleton(format!(
                "{} parent entries for {j} joints",
                self.parents.len()
            )));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(CoreError::Skeleton(format!("fps must be positive, got {}", self.fps)));
        }
        let roots = self.parents.iter().filter(|p| p.is_none()).count();
        if roots != 1 {
            return Err(CoreError::Skeleton(format!("expected exactly one root, found {roots}")));
        }
        for (i, p) in self.parents.iter().enumerate() {
            if let Some(p) = *p {
                if p >= j || p == i {
                    return Err(CoreError::Skeleton(format!("joint {i} has invalid parent {p}")));
                }
            }
        }
        // Every joint must reach the root without revisiting a joint.
        for start in 0..j {
            let mut cur = start;
            let mut steps = 0;
            while let Some(p) = self.parents[cur] {
                cur = p;
                steps += 1;
                if steps > j {
                    return Err(CoreError::Skeleton(format!("cycle through joint {start}")));
                }
            }
        }
        Ok(())
    }
}

mod parent_indices {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(parents: &[Option<usize>], s: S) -> Result<S::Ok, S::Error> {
        let raw: Vec<i64> = parents.iter().map(|p| p.map_or(-1, |p| p as i64)).collect();
        raw.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Option<usize>>, D::Error> {
        let raw = Vec::<i64>::deserialize(d)?;
        Ok(raw
            .into_iter()
            .map(|p| if p < 0 { None } else { Some(p as usize) })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upper_body_is_valid_tree() {
        let s = SkeletonSpec::upper_body_8();
        s.validate().unwrap();
        assert_eq!(s.joint_count(), 8);
        assert_eq!(s.root(), 0);
        assert_eq!(s.bones().count(), 7);
    }

    #[test]
    fn rejects_bad_graphs() {
        let names = |n: usize| (0..n).map(|i| format!("j{i}")).collect::<Vec<_>>();
        assert!(SkeletonSpec::new(names(1), vec![None], 15.0).is_err());
        assert!(SkeletonSpec::new(names(2), vec![None, None], 15.0).is_err());
        assert!(SkeletonSpec::new(names(3), vec![Some(1), Some(2), Some(0)], 15.0).is_err());
        assert!(SkeletonSpec::new(names(3), vec![None, Some(2), Some(1)], 15.0).is_err());
        assert!(SkeletonSpec::new(names(2), vec![None, Some(0)], 0.0).is_err());
        assert!(SkeletonSpec::new(names(2), vec![None, Some(0)], 15.0).is_ok());
    }
}
