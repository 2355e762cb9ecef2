use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CountMinSketch, LearnedCms, OptHashSketch};
use crate::error::{Error, Result};

/// Hash maps written as key-sorted `[key, value]` pairs, so files are
/// byte-stable and integer keys survive the tagged-enum wrapper.
pub(crate) mod sorted_pairs {
    use std::collections::HashMap;
    use std::hash::Hash;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S, K, V>(map: &HashMap<K, V>, s: S) -> Result<S::Ok, S::Error>
    where
        S: Serializer,
        K: Ord + Serialize,
        V: Serialize,
    {
        let mut pairs: Vec<(&K, &V)> = map.iter().collect();
        pairs.sort_by(|a, b| a.0.cmp(b.0));
        pairs.serialize(s)
    }

    pub fn deserialize<'de, D, K, V>(d: D) -> Result<HashMap<K, V>, D::Error>
    where
        D: Deserializer<'de>,
        K: Eq + Hash + Deserialize<'de>,
        V: Deserialize<'de>,
    {
        Ok(Vec::<(K, V)>::deserialize(d)?.into_iter().collect())
    }
}

const SKETCH_MAGIC: &str = "OPTHASH-SKETCH v1";

/// Any sketch in file form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "estimator", rename_all = "lowercase")]
pub enum SavedSketch {
    Cms(CountMinSketch),
    Lcms(LearnedCms),
    Opthash(OptHashSketch),
}

impl SavedSketch {
    pub fn to_text(&self) -> Result<String> {
        Ok(format!("{SKETCH_MAGIC}\n{}\n", serde_json::to_string(self)?))
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let body = text
            .strip_prefix(SKETCH_MAGIC)
            .and_then(|r| r.strip_prefix('\n'))
            .ok_or_else(|| Error::Format(format!("missing {SKETCH_MAGIC:?} header")))?;
        Ok(serde_json::from_str(body)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn memory_buckets(&self) -> usize {
        match self {
            SavedSketch::Cms(s) => s.memory_buckets(),
            SavedSketch::Lcms(s) => s.memory_buckets(),
            SavedSketch::Opthash(s) => s.memory_buckets(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::{BucketModel, NearestCentroid};
    use crate::objective::tests::prefix_from;
    use crate::scheme::HashScheme;
    use crate::sketches::{BloomParams, Mode};

    #[test]
    fn roundtrip_all_kinds() {
        let mut cms = CountMinSketch::new(8, 2, 5).unwrap();
        cms.update_by(3, 4);
        let mut lcms = LearnedCms::new(&[1, 2], 20, 2, 2, 1).unwrap();
        lcms.update(1);
        lcms.update(9);
        let ids: Vec<u64> = (0..30).collect();
        let p = prefix_from(&[1; 30].map(|x: u64| x), &ids.iter().map(|&i| vec![i as f64]).collect::<Vec<_>>());
        let s = HashScheme::new(&p, (0..30).map(|i| i % 2).collect(), 2).unwrap();
        let model = BucketModel::Centroid(NearestCentroid::from_centroids(vec![Some(vec![0.0]), Some(vec![1.0])]));
        let opt = OptHashSketch::build(&s, &p, model, Mode::Adaptive, Some(BloomParams::for_items(40, 2))).unwrap();
        for sk in [SavedSketch::Cms(cms), SavedSketch::Lcms(lcms), SavedSketch::Opthash(opt)] {
            let text = sk.to_text().unwrap();
            assert!(text.starts_with("OPTHASH-SKETCH v1\n"));
            let back = SavedSketch::from_text(&text).unwrap();
            assert_eq!(back, sk);
            assert_eq!(back.to_text().unwrap(), text);
        }
    }

    #[test]
    fn file_roundtrip_and_bad_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.sketch");
        let sk = SavedSketch::Cms(CountMinSketch::new(3, 1, 0).unwrap());
        sk.save(&path).unwrap();
        assert_eq!(SavedSketch::load(&path).unwrap(), sk);
        assert!(matches!(SavedSketch::from_text("nope\n{}"), Err(Error::Format(_))));
    }
}
