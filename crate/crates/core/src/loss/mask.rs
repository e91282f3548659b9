use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::model::{idx, LandmarkSet, LANDMARK_COUNT};

/// Number of landmarks the 2D consistency losses look at.
pub const MASK_SIZE: usize = 18;

/// A mask point: one of the 68 landmarks, or the midpoint of the two mouth corners.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSelector", into = "RawSelector")]
pub enum LandmarkSelector {
    Index(usize),
    MouthCenter,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawSelector {
    Index(usize),
    Name(String),
}

impl TryFrom<RawSelector> for LandmarkSelector {
    type Error = String;

    fn try_from(raw: RawSelector) -> core::result::Result<Self, Self::Error> {
        match raw {
            RawSelector::Index(i) => Ok(Self::Index(i)),
            RawSelector::Name(n) if n == "MOUTH_CENTER" => Ok(Self::MouthCenter),
            RawSelector::Name(n) => Err(alloc::format!("unknown landmark selector {n:?}")),
        }
    }
}

impl From<LandmarkSelector> for RawSelector {
    fn from(s: LandmarkSelector) -> Self {
        match s {
            LandmarkSelector::Index(i) => RawSelector::Index(i),
            LandmarkSelector::MouthCenter => RawSelector::Name("MOUTH_CENTER".into()),
        }
    }
}

impl LandmarkSelector {
    /// Resolved coordinates of the selector in `set`.
    pub fn resolve(&self, set: &LandmarkSet) -> [f64; 3] {
        let get = |i: usize| {
            let p = set.point(i);
            [p[0], p[1], if p.len() == 3 { p[2] } else { 0.0 }]
        };
        match *self {
            Self::Index(i) => get(i),
            Self::MouthCenter => {
                let (a, b) = (get(idx::MOUTH_RIGHT), get(idx::MOUTH_LEFT));
                [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0, (a[2] + b[2]) / 2.0]
            }
        }
    }

    /// Distributes a gradient on the resolved point back onto the landmarks.
    pub fn scatter(&self, g: &[f64], dim: usize, grad: &mut [f64]) {
        match *self {
            Self::Index(i) => {
                for c in 0..dim {
                    grad[i * dim + c] += g[c];
                }
            }
            Self::MouthCenter => {
                for i in [idx::MOUTH_RIGHT, idx::MOUTH_LEFT] {
                    for c in 0..dim {
                        grad[i * dim + c] += 0.5 * g[c];
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskEntry {
    pub selector: LandmarkSelector,
    pub weight: f64,
}

/// The 18 weighted landmarks of the 2D consistency losses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<MaskEntry>", into = "Vec<MaskEntry>")]
pub struct WeightMask {
    entries: Vec<MaskEntry>,
}

impl TryFrom<Vec<MaskEntry>> for WeightMask {
    type Error = crate::Error;

    fn try_from(entries: Vec<MaskEntry>) -> Result<Self> {
        Self::new(entries)
    }
}

impl From<WeightMask> for Vec<MaskEntry> {
    fn from(m: WeightMask) -> Self {
        m.entries
    }
}

impl Default for WeightMask {
    fn default() -> Self {
        Self::tiered()
    }
}

impl WeightMask {
    pub fn new(entries: Vec<MaskEntry>) -> Result<Self> {
        if entries.len() != MASK_SIZE {
            return Err(config_err!("weight mask needs {MASK_SIZE} entries, got {}", entries.len()));
        }
        for (i, e) in entries.iter().enumerate() {
            if let LandmarkSelector::Index(j) = e.selector {
                if j >= LANDMARK_COUNT {
                    return Err(config_err!("mask entry {i}: landmark {j} out of range"));
                }
            }
            if !(e.weight > 0.0 && e.weight.is_finite()) {
                return Err(config_err!("mask entry {i}: weight must be positive, got {}", e.weight));
            }
            if entries[..i].iter().any(|o| o.selector == e.selector) {
                return Err(config_err!("mask entry {i}: selector repeated"));
            }
        }
        Ok(Self { entries })
    }

    /// Default 4:2:1 tiers: eye corners, nose tip, mouth corners and mouth
    /// centre; brow ends and nose base; mid-brows and lip centres.
    pub fn tiered() -> Self {
        use LandmarkSelector::{Index, MouthCenter};
        let tiers: [(&[LandmarkSelector], f64); 3] = [
            (
                &[
                    Index(idx::RIGHT_EYE_OUTER),
                    Index(idx::RIGHT_EYE_INNER),
                    Index(idx::LEFT_EYE_INNER),
                    Index(idx::LEFT_EYE_OUTER),
                    Index(idx::NOSE_TIP),
                    Index(idx::MOUTH_RIGHT),
                    Index(idx::MOUTH_LEFT),
                    MouthCenter,
                ],
                4.0,
            ),
            (&[Index(17), Index(21), Index(22), Index(26), Index(31), Index(35)], 2.0),
            (&[Index(19), Index(24), Index(51), Index(57)], 1.0),
        ];
        let entries = tiers
            .iter()
            .flat_map(|(sel, w)| sel.iter().map(move |&selector| MaskEntry { selector, weight: *w }))
            .collect();
        Self { entries }
    }

    /// Same selectors as `self`, every weight 1.
    pub fn unweighted(&self) -> Self {
        Self {
            entries: self.entries.iter().map(|e| MaskEntry { weight: 1.0, ..*e }).collect(),
        }
    }

    pub fn entries(&self) -> &[MaskEntry] {
        &self.entries
    }

    pub fn total_weight(&self) -> f64 {
        self.entries.iter().map(|e| e.weight).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_mask_has_4_2_1_tiers() {
        let m = WeightMask::tiered();
        assert_eq!(m.entries().len(), 18);
        let count = |w: f64| m.entries().iter().filter(|e| e.weight == w).count();
        assert_eq!((count(4.0), count(2.0), count(1.0)), (8, 6, 4));
        assert_eq!(m.total_weight(), 48.0);
        assert!(WeightMask::new(m.entries().to_vec()).is_ok());
    }

    #[test]
    fn invalid_masks_are_rejected() {
        let mut e = WeightMask::tiered().entries().to_vec();
        e[3].weight = 0.0;
        assert!(WeightMask::new(e).is_err());
        let mut e = WeightMask::tiered().entries().to_vec();
        e[1].selector = e[0].selector;
        assert!(WeightMask::new(e).is_err());
        let mut e = WeightMask::tiered().entries().to_vec();
        e.pop();
        assert!(WeightMask::new(e).is_err());
        let mut e = WeightMask::tiered().entries().to_vec();
        e[2].selector = LandmarkSelector::Index(68);
        assert!(WeightMask::new(e).is_err());
    }

    #[test]
    fn mouth_center_is_corner_midpoint() {
        let mut pts = alloc::vec![0.0; 136];
        pts[2 * 48] = 2.0;
        pts[2 * 48 + 1] = 4.0;
        pts[2 * 54] = 6.0;
        pts[2 * 54 + 1] = 8.0;
        let set = LandmarkSet::new(2, pts).unwrap();
        assert_eq!(LandmarkSelector::MouthCenter.resolve(&set), [4.0, 6.0, 0.0]);
    }
}
