use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::Cell;

/// Coupling coefficient for one relative offset, as stored in the artifact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaEntry {
    pub di: i64,
    pub dj: i64,
    pub value: f64,
    pub r2: f64,
}

/// Thermal coupling kernel of a heated cell.
///
/// `alpha[(di, dj)]` is the over-temperature of the cell at that offset from
/// the source divided by the source's own over-temperature. The kernel is
/// applied translation-invariantly to every cell of the array.
///
/// JSON form:
/// `{"ambient_K": .., "r_th_K_per_W": .., "alpha": [{"di", "dj", "value", "r2"}, ..]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelArtifact", into = "KernelArtifact")]
pub struct AlphaKernel {
    /// Cell the kernel was extracted for; not part of the artifact.
    pub source_cell: Option<Cell>,
    pub r_th: f64,
    pub ambient: f64,
    alpha: BTreeMap<(i64, i64), f64>,
    fit_r_squared: BTreeMap<(i64, i64), f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelArtifact {
    #[serde(rename = "ambient_K")]
    ambient: f64,
    #[serde(rename = "r_th_K_per_W")]
    r_th: f64,
    alpha: Vec<AlphaEntry>,
}

impl From<AlphaKernel> for KernelArtifact {
    fn from(k: AlphaKernel) -> Self {
        Self {
            ambient: k.ambient,
            r_th: k.r_th,
            alpha: k.entries().collect(),
        }
    }
}

impl TryFrom<KernelArtifact> for AlphaKernel {
    type Error = String;
    fn try_from(a: KernelArtifact) -> Result<Self, String> {
        let mut k = AlphaKernel::empty(a.ambient, a.r_th);
        for e in a.alpha {
            if k.alpha.contains_key(&(e.di, e.dj)) {
                return Err(format!("duplicate offset ({}, {})", e.di, e.dj));
            }
            if !e.value.is_finite() {
                return Err(format!("non-finite alpha at ({}, {})", e.di, e.dj));
            }
            k.insert((e.di, e.dj), e.value, e.r2);
        }
        Ok(k)
    }
}

impl AlphaKernel {
    /// Kernel with no entries at all.
    pub fn empty(ambient: f64, r_th: f64) -> Self {
        Self {
            source_cell: None,
            r_th,
            ambient,
            alpha: BTreeMap::new(),
            fit_r_squared: BTreeMap::new(),
        }
    }

    /// Kernel holding only the self term `alpha(0,0) = 1`, i.e. no coupling.
    pub fn uncoupled(ambient: f64, r_th: f64) -> Self {
        let mut k = Self::empty(ambient, r_th);
        k.insert((0, 0), 1.0, 1.0);
        k
    }

    /// Builds a kernel from `(offset, alpha)` pairs with unit fit quality.
    pub fn from_offsets(
        ambient: f64,
        r_th: f64,
        entries: impl IntoIterator<Item = ((i64, i64), f64)>,
    ) -> Self {
        let mut k = Self::empty(ambient, r_th);
        for (off, a) in entries {
            k.insert(off, a, 1.0);
        }
        k
    }

    pub fn insert(&mut self, offset: (i64, i64), alpha: f64, r_squared: f64) {
        self.alpha.insert(offset, alpha);
        self.fit_r_squared.insert(offset, r_squared);
    }

    pub fn alpha(&self, di: i64, dj: i64) -> Option<f64> {
        self.alpha.get(&(di, dj)).copied()
    }

    pub fn r_squared(&self, di: i64, dj: i64) -> Option<f64> {
        self.fit_r_squared.get(&(di, dj)).copied()
    }

    /// Offsets in lexicographic `(di, dj)` order.
    pub fn offsets(&self) -> impl Iterator<Item = ((i64, i64), f64)> + '_ {
        self.alpha.iter().map(|(k, v)| (*k, *v))
    }

    /// Offsets other than `(0, 0)`.
    pub fn neighbours(&self) -> impl Iterator<Item = ((i64, i64), f64)> + '_ {
        self.offsets().filter(|(o, _)| *o != (0, 0))
    }

    pub fn entries(&self) -> impl Iterator<Item = AlphaEntry> + '_ {
        self.alpha.iter().map(|(&(di, dj), &value)| AlphaEntry {
            di,
            dj,
            value,
            r2: self
                .fit_r_squared
                .get(&(di, dj))
                .copied()
                .unwrap_or(f64::NAN),
        })
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    /// Sum of all neighbour coefficients. The electro-thermal fixed point is
    /// a contraction only when this is below one.
    pub fn neighbour_sum(&self) -> f64 {
        self.neighbours().map(|(_, a)| a).sum()
    }

    /// Same coefficients re-referenced to another ambient. Alpha values are
    /// over-temperature ratios of a linear problem and do not depend on it.
    pub fn with_ambient(&self, ambient: f64) -> Self {
        Self {
            ambient,
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("kernel serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn artifact_schema() {
        let mut k = AlphaKernel::uncoupled(300.0, 1e6);
        k.insert((0, 1), 0.25, 0.999);
        let v: serde_json::Value = serde_json::from_str(&k.to_json()).unwrap();
        assert_eq!(v["ambient_K"], 300.0);
        assert_eq!(v["r_th_K_per_W"], 1e6);
        let a = v["alpha"].as_array().unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a[1]["di"], 0);
        assert_eq!(a[1]["dj"], 1);
        assert_eq!(a[1]["value"], 0.25);
        assert_eq!(a[1]["r2"], 0.999);
        let obj = v.as_object().unwrap();
        assert_eq!(obj.len(), 3);
    }

    #[test]
    fn round_trip_is_exact() {
        let mut k = AlphaKernel::uncoupled(298.15, 4.123456789e6);
        k.insert((-1, 0), 0.1234567890123, 0.99999);
        k.insert((2, -2), 1.0 / 3.0, 1.0);
        let back = AlphaKernel::from_json(&k.to_json()).unwrap();
        assert_eq!(back.to_json(), k.to_json());
        assert_eq!(back.alpha(2, -2), Some(1.0 / 3.0));
    }

    #[test]
    fn duplicate_offsets_rejected() {
        let s = r#"{"ambient_K":300,"r_th_K_per_W":1,"alpha":[
            {"di":0,"dj":0,"value":1,"r2":1},{"di":0,"dj":0,"value":1,"r2":1}]}"#;
        assert!(AlphaKernel::from_json(s).is_err());
    }

    #[test]
    fn neighbour_sum_excludes_self() {
        let k =
            AlphaKernel::from_offsets(300.0, 1.0, [((0, 0), 1.0), ((0, 1), 0.2), ((1, 0), 0.1)]);
        assert!((k.neighbour_sum() - 0.3).abs() < 1e-15);
    }
}
