use serde::{Deserialize, Serialize};

/// Thermal conductivities of the stack materials in W/(m·K).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialConductivities {
    /// Si substrate.
    pub substrate: f64,
    /// SiO2 isolation and gap fill.
    pub insulator: f64,
    /// Pt word and bit lines.
    pub electrode: f64,
    /// HfO2 switching layer.
    pub oxide: f64,
    /// Conductive filament inside the oxide.
    pub filament: f64,
}

impl Default for MaterialConductivities {
    fn default() -> Self {
        Self {
            substrate: 150.0,
            insulator: 1.4,
            electrode: 72.0,
            oxide: 0.5,
            filament: 5.0,
        }
    }
}

impl MaterialConductivities {
    pub fn iter(&self) -> impl Iterator<Item = (&'static str, f64)> {
        [
            ("substrate", self.substrate),
            ("insulator", self.insulator),
            ("electrode", self.electrode),
            ("oxide", self.oxide),
            ("filament", self.filament),
        ]
        .into_iter()
    }
}

/// Physical layout of a passive crossbar. All lengths are in nanometres.
///
/// Stack, bottom to top: substrate, insulator, bottom electrodes (bit lines,
/// one per column), switching oxide, top electrodes (word lines, one per
/// row). Gaps between electrodes are filled with insulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossbarGeometry {
    pub rows: usize,
    pub cols: usize,
    /// Gap between the edges of two adjacent electrodes.
    pub electrode_spacing: f64,
    pub electrode_width: f64,
    pub electrode_thickness: f64,
    pub oxide_thickness: f64,
    pub substrate_thickness: f64,
    /// SiO2 layer between the substrate and the bottom electrodes.
    pub insulator_thickness: f64,
    pub filament_radius: f64,
    pub material_conductivities: MaterialConductivities,
}

impl Default for CrossbarGeometry {
    fn default() -> Self {
        Self {
            rows: 5,
            cols: 5,
            electrode_spacing: 50.0,
            electrode_width: 25.0,
            electrode_thickness: 10.0,
            oxide_thickness: 5.0,
            substrate_thickness: 50.0,
            insulator_thickness: 5.0,
            filament_radius: 2.5,
            material_conductivities: MaterialConductivities::default(),
        }
    }
}

pub(crate) const SPACING_BOUNDS_NM: (f64, f64) = (1.0, 1000.0);

impl CrossbarGeometry {
    /// Electrode pitch (width + spacing).
    pub fn pitch(&self) -> f64 {
        self.electrode_width + self.electrode_spacing
    }

    /// The geometric centre cell, used as the kernel source.
    pub fn center_cell(&self) -> crate::Cell {
        crate::Cell::new(self.rows / 2, self.cols / 2)
    }

    /// Lists every violated invariant as `field: message`.
    pub fn violations(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let mut push = |f: &str, m: String| out.push((f.to_string(), m));
        if self.rows == 0 {
            push("rows", "must be at least 1".into());
        }
        if self.cols == 0 {
            push("cols", "must be at least 1".into());
        }
        let lengths = [
            ("electrode_spacing", self.electrode_spacing),
            ("electrode_width", self.electrode_width),
            ("electrode_thickness", self.electrode_thickness),
            ("oxide_thickness", self.oxide_thickness),
            ("substrate_thickness", self.substrate_thickness),
            ("insulator_thickness", self.insulator_thickness),
            ("filament_radius", self.filament_radius),
        ];
        for (name, v) in lengths {
            if !(v.is_finite() && v > 0.0) {
                push(name, format!("must be a positive length, got {v}"));
            }
        }
        let (lo, hi) = SPACING_BOUNDS_NM;
        if self.electrode_spacing.is_finite() && !(lo..=hi).contains(&self.electrode_spacing) {
            push(
                "electrode_spacing",
                format!("{} nm outside [{lo}, {hi}] nm", self.electrode_spacing),
            );
        }
        if self.filament_radius >= self.electrode_width / 2.0 {
            push(
                "filament_radius",
                format!(
                    "{} nm must be below half the electrode width ({} nm)",
                    self.filament_radius,
                    self.electrode_width / 2.0
                ),
            );
        }
        for (name, k) in self.material_conductivities.iter() {
            if !(k.is_finite() && k > 0.0) {
                push(
                    &format!("material_conductivities.{name}"),
                    format!("must be positive, got {k}"),
                );
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        assert!(CrossbarGeometry::default().violations().is_empty());
    }

    #[test]
    fn filament_wider_than_electrode_is_reported() {
        let g = CrossbarGeometry {
            filament_radius: 20.0,
            ..Default::default()
        };
        let v = g.violations();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].0, "filament_radius");
    }

    #[test]
    fn all_violations_listed() {
        let g = CrossbarGeometry {
            rows: 0,
            electrode_spacing: 2000.0,
            material_conductivities: MaterialConductivities {
                oxide: -1.0,
                ..Default::default()
            },
            ..Default::default()
        };
        let fields: Vec<_> = g.violations().into_iter().map(|(f, _)| f).collect();
        assert_eq!(
            fields,
            ["rows", "electrode_spacing", "material_conductivities.oxide"]
        );
    }

    #[test]
    fn partial_json_fills_defaults() {
        let g: CrossbarGeometry =
            serde_json::from_str(r#"{"rows": 3, "cols": 4, "electrode_spacing": 10}"#).unwrap();
        assert_eq!((g.rows, g.cols), (3, 4));
        assert_eq!(g.electrode_width, 25.0);
        assert_eq!(g.material_conductivities.substrate, 150.0);
    }
}
