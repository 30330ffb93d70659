use serde::{Deserialize, Serialize};

use super::conv::{ConvNet, Planes};
use super::pyramid::{level_name, FeatureMapPyramid};
use crate::audio::Spectrogram;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractorKind {
    Reference,
    Imported,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractorSpec {
    pub kind: ExtractorKind,
    pub seed: u64,
    pub channels_per_block: Vec<usize>,
    pub selected_levels: Vec<String>,
}

impl Default for ExtractorSpec {
    fn default() -> Self {
        ExtractorSpec {
            kind: ExtractorKind::Reference,
            seed: 0,
            channels_per_block: vec![16, 32, 64],
            selected_levels: vec![level_name(1), level_name(2)],
        }
    }
}

impl ExtractorSpec {
    pub fn reference(seed: u64) -> Self {
        ExtractorSpec {
            seed,
            ..Default::default()
        }
    }

    /// Index of the deepest selected level plus one, i.e. how many blocks must run.
    pub fn required_depth(&self) -> Result<usize> {
        self.validate()?;
        let mut depth = 0;
        for name in &self.selected_levels {
            let idx = (0..self.channels_per_block.len())
                .find(|&i| level_name(i) == *name)
                .expect("validated");
            depth = depth.max(idx + 1);
        }
        Ok(depth)
    }

    pub fn validate(&self) -> Result<()> {
        if self.selected_levels.is_empty() {
            return Err(Error::Parameter("selected_levels must not be empty".into()));
        }
        if self.kind == ExtractorKind::Reference {
            if self.channels_per_block.is_empty() || self.channels_per_block.contains(&0) {
                return Err(Error::Parameter(format!(
                    "channels_per_block must be non-empty and positive, got {:?}",
                    self.channels_per_block
                )));
            }
            let available: Vec<String> = (0..self.channels_per_block.len()).map(level_name).collect();
            for name in &self.selected_levels {
                if !available.contains(name) {
                    return Err(Error::Parameter(format!(
                        "selected level '{name}' not produced by the extractor (available: {})",
                        available.join(", ")
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Frozen seeded conv stack standing in for a pretrained backbone.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceExtractor<T> {
    pub spec: ExtractorSpec,
    pub net: ConvNet<T>,
}

impl<T: Scalar> ReferenceExtractor<T> {
    pub fn new(spec: &ExtractorSpec) -> Result<Self> {
        if spec.kind != ExtractorKind::Reference {
            return Err(Error::Parameter("reference extraction needs a reference extractor spec".into()));
        }
        spec.validate()?;
        Ok(ReferenceExtractor {
            spec: spec.clone(),
            net: ConvNet::seeded(&spec.channels_per_block, spec.seed)?,
        })
    }

    /// Runs every block (not only the selected ones) and returns the full pyramid.
    pub fn extract(&self, s: &Spectrogram<T>) -> Result<FeatureMapPyramid<T>> {
        self.extract_depth(s, self.net.depth())
    }

    /// Runs just enough blocks to cover the selected levels.
    pub fn extract_selected(&self, s: &Spectrogram<T>) -> Result<FeatureMapPyramid<T>> {
        self.extract_depth(s, self.spec.required_depth()?)
    }

    fn extract_depth(&self, s: &Spectrogram<T>, depth: usize) -> Result<FeatureMapPyramid<T>> {
        self.net.check_input(s.frames(), s.bands())?;
        let outs = self.net.forward(&Planes::from_matrix(&s.values), depth);
        let levels = outs.iter().map(Planes::to_hwc).collect();
        let names = (0..depth).map(level_name).collect();
        FeatureMapPyramid::new(levels, names, (s.frames(), s.bands()))
    }
}

/// One-shot form: realizes the weights from `spec.seed` and extracts.
pub fn reference_extract<T: Scalar>(s: &Spectrogram<T>, spec: &ExtractorSpec) -> Result<FeatureMapPyramid<T>> {
    ReferenceExtractor::new(spec)?.extract(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::SpectrogramParams;
    use crate::features::align_and_concat;
    use crate::tensor::Matrix;

    fn spec_of(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Spectrogram<f64> {
        Spectrogram::from_values(Matrix::from_fn(rows, cols, f), SpectrogramParams::default(), 16000).unwrap()
    }

    #[test]
    fn default_level_shapes_halve() {
        let s = spec_of(64, 64, |r, c| ((r * 7 + c * 3) as f64).sin());
        let p = reference_extract(&s, &ExtractorSpec::reference(1)).unwrap();
        let shapes: Vec<_> = p.levels.iter().map(|l| l.shape()).collect();
        assert_eq!(shapes, vec![(32, 32, 16), (16, 16, 32), (8, 8, 64)]);
        assert_eq!(p.source_shape, (64, 64));
    }

    #[test]
    fn deterministic() {
        let s = spec_of(20, 24, |r, c| (r as f64 - c as f64) * 0.1);
        let spec = ExtractorSpec::reference(9);
        assert_eq!(reference_extract(&s, &spec).unwrap(), reference_extract(&s, &spec).unwrap());
    }

    #[test]
    fn zero_input_gives_zero_pyramid() {
        let s = spec_of(16, 16, |_, _| 0.0);
        let p = reference_extract(&s, &ExtractorSpec::reference(3)).unwrap();
        assert!(p.levels.iter().all(|l| l.as_slice().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn too_small_is_size_error() {
        let s = spec_of(7, 64, |_, _| 1.0);
        assert!(matches!(reference_extract(&s, &ExtractorSpec::reference(0)), Err(Error::Size(_))));
    }

    #[test]
    fn bad_selection_rejected() {
        let spec = ExtractorSpec {
            selected_levels: vec!["block9".into()],
            ..ExtractorSpec::reference(0)
        };
        assert!(ReferenceExtractor::<f64>::new(&spec).is_err());
        let spec = ExtractorSpec {
            selected_levels: vec![],
            ..ExtractorSpec::reference(0)
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn single_cell_change_stays_local() {
        // Each block adds a 3x3 receptive field at its own stride and a 2x2 pool.
        let base = spec_of(64, 48, |r, c| ((r * 13 + c * 5) as f64 * 0.1).sin());
        let spec = ExtractorSpec {
            selected_levels: vec![level_name(0), level_name(1), level_name(2)],
            ..ExtractorSpec::reference(5)
        };
        let ex = ReferenceExtractor::new(&spec).unwrap();
        let (t, f) = (30, 20);
        let mut changed = base.clone();
        changed.values.set(t, f, 5.0);
        let ga = align_and_concat(&ex.extract(&base).unwrap(), &spec.selected_levels).unwrap();
        let gb = align_and_concat(&ex.extract(&changed).unwrap(), &spec.selected_levels).unwrap();
        // receptive field radius in input cells: 1 + 2*(1+1) + 4*(1+1) ... bounded by 2^(depth+1) + bilinear spread
        let dilation = 32;
        let (gh, gw, _) = ga.dims();
        for h in 0..gh {
            for w in 0..gw {
                let r = ga.coord_map.rect(h, w);
                let near = t + dilation >= r.t0 && t < r.t1 + dilation && f + dilation >= r.f0 && f < r.f1 + dilation;
                if !near {
                    assert_eq!(ga.grid.vector(h, w), gb.grid.vector(h, w), "patch ({h},{w}) changed");
                }
            }
        }
        assert_ne!(ga.grid, gb.grid);
    }
}
