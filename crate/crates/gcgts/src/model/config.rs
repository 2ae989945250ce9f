//! Model hyperparameters and the six ablation presets.

use serde::{Deserialize, Serialize};

use crate::corpus::TagMode;

/// Where character vectors come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderKind {
    /// A trainable per-character embedding table.
    TrainableEmbedding,
    /// Frozen vectors loaded from a sidecar file, keyed by sentence id.
    FileBacked,
}

/// Architecture and optimization hyperparameters. `Default` gives the full
/// model at desk scale: every component enabled, 2 fusion layers, 2 inference
/// rounds, batch 12, lr 5e-5, 4 labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Character vector width; also the fused width. Divisible by 4 (the
    /// fusion layer splits it d_h/2 + d_h/4 + d_h/4).
    pub d_h: usize,
    /// Dependency-relation embedding width.
    pub d_r: usize,
    /// POS embedding width.
    pub d_p: usize,
    /// Relation grid tensor (β) width.
    pub d_beta: usize,
    /// Grid cell feature width; the inference state z shares it.
    pub d_g: usize,
    /// Fusion (LAGCN) layer count L.
    pub l_layers: usize,
    /// Inference round count T; 0 disables iterative inference.
    pub t_rounds: usize,
    /// Image convolution kernel lengths (1×N along rows, N×1 along columns).
    pub kernels: Vec<usize>,
    pub mode: TagMode,
    pub use_lagcn: bool,
    pub use_b_tensor: bool,
    pub use_uc: bool,
    pub use_ic: bool,
    pub encoder: EncoderKind,
    pub lr: f64,
    pub batch_size: usize,
    /// Always 4: {N, A, O, P}.
    pub label_count: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_h: 32,
            d_r: 8,
            d_p: 8,
            d_beta: 8,
            d_g: 32,
            l_layers: 2,
            t_rounds: 2,
            kernels: vec![2, 3],
            mode: TagMode::FirstChar,
            use_lagcn: true,
            use_b_tensor: true,
            use_uc: true,
            use_ic: true,
            encoder: EncoderKind::TrainableEmbedding,
            lr: 5e-5,
            batch_size: 12,
            label_count: 4,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.label_count != 4 {
            return Err(format!("label_count must be 4, got {}", self.label_count));
        }
        if self.d_h == 0 || self.d_h % 4 != 0 {
            return Err(format!("d_h must be a positive multiple of 4, got {}", self.d_h));
        }
        for (name, v) in
            [("d_r", self.d_r), ("d_p", self.d_p), ("d_beta", self.d_beta), ("d_g", self.d_g)]
        {
            if v == 0 {
                return Err(format!("{name} must be positive"));
            }
        }
        if self.l_layers == 0 {
            return Err("l_layers must be at least 1".into());
        }
        if self.use_b_tensor && !self.use_lagcn {
            return Err("use_b_tensor requires use_lagcn (B is produced by the fusion layers)".into());
        }
        if self.kernels.is_empty() || self.kernels.iter().any(|&k| k < 2) {
            return Err(format!("kernels must be lengths >= 2, got {:?}", self.kernels));
        }
        if self.batch_size == 0 {
            return Err("batch_size must be positive".into());
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(format!("lr must be positive and finite, got {}", self.lr));
        }
        Ok(())
    }

    /// Message widths of the fusion layer: d_a + d_b + d_c = d_h.
    pub fn fusion_split(&self) -> (usize, usize, usize) {
        (self.d_h / 2, self.d_h / 4, self.d_h / 4)
    }

    /// Width of the inference state z (tied to the grid feature width).
    pub fn d_z(&self) -> usize {
        self.d_g
    }
}

/// The six ablation arms. Each expands to exactly one combination of the four
/// component flags; everything else in the config is untouched.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Plain grid tagging: no fusion, no B tensor, no UC, no IC.
    Gts,
    /// GTS + unit convolution.
    GtsUc,
    /// GTS + image convolution.
    GtsIc,
    /// GTS + dependency fusion (LAGCN).
    Dgts,
    /// DGTS + relation grid tensor B in inference.
    Dbgts,
    /// Everything on.
    Gcgts,
}

pub const PRESETS: [Preset; 6] =
    [Preset::Gts, Preset::GtsUc, Preset::GtsIc, Preset::Dgts, Preset::Dbgts, Preset::Gcgts];

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Gts => "gts",
            Preset::GtsUc => "gts-uc",
            Preset::GtsIc => "gts-ic",
            Preset::Dgts => "dgts",
            Preset::Dbgts => "dbgts",
            Preset::Gcgts => "gcgts",
        }
    }

    pub fn from_name(name: &str) -> Option<Preset> {
        PRESETS.into_iter().find(|p| p.name() == name)
    }

    /// (use_lagcn, use_b_tensor, use_uc, use_ic)
    pub fn flags(self) -> (bool, bool, bool, bool) {
        match self {
            Preset::Gts => (false, false, false, false),
            Preset::GtsUc => (false, false, true, false),
            Preset::GtsIc => (false, false, false, true),
            Preset::Dgts => (true, false, false, false),
            Preset::Dbgts => (true, true, false, false),
            Preset::Gcgts => (true, true, true, true),
        }
    }

    pub fn apply(self, config: &mut ModelConfig) {
        let (lagcn, b, uc, ic) = self.flags();
        config.use_lagcn = lagcn;
        config.use_b_tensor = b;
        config.use_uc = uc;
        config.use_ic = ic;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_fully_enabled() {
        let c = ModelConfig::default();
        assert_eq!(c.validate(), Ok(()));
        assert!(c.use_lagcn && c.use_b_tensor && c.use_uc && c.use_ic);
        assert_eq!(c.lr, 5e-5);
        assert_eq!(c.batch_size, 12);
        assert_eq!(c.label_count, 4);
        assert_eq!(c.l_layers, 2);
        assert_eq!(c.kernels, vec![2, 3]);
        let (a, b, cc) = c.fusion_split();
        assert_eq!(a + b + cc, c.d_h);
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let mut c = ModelConfig::default();
        c.label_count = 3;
        assert!(c.validate().is_err());

        let mut c = ModelConfig::default();
        c.d_h = 30;
        assert!(c.validate().unwrap_err().contains("multiple of 4"));

        let mut c = ModelConfig::default();
        c.use_lagcn = false;
        assert!(c.validate().unwrap_err().contains("use_b_tensor"));

        let mut c = ModelConfig::default();
        c.l_layers = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn preset_expansion_is_injective_and_total() {
        let mut seen = Vec::new();
        for p in PRESETS {
            assert_eq!(Preset::from_name(p.name()), Some(p));
            let flags = p.flags();
            assert!(!seen.contains(&flags), "{} duplicates another arm", p.name());
            seen.push(flags);
            let mut c = ModelConfig::default();
            p.apply(&mut c);
            assert_eq!(c.validate(), Ok(()), "{}", p.name());
        }
        assert_eq!(Preset::from_name("nope"), None);
    }

    #[test]
    fn config_round_trips_through_json() {
        let c = ModelConfig::default();
        let json = serde_json::to_string(&c).unwrap();
        let back: ModelConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
        // Partial configs fill from defaults.
        let sparse: ModelConfig = serde_json::from_str(r#"{"d_h": 16, "lr": 0.001}"#).unwrap();
        assert_eq!(sparse.d_h, 16);
        assert_eq!(sparse.lr, 1e-3);
        assert_eq!(sparse.t_rounds, 2);
    }
}
