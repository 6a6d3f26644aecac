//! Flat `key=value` run configuration with command-line overrides.
//!
//! Every tunable of the pipeline lives here under one documented key (see
//! the README for the full table). Files parse totally or fail naming the
//! offending key; unknown keys are rejected. The canonical rendering of
//! the effective config is hashed into every stage manifest.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use companions_core::attn_mean::TrainConfig;
use companions_core::cluster::Metric;
use companions_core::embed::SkipGramConfig;
use companions_core::synth::{CloneConfig, SynthConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub run_dir: PathBuf,
    pub corpus: PathBuf,
    pub ground_truth: PathBuf,
    pub gates: PathBuf,

    pub cell_len: f64,
    pub d_cell: usize,

    pub sg_window: usize,
    pub sg_negatives: usize,
    pub sg_epochs: usize,
    pub sg_lr: f64,

    pub group_capacity: usize,
    pub str_normalize: bool,

    pub batch_size: usize,
    pub epochs: usize,
    pub lambda_sim: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub grad_clip: f64,
    pub similarity_path: bool,
    pub positional_encoding: bool,

    pub eps_from: f64,
    pub eps_to: f64,
    pub eps_step: f64,
    pub min_pts: usize,
    pub cluster_metric: Metric,

    pub interp_step: i64,
    pub pattern_k: usize,
    pub pattern_m: usize,
    pub pattern_e: f64,

    pub synth_preset: String,
    pub synth_out: PathBuf,
    pub synth_n_groups: usize,
    pub synth_group_size_min: usize,
    pub synth_group_size_max: usize,
    pub synth_n_loners: usize,
    pub synth_area_x: f64,
    pub synth_area_y: f64,
    pub synth_n_gates: usize,
    pub synth_speed_min: f64,
    pub synth_speed_max: f64,
    pub synth_jitter_sigma: f64,
    pub synth_offset_min: i64,
    pub synth_offset_max: i64,
    pub synth_points_min: usize,
    pub synth_points_max: usize,
    pub synth_time_span: i64,
    pub synth_dt_min: i64,
    pub synth_dt_max: i64,
    pub synth_clone_sets: usize,
    pub synth_clone_groups: usize,
    pub synth_clone_gap: i64,
    pub synth_clone_branch: usize,

    /// Keys set explicitly by file or flag; synth presets only yield to
    /// these.
    explicit: BTreeSet<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            run_dir: PathBuf::from("runs/run0"),
            corpus: PathBuf::from("data/corpus.csv"),
            ground_truth: PathBuf::from("data/ground_truth.csv"),
            gates: PathBuf::from("data/gates.csv"),
            cell_len: 5.0,
            d_cell: 256,
            sg_window: 5,
            sg_negatives: 5,
            sg_epochs: 3,
            sg_lr: 0.025,
            group_capacity: 64,
            str_normalize: true,
            batch_size: 8,
            epochs: 20,
            lambda_sim: 1.0,
            lr: 0.001,
            weight_decay: 0.00001,
            grad_clip: 5.0,
            similarity_path: true,
            positional_encoding: true,
            eps_from: 0.0,
            eps_to: 0.2,
            eps_step: 0.0001,
            min_pts: 2,
            cluster_metric: Metric::Cosine,
            interp_step: 10,
            pattern_k: 18,
            pattern_m: 2,
            pattern_e: 3.0,
            synth_preset: "default".into(),
            synth_out: PathBuf::from("data"),
            synth_n_groups: 40,
            synth_group_size_min: 2,
            synth_group_size_max: 4,
            synth_n_loners: 80,
            synth_area_x: 400.0,
            synth_area_y: 300.0,
            synth_n_gates: 6,
            synth_speed_min: 0.8,
            synth_speed_max: 1.8,
            synth_jitter_sigma: 1.0,
            synth_offset_min: 0,
            synth_offset_max: 30,
            synth_points_min: 20,
            synth_points_max: 120,
            synth_time_span: 14400,
            synth_dt_min: 2,
            synth_dt_max: 6,
            synth_clone_sets: 12,
            synth_clone_groups: 2,
            synth_clone_gap: 7200,
            synth_clone_branch: 3,
            explicit: BTreeSet::new(),
        }
    }
}

macro_rules! config_keys {
    ($($key:literal => $field:ident : $ty:ty),+ $(,)?) => {
        impl RunConfig {
            pub const KEYS: &'static [&'static str] = &[$($key),+];

            /// Apply one `key=value` pair.
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                match key {
                    $(
                        $key => {
                            self.$field = parse_value::<$ty>(key, value)?;
                        }
                    )+
                    _ => bail!("unknown config key {key:?} (see README for the key list)"),
                }
                self.explicit.insert(key.to_string());
                Ok(())
            }

            /// Canonical `key=value` lines of the full effective config.
            pub fn canonical(&self) -> String {
                let mut s = String::new();
                $(
                    let _ = writeln!(s, "{}={}", $key, render(&self.$field));
                )+
                s
            }
        }
    };
}

config_keys! {
    "seed" => seed: u64,
    "run_dir" => run_dir: PathBuf,
    "corpus" => corpus: PathBuf,
    "ground_truth" => ground_truth: PathBuf,
    "gates" => gates: PathBuf,
    "cell_len" => cell_len: f64,
    "d_cell" => d_cell: usize,
    "sg_window" => sg_window: usize,
    "sg_negatives" => sg_negatives: usize,
    "sg_epochs" => sg_epochs: usize,
    "sg_lr" => sg_lr: f64,
    "group_capacity" => group_capacity: usize,
    "str_normalize" => str_normalize: bool,
    "batch_size" => batch_size: usize,
    "epochs" => epochs: usize,
    "lambda_sim" => lambda_sim: f64,
    "lr" => lr: f64,
    "weight_decay" => weight_decay: f64,
    "grad_clip" => grad_clip: f64,
    "similarity_path" => similarity_path: bool,
    "positional_encoding" => positional_encoding: bool,
    "eps_from" => eps_from: f64,
    "eps_to" => eps_to: f64,
    "eps_step" => eps_step: f64,
    "min_pts" => min_pts: usize,
    "cluster_metric" => cluster_metric: Metric,
    "interp_step" => interp_step: i64,
    "pattern_k" => pattern_k: usize,
    "pattern_m" => pattern_m: usize,
    "pattern_e" => pattern_e: f64,
    "synth_preset" => synth_preset: String,
    "synth_out" => synth_out: PathBuf,
    "synth_n_groups" => synth_n_groups: usize,
    "synth_group_size_min" => synth_group_size_min: usize,
    "synth_group_size_max" => synth_group_size_max: usize,
    "synth_n_loners" => synth_n_loners: usize,
    "synth_area_x" => synth_area_x: f64,
    "synth_area_y" => synth_area_y: f64,
    "synth_n_gates" => synth_n_gates: usize,
    "synth_speed_min" => synth_speed_min: f64,
    "synth_speed_max" => synth_speed_max: f64,
    "synth_jitter_sigma" => synth_jitter_sigma: f64,
    "synth_offset_min" => synth_offset_min: i64,
    "synth_offset_max" => synth_offset_max: i64,
    "synth_points_min" => synth_points_min: usize,
    "synth_points_max" => synth_points_max: usize,
    "synth_time_span" => synth_time_span: i64,
    "synth_dt_min" => synth_dt_min: i64,
    "synth_dt_max" => synth_dt_max: i64,
    "synth_clone_sets" => synth_clone_sets: usize,
    "synth_clone_groups" => synth_clone_groups: usize,
    "synth_clone_gap" => synth_clone_gap: i64,
    "synth_clone_branch" => synth_clone_branch: usize,
}

trait ConfigValue: Sized {
    fn parse_cfg(raw: &str) -> Result<Self>;
    fn render_cfg(&self) -> String;
}

fn parse_value<T: ConfigValue>(key: &str, raw: &str) -> Result<T> {
    T::parse_cfg(raw.trim()).with_context(|| format!("bad value for key {key:?}: {raw:?}"))
}

fn render<T: ConfigValue>(v: &T) -> String {
    v.render_cfg()
}

macro_rules! via_fromstr {
    ($($ty:ty),+) => {
        $(
            impl ConfigValue for $ty {
                fn parse_cfg(raw: &str) -> Result<Self> {
                    raw.parse().map_err(|e| anyhow!("{e}"))
                }
                fn render_cfg(&self) -> String {
                    self.to_string()
                }
            }
        )+
    };
}

via_fromstr!(u64, usize, i64, f64, String);

impl ConfigValue for bool {
    fn parse_cfg(raw: &str) -> Result<Self> {
        match raw {
            "true" | "1" | "yes" | "on" => Ok(true),
            "false" | "0" | "no" | "off" => Ok(false),
            other => bail!("expected a boolean, got {other:?}"),
        }
    }
    fn render_cfg(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for PathBuf {
    fn parse_cfg(raw: &str) -> Result<Self> {
        if raw.is_empty() {
            bail!("empty path");
        }
        Ok(PathBuf::from(raw))
    }
    fn render_cfg(&self) -> String {
        self.display().to_string()
    }
}

impl ConfigValue for Metric {
    fn parse_cfg(raw: &str) -> Result<Self> {
        match raw {
            "cosine" => Ok(Metric::Cosine),
            "euclidean" => Ok(Metric::Euclidean),
            other => bail!("expected cosine or euclidean, got {other:?}"),
        }
    }
    fn render_cfg(&self) -> String {
        match self {
            Metric::Cosine => "cosine".into(),
            Metric::Euclidean => "euclidean".into(),
        }
    }
}

impl RunConfig {
    /// Defaults, then the optional file, then `--set` pairs.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read config file {}", path.display()))?;
            for (lineno, line) in text.lines().enumerate() {
                let trimmed = line.trim();
                if trimmed.is_empty() || trimmed.starts_with('#') {
                    continue;
                }
                let (key, value) = trimmed
                    .split_once('=')
                    .ok_or_else(|| anyhow!("{}:{}: expected key=value", path.display(), lineno + 1))?;
                cfg.set(key.trim(), value)
                    .with_context(|| format!("{}:{}", path.display(), lineno + 1))?;
            }
        }
        for pair in overrides {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| anyhow!("--set expects key=value, got {pair:?}"))?;
            cfg.set(key.trim(), value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.d_cell % 2 != 0 {
            bail!("d_cell must be even (sin/cos component pairs)");
        }
        if self.batch_size == 0 || self.batch_size > self.group_capacity {
            bail!("batch_size must be in 1..=group_capacity");
        }
        if self.eps_step <= 0.0 || self.eps_to < self.eps_from {
            bail!("bad epsilon sweep range");
        }
        if !(self.cell_len > 0.0) {
            bail!("cell_len must be positive");
        }
        if self.lambda_sim < 0.0 {
            bail!("lambda_sim must be >= 0");
        }
        Ok(())
    }

    pub fn was_set(&self, key: &str) -> bool {
        self.explicit.contains(key)
    }

    pub fn skipgram_config(&self) -> SkipGramConfig {
        SkipGramConfig {
            dim: self.d_cell,
            window: self.sg_window,
            negatives: self.sg_negatives,
            epochs: self.sg_epochs,
            lr: self.sg_lr,
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            capacity: self.group_capacity,
            batch_size: self.batch_size,
            epochs: self.epochs,
            lambda_sim: self.lambda_sim,
            lr: self.lr,
            weight_decay: self.weight_decay,
            grad_clip: self.grad_clip,
            seed: self.seed,
            similarity_path: self.similarity_path,
            positional_encoding: self.positional_encoding,
        }
    }

    /// Synthetic-corpus config: the preset provides the base, explicit
    /// `synth_*` keys override it field by field.
    pub fn synth_config(&self) -> Result<SynthConfig> {
        let mut s = match self.synth_preset.as_str() {
            "default" => SynthConfig::desk_default(self.seed),
            "clones" => SynthConfig::time_shifted_clones(self.seed),
            other => bail!("unknown synth_preset {other:?} (default or clones)"),
        };
        s.seed = self.seed;
        let over = |key: &str| self.was_set(key);
        if over("synth_n_groups") {
            s.n_groups = self.synth_n_groups;
        }
        if over("synth_group_size_min") || over("synth_group_size_max") {
            s.group_size = (self.synth_group_size_min, self.synth_group_size_max);
        }
        if over("synth_n_loners") {
            s.n_loners = self.synth_n_loners;
        }
        if over("synth_area_x") || over("synth_area_y") {
            s.area = (self.synth_area_x, self.synth_area_y);
        }
        if over("synth_n_gates") {
            s.n_gates = self.synth_n_gates;
        }
        if over("synth_speed_min") || over("synth_speed_max") {
            s.speed = (self.synth_speed_min, self.synth_speed_max);
        }
        if over("synth_jitter_sigma") {
            s.jitter_sigma = self.synth_jitter_sigma;
        }
        if over("synth_offset_min") || over("synth_offset_max") {
            s.time_offset = (self.synth_offset_min, self.synth_offset_max);
        }
        if over("synth_points_min") || over("synth_points_max") {
            s.points_per_traj = (self.synth_points_min, self.synth_points_max);
        }
        if over("synth_time_span") {
            s.time_span = self.synth_time_span;
        }
        if over("synth_dt_min") || over("synth_dt_max") {
            s.sample_dt = (self.synth_dt_min, self.synth_dt_max);
        }
        if let Some(clones) = &mut s.clones {
            if over("synth_clone_sets") {
                clones.sets = self.synth_clone_sets;
            }
            if over("synth_clone_groups") {
                clones.groups_per_set = self.synth_clone_groups;
            }
            if over("synth_clone_gap") {
                clones.gap = self.synth_clone_gap;
            }
            if over("synth_clone_branch") {
                clones.branch_points = self.synth_clone_branch;
            }
            let _ = CloneConfig { ..*clones };
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_is_rejected() {
        let err = RunConfig::load(None, &["frobnicate=1".into()]).unwrap_err();
        assert!(err.to_string().contains("frobnicate"));
    }

    #[test]
    fn overrides_apply_in_order() {
        let cfg =
            RunConfig::load(None, &["epochs=3".into(), "epochs=7".into()]).unwrap();
        assert_eq!(cfg.epochs, 7);
        assert!(cfg.was_set("epochs"));
        assert!(!cfg.was_set("seed"));
    }

    #[test]
    fn bad_value_names_the_key() {
        let err = RunConfig::load(None, &["epochs=soon".into()]).unwrap_err();
        assert!(format!("{err:#}").contains("epochs"));
    }

    #[test]
    fn canonical_rendering_covers_every_key() {
        let cfg = RunConfig::default();
        let text = cfg.canonical();
        for key in RunConfig::KEYS {
            assert!(
                text.lines().any(|l| l.starts_with(&format!("{key}="))),
                "{key} missing from canonical form"
            );
        }
    }

    #[test]
    fn clone_preset_honors_explicit_overrides_only() {
        let cfg = RunConfig::load(
            None,
            &["synth_preset=clones".into(), "synth_clone_sets=3".into()],
        )
        .unwrap();
        let s = cfg.synth_config().unwrap();
        let clones = s.clones.unwrap();
        assert_eq!(clones.sets, 3);
        // Non-overridden clone fields keep the preset values.
        assert_eq!(clones.groups_per_set, 2);
        assert_eq!(s.n_gates, 8, "preset value, not the flat default");
    }
}
