use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{PipelineError, Result, Stage};
use crate::analysis::AnalysisGeometry;
use crate::edit::EditorSpec;
use crate::refine::{AttentionBlock, Embedder, DEFAULT_D_MODEL, DEFAULT_HEADS, EMBEDDING_SEED};
use crate::sbl::{IirFilter, SuppressConfig, PRINTED_A, PRINTED_B};
use crate::separation::SeparatorSpec;

/// Environment variable naming the config file used when `--config` is absent.
pub const CONFIG_ENV: &str = "NREDIT_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuppressSection {
    pub enabled: bool,
    #[serde(flatten)]
    pub config: SuppressConfig,
}

impl Default for SuppressSection {
    fn default() -> Self {
        Self { enabled: true, config: SuppressConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterSection {
    pub b: Vec<f64>,
    pub a: Vec<f64>,
}

impl Default for FilterSection {
    fn default() -> Self {
        Self { b: PRINTED_B.to_vec(), a: PRINTED_A.to_vec() }
    }
}

/// A backend kind plus its free-form parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendSection {
    pub kind: String,
    #[serde(flatten)]
    pub params: BTreeMap<String, toml::Value>,
}

impl BackendSection {
    fn new(kind: &str) -> Self {
        Self { kind: kind.to_string(), params: BTreeMap::new() }
    }

    fn string_params(&self) -> BTreeMap<String, String> {
        self.params
            .iter()
            .map(|(k, v)| {
                let s = match v {
                    toml::Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                (k.clone(), s)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KvSource {
    Xl,
    #[default]
    Xle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineSection {
    pub enabled: bool,
    /// Trained block file; when absent the block is drawn from `seed`.
    pub block: Option<PathBuf>,
    pub seed: u64,
    pub heads: usize,
    pub d_model: usize,
    pub kv_source: KvSource,
}

impl Default for RefineSection {
    fn default() -> Self {
        Self { enabled: true, block: None, seed: 0, heads: DEFAULT_HEADS, d_model: DEFAULT_D_MODEL, kv_source: KvSource::Xle }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

/// The on-disk configuration, every section optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub analysis: AnalysisGeometry,
    pub suppress: SuppressSection,
    pub filter: FilterSection,
    pub separator: BackendSection,
    pub editor: BackendSection,
    pub refine: RefineSection,
    pub output: OutputSection,
}

impl Default for ConfigFile {
    fn default() -> Self {
        Self {
            analysis: AnalysisGeometry::default(),
            suppress: SuppressSection::default(),
            filter: FilterSection::default(),
            separator: BackendSection::new("spectral_subtraction"),
            editor: BackendSection::new("splice"),
            refine: RefineSection::default(),
            output: OutputSection::default(),
        }
    }
}

/// A validated configuration with every backend resolved.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub file: ConfigFile,
    /// Relative paths in the file resolve against this directory.
    pub base_dir: PathBuf,
    pub separator: SeparatorSpec,
    pub editor: EditorSpec,
    pub filter: IirFilter,
    pub block: AttentionBlock,
    pub embedder: Embedder,
}

fn config_error(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::new(Stage::Config, e.to_string())
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::from_file(ConfigFile::default(), PathBuf::from(".")).expect("default config is valid")
    }
}

impl PipelineConfig {
    pub fn from_file(file: ConfigFile, base_dir: PathBuf) -> Result<Self> {
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base_dir.join(p) };
        let a = &file.analysis;
        if a.hop_length == 0 || a.hop_length > a.frame_length / 2 || !a.frame_length.is_power_of_two() || a.mel_bands == 0 {
            return Err(config_error(format!(
                "analysis geometry needs a power-of-two frame, 0 < hop <= frame/2 and mel_bands > 0, got {}/{}/{}",
                a.frame_length, a.hop_length, a.mel_bands
            )));
        }
        file.suppress.config.sbl.validate().map_err(config_error)?;
        let filter = IirFilter::new(file.filter.b.clone(), file.filter.a.clone()).map_err(config_error)?;

        let mut sep_params = file.separator.string_params();
        if file.separator.kind == "oracle" {
            let reference = sep_params.get("reference").map(|r| resolve(Path::new(r)));
            match reference {
                Some(r) if r.exists() => {
                    sep_params.insert("reference".into(), r.display().to_string());
                }
                Some(r) => return Err(config_error(format!("oracle reference {} does not exist", r.display()))),
                None => return Err(config_error("oracle separator requires `reference`")),
            }
        }
        if let Some(dir) = sep_params.get("working_dir").cloned() {
            sep_params.insert("working_dir".into(), resolve(Path::new(&dir)).display().to_string());
        }
        let separator = SeparatorSpec::from_params(&file.separator.kind, &sep_params).map_err(config_error)?;
        let editor = EditorSpec::from_params(&file.editor.kind, &file.editor.string_params()).map_err(config_error)?;

        let r = &file.refine;
        let block = match &r.block {
            Some(path) => {
                let path = resolve(path);
                if !path.exists() {
                    return Err(config_error(format!("attention block {} does not exist", path.display())));
                }
                AttentionBlock::load(&path).map_err(config_error)?
            }
            None => AttentionBlock::seeded(r.heads, r.d_model, r.seed).map_err(config_error)?,
        };
        let embedder = Embedder::new(file.analysis, block.d_model, EMBEDDING_SEED);
        Ok(Self { file, base_dir, separator, editor, filter, block, embedder })
    }

    pub fn from_toml_str(text: &str, base_dir: PathBuf) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(config_error)?;
        Self::from_file(file, base_dir)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        Self::from_toml_str(&text, base)
    }

    /// Loads `path`, else the file named by `NREDIT_CONFIG`, else defaults.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
                _ => Ok(Self::default()),
            },
        }
    }

    /// Rebuilds after `edit` changes the file form.
    pub fn modified(&self, edit: impl FnOnce(&mut ConfigFile)) -> Result<Self> {
        let mut file = self.file.clone();
        edit(&mut file);
        Self::from_file(file, self.base_dir.clone())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.file).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization, plus the block weights when
    /// they come from a file.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.to_toml().as_bytes());
        if self.file.refine.block.is_some() {
            h.update(self.block.to_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn suppression_enabled(&self) -> bool {
        self.file.suppress.enabled
    }

    pub fn refinement_enabled(&self) -> bool {
        self.file.refine.enabled
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        let cfg = PipelineConfig::from_toml_str("", PathBuf::from(".")).unwrap();
        assert_eq!(cfg.file, ConfigFile::default());
        assert_eq!(cfg.hash(), PipelineConfig::default().hash());
        assert_eq!(cfg.separator, SeparatorSpec::default());
        assert_eq!(cfg.editor, EditorSpec::default());
        assert_eq!(cfg.block.num_heads, 8);
    }

    #[test]
    fn sections_parse_and_roundtrip() {
        let text = r#"
[analysis]
frame_length = 512
hop_length = 128

[suppress]
enabled = false
lambda = 0.05
frame_length = 64

[separator]
kind = "spectral_subtraction"
percentile = 30
oversubtraction = 2.0

[editor]
kind = "splice"
crossfade_ms = 5

[refine]
enabled = false
kv_source = "xl"
heads = 4
d_model = 64
"#;
        let cfg = PipelineConfig::from_toml_str(text, PathBuf::from(".")).unwrap();
        assert_eq!(cfg.file.analysis.frame_length, 512);
        assert!(!cfg.suppression_enabled());
        assert_eq!(cfg.file.suppress.config.sbl.lambda, 0.05);
        assert_eq!(cfg.file.suppress.config.frame_length, 64);
        assert_eq!(cfg.separator, SeparatorSpec::SpectralSubtraction { noise_floor_percentile: 30.0, oversubtraction: 2.0 });
        assert_eq!(cfg.editor, EditorSpec::Splice { crossfade_ms: 5.0 });
        assert_eq!(cfg.file.refine.kv_source, KvSource::Xl);
        assert_eq!(cfg.block.d_k, 16);
        let again = PipelineConfig::from_toml_str(&cfg.to_toml(), PathBuf::from(".")).unwrap();
        assert_eq!(again.file, cfg.file);
        assert_eq!(again.hash(), cfg.hash());
        assert_ne!(cfg.hash(), PipelineConfig::default().hash());
    }

    #[test]
    fn invalid_configs_are_config_errors() {
        for text in [
            "[filter]\na = [2.0, 0.5]\nb = [1.0]",
            "[separator]\nkind = \"oracle\"\nreference = \"does/not/exist.wav\"",
            "[separator]\nkind = \"storm\"",
            "[refine]\nheads = 3",
            "[analysis]\nhop_length = 1000",
            "[typo]\nx = 1",
            "[suppress]\nlambda = -1.0",
        ] {
            let err = PipelineConfig::from_toml_str(text, PathBuf::from(".")).unwrap_err();
            assert_eq!(err.stage, Stage::Config, "{text}");
        }
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        crate::audio::write_wav(&crate::Waveform::silence(10, 16000), &dir.path().join("clean.wav"), Default::default()).unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "[separator]\nkind = \"oracle\"\nreference = \"clean.wav\"\n").unwrap();
        let cfg = PipelineConfig::load(&path).unwrap();
        assert!(matches!(cfg.separator, SeparatorSpec::Oracle(_)));
    }
}
