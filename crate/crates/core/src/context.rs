//! Shared runtime state: resources, the live taxonomy matcher, polarity
//! models, the census and the store.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::Serialize;

use crate::census::{parse_census, CensusError};
use crate::config::{ConfigError, MonitorConfig, PolarityConfig};
use crate::polarity::{read_dataset, train, PolarityError, PolarityModel};
use crate::resources::{ResourceError, ResourceSource, Resources, LANGUAGES};
use crate::store::{Store, StoreError};
use crate::taxonomy::{parse_taxonomy, CompiledMatcher, KeywordSpec, MatcherHandle, SentenceSplitter, TaxonomyError};

const TAXONOMY_TEXT_KEY: &str = "taxonomy_text";
const TAXONOMY_VERSION_KEY: &str = "taxonomy_version";

#[derive(Debug, thiserror::Error)]
pub enum ContextError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Resource(#[from] ResourceError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error(transparent)]
    Polarity(#[from] PolarityError),
    #[error(transparent)]
    Census(#[from] CensusError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn read_file(path: &Path) -> Result<String, ContextError> {
    std::fs::read_to_string(path).map_err(|source| ContextError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, text: &str) -> Result<(), ContextError> {
    let io = |source| ContextError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    std::fs::write(path, text).map_err(io)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaxonomySnapshot {
    pub version: u64,
    /// Taxonomy file text.
    pub text: String,
    pub keywords: Vec<KeywordSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrainReport {
    pub lang: String,
    pub base_examples: usize,
    pub corrections: usize,
    pub features: usize,
}

pub struct MonitorContext {
    pub resources: Arc<Resources>,
    pub matcher: MatcherHandle,
    pub splitter: SentenceSplitter,
    pub store: Arc<Store>,
    polarity: PolarityConfig,
    taxonomy_path: Option<PathBuf>,
    /// Serializes taxonomy updates so file, meta and matcher agree.
    taxonomy_text: Mutex<String>,
    models: RwLock<HashMap<String, Arc<PolarityModel>>>,
    census: RwLock<Arc<HashSet<String>>>,
}

impl std::fmt::Debug for MonitorContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MonitorContext")
            .field("taxonomy_version", &self.matcher.current().version())
            .field("models", &self.models.read().expect("models lock").keys().collect::<Vec<_>>())
            .finish_non_exhaustive()
    }
}

impl MonitorContext {
    /// Builds a context over an open store. The stored taxonomy version is
    /// carried forward; a taxonomy text differing from the stored one gets
    /// a new version.
    pub fn new(resources: Arc<Resources>, store: Arc<Store>, taxonomy_text: &str) -> Result<Self, ContextError> {
        let specs = parse_taxonomy(taxonomy_text)?;
        let stored_version: u64 = store.meta(TAXONOMY_VERSION_KEY)?.and_then(|v| v.parse().ok()).unwrap_or(0);
        let stored_text = store.meta(TAXONOMY_TEXT_KEY)?;
        let version = match stored_text.as_deref() {
            Some(t) if t == taxonomy_text && stored_version > 0 => stored_version,
            _ => stored_version + 1,
        };
        let matcher = CompiledMatcher::compile(&specs, version)?;
        store.set_meta(TAXONOMY_TEXT_KEY, taxonomy_text)?;
        store.set_meta(TAXONOMY_VERSION_KEY, &version.to_string())?;
        Ok(MonitorContext {
            resources,
            matcher: MatcherHandle::new(matcher),
            splitter: SentenceSplitter::default(),
            store,
            polarity: PolarityConfig::default(),
            taxonomy_path: None,
            taxonomy_text: Mutex::new(taxonomy_text.to_string()),
            models: RwLock::new(HashMap::new()),
            census: RwLock::new(Arc::new(HashSet::new())),
        })
    }

    pub fn from_config(cfg: &MonitorConfig) -> Result<Self, ContextError> {
        let resources = match &cfg.resources.dir {
            None if cfg.resources.backend.is_none() => Resources::bundled(),
            dir => {
                let src = dir.clone().map(ResourceSource::Dir).unwrap_or(ResourceSource::Bundled);
                let backend = cfg.resources.backend.as_deref().unwrap_or(crate::nlp::LEXICON_BACKEND);
                Arc::new(Resources::load(&src, &LANGUAGES, backend)?)
            }
        };
        let store = Arc::new(if cfg.storage.path.as_os_str() == ":memory:" {
            Store::open_in_memory()?
        } else {
            if let Some(dir) = cfg.storage.path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|source| ContextError::Io {
                    path: dir.to_path_buf(),
                    source,
                })?;
            }
            Store::open(&cfg.storage.path)?
        });
        let text = match &cfg.taxonomy {
            Some(p) if p.exists() => read_file(p)?,
            _ => store.meta(TAXONOMY_TEXT_KEY)?.unwrap_or_default(),
        };
        let mut ctx = MonitorContext::new(resources, store, &text)?;
        ctx.taxonomy_path = cfg.taxonomy.clone();
        ctx.polarity = cfg.polarity.clone();
        for (lang, path) in &cfg.polarity.models {
            if path.exists() {
                ctx.install_model(PolarityModel::load(path)?);
                tracing::info!(lang = %lang, path = %path.display(), "polarity model loaded");
            } else {
                tracing::warn!(lang = %lang, path = %path.display(), "polarity model missing; lexicon fallback in use");
            }
        }
        if let Some(path) = &cfg.census.path {
            if path.exists() {
                let entries = parse_census(&read_file(path)?)?;
                ctx.set_census(entries.into_iter().map(|e| e.user_id))?;
            }
        }
        Ok(ctx)
    }

    pub fn with_polarity_config(mut self, polarity: PolarityConfig) -> Self {
        self.polarity = polarity;
        self
    }

    pub fn model(&self, lang: &str) -> Option<Arc<PolarityModel>> {
        self.models.read().expect("models lock").get(lang).cloned()
    }

    pub fn model_languages(&self) -> Vec<String> {
        let mut langs: Vec<String> = self.models.read().expect("models lock").keys().cloned().collect();
        langs.sort();
        langs
    }

    pub fn install_model(&self, model: PolarityModel) {
        self.models
            .write()
            .expect("models lock")
            .insert(model.lang.clone(), Arc::new(model));
    }

    pub fn census(&self) -> Arc<HashSet<String>> {
        self.census.read().expect("census lock").clone()
    }

    /// Replaces the in-memory census and flags its members in the store.
    pub fn set_census(&self, members: impl IntoIterator<Item = String>) -> Result<usize, ContextError> {
        let set: HashSet<String> = members.into_iter().collect();
        self.store.set_census(set.iter().map(String::as_str))?;
        let n = set.len();
        *self.census.write().expect("census lock") = Arc::new(set);
        Ok(n)
    }

    pub fn taxonomy(&self) -> TaxonomySnapshot {
        let text = self.taxonomy_text.lock().expect("taxonomy lock");
        let matcher = self.matcher.current();
        TaxonomySnapshot {
            version: matcher.version(),
            text: text.clone(),
            keywords: matcher.specs().cloned().collect(),
        }
    }

    /// Parses, compiles and installs a new taxonomy file; the returned
    /// version is strictly larger than the previous one. Invalid input
    /// leaves everything unchanged.
    pub fn replace_taxonomy(&self, text: &str) -> Result<u64, ContextError> {
        let mut current = self.taxonomy_text.lock().expect("taxonomy lock");
        let specs = parse_taxonomy(text)?;
        CompiledMatcher::compile(&specs, 0)?;
        if let Some(path) = &self.taxonomy_path {
            write_file(path, text)?;
        }
        let version = self.matcher.replace(&specs)?;
        self.store.set_meta(TAXONOMY_TEXT_KEY, text)?;
        self.store.set_meta(TAXONOMY_VERSION_KEY, &version.to_string())?;
        *current = text.to_string();
        tracing::info!(version, keywords = specs.len(), "taxonomy replaced");
        Ok(version)
    }

    /// Trains a model for `lang` on the configured base dataset plus every
    /// stored correction in that language, then installs it and writes it
    /// to the configured model path.
    pub fn retrain(&self, lang: &str) -> Result<RetrainReport, ContextError> {
        let mut examples = match self.polarity.training.get(lang) {
            Some(path) => read_dataset(&read_file(path)?)?
                .into_iter()
                .filter(|e| e.lang == lang)
                .collect(),
            None => Vec::new(),
        };
        let base_examples = examples.len();
        let corrections = self.store.correction_examples(Some(lang))?;
        let n_corrections = corrections.len();
        examples.extend(corrections);
        if examples.is_empty() {
            return Err(PolarityError::EmptyData.into());
        }
        let model = train(&examples, &self.polarity.train, &self.resources)?;
        if let Some(path) = self.polarity.models.get(lang) {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|source| ContextError::Io {
                    path: dir.to_path_buf(),
                    source,
                })?;
            }
            model.save(path)?;
        }
        let report = RetrainReport {
            lang: lang.to_string(),
            base_examples,
            corrections: n_corrections,
            features: model.space.len(),
        };
        self.install_model(model);
        tracing::info!(?report, "polarity model retrained");
        Ok(report)
    }
}
