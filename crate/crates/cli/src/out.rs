use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use ionlayer::config::KeyValues;
use ionlayer::Error;
use serde::Serialize;

/// A failed run: which stage broke and why.
#[derive(Debug)]
pub struct Failure {
    stage: String,
    error: Option<Error>,
    message: Option<String>,
}

impl Failure {
    pub fn usage(message: String) -> Self {
        Self { stage: "arguments".into(), error: None, message: Some(message) }
    }

    pub fn at(stage: &str) -> impl FnOnce(Error) -> Failure + '_ {
        move |error| Failure { stage: stage.to_string(), error: Some(error), message: None }
    }

    pub fn check(stage: &str, message: String) -> Self {
        Self { stage: stage.into(), error: None, message: Some(message) }
    }

    /// 2 for bad input, 3 for numerical trouble.
    pub fn code(&self) -> u8 {
        match (&self.error, self.stage.as_str()) {
            (Some(e), _) if e.is_config_error() => 2,
            (None, "arguments") => 2,
            _ => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.error, &self.message) {
            (Some(e), _) => write!(f, "{} failed: {e}", self.stage),
            (None, Some(m)) => write!(f, "{}: {m}", self.stage),
            (None, None) => write!(f, "{} failed", self.stage),
        }
    }
}

pub fn load_config(path: &Path, known: &[&[&str]]) -> Result<KeyValues, Failure> {
    let kv = KeyValues::load(path).map_err(Failure::at("reading config"))?;
    let all: Vec<&str> = known.iter().flat_map(|k| k.iter().copied()).collect();
    kv.check_known(&all).map_err(Failure::at("reading config"))?;
    Ok(kv)
}

#[derive(Serialize)]
struct Timing {
    stage: String,
    seconds: f64,
}

/// Record of one run, written last so its presence marks success.
#[derive(Serialize)]
struct RunManifest<'a> {
    subcommand: &'a str,
    config: Option<String>,
    inputs: &'a [String],
    seeds: &'a [u64],
    out_dir: String,
    files: Vec<String>,
    timings: &'a [Timing],
    version: &'static str,
}

/// Output directory that remembers every file it writes.
pub struct OutDir {
    root: PathBuf,
    files: Vec<String>,
    reproducible: bool,
    subcommand: &'static str,
    config: Option<PathBuf>,
    inputs: Vec<String>,
    seeds: Vec<u64>,
    timings: Vec<Timing>,
    clock: Instant,
}

pub const MANIFEST: &str = "manifest.json";

impl OutDir {
    pub fn create(root: &Path, subcommand: &'static str, reproducible: bool) -> Result<Self, Failure> {
        fs::create_dir_all(root).map_err(|e| Failure::at("creating output directory")(e.into()))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
            reproducible,
            subcommand,
            config: None,
            inputs: Vec::new(),
            seeds: Vec::new(),
            timings: Vec::new(),
            clock: Instant::now(),
        })
    }

    pub fn set_config(&mut self, p: &Path) {
        self.config = Some(p.to_path_buf());
    }

    pub fn add_input(&mut self, p: &Path) {
        self.inputs.push(p.display().to_string());
    }

    pub fn add_seed(&mut self, s: u64) {
        self.seeds.push(s);
    }

    /// Closes the current timing interval under `stage`.
    pub fn lap(&mut self, stage: &str) {
        self.timings.push(Timing { stage: stage.into(), seconds: self.clock.elapsed().as_secs_f64() });
        self.clock = Instant::now();
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), Failure> {
        let path = self.root.join(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Failure::at("writing output")(e.into()))?;
        }
        fs::write(&path, contents).map_err(|e| Failure::at("writing output")(e.into()))?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        let text = serde_json::to_string_pretty(value).map_err(|e| Failure::at("writing output")(e.into()))?;
        self.write(name, &(text + "\n"))
    }

    /// Timestamp for figures, or none under `--reproducible`.
    pub fn stamp(&self) -> Option<String> {
        if self.reproducible {
            return None;
        }
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Some(format!("unix time {secs}"))
    }

    pub fn finish(mut self) -> Result<(), Failure> {
        self.lap("finish");
        let mut files = self.files.clone();
        files.push(MANIFEST.into());
        files.sort();
        let m = RunManifest {
            subcommand: self.subcommand,
            config: self.config.as_ref().map(|p| p.display().to_string()),
            inputs: &self.inputs,
            seeds: &self.seeds,
            out_dir: self.root.display().to_string(),
            files,
            timings: &self.timings,
            version: env!("CARGO_PKG_VERSION"),
        };
        let text = serde_json::to_string_pretty(&m).map_err(|e| Failure::at("writing manifest")(e.into()))?;
        fs::write(self.root.join(MANIFEST), text + "\n").map_err(|e| Failure::at("writing manifest")(e.into()))
    }
}
