use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_yaml::{Mapping, Value};

use super::{run, ExperimentConfig, RunOptions, RunSummary};
use crate::error::{Error, Result};

pub const SWEEP_INDEX_FILE: &str = "sweep_index.json";

/// Parses `path=v1,v2,...`; each value is read as a YAML scalar.
pub fn parse_grid_arg(arg: &str) -> Result<(String, Vec<Value>)> {
    let (key, values) = arg
        .split_once('=')
        .ok_or_else(|| Error::config(arg, "grid entries look like key=v1,v2"))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(Error::config(arg, "empty grid key"));
    }
    let values = values
        .split(',')
        .map(|v| serde_yaml::from_str::<Value>(v.trim()).map_err(|e| Error::config(key, e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    Ok((key.to_string(), values))
}

fn leaf_paths(value: &Value, prefix: &str, out: &mut Vec<String>) {
    match value {
        Value::Mapping(m) => {
            for (k, v) in m {
                if let Some(k) = k.as_str() {
                    let path = if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
                    leaf_paths(v, &path, out);
                }
            }
        }
        _ => out.push(prefix.to_string()),
    }
}

fn lookup<'a>(value: &'a Value, path: &str) -> Option<&'a Value> {
    path.split('.').try_fold(value, |v, seg| v.as_mapping()?.get(seg))
}

/// Resolves a grid key against `base`: an existing dotted path, a new key
/// under an existing section, or a unique suffix of one leaf path.
pub fn resolve_grid_path(base: &Value, key: &str) -> Result<String> {
    if lookup(base, key).is_some() {
        return Ok(key.to_string());
    }
    if let Some((parent, _)) = key.rsplit_once('.') {
        if lookup(base, parent).is_some_and(Value::is_mapping) {
            return Ok(key.to_string());
        }
    }
    let mut leaves = Vec::new();
    leaf_paths(base, "", &mut leaves);
    let suffix = format!(".{key}");
    let matches: Vec<String> = leaves.into_iter().filter(|p| p.ends_with(&suffix)).collect();
    match matches.as_slice() {
        [one] => Ok(one.clone()),
        [] => Err(Error::config(key, "grid key does not resolve into the base config")),
        many => Err(Error::config(key, format!("ambiguous grid key, matches {}", many.join(", ")))),
    }
}

fn set_path(root: &mut Value, path: &str, new: Value) -> Result<()> {
    let mut segments: Vec<&str> = path.split('.').collect();
    let last = segments.pop().expect("split yields at least one segment");
    let mut node = root;
    for seg in segments {
        node = node
            .as_mapping_mut()
            .and_then(|m| m.get_mut(seg))
            .ok_or_else(|| Error::config(path, "path does not exist"))?;
    }
    let map: &mut Mapping = node
        .as_mapping_mut()
        .ok_or_else(|| Error::config(path, "parent is not a mapping"))?;
    map.insert(last.into(), new);
    Ok(())
}

fn scalar_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => "null".into(),
        other => serde_yaml::to_string(other).unwrap_or_default().trim().to_string(),
    }
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._=-".contains(c) { c } else { '_' })
        .collect()
}

/// One configuration of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub index: usize,
    pub overrides: Vec<(String, Value)>,
    pub config: ExperimentConfig,
}

impl SweepPoint {
    /// Directory name, e.g. `002-optimizer.lr=0.01`; `000-base` for an empty grid.
    pub fn dir_name(&self) -> String {
        if self.overrides.is_empty() {
            return format!("{:03}-base", self.index);
        }
        let parts: Vec<String> = self
            .overrides
            .iter()
            .map(|(k, v)| sanitize(&format!("{k}={}", scalar_text(v))))
            .collect();
        format!("{:03}-{}", self.index, parts.join(","))
    }
}

/// Grid search over dotted config paths.
#[derive(Clone, Debug)]
pub struct Sweep {
    base: ExperimentConfig,
    grid: Vec<(String, Vec<Value>)>,
}

impl Sweep {
    /// Resolves grid keys and orders them lexicographically by path.
    pub fn new(base: ExperimentConfig, grid: Vec<(String, Vec<Value>)>) -> Result<Self> {
        let tree = base.to_value()?;
        let mut resolved: BTreeMap<String, Vec<Value>> = BTreeMap::new();
        for (key, values) in grid {
            if values.is_empty() {
                return Err(Error::config(key, "grid key has no values"));
            }
            let path = resolve_grid_path(&tree, &key)?;
            if resolved.insert(path.clone(), values).is_some() {
                return Err(Error::config(path, "grid path given twice"));
            }
        }
        Ok(Self {
            base,
            grid: resolved.into_iter().collect(),
        })
    }

    pub fn grid(&self) -> &[(String, Vec<Value>)] {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.iter().map(|(_, v)| v.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn base(&self) -> &ExperimentConfig {
        &self.base
    }

    /// Cartesian product with the last path varying fastest. Each point gets
    /// seed `base + index` unless `seed` is itself swept. Every point is
    /// parsed and routed here, so a bad point fails before any run starts.
    pub fn points(&self) -> Result<Vec<SweepPoint>> {
        let tree = self.base.to_value()?;
        let sweeps_seed = self.grid.iter().any(|(p, _)| p == "seed");
        (0..self.len())
            .map(|index| {
                let mut rest = index;
                let mut overrides = vec![(String::new(), Value::Null); self.grid.len()];
                for (slot, (path, values)) in self.grid.iter().enumerate().rev() {
                    overrides[slot] = (path.clone(), values[rest % values.len()].clone());
                    rest /= values.len();
                }
                let mut value = tree.clone();
                for (path, v) in &overrides {
                    set_path(&mut value, path, v.clone())?;
                }
                let mut config = ExperimentConfig::from_value(value)?;
                if !sweeps_seed {
                    config.seed = self.base.seed + index as u64;
                }
                config.validate()?;
                Ok(SweepPoint {
                    index,
                    overrides,
                    config,
                })
            })
            .collect()
    }
}

#[derive(Serialize)]
struct IndexEntry<'a> {
    index: usize,
    run_dir: String,
    seed: u64,
    overrides: BTreeMap<&'a str, &'a Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    avg_acc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    forgetting: Option<f64>,
}

fn write_index(out_dir: &Path, points: &[SweepPoint], results: &[RunSummary]) -> Result<()> {
    let entries: Vec<IndexEntry> = points
        .iter()
        .map(|p| {
            let result = results.get(p.index);
            IndexEntry {
                index: p.index,
                run_dir: p.dir_name(),
                seed: p.config.seed,
                overrides: p.overrides.iter().map(|(k, v)| (k.as_str(), v)).collect(),
                avg_acc: result.map(|r| r.avg_acc),
                forgetting: result.and_then(|r| r.forgetting),
            }
        })
        .collect();
    let path = out_dir.join(SWEEP_INDEX_FILE);
    let text = serde_json::to_string_pretty(&entries).map_err(|e| Error::Serialization(e.to_string()))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Runs every point into `out_dir/<point dir>` and writes the sweep index.
pub fn run_sweep(sweep: &Sweep, out_dir: &Path, options: &RunOptions) -> Result<Vec<RunSummary>> {
    let points = sweep.points()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_index(out_dir, &points, &[])?;
    let mut results = Vec::with_capacity(points.len());
    for point in &points {
        log::info!("sweep point {}/{}: {}", point.index + 1, points.len(), point.dir_name());
        let opts = RunOptions {
            run_dir: Some(out_dir.join(point.dir_name())),
            ..options.clone()
        };
        results.push(run(&point.config, &opts)?);
        write_index(out_dir, &points, &results)?;
    }
    Ok(results)
}
