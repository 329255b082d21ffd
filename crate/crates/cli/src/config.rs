//! Flat `key = value` experiment configuration.
//!
//! One pair per line, `#` starts a comment. Unknown keys and duplicates are
//! rejected. Command-line `--key value` pairs override file entries.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use voradv_core::attacks::AttackKind;
use voradv_core::geometry::{CoverLevel, ManifoldKind};
use voradv_core::optim::OptimizerConfig;
use voradv_core::training::TrainMode;
use voradv_core::Norm;

use crate::error::{CliError, CliResult, IoContext};

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "root seed for every random stream"),
    ("out", "output directory"),
    ("threads", "worker threads, 0 for all cores"),
    ("kind", "generated dataset: circles or planes"),
    ("codim", "codimension, or a comma list for a sweep"),
    ("n_per_class", "circles: training points per class"),
    ("n_test_per_class", "circles: test points per class"),
    ("cover", "planes: grid cover 1.0, 0.5 or 0.25"),
    ("train", "training dataset CSV (instead of generating)"),
    ("test", "test dataset CSV (instead of generating)"),
    ("mode", "natural, ball or voronoi"),
    ("epochs", "maximum training epochs"),
    ("batch_size", "mini-batch size, 0 for full batch"),
    ("hidden", "hidden units"),
    ("optimizer", "adam or sgd"),
    ("lr", "learning rate"),
    ("momentum", "sgd momentum"),
    ("m", "rivals per class in Voronoi constraint sets"),
    ("retrainings", "independent retrainings"),
    ("early_stop_loss", "stop when an epoch's mean loss is below this, 0 disables"),
    ("norm", "l2 or linf, for training and evaluation attacks"),
    ("train_attack", "inner attack: pgd, bim, fgsm or voronoi; auto picks by mode"),
    ("train_epsilon", "ball training budget"),
    ("train_step", "inner attack step, auto for the default"),
    ("train_iters", "inner attack iterations"),
    ("attacks", "evaluation suite, comma list of fgsm, bim, pgd"),
    ("eval_iters", "iterations of iterative evaluation attacks"),
    ("eps_max", "largest evaluation budget, auto for the default"),
    ("eps_points", "evaluation grid size"),
    ("eval_n", "stratified test subset size, 0 for all"),
    ("cert_eps", "certification budgets"),
    ("gap_k", "intrinsic dimensions for covering counts"),
    ("gap_eps", "budgets for covering counts"),
    ("coverage_codims", "planes codimensions for the coverage estimate"),
    ("coverage_eps", "tube radius for the coverage estimate"),
    ("mc_points", "Monte Carlo samples per coverage estimate"),
    ("images", "IDX image file"),
    ("labels", "IDX label file"),
    ("subset_n", "stratified subset size for ingestion, 0 for all"),
    ("role", "role of ingested data: train or test"),
    ("run_dir", "existing run directory to re-evaluate"),
];

/// Parses `key = value` text into a map.
pub fn parse_pairs(text: &str) -> CliResult<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("line {}: expected key = value", n + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        check_key(k)?;
        if map.insert(k.to_string(), v.to_string()).is_some() {
            return Err(CliError::config(format!("line {}: duplicate key `{k}`", n + 1)));
        }
    }
    Ok(map)
}

fn check_key(k: &str) -> CliResult<()> {
    if KEYS.iter().any(|(key, _)| *key == k) {
        Ok(())
    } else {
        Err(CliError::config(format!("unknown key `{k}`")))
    }
}

/// Parses `--key value` / `--key=value` overrides.
pub fn parse_overrides(args: &[String]) -> CliResult<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let key = a
            .strip_prefix("--")
            .ok_or_else(|| CliError::config(format!("expected --key, got `{a}`")))?;
        let (k, v) = match key.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it.next().ok_or_else(|| CliError::config(format!("--{key} needs a value")))?;
                (key.to_string(), v.clone())
            }
        };
        let k = k.replace('-', "_");
        check_key(&k)?;
        map.insert(k, v);
    }
    Ok(map)
}

pub fn load(config: Option<&Path>, overrides: &[String]) -> CliResult<ExperimentConfig> {
    let mut map = match config {
        Some(p) => parse_pairs(&std::fs::read_to_string(p).at(p)?)?,
        None => BTreeMap::new(),
    };
    map.extend(parse_overrides(overrides)?);
    ExperimentConfig::from_map(&map)
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Generated { kind: ManifoldKind, codims: Vec<usize>, n_per_class: usize, n_test_per_class: usize, cover: CoverLevel },
    Files { train: PathBuf, test: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub threads: usize,
    pub data: DataSource,
    pub mode: TrainMode,
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden: usize,
    pub optimizer: String,
    pub lr: f64,
    pub momentum: f64,
    pub m: usize,
    pub retrainings: usize,
    pub early_stop_loss: f64,
    pub norm: Norm,
    pub train_attack: Option<AttackKind>,
    pub train_epsilon: f64,
    pub train_step: Option<f64>,
    pub train_iters: usize,
    pub attacks: Vec<AttackKind>,
    pub eval_iters: usize,
    pub eps_max: Option<f64>,
    pub eps_points: usize,
    pub eval_n: usize,
    pub cert_eps: Vec<f64>,
    pub gap_k: Vec<usize>,
    pub gap_eps: Vec<f64>,
    pub coverage_codims: Vec<usize>,
    pub coverage_eps: f64,
    pub mc_points: usize,
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub subset_n: usize,
    pub role: String,
    pub run_dir: Option<PathBuf>,
}

struct Reader<'a> {
    map: &'a BTreeMap<String, String>,
}

impl Reader<'_> {
    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    fn get<T: FromStr>(&self, key: &str, default: T) -> CliResult<T> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => parse_value(key, v),
        }
    }

    fn auto<T: FromStr>(&self, key: &str) -> CliResult<Option<T>> {
        match self.raw(key) {
            None | Some("auto") => Ok(None),
            Some(v) => parse_value(key, v).map(Some),
        }
    }

    fn list<T: FromStr>(&self, key: &str, default: &str) -> CliResult<Vec<T>> {
        let v = self.raw(key).unwrap_or(default);
        v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| parse_value(key, s)).collect()
    }

    fn path(&self, key: &str) -> CliResult<Option<PathBuf>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => {
                let p = PathBuf::from(v);
                if !p.exists() {
                    return Err(CliError::config(format!("{key}: `{v}` does not exist")));
                }
                Ok(Some(p))
            }
        }
    }
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> CliResult<T> {
    v.trim().parse().map_err(|_| CliError::config(format!("{key}: cannot parse `{v}`")))
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn or_auto<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "auto".to_string(), ToString::to_string)
}

impl ExperimentConfig {
    pub fn from_map(map: &BTreeMap<String, String>) -> CliResult<Self> {
        for k in map.keys() {
            check_key(k)?;
        }
        let r = Reader { map };
        let train = r.path("train")?;
        let test = r.path("test")?;
        let data = match (train, test) {
            (Some(train), Some(test)) => DataSource::Files { train, test },
            (None, None) => DataSource::Generated {
                kind: r.get("kind", ManifoldKind::Planes)?,
                codims: r.list("codim", "10")?,
                n_per_class: r.get("n_per_class", 1000)?,
                n_test_per_class: r.get("n_test_per_class", 1000)?,
                cover: r.get("cover", CoverLevel::One)?,
            },
            _ => return Err(CliError::config("train and test must be given together")),
        };
        if let DataSource::Generated { codims, .. } = &data {
            if codims.is_empty() {
                return Err(CliError::config("codim: empty list"));
            }
        }
        let cfg = ExperimentConfig {
            seed: r.get("seed", 0)?,
            out: r.get("out", PathBuf::from("runs/out"))?,
            threads: r.get("threads", 0)?,
            data,
            mode: r.get("mode", TrainMode::Natural)?,
            epochs: r.get("epochs", voradv_core::training::DEFAULT_EPOCHS)?,
            batch_size: r.get("batch_size", voradv_core::training::DEFAULT_BATCH_SIZE)?,
            hidden: r.get("hidden", voradv_core::net::DEFAULT_HIDDEN)?,
            optimizer: r.get("optimizer", "adam".to_string())?,
            lr: r.get("lr", 0.1)?,
            momentum: r.get("momentum", 0.0)?,
            m: r.get("m", voradv_core::training::DEFAULT_M)?,
            retrainings: r.get("retrainings", 20)?,
            early_stop_loss: r.get("early_stop_loss", voradv_core::training::EARLY_STOP_LOSS)?,
            norm: r.get("norm", Norm::L2)?,
            train_attack: r.auto("train_attack")?,
            train_epsilon: r.get("train_epsilon", 0.5)?,
            train_step: r.auto("train_step")?,
            train_iters: r.get("train_iters", voradv_core::attacks::DEFAULT_ITERS)?,
            attacks: r.list("attacks", "fgsm,bim")?,
            eval_iters: r.get("eval_iters", 10)?,
            eps_max: r.auto("eps_max")?,
            eps_points: r.get("eps_points", 21)?,
            eval_n: r.get("eval_n", 0)?,
            cert_eps: r.list("cert_eps", "0,0.25,0.45,0.5,0.75,1")?,
            gap_k: r.list("gap_k", "1,2,3,4,5,6")?,
            gap_eps: r.list("gap_eps", "0,0.25,0.5")?,
            coverage_codims: r.list("coverage_codims", "1,10,100,500")?,
            coverage_eps: r.get("coverage_eps", 0.5)?,
            mc_points: r.get("mc_points", 100_000)?,
            images: r.path("images")?,
            labels: r.path("labels")?,
            subset_n: r.get("subset_n", 0)?,
            role: r.get("role", "train".to_string())?,
            run_dir: r.path("run_dir")?,
        };
        cfg.optimizer_config()?;
        if cfg.attacks.is_empty() || cfg.attacks.contains(&AttackKind::VoronoiPgd) {
            return Err(CliError::config("attacks: need a nonempty list of fgsm, bim or pgd"));
        }
        if !matches!(cfg.role.as_str(), "train" | "test") {
            return Err(CliError::config("role: train or test"));
        }
        Ok(cfg)
    }

    pub fn optimizer_config(&self) -> CliResult<OptimizerConfig> {
        let o = match self.optimizer.as_str() {
            "adam" => OptimizerConfig::adam(self.lr),
            "sgd" => OptimizerConfig::sgd(self.lr, self.momentum),
            other => return Err(CliError::config(format!("optimizer: unknown `{other}`"))),
        };
        o.validate().map_err(|e| CliError::config(e.to_string()))?;
        Ok(o)
    }

    /// Every key with its resolved value, sorted; parsing this text yields
    /// an identical config.
    pub fn echo(&self) -> String {
        let mut pairs: BTreeMap<&str, String> = BTreeMap::new();
        let p = |x: &Path| x.display().to_string();
        pairs.insert("seed", self.seed.to_string());
        pairs.insert("out", p(&self.out));
        pairs.insert("threads", self.threads.to_string());
        match &self.data {
            DataSource::Generated { kind, codims, n_per_class, n_test_per_class, cover } => {
                pairs.insert("kind", kind.to_string());
                pairs.insert("codim", join(codims));
                pairs.insert("n_per_class", n_per_class.to_string());
                pairs.insert("n_test_per_class", n_test_per_class.to_string());
                pairs.insert("cover", cover.to_string());
            }
            DataSource::Files { train, test } => {
                pairs.insert("train", p(train));
                pairs.insert("test", p(test));
            }
        }
        pairs.insert("mode", self.mode.to_string());
        pairs.insert("epochs", self.epochs.to_string());
        pairs.insert("batch_size", self.batch_size.to_string());
        pairs.insert("hidden", self.hidden.to_string());
        pairs.insert("optimizer", self.optimizer.clone());
        pairs.insert("lr", self.lr.to_string());
        pairs.insert("momentum", self.momentum.to_string());
        pairs.insert("m", self.m.to_string());
        pairs.insert("retrainings", self.retrainings.to_string());
        pairs.insert("early_stop_loss", self.early_stop_loss.to_string());
        pairs.insert("norm", self.norm.to_string());
        pairs.insert("train_attack", or_auto(&self.train_attack));
        pairs.insert("train_epsilon", self.train_epsilon.to_string());
        pairs.insert("train_step", or_auto(&self.train_step));
        pairs.insert("train_iters", self.train_iters.to_string());
        pairs.insert("attacks", join(&self.attacks));
        pairs.insert("eval_iters", self.eval_iters.to_string());
        pairs.insert("eps_max", or_auto(&self.eps_max));
        pairs.insert("eps_points", self.eps_points.to_string());
        pairs.insert("eval_n", self.eval_n.to_string());
        let mut s = String::new();
        for (k, v) in pairs {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_blank_lines_and_duplicates() {
        let m = parse_pairs("# header\n\nseed = 3 # trailing\nmode=ball\n").unwrap();
        assert_eq!(m["seed"], "3");
        assert_eq!(m["mode"], "ball");
        assert!(parse_pairs("seed = 1\nseed = 2").is_err());
        assert!(parse_pairs("bogus = 1").is_err());
        assert!(parse_pairs("seed").is_err());
    }

    #[test]
    fn overrides_take_both_spellings() {
        let args: Vec<String> = ["--seed", "4", "--eps-max=0.7"].iter().map(|s| s.to_string()).collect();
        let m = parse_overrides(&args).unwrap();
        assert_eq!(m["seed"], "4");
        assert_eq!(m["eps_max"], "0.7");
        assert!(parse_overrides(&["--nope".into(), "1".into()]).is_err());
        assert!(parse_overrides(&["--seed".into()]).is_err());
    }

    #[test]
    fn echo_round_trips() {
        let m = parse_pairs("kind = circles\ncodim = 1,10\nmode = voronoi\ntrain_step = 0.02\n").unwrap();
        let cfg = ExperimentConfig::from_map(&m).unwrap();
        let again = ExperimentConfig::from_map(&parse_pairs(&cfg.echo()).unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn bad_values_are_config_errors() {
        for text in ["seed = -1", "mode = fancy", "attacks = voronoi", "train = /nonexistent/file.csv", "optimizer = rmsprop"] {
            let err = parse_pairs(text).and_then(|m| ExperimentConfig::from_map(&m)).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}");
        }
    }
}
