//! Dataset CSV files (`label,x1,...,xd`) with a `key = value` metadata
//! sidecar next to them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use voradv_core::geometry::{ClassId, DatasetRole, LabeledDataset, ManifoldKind, ManifoldSpec};
use voradv_core::rng::substream;
use voradv_core::PointCloud;

use crate::error::{CliError, CliResult, IoContext};

pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

pub fn metadata(ds: &LabeledDataset) -> String {
    let mut s = String::new();
    match &ds.spec {
        Some(spec) => {
            let _ = writeln!(s, "kind = {}", spec.kind);
            let _ = writeln!(s, "k = {}", spec.k);
            let _ = writeln!(s, "d = {}", spec.d);
            // Generator parameter (axes appended to the x1-x2 plane), not d - k.
            let _ = writeln!(s, "codim = {}", spec.d - 2);
            let _ = writeln!(s, "codimension = {}", spec.codimension());
            let _ = writeln!(s, "reach = {}", spec.reach_decision_axis);
            let _ = writeln!(s, "vol_k = {}", spec.vol_k);
        }
        None => {
            let _ = writeln!(s, "kind = ingested");
            let _ = writeln!(s, "d = {}", ds.dim());
        }
    }
    let _ = writeln!(s, "role = {}", ds.role);
    let _ = writeln!(s, "n = {}", ds.len());
    let _ = writeln!(s, "seed = {}", ds.seed.map_or_else(|| "none".to_string(), |x| x.to_string()));
    s
}

pub fn write_dataset(ds: &LabeledDataset, path: &Path) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).at(dir)?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::format(path, e.to_string()))?;
    let mut header = vec!["label".to_string()];
    header.extend((1..=ds.dim()).map(|i| format!("x{i}")));
    let mut rec = Vec::with_capacity(ds.dim() + 1);
    let fail = |e: csv::Error| CliError::format(path, e.to_string());
    w.write_record(&header).map_err(fail)?;
    for (p, &l) in ds.points.rows().zip(&ds.labels) {
        rec.clear();
        rec.push(l.to_string());
        rec.extend(p.iter().map(f64::to_string));
        w.write_record(&rec).map_err(fail)?;
    }
    w.flush().at(path)?;
    let meta = meta_path(path);
    std::fs::write(&meta, metadata(ds)).at(meta)
}

fn parse_meta(path: &Path) -> CliResult<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).at(path)?;
    let mut m = BTreeMap::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let (k, v) = line.split_once('=').ok_or_else(|| CliError::format(path, format!("bad line `{line}`")))?;
        m.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(m)
}

pub fn read_dataset(path: &Path) -> CliResult<LabeledDataset> {
    let mpath = meta_path(path);
    let meta = parse_meta(&mpath)?;
    let get = |k: &str| meta.get(k).ok_or_else(|| CliError::format(&mpath, format!("missing `{k}`")));
    let num = |k: &str| -> CliResult<usize> {
        get(k)?.parse().map_err(|_| CliError::format(&mpath, format!("bad `{k}`")))
    };
    let d = num("d")?;
    let spec = match get("kind")?.as_str() {
        "ingested" => None,
        kind => {
            let kind: ManifoldKind = kind.parse()?;
            let codim = num("codim")?;
            let spec = match kind {
                ManifoldKind::Circles => ManifoldSpec::circles(codim),
                ManifoldKind::Planes => ManifoldSpec::planes(codim)?,
            };
            if spec.d != d || spec.k != num("k")? {
                return Err(CliError::format(&mpath, "dimensions disagree with the manifold kind"));
            }
            Some(spec)
        }
    };
    let role: DatasetRole = get("role")?.parse()?;
    let seed = match get("seed")?.as_str() {
        "none" => None,
        s => Some(s.parse().map_err(|_| CliError::format(&mpath, "bad `seed`"))?),
    };

    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::format(path, e.to_string()))?;
    let mut points = PointCloud::new(d);
    let mut labels = Vec::new();
    let mut row = vec![0.0; d];
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::format(path, e.to_string()))?;
        if rec.len() != d + 1 {
            return Err(CliError::format(path, format!("row {}: {} columns, expected {}", line + 1, rec.len(), d + 1)));
        }
        let bad = |what: &str| CliError::format(path, format!("row {}: bad {what}", line + 1));
        labels.push(rec[0].parse::<ClassId>().map_err(|_| bad("label"))?);
        for (x, field) in row.iter_mut().zip(rec.iter().skip(1)) {
            *x = field.parse().map_err(|_| bad("coordinate"))?;
        }
        points.push(&row)?;
    }
    if labels.len() != num("n")? {
        return Err(CliError::format(path, "row count disagrees with metadata"));
    }
    let mut ds = LabeledDataset::new(points, labels, spec, role)?;
    ds.seed = seed;
    Ok(ds)
}

/// `n` indices, as evenly split across classes as possible (counts differ by
/// at most one; lower class ids take the remainder), each class sampled
/// without replacement in a seeded order. `n = 0` or `n >= len` keeps all.
pub fn stratified_indices(labels: &[ClassId], n: usize, seed: u64, stream: &str) -> CliResult<Vec<usize>> {
    if n == 0 || n >= labels.len() {
        return Ok((0..labels.len()).collect());
    }
    let mut by_class: BTreeMap<ClassId, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let c = by_class.len();
    let (base, extra) = (n / c, n % c);
    let mut rng = substream(seed, stream);
    let mut out = Vec::with_capacity(n);
    for (j, idx) in by_class.values_mut().enumerate() {
        let want = base + usize::from(j < extra);
        if idx.len() < want {
            return Err(CliError::config(format!("a class has only {} samples, {want} requested", idx.len())));
        }
        idx.shuffle(&mut rng);
        out.extend_from_slice(&idx[..want]);
    }
    out.sort_unstable();
    Ok(out)
}
