use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Deserialize;

use ttn::{ModelParams, NetworkShape};

/// Flag defaults read from `--config`. Keys are the long flag names with
/// underscores.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub params: Option<String>,
    pub depth: Option<usize>,
    pub width: Option<usize>,
    pub n_train: Option<usize>,
    pub gamma1: Option<f64>,
    pub switch_epoch: Option<usize>,
    pub lr: Option<f64>,
    pub max_iter: Option<usize>,
    pub frobenius: Option<bool>,
    pub sampling: Option<String>,
    pub snapshots: Option<String>,
    pub histogram_every: Option<usize>,
    pub shapes: Option<String>,
    pub depths: Option<String>,
    pub widths: Option<String>,
    pub replicates: Option<usize>,
    pub n_train_list: Option<String>,
    pub base: Option<String>,
    pub optimal: Option<String>,
    pub n_f: Option<String>,
    pub inner_tol: Option<f64>,
    pub max_inner_iters: Option<usize>,
    pub relaxation: Option<f64>,
    pub points: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

pub fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| {
            x.parse()
                .map_err(|_| format!("cannot parse {x:?} in list {s:?}"))
        })
        .collect()
}

pub fn parse_params(s: &str) -> Result<ModelParams<f64>, String> {
    let v: Vec<f64> = parse_list(s)?;
    if v.len() != 3 {
        return Err(format!("--params expects S,k0,qdot, got {s:?}"));
    }
    ModelParams::new(v[0], v[1], v[2]).map_err(|e| e.to_string())
}

/// `DxW`, e.g. `3x2`.
pub fn parse_shape(s: &str) -> Result<NetworkShape, String> {
    let lower = s.trim().to_ascii_lowercase();
    let lower = lower.trim_start_matches('d');
    let (d, w) = lower
        .split_once('x')
        .ok_or_else(|| format!("shape {s:?} is not of the form DxW"))?;
    let d: usize = d.parse().map_err(|_| format!("bad depth in {s:?}"))?;
    let w: usize = w
        .trim_start_matches('w')
        .parse()
        .map_err(|_| format!("bad width in {s:?}"))?;
    NetworkShape::new(d, w).map_err(|e| e.to_string())
}

pub fn parse_shapes(s: &str) -> Result<Vec<NetworkShape>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(parse_shape)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes() {
        assert_eq!(
            parse_shape("3x2").unwrap(),
            NetworkShape::new(3, 2).unwrap()
        );
        assert_eq!(
            parse_shape("D8xW12").unwrap(),
            NetworkShape::new(8, 12).unwrap()
        );
        assert!(parse_shape("0x2").is_err());
        assert!(parse_shape("3-2").is_err());
        assert_eq!(parse_shapes("1x2, 2x6").unwrap().len(), 2);
    }

    #[test]
    fn params() {
        let p = parse_params("0.2,0.3,-0.5").unwrap();
        assert_eq!((p.stefan, p.k0, p.qdot), (0.2, 0.3, -0.5));
        assert!(parse_params("0.2,0.3").is_err());
        assert!(parse_params("0.2,1.5,-1").is_err());
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        assert!(serde_json::from_str::<FileConfig>(r#"{"sed": 3}"#).is_err());
        let c: FileConfig = serde_json::from_str(r#"{"seed": 3, "gamma1": 0}"#).unwrap();
        assert_eq!(c.seed, Some(3));
    }
}
