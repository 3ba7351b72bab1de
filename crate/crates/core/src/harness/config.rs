use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{parse_libsvm, parse_mnist_idx, LabelRule, LibsvmOptions, SparseDataset};
use crate::error::{Error, Result};
use crate::optim::OutputRule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    #[default]
    Libsvm,
    Idx,
}

impl std::str::FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "libsvm" => Ok(DataFormat::Libsvm),
            "idx" | "mnist" => Ok(DataFormat::Idx),
            other => Err(Error::Config(format!("unknown data format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    #[default]
    Mbsga,
    Vrsga,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mbsga" => Ok(Algorithm::Mbsga),
            "vrsga" => Ok(Algorithm::Vrsga),
            other => Err(Error::Config(format!("unknown algorithm {other:?}"))),
        }
    }
}

/// Where the MBSGA step-size cap `σ` comes from.
///
/// Serialized as the string `"estimate"` or a number.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SigmaSource {
    #[default]
    Estimate,
    Value(f64),
}

impl std::str::FromStr for SigmaSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "estimate" {
            return Ok(SigmaSource::Estimate);
        }
        s.parse::<f64>().map(SigmaSource::Value).map_err(|_| {
            Error::Config(format!("sigma must be \"estimate\" or a number, got {s:?}"))
        })
    }
}

impl Serialize for SigmaSource {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            SigmaSource::Estimate => s.serialize_str("estimate"),
            SigmaSource::Value(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for SigmaSource {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(SigmaSource::Value(v)),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// One experiment: data, method, penalty, budget and output.
///
/// Every field has a default, so a JSON manifest may list only what it
/// changes. Unset `alpha`/`theta` take the method's default exponents and an
/// unset `kappa` becomes `1/d` once the data is loaded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// LIBSVM file, or for IDX the image file (the label file is found by
    /// name, or given as `images,labels`).
    pub data: Option<PathBuf>,
    pub format: DataFormat,
    pub dim: Option<usize>,
    /// One-vs-rest target; without it LIBSVM labels map by sign.
    pub positive_class: Option<f64>,
    pub algo: Algorithm,
    pub alpha: Option<f64>,
    pub theta: Option<f64>,
    pub kappa: Option<f64>,
    pub nu: f64,
    /// Budget in effective passes over the data.
    pub passes: f64,
    pub seed: u64,
    pub output_rule: OutputRule,
    pub sigma: SigmaSource,
    /// Seed for the `σ` trial run; derived from `seed` when unset.
    pub sigma_seed: Option<u64>,
    pub out: PathBuf,
    /// Record cadence in iterations; 0 picks about 200 records per run.
    pub record_every: usize,
    /// Evaluate `‖∇E‖` at each record.
    pub grad_norm: bool,
    pub repeat: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data: None,
            format: DataFormat::Libsvm,
            dim: None,
            positive_class: None,
            algo: Algorithm::Mbsga,
            alpha: None,
            theta: None,
            kappa: None,
            nu: 1.0,
            passes: 15.0,
            seed: 0,
            output_rule: OutputRule::LastIterate,
            sigma: SigmaSource::Estimate,
            sigma_seed: None,
            out: PathBuf::from("trace.csv"),
            record_every: 0,
            grad_norm: true,
            repeat: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(match self.algo {
            Algorithm::Mbsga => 0.25,
            Algorithm::Vrsga => 1.0 / 3.0,
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta.unwrap_or(match self.algo {
            Algorithm::Mbsga => 0.25,
            Algorithm::Vrsga => 1.0 / 3.0,
        })
    }

    pub fn kappa_for(&self, dim: usize) -> f64 {
        self.kappa.unwrap_or(1.0 / dim as f64)
    }

    pub fn sigma_seed(&self) -> u64 {
        // offset well clear of the consecutive seeds used by `repeat`
        self.sigma_seed.unwrap_or(self.seed.wrapping_add(1 << 32))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "{name} must be positive and finite, got {v}"
                )))
            }
        };
        positive("alpha", self.alpha())?;
        positive("theta", self.theta())?;
        positive("nu", self.nu)?;
        positive("passes", self.passes)?;
        if let Some(k) = self.kappa {
            if !(k >= 0.0 && k.is_finite()) {
                return Err(Error::Config(format!("kappa must be >= 0, got {k}")));
            }
        }
        if let SigmaSource::Value(s) = self.sigma {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("sigma must be >= 0, got {s}")));
            }
        }
        if self.dim == Some(0) {
            return Err(Error::Config("dim must be positive".into()));
        }
        if self.repeat == 0 {
            return Err(Error::Config("repeat must be >= 1".into()));
        }
        if self.data.is_none() {
            return Err(Error::Config("no data path given".into()));
        }
        Ok(())
    }

    /// Trace path for the run with `seed`: `trace.csv` becomes
    /// `trace.seed7.csv` when more than one run is requested.
    pub fn trace_path(&self, seed: u64) -> PathBuf {
        if self.repeat <= 1 {
            return self.out.clone();
        }
        let stem = self
            .out
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("trace");
        let name = match self.out.extension().and_then(|e| e.to_str()) {
            Some(ext) => format!("{stem}.seed{seed}.{ext}"),
            None => format!("{stem}.seed{seed}"),
        };
        self.out.with_file_name(name)
    }

    pub fn load_dataset(&self) -> Result<SparseDataset> {
        let path = self
            .data
            .as_ref()
            .ok_or_else(|| Error::Config("no data path given".into()))?;
        let ds = match self.format {
            DataFormat::Libsvm => {
                let labels = match self.positive_class {
                    Some(c) => LabelRule::OneVsRest(c),
                    None => LabelRule::Sign,
                };
                let file = File::open(path)?;
                parse_libsvm(
                    BufReader::new(file),
                    LibsvmOptions {
                        dim: self.dim,
                        labels,
                    },
                )?
            }
            DataFormat::Idx => {
                let (images, labels) = idx_paths(path)?;
                let class = self.positive_class.unwrap_or(0.0);
                if !(0.0..=255.0).contains(&class) || class.fract() != 0.0 {
                    return Err(Error::Config(format!(
                        "positive class must be a digit, got {class}"
                    )));
                }
                let ds = parse_mnist_idx(
                    BufReader::new(File::open(images)?),
                    BufReader::new(File::open(labels)?),
                    class as u8,
                )?;
                if let Some(d) = self.dim {
                    if d != ds.dim() {
                        return Err(Error::DimensionMismatch {
                            expected: d,
                            got: ds.dim(),
                        });
                    }
                }
                ds
            }
        };
        Ok(ds)
    }
}

/// Splits `images,labels`, or derives the label file from the usual MNIST
/// naming (`*-images-idx3-ubyte` next to `*-labels-idx1-ubyte`).
fn idx_paths(data: &Path) -> Result<(PathBuf, PathBuf)> {
    let text = data.to_string_lossy();
    if let Some((a, b)) = text.split_once(',') {
        return Ok((PathBuf::from(a), PathBuf::from(b)));
    }
    let name = data
        .file_name()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Config(format!("bad IDX path {}", data.display())))?;
    let label_name = name.replace("images", "labels").replace("idx3", "idx1");
    if label_name == name {
        return Err(Error::Config(format!(
            "cannot infer the label file for {}; pass `images,labels`",
            data.display()
        )));
    }
    Ok((data.to_path_buf(), data.with_file_name(label_name)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_defaults_and_sigma_forms() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"data": "a9a", "algo": "vrsga", "sigma": 2.5}"#).unwrap();
        assert_eq!(cfg.algo, Algorithm::Vrsga);
        assert_eq!(cfg.sigma, SigmaSource::Value(2.5));
        assert_eq!(cfg.alpha(), 1.0 / 3.0);
        assert_eq!(cfg.output_rule, OutputRule::LastIterate);
        assert_eq!(cfg.kappa_for(123), 1.0 / 123.0);

        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"sigma": "estimate", "output_rule": "random_r"}"#).unwrap();
        assert_eq!(cfg.sigma, SigmaSource::Estimate);
        assert_eq!(cfg.output_rule, OutputRule::RandomR);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"sigma": "lots"}"#).is_err());
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn validation() {
        let ok = ExperimentConfig {
            data: Some("x".into()),
            ..Default::default()
        };
        ok.validate().unwrap();
        for bad in [
            ExperimentConfig {
                nu: 0.0,
                ..ok.clone()
            },
            ExperimentConfig {
                passes: -1.0,
                ..ok.clone()
            },
            ExperimentConfig {
                kappa: Some(-0.1),
                ..ok.clone()
            },
            ExperimentConfig {
                sigma: SigmaSource::Value(f64::NAN),
                ..ok.clone()
            },
            ExperimentConfig {
                repeat: 0,
                ..ok.clone()
            },
            ExperimentConfig {
                data: None,
                ..ok.clone()
            },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn repeat_paths() {
        let mut cfg = ExperimentConfig {
            out: "runs/trace.csv".into(),
            ..Default::default()
        };
        assert_eq!(cfg.trace_path(3), PathBuf::from("runs/trace.csv"));
        cfg.repeat = 2;
        assert_eq!(cfg.trace_path(3), PathBuf::from("runs/trace.seed3.csv"));
    }

    #[test]
    fn idx_label_inference() {
        let (i, l) = idx_paths(Path::new("/d/train-images-idx3-ubyte")).unwrap();
        assert_eq!(i, PathBuf::from("/d/train-images-idx3-ubyte"));
        assert_eq!(l, PathBuf::from("/d/train-labels-idx1-ubyte"));
        let (_, l) = idx_paths(Path::new("a.img,b.lbl")).unwrap();
        assert_eq!(l, PathBuf::from("b.lbl"));
        assert!(idx_paths(Path::new("/d/foo.bin")).is_err());
    }
}
