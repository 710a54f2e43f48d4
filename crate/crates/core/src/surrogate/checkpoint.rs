use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::{Dims, LagSpec, Normalizer};
use crate::diff::Tensor;

use super::{Architecture, ModelKind, SurrogateError, SurrogateModel};

/// A weight array with its shape, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

/// On-disk form of a [`SurrogateModel`]. Floats are written in shortest round-trip form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub lags: LagSpec,
    pub dims: Dims,
    pub architecture: Architecture,
    pub normalizer: Normalizer,
    pub weights: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn from_model(m: &SurrogateModel) -> Self {
        Self {
            kind: m.kind,
            lags: m.lags,
            dims: m.dims,
            architecture: m.arch,
            normalizer: m.normalizer.clone(),
            weights: m
                .param_names()
                .into_iter()
                .zip(&m.params)
                .map(|(name, t)| NamedTensor {
                    name,
                    shape: t.shape(),
                    data: t.data().to_vec(),
                })
                .collect(),
        }
    }

    pub fn into_model(self) -> Result<SurrogateModel, SurrogateError> {
        let bad = |m: String| SurrogateError::Checkpoint(m);
        let n = &self.normalizer;
        if n.x.len() != self.dims.n_x || n.u.len() != self.dims.n_u || n.d.len() != self.dims.n_d {
            return Err(bad("normalizer channel counts do not match dims".into()));
        }
        let shell = SurrogateModel {
            kind: self.kind,
            lags: self.lags,
            dims: self.dims,
            normalizer: self.normalizer,
            arch: self.architecture,
            params: Vec::new(),
        };
        let names = shell.param_names();
        if names.len() != self.weights.len() {
            return Err(bad(format!(
                "{} checkpoint needs {} weight arrays, found {}",
                shell.kind,
                names.len(),
                self.weights.len()
            )));
        }
        let mut params = Vec::with_capacity(names.len());
        for (want, w) in names.iter().zip(self.weights) {
            if *want != w.name {
                return Err(bad(format!("expected weight {want:?}, found {:?}", w.name)));
            }
            let t = Tensor::new(w.shape[0], w.shape[1], w.data)
                .map_err(|e| bad(format!("weight {want}: {e}")))?;
            params.push(t);
        }
        shell.with_params(params).map_err(|e| bad(e.to_string()))
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &SurrogateModel) -> Result<(), SurrogateError> {
    let path = path.as_ref();
    let s = serde_json::to_string(&Checkpoint::from_model(model))
        .map_err(|e| SurrogateError::Checkpoint(e.to_string()))?;
    std::fs::write(path, s).map_err(|e| SurrogateError::Checkpoint(format!("{}: {e}", path.display())))
}

/// Loads a checkpoint; with `expected` set, a different model kind is an error.
pub fn load_checkpoint(path: impl AsRef<Path>, expected: Option<ModelKind>) -> Result<SurrogateModel, SurrogateError> {
    let path = path.as_ref();
    let s = std::fs::read_to_string(path)
        .map_err(|e| SurrogateError::Checkpoint(format!("{}: {e}", path.display())))?;
    let ck: Checkpoint = serde_json::from_str(&s)
        .map_err(|e| SurrogateError::Checkpoint(format!("{}: {e}", path.display())))?;
    if let Some(k) = expected {
        if k != ck.kind {
            return Err(SurrogateError::Checkpoint(format!(
                "kind mismatch: file holds a {} model, expected {k}",
                ck.kind
            )));
        }
    }
    ck.into_model()
}

#[cfg(test)]
mod tests {
    use super::super::tests::tiny;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_predicts_identically() {
        let dir = tempfile::tempdir().unwrap();
        let lags = LagSpec::new(1, 2, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for kind in ModelKind::ALL {
            let m = tiny(kind, lags, 9);
            let p = dir.path().join(format!("{kind}.json"));
            save_checkpoint(&p, &m).unwrap();
            let back = load_checkpoint(&p, Some(kind)).unwrap();
            assert_eq!(back, m);
            for _ in 0..10 {
                let x: Vec<Vec<f64>> = (0..2).map(|_| vec![rng.random_range(-3.0..3.0), rng.random()]).collect();
                let u: Vec<Vec<f64>> = (0..3).map(|_| vec![rng.random()]).collect();
                let d: Vec<Vec<f64>> = (0..2).map(|_| vec![rng.random_range(-9.0..9.0)]).collect();
                let a = m.predict_one(&x, &u, &d).unwrap();
                let b = back.predict_one(&x, &u, &d).unwrap();
                for (p, q) in a.iter().zip(&b) {
                    assert!((p - q).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn truncated_file_fails() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        save_checkpoint(&p, &tiny(ModelKind::Mlp, LagSpec::new(1, 1, 1), 0)).unwrap();
        let s = std::fs::read_to_string(&p).unwrap();
        std::fs::write(&p, &s[..s.len() / 2]).unwrap();
        assert!(matches!(load_checkpoint(&p, None), Err(SurrogateError::Checkpoint(_))));
    }

    #[test]
    fn kind_mismatch_fails() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lin.json");
        save_checkpoint(&p, &tiny(ModelKind::Linear, LagSpec::new(1, 1, 1), 0)).unwrap();
        let e = load_checkpoint(&p, Some(ModelKind::Mlp)).unwrap_err();
        assert!(e.to_string().contains("kind mismatch"), "{e}");
    }

    #[test]
    fn wrong_shape_fails() {
        let m = tiny(ModelKind::Mlp, LagSpec::new(1, 1, 1), 0);
        let mut ck = Checkpoint::from_model(&m);
        ck.weights[0].shape = [1, ck.weights[0].data.len()];
        assert!(matches!(ck.into_model(), Err(SurrogateError::Checkpoint(_))));
    }
}
