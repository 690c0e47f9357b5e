use std::collections::HashMap;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayViewD, ArrayViewMutD};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use safetensors::tensor::{Dtype, SafeTensors, TensorView};

use crate::encoder::Scalar;
use crate::error::{Error, Result};

/// Linear map from a readout embedding to class logits.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationHead<T> {
    /// `d_model x num_classes`
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Scalar> ClassificationHead<T> {
    pub fn zeros(d_model: usize, num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::Config(format!(
                "a head needs at least 2 classes, got {num_classes}"
            )));
        }
        Ok(Self {
            weight: Array2::zeros((d_model, num_classes)),
            bias: Array1::zeros(num_classes),
        })
    }

    /// Normal weights with std `d_model^-1/2`, zero bias.
    pub fn random(d_model: usize, num_classes: usize, rng: &mut impl Rng) -> Result<Self> {
        let mut head = Self::zeros(d_model, num_classes)?;
        let dist = Normal::new(0.0, (d_model as f64).powf(-0.5)).expect("finite std");
        head.weight.mapv_inplace(|_| T::from_f64(dist.sample(rng)).unwrap());
        Ok(head)
    }

    pub fn num_classes(&self) -> usize {
        self.bias.len()
    }

    pub fn logits(&self, h: ArrayView1<'_, T>) -> Array1<T> {
        h.dot(&self.weight) + &self.bias
    }

    pub fn all_finite(&self) -> bool {
        self.weight.iter().chain(&self.bias).all(|v| v.is_finite())
    }
}

/// Relation head plus the optional source head of the joint task.
#[derive(Debug, Clone, PartialEq)]
pub struct Heads<T> {
    pub relation: ClassificationHead<T>,
    pub source: Option<ClassificationHead<T>>,
}

impl<T: Scalar> Heads<T> {
    pub fn random(
        d_model: usize,
        relation_classes: usize,
        source_classes: Option<usize>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(Self {
            relation: ClassificationHead::random(d_model, relation_classes, rng)?,
            source: source_classes
                .map(|c| ClassificationHead::random(d_model, c, rng))
                .transpose()?,
        })
    }

    pub fn zeros_like(&self) -> Self {
        let z = |h: &ClassificationHead<T>| ClassificationHead {
            weight: Array2::zeros(h.weight.raw_dim()),
            bias: Array1::zeros(h.bias.len()),
        };
        Self {
            relation: z(&self.relation),
            source: self.source.as_ref().map(z),
        }
    }

    pub fn tensors(&self) -> Vec<(String, ArrayViewD<'_, T>)> {
        let mut out = Vec::new();
        for (prefix, h) in [
            ("relation_head", Some(&self.relation)),
            ("source_head", self.source.as_ref()),
        ] {
            if let Some(h) = h {
                out.push((format!("{prefix}.weight"), h.weight.view().into_dyn()));
                out.push((format!("{prefix}.bias"), h.bias.view().into_dyn()));
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, T>> {
        let mut out = vec![
            self.relation.weight.view_mut().into_dyn(),
            self.relation.bias.view_mut().into_dyn(),
        ];
        if let Some(h) = &mut self.source {
            out.push(h.weight.view_mut().into_dyn());
            out.push(h.bias.view_mut().into_dyn());
        }
        out
    }

    pub fn add_scaled(&mut self, other: &Self, scale: T) {
        for (mut a, (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.scaled_add(scale, &b);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.relation.all_finite() && self.source.as_ref().is_none_or(|h| h.all_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Heads<U> {
        let c = |h: &ClassificationHead<T>| ClassificationHead {
            weight: h.weight.mapv(|v| U::from_f64(v.to_f64().unwrap()).unwrap()),
            bias: h.bias.mapv(|v| U::from_f64(v.to_f64().unwrap()).unwrap()),
        };
        Heads {
            relation: c(&self.relation),
            source: self.source.as_ref().map(c),
        }
    }
}

fn container_err(e: safetensors::SafeTensorError) -> Error {
    Error::Container(e.to_string())
}

/// Heads as safetensors bytes. Weights are stored `classes x d_model`.
pub fn export_heads(heads: &Heads<f32>) -> Result<Vec<u8>> {
    let owned: Vec<(String, Vec<usize>, Vec<u8>)> = heads
        .tensors()
        .into_iter()
        .map(|(name, t)| {
            let (shape, values): (Vec<usize>, Vec<f32>) = match t.ndim() {
                2 => (vec![t.shape()[1], t.shape()[0]], t.t().iter().copied().collect()),
                _ => (t.shape().to_vec(), t.iter().copied().collect()),
            };
            (name, shape, values.iter().flat_map(|v| v.to_le_bytes()).collect())
        })
        .collect();
    let views = owned
        .iter()
        .map(|(n, s, b)| {
            TensorView::new(Dtype::F32, s.clone(), b)
                .map(|v| (n.clone(), v))
                .map_err(container_err)
        })
        .collect::<Result<Vec<_>>>()?;
    safetensors::serialize(views, &None::<HashMap<String, String>>).map_err(container_err)
}

pub fn import_heads_bytes(bytes: &[u8]) -> Result<Heads<f32>> {
    let st = SafeTensors::deserialize(bytes).map_err(container_err)?;
    let read = |name: &str| -> Result<Option<(Vec<usize>, Vec<f32>)>> {
        let Ok(t) = st.tensor(name) else { return Ok(None) };
        if t.dtype() != Dtype::F32 {
            return Err(Error::Container(format!("{name}: expected F32, found {:?}", t.dtype())));
        }
        let v = t
            .data()
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Some((t.shape().to_vec(), v)))
    };
    let head = |prefix: &str| -> Result<Option<ClassificationHead<f32>>> {
        let wname = format!("{prefix}.weight");
        let bname = format!("{prefix}.bias");
        let (Some((ws, wv)), Some((bs, bv))) = (read(&wname)?, read(&bname)?) else {
            return Ok(None);
        };
        if ws.len() != 2 || bs != [ws[0]] {
            return Err(Error::Shape {
                name: bname,
                expected: vec![ws.first().copied().unwrap_or(0)],
                found: bs,
            });
        }
        let w = Array2::from_shape_vec((ws[0], ws[1]), wv).expect("length matches shape");
        Ok(Some(ClassificationHead {
            weight: w.reversed_axes().as_standard_layout().to_owned(),
            bias: Array1::from(bv),
        }))
    };
    Ok(Heads {
        relation: head("relation_head")?.ok_or_else(|| Error::MissingTensor("relation_head.weight".into()))?,
        source: head("source_head")?,
    })
}

pub fn save_heads(path: &Path, heads: &Heads<f32>) -> Result<()> {
    std::fs::write(path, export_heads(heads)?)?;
    Ok(())
}

pub fn load_heads(path: &Path) -> Result<Heads<f32>> {
    import_heads_bytes(&std::fs::read(path)?)
}
