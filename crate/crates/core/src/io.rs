//! JSON wire formats for functionals, transformations, perturbations and
//! matrix dumps, shared with the command line front end.
//!
//! Complex scalars travel as `[re, im]` pairs; plain numbers are accepted
//! on input and read as real values.

use crate::error::{Error, Result};
use crate::functional::{
    BilinearGenerator, Curve, FunctionalComponent, FunctionalSpec, TimeSeries, Weight,
};
use crate::mindex::{GradedIndexer, MultiIndex};
use crate::poly::Poly;
use crate::transforms::TransformSpec;
use crate::uvarov::{MultipoleSet, Puncture};
use crate::{C64, CMat};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Complex scalar serialized as `[re, im]`; bare numbers accepted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CNum(pub C64);

impl Serialize for CNum {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        [self.0.re, self.0.im].serialize(s)
    }
}

impl<'de> Deserialize<'de> for CNum {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Real(f64),
            Pair([f64; 2]),
        }
        Ok(match Raw::deserialize(d)? {
            Raw::Real(re) => CNum(C64::new(re, 0.0)),
            Raw::Pair([re, im]) => CNum(C64::new(re, im)),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TermJson {
    pub alpha: Vec<u32>,
    pub c: CNum,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolyJson {
    pub terms: Vec<TermJson>,
}

impl PolyJson {
    pub fn from_poly(p: &Poly) -> Self {
        PolyJson {
            terms: p
                .terms()
                .map(|(a, &c)| TermJson {
                    alpha: a.0.clone(),
                    c: CNum(c),
                })
                .collect(),
        }
    }

    pub fn to_poly(&self, dim: usize) -> Result<Poly> {
        let mut terms = Vec::with_capacity(self.terms.len());
        for t in &self.terms {
            if t.alpha.len() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "term exponent of length {} in dimension {}",
                    t.alpha.len(),
                    dim
                )));
            }
            terms.push((MultiIndex(t.alpha.clone()), t.c.0));
        }
        Ok(Poly::from_terms(dim, terms))
    }
}

fn weight_name(w: Weight) -> &'static str {
    match w {
        Weight::Lebesgue => "lebesgue",
        Weight::Chebyshev => "chebyshev",
        Weight::Gaussian => "gaussian",
    }
}

fn parse_weight(name: &str) -> Result<Weight> {
    match name {
        "lebesgue" => Ok(Weight::Lebesgue),
        "chebyshev" => Ok(Weight::Chebyshev),
        "gaussian" => Ok(Weight::Gaussian),
        other => Err(Error::Unsupported(format!("weight '{other}'"))),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ComponentJson {
    Density {
        #[serde(rename = "box")]
        box_: Vec<[f64; 2]>,
        weight: String,
        nodes: usize,
        #[serde(skip_serializing_if = "Option::is_none")]
        poly_factor: Option<PolyJson>,
    },
    Discrete {
        atoms: Vec<(Vec<f64>, CNum)>,
    },
    Multipole {
        point: Vec<f64>,
        deriv: Vec<u32>,
        coef: CNum,
    },
    Curve {
        curve: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        params: Option<serde_json::Value>,
        interval: [f64; 2],
        weight: String,
        nodes: usize,
        #[serde(skip_serializing_if = "Option::is_none")]
        scale: Option<CNum>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FunctionalJson {
    pub components: Vec<ComponentJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub divisor: Option<DivisorJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DivisorJson {
    pub poly: PolyJson,
}

fn curve_from_json(name: &str, params: &Option<serde_json::Value>, dim_hint: usize) -> Result<Curve> {
    let get_vec = |key: &str| -> Option<Vec<f64>> {
        params
            .as_ref()
            .and_then(|p| p.get(key))
            .and_then(|v| serde_json::from_value(v.clone()).ok())
    };
    match name {
        "segment" => {
            let from = get_vec("from").ok_or_else(|| {
                Error::Unsupported("segment curve needs params.from".into())
            })?;
            let to = get_vec("to")
                .ok_or_else(|| Error::Unsupported("segment curve needs params.to".into()))?;
            Ok(Curve::Segment { from, to })
        }
        "circle-arc" | "circle_arc" => {
            let center = get_vec("center").unwrap_or_else(|| vec![0.0; dim_hint.max(2)]);
            let radius = params
                .as_ref()
                .and_then(|p| p.get("radius"))
                .and_then(|v| v.as_f64())
                .unwrap_or(1.0);
            Ok(Curve::CircleArc { center, radius })
        }
        other => Err(Error::Unsupported(format!("curve '{other}'"))),
    }
}

fn curve_to_json(c: &Curve) -> (String, serde_json::Value) {
    match c {
        Curve::Segment { from, to } => (
            "segment".into(),
            serde_json::json!({ "from": from, "to": to }),
        ),
        Curve::CircleArc { center, radius } => (
            "circle-arc".into(),
            serde_json::json!({ "center": center, "radius": radius }),
        ),
    }
}

impl FunctionalJson {
    pub fn from_spec(spec: &FunctionalSpec) -> Self {
        let components = spec
            .components
            .iter()
            .map(|c| match c {
                FunctionalComponent::Density {
                    box_,
                    weight,
                    nodes,
                    poly_factor,
                } => ComponentJson::Density {
                    box_: box_.iter().map(|&(a, b)| [a, b]).collect(),
                    weight: weight_name(*weight).into(),
                    nodes: *nodes,
                    poly_factor: poly_factor.as_ref().map(PolyJson::from_poly),
                },
                FunctionalComponent::Discrete { atoms, .. } => ComponentJson::Discrete {
                    atoms: atoms.iter().map(|(p, w)| (p.clone(), CNum(*w))).collect(),
                },
                FunctionalComponent::Multipole {
                    point, deriv, coef, ..
                } => ComponentJson::Multipole {
                    point: point.clone(),
                    deriv: deriv.0.clone(),
                    coef: CNum(*coef),
                },
                FunctionalComponent::CurveMeasure {
                    curve,
                    interval,
                    weight,
                    nodes,
                    scale,
                    ..
                } => {
                    let (name, params) = curve_to_json(curve);
                    ComponentJson::Curve {
                        curve: name,
                        params: Some(params),
                        interval: [interval.0, interval.1],
                        weight: weight_name(*weight).into(),
                        nodes: *nodes,
                        scale: Some(CNum(*scale)),
                    }
                }
            })
            .collect();
        FunctionalJson {
            components,
            divisor: spec.divisor.as_ref().map(|p| DivisorJson {
                poly: PolyJson::from_poly(p),
            }),
        }
    }

    pub fn to_spec(&self, dim: usize) -> Result<FunctionalSpec> {
        let mut components = Vec::with_capacity(self.components.len());
        for c in &self.components {
            components.push(match c {
                ComponentJson::Density {
                    box_,
                    weight,
                    nodes,
                    poly_factor,
                } => FunctionalComponent::Density {
                    box_: box_.iter().map(|&[a, b]| (a, b)).collect(),
                    weight: parse_weight(weight)?,
                    nodes: *nodes,
                    poly_factor: poly_factor
                        .as_ref()
                        .map(|p| p.to_poly(dim))
                        .transpose()?,
                },
                ComponentJson::Discrete { atoms } => FunctionalComponent::Discrete {
                    atoms: atoms.iter().map(|(p, w)| (p.clone(), w.0)).collect(),
                    poly_factor: None,
                },
                ComponentJson::Multipole { point, deriv, coef } => {
                    FunctionalComponent::Multipole {
                        point: point.clone(),
                        deriv: MultiIndex(deriv.clone()),
                        coef: coef.0,
                        poly_factor: None,
                    }
                }
                ComponentJson::Curve {
                    curve,
                    params,
                    interval,
                    weight,
                    nodes,
                    scale,
                } => FunctionalComponent::CurveMeasure {
                    curve: curve_from_json(curve, params, dim)?,
                    interval: (interval[0], interval[1]),
                    weight: parse_weight(weight)?,
                    nodes: *nodes,
                    scale: scale.map(|c| c.0).unwrap_or(C64::new(1.0, 0.0)),
                    poly_factor: None,
                },
            });
        }
        let mut spec = FunctionalSpec::new(components);
        if let Some(d) = &self.divisor {
            spec.divisor = Some(d.poly.to_poly(dim)?);
        }
        Ok(spec)
    }
}

/// Generator wire format: a functional-backed diagonal pairing or an
/// explicit kernel of point pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GeneratorJson {
    Diagonal {
        dim: usize,
        functional: FunctionalJson,
    },
    Kernel {
        pairs: Vec<(Vec<f64>, Vec<f64>, CNum)>,
    },
    /// Tensor grids on two boxes coupled by `exp(x . y)`.
    KernelBoxes {
        box_x: Vec<[f64; 2]>,
        box_y: Vec<[f64; 2]>,
        nodes: usize,
    },
}

impl GeneratorJson {
    pub fn to_generator(&self) -> Result<(BilinearGenerator, usize)> {
        match self {
            GeneratorJson::Diagonal { dim, functional } => Ok((
                BilinearGenerator::diagonal(functional.to_spec(*dim)?),
                *dim,
            )),
            GeneratorJson::Kernel { pairs } => {
                let dim = pairs
                    .first()
                    .map(|(x, _, _)| x.len())
                    .ok_or_else(|| Error::Unsupported("empty kernel pair list".into()))?;
                Ok((
                    BilinearGenerator::Kernel(
                        pairs
                            .iter()
                            .map(|(x, y, w)| (x.clone(), y.clone(), w.0))
                            .collect(),
                    ),
                    dim,
                ))
            }
            GeneratorJson::KernelBoxes {
                box_x,
                box_y,
                nodes,
            } => {
                let bx: Vec<(f64, f64)> = box_x.iter().map(|&[a, b]| (a, b)).collect();
                let by: Vec<(f64, f64)> = box_y.iter().map(|&[a, b]| (a, b)).collect();
                Ok((
                    BilinearGenerator::kernel_exp_coupling(&bx, &by, *nodes),
                    bx.len(),
                ))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransformJson {
    pub q1: PolyJson,
    pub q2: PolyJson,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub masses: Option<FunctionalJson>,
    #[serde(default)]
    pub nodes: Vec<Vec<f64>>,
}

impl TransformJson {
    pub fn from_spec(spec: &TransformSpec) -> Self {
        TransformJson {
            q1: PolyJson::from_poly(&spec.q1),
            q2: PolyJson::from_poly(&spec.q2),
            masses: if spec.masses.components.is_empty() {
                None
            } else {
                Some(FunctionalJson::from_spec(&spec.masses))
            },
            nodes: spec.nodes.clone(),
        }
    }

    pub fn to_spec(&self, dim: usize) -> Result<TransformSpec> {
        let one = Poly::one(dim);
        let q1 = if self.q1.terms.is_empty() {
            one.clone()
        } else {
            self.q1.to_poly(dim)?
        };
        let q2 = if self.q2.terms.is_empty() {
            one
        } else {
            self.q2.to_poly(dim)?
        };
        let masses = match &self.masses {
            Some(f) => f.to_spec(dim)?,
            None => FunctionalSpec::empty(),
        };
        Ok(TransformSpec {
            q1,
            q2,
            masses,
            nodes: self.nodes.clone(),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PunctureJson {
    pub point: Vec<f64>,
    pub beta: Vec<u32>,
    pub xi: Vec<TermJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultipoleSetJson {
    pub punctures: Vec<PunctureJson>,
}

impl MultipoleSetJson {
    pub fn from_set(mp: &MultipoleSet) -> Self {
        MultipoleSetJson {
            punctures: mp
                .punctures
                .iter()
                .map(|p| PunctureJson {
                    point: p.point.clone(),
                    beta: p.beta.0.clone(),
                    xi: p
                        .xi
                        .iter()
                        .map(|(a, c)| TermJson {
                            alpha: a.0.clone(),
                            c: CNum(*c),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn to_set(&self) -> MultipoleSet {
        MultipoleSet {
            punctures: self
                .punctures
                .iter()
                .map(|p| Puncture {
                    point: p.point.clone(),
                    beta: MultiIndex(p.beta.clone()),
                    xi: p
                        .xi
                        .iter()
                        .map(|t| (MultiIndex(t.alpha.clone()), t.c.0))
                        .collect(),
                })
                .collect(),
        }
    }
}

/// `{"terms": [...]}` time-series wire format shared with polynomials.
pub fn time_series_from_json(json: &PolyJson, dim: usize) -> Result<TimeSeries> {
    let mut t = TimeSeries::zero();
    for term in &json.terms {
        if term.alpha.len() != dim {
            return Err(Error::DimensionMismatch(format!(
                "time index of length {} in dimension {}",
                term.alpha.len(),
                dim
            )));
        }
        t.set(MultiIndex(term.alpha.clone()), term.c.0);
    }
    Ok(t)
}

/// Polynomial block export:
/// `{"level": k, "entries": [{"alpha": [...], "coeffs": [...]}]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolyBlockJson {
    pub level: usize,
    pub entries: Vec<PolyEntryJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolyEntryJson {
    pub alpha: Vec<u32>,
    pub coeffs: Vec<TermJson>,
}

pub fn poly_block_json(idx: &GradedIndexer, level: usize, polys: &[Poly]) -> PolyBlockJson {
    PolyBlockJson {
        level,
        entries: polys
            .iter()
            .zip(idx.level_indices(level))
            .map(|(p, a)| PolyEntryJson {
                alpha: a.0.clone(),
                coeffs: p
                    .terms()
                    .map(|(b, &c)| TermJson {
                        alpha: b.0.clone(),
                        c: CNum(c),
                    })
                    .collect(),
            })
            .collect(),
    }
}

/// Matrix dump as CSV rows `block_row,block_col,i,j,re,im` with `i`, `j`
/// the positions inside the blocks.
pub fn matrix_to_csv(m: &CMat, idx: &GradedIndexer) -> String {
    let mut out = String::from("block_row,block_col,i,j,re,im\n");
    for k in 0..=idx.n_max() {
        let rk = idx.level_range(k);
        for l in 0..=idx.n_max() {
            let rl = idx.level_range(l);
            for (i, gi) in rk.clone().enumerate() {
                for (j, gj) in rl.clone().enumerate() {
                    let v = m[(gi, gj)];
                    out.push_str(&format!("{k},{l},{i},{j},{:.17e},{:.17e}\n", v.re, v.im));
                }
            }
        }
    }
    out
}

/// JSON mirror of the block structure: nested arrays of `[re, im]` pairs
/// indexed by block row and block column.
pub fn matrix_to_json(m: &CMat, idx: &GradedIndexer) -> serde_json::Value {
    let blocks: Vec<Vec<serde_json::Value>> = (0..=idx.n_max())
        .map(|k| {
            (0..=idx.n_max())
                .map(|l| {
                    let rk = idx.level_range(k);
                    let rl = idx.level_range(l);
                    let rows: Vec<Vec<[f64; 2]>> = rk
                        .clone()
                        .map(|gi| rl.clone().map(|gj| [m[(gi, gj)].re, m[(gi, gj)].im]).collect())
                        .collect();
                    serde_json::json!(rows)
                })
                .collect()
        })
        .collect();
    serde_json::json!({ "blocks": blocks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn functional_roundtrip() {
        let text = r#"{
            "components": [
                {"type": "density", "box": [[-1.0, 1.0]], "weight": "lebesgue", "nodes": 10},
                {"type": "discrete", "atoms": [[[0.5], [0.7, 0.0]], [[0.1], 1.2]]},
                {"type": "multipole", "point": [1.0], "deriv": [1], "coef": [0.3, 0.0]}
            ],
            "divisor": {"poly": {"terms": [{"alpha": [1], "c": [1.0, 0.0]}, {"alpha": [0], "c": [-3.0, 0.0]}]}}
        }"#;
        let parsed: FunctionalJson = serde_json::from_str(text).unwrap();
        let spec = parsed.to_spec(1).unwrap();
        assert_eq!(spec.components.len(), 3);
        assert!(spec.divisor.is_some());
        let back = FunctionalJson::from_spec(&spec);
        let spec2 = back.to_spec(1).unwrap();
        assert_eq!(spec, spec2);
    }

    #[test]
    fn transform_roundtrip() {
        let text = r#"{
            "q1": {"terms": [{"alpha": [1, 0], "c": [1, 0]}, {"alpha": [0, 0], "c": [-2, 0]}]},
            "q2": {"terms": [{"alpha": [0, 1], "c": [1, 0]}, {"alpha": [0, 0], "c": [-3, 0]}]},
            "nodes": [[2.0, 0.5]]
        }"#;
        let parsed: TransformJson = serde_json::from_str(text).unwrap();
        let spec = parsed.to_spec(2).unwrap();
        assert_eq!(spec.m1(), 1);
        assert_eq!(spec.m2(), 1);
        assert_eq!(spec.nodes.len(), 1);
        let back = TransformJson::from_spec(&spec);
        assert_eq!(back.nodes, spec.nodes);
    }

    #[test]
    fn matrix_csv_has_header_and_entries() {
        let idx = GradedIndexer::new(1, 1);
        let m = CMat::from_fn(2, 2, |i, j| C64::new((i + j) as f64, 0.0));
        let csv = matrix_to_csv(&m, &idx);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "block_row,block_col,i,j,re,im");
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn multipole_set_roundtrip() {
        let mp = MultipoleSet::dipoles(vec![(vec![0.2, 0.3], vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)])]);
        let json = MultipoleSetJson::from_set(&mp);
        let text = serde_json::to_string(&json).unwrap();
        let back: MultipoleSetJson = serde_json::from_str(&text).unwrap();
        let mp2 = back.to_set();
        assert_eq!(mp2.punctures.len(), 1);
        assert_eq!(mp2.punctures[0].beta, MultiIndex(vec![0, 1]));
    }
}
