//! One-dimensional basis families and their assembly into m-tensor cores.
//!
//! A [`FeatureMapSet`] lists `(axis, basis)` pairs; each pair becomes one core.
//! An axis may appear several times, which is how the two trigonometric bases
//! per phase of a coupled-oscillator model are expressed.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mtensor::{MTensor, Rank1Row};
use crate::scalar::Scalar;

/// A user-supplied scalar function.
pub type BasisFn<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

#[derive(Clone)]
pub enum Basis1D<T> {
    /// `[1, x, …, x^d]`.
    Monomial(usize),
    /// `[1, sin x]`.
    Sin,
    /// `[1, cos x]`.
    Cos,
    /// Arbitrary function list. The first function is treated as the constant
    /// term under [`ScaleMode::Output`].
    Custom(Vec<BasisFn<T>>),
}

impl<T> fmt::Debug for Basis1D<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Basis1D::Monomial(d) => write!(f, "Monomial({d})"),
            Basis1D::Sin => f.write_str("Sin"),
            Basis1D::Cos => f.write_str("Cos"),
            Basis1D::Custom(fs) => write!(f, "Custom({} functions)", fs.len()),
        }
    }
}

/// Where the scale factor `s` enters the basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ScaleMode {
    /// `ψ(s·x)`.
    Input,
    /// `[ψ_1(x), s·ψ_2(x), …, s·ψ_p(x)]`: the constant stays, every other
    /// function is damped.
    #[default]
    Output,
}

impl FromStr for ScaleMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "input" => Ok(ScaleMode::Input),
            "output" => Ok(ScaleMode::Output),
            other => Err(Error::arg(format!(
                "unknown scale mode '{other}' (expected input or output)"
            ))),
        }
    }
}

impl fmt::Display for ScaleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScaleMode::Input => "input",
            ScaleMode::Output => "output",
        })
    }
}

impl<T: Scalar> Basis1D<T> {
    pub fn size(&self) -> usize {
        match self {
            Basis1D::Monomial(d) => d + 1,
            Basis1D::Sin | Basis1D::Cos => 2,
            Basis1D::Custom(fs) => fs.len(),
        }
    }

    /// Writes the basis evaluated at `x` into `out` (length [`Basis1D::size`]).
    pub fn eval_into(&self, x: T, scale: T, mode: ScaleMode, out: &mut [T]) {
        let arg = match mode {
            ScaleMode::Input => scale * x,
            ScaleMode::Output => x,
        };
        match self {
            Basis1D::Monomial(_) => {
                let mut v = T::one();
                for o in out.iter_mut() {
                    *o = v;
                    v *= arg;
                }
            }
            Basis1D::Sin => {
                out[0] = T::one();
                out[1] = arg.sin();
            }
            Basis1D::Cos => {
                out[0] = T::one();
                out[1] = arg.cos();
            }
            Basis1D::Custom(fs) => {
                for (o, f) in out.iter_mut().zip(fs) {
                    *o = f(arg);
                }
            }
        }
        if mode == ScaleMode::Output {
            for o in out.iter_mut().skip(1) {
                *o *= scale;
            }
        }
    }

    pub fn eval(&self, x: T, scale: T, mode: ScaleMode) -> Array1<T> {
        let mut out = vec![T::zero(); self.size()];
        self.eval_into(x, scale, mode, &mut out);
        Array1::from(out)
    }

    /// Text form accepted by [`Basis1D::parse`]; `None` for custom bases.
    pub fn spec(&self) -> Option<String> {
        match self {
            Basis1D::Monomial(d) => Some(format!("monomial:{d}")),
            Basis1D::Sin => Some("sin".into()),
            Basis1D::Cos => Some("cos".into()),
            Basis1D::Custom(_) => None,
        }
    }

    /// Parses `monomial:<d>`, `sin` or `cos`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(d) = s.strip_prefix("monomial:") {
            let d: usize = d
                .parse()
                .map_err(|_| Error::arg(format!("bad monomial degree in '{s}'")))?;
            return Ok(Basis1D::Monomial(d));
        }
        match s {
            "sin" => Ok(Basis1D::Sin),
            "cos" => Ok(Basis1D::Cos),
            _ => Err(Error::arg(format!(
                "unknown basis '{s}' (expected monomial:<d>, sin, cos or trig)"
            ))),
        }
    }
}

/// Scale factor used when none is given: `1` below ten dimensions, `1e-7` from ten on.
pub fn default_scale(n: usize) -> f64 {
    if n < 10 {
        1.0
    } else {
        1e-7
    }
}

#[derive(Debug, Clone)]
pub struct FeatureMapSet<T> {
    entries: Vec<(usize, Basis1D<T>)>,
    scale: T,
    mode: ScaleMode,
}

/// Serializable description of a [`FeatureMapSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    pub entries: Vec<EntrySpec>,
    pub scale: f64,
    pub mode: ScaleMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntrySpec {
    pub axis: usize,
    pub basis: String,
}

impl<T: Scalar> FeatureMapSet<T> {
    pub fn new(entries: Vec<(usize, Basis1D<T>)>, scale: T, mode: ScaleMode) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::arg("feature map set has no entries"));
        }
        if !(scale > T::zero()) || !scale.is_finite() {
            return Err(Error::arg(format!("scale must be positive, got {scale}")));
        }
        if let Some((a, _)) = entries.iter().find(|(_, b)| b.size() == 0) {
            return Err(Error::arg(format!("basis on axis {a} is empty")));
        }
        Ok(Self {
            entries,
            scale,
            mode,
        })
    }

    /// The same basis on each of `n` axes.
    pub fn uniform(n: usize, basis: Basis1D<T>, scale: T, mode: ScaleMode) -> Result<Self> {
        Self::new((0..n).map(|a| (a, basis.clone())).collect(), scale, mode)
    }

    /// `[1, sin θ_i]` and `[1, cos θ_i]` for every axis, giving `2n` cores.
    pub fn trig(n: usize, scale: T, mode: ScaleMode) -> Result<Self> {
        let entries = (0..n)
            .flat_map(|a| [(a, Basis1D::Sin), (a, Basis1D::Cos)])
            .collect();
        Self::new(entries, scale, mode)
    }

    /// Builds a set from text: either one basis applied to every axis
    /// (`monomial:4`, `sin`, `cos`, `trig`) or a comma-separated list with one
    /// item per axis.
    pub fn parse(text: &str, n: usize, scale: T, mode: ScaleMode) -> Result<Self> {
        let items: Vec<&str> = text.split(',').map(str::trim).collect();
        let per_axis: Vec<&str> = match items.len() {
            1 => vec![items[0]; n],
            k if k == n => items,
            k => return Err(Error::arg(format!("basis list has {k} items for {n} axes"))),
        };
        let mut entries = Vec::new();
        for (a, item) in per_axis.into_iter().enumerate() {
            if item == "trig" {
                entries.push((a, Basis1D::Sin));
                entries.push((a, Basis1D::Cos));
            } else {
                entries.push((a, Basis1D::parse(item)?));
            }
        }
        Self::new(entries, scale, mode)
    }

    pub fn entries(&self) -> &[(usize, Basis1D<T>)] {
        &self.entries
    }

    pub fn scale(&self) -> T {
        self.scale
    }

    pub fn mode(&self) -> ScaleMode {
        self.mode
    }

    pub fn cdims(&self) -> Vec<usize> {
        self.entries.iter().map(|(_, b)| b.size()).collect()
    }

    /// Minimum input length.
    pub fn input_dim(&self) -> usize {
        self.entries.iter().map(|(a, _)| a + 1).max().unwrap_or(0)
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len < self.input_dim() {
            return Err(Error::index(format!(
                "sample has {len} coordinates, maps need {}",
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// One core per entry; row `k` of core `j` is the basis of entry `j` at `samples[k, axis_j]`.
    pub fn build_cores(&self, samples: ArrayView2<'_, T>) -> Result<MTensor<T>> {
        self.check_len(samples.ncols())?;
        if samples.nrows() == 0 {
            return Err(Error::arg("no samples"));
        }
        let m = samples.nrows();
        let cores = self
            .entries
            .iter()
            .map(|(axis, basis)| {
                let p = basis.size();
                let mut core = Array2::zeros((m, p));
                for (k, mut row) in core.rows_mut().into_iter().enumerate() {
                    let out = row.as_slice_mut().expect("fresh array rows are contiguous");
                    basis.eval_into(samples[[k, *axis]], self.scale, self.mode, out);
                }
                core
            })
            .collect();
        MTensor::from_cores(cores)
    }

    /// The rank-1 feature tensor of one sample.
    pub fn feature_row(&self, x: ArrayView1<'_, T>) -> Result<Rank1Row<T>> {
        self.check_len(x.len())?;
        let factors = self
            .entries
            .iter()
            .map(|(axis, basis)| basis.eval(x[*axis], self.scale, self.mode))
            .collect();
        Rank1Row::new(factors)
    }

    pub fn to_spec(&self) -> Result<MapSpec> {
        let entries = self
            .entries
            .iter()
            .map(|(axis, b)| {
                b.spec()
                    .map(|basis| EntrySpec { axis: *axis, basis })
                    .ok_or_else(|| Error::Unserializable("custom basis functions".into()))
            })
            .collect::<Result<_>>()?;
        Ok(MapSpec {
            entries,
            scale: self.scale.as_f64(),
            mode: self.mode,
        })
    }

    pub fn from_spec(spec: &MapSpec) -> Result<Self> {
        let entries = spec
            .entries
            .iter()
            .map(|e| Ok((e.axis, Basis1D::parse(&e.basis)?)))
            .collect::<Result<_>>()?;
        Self::new(entries, T::of(spec.scale), spec.mode)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn toy_maps() -> FeatureMapSet<f64> {
        FeatureMapSet::uniform(2, Basis1D::Monomial(2), 1.0, ScaleMode::Input).unwrap()
    }

    #[test]
    fn basis_values() {
        let m2 = Basis1D::<f64>::Monomial(2);
        assert_eq!(m2.eval(-1.0, 1.0, ScaleMode::Input), array![1., -1., 1.]);
        assert_eq!(
            Basis1D::<f64>::Sin.eval(0.0, 1.0, ScaleMode::Input),
            array![1., 0.]
        );
        assert_eq!(
            Basis1D::<f64>::Cos.eval(0.0, 1.0, ScaleMode::Input),
            array![1., 1.]
        );
        assert_eq!(
            Basis1D::<f64>::Monomial(1).eval(2.0, 0.5, ScaleMode::Input),
            array![1., 1.]
        );
        assert_eq!(
            Basis1D::<f64>::Monomial(2).eval(3.0, 0.5, ScaleMode::Output),
            array![1., 1.5, 4.5]
        );
    }

    #[test]
    fn custom_basis() {
        let b: Basis1D<f64> = Basis1D::Custom(vec![Arc::new(|_| 1.0), Arc::new(|x: f64| x.exp())]);
        assert_eq!(b.size(), 2);
        assert_eq!(b.eval(0.0, 1.0, ScaleMode::Input), array![1., 1.]);
        let maps = FeatureMapSet::new(vec![(0, b)], 1.0, ScaleMode::Input).unwrap();
        assert!(matches!(maps.to_spec(), Err(Error::Unserializable(_))));
    }

    #[test]
    fn toy_cores() {
        let x = array![[-1., -1.], [0., 1.], [1., 0.]];
        let t = toy_maps().build_cores(x.view()).unwrap();
        assert_eq!(
            t.cores()[0],
            array![[1., -1., 1.], [1., 0., 0.], [1., 1., 1.]]
        );
        assert_eq!(
            t.cores()[1],
            array![[1., -1., 1.], [1., 1., 1.], [1., 0., 0.]]
        );
        let r = toy_maps().feature_row(array![0., 1.].view()).unwrap();
        assert_eq!(r.factors, vec![array![1., 0., 0.], array![1., 1., 1.]]);
    }

    #[test]
    fn single_sample_matches_feature_row() {
        let x = array![[0.3, -0.7]];
        let t = toy_maps().build_cores(x.view()).unwrap();
        assert_eq!(t.row(0).unwrap(), toy_maps().feature_row(x.row(0)).unwrap());
    }

    #[test]
    fn trig_layout() {
        let maps = FeatureMapSet::<f64>::trig(2, 1.0, ScaleMode::Output).unwrap();
        assert_eq!(maps.cdims(), vec![2, 2, 2, 2]);
        let r = maps.feature_row(array![0., 0.].view()).unwrap();
        assert_eq!(
            r.factors,
            vec![
                array![1., 0.],
                array![1., 1.],
                array![1., 0.],
                array![1., 1.]
            ]
        );
        let samples = Array2::zeros((5, 10));
        let t = FeatureMapSet::<f64>::trig(10, 1.0, ScaleMode::Output)
            .unwrap()
            .build_cores(samples.view())
            .unwrap();
        assert_eq!(t.order(), 20);
    }

    #[test]
    fn short_input_rejected() {
        let x = array![[1.0]];
        assert!(matches!(
            toy_maps().build_cores(x.view()),
            Err(Error::Index(_))
        ));
        assert!(matches!(
            toy_maps().feature_row(array![1.0].view()),
            Err(Error::Index(_))
        ));
    }

    #[test]
    fn large_inputs_stay_finite_when_scaled() {
        let maps = FeatureMapSet::uniform(3, Basis1D::Monomial(4), 1e-7, ScaleMode::Input).unwrap();
        let r = maps.feature_row(array![1e6, -1e6, 5e5].view()).unwrap();
        assert!(r.factors.iter().flatten().all(|v: &f64| v.is_finite()));
    }

    #[test]
    fn default_scale_boundary() {
        assert_eq!(default_scale(3), 1.0);
        assert_eq!(default_scale(9), 1.0);
        assert_eq!(default_scale(10), 1e-7);
        assert_eq!(default_scale(100), 1e-7);
    }

    #[test]
    fn parse_grammar() {
        let m = FeatureMapSet::<f64>::parse("monomial:4", 3, 1.0, ScaleMode::Input).unwrap();
        assert_eq!(m.cdims(), vec![5, 5, 5]);
        let t = FeatureMapSet::<f64>::parse("trig", 2, 1.0, ScaleMode::Input).unwrap();
        assert_eq!(t.cdims(), vec![2, 2, 2, 2]);
        let mix = FeatureMapSet::<f64>::parse("monomial:1, cos", 2, 1.0, ScaleMode::Input).unwrap();
        assert_eq!(mix.cdims(), vec![2, 2]);
        assert!(FeatureMapSet::<f64>::parse("spline:3", 2, 1.0, ScaleMode::Input).is_err());
        assert!(FeatureMapSet::<f64>::parse("sin,cos,sin", 2, 1.0, ScaleMode::Input).is_err());
        assert!(FeatureMapSet::<f64>::parse("sin", 2, 0.0, ScaleMode::Input).is_err());
    }

    #[test]
    fn spec_round_trip() {
        let m = FeatureMapSet::<f64>::parse("monomial:2,trig", 2, 0.5, ScaleMode::Output).unwrap();
        let spec = m.to_spec().unwrap();
        let back = FeatureMapSet::<f64>::from_spec(&spec).unwrap();
        assert_eq!(back.to_spec().unwrap(), spec);
    }
}
