//! Parameter registry and initialization.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Tape, TensorId};

use super::config::TcvdConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Named parameters with deterministic (sorted) iteration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    map: BTreeMap<String, Param>,
}

impl ParamSet {
    pub fn insert(&mut self, name: &str, shape: Vec<usize>, data: Vec<f64>) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.map.insert(name.to_string(), Param { shape, data });
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.map.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.map.get_mut(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Mutable iteration in sorted-name order.
    pub fn iter_mut_sorted(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.map.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn total_values(&self) -> usize {
        self.map.values().map(|p| p.data.len()).sum()
    }

    /// Register every parameter on a tape, in sorted-name order.
    pub fn to_tape(&self, tape: &mut Tape, requires_grad: bool) -> Result<BTreeMap<String, TensorId>> {
        let mut ids = BTreeMap::new();
        for (name, param) in &self.map {
            let id = tape.leaf(param.data.clone(), &param.shape, requires_grad)?;
            ids.insert(name.clone(), id);
        }
        Ok(ids)
    }
}

#[derive(Debug, Clone, Copy)]
pub(super) enum Init {
    /// He-uniform with the given fan-in.
    He { fan_in: usize },
    /// Xavier-uniform.
    Xavier { fan_in: usize, fan_out: usize },
    Zero,
    One,
}

#[derive(Debug, Clone)]
pub(super) struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

/// The full parameter inventory implied by a configuration, in creation
/// order (used both by initialization and by checkpoint validation).
pub(super) fn parameter_specs(config: &TcvdConfig) -> Vec<ParamSpec> {
    let mut specs = Vec::new();
    let conv = |name: String, kh: usize, kw: usize, ci: usize, co: usize| ParamSpec {
        name,
        shape: vec![kh, kw, ci, co],
        init: Init::He { fan_in: kh * kw * ci },
    };
    let bias = |name: String, n: usize| ParamSpec { name, shape: vec![n], init: Init::Zero };
    let dense = |name: String, fi: usize, fo: usize| ParamSpec {
        name,
        shape: vec![fi, fo],
        init: Init::Xavier { fan_in: fi, fan_out: fo },
    };

    let filters = &config.encoder_filters;
    let mut in_ch = 3;
    for (i, &ch) in filters.iter().enumerate() {
        let s = i + 1;
        specs.push(conv(format!("enc{s}.conv_a.w"), 3, 3, in_ch, ch));
        specs.push(bias(format!("enc{s}.conv_a.b"), ch));
        specs.push(conv(format!("enc{s}.conv_b.w"), 3, 3, ch, ch));
        specs.push(bias(format!("enc{s}.conv_b.b"), ch));
        in_ch = ch;
    }

    for s in 1..=config.tpformer_stages {
        let d = filters[s - 1];
        let p = |suffix: &str| format!("tp{s}.{suffix}");
        specs.push(ParamSpec { name: p("ln1.gamma"), shape: vec![d], init: Init::One });
        specs.push(ParamSpec { name: p("ln1.beta"), shape: vec![d], init: Init::Zero });
        for proj in ["wq", "wk", "wv", "wo"] {
            specs.push(dense(p(&format!("attn.{proj}")), d, d));
        }
        for b in ["bq", "bk", "bv", "bo"] {
            specs.push(bias(p(&format!("attn.{b}")), d));
        }
        specs.push(ParamSpec { name: p("ln2.gamma"), shape: vec![d], init: Init::One });
        specs.push(ParamSpec { name: p("ln2.beta"), shape: vec![d], init: Init::Zero });
        specs.push(dense(p("mlp.w1"), d, 2 * d));
        specs.push(bias(p("mlp.b1"), 2 * d));
        specs.push(dense(p("mlp.w2"), 2 * d, d));
        specs.push(bias(p("mlp.b2"), d));
        specs.push(conv(p("fuse.w"), 1, 1, 2 * d, d));
        specs.push(bias(p("fuse.b"), d));
    }

    // Decoder: one upsample per encoder stage; the first three concat the
    // matching skip. Transposed-conv kernels are [kh,kw,Cout,Cin], so their
    // fan-in comes from the last dim.
    for s in (1..filters.len()).rev() {
        let (ci, co) = (filters[s], filters[s - 1]);
        specs.push(ParamSpec {
            name: format!("dec{s}.up.w"),
            shape: vec![3, 3, co, ci],
            init: Init::He { fan_in: 3 * 3 * ci },
        });
        specs.push(bias(format!("dec{s}.up.b"), co));
        specs.push(conv(format!("dec{s}.conv_a.w"), 3, 3, 2 * co, co));
        specs.push(bias(format!("dec{s}.conv_a.b"), co));
        specs.push(conv(format!("dec{s}.conv_b.w"), 3, 3, co, co));
        specs.push(bias(format!("dec{s}.conv_b.b"), co));
    }
    let f0 = filters[0];
    specs.push(ParamSpec {
        name: "dec0.up.w".to_string(),
        shape: vec![3, 3, f0, f0],
        init: Init::He { fan_in: 3 * 3 * f0 },
    });
    specs.push(bias("dec0.up.b".to_string(), f0));
    specs.push(conv("dec0.conv_a.w".to_string(), 3, 3, f0, f0));
    specs.push(bias("dec0.conv_a.b".to_string(), f0));
    specs.push(conv("dec0.conv_b.w".to_string(), 3, 3, f0, f0));
    specs.push(bias("dec0.conv_b.b".to_string(), f0));
    specs.push(conv("out.w".to_string(), 3, 3, f0, 3));
    specs.push(bias("out.b".to_string(), 3));
    specs
}

/// The defogger: configuration plus parameters.
#[derive(Debug, Clone)]
pub struct TcvdModel {
    config: TcvdConfig,
    pub params: ParamSet,
}

impl TcvdModel {
    /// Deterministic initialization: He-uniform convolutions, Xavier
    /// attention/MLP projections, unit layer-norm gains, zero biases.
    pub fn init(config: TcvdConfig, seed: u64) -> Result<TcvdModel> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::default();
        for spec in parameter_specs(&config) {
            let n: usize = spec.shape.iter().product();
            let data = match spec.init {
                Init::He { fan_in } => {
                    let limit = (6.0 / fan_in as f64).sqrt();
                    (0..n).map(|_| rng.gen_range(-limit..limit)).collect()
                }
                Init::Xavier { fan_in, fan_out } => {
                    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    (0..n).map(|_| rng.gen_range(-limit..limit)).collect()
                }
                Init::Zero => vec![0.0; n],
                Init::One => vec![1.0; n],
            };
            params.insert(&spec.name, spec.shape, data);
        }
        Ok(TcvdModel { config, params })
    }

    /// Build a model from existing parameters, validating the registry
    /// against what the configuration requires.
    pub fn from_parts(config: TcvdConfig, params: ParamSet) -> Result<TcvdModel> {
        config.validate()?;
        let specs = parameter_specs(&config);
        if specs.len() != params.len() {
            return Err(Error::config(format!(
                "parameter registry mismatch: config needs {} tensors, got {}",
                specs.len(),
                params.len()
            )));
        }
        for spec in &specs {
            match params.get(&spec.name) {
                None => {
                    return Err(Error::config(format!("missing parameter {:?}", spec.name)));
                }
                Some(p) if p.shape != spec.shape => {
                    return Err(Error::config(format!(
                        "parameter {:?} has shape {:?}, config requires {:?}",
                        spec.name, p.shape, spec.shape
                    )));
                }
                Some(_) => {}
            }
        }
        Ok(TcvdModel { config, params })
    }

    pub fn config(&self) -> &TcvdConfig {
        &self.config
    }
}
