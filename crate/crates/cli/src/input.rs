//! Reading experiment, generator, loss, uncertainty and quantizer specs.
//!
//! Every spec flag takes inline JSON, a path to a JSON file, or (where it
//! makes sense) a bare name such as `tv` or `hinge`.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::Value;

use fdivkit_core::divergences::make_generator;
use fdivkit_core::experiment::validate_experiment;
use fdivkit_core::losses::make_loss;
use fdivkit_core::uncertainty::make_uncertainty;
use fdivkit_core::{CostMatrix, DiscreteExperiment, Generator, LossFamily, Quantizer, RawExperiment, UncertaintyFn};

/// Input problems; all map to exit status 2.
#[derive(Debug)]
pub struct InputError(pub String);

impl<E: std::fmt::Display> From<E> for InputError {
    fn from(e: E) -> Self {
        InputError(e.to_string())
    }
}

pub type Input<T> = Result<T, InputError>;

fn bad<T>(msg: impl Into<String>) -> Input<T> {
    Err(InputError(msg.into()))
}

/// Parse `arg` as JSON, else as a file holding JSON, else as a bare string.
fn read_value(arg: &str) -> Input<Value> {
    let trimmed = arg.trim_start();
    if trimmed.starts_with('{') || trimmed.starts_with('[') {
        return serde_json::from_str(arg).map_err(|e| InputError(format!("invalid JSON: {e}")));
    }
    if Path::new(arg).is_file() {
        let text = fs::read_to_string(arg).map_err(|e| InputError(format!("{arg}: {e}")))?;
        return serde_json::from_str(&text).map_err(|e| InputError(format!("{arg}: invalid JSON: {e}")));
    }
    Ok(Value::String(arg.to_string()))
}

fn parse<T: DeserializeOwned>(v: Value, what: &str) -> Input<T> {
    serde_json::from_value(v).map_err(|e| InputError(format!("invalid {what}: {e}")))
}

pub fn experiment(arg: &str) -> Input<DiscreteExperiment> {
    let v = read_value(arg)?;
    if v.is_string() {
        return bad(format!("experiment file not found: {arg}"));
    }
    let raw: RawExperiment = parse(v, "experiment")?;
    Ok(validate_experiment(&raw)?)
}

pub fn quantizer(arg: &str) -> Input<Quantizer> {
    let v = read_value(arg)?;
    if v.is_string() {
        return bad(format!("quantizer file not found: {arg}"));
    }
    parse(v, "quantizer")
}

/// A list of quantizers, for an explicit ERM family.
pub fn quantizer_list(arg: &str) -> Input<Vec<Quantizer>> {
    let v = read_value(arg)?;
    if v.is_string() {
        return bad(format!("quantizer list file not found: {arg}"));
    }
    parse(v, "quantizer list")
}

pub fn cost(arg: &str) -> Input<CostMatrix> {
    let v = read_value(arg)?;
    if v.is_string() {
        return bad(format!("cost matrix file not found: {arg}"));
    }
    let rows: Vec<Vec<f64>> = parse(v, "cost matrix")?;
    Ok(CostMatrix::new(rows)?)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GeneratorSpec {
    name: String,
    k: Option<usize>,
}

/// Generator by name; `k` comes from the spec or from `default_k`.
pub fn generator(arg: &str, default_k: Option<usize>) -> Input<Generator> {
    let spec = match read_value(arg)? {
        Value::String(name) => GeneratorSpec { name, k: None },
        v => parse(v, "generator spec")?,
    };
    let k = spec.k.or(default_k).ok_or_else(|| InputError("generator spec needs k".into()))?;
    Ok(make_generator(&spec.name, k)?)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KindSpec {
    kind: String,
    k: Option<usize>,
    #[serde(rename = "C")]
    c: Option<Vec<Vec<f64>>>,
}

fn kind_spec(arg: &str) -> Input<KindSpec> {
    match read_value(arg)? {
        Value::String(kind) => Ok(KindSpec { kind, k: None, c: None }),
        v => parse(v, "spec"),
    }
}

fn resolve_k(spec: &KindSpec, default_k: Option<usize>) -> Input<(usize, Option<CostMatrix>)> {
    let c = spec.c.clone().map(CostMatrix::new).transpose()?;
    let k = spec.k.or(c.as_ref().map(|c| c.k())).or(default_k);
    match k {
        Some(k) => Ok((k, c)),
        None => bad(format!("`{}` needs k", spec.kind)),
    }
}

pub fn loss(arg: &str, default_k: Option<usize>) -> Input<LossFamily> {
    let spec = kind_spec(arg)?;
    let (k, c) = resolve_k(&spec, default_k)?;
    Ok(make_loss(&spec.kind, k, c)?)
}

/// A built-in uncertainty, or the Bayes risk of a built-in loss.
pub fn uncertainty(arg: &str, default_k: Option<usize>) -> Input<UncertaintyFn> {
    let spec = kind_spec(arg)?;
    let (k, c) = resolve_k(&spec, default_k)?;
    match make_uncertainty(&spec.kind, k, c.clone()) {
        Ok(u) => Ok(u),
        Err(fdivkit_core::Error::UnknownKind(_)) => Ok(UncertaintyFn::from_loss(make_loss(&spec.kind, k, c)?)),
        Err(e) => Err(e.into()),
    }
}

/// Comma-separated sample sizes.
pub fn schedule(arg: &str) -> Input<Vec<usize>> {
    let out: Result<Vec<usize>, _> = arg.split(',').map(|s| s.trim().parse::<usize>()).collect();
    match out {
        Ok(v) if !v.is_empty() && v.iter().all(|&n| n > 0) => Ok(v),
        _ => bad(format!("schedule must be a comma-separated list of positive integers, got `{arg}`")),
    }
}
