//! Domain description documents.
//!
//! A document is a JSON object `{"dim": n, "shape": <shape>}` where a shape is
//! one of
//!
//! ```text
//! {"ball": {"center": [..], "r": r}}
//! {"box": {"lo": [..], "hi": [..]}}
//! {"point": [..]}
//! {"union": [<shape>, ..]}
//! {"intersect": [<shape>, ..]}
//! {"complement": <shape>}
//! {"translate": {"by": [..], "of": <shape>}}
//! {"scale": {"by": s, "of": <shape>}}
//! {"lattice": {"of": <shape>, "pitch": [..], "counts": [..], "origin": [..]}}
//! ```
//!
//! Lattices are expanded into a union of translates while parsing.

use serde_json::{json, Map, Value};
use thiserror::Error;

/// Maximum nesting depth of a parsed shape tree.
pub const MAX_DEPTH: usize = 32;
/// Maximum number of copies a single lattice may expand to.
pub const MAX_LATTICE_COPIES: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecError {
    #[error("syntax error at line {line}, column {column}: {msg}")]
    Syntax { line: usize, column: usize, msg: String },
    #[error("invalid spec at {path}: {msg}")]
    Invalid { path: String, msg: String },
    #[error("shape tree deeper than {max} at {path}")]
    TooDeep { path: String, max: usize },
    #[error("lattice at {path} expands to {copies} copies (limit {max})")]
    LatticeTooLarge { path: String, copies: usize, max: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Point { at: Vec<f64> },
    Union(Vec<Shape>),
    Intersect(Vec<Shape>),
    Complement(Box<Shape>),
    Translate { by: Vec<f64>, shape: Box<Shape> },
    Scale { by: f64, shape: Box<Shape> },
}

impl Shape {
    pub fn ball(center: &[f64], radius: f64) -> Shape {
        Shape::Ball { center: center.to_vec(), radius }
    }

    pub fn cube(lo: &[f64], hi: &[f64]) -> Shape {
        Shape::Box { lo: lo.to_vec(), hi: hi.to_vec() }
    }

    pub fn point(at: &[f64]) -> Shape {
        Shape::Point { at: at.to_vec() }
    }

    pub fn complement(self) -> Shape {
        Shape::Complement(Box::new(self))
    }

    pub fn translate(self, by: &[f64]) -> Shape {
        Shape::Translate { by: by.to_vec(), shape: Box::new(self) }
    }

    pub fn scale(self, by: f64) -> Shape {
        Shape::Scale { by, shape: Box::new(self) }
    }

    /// `self` minus `other`.
    pub fn minus(self, other: Shape) -> Shape {
        Shape::Intersect(vec![self, other.complement()])
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, Shape::Ball { .. } | Shape::Box { .. } | Shape::Point { .. })
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            Shape::Ball { .. } | Shape::Box { .. } | Shape::Point { .. } => 1,
            Shape::Union(v) | Shape::Intersect(v) => v.iter().map(Shape::leaf_count).sum(),
            Shape::Complement(s) | Shape::Translate { shape: s, .. } | Shape::Scale { shape: s, .. } => {
                s.leaf_count()
            }
        }
    }

    /// Number of non-leaf nodes.
    pub fn node_count(&self) -> usize {
        match self {
            Shape::Ball { .. } | Shape::Box { .. } | Shape::Point { .. } => 0,
            Shape::Union(v) | Shape::Intersect(v) => 1 + v.iter().map(Shape::node_count).sum::<usize>(),
            Shape::Complement(s) | Shape::Translate { shape: s, .. } | Shape::Scale { shape: s, .. } => {
                1 + s.node_count()
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Shape::Ball { .. } | Shape::Box { .. } | Shape::Point { .. } => 1,
            Shape::Union(v) | Shape::Intersect(v) => 1 + v.iter().map(Shape::depth).max().unwrap_or(0),
            Shape::Complement(s) | Shape::Translate { shape: s, .. } | Shape::Scale { shape: s, .. } => {
                1 + s.depth()
            }
        }
    }

    pub fn to_value(&self) -> Value {
        match self {
            Shape::Ball { center, radius } => json!({"ball": {"center": center, "r": radius}}),
            Shape::Box { lo, hi } => json!({"box": {"lo": lo, "hi": hi}}),
            Shape::Point { at } => json!({"point": at}),
            Shape::Union(v) => json!({"union": v.iter().map(Shape::to_value).collect::<Vec<_>>()}),
            Shape::Intersect(v) => {
                json!({"intersect": v.iter().map(Shape::to_value).collect::<Vec<_>>()})
            }
            Shape::Complement(s) => json!({"complement": s.to_value()}),
            Shape::Translate { by, shape } => json!({"translate": {"by": by, "of": shape.to_value()}}),
            Shape::Scale { by, shape } => json!({"scale": {"by": by, "of": shape.to_value()}}),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    pub dim: usize,
    pub shape: Shape,
}

impl DomainSpec {
    /// Build and validate a spec from an in-memory shape.
    pub fn new(dim: usize, shape: Shape) -> Result<DomainSpec, SpecError> {
        let spec = DomainSpec { dim, shape };
        spec.validate()?;
        Ok(spec)
    }

    pub fn parse(text: &str) -> Result<DomainSpec, SpecError> {
        let value: Value = serde_json::from_str(text).map_err(|e| SpecError::Syntax {
            line: e.line(),
            column: e.column(),
            msg: e.to_string(),
        })?;
        DomainSpec::from_value(&value)
    }

    pub fn from_value(value: &Value) -> Result<DomainSpec, SpecError> {
        let obj = value.as_object().ok_or_else(|| invalid("$", "expected an object"))?;
        for key in obj.keys() {
            if key != "dim" && key != "shape" {
                return Err(invalid("$", &format!("unknown key `{key}`")));
            }
        }
        let dim = obj
            .get("dim")
            .and_then(Value::as_u64)
            .ok_or_else(|| invalid("$.dim", "expected an integer"))? as usize;
        if !(1..=3).contains(&dim) {
            return Err(invalid("$.dim", "dimension must be 1, 2 or 3"));
        }
        let shape_v = obj.get("shape").ok_or_else(|| invalid("$", "missing `shape`"))?;
        let shape = Parser { dim }.shape(shape_v, "$.shape", 1)?;
        let spec = DomainSpec { dim, shape };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_value(&self) -> Value {
        json!({"dim": self.dim, "shape": self.shape.to_value()})
    }

    /// Canonical JSON text (sorted keys, shortest round-trip floats).
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(&self.to_value()).expect("spec serializes")
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        if !(1..=3).contains(&self.dim) {
            return Err(invalid("$.dim", "dimension must be 1, 2 or 3"));
        }
        validate_shape(&self.shape, self.dim, "$.shape", 1)
    }

    pub fn translated(&self, by: &[f64]) -> DomainSpec {
        DomainSpec { dim: self.dim, shape: self.shape.clone().translate(by) }
    }

    pub fn scaled(&self, by: f64) -> DomainSpec {
        DomainSpec { dim: self.dim, shape: self.shape.clone().scale(by) }
    }
}

fn invalid(path: &str, msg: &str) -> SpecError {
    SpecError::Invalid { path: path.to_string(), msg: msg.to_string() }
}

fn check_vec(v: &[f64], dim: usize, path: &str) -> Result<(), SpecError> {
    if v.len() != dim {
        return Err(invalid(path, &format!("expected {dim} coordinates, got {}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(invalid(path, "coordinates must be finite"));
    }
    Ok(())
}

fn validate_shape(s: &Shape, dim: usize, path: &str, depth: usize) -> Result<(), SpecError> {
    if depth > MAX_DEPTH {
        return Err(SpecError::TooDeep { path: path.to_string(), max: MAX_DEPTH });
    }
    match s {
        Shape::Ball { center, radius } => {
            check_vec(center, dim, &format!("{path}.ball.center"))?;
            if !(radius.is_finite() && *radius > 0.0) {
                return Err(invalid(&format!("{path}.ball.r"), "radius must be positive"));
            }
        }
        Shape::Box { lo, hi } => {
            check_vec(lo, dim, &format!("{path}.box.lo"))?;
            check_vec(hi, dim, &format!("{path}.box.hi"))?;
            if lo.iter().zip(hi).any(|(a, b)| a >= b) {
                return Err(invalid(&format!("{path}.box"), "need lo < hi on every axis"));
            }
        }
        Shape::Point { at } => check_vec(at, dim, &format!("{path}.point"))?,
        Shape::Union(v) | Shape::Intersect(v) => {
            let tag = if matches!(s, Shape::Union(_)) { "union" } else { "intersect" };
            if v.is_empty() {
                return Err(invalid(&format!("{path}.{tag}"), "needs at least one operand"));
            }
            for (i, c) in v.iter().enumerate() {
                validate_shape(c, dim, &format!("{path}.{tag}[{i}]"), depth + 1)?;
            }
        }
        Shape::Complement(c) => validate_shape(c, dim, &format!("{path}.complement"), depth + 1)?,
        Shape::Translate { by, shape } => {
            check_vec(by, dim, &format!("{path}.translate.by"))?;
            validate_shape(shape, dim, &format!("{path}.translate.of"), depth + 1)?;
        }
        Shape::Scale { by, shape } => {
            if !(by.is_finite() && *by > 0.0) {
                return Err(invalid(&format!("{path}.scale.by"), "scale factor must be positive"));
            }
            validate_shape(shape, dim, &format!("{path}.scale.of"), depth + 1)?;
        }
    }
    Ok(())
}

struct Parser {
    dim: usize,
}

impl Parser {
    fn shape(&self, v: &Value, path: &str, depth: usize) -> Result<Shape, SpecError> {
        if depth > MAX_DEPTH {
            return Err(SpecError::TooDeep { path: path.to_string(), max: MAX_DEPTH });
        }
        let obj = v.as_object().ok_or_else(|| invalid(path, "expected a shape object"))?;
        if obj.len() != 1 {
            return Err(invalid(path, "a shape object has exactly one key"));
        }
        let (tag, body) = obj.iter().next().unwrap();
        let here = format!("{path}.{tag}");
        match tag.as_str() {
            "ball" => {
                let b = fields(body, &here, &["center", "r"], &[])?;
                Ok(Shape::Ball {
                    center: self.vec(&b["center"], &format!("{here}.center"))?,
                    radius: num(&b["r"], &format!("{here}.r"))?,
                })
            }
            "box" => {
                let b = fields(body, &here, &["lo", "hi"], &[])?;
                Ok(Shape::Box {
                    lo: self.vec(&b["lo"], &format!("{here}.lo"))?,
                    hi: self.vec(&b["hi"], &format!("{here}.hi"))?,
                })
            }
            "point" => Ok(Shape::Point { at: self.vec(body, &here)? }),
            "union" | "intersect" => {
                let arr = body.as_array().ok_or_else(|| invalid(&here, "expected an array"))?;
                let kids = arr
                    .iter()
                    .enumerate()
                    .map(|(i, c)| self.shape(c, &format!("{here}[{i}]"), depth + 1))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(if tag == "union" { Shape::Union(kids) } else { Shape::Intersect(kids) })
            }
            "complement" => Ok(Shape::Complement(Box::new(self.shape(body, &here, depth + 1)?))),
            "translate" => {
                let b = fields(body, &here, &["by", "of"], &[])?;
                Ok(Shape::Translate {
                    by: self.vec(&b["by"], &format!("{here}.by"))?,
                    shape: Box::new(self.shape(&b["of"], &format!("{here}.of"), depth + 1)?),
                })
            }
            "scale" => {
                let b = fields(body, &here, &["by", "of"], &[])?;
                Ok(Shape::Scale {
                    by: num(&b["by"], &format!("{here}.by"))?,
                    shape: Box::new(self.shape(&b["of"], &format!("{here}.of"), depth + 1)?),
                })
            }
            "lattice" => self.lattice(body, &here, depth),
            other => Err(invalid(path, &format!("unknown shape `{other}`"))),
        }
    }

    // Expands to union[translate[shape]], so the copies sit two levels down.
    fn lattice(&self, body: &Value, here: &str, depth: usize) -> Result<Shape, SpecError> {
        let b = fields(body, here, &["of", "pitch", "counts"], &["origin"])?;
        let pitch = self.vec(&b["pitch"], &format!("{here}.pitch"))?;
        let counts_v = b["counts"]
            .as_array()
            .ok_or_else(|| invalid(&format!("{here}.counts"), "expected an array"))?;
        if counts_v.len() != self.dim {
            return Err(invalid(&format!("{here}.counts"), "one count per axis"));
        }
        let mut counts = Vec::with_capacity(self.dim);
        for (i, c) in counts_v.iter().enumerate() {
            let c = c
                .as_u64()
                .filter(|&c| c > 0)
                .ok_or_else(|| invalid(&format!("{here}.counts[{i}]"), "expected a positive integer"))?;
            counts.push(c as usize);
        }
        let copies = counts.iter().try_fold(1usize, |acc, &c| acc.checked_mul(c)).unwrap_or(usize::MAX);
        if copies > MAX_LATTICE_COPIES {
            return Err(SpecError::LatticeTooLarge {
                path: here.to_string(),
                copies,
                max: MAX_LATTICE_COPIES,
            });
        }
        let origin = match b.get("origin") {
            Some(o) => self.vec(o, &format!("{here}.origin"))?,
            None => vec![0.0; self.dim],
        };
        let base = self.shape(&b["of"], &format!("{here}.of"), depth + 2)?;
        let mut kids = Vec::with_capacity(copies);
        let mut idx = vec![0usize; self.dim];
        for _ in 0..copies {
            let by: Vec<f64> = (0..self.dim).map(|d| origin[d] + pitch[d] * idx[d] as f64).collect();
            kids.push(base.clone().translate(&by));
            for d in 0..self.dim {
                idx[d] += 1;
                if idx[d] < counts[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        Ok(Shape::Union(kids))
    }

    fn vec(&self, v: &Value, path: &str) -> Result<Vec<f64>, SpecError> {
        let arr = v.as_array().ok_or_else(|| invalid(path, "expected an array of numbers"))?;
        let out = arr
            .iter()
            .enumerate()
            .map(|(i, x)| num(x, &format!("{path}[{i}]")))
            .collect::<Result<Vec<_>, _>>()?;
        check_vec(&out, self.dim, path)?;
        Ok(out)
    }
}

fn num(v: &Value, path: &str) -> Result<f64, SpecError> {
    v.as_f64().ok_or_else(|| invalid(path, "expected a number"))
}

fn fields<'a>(
    v: &'a Value,
    path: &str,
    required: &[&str],
    optional: &[&str],
) -> Result<&'a Map<String, Value>, SpecError> {
    let obj = v.as_object().ok_or_else(|| invalid(path, "expected an object"))?;
    for r in required {
        if !obj.contains_key(*r) {
            return Err(invalid(path, &format!("missing `{r}`")));
        }
    }
    for k in obj.keys() {
        if !required.contains(&k.as_str()) && !optional.contains(&k.as_str()) {
            return Err(invalid(path, &format!("unknown key `{k}`")));
        }
    }
    Ok(obj)
}
