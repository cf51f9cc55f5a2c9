//! Scenario profiling: posterior risk of the adverse class along one
//! variable (curve) or over two variables (surface), holding the remaining
//! variables at a base profile.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::ClassifierModel;
use crate::data::{Schema, VariableKind};
use crate::error::{Error, Result};
use crate::format::sig6;

pub const DEFAULT_POINTS: usize = 200;
/// Iso-probability level traced on risk surfaces.
pub const CONTOUR_LEVEL: f64 = 0.5;
/// Body-mass-index category cut points (underweight | normal | overweight | obese).
pub const BMI_CUTS: [f64; 3] = [18.5, 25.0, 30.0];

/// Values taken by one variable in a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub variable: String,
    pub values: Vec<f64>,
}

impl GridSpec {
    /// `points` equally spaced values from `min` to `max` inclusive.
    pub fn range(variable: &str, min: f64, max: f64, points: usize) -> Result<Self> {
        if !(min < max) || !min.is_finite() || !max.is_finite() {
            return Err(Error::InvalidGrid(format!("{variable}: need finite min < max, got {min}..{max}")));
        }
        if points < 2 {
            return Err(Error::InvalidGrid(format!("{variable}: need at least 2 points")));
        }
        let step = (max - min) / (points - 1) as f64;
        let mut values: Vec<f64> = (0..points).map(|i| min + step * i as f64).collect();
        values[points - 1] = max;
        Ok(GridSpec {
            variable: variable.to_string(),
            values,
        })
    }

    pub fn levels(variable: &str, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidGrid(format!("{variable}: empty level list")));
        }
        Ok(GridSpec {
            variable: variable.to_string(),
            values,
        })
    }

    /// Parses `NAME:MIN:MAX[:POINTS]` or `NAME:V1,V2,...`.
    pub fn parse(spec: &str) -> Result<Self> {
        let bad = || Error::InvalidGrid(format!("cannot parse grid `{spec}`"));
        let parts: Vec<&str> = spec.split(':').collect();
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
        match parts.as_slice() {
            [name, list] if !name.is_empty() => {
                let values = list.split(',').map(num).collect::<Result<Vec<_>>>()?;
                Self::levels(name, values)
            }
            [name, min, max] if !name.is_empty() => Self::range(name, num(min)?, num(max)?, DEFAULT_POINTS),
            [name, min, max, points] if !name.is_empty() => {
                let points = points.trim().parse::<usize>().map_err(|_| bad())?;
                Self::range(name, num(min)?, num(max)?, points)
            }
            _ => Err(bad()),
        }
    }

    fn check(&self, schema: &Schema) -> Result<usize> {
        let j = schema.require(&self.variable)?;
        let spec = &schema.vars()[j];
        if let Some(v) = self.values.iter().find(|&&v| !spec.admits(v)) {
            return Err(Error::InvalidGrid(format!(
                "{} is not a valid value of `{}`",
                v, self.variable
            )));
        }
        Ok(j)
    }
}

/// A full assignment of the schema variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseProfile {
    values: Vec<f64>,
}

impl BaseProfile {
    pub fn new(schema: &Schema, values: Vec<f64>) -> Result<Self> {
        if values.len() != schema.len() {
            return Err(Error::SchemaMismatch(format!(
                "profile has {} values for {} variables",
                values.len(),
                schema.len()
            )));
        }
        schema.check_row(&values)?;
        Ok(BaseProfile { values })
    }

    /// Builds from a name-to-value map that must cover every variable.
    pub fn from_map(schema: &Schema, map: &BTreeMap<String, f64>) -> Result<Self> {
        if let Some(extra) = map.keys().find(|k| schema.index_of(k).is_none()) {
            return Err(Error::MissingColumn(extra.clone()));
        }
        let values = schema
            .vars()
            .iter()
            .map(|v| map.get(&v.name).copied().ok_or_else(|| Error::MissingColumn(v.name.clone())))
            .collect::<Result<Vec<_>>>()?;
        Self::new(schema, values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

fn adverse_probs(m: &ClassifierModel, rows: &[Vec<f64>], adverse: u32) -> Result<Vec<f64>> {
    let j = m.class_index(adverse)?;
    Ok(m.posteriors_rows(rows)?
        .into_iter()
        .map(|p| p[j].clamp(0.0, 1.0))
        .collect())
}

/// `(value, p_adverse)` for each grid value substituted into `base`.
pub fn risk_curve(m: &ClassifierModel, base: &BaseProfile, grid: &GridSpec, adverse: u32) -> Result<Vec<(f64, f64)>> {
    let j = grid.check(m.schema())?;
    let rows: Vec<Vec<f64>> = grid
        .values
        .iter()
        .map(|&v| {
            let mut r = base.values.clone();
            r[j] = v;
            r
        })
        .collect();
    let p = adverse_probs(m, &rows, adverse)?;
    Ok(grid.values.iter().copied().zip(p).collect())
}

/// A straight piece of the iso-probability line, in data coordinates
/// `(var1, var2)`.
pub type Segment = [(f64, f64); 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskSurface {
    pub grid1: GridSpec,
    pub grid2: GridSpec,
    /// `probs[i2][i1]`: one row per value of the second variable.
    pub probs: Vec<Vec<f64>>,
    /// Segments of the 0.5 contour; `None` when no grid cell crosses it.
    pub contour: Option<Vec<Segment>>,
}

/// Posterior risk over the product of two grids.
pub fn risk_surface(
    m: &ClassifierModel,
    base: &BaseProfile,
    grid1: &GridSpec,
    grid2: &GridSpec,
    adverse: u32,
) -> Result<RiskSurface> {
    let j1 = grid1.check(m.schema())?;
    let j2 = grid2.check(m.schema())?;
    if j1 == j2 {
        return Err(Error::InvalidGrid(format!(
            "surface needs two distinct variables, got `{}` twice",
            grid1.variable
        )));
    }
    let mut rows = Vec::with_capacity(grid1.values.len() * grid2.values.len());
    for &b in &grid2.values {
        for &a in &grid1.values {
            let mut r = base.values.clone();
            r[j1] = a;
            r[j2] = b;
            rows.push(r);
        }
    }
    let p = adverse_probs(m, &rows, adverse)?;
    let probs: Vec<Vec<f64>> = p.chunks(grid1.values.len()).map(<[f64]>::to_vec).collect();
    let segments = marching_squares(&grid1.values, &grid2.values, &probs, CONTOUR_LEVEL);
    Ok(RiskSurface {
        grid1: grid1.clone(),
        grid2: grid2.clone(),
        probs,
        contour: (!segments.is_empty()).then_some(segments),
    })
}

fn crosses(a: f64, b: f64, level: f64) -> bool {
    (a < level && b > level) || (a > level && b < level)
}

fn interpolate(p: (f64, f64), q: (f64, f64), fp: f64, fq: f64, level: f64) -> (f64, f64) {
    let t = (level - fp) / (fq - fp);
    (p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1))
}

/// Line segments where `f` crosses `level` strictly between two adjacent
/// grid values; saddle cells are split by the cell-centre average.
pub fn marching_squares(xs: &[f64], ys: &[f64], f: &[Vec<f64>], level: f64) -> Vec<Segment> {
    let mut out = Vec::new();
    for i2 in 0..ys.len().saturating_sub(1) {
        for i1 in 0..xs.len().saturating_sub(1) {
            // corners counter-clockwise from the lower left
            let pts = [
                (xs[i1], ys[i2]),
                (xs[i1 + 1], ys[i2]),
                (xs[i1 + 1], ys[i2 + 1]),
                (xs[i1], ys[i2 + 1]),
            ];
            let vals = [f[i2][i1], f[i2][i1 + 1], f[i2 + 1][i1 + 1], f[i2 + 1][i1]];
            let mut hits = Vec::new();
            for e in 0..4 {
                let (a, b) = (e, (e + 1) % 4);
                if crosses(vals[a], vals[b], level) {
                    hits.push((e, interpolate(pts[a], pts[b], vals[a], vals[b], level)));
                }
            }
            match hits.len() {
                2 => out.push([hits[0].1, hits[1].1]),
                4 => {
                    let centre = vals.iter().sum::<f64>() / 4.0;
                    // corner 0 and the centre on the same side: connect the
                    // edges around corners 1 and 3, otherwise around 0 and 2
                    let same = (vals[0] > level) == (centre > level);
                    if same {
                        out.push([hits[0].1, hits[1].1]);
                        out.push([hits[2].1, hits[3].1]);
                    } else {
                        out.push([hits[3].1, hits[0].1]);
                        out.push([hits[1].1, hits[2].1]);
                    }
                }
                _ => {}
            }
        }
    }
    out
}

impl RiskSurface {
    /// Whether grid point `(i1, i2)` touches a grid edge the contour crosses.
    pub fn on_contour(&self, i1: usize, i2: usize) -> bool {
        let p = &self.probs;
        let v = p[i2][i1];
        let mut neighbours = Vec::with_capacity(4);
        if i1 > 0 {
            neighbours.push(p[i2][i1 - 1]);
        }
        if i1 + 1 < p[i2].len() {
            neighbours.push(p[i2][i1 + 1]);
        }
        if i2 > 0 {
            neighbours.push(p[i2 - 1][i1]);
        }
        if i2 + 1 < p.len() {
            neighbours.push(p[i2 + 1][i1]);
        }
        neighbours.iter().any(|&w| crosses(v, w, CONTOUR_LEVEL))
    }

    /// Long-format CSV: `var1, var2, probability, on_contour`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            self.grid1.variable.as_str(),
            self.grid2.variable.as_str(),
            "probability",
            "on_contour",
        ])?;
        for (i2, &b) in self.grid2.values.iter().enumerate() {
            for (i1, &a) in self.grid1.values.iter().enumerate() {
                w.write_record([
                    sig6(a),
                    sig6(b),
                    sig6(self.probs[i2][i1]),
                    u8::from(self.on_contour(i1, i2)).to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub fn write_curve_csv(path: impl AsRef<Path>, variable: &str, curve: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([variable, "probability"])?;
    for (v, p) in curve {
        w.write_record([sig6(*v), sig6(*p)])?;
    }
    w.flush()?;
    Ok(())
}

/// Descriptive metadata for one scenario axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisMetadata {
    pub variable: String,
    pub kind: VariableKind,
    pub min: f64,
    pub max: f64,
    pub points: usize,
    /// Category cut points and names for body-mass-index axes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<(String, f64)>>,
}

pub fn axis_metadata(schema: &Schema, grid: &GridSpec) -> Result<AxisMetadata> {
    let j = schema.require(&grid.variable)?;
    let is_bmi = grid.variable.eq_ignore_ascii_case("bmi");
    let categories = is_bmi.then(|| {
        ["underweight", "normal", "overweight", "obese"]
            .iter()
            .zip([f64::NEG_INFINITY, BMI_CUTS[0], BMI_CUTS[1], BMI_CUTS[2]])
            .map(|(n, lo)| (n.to_string(), lo))
            .collect()
    });
    let fold = |f: fn(f64, f64) -> f64, init: f64| grid.values.iter().copied().fold(init, f);
    Ok(AxisMetadata {
        variable: grid.variable.clone(),
        kind: schema.vars()[j].kind,
        min: fold(f64::min, f64::INFINITY),
        max: fold(f64::max, f64::NEG_INFINITY),
        points: grid.values.len(),
        categories,
    })
}
