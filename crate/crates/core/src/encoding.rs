//! Typed predictor schemas and the grouped design matrices built from them.
//!
//! Every predictor becomes one *group* of contiguous design columns: a
//! continuous predictor is a single column, a categorical predictor with `J`
//! levels becomes `J - 1` reference-cell dummies (the last declared level is
//! the reference), and a pairwise interaction is the block of all elementwise
//! products of its parents' columns.

use std::collections::{BTreeSet, HashSet};
use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncodingError {
    #[error("duplicate predictor name `{0}`")]
    DuplicateName(String),
    #[error("categorical predictor `{name}` declares {levels} level(s); at least 2 are required")]
    TooFewLevels { name: String, levels: usize },
    #[error("categorical predictor `{name}` declares level `{level}` twice")]
    DuplicateLevel { name: String, level: String },
    #[error("row {row}: `{value}` is not a declared level of `{name}`")]
    UnknownLevel { row: usize, name: String, value: String },
    #[error("row {row}: non-finite value for `{name}`")]
    NonFiniteValue { row: usize, name: String },
    #[error("raw table does not match schema: {0}")]
    ShapeMismatch(String),
    #[error("interaction of predictor {0} with itself is not allowed")]
    SelfPair(usize),
    #[error("predictor {0} has no main-effect group in this design")]
    MissingMainEffect(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredictorKind {
    Continuous,
    Categorical { levels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictor {
    pub name: String,
    #[serde(flatten)]
    pub kind: PredictorKind,
}

impl Predictor {
    pub fn continuous(name: impl Into<String>) -> Self {
        Self { name: name.into(), kind: PredictorKind::Continuous }
    }

    pub fn categorical<S: Into<String>>(name: impl Into<String>, levels: impl IntoIterator<Item = S>) -> Self {
        Self {
            name: name.into(),
            kind: PredictorKind::Categorical { levels: levels.into_iter().map(Into::into).collect() },
        }
    }

    /// Number of design columns this predictor occupies as a main effect.
    pub fn width(&self) -> usize {
        match &self.kind {
            PredictorKind::Continuous => 1,
            PredictorKind::Categorical { levels } => levels.len() - 1,
        }
    }
}

/// Ordered, validated list of predictors. Position defines the predictor index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Predictor>", into = "Vec<Predictor>")]
pub struct PredictorSchema {
    entries: Vec<Predictor>,
}

impl TryFrom<Vec<Predictor>> for PredictorSchema {
    type Error = EncodingError;

    fn try_from(entries: Vec<Predictor>) -> Result<Self, Self::Error> {
        Self::new(entries)
    }
}

impl From<PredictorSchema> for Vec<Predictor> {
    fn from(schema: PredictorSchema) -> Self {
        schema.entries
    }
}

impl PredictorSchema {
    pub fn new(entries: Vec<Predictor>) -> Result<Self, EncodingError> {
        let mut names = HashSet::new();
        for p in &entries {
            if !names.insert(p.name.as_str()) {
                return Err(EncodingError::DuplicateName(p.name.clone()));
            }
            if let PredictorKind::Categorical { levels } = &p.kind {
                if levels.len() < 2 {
                    return Err(EncodingError::TooFewLevels { name: p.name.clone(), levels: levels.len() });
                }
                let mut seen = HashSet::new();
                for l in levels {
                    if !seen.insert(l.as_str()) {
                        return Err(EncodingError::DuplicateLevel { name: p.name.clone(), level: l.clone() });
                    }
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[Predictor] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|p| p.name == name)
    }

    /// Main-effects column count: `sum(J_i) + p - 2q`.
    pub fn main_effect_columns(&self) -> usize {
        self.entries.iter().map(Predictor::width).sum()
    }
}

/// One column of raw input, typed by the schema entry it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "snake_case")]
pub enum RawColumn {
    Continuous(Vec<f64>),
    Categorical(Vec<String>),
}

impl RawColumn {
    pub fn len(&self) -> usize {
        match self {
            RawColumn::Continuous(v) => v.len(),
            RawColumn::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Column-typed in-memory table whose columns follow schema order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTable {
    pub columns: Vec<RawColumn>,
}

impl RawTable {
    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, RawColumn::len)
    }

    pub fn select_rows(&self, rows: &[usize]) -> RawTable {
        let columns = self
            .columns
            .iter()
            .map(|c| match c {
                RawColumn::Continuous(v) => RawColumn::Continuous(rows.iter().map(|&r| v[r]).collect()),
                RawColumn::Categorical(v) => RawColumn::Categorical(rows.iter().map(|&r| v[r].clone()).collect()),
            })
            .collect();
        RawTable { columns }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupSource {
    Main(usize),
    /// Unordered pair stored with the smaller predictor index first.
    Interaction(usize, usize),
}

impl GroupSource {
    pub fn is_interaction(&self) -> bool {
        matches!(self, GroupSource::Interaction(..))
    }

    pub fn interaction(i: usize, j: usize) -> Self {
        GroupSource::Interaction(i.min(j), i.max(j))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub columns: Range<usize>,
    pub label: String,
    pub source: GroupSource,
}

impl Group {
    pub fn size(&self) -> usize {
        self.columns.len()
    }
}

/// `n x p*` design with its column groups. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedDesign {
    matrix: DMatrix<f64>,
    groups: Vec<Group>,
    column_labels: Vec<String>,
    constant: Vec<bool>,
}

impl GroupedDesign {
    /// Assemble a design from pre-built parts; groups must tile the columns in order.
    pub fn from_parts(matrix: DMatrix<f64>, groups: Vec<Group>, column_labels: Vec<String>) -> Self {
        let mut next = 0;
        for g in &groups {
            assert_eq!(g.columns.start, next, "groups must be contiguous and ordered");
            next = g.columns.end;
        }
        assert_eq!(next, matrix.ncols(), "groups must cover every column");
        assert_eq!(column_labels.len(), matrix.ncols());
        let constant = (0..matrix.ncols()).map(|j| is_constant(matrix.column(j).as_slice())).collect();
        Self { matrix, groups, column_labels, constant }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn column(&self, j: usize) -> &[f64] {
        let n = self.matrix.nrows();
        &self.matrix.as_slice()[j * n..(j + 1) * n]
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn group(&self, g: usize) -> &Group {
        &self.groups[g]
    }

    pub fn n_rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn column_labels(&self) -> &[String] {
        &self.column_labels
    }

    /// Zero-variance columns; solvers pin their coefficients to zero.
    pub fn is_constant(&self, j: usize) -> bool {
        self.constant[j]
    }

    pub fn group_of_source(&self, source: GroupSource) -> Option<usize> {
        self.groups.iter().position(|g| g.source == source)
    }

    /// Column indices covered by a set of groups, ascending.
    pub fn columns_of<'a>(&self, groups: impl IntoIterator<Item = &'a usize>) -> Vec<usize> {
        let mut cols: Vec<usize> = groups.into_iter().flat_map(|&g| self.groups[g].columns.clone()).collect();
        cols.sort_unstable();
        cols
    }

    pub fn column_count<'a>(&self, groups: impl IntoIterator<Item = &'a usize>) -> usize {
        groups.into_iter().map(|&g| self.groups[g].size()).sum()
    }

    /// The interaction pairs present in the design, as predictor index pairs.
    pub fn interaction_pairs(&self) -> BTreeSet<(usize, usize)> {
        self.groups
            .iter()
            .filter_map(|g| match g.source {
                GroupSource::Interaction(i, j) => Some((i, j)),
                GroupSource::Main(_) => None,
            })
            .collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> GroupedDesign {
        let matrix = self.matrix.select_rows(rows);
        GroupedDesign::from_parts(matrix, self.groups.clone(), self.column_labels.clone())
    }

    /// Keeps only the listed groups (in the given order); provenance is preserved.
    pub fn subset_groups(&self, keep: &[usize]) -> GroupedDesign {
        let cols = keep.iter().flat_map(|&g| self.groups[g].columns.clone()).collect::<Vec<_>>();
        let matrix = self.matrix.select_columns(&cols);
        let mut groups = Vec::with_capacity(keep.len());
        let mut start = 0;
        for &g in keep {
            let src = &self.groups[g];
            groups.push(Group { columns: start..start + src.size(), label: src.label.clone(), source: src.source });
            start += src.size();
        }
        let labels = cols.iter().map(|&c| self.column_labels[c].clone()).collect();
        GroupedDesign::from_parts(matrix, groups, labels)
    }
}

fn is_constant(col: &[f64]) -> bool {
    match col.first() {
        None => true,
        Some(&first) => col.iter().all(|&v| v == first),
    }
}

/// Builds the main-effects design; column order follows schema order then level order.
pub fn encode(schema: &PredictorSchema, raw: &RawTable) -> Result<GroupedDesign, EncodingError> {
    if raw.columns.len() != schema.len() {
        return Err(EncodingError::ShapeMismatch(format!(
            "{} raw columns for {} predictors",
            raw.columns.len(),
            schema.len()
        )));
    }
    let n = raw.n_rows();
    if let Some(bad) = raw.columns.iter().position(|c| c.len() != n) {
        return Err(EncodingError::ShapeMismatch(format!("column {bad} has a different row count")));
    }
    let p_star = schema.main_effect_columns();
    let mut data = vec![0.0; n * p_star];
    let mut groups = Vec::with_capacity(schema.len());
    let mut labels = Vec::with_capacity(p_star);
    let mut start = 0;

    for (i, (pred, col)) in schema.entries().iter().zip(&raw.columns).enumerate() {
        let width = pred.width();
        match (&pred.kind, col) {
            (PredictorKind::Continuous, RawColumn::Continuous(values)) => {
                for (row, &v) in values.iter().enumerate() {
                    if !v.is_finite() {
                        return Err(EncodingError::NonFiniteValue { row, name: pred.name.clone() });
                    }
                    data[start * n + row] = v;
                }
                labels.push(pred.name.clone());
            }
            (PredictorKind::Categorical { levels }, RawColumn::Categorical(values)) => {
                for (row, v) in values.iter().enumerate() {
                    let level = levels.iter().position(|l| l == v).ok_or_else(|| EncodingError::UnknownLevel {
                        row,
                        name: pred.name.clone(),
                        value: v.clone(),
                    })?;
                    if level < width {
                        data[(start + level) * n + row] = 1.0;
                    }
                }
                labels.extend(levels[..width].iter().map(|l| format!("{}{}", pred.name, l)));
            }
            _ => {
                return Err(EncodingError::ShapeMismatch(format!(
                    "column {i} (`{}`) has the wrong type",
                    pred.name
                )))
            }
        }
        groups.push(Group { columns: start..start + width, label: pred.name.clone(), source: GroupSource::Main(i) });
        start += width;
    }

    let matrix = DMatrix::from_vec(n, p_star, data);
    Ok(GroupedDesign::from_parts(matrix, groups, labels))
}

/// Appends one product group per unordered predictor pair.
///
/// Pairs are predictor indices; each must have a main-effect group in
/// `design`. Product columns are ordered row-major over (parent-i column,
/// parent-j column) where `i < j`. Pairs already present are not duplicated.
pub fn augment_interactions(
    design: &GroupedDesign,
    pairs: &BTreeSet<(usize, usize)>,
) -> Result<GroupedDesign, EncodingError> {
    if pairs.is_empty() {
        return Ok(design.clone());
    }
    let existing = design.interaction_pairs();
    let mut todo = Vec::new();
    for &(a, b) in pairs {
        if a == b {
            return Err(EncodingError::SelfPair(a));
        }
        let (i, j) = (a.min(b), a.max(b));
        if existing.contains(&(i, j)) || todo.iter().any(|t: &(usize, usize, usize, usize)| t.0 == i && t.1 == j) {
            continue;
        }
        let gi = design.group_of_source(GroupSource::Main(i)).ok_or(EncodingError::MissingMainEffect(i))?;
        let gj = design.group_of_source(GroupSource::Main(j)).ok_or(EncodingError::MissingMainEffect(j))?;
        todo.push((i, j, gi, gj));
    }

    let n = design.n_rows();
    let extra: usize = todo.iter().map(|&(_, _, gi, gj)| design.group(gi).size() * design.group(gj).size()).sum();
    let base = design.n_cols();
    let mut data = Vec::with_capacity(n * (base + extra));
    data.extend_from_slice(design.matrix().as_slice());
    let mut groups = design.groups().to_vec();
    let mut labels = design.column_labels().to_vec();
    let mut start = base;

    for (i, j, gi, gj) in todo {
        let (left, right) = (design.group(gi), design.group(gj));
        for ci in left.columns.clone() {
            for cj in right.columns.clone() {
                let (x, z) = (design.column(ci), design.column(cj));
                data.extend(x.iter().zip(z).map(|(a, b)| a * b));
                labels.push(format!("{}*{}", design.column_labels()[ci], design.column_labels()[cj]));
            }
        }
        let width = left.size() * right.size();
        groups.push(Group {
            columns: start..start + width,
            label: format!("{}*{}", left.label, right.label),
            source: GroupSource::Interaction(i, j),
        });
        start += width;
    }

    let matrix = DMatrix::from_vec(n, start, data);
    Ok(GroupedDesign::from_parts(matrix, groups, labels))
}

/// All distinct unordered pairs from a set of predictor indices.
pub fn all_pairs(indices: &BTreeSet<usize>) -> BTreeSet<(usize, usize)> {
    let v: Vec<usize> = indices.iter().copied().collect();
    let mut out = BTreeSet::new();
    for (a, &i) in v.iter().enumerate() {
        for &j in &v[a + 1..] {
            out.insert((i, j));
        }
    }
    out
}

/// Recovers predictor pairs from `A*B` group labels against a schema.
pub fn decode_pair_labels<'a>(
    schema: &PredictorSchema,
    labels: impl IntoIterator<Item = &'a str>,
) -> BTreeSet<(usize, usize)> {
    labels
        .into_iter()
        .filter_map(|label| {
            // Names may themselves contain '*'; try every split point.
            label.match_indices('*').find_map(|(pos, _)| {
                let i = schema.index_of(&label[..pos])?;
                let j = schema.index_of(&label[pos + 1..])?;
                Some((i.min(j), i.max(j)))
            })
        })
        .collect()
}
