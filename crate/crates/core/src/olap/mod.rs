//! Cube queries over one fact table of a snapshot.
//!
//! Rows are grouped by the attribute values bound to each requested level,
//! reached from the fact's grain member. There is no materialized cube: every
//! query is a single pass over the fact rows with a sorted group map, so axis
//! and cell order are deterministic.

mod complex;
mod export;
mod query;

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

pub use complex::{assemble_complex_fact, AssembledRow, Assembly};
pub use export::{export_attribute_value, AttributeValueView, Selection};
pub use query::{Aggregate, Comparison, CubeQuery, Filter, LevelRef, Literal, MeasureSpec};

use crate::mapping::{flag_normality, Flag};
use crate::model::{Aggregability, Dimension, FactTable, Schema, ValueKind};
use crate::store::{FactRow, Snapshot, StoreError};
use crate::value::Value;

/// Dimension whose member code selects the reference intervals when flagging.
pub const ANALYSIS_DIMENSION: &str = "medical-analysis";
/// Dimension whose attributes form the context of reference intervals.
pub const PATIENT_DIMENSION: &str = "patient";

#[derive(Debug, thiserror::Error)]
pub enum OlapError {
    #[error("unknown fact table `{0}`")]
    UnknownFact(String),
    #[error("`{dimension}` is not a dimension of `{fact}`")]
    UnknownDimension { fact: String, dimension: String },
    #[error("`{level}` is not a level of `{dimension}` reachable from the grain (expected one of: {available})")]
    InvalidLevel {
        dimension: String,
        level: String,
        available: String,
    },
    #[error("dimension `{0}` is grouped twice")]
    DuplicateGroupBy(String),
    #[error("unknown measure `{0}`")]
    UnknownMeasure(String),
    #[error("{aggregate} cannot be applied to `{measure}`: {reason}")]
    AggregateMismatch {
        measure: String,
        aggregate: Aggregate,
        reason: String,
    },
    #[error("invalid literal for {dimension}/{level}: {reason}")]
    InvalidLiteral {
        dimension: String,
        level: String,
        reason: String,
    },
    #[error("cell {cell} spans several analyses: {codes}")]
    MixedAnalyses { cell: String, codes: String },
    #[error("normality flags unavailable: {0}")]
    FlagsUnsupported(String),
    #[error("`{0}` is already at its coarsest level")]
    AlreadyCoarsest(String),
    #[error("`{0}` is already at its finest level")]
    AlreadyFinest(String),
    #[error("`{0}` is not in the query's group-by")]
    NotGrouped(String),
    #[error("unknown attribute `{dimension}.{attribute}`")]
    UnknownAttribute { dimension: String, attribute: String },
    #[error("unknown complex fact group `{0}`")]
    UnknownGroup(String),
    #[error("`{fact}` has no row {id}")]
    UnknownRow { fact: String, id: u64 },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("export failed: {0}")]
    Export(String),
}

/// A level resolved against one fact table.
#[derive(Debug, Clone)]
pub(crate) struct LevelPlan {
    pub grain: usize,
    pub dimension: String,
    pub level: String,
    pub attributes: Vec<String>,
    pub positions: Vec<usize>,
    pub kinds: Vec<ValueKind>,
}

impl LevelPlan {
    pub(crate) fn resolve(schema: &Schema, fact: &FactTable, dimension: &str, level: &str) -> Result<Self, OlapError> {
        let grain = fact
            .grain_index(dimension)
            .ok_or_else(|| OlapError::UnknownDimension {
                fact: fact.name.clone(),
                dimension: dimension.to_string(),
            })?;
        let dim = schema.dimension(dimension).expect("valid schema");
        let levels = schema
            .navigable_levels(&fact.name, dimension)
            .unwrap_or_default();
        let found = levels
            .iter()
            .find(|l| l.name == level)
            .ok_or_else(|| OlapError::InvalidLevel {
                dimension: dimension.to_string(),
                level: level.to_string(),
                available: levels.iter().map(|l| l.name.as_str()).collect::<Vec<_>>().join(", "),
            })?;
        Ok(Self::for_level(grain, dim, &found.name, &found.bound_attributes))
    }

    fn for_level(grain: usize, dim: &Dimension, level: &str, attrs: &[String]) -> Self {
        let positions: Vec<usize> = attrs
            .iter()
            .map(|a| dim.attribute_index(a).expect("valid schema"))
            .collect();
        LevelPlan {
            grain,
            dimension: dim.name.clone(),
            level: level.to_string(),
            attributes: attrs.to_vec(),
            kinds: positions.iter().map(|&p| dim.attributes[p].kind).collect(),
            positions,
        }
    }

    /// The level's attribute values for the member a fact row points to.
    pub(crate) fn header(&self, snap: &Snapshot, row: &FactRow) -> Vec<Value> {
        let member = snap
            .dimension(&self.dimension)
            .ok()
            .and_then(|d| d.member(row.keys[self.grain]));
        self.positions
            .iter()
            .map(|&p| member.map_or(Value::Null, |m| m.values[p].clone()))
            .collect()
    }

    fn invalid(&self, reason: impl Into<String>) -> OlapError {
        OlapError::InvalidLiteral {
            dimension: self.dimension.clone(),
            level: self.level.clone(),
            reason: reason.into(),
        }
    }

    fn tuple(&self, lit: &Literal) -> Result<Vec<Value>, OlapError> {
        let scalars: Vec<&Value> = match lit {
            Literal::Scalar(v) => vec![v],
            Literal::List(items) => items
                .iter()
                .map(|i| match i {
                    Literal::Scalar(v) => Ok(v),
                    Literal::List(_) => Err(self.invalid("nested list")),
                })
                .collect::<Result<_, _>>()?,
        };
        if scalars.len() != self.kinds.len() {
            return Err(self.invalid(format!(
                "level binds {} attribute(s) ({}), literal has {}",
                self.kinds.len(),
                self.attributes.join(", "),
                scalars.len()
            )));
        }
        scalars
            .iter()
            .zip(&self.kinds)
            .map(|(v, k)| v.coerce(*k).map_err(|e| self.invalid(e.to_string())))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub(crate) struct FilterPlan {
    level: LevelPlan,
    op: Comparison,
    tuples: Vec<Vec<Value>>,
}

impl FilterPlan {
    pub(crate) fn resolve(schema: &Schema, fact: &FactTable, f: &Filter) -> Result<Self, OlapError> {
        let level = LevelPlan::resolve(schema, fact, &f.dimension, &f.level)?;
        let tuples = match (f.op, &f.value) {
            (Comparison::In, Literal::List(items)) => items
                .iter()
                .map(|i| level.tuple(i))
                .collect::<Result<Vec<_>, _>>()?,
            (Comparison::In, Literal::Scalar(_)) => return Err(level.invalid("`in` needs a list")),
            (_, lit) => vec![level.tuple(lit)?],
        };
        Ok(FilterPlan {
            level,
            op: f.op,
            tuples,
        })
    }

    pub(crate) fn matches(&self, snap: &Snapshot, row: &FactRow) -> bool {
        let h = self.level.header(snap, row);
        let t = &self.tuples;
        match self.op {
            Comparison::Eq => h == t[0],
            Comparison::Ne => h != t[0],
            Comparison::Lt => h < t[0],
            Comparison::Le => h <= t[0],
            Comparison::Gt => h > t[0],
            Comparison::Ge => h >= t[0],
            Comparison::In => t.contains(&h),
        }
    }
}

#[derive(Debug, Clone)]
struct MeasurePlan {
    index: usize,
    kind: ValueKind,
    aggregate: Aggregate,
}

#[derive(Debug, Clone)]
struct Plan {
    fact: FactTable,
    group: Vec<LevelPlan>,
    filters: Vec<FilterPlan>,
    measures: Vec<MeasurePlan>,
}

fn fact_of<'s>(schema: &'s Schema, name: &str) -> Result<&'s FactTable, OlapError> {
    schema
        .fact_table(name)
        .ok_or_else(|| OlapError::UnknownFact(name.to_string()))
}

impl Plan {
    fn resolve(schema: &Schema, q: &CubeQuery) -> Result<Plan, OlapError> {
        let fact = fact_of(schema, &q.fact)?;
        let mut seen = BTreeSet::new();
        let mut group = Vec::new();
        for g in &q.group_by {
            if !seen.insert(g.dimension.as_str()) {
                return Err(OlapError::DuplicateGroupBy(g.dimension.clone()));
            }
            group.push(LevelPlan::resolve(schema, fact, &g.dimension, &g.level)?);
        }
        let filters = q
            .filters
            .iter()
            .map(|f| FilterPlan::resolve(schema, fact, f))
            .collect::<Result<_, _>>()?;
        let mut measures = Vec::new();
        for spec in &q.measures {
            let index = fact
                .measure_index(&spec.measure)
                .ok_or_else(|| OlapError::UnknownMeasure(spec.measure.clone()))?;
            let m = &fact.measures[index];
            let mismatch = |reason: &str| OlapError::AggregateMismatch {
                measure: m.name.clone(),
                aggregate: spec.aggregate,
                reason: reason.to_string(),
            };
            if matches!(spec.aggregate, Aggregate::Sum | Aggregate::Avg) {
                if !m.kind.is_numeric() {
                    return Err(mismatch("measure is not numeric"));
                }
                if !m.aggregability.is_summable() {
                    return Err(mismatch("measure is non-additive"));
                }
            }
            measures.push(MeasurePlan {
                index,
                kind: m.kind,
                aggregate: spec.aggregate,
            });
        }
        Ok(Plan {
            fact: fact.clone(),
            group,
            filters,
            measures,
        })
    }

    fn matches(&self, snap: &Snapshot, row: &FactRow) -> bool {
        self.filters.iter().all(|f| f.matches(snap, row))
    }

    fn key(&self, snap: &Snapshot, row: &FactRow) -> Vec<Vec<Value>> {
        self.group.iter().map(|l| l.header(snap, row)).collect()
    }
}

/// Running aggregate of one measure.
#[derive(Debug, Clone, Default)]
struct Acc {
    non_null: u64,
    int_sum: i128,
    dec_sum: f64,
    min: Option<Value>,
    max: Option<Value>,
}

impl Acc {
    fn push(&mut self, v: &Value) {
        if v.is_null() {
            return;
        }
        self.non_null += 1;
        match v {
            Value::Integer(i) => self.int_sum += i128::from(*i),
            Value::Decimal(d) => self.dec_sum += d,
            _ => {}
        }
        if self.min.as_ref().is_none_or(|m| v < m) {
            self.min = Some(v.clone());
        }
        if self.max.as_ref().is_none_or(|m| v > m) {
            self.max = Some(v.clone());
        }
    }

    fn finish(&self, m: &MeasurePlan, rows: u64) -> Value {
        let sum = || match m.kind {
            ValueKind::Integer => match i64::try_from(self.int_sum) {
                Ok(i) => Value::Integer(i),
                Err(_) => Value::Decimal(self.int_sum as f64),
            },
            _ => Value::Decimal(self.dec_sum),
        };
        match m.aggregate {
            Aggregate::Count => Value::Integer(rows as i64),
            _ if self.non_null == 0 => Value::Null,
            Aggregate::Sum => sum(),
            Aggregate::Avg => {
                let total = match m.kind {
                    ValueKind::Integer => self.int_sum as f64,
                    _ => self.dec_sum,
                };
                Value::Decimal(total / self.non_null as f64)
            }
            Aggregate::Min => self.min.clone().unwrap_or(Value::Null),
            Aggregate::Max => self.max.clone().unwrap_or(Value::Null),
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Group {
    rows: u64,
    accs: Vec<Acc>,
}

impl Group {
    fn push(&mut self, plan: &Plan, row: &FactRow) {
        if self.accs.is_empty() {
            self.accs = vec![Acc::default(); plan.measures.len()];
        }
        self.rows += 1;
        for (acc, m) in self.accs.iter_mut().zip(&plan.measures) {
            acc.push(&row.measures[m.index]);
        }
    }

    fn finish(&self, plan: &Plan) -> Vec<Value> {
        plan.measures
            .iter()
            .enumerate()
            .map(|(i, m)| {
                self.accs
                    .get(i)
                    .map_or_else(|| Acc::default().finish(m, self.rows), |a| a.finish(m, self.rows))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Axis {
    pub dimension: String,
    pub level: String,
    pub attributes: Vec<String>,
    /// Distinct header tuples present in the result, sorted.
    pub members: Vec<Vec<Value>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    /// Index into each axis' `members`, in group-by order.
    pub coords: Vec<usize>,
    /// Number of fact rows in the cell.
    pub rows: u64,
    /// One aggregate per requested measure.
    pub values: Vec<Value>,
    /// One flag per requested measure when flagging was requested; count
    /// aggregates are never flagged.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flags: Option<Vec<Option<Flag>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CubeResult {
    pub fact: String,
    pub axes: Vec<Axis>,
    pub measures: Vec<MeasureSpec>,
    pub cells: Vec<Cell>,
    /// Aggregates over every matching row.
    pub totals: Vec<Value>,
    pub total_rows: u64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl CubeResult {
    /// Header tuples of a cell, one per axis.
    pub fn headers(&self, cell: &Cell) -> Vec<Vec<Value>> {
        cell.coords
            .iter()
            .zip(&self.axes)
            .map(|(&i, a)| a.members[i].clone())
            .collect()
    }

    /// Canonical wire form: compact JSON with the struct field order above.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("results serialize")
    }
}

/// Checks a query against the schema without running it.
pub fn validate_query(schema: &Schema, q: &CubeQuery) -> Result<(), OlapError> {
    Plan::resolve(schema, q)?;
    if q.flag_normality {
        flag_preconditions(schema, q)?;
    }
    Ok(())
}

/// Runs a cube query; flags cells when the query asks for it.
pub fn execute(snap: &Snapshot, q: &CubeQuery) -> Result<CubeResult, OlapError> {
    let schema = snap.require_schema()?;
    let plan = Plan::resolve(schema, q)?;
    if q.flag_normality {
        flag_preconditions(schema, q)?;
    }
    let mut groups: BTreeMap<Vec<Vec<Value>>, Group> = BTreeMap::new();
    let mut total = Group::default();
    for row in snap.fact_rows(&q.fact)? {
        if !plan.matches(snap, row) {
            continue;
        }
        total.push(&plan, row);
        groups.entry(plan.key(snap, row)).or_default().push(&plan, row);
    }

    let mut axes: Vec<Axis> = plan
        .group
        .iter()
        .map(|l| Axis {
            dimension: l.dimension.clone(),
            level: l.level.clone(),
            attributes: l.attributes.clone(),
            members: Vec::new(),
        })
        .collect();
    for (i, axis) in axes.iter_mut().enumerate() {
        let distinct: BTreeSet<&Vec<Value>> = groups.keys().map(|k| &k[i]).collect();
        axis.members = distinct.into_iter().cloned().collect();
    }
    let cells = groups
        .iter()
        .map(|(key, g)| Cell {
            coords: key
                .iter()
                .zip(&axes)
                .map(|(h, a)| a.members.binary_search(h).expect("member collected"))
                .collect(),
            rows: g.rows,
            values: g.finish(&plan),
            flags: None,
        })
        .collect();
    let result = CubeResult {
        fact: q.fact.clone(),
        axes,
        measures: q.measures.clone(),
        cells,
        totals: total.finish(&plan),
        total_rows: total.rows,
        warnings: Vec::new(),
    };
    if q.flag_normality {
        flag_cells(snap, q, result)
    } else {
        Ok(result)
    }
}

fn flag_preconditions(schema: &Schema, q: &CubeQuery) -> Result<(), OlapError> {
    let fact = fact_of(schema, &q.fact)?;
    if fact.grain_index(ANALYSIS_DIMENSION).is_none() {
        return Err(OlapError::FlagsUnsupported(format!(
            "`{}` has no `{ANALYSIS_DIMENSION}` dimension",
            fact.name
        )));
    }
    if let Some(m) = q.measures.iter().find(|m| m.aggregate == Aggregate::Sum) {
        return Err(OlapError::FlagsUnsupported(format!(
            "sums of `{}` mix result scales; use avg, min or max",
            m.measure
        )));
    }
    Ok(())
}

fn render_key(key: &[Vec<Value>]) -> String {
    let parts: Vec<String> = key
        .iter()
        .map(|t| t.iter().map(Value::render).collect::<Vec<_>>().join(" "))
        .collect();
    format!("({})", parts.join(", "))
}

/// Flags every cell of `result` (computed from `q`) against the snapshot's
/// reference intervals. Each cell must cover a single analysis; a cell with a
/// single patient is judged in that patient's context.
pub fn flag_cells(snap: &Snapshot, q: &CubeQuery, mut result: CubeResult) -> Result<CubeResult, OlapError> {
    let schema = snap.require_schema()?;
    flag_preconditions(schema, q)?;
    let plan = Plan::resolve(schema, q)?;
    let fact = &plan.fact;
    let analysis_idx = fact.grain_index(ANALYSIS_DIMENSION).expect("checked");
    let patient_idx = fact.grain_index(PATIENT_DIMENSION);

    let mut scope: BTreeMap<Vec<Vec<Value>>, (BTreeSet<u64>, BTreeSet<u64>)> = BTreeMap::new();
    for row in snap.fact_rows(&q.fact)? {
        if !plan.matches(snap, row) {
            continue;
        }
        let entry = scope.entry(plan.key(snap, row)).or_default();
        entry.0.insert(row.keys[analysis_idx]);
        if let Some(p) = patient_idx {
            entry.1.insert(row.keys[p]);
        }
    }

    let analysis_dim = schema.dimension(ANALYSIS_DIMENSION).expect("grain dimension");
    let analyses = snap.dimension(ANALYSIS_DIMENSION)?;
    let code_of = |key: u64| -> String {
        let pos = analysis_dim
            .attribute_index(&analysis_dim.natural_key[0])
            .expect("valid schema");
        analyses
            .member(key)
            .map(|m| m.values[pos].render())
            .unwrap_or_default()
    };
    let patient_dim = schema.dimension(PATIENT_DIMENSION);
    let patients = snap.dimension(PATIENT_DIMENSION).ok();

    let mut warnings = BTreeSet::new();
    let mut flagged = Vec::with_capacity(result.cells.len());
    for cell in &result.cells {
        let key = result.headers(cell);
        let (codes, pats) = scope.get(&key).cloned().unwrap_or_default();
        if codes.len() > 1 {
            let names: BTreeSet<String> = codes.iter().map(|&k| code_of(k)).collect();
            return Err(OlapError::MixedAnalyses {
                cell: render_key(&key),
                codes: names.into_iter().collect::<Vec<_>>().join(", "),
            });
        }
        let code = codes.iter().next().map(|&k| code_of(k)).unwrap_or_default();
        let mut context = BTreeMap::new();
        if let (1, Some(dim), Some(table)) = (pats.len(), patient_dim, patients) {
            let key = *pats.iter().next().expect("one patient");
            if let Some(m) = table.member(key) {
                for (a, v) in dim.attributes.iter().zip(&m.values) {
                    context.insert(a.name.clone(), v.clone());
                }
            }
        }
        let flags = plan
            .measures
            .iter()
            .zip(&cell.values)
            .map(|(m, v)| {
                if m.aggregate == Aggregate::Count {
                    return None;
                }
                let Some(x) = v.as_f64() else {
                    return Some(Flag::NoInterval);
                };
                let outcome = flag_normality(x, &code, &context, snap.intervals());
                if let Some(w) = outcome.ambiguity {
                    warnings.insert(w);
                }
                Some(outcome.flag)
            })
            .collect();
        flagged.push(Some(flags));
    }
    for (cell, flags) in result.cells.iter_mut().zip(flagged) {
        cell.flags = flags;
    }
    result.warnings.extend(warnings);
    Ok(result)
}

fn levels_for(schema: &Schema, q: &CubeQuery, dimension: &str) -> Result<(usize, Vec<String>), OlapError> {
    let pos = q
        .group_by
        .iter()
        .position(|g| g.dimension == dimension)
        .ok_or_else(|| OlapError::NotGrouped(dimension.to_string()))?;
    fact_of(schema, &q.fact)?;
    let levels: Vec<String> = schema
        .navigable_levels(&q.fact, dimension)
        .ok_or_else(|| OlapError::UnknownDimension {
            fact: q.fact.clone(),
            dimension: dimension.to_string(),
        })?
        .into_iter()
        .map(|l| l.name)
        .collect();
    Ok((pos, levels))
}

fn level_position(q: &CubeQuery, pos: usize, levels: &[String]) -> Result<usize, OlapError> {
    let g = &q.group_by[pos];
    levels
        .iter()
        .position(|l| *l == g.level)
        .ok_or_else(|| OlapError::InvalidLevel {
            dimension: g.dimension.clone(),
            level: g.level.clone(),
            available: levels.join(", "),
        })
}

/// Steps `dimension` one level coarser along its hierarchy.
pub fn roll_up(schema: &Schema, q: &CubeQuery, dimension: &str) -> Result<CubeQuery, OlapError> {
    let (pos, levels) = levels_for(schema, q, dimension)?;
    let at = level_position(q, pos, &levels)?;
    let next = levels
        .get(at + 1)
        .ok_or_else(|| OlapError::AlreadyCoarsest(dimension.to_string()))?;
    let mut out = q.clone();
    out.group_by[pos].level = next.clone();
    Ok(out)
}

/// Steps `dimension` one level finer, down to the fact's grain.
pub fn drill_down(schema: &Schema, q: &CubeQuery, dimension: &str) -> Result<CubeQuery, OlapError> {
    let (pos, levels) = levels_for(schema, q, dimension)?;
    let at = level_position(q, pos, &levels)?;
    if at == 0 {
        return Err(OlapError::AlreadyFinest(dimension.to_string()));
    }
    let mut out = q.clone();
    out.group_by[pos].level = levels[at - 1].clone();
    Ok(out)
}

/// Restricts the query to one value of a level.
pub fn slice(
    schema: &Schema,
    q: &CubeQuery,
    dimension: &str,
    level: &str,
    value: Literal,
) -> Result<CubeQuery, OlapError> {
    dice(
        schema,
        q,
        vec![Filter {
            dimension: dimension.to_string(),
            level: level.to_string(),
            op: Comparison::Eq,
            value,
        }],
    )
}

/// Appends filters conjunctively.
pub fn dice(schema: &Schema, q: &CubeQuery, filters: Vec<Filter>) -> Result<CubeQuery, OlapError> {
    let fact = fact_of(schema, &q.fact)?;
    for f in &filters {
        FilterPlan::resolve(schema, fact, f)?;
    }
    let mut out = q.clone();
    out.filters.extend(filters);
    Ok(out)
}

/// Distinct values of a level across a dimension's members, sorted. `filter`
/// keeps tuples whose rendered text contains it, ignoring case.
pub fn level_members(
    snap: &Snapshot,
    dimension: &str,
    level: Option<&str>,
    filter: Option<&str>,
) -> Result<(Vec<String>, Vec<Vec<Value>>), OlapError> {
    let schema = snap.require_schema()?;
    let dim = schema
        .dimension(dimension)
        .ok_or_else(|| StoreError::UnknownDimension(dimension.to_string()))?;
    let level_name = level.unwrap_or(&dim.name);
    let lvl = dim.level(level_name).ok_or_else(|| OlapError::InvalidLevel {
        dimension: dim.name.clone(),
        level: level_name.to_string(),
        available: std::iter::once(dim.name.clone())
            .chain(dim.hierarchies.iter().flat_map(|h| h.levels.iter().map(|l| l.name.clone())))
            .collect::<Vec<_>>()
            .join(", "),
    })?;
    let plan = LevelPlan::for_level(0, dim, &lvl.name, &lvl.bound_attributes);
    let needle = filter.map(str::to_lowercase);
    let mut out = BTreeSet::new();
    for m in snap.dimension(dimension)?.iter() {
        let tuple: Vec<Value> = plan.positions.iter().map(|&p| m.values[p].clone()).collect();
        if let Some(n) = &needle {
            let text = tuple.iter().map(Value::render).collect::<Vec<_>>().join(" ");
            if !text.to_lowercase().contains(n.as_str()) {
                continue;
            }
        }
        out.insert(tuple);
    }
    Ok((plan.attributes, out.into_iter().collect()))
}

/// Whether an aggregate may be requested for a measure.
pub fn aggregate_allowed(kind: ValueKind, aggregability: Aggregability, aggregate: Aggregate) -> bool {
    match aggregate {
        Aggregate::Sum | Aggregate::Avg => kind.is_numeric() && aggregability.is_summable(),
        _ => true,
    }
}
