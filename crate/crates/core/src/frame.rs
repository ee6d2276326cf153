//! Population sampling frames.
//!
//! A [`PopulationFrame`] holds the register of `N` units: opaque labels, the
//! auxiliary matrix used for balancing, optional coordinates for spatial
//! designs, an optional stratification and optional model dispersions.
//! Units are addressed by their row index everywhere else in the crate.

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sample::InclusionProbabilities;

/// Assignment of every unit to exactly one stratum.
#[derive(Clone, Debug, PartialEq)]
pub struct Strata {
    labels: Vec<String>,
    assignment: Vec<usize>,
}

impl Strata {
    /// Builds strata from one label per unit. Stratum order is order of first appearance.
    pub fn from_labels<S: AsRef<str>>(unit_labels: &[S]) -> Self {
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut labels = Vec::new();
        let assignment = unit_labels
            .iter()
            .map(|l| {
                let l = l.as_ref();
                *index.entry(l).or_insert_with(|| {
                    labels.push(l.to_string());
                    labels.len() - 1
                })
            })
            .collect();
        Self { labels, assignment }
    }

    pub fn count(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Stratum index of each unit.
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.labels.len()];
        for &h in &self.assignment {
            sizes[h] += 1;
        }
        sizes
    }

    /// Unit indices of each stratum, in population order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.labels.len()];
        for (k, &h) in self.assignment.iter().enumerate() {
            members[h].push(k);
        }
        members
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PopulationFrame {
    unit_ids: Vec<String>,
    aux_names: Vec<String>,
    aux: DMatrix<f64>,
    coord_names: Vec<String>,
    coords: Option<DMatrix<f64>>,
    strata: Option<Strata>,
    sigma: Option<Vec<f64>>,
    study: Vec<(String, Vec<f64>)>,
}

/// Incremental constructor for [`PopulationFrame`]; validation happens in [`FrameBuilder::build`].
#[derive(Clone, Debug, Default)]
pub struct FrameBuilder {
    unit_ids: Vec<String>,
    aux: Vec<(String, Vec<f64>)>,
    coords: Vec<(String, Vec<f64>)>,
    strata: Option<Vec<String>>,
    sigma: Option<Vec<f64>>,
    study: Vec<(String, Vec<f64>)>,
}

impl FrameBuilder {
    pub fn new(unit_ids: Vec<String>) -> Self {
        Self {
            unit_ids,
            ..Self::default()
        }
    }

    /// Frame whose unit ids are `0..n`.
    pub fn with_size(n: usize) -> Self {
        Self::new((0..n).map(|k| k.to_string()).collect())
    }

    pub fn aux(mut self, name: impl Into<String>, values: Vec<f64>) -> Self {
        self.aux.push((name.into(), values));
        self
    }

    pub fn coord(mut self, name: impl Into<String>, values: Vec<f64>) -> Self {
        self.coords.push((name.into(), values));
        self
    }

    pub fn strata<S: Into<String>>(mut self, labels: Vec<S>) -> Self {
        self.strata = Some(labels.into_iter().map(Into::into).collect());
        self
    }

    pub fn sigma(mut self, sigma: Vec<f64>) -> Self {
        self.sigma = Some(sigma);
        self
    }

    pub fn study(mut self, name: impl Into<String>, values: Vec<f64>) -> Self {
        self.study.push((name.into(), values));
        self
    }

    pub fn build(self) -> Result<PopulationFrame> {
        let n = self.unit_ids.len();
        if n == 0 {
            return Err(Error::EmptyTable);
        }
        let mut seen = HashSet::with_capacity(n);
        for id in &self.unit_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        let check = |name: &str, v: &[f64]| -> Result<()> {
            if v.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    found: v.len(),
                });
            }
            if let Some(k) = v.iter().position(|x| !x.is_finite()) {
                return Err(Error::invalid(format!(
                    "column {name:?} has a non-finite value at row {k}"
                )));
            }
            Ok(())
        };
        for (name, col) in self.aux.iter().chain(&self.coords).chain(&self.study) {
            check(name, col)?;
        }
        if let Some(sigma) = &self.sigma {
            check("sigma", sigma)?;
            if sigma.iter().any(|&s| s < 0.0) {
                return Err(Error::invalid("model dispersions must be non-negative"));
            }
            if sigma.iter().all(|&s| s == 0.0) {
                return Err(Error::invalid("model dispersions are all zero"));
            }
        }
        if let Some(labels) = &self.strata {
            if labels.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    found: labels.len(),
                });
            }
            if let Some(k) = labels.iter().position(|l| l.is_empty()) {
                return Err(Error::MissingValue {
                    row: k,
                    column: "stratum".into(),
                });
            }
        }
        let matrix = |cols: &[(String, Vec<f64>)]| {
            DMatrix::from_fn(n, cols.len(), |i, j| cols[j].1[i])
        };
        Ok(PopulationFrame {
            aux: matrix(&self.aux),
            aux_names: self.aux.iter().map(|(c, _)| c.clone()).collect(),
            coords: (!self.coords.is_empty()).then(|| matrix(&self.coords)),
            coord_names: self.coords.iter().map(|(c, _)| c.clone()).collect(),
            strata: self.strata.as_deref().map(Strata::from_labels),
            sigma: self.sigma,
            study: self.study,
            unit_ids: self.unit_ids,
        })
    }
}

impl PopulationFrame {
    pub fn size(&self) -> usize {
        self.unit_ids.len()
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    /// `N x p` auxiliary matrix; `p` may be zero.
    pub fn aux(&self) -> &DMatrix<f64> {
        &self.aux
    }

    pub fn aux_names(&self) -> &[String] {
        &self.aux_names
    }

    pub fn coords(&self) -> Option<&DMatrix<f64>> {
        self.coords.as_ref()
    }

    pub fn coord_names(&self) -> &[String] {
        &self.coord_names
    }

    pub fn strata(&self) -> Option<&Strata> {
        self.strata.as_ref()
    }

    pub fn sigma(&self) -> Option<&[f64]> {
        self.sigma.as_deref()
    }

    pub fn study_names(&self) -> impl Iterator<Item = &str> {
        self.study.iter().map(|(n, _)| n.as_str())
    }

    /// Values of a numeric column looked up by name among study, aux and coordinate columns.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        if let Some((_, v)) = self.study.iter().find(|(n, _)| n == name) {
            return Some(v.clone());
        }
        if let Some(j) = self.aux_names.iter().position(|n| n == name) {
            return Some(self.aux.column(j).iter().copied().collect());
        }
        let j = self.coord_names.iter().position(|n| n == name)?;
        self.coords
            .as_ref()
            .map(|c| c.column(j).iter().copied().collect())
    }

    pub fn require_coords(&self) -> Result<&DMatrix<f64>> {
        self.coords.as_ref().ok_or(Error::MissingFrameData("coordinates"))
    }

    pub fn require_strata(&self) -> Result<&Strata> {
        self.strata.as_ref().ok_or(Error::MissingFrameData("strata"))
    }

    pub fn require_sigma(&self) -> Result<&[f64]> {
        self.sigma.as_deref().ok_or(Error::MissingFrameData("sigma"))
    }

    /// Replaces the stratification.
    pub fn with_strata<S: AsRef<str>>(mut self, labels: &[S]) -> Result<Self> {
        if labels.len() != self.size() {
            return Err(Error::LengthMismatch {
                expected: self.size(),
                found: labels.len(),
            });
        }
        if let Some(k) = labels.iter().position(|l| l.as_ref().is_empty()) {
            return Err(Error::MissingValue {
                row: k,
                column: "stratum".into(),
            });
        }
        self.strata = Some(Strata::from_labels(labels));
        Ok(self)
    }

    /// Assembles an `N x p` balancing matrix from selectors.
    pub fn balancing_matrix(
        &self,
        selectors: &[AuxSelector],
        pi: &InclusionProbabilities,
    ) -> Result<DMatrix<f64>> {
        pi.check_len(self.size())?;
        let mut cols = Vec::with_capacity(selectors.len());
        for sel in selectors {
            cols.push(match sel {
                AuxSelector::One => vec![1.0; self.size()],
                AuxSelector::Pi => pi.as_slice().to_vec(),
                AuxSelector::Column(name) => self
                    .column(name)
                    .ok_or_else(|| Error::MissingColumn(name.clone()))?,
            });
        }
        Ok(DMatrix::from_fn(self.size(), cols.len(), |i, j| cols[j][i]))
    }
}

/// One balancing variable, written `one`, `pi` or a column name.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum AuxSelector {
    /// Constant 1; balancing on it fixes the sample size when `pi` is constant.
    One,
    /// The inclusion probability itself; balancing on it fixes the sample size.
    Pi,
    Column(String),
}

impl std::str::FromStr for AuxSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "" => return Err(Error::invalid("empty auxiliary selector")),
            "one" | "1" => AuxSelector::One,
            "pi" => AuxSelector::Pi,
            other => AuxSelector::Column(other.to_string()),
        })
    }
}

impl std::fmt::Display for AuxSelector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AuxSelector::One => f.write_str("one"),
            AuxSelector::Pi => f.write_str("pi"),
            AuxSelector::Column(name) => f.write_str(name),
        }
    }
}

impl TryFrom<String> for AuxSelector {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<AuxSelector> for String {
    fn from(a: AuxSelector) -> String {
        a.to_string()
    }
}

/// Column roles for [`load_frame`]. Columns not mentioned are ignored.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrameSchema {
    pub id: String,
    pub aux: Vec<String>,
    pub coords: Vec<String>,
    pub stratum: Option<String>,
    pub sigma: Option<String>,
    pub study: Vec<String>,
}

impl FrameSchema {
    /// Uses every column except `id` as an auxiliary variable.
    pub fn all_aux(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            ..Self::default()
        }
    }
}

/// Reads a comma-delimited table with a header row.
///
/// When the schema lists no role at all besides the id, every other column is
/// loaded as an auxiliary variable.
pub fn load_frame<R: Read>(source: R, schema: &FrameSchema) -> Result<PopulationFrame> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let position = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let id_col = position(&schema.id)?;
    let bare = schema.aux.is_empty()
        && schema.coords.is_empty()
        && schema.stratum.is_none()
        && schema.sigma.is_none()
        && schema.study.is_empty();
    let aux_names: Vec<String> = if bare {
        headers
            .iter()
            .filter(|h| **h != schema.id)
            .cloned()
            .collect()
    } else {
        schema.aux.clone()
    };
    let numeric = |names: &[String]| -> Result<Vec<(String, usize)>> {
        names.iter().map(|n| Ok((n.clone(), position(n)?))).collect()
    };
    let aux_cols = numeric(&aux_names)?;
    let coord_cols = numeric(&schema.coords)?;
    let study_cols = numeric(&schema.study)?;
    let sigma_col = schema.sigma.as_deref().map(position).transpose()?;
    let stratum_col = schema.stratum.as_deref().map(position).transpose()?;

    let mut ids = Vec::new();
    let mut aux = vec![Vec::new(); aux_cols.len()];
    let mut coords = vec![Vec::new(); coord_cols.len()];
    let mut study = vec![Vec::new(); study_cols.len()];
    let mut sigma = Vec::new();
    let mut strata = Vec::new();

    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let cell = |j: usize| record.get(j).unwrap_or("").trim();
        let parse = |name: &str, j: usize| -> Result<f64> {
            let raw = cell(j);
            if raw.is_empty() {
                return Err(Error::MissingValue {
                    row,
                    column: name.to_string(),
                });
            }
            raw.parse::<f64>().map_err(|_| Error::NonNumeric {
                row,
                column: name.to_string(),
                value: raw.to_string(),
            })
        };
        ids.push(cell(id_col).to_string());
        for ((name, j), out) in aux_cols.iter().zip(aux.iter_mut()) {
            out.push(parse(name, *j)?);
        }
        for ((name, j), out) in coord_cols.iter().zip(coords.iter_mut()) {
            out.push(parse(name, *j)?);
        }
        for ((name, j), out) in study_cols.iter().zip(study.iter_mut()) {
            out.push(parse(name, *j)?);
        }
        if let Some(j) = sigma_col {
            sigma.push(parse("sigma", j)?);
        }
        if let Some(j) = stratum_col {
            strata.push(cell(j).to_string());
        }
    }
    if ids.is_empty() {
        return Err(Error::EmptyTable);
    }

    let mut builder = FrameBuilder::new(ids);
    for ((name, _), col) in aux_cols.into_iter().zip(aux) {
        builder = builder.aux(name, col);
    }
    for ((name, _), col) in coord_cols.into_iter().zip(coords) {
        builder = builder.coord(name, col);
    }
    for ((name, _), col) in study_cols.into_iter().zip(study) {
        builder = builder.study(name, col);
    }
    if sigma_col.is_some() {
        builder = builder.sigma(sigma);
    }
    if stratum_col.is_some() {
        builder = builder.strata(strata);
    }
    builder.build()
}

/// Writes a frame as CSV together with the schema that reloads it.
///
/// Numbers use the shortest representation that round-trips exactly.
pub fn write_frame<W: Write>(frame: &PopulationFrame, sink: W) -> Result<FrameSchema> {
    let mut schema = FrameSchema {
        id: "id".into(),
        aux: frame.aux_names.clone(),
        coords: frame.coord_names.clone(),
        stratum: frame.strata.as_ref().map(|_| "stratum".to_string()),
        sigma: frame.sigma.as_ref().map(|_| "sigma".to_string()),
        study: frame.study.iter().map(|(n, _)| n.clone()).collect(),
    };
    // Avoid header clashes with user column names.
    let taken: HashSet<&String> = schema
        .aux
        .iter()
        .chain(&schema.coords)
        .chain(&schema.study)
        .collect();
    while taken.contains(&schema.id) {
        schema.id.push('_');
    }
    for role in [&mut schema.stratum, &mut schema.sigma].into_iter().flatten() {
        while taken.contains(role) || *role == schema.id {
            role.push('_');
        }
    }

    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec![schema.id.clone()];
    header.extend(schema.aux.iter().cloned());
    header.extend(schema.coords.iter().cloned());
    header.extend(schema.stratum.iter().cloned());
    header.extend(schema.sigma.iter().cloned());
    header.extend(schema.study.iter().cloned());
    w.write_record(&header)?;
    for k in 0..frame.size() {
        let mut rec = vec![frame.unit_ids[k].clone()];
        rec.extend(frame.aux.row(k).iter().map(|x| x.to_string()));
        if let Some(c) = &frame.coords {
            rec.extend(c.row(k).iter().map(|x| x.to_string()));
        }
        if let Some(s) = &frame.strata {
            rec.push(s.labels[s.assignment[k]].clone());
        }
        if let Some(s) = &frame.sigma {
            rec.push(s[k].to_string());
        }
        rec.extend(frame.study.iter().map(|(_, v)| v[k].to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(schema)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridAux {
    ConstantOne,
    CoordsAndOne,
}

/// Square lattice of `side * side` units with coordinates `(x, y)`, `x` major.
pub fn grid_frame(side: usize, aux_spec: GridAux) -> Result<PopulationFrame> {
    if side < 1 {
        return Err(Error::invalid("grid side must be at least 1"));
    }
    let n = side * side;
    let xs: Vec<f64> = (0..n).map(|k| (k / side) as f64).collect();
    let ys: Vec<f64> = (0..n).map(|k| (k % side) as f64).collect();
    let mut b = FrameBuilder::with_size(n).aux("one", vec![1.0; n]);
    if aux_spec == GridAux::CoordsAndOne {
        b = b.aux("x", xs.clone()).aux("y", ys.clone());
    }
    b.coord("x", xs).coord("y", ys).build()
}

/// Labels grid units by square blocks of `block * block` cells.
pub fn grid_block_strata(side: usize, block: usize) -> Result<Vec<String>> {
    if block == 0 || !side.is_multiple_of(block) {
        return Err(Error::invalid(format!(
            "block size {block} does not divide grid side {side}"
        )));
    }
    let per_row = side / block;
    Ok((0..side * side)
        .map(|k| {
            let (x, y) = (k / side, k % side);
            (x / block * per_row + y / block).to_string()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn loads_three_rows() {
        let csv = "id,size\na,1.5\nb,2\nc,3\n";
        let frame = load_frame(csv.as_bytes(), &FrameSchema::all_aux("id")).unwrap();
        assert_eq!(frame.size(), 3);
        assert_eq!(frame.aux().ncols(), 1);
        assert_eq!(frame.aux()[(0, 0)], 1.5);
    }

    #[test]
    fn rejects_bad_tables() {
        let dup = "id,size\na,1\na,2\n";
        let err = load_frame(dup.as_bytes(), &FrameSchema::all_aux("id")).unwrap_err();
        assert!(err.to_string().contains("duplicate unit id"));

        let nonnum = "id,size\na,1\nb,many\n";
        assert!(matches!(
            load_frame(nonnum.as_bytes(), &FrameSchema::all_aux("id")),
            Err(Error::NonNumeric { row: 1, .. })
        ));

        let empty = "id,size\n";
        assert!(matches!(
            load_frame(empty.as_bytes(), &FrameSchema::all_aux("id")),
            Err(Error::EmptyTable)
        ));

        let missing = "id,size\na,\n";
        assert!(matches!(
            load_frame(missing.as_bytes(), &FrameSchema::all_aux("id")),
            Err(Error::MissingValue { .. })
        ));
    }

    #[test]
    fn roles_from_schema() {
        let csv = "name,x,y,region,s,income\nu1,0,0,north,1,10\nu2,0,1,south,2,20\n";
        let schema = FrameSchema {
            id: "name".into(),
            aux: vec!["income".into()],
            coords: vec!["x".into(), "y".into()],
            stratum: Some("region".into()),
            sigma: Some("s".into()),
            study: vec![],
        };
        let f = load_frame(csv.as_bytes(), &schema).unwrap();
        assert_eq!(f.coords().unwrap().ncols(), 2);
        assert_eq!(f.strata().unwrap().sizes(), vec![1, 1]);
        assert_eq!(f.sigma().unwrap(), &[1.0, 2.0]);
        assert_eq!(f.column("y").unwrap(), vec![0.0, 1.0]);

        let bad_sigma = "id,s\na,-1\n";
        let schema = FrameSchema {
            id: "id".into(),
            sigma: Some("s".into()),
            ..FrameSchema::default()
        };
        assert!(load_frame(bad_sigma.as_bytes(), &schema).is_err());
    }

    #[test]
    fn grid_frames() {
        let g = grid_frame(1, GridAux::ConstantOne).unwrap();
        assert_eq!(g.size(), 1);
        assert_eq!(g.coords().unwrap().row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0]);

        let g = grid_frame(2, GridAux::ConstantOne).unwrap();
        let c = g.coords().unwrap();
        let pts: Vec<(f64, f64)> = (0..4).map(|k| (c[(k, 0)], c[(k, 1)])).collect();
        assert_eq!(pts, vec![(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)]);

        let g = grid_frame(40, GridAux::CoordsAndOne).unwrap();
        assert_eq!((g.size(), g.aux().ncols()), (1600, 3));
        assert!(grid_frame(0, GridAux::ConstantOne).is_err());

        let labels = grid_block_strata(40, 8).unwrap();
        let strata = Strata::from_labels(&labels);
        assert_eq!(strata.count(), 25);
        assert!(strata.sizes().iter().all(|&s| s == 64));
    }

    #[test]
    fn grid_file_round_trip() {
        let g = grid_frame(40, GridAux::ConstantOne).unwrap();
        let mut buf = Vec::new();
        let schema = write_frame(&g, &mut buf).unwrap();
        let back = load_frame(buf.as_slice(), &schema).unwrap();
        assert_eq!(back.size(), 1600);
        assert_eq!(back.coords().unwrap().ncols(), 2);
    }

    proptest! {
        #[test]
        fn grid_size_is_side_squared(side in 1usize..=64) {
            prop_assert_eq!(grid_frame(side, GridAux::ConstantOne).unwrap().size(), side * side);
        }

        #[test]
        fn write_then_load_is_exact(
            rows in prop::collection::vec((any::<f64>(), -1e300f64..1e300, 0.0f64..1e6, 0u8..3), 1..20)
        ) {
            let n = rows.len();
            let aux: Vec<f64> = rows.iter().map(|r| if r.0.is_finite() { r.0 } else { 0.5 }).collect();
            let frame = FrameBuilder::with_size(n)
                .aux("a", aux)
                .coord("cx", rows.iter().map(|r| r.1).collect())
                .strata(rows.iter().map(|r| format!("h{}", r.3)).collect())
                .sigma(rows.iter().map(|r| r.2 + 1.0).collect())
                .build()
                .unwrap();
            let mut buf = Vec::new();
            let schema = write_frame(&frame, &mut buf).unwrap();
            let back = load_frame(buf.as_slice(), &schema).unwrap();
            prop_assert_eq!(back, frame);
        }
    }
}
