//! Grouped popularity time series: data model, ratio construction, gap
//! filling and sliding-window sample generation.

mod io;
mod synth;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taxonomy::Taxonomy;

pub use io::{
    load_corpus, CORPUS_HEADER, load_taxonomy_edges, parse_corpus, parse_taxonomy_edges, render_corpus,
    render_taxonomy_edges, save_corpus, save_taxonomy_edges, write_atomic,
};
pub use synth::{generate_synthetic_corpus, SynthConfig};

/// Number of age bands: 0–18, 18–25, 25–40, 40+.
pub const AGE_BANDS: usize = 4;
pub const GENDERS: usize = 2;

/// Maximum tolerated fraction of missing points in a series.
pub const MAX_MISSING_FRACTION: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorpusError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("element count {element} exceeds total count {total} at step {step}")]
    CountExceedsTotal { step: usize, element: u64, total: u64 },
    #[error("series has {missing} of {len} points missing (more than half)")]
    TooSparse { missing: usize, len: usize },
    #[error("series of length {len} is shorter than window {window}")]
    SeriesTooShort { len: usize, window: usize },
    #[error("series contains missing values; impute before windowing")]
    MissingValues,
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("duplicate series for group {group:?} and element `{element}`")]
    DuplicateSeries { group: UserGroup, element: String },
    #[error("value {value} outside [0, 1]")]
    ValueOutOfRange { value: f64 },
    #[error("element `{name}` declared with conflicting kinds")]
    ConflictingKind { name: String },
    #[error("grid period {found} does not match corpus grid period {expected}")]
    GridPeriodMismatch { expected: usize, found: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

/// Dense user-group key `(city, age band, gender)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UserGroup {
    pub city: usize,
    pub age_band: u8,
    pub gender: u8,
}

impl UserGroup {
    pub fn new(city: usize, age_band: u8, gender: u8) -> Result<Self, CorpusError> {
        if age_band as usize >= AGE_BANDS {
            return Err(CorpusError::InvalidConfig(format!(
                "age band {age_band} outside 0..{AGE_BANDS}"
            )));
        }
        if gender as usize >= GENDERS {
            return Err(CorpusError::InvalidConfig(format!(
                "gender {gender} outside 0..{GENDERS}"
            )));
        }
        Ok(Self {
            city,
            age_band,
            gender,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    Category,
    Attribute,
    AttributeValue,
}

impl ElementKind {
    pub const ALL: [ElementKind; 3] = [Self::Category, Self::Attribute, Self::AttributeValue];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Category => "category",
            Self::Attribute => "attribute",
            Self::AttributeValue => "attribute_value",
        }
    }
}

impl fmt::Display for ElementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ElementKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "category" => Ok(Self::Category),
            "attribute" => Ok(Self::Attribute),
            "attribute_value" => Ok(Self::AttributeValue),
            other => Err(format!("unknown element kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FashionElement {
    pub id: usize,
    pub name: String,
    pub kind: ElementKind,
}

/// Popularity of one element for one group on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub group: usize,
    pub element: usize,
    pub start_index: usize,
    pub values: Vec<Option<f64>>,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn missing(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    /// Values if none are missing.
    pub fn dense(&self) -> Option<Vec<f64>> {
        self.values.iter().copied().collect()
    }

    pub fn imputed(&self) -> Result<TimeSeries, CorpusError> {
        Ok(TimeSeries {
            values: impute_missing(&self.values)?.into_iter().map(Some).collect(),
            ..self.clone()
        })
    }
}

/// Role of a window within its source series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleRole {
    Train,
    Validation,
    Test,
}

/// One `(input, target)` window.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub series_id: usize,
    /// Offset of the first input point within the source series.
    pub offset: usize,
    pub input: Vec<f64>,
    pub target: Vec<f64>,
    /// Within-year positions of all `T + T'` points.
    pub positions: Vec<usize>,
    pub group: usize,
    pub element: usize,
    pub role: SampleRole,
}

impl Sample {
    /// Input followed by target.
    pub fn full(&self) -> Vec<f64> {
        let mut v = self.input.clone();
        v.extend_from_slice(&self.target);
        v
    }
}

/// Sliding-window geometry: `T` input points, `T'` forecast points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub input_len: usize,
    pub horizon: usize,
    pub stride: usize,
}

impl WindowSpec {
    pub fn new(input_len: usize, horizon: usize, stride: usize) -> Result<Self, CorpusError> {
        if input_len == 0 || horizon == 0 {
            return Err(CorpusError::InvalidWindow(
                "input length and horizon must be positive".into(),
            ));
        }
        if stride == 0 {
            return Err(CorpusError::InvalidWindow("stride must be at least 1".into()));
        }
        Ok(Self {
            input_len,
            horizon,
            stride,
        })
    }

    pub fn total(&self) -> usize {
        self.input_len + self.horizon
    }

    /// `⌊(L − (T+T′))/stride⌋ + 1`, or 0 when the series is too short.
    pub fn sample_count(&self, len: usize) -> usize {
        if len < self.total() {
            0
        } else {
            (len - self.total()) / self.stride + 1
        }
    }
}

/// `y_t = N_t^{g,f} / N_t^g`; steps with no observations are missing.
pub fn popularity_series(
    element_counts: &[u64],
    total_counts: &[u64],
) -> Result<Vec<Option<f64>>, CorpusError> {
    if element_counts.len() != total_counts.len() {
        return Err(CorpusError::LengthMismatch {
            left: element_counts.len(),
            right: total_counts.len(),
        });
    }
    element_counts
        .iter()
        .zip(total_counts)
        .enumerate()
        .map(|(step, (&e, &n))| {
            if n == 0 {
                Ok(None)
            } else if e > n {
                Err(CorpusError::CountExceedsTotal {
                    step,
                    element: e,
                    total: n,
                })
            } else {
                Ok(Some(e as f64 / n as f64))
            }
        })
        .collect()
}

/// Fills interior gaps linearly and edge gaps with the nearest observation.
pub fn impute_missing(values: &[Option<f64>]) -> Result<Vec<f64>, CorpusError> {
    let missing = values.iter().filter(|v| v.is_none()).count();
    if values.is_empty() || missing as f64 > MAX_MISSING_FRACTION * values.len() as f64 {
        return Err(CorpusError::TooSparse {
            missing,
            len: values.len(),
        });
    }
    let observed: Vec<(usize, f64)> = values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|x| (i, x)))
        .collect();
    let mut out = Vec::with_capacity(values.len());
    let mut next = 0usize;
    for (i, v) in values.iter().enumerate() {
        if let Some(x) = v {
            out.push(*x);
            next += 1;
            continue;
        }
        // observed[next] is the first observation after i
        let value = match (next.checked_sub(1).map(|k| observed[k]), observed.get(next)) {
            (Some((i0, y0)), Some(&(i1, y1))) => {
                let frac = (i - i0) as f64 / (i1 - i0) as f64;
                y0 + (y1 - y0) * frac
            }
            (Some((_, y0)), None) => y0,
            (None, Some(&(_, y1))) => y1,
            (None, None) => unreachable!("at least one observation exists"),
        };
        out.push(value);
    }
    Ok(out)
}

/// Position of grid index `t` within the annual cycle.
pub fn timestep_position(t: usize, grid_period: usize) -> usize {
    t % grid_period.max(1)
}

/// Cuts a dense series into sliding windows.
///
/// Windows are anchored at the end of the series, so the last window always
/// ends at the final point; it is flagged [`SampleRole::Test`], the one
/// before it [`SampleRole::Validation`], and all earlier ones
/// [`SampleRole::Train`]. Samples are returned in chronological order.
pub fn make_samples(
    series_id: usize,
    series: &TimeSeries,
    window: WindowSpec,
    grid_period: usize,
) -> Result<Vec<Sample>, CorpusError> {
    let values = series.dense().ok_or(CorpusError::MissingValues)?;
    let len = values.len();
    let count = window.sample_count(len);
    if count == 0 {
        return Err(CorpusError::SeriesTooShort {
            len,
            window: window.total(),
        });
    }
    let last_offset = len - window.total();
    let mut samples = Vec::with_capacity(count);
    for k in (0..count).rev() {
        let offset = last_offset - k * window.stride;
        let role = match k {
            0 => SampleRole::Test,
            1 => SampleRole::Validation,
            _ => SampleRole::Train,
        };
        let split = offset + window.input_len;
        samples.push(Sample {
            series_id,
            offset,
            input: values[offset..split].to_vec(),
            target: values[split..offset + window.total()].to_vec(),
            positions: (0..window.total())
                .map(|i| timestep_position(series.start_index + offset + i, grid_period))
                .collect(),
            group: series.group,
            element: series.element,
            role,
        });
    }
    Ok(samples)
}

/// A set of grouped series on one grid, optionally with an element taxonomy.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub cities: Vec<String>,
    pub groups: Vec<UserGroup>,
    pub elements: Vec<FashionElement>,
    pub taxonomy: Option<Taxonomy>,
    pub series: Vec<TimeSeries>,
    pub grid_period: usize,
}

impl Corpus {
    pub fn element_id(&self, name: &str) -> Option<usize> {
        self.elements.iter().position(|e| e.name == name)
    }

    pub fn city_id(&self, name: &str) -> Option<usize> {
        self.cities.iter().position(|c| c == name)
    }

    pub fn group_id(&self, group: &UserGroup) -> Option<usize> {
        self.groups.iter().position(|g| g == group)
    }

    pub fn series_for(&self, group: usize, element: usize) -> Option<&TimeSeries> {
        self.series
            .iter()
            .find(|s| s.group == group && s.element == element)
    }

    pub fn group_label(&self, group: usize) -> String {
        let g = &self.groups[group];
        format!("{}/{}/{}", self.cities[g.city], g.age_band, g.gender)
    }

    pub fn kinds(&self) -> Vec<ElementKind> {
        self.elements.iter().map(|e| e.kind).collect()
    }

    /// Builds and attaches a taxonomy from `(parent, child)` name pairs.
    pub fn attach_taxonomy(
        &mut self,
        edges: &[(String, String)],
    ) -> Result<(), crate::taxonomy::TaxonomyError> {
        self.taxonomy = Some(crate::taxonomy::build_taxonomy(edges, &self.elements)?);
        Ok(())
    }
}

/// Incremental corpus construction with dense, first-seen id assignment.
#[derive(Debug, Clone)]
pub struct CorpusBuilder {
    cities: Vec<String>,
    city_ids: HashMap<String, usize>,
    groups: Vec<UserGroup>,
    group_ids: HashMap<UserGroup, usize>,
    elements: Vec<FashionElement>,
    element_ids: HashMap<String, usize>,
    series: Vec<TimeSeries>,
    keys: HashMap<(usize, usize), usize>,
    grid_period: usize,
}

impl CorpusBuilder {
    pub fn new(grid_period: usize) -> Result<Self, CorpusError> {
        if grid_period == 0 {
            return Err(CorpusError::InvalidConfig("grid period must be positive".into()));
        }
        Ok(Self {
            cities: Vec::new(),
            city_ids: HashMap::new(),
            groups: Vec::new(),
            group_ids: HashMap::new(),
            elements: Vec::new(),
            element_ids: HashMap::new(),
            series: Vec::new(),
            keys: HashMap::new(),
            grid_period,
        })
    }

    pub fn grid_period(&self) -> usize {
        self.grid_period
    }

    pub fn city(&mut self, name: &str) -> usize {
        if let Some(&id) = self.city_ids.get(name) {
            return id;
        }
        let id = self.cities.len();
        self.cities.push(name.to_string());
        self.city_ids.insert(name.to_string(), id);
        id
    }

    pub fn group(&mut self, city: &str, age_band: u8, gender: u8) -> Result<usize, CorpusError> {
        let city = self.city(city);
        let g = UserGroup::new(city, age_band, gender)?;
        if let Some(&id) = self.group_ids.get(&g) {
            return Ok(id);
        }
        let id = self.groups.len();
        self.groups.push(g);
        self.group_ids.insert(g, id);
        Ok(id)
    }

    pub fn element(&mut self, name: &str, kind: ElementKind) -> Result<usize, CorpusError> {
        if let Some(&id) = self.element_ids.get(name) {
            if self.elements[id].kind != kind {
                return Err(CorpusError::ConflictingKind { name: name.into() });
            }
            return Ok(id);
        }
        let id = self.elements.len();
        self.elements.push(FashionElement {
            id,
            name: name.to_string(),
            kind,
        });
        self.element_ids.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn push_series(
        &mut self,
        group: usize,
        element: usize,
        start_index: usize,
        values: Vec<Option<f64>>,
    ) -> Result<usize, CorpusError> {
        if let Some(bad) = values.iter().flatten().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(CorpusError::ValueOutOfRange { value: *bad });
        }
        if self.keys.contains_key(&(group, element)) {
            return Err(CorpusError::DuplicateSeries {
                group: self.groups[group],
                element: self.elements[element].name.clone(),
            });
        }
        let id = self.series.len();
        self.keys.insert((group, element), id);
        self.series.push(TimeSeries {
            group,
            element,
            start_index,
            values,
        });
        Ok(id)
    }

    pub fn elements(&self) -> &[FashionElement] {
        &self.elements
    }

    pub fn build(self) -> Corpus {
        Corpus {
            cities: self.cities,
            groups: self.groups,
            elements: self.elements,
            taxonomy: None,
            series: self.series,
            grid_period: self.grid_period,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn popularity_ratios() {
        let y = popularity_series(&[5, 0, 2], &[10, 10, 10]).unwrap();
        assert_eq!(y, vec![Some(0.5), Some(0.0), Some(0.2)]);
        assert_eq!(popularity_series(&[1], &[0]).unwrap(), vec![None]);
        assert_eq!(
            popularity_series(&[4], &[3]),
            Err(CorpusError::CountExceedsTotal { step: 0, element: 4, total: 3 })
        );
        assert!(matches!(
            popularity_series(&[1, 2], &[3]),
            Err(CorpusError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn five_years_of_half_months() {
        let counts: Vec<u64> = (0..120).map(|i| i % 7).collect();
        let totals = vec![10u64; 120];
        assert_eq!(popularity_series(&counts, &totals).unwrap().len(), 120);
    }

    #[test]
    fn imputation_cases() {
        let filled = impute_missing(&[Some(0.1), None, Some(0.3)]).unwrap();
        assert!((filled[1] - 0.2).abs() < 1e-15);
        assert_eq!(
            impute_missing(&[None, Some(0.4), Some(0.4)]).unwrap(),
            vec![0.4, 0.4, 0.4]
        );
        assert_eq!(
            impute_missing(&[Some(0.4), Some(0.2), None]).unwrap(),
            vec![0.4, 0.2, 0.2]
        );
        let mut sparse = vec![Some(0.5); 120];
        for v in sparse.iter_mut().take(61) {
            *v = None;
        }
        assert_eq!(
            impute_missing(&sparse),
            Err(CorpusError::TooSparse { missing: 61, len: 120 })
        );
        sparse[60] = Some(0.5);
        assert!(impute_missing(&sparse).is_ok());
    }

    #[test]
    fn window_counts() {
        let w = WindowSpec::new(48, 12, 1).unwrap();
        assert_eq!(w.sample_count(120), 61);
        assert_eq!(w.sample_count(60), 1);
        assert_eq!(w.sample_count(59), 0);
        assert!(WindowSpec::new(48, 12, 0).is_err());
    }

    #[test]
    fn samples_are_contiguous_and_flagged() {
        let series = TimeSeries {
            group: 0,
            element: 0,
            start_index: 25,
            values: (0..20).map(|i| Some(i as f64 / 20.0)).collect(),
        };
        let w = WindowSpec::new(6, 3, 2).unwrap();
        let s = make_samples(7, &series, w, 24).unwrap();
        assert_eq!(s.len(), w.sample_count(20));
        let last = s.last().unwrap();
        assert_eq!(last.role, SampleRole::Test);
        assert_eq!(last.offset + 9, 20);
        assert_eq!(s[s.len() - 2].role, SampleRole::Validation);
        assert_eq!(s[0].role, SampleRole::Train);
        for smp in &s {
            let full = smp.full();
            for (k, v) in full.iter().enumerate() {
                assert_eq!(*v, ((smp.offset + k) as f64) / 20.0);
            }
            assert_eq!(smp.positions[0], (25 + smp.offset) % 24);
        }
        assert!(matches!(
            make_samples(0, &series, WindowSpec::new(15, 6, 1).unwrap(), 24),
            Err(CorpusError::SeriesTooShort { .. })
        ));
    }

    #[test]
    fn single_window_when_length_matches() {
        let series = TimeSeries {
            group: 0,
            element: 0,
            start_index: 0,
            values: vec![Some(0.1); 60],
        };
        let s = make_samples(0, &series, WindowSpec::new(48, 12, 1).unwrap(), 24).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].role, SampleRole::Test);
    }

    #[test]
    fn positions_wrap() {
        assert_eq!(timestep_position(0, 24), 0);
        assert_eq!(timestep_position(25, 24), 1);
        assert_eq!(timestep_position(52, 52), 0);
    }

    #[test]
    fn builder_rejects_duplicates_and_range() {
        let mut b = CorpusBuilder::new(24).unwrap();
        let g = b.group("paris", 1, 1).unwrap();
        let e = b.element("dress", ElementKind::Category).unwrap();
        b.push_series(g, e, 0, vec![Some(0.2)]).unwrap();
        assert!(matches!(
            b.push_series(g, e, 0, vec![Some(0.2)]),
            Err(CorpusError::DuplicateSeries { .. })
        ));
        let e2 = b.element("skirt", ElementKind::Category).unwrap();
        assert!(matches!(
            b.push_series(g, e2, 0, vec![Some(1.5)]),
            Err(CorpusError::ValueOutOfRange { .. })
        ));
        assert!(b.group("paris", 4, 0).is_err());
        assert!(matches!(
            b.element("dress", ElementKind::Attribute),
            Err(CorpusError::ConflictingKind { .. })
        ));
    }
}
