//! Longitudinal containers for the two-source setting: a population registry
//! (auxiliary covariates and survival for every unit) and a sampled cohort
//! (responses and observed outcomes under monotone dropout).
//!
//! Both frames are read from long-format CSV, one row per `(unit_id, wave)`:
//!
//! ```text
//! unit_id,wave,alive,[responded,outcome,][age,]<covariates...>
//! ```
//!
//! An empty cell is a null. Covariates are only required for the waves the
//! [`WaveSchema`] lists them under, and only while the unit is alive. Truncating
//! events other than death (e.g. dementia onset) must already be folded into
//! `alive` by whoever prepared the file.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column layout per wave.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveSchema {
    /// Number of waves, `T + 1`.
    pub waves: usize,
    /// Covariate columns observed at each wave; `covariates[t]` may be empty
    /// for waves that carry no new auxiliary information.
    pub covariates: Vec<Vec<String>>,
    /// Name of the age column, if the files carry one.
    #[serde(default)]
    pub age: Option<String>,
}

impl WaveSchema {
    pub fn new(covariates: Vec<Vec<String>>, age: Option<String>) -> Result<Self> {
        let schema = Self {
            waves: covariates.len(),
            covariates,
            age,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let schema: WaveSchema = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line() as u64,
            message: e.to_string(),
        })?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        if self.waves == 0 {
            return Err(Error::Schema("wave count must be at least 1".into()));
        }
        if self.covariates.len() != self.waves {
            return Err(Error::Schema(format!(
                "{} covariate lists for {} waves",
                self.covariates.len(),
                self.waves
            )));
        }
        for (t, cols) in self.covariates.iter().enumerate() {
            let mut seen = std::collections::HashSet::new();
            for c in cols {
                if !seen.insert(c) {
                    return Err(Error::Schema(format!("duplicate column {c:?} at wave {t}")));
                }
                if RESERVED.contains(&c.as_str()) || Some(c) == self.age.as_ref() {
                    return Err(Error::Schema(format!("column {c:?} is reserved")));
                }
            }
        }
        Ok(())
    }

    /// Last wave index `T`.
    pub fn last_wave(&self) -> usize {
        self.waves - 1
    }

    /// Distinct covariate columns in order of first appearance.
    pub fn all_covariates(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for cols in &self.covariates {
            for c in cols {
                if !out.contains(c) {
                    out.push(c.clone());
                }
            }
        }
        out
    }

    /// Covariate names of the history `x̄_t`, each suffixed with its wave.
    pub fn history_names(&self, t: usize) -> Vec<String> {
        (0..=t)
            .flat_map(|k| self.covariates[k].iter().map(move |c| format!("{c}@{k}")))
            .collect()
    }
}

const RESERVED: [&str; 5] = ["unit_id", "wave", "alive", "responded", "outcome"];

/// Per-unit, per-wave auxiliary data shared by both frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub schema: WaveSchema,
    pub unit_ids: Vec<String>,
    /// `alive[i][t]`
    pub alive: Vec<Vec<bool>>,
    /// `age[i][t]`; all `None` without an age column.
    pub age: Vec<Vec<Option<f64>>>,
    /// `covariates[t][i]` holds the wave-`t` vector (schema order), `None`
    /// after truncation.
    pub covariates: Vec<Vec<Option<Vec<f64>>>>,
}

impl Panel {
    pub fn n_units(&self) -> usize {
        self.unit_ids.len()
    }

    pub fn waves(&self) -> usize {
        self.schema.waves
    }

    pub fn is_alive(&self, i: usize, t: usize) -> bool {
        self.alive[i][t]
    }

    pub fn survivors(&self, t: usize) -> usize {
        self.alive.iter().filter(|a| a[t]).count()
    }

    /// Wave-`t` covariates of unit `i`; empty slice when the wave has none.
    pub fn covariates_at(&self, i: usize, t: usize) -> Option<&[f64]> {
        self.covariates[t][i].as_deref()
    }

    /// Concatenated covariate history `x̄_it`, or `None` if any wave is absent.
    pub fn covariate_history(&self, i: usize, t: usize, out: &mut Vec<f64>) -> bool {
        for k in 0..=t {
            match self.covariates_at(i, k) {
                Some(x) => out.extend_from_slice(x),
                None => return false,
            }
        }
        true
    }

    pub fn baseline_column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.schema.covariates[0].iter().position(|c| c == name)?;
        Some(
            self.covariates[0]
                .iter()
                .map(|x| x.as_ref().map(|v| v[j]).unwrap_or(f64::NAN))
                .collect(),
        )
    }

    fn validate(&self) -> Result<()> {
        for (i, id) in self.unit_ids.iter().enumerate() {
            if !self.alive[i][0] {
                return Err(invariant(id, 0, "unit not alive at baseline"));
            }
            for t in 1..self.waves() {
                if self.alive[i][t] && !self.alive[i][t - 1] {
                    return Err(invariant(id, t, "non-monotone survival"));
                }
            }
        }
        Ok(())
    }
}

fn invariant(unit: &str, wave: usize, msg: &str) -> Error {
    Error::Invariant {
        unit_id: unit.to_string(),
        wave,
        message: msg.to_string(),
    }
}

/// All `N` units of the target population.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationFrame {
    pub panel: Panel,
}

/// The sampled cohort with response indicators and observed outcomes `y*`.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortFrame {
    pub panel: Panel,
    /// `responded[i][t]`
    pub responded: Vec<Vec<bool>>,
    /// `outcome[i][t]`, present iff responded (and therefore alive).
    pub outcome: Vec<Vec<Option<f64>>>,
}

impl PopulationFrame {
    pub fn new(panel: Panel) -> Result<Self> {
        panel.validate()?;
        Ok(Self { panel })
    }

    pub fn n_units(&self) -> usize {
        self.panel.n_units()
    }
}

impl CohortFrame {
    pub fn new(panel: Panel, responded: Vec<Vec<bool>>, outcome: Vec<Vec<Option<f64>>>) -> Result<Self> {
        panel.validate()?;
        let frame = Self {
            panel,
            responded,
            outcome,
        };
        frame.validate()?;
        Ok(frame)
    }

    pub fn n_units(&self) -> usize {
        self.panel.n_units()
    }

    fn validate(&self) -> Result<()> {
        let waves = self.panel.waves();
        for (i, id) in self.panel.unit_ids.iter().enumerate() {
            let r = &self.responded[i];
            if !r[0] {
                return Err(invariant(id, 0, "sampled unit did not respond at baseline"));
            }
            for t in 0..waves {
                if t > 0 && r[t] && !r[t - 1] {
                    return Err(invariant(id, t, "non-monotone response"));
                }
                if r[t] && !self.panel.alive[i][t] {
                    return Err(invariant(id, t, "response after truncation"));
                }
                match (r[t], self.outcome[i][t].is_some()) {
                    (true, false) => return Err(invariant(id, t, "responded but outcome missing")),
                    (false, true) => return Err(invariant(id, t, "outcome present without response")),
                    _ => {}
                }
            }
        }
        Ok(())
    }

    /// Units with `r_ik = 1` for all `k <= t` and `s_it = 1`.
    pub fn responders_at(&self, t: usize) -> Result<Vec<usize>> {
        if t >= self.panel.waves() {
            return Err(Error::config(format!(
                "wave {t} out of range (0..{})",
                self.panel.waves() - 1
            )));
        }
        Ok((0..self.n_units())
            .filter(|&i| self.responded[i][..=t].iter().all(|&r| r) && self.panel.alive[i][t])
            .collect())
    }

    /// Observed outcome history `ȳ*_{i,t-1}` of a wave-`t-1` responder.
    pub fn outcome_history(&self, i: usize, t: usize) -> Vec<f64> {
        (0..t).map(|k| self.outcome[i][k].expect("responder history")).collect()
    }
}

pub fn load_population(path: &Path, schema: &WaveSchema) -> Result<PopulationFrame> {
    let raw = read_long_csv(path, schema, false)?;
    PopulationFrame::new(raw.panel)
}

pub fn load_cohort(path: &Path, schema: &WaveSchema) -> Result<CohortFrame> {
    let raw = read_long_csv(path, schema, true)?;
    CohortFrame::new(raw.panel, raw.responded, raw.outcome)
}

struct RawFrame {
    panel: Panel,
    responded: Vec<Vec<bool>>,
    outcome: Vec<Vec<Option<f64>>>,
}

struct Row {
    line: u64,
    alive: bool,
    responded: bool,
    outcome: Option<f64>,
    age: Option<f64>,
    values: Vec<Option<f64>>,
}

fn read_long_csv(path: &Path, schema: &WaveSchema, cohort: bool) -> Result<RawFrame> {
    schema.validate()?;
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => parse_err(1, format!("{other:?}")),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column {name:?}")))
    };
    let c_unit = col("unit_id")?;
    let c_wave = col("wave")?;
    let c_alive = col("alive")?;
    let (c_resp, c_out) = if cohort {
        (Some(col("responded")?), Some(col("outcome")?))
    } else {
        (None, None)
    };
    let c_age = schema.age.as_deref().map(col).transpose()?;
    let names = schema.all_covariates();
    let c_cov: Vec<usize> = names.iter().map(|n| col(n)).collect::<Result<_>>()?;

    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, BTreeMap<usize, Row>> = HashMap::new();
    for (k, rec) in reader.records().enumerate() {
        let line = k as u64 + 2;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        let field = |c: usize| rec.get(c).unwrap_or("").trim();
        let opt_num = |c: usize, what: &str| -> Result<Option<f64>> {
            let s = field(c);
            if s.is_empty() {
                return Ok(None);
            }
            s.parse::<f64>()
                .map(Some)
                .map_err(|_| parse_err(line, format!("bad {what} value {s:?}")))
        };
        let flag = |c: usize, what: &str| -> Result<bool> {
            match field(c) {
                "1" | "true" | "TRUE" => Ok(true),
                "0" | "false" | "FALSE" => Ok(false),
                s => Err(parse_err(line, format!("bad {what} flag {s:?}"))),
            }
        };
        let unit = field(c_unit).to_string();
        if unit.is_empty() {
            return Err(parse_err(line, "empty unit_id".into()));
        }
        let wave: usize = field(c_wave)
            .parse()
            .map_err(|_| parse_err(line, format!("bad wave {:?}", field(c_wave))))?;
        if wave >= schema.waves {
            return Err(parse_err(line, format!("wave {wave} beyond schema ({} waves)", schema.waves)));
        }
        let row = Row {
            line,
            alive: flag(c_alive, "alive")?,
            responded: c_resp.map(|c| flag(c, "responded")).transpose()?.unwrap_or(false),
            outcome: c_out.map(|c| opt_num(c, "outcome")).transpose()?.flatten(),
            age: c_age.map(|c| opt_num(c, "age")).transpose()?.flatten(),
            values: c_cov
                .iter()
                .zip(&names)
                .map(|(&c, n)| opt_num(c, n))
                .collect::<Result<_>>()?,
        };
        let entry = rows.entry(unit.clone()).or_insert_with(|| {
            order.push(unit.clone());
            BTreeMap::new()
        });
        if entry.insert(wave, row).is_some() {
            return Err(parse_err(line, format!("duplicate row for unit {unit} wave {wave}")));
        }
    }

    let n = order.len();
    let waves = schema.waves;
    let mut alive = vec![vec![false; waves]; n];
    let mut age = vec![vec![None; waves]; n];
    let mut responded = vec![vec![false; waves]; n];
    let mut outcome = vec![vec![None; waves]; n];
    let mut covariates: Vec<Vec<Option<Vec<f64>>>> = vec![vec![None; n]; waves];
    let index: Vec<Vec<usize>> = schema
        .covariates
        .iter()
        .map(|cols| cols.iter().map(|c| names.iter().position(|n| n == c).unwrap()).collect())
        .collect();

    for (i, unit) in order.iter().enumerate() {
        let by_wave = &rows[unit];
        for t in 0..waves {
            let row = by_wave.get(&t).ok_or_else(|| invariant(unit, t, "missing row for wave"))?;
            alive[i][t] = row.alive;
            age[i][t] = row.age;
            responded[i][t] = row.responded;
            outcome[i][t] = row.outcome;
            if row.alive {
                let mut v = Vec::with_capacity(index[t].len());
                for &j in &index[t] {
                    match row.values[j] {
                        Some(x) => v.push(x),
                        None => {
                            return Err(Error::Schema(format!(
                                "line {}: unit {unit} alive at wave {t} but column {:?} is empty",
                                row.line, names[j]
                            )))
                        }
                    }
                }
                covariates[t][i] = Some(v);
            }
        }
    }

    Ok(RawFrame {
        panel: Panel {
            schema: schema.clone(),
            unit_ids: order,
            alive,
            age,
            covariates,
        },
        responded,
        outcome,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_long_csv(path: &Path, panel: &Panel, cohort: Option<(&[Vec<bool>], &[Vec<Option<f64>>])>) -> Result<()> {
    let names = panel.schema.all_covariates();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Other(format!("{}: {e}", path.display())))?;
    let mut header: Vec<String> = vec!["unit_id".into(), "wave".into(), "alive".into()];
    if cohort.is_some() {
        header.push("responded".into());
        header.push("outcome".into());
    }
    if let Some(a) = &panel.schema.age {
        header.push(a.clone());
    }
    header.extend(names.iter().cloned());
    let write_err = |e: csv::Error| Error::Other(format!("{}: {e}", path.display()));
    w.write_record(&header).map_err(write_err)?;
    for i in 0..panel.n_units() {
        for t in 0..panel.waves() {
            let mut rec = vec![
                panel.unit_ids[i].clone(),
                t.to_string(),
                (panel.alive[i][t] as u8).to_string(),
            ];
            if let Some((resp, out)) = cohort {
                rec.push((resp[i][t] as u8).to_string());
                rec.push(fmt_opt(out[i][t]));
            }
            if panel.schema.age.is_some() {
                rec.push(fmt_opt(panel.age[i][t]));
            }
            let x = panel.covariates[t][i].as_ref();
            for n in &names {
                let v = panel.schema.covariates[t]
                    .iter()
                    .position(|c| c == n)
                    .and_then(|j| x.map(|x| x[j]));
                rec.push(fmt_opt(v));
            }
            w.write_record(&rec).map_err(write_err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_population(path: &Path, frame: &PopulationFrame) -> Result<()> {
    write_long_csv(path, &frame.panel, None)
}

pub fn write_cohort(path: &Path, frame: &CohortFrame) -> Result<()> {
    write_long_csv(path, &frame.panel, Some((&frame.responded, &frame.outcome)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn schema_t1() -> WaveSchema {
        WaveSchema::new(vec![vec!["x1".into()], vec!["x1".into()]], None).unwrap()
    }

    fn write(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn minimal_population_loads() {
        let f = write("unit_id,wave,alive,x1\na,0,1,0.1\na,1,1,0.2\nb,0,1,1\nb,1,1,2\nc,0,1,3\nc,1,1,4\n");
        let pop = load_population(f.path(), &schema_t1()).unwrap();
        assert_eq!(pop.n_units(), 3);
        assert_eq!(pop.panel.covariates_at(1, 1), Some(&[2.0][..]));
    }

    #[test]
    fn non_monotone_survival_is_rejected() {
        let schema = WaveSchema::new(vec![vec![], vec![], vec![]], None).unwrap();
        let f = write("unit_id,wave,alive\na,0,1\na,1,0\na,2,1\n");
        let err = load_population(f.path(), &schema).unwrap_err();
        assert!(err.to_string().contains("non-monotone survival"), "{err}");
    }

    #[test]
    fn missing_covariate_for_alive_unit_names_column() {
        let f = write("unit_id,wave,alive,x1\na,0,1,0.1\na,1,1,\n");
        let err = load_population(f.path(), &schema_t1()).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
        assert!(err.to_string().contains("\"x1\""), "{err}");
    }

    #[test]
    fn missing_column_is_schema_error() {
        let f = write("unit_id,wave,alive\na,0,1\na,1,1\n");
        let err = load_population(f.path(), &schema_t1()).unwrap_err();
        assert!(err.to_string().contains("missing column \"x1\""), "{err}");
    }

    #[test]
    fn malformed_row_is_parse_error() {
        let f = write("unit_id,wave,alive,x1\na,0,1,zz\n");
        assert!(matches!(load_population(f.path(), &schema_t1()), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn dead_units_may_omit_covariates() {
        let f = write("unit_id,wave,alive,x1\na,0,1,0.1\na,1,0,\n");
        let pop = load_population(f.path(), &schema_t1()).unwrap();
        assert_eq!(pop.panel.covariates_at(0, 1), None);
    }

    fn cohort_schema() -> WaveSchema {
        WaveSchema::new(vec![vec![]; 4], None).unwrap()
    }

    fn cohort_csv(r: [u8; 4], s: [u8; 4]) -> String {
        let mut out = String::from("unit_id,wave,alive,responded,outcome\n");
        for t in 0..4 {
            let y = if r[t] == 1 { "1.5" } else { "" };
            out.push_str(&format!("u,{t},{},{},{y}\n", s[t], r[t]));
        }
        out
    }

    #[test]
    fn cohort_dropout_is_valid() {
        let f = write(&cohort_csv([1, 1, 0, 0], [1; 4]));
        let c = load_cohort(f.path(), &cohort_schema()).unwrap();
        assert_eq!(c.outcome[0][1], Some(1.5));
        assert_eq!(c.outcome[0][2], None);
    }

    #[test]
    fn cohort_non_monotone_response_is_rejected() {
        let f = write(&cohort_csv([1, 0, 1, 0], [1; 4]));
        let err = load_cohort(f.path(), &cohort_schema()).unwrap_err();
        assert!(err.to_string().contains("non-monotone response"));
    }

    #[test]
    fn cohort_response_after_death_is_rejected() {
        let f = write(&cohort_csv([1, 1, 0, 0], [1, 0, 0, 0]));
        let err = load_cohort(f.path(), &cohort_schema()).unwrap_err();
        assert!(err.to_string().contains("response after truncation"), "{err}");
    }

    fn cohort_from_histories(r: &[[bool; 2]], s: &[[bool; 2]]) -> CohortFrame {
        let n = r.len();
        let schema = WaveSchema::new(vec![vec![], vec![]], None).unwrap();
        let panel = Panel {
            schema,
            unit_ids: (0..n).map(|i| format!("u{i}")).collect(),
            alive: s.iter().map(|a| a.to_vec()).collect(),
            age: vec![vec![None; 2]; n],
            covariates: vec![vec![Some(vec![]); n]; 2],
        };
        let outcome = r
            .iter()
            .map(|h| h.iter().map(|&x| x.then_some(0.0)).collect())
            .collect();
        CohortFrame::new(panel, r.iter().map(|a| a.to_vec()).collect(), outcome).unwrap()
    }

    #[test]
    fn responders_at_follows_histories() {
        let c = cohort_from_histories(
            &[[true, true], [true, false], [true, true]],
            &[[true, true], [true, true], [true, true]],
        );
        assert_eq!(c.responders_at(1).unwrap(), vec![0, 2]);
        assert_eq!(c.responders_at(0).unwrap(), vec![0, 1, 2]);
        assert!(c.responders_at(2).is_err());

        let dead = cohort_from_histories(&[[true, true], [true, false]], &[[true, true], [true, false]]);
        assert_eq!(dead.responders_at(1).unwrap(), vec![0]);
    }
}
