//! Campaign files, the runner and results.csv.

use std::collections::HashSet;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::wsp::wsp_unit;
use super::XdesignError;
use crate::codec::SchemeConfig;
use crate::harness::{
    run_experiment, ExperimentConfig, Mode, RunMetrics, TrafficProfile, TransportSettings,
};
use crate::netem::{GeParams, LossModel, PathSpec};
use crate::sched::SchedulerKind;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SpaceLoss {
    #[default]
    GilbertElliott,
    /// k = 1, h = 0.
    Simplified,
    Uniform,
}

/// Closed sampling ranges. Uniform-loss spaces use `uniform_rate` and
/// `owd_ms` only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamSpace {
    pub loss: SpaceLoss,
    /// 2 adds a second path.
    pub paths: usize,
    /// Second path copies the first path's parameters.
    pub homogeneous: bool,
    pub p: [f64; 2],
    pub r: [f64; 2],
    pub k_good: [f64; 2],
    pub h_bad: [f64; 2],
    pub uniform_rate: [f64; 2],
    pub owd_ms: [f64; 2],
}

impl Default for ParamSpace {
    fn default() -> Self {
        ParamSpace {
            loss: SpaceLoss::GilbertElliott,
            paths: 1,
            homogeneous: false,
            p: [0.0, 0.01],
            r: [0.025, 0.5],
            k_good: [0.97, 1.0],
            h_bad: [0.0, 0.4],
            uniform_rate: [0.0, 0.03],
            owd_ms: [0.0, 100.0],
        }
    }
}

fn lerp(range: [f64; 2], u: f64) -> f64 {
    range[0] + (range[1] - range[0]) * u
}

impl ParamSpace {
    pub fn validate(&self) -> Result<(), XdesignError> {
        if !(1..=2).contains(&self.paths) {
            return Err(XdesignError::Config(format!("paths = {}", self.paths)));
        }
        for (name, r) in [
            ("p", self.p),
            ("r", self.r),
            ("k_good", self.k_good),
            ("h_bad", self.h_bad),
            ("uniform_rate", self.uniform_rate),
        ] {
            if !(0.0 <= r[0] && r[0] <= r[1] && r[1] <= 1.0) {
                return Err(XdesignError::Config(format!("{name} range {r:?}")));
            }
        }
        if !(0.0 <= self.owd_ms[0] && self.owd_ms[0] <= self.owd_ms[1]) {
            return Err(XdesignError::Config(format!("owd range {:?}", self.owd_ms)));
        }
        Ok(())
    }

    fn path_dims(&self) -> usize {
        match self.loss {
            SpaceLoss::GilbertElliott => 4,
            SpaceLoss::Simplified => 2,
            SpaceLoss::Uniform => 1,
        }
    }

    /// Dimensions of the unit cube sampled.
    pub fn dims(&self) -> usize {
        let second = if self.paths == 2 && !self.homogeneous {
            self.path_dims()
        } else {
            0
        };
        1 + self.path_dims() + second
    }

    fn path_at(&self, u: &[f64]) -> GeParams {
        match self.loss {
            SpaceLoss::GilbertElliott => GeParams {
                p: lerp(self.p, u[0]),
                r: lerp(self.r, u[1]),
                k_good: lerp(self.k_good, u[2]),
                h_bad: lerp(self.h_bad, u[3]),
            },
            SpaceLoss::Simplified => GeParams::simplified(lerp(self.p, u[0]), lerp(self.r, u[1])),
            SpaceLoss::Uniform => GeParams::from_uniform(lerp(self.uniform_rate, u[0])),
        }
    }

    /// Map a unit-cube point to channel parameters.
    pub fn point_at(&self, id: usize, u: &[f64]) -> Point {
        let pd = self.path_dims();
        let owd_ms = lerp(self.owd_ms, u[0]);
        let path1 = self.path_at(&u[1..1 + pd]);
        let path2 = match (self.paths, self.homogeneous) {
            (2, true) => Some(path1),
            (2, false) => Some(self.path_at(&u[1 + pd..1 + 2 * pd])),
            _ => None,
        };
        Point {
            id,
            path1,
            path2,
            owd_ms,
        }
    }
}

/// One sampled channel configuration. Both paths share the delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub id: usize,
    pub path1: GeParams,
    pub path2: Option<GeParams>,
    pub owd_ms: f64,
}

impl Point {
    pub fn path_specs(&self, n: usize) -> Vec<PathSpec> {
        let spec = |g: GeParams| PathSpec {
            owd_ms: self.owd_ms,
            loss: LossModel::GilbertElliott(g),
        };
        let mut v = vec![spec(self.path1)];
        if n >= 2 {
            v.push(spec(self.path2.unwrap_or(self.path1)));
        }
        v
    }
}

/// `n_points` WSP points of `space`.
pub fn wsp_sample(
    space: &ParamSpace,
    n_points: usize,
    seed: u64,
) -> Result<Vec<Point>, XdesignError> {
    space.validate()?;
    if n_points == 0 {
        return Err(XdesignError::Usage("n_points must be positive".into()));
    }
    let design = wsp_unit(space.dims(), n_points, seed);
    Ok(design
        .points
        .iter()
        .enumerate()
        .map(|(i, u)| space.point_at(i, u))
        .collect())
}

/// Explicit point in a campaign file. Missing GE fields take the values
/// of a channel without losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointSpec {
    pub owd_ms: f64,
    #[serde(default)]
    pub p1: f64,
    #[serde(default = "one")]
    pub r1: f64,
    #[serde(default = "one")]
    pub k1: f64,
    #[serde(default)]
    pub h1: f64,
    pub p2: Option<f64>,
    pub r2: Option<f64>,
    pub k2: Option<f64>,
    pub h2: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl PointSpec {
    fn to_point(self, id: usize) -> Point {
        let path1 = GeParams {
            p: self.p1,
            r: self.r1,
            k_good: self.k1,
            h_bad: self.h1,
        };
        let path2 =
            if self.p2.is_some() || self.r2.is_some() || self.k2.is_some() || self.h2.is_some() {
                Some(GeParams {
                    p: self.p2.unwrap_or(path1.p),
                    r: self.r2.unwrap_or(path1.r),
                    k_good: self.k2.unwrap_or(path1.k_good),
                    h_bad: self.h2.unwrap_or(path1.h_bad),
                })
            } else {
                None
            };
        Point {
            id,
            path1,
            path2,
            owd_ms: self.owd_ms,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    Reliable,
    Plain,
    Fec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Contender {
    pub name: String,
    pub mode: ModeKind,
    pub fec: Option<SchemeConfig>,
    #[serde(default)]
    pub scheduler: SchedulerKind,
    #[serde(default = "one_path")]
    pub paths: usize,
}

fn one_path() -> usize {
    1
}

impl Contender {
    pub fn new(name: &str, mode: Mode) -> Self {
        let (kind, fec) = match mode {
            Mode::Reliable => (ModeKind::Reliable, None),
            Mode::Plain => (ModeKind::Plain, None),
            Mode::Fec { fec } => (ModeKind::Fec, Some(fec)),
        };
        Contender {
            name: name.into(),
            mode: kind,
            fec,
            scheduler: SchedulerKind::SinglePath,
            paths: 1,
        }
    }

    pub fn multipath(mut self, scheduler: SchedulerKind) -> Self {
        self.scheduler = scheduler;
        self.paths = 2;
        self
    }

    pub fn harness_mode(&self) -> Result<Mode, XdesignError> {
        match (self.mode, self.fec) {
            (ModeKind::Reliable, None) => Ok(Mode::Reliable),
            (ModeKind::Plain, None) => Ok(Mode::Plain),
            (ModeKind::Fec, Some(fec)) => Ok(Mode::Fec { fec }),
            (ModeKind::Fec, None) => Err(XdesignError::Config(format!(
                "{}: fec mode needs a scheme",
                self.name
            ))),
            (_, Some(_)) => Err(XdesignError::Config(format!(
                "{}: scheme given without fec mode",
                self.name
            ))),
        }
    }

    fn validate(&self) -> Result<(), XdesignError> {
        let mode = self.harness_mode()?;
        if let Some(s) = mode.scheme() {
            s.validate()
                .map_err(|e| XdesignError::Config(format!("{}: {e}", self.name)))?;
        }
        if self.name.is_empty() || self.name.contains([',', '"', '\n']) {
            return Err(XdesignError::Config(format!(
                "contender name {:?}",
                self.name
            )));
        }
        match (self.paths, self.scheduler) {
            (1, SchedulerKind::SinglePath) => Ok(()),
            (2, SchedulerKind::RoundRobin | SchedulerKind::HighRb) => Ok(()),
            (p, s) => Err(XdesignError::Config(format!(
                "{}: {p} paths with {s:?}",
                self.name
            ))),
        }
    }
}

/// Contents of a campaign file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSpec {
    pub schema: u32,
    #[serde(default)]
    pub name: String,
    pub seed: u64,
    #[serde(default = "default_points")]
    pub n_points: usize,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_buffer")]
    pub buffer_ms: f64,
    #[serde(default)]
    pub traffic: TrafficProfile,
    #[serde(default)]
    pub transport: TransportSettings,
    pub space: Option<ParamSpace>,
    #[serde(default, rename = "point")]
    pub points: Vec<PointSpec>,
    #[serde(rename = "contender")]
    pub contenders: Vec<Contender>,
}

fn default_points() -> usize {
    120
}

fn default_repeats() -> usize {
    3
}

fn default_buffer() -> f64 {
    100.0
}

impl CampaignSpec {
    pub fn new(seed: u64, space: ParamSpace, n_points: usize, contenders: Vec<Contender>) -> Self {
        CampaignSpec {
            schema: SCHEMA_VERSION,
            name: String::new(),
            seed,
            n_points,
            repeats: 3,
            buffer_ms: 100.0,
            traffic: TrafficProfile::default(),
            transport: TransportSettings::default(),
            space: Some(space),
            points: Vec::new(),
            contenders,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, XdesignError> {
        let spec: CampaignSpec = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, XdesignError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), XdesignError> {
        if self.schema != SCHEMA_VERSION {
            return Err(XdesignError::Schema(self.schema));
        }
        if self.contenders.is_empty() {
            return Err(XdesignError::Config("no contenders".into()));
        }
        let mut names = HashSet::new();
        for c in &self.contenders {
            c.validate()?;
            if !names.insert(&c.name) {
                return Err(XdesignError::Config(format!(
                    "duplicate contender {}",
                    c.name
                )));
            }
        }
        if self.repeats == 0 {
            return Err(XdesignError::Config("repeats must be positive".into()));
        }
        for p in &self.points {
            let pt = p.to_point(0);
            for g in [Some(pt.path1), pt.path2].into_iter().flatten() {
                g.validate()
                    .map_err(|e| XdesignError::Config(format!("point: {e}")))?;
            }
            if !(p.owd_ms >= 0.0 && p.owd_ms.is_finite()) {
                return Err(XdesignError::Config(format!("owd {} ms", p.owd_ms)));
            }
        }
        match (&self.space, self.points.is_empty()) {
            (Some(s), true) => s.validate(),
            (None, false) => Ok(()),
            _ => Err(XdesignError::Config(
                "give either a [space] or a list of [[point]]".into(),
            )),
        }
    }

    pub fn resolve_points(&self) -> Result<Vec<Point>, XdesignError> {
        match &self.space {
            Some(space) => wsp_sample(space, self.n_points, self.seed),
            None => Ok(self
                .points
                .iter()
                .enumerate()
                .map(|(i, p)| p.to_point(i))
                .collect()),
        }
    }

    /// Whether results carry second-path columns.
    pub fn two_path_columns(&self, points: &[Point]) -> bool {
        self.contenders.iter().any(|c| c.paths == 2) || points.iter().any(|p| p.path2.is_some())
    }

    pub fn experiment(
        &self,
        point: &Point,
        contender: &Contender,
        repeat: usize,
    ) -> Result<ExperimentConfig, XdesignError> {
        Ok(ExperimentConfig {
            mode: contender.harness_mode()?,
            scheduler: contender.scheduler,
            paths: point.path_specs(contender.paths),
            buffer_ms: self.buffer_ms,
            profile: self.traffic,
            seed: run_seed(self.seed, point.id, repeat),
            transport: self.transport,
        })
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Channel seed of one run. Contenders never enter the derivation, so all
/// of them see the same loss draws at a point.
pub fn run_seed(master: u64, point: usize, repeat: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ point as u64) ^ repeat as u64)
}

/// Median of a nonempty slice; the mean of the middle pair for even sizes.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of nothing");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    /// A reliable run hit the time horizon before reading every message.
    Incomplete,
    Failed,
}

impl RowStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::Incomplete => "incomplete",
            RowStatus::Failed => "failed",
        }
    }

    pub fn parse(s: &str) -> Result<Self, XdesignError> {
        match s {
            "ok" => Ok(RowStatus::Ok),
            "incomplete" => Ok(RowStatus::Incomplete),
            "failed" => Ok(RowStatus::Failed),
            other => Err(XdesignError::Usage(format!("unknown status {other:?}"))),
        }
    }
}

/// One line of results.csv.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub point_id: usize,
    pub contender: String,
    pub path1: GeParams,
    pub owd_ms: f64,
    pub path2: Option<GeParams>,
    pub buffer_ms: f64,
    pub fraction_received: f64,
    pub rebuffer_ms: f64,
    pub status: RowStatus,
}

/// Median-of-repeats result of one contender at one point.
pub fn run_cell(spec: &CampaignSpec, point: &Point, contender: &Contender) -> ResultRow {
    let mut runs: Vec<RunMetrics> = Vec::with_capacity(spec.repeats);
    let mut status = RowStatus::Ok;
    for repeat in 0..spec.repeats {
        match spec
            .experiment(point, contender, repeat)
            .and_then(|cfg| Ok(run_experiment(&cfg)?))
        {
            Ok(m) => {
                if !m.complete {
                    status = RowStatus::Incomplete;
                }
                runs.push(m);
            }
            Err(_) => {
                status = RowStatus::Failed;
                break;
            }
        }
    }
    let (fraction_received, rebuffer_ms) = if status == RowStatus::Failed {
        (f64::NAN, f64::NAN)
    } else {
        let f: Vec<f64> = runs.iter().map(|m| m.fraction_received).collect();
        let r: Vec<f64> = runs.iter().map(|m| m.rebuffer_ms).collect();
        (median(&f), median(&r))
    };
    ResultRow {
        point_id: point.id,
        contender: contender.name.clone(),
        path1: point.path1,
        owd_ms: point.owd_ms,
        path2: (contender.paths == 2 || point.path2.is_some())
            .then(|| point.path2.unwrap_or(point.path1)),
        buffer_ms: spec.buffer_ms,
        fraction_received,
        rebuffer_ms,
        status,
    }
}

pub fn header(two_paths: bool) -> Vec<&'static str> {
    let mut h = vec!["point_id", "contender", "p1", "r1", "k1", "h1", "owd_ms"];
    if two_paths {
        h.extend(["p2", "r2", "k2", "h2"]);
    }
    h.extend(["buffer_ms", "fraction_received", "rebuffer_ms", "status"]);
    h
}

fn row_record(row: &ResultRow, two_paths: bool) -> Vec<String> {
    let g = row.path1;
    let mut rec = vec![
        row.point_id.to_string(),
        row.contender.clone(),
        g.p.to_string(),
        g.r.to_string(),
        g.k_good.to_string(),
        g.h_bad.to_string(),
        row.owd_ms.to_string(),
    ];
    if two_paths {
        let g2 = row.path2.unwrap_or(g);
        rec.extend([g2.p, g2.r, g2.k_good, g2.h_bad].map(|x| x.to_string()));
    }
    rec.extend([
        row.buffer_ms.to_string(),
        row.fraction_received.to_string(),
        row.rebuffer_ms.to_string(),
        row.status.as_str().to_string(),
    ]);
    rec
}

/// Serialize rows with the header.
pub fn write_results<W: Write>(
    out: W,
    rows: &[ResultRow],
    two_paths: bool,
) -> Result<(), XdesignError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(two_paths))?;
    for r in rows {
        w.write_record(row_record(r, two_paths))?;
    }
    w.flush()?;
    Ok(())
}

fn parse_f64(s: &str, what: &str) -> Result<f64, XdesignError> {
    s.trim()
        .parse()
        .map_err(|_| XdesignError::Usage(format!("bad {what}: {s:?}")))
}

pub fn read_results_from<R: std::io::Read>(input: R) -> Result<Vec<ResultRow>, XdesignError> {
    let mut rd = csv::Reader::from_reader(input);
    let hdr: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    let two_paths = hdr.iter().any(|h| h == "p2");
    let expected = header(two_paths);
    if hdr != expected {
        return Err(XdesignError::Usage(format!("unexpected header {hdr:?}")));
    }
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let f = |i: usize, name: &str| parse_f64(&rec[i], name);
        let path1 = GeParams {
            p: f(2, "p1")?,
            r: f(3, "r1")?,
            k_good: f(4, "k1")?,
            h_bad: f(5, "h1")?,
        };
        let (path2, base) = if two_paths {
            (
                Some(GeParams {
                    p: f(7, "p2")?,
                    r: f(8, "r2")?,
                    k_good: f(9, "k2")?,
                    h_bad: f(10, "h2")?,
                }),
                11,
            )
        } else {
            (None, 7)
        };
        rows.push(ResultRow {
            point_id: rec[0]
                .parse()
                .map_err(|_| XdesignError::Usage(format!("bad point_id {:?}", &rec[0])))?,
            contender: rec[1].to_string(),
            path1,
            owd_ms: f(6, "owd_ms")?,
            path2,
            buffer_ms: f(base, "buffer_ms")?,
            fraction_received: f(base + 1, "fraction_received")?,
            rebuffer_ms: f(base + 2, "rebuffer_ms")?,
            status: RowStatus::parse(&rec[base + 3])?,
        });
    }
    Ok(rows)
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>, XdesignError> {
    read_results_from(std::fs::File::open(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Auto,
    Sequential,
    /// Worker count.
    Parallel(usize),
}

/// Run cells in input order, one after the other.
pub fn run_cells_sequential(spec: &CampaignSpec, cells: &[(Point, Contender)]) -> Vec<ResultRow> {
    cells.iter().map(|(p, c)| run_cell(spec, p, c)).collect()
}

/// Run cells on the rayon pool; results keep input order.
#[cfg(feature = "parallel")]
pub fn run_cells_parallel(spec: &CampaignSpec, cells: &[(Point, Contender)]) -> Vec<ResultRow> {
    use rayon::prelude::*;
    cells
        .par_iter()
        .map(|(p, c)| run_cell(spec, p, c))
        .collect()
}

fn run_cells(spec: &CampaignSpec, cells: &[(Point, Contender)], exec: Execution) -> Vec<ResultRow> {
    #[cfg(feature = "parallel")]
    {
        match exec {
            Execution::Sequential => run_cells_sequential(spec, cells),
            Execution::Auto => run_cells_parallel(spec, cells),
            Execution::Parallel(n) => {
                match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                    Ok(pool) => pool.install(|| run_cells_parallel(spec, cells)),
                    Err(_) => run_cells_parallel(spec, cells),
                }
            }
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = exec;
        run_cells_sequential(spec, cells)
    }
}

/// Every (point, contender) cell in output order.
pub fn cells(spec: &CampaignSpec) -> Result<Vec<(Point, Contender)>, XdesignError> {
    let points = spec.resolve_points()?;
    Ok(points
        .iter()
        .flat_map(|p| spec.contenders.iter().map(move |c| (*p, c.clone())))
        .collect())
}

/// Run a whole campaign in memory.
pub fn run_campaign(spec: &CampaignSpec, exec: Execution) -> Result<Vec<ResultRow>, XdesignError> {
    spec.validate()?;
    Ok(run_cells(spec, &cells(spec)?, exec))
}

/// Run a campaign into `out`, appending rows batch by batch. Cells already
/// present in `out` are skipped, so an interrupted run can be resumed.
/// Returns the number of cells computed.
pub fn run_campaign_to_file(
    spec: &CampaignSpec,
    out: &Path,
    exec: Execution,
    batch: usize,
) -> Result<usize, XdesignError> {
    spec.validate()?;
    let all = cells(spec)?;
    let points: Vec<Point> = spec.resolve_points()?;
    let two_paths = spec.two_path_columns(&points);
    let existing = if out.exists() && std::fs::metadata(out)?.len() > 0 {
        read_results(out)?
    } else {
        Vec::new()
    };
    let done: HashSet<(usize, String)> = existing
        .iter()
        .map(|r| (r.point_id, r.contender.clone()))
        .collect();
    let todo: Vec<(Point, Contender)> = all
        .into_iter()
        .filter(|(p, c)| !done.contains(&(p.id, c.name.clone())))
        .collect();
    let mut file = OpenOptions::new().create(true).append(true).open(out)?;
    if existing.is_empty() {
        file.set_len(0)?;
        let mut w = csv::Writer::from_writer(&mut file);
        w.write_record(header(two_paths))?;
        w.flush()?;
    }
    for chunk in todo.chunks(batch.max(1)) {
        let rows = run_cells(spec, chunk, exec);
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(&mut file);
        for r in &rows {
            w.write_record(row_record(r, two_paths))?;
        }
        w.flush()?;
        drop(w);
        file.sync_data()?;
    }
    Ok(todo.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec() -> CampaignSpec {
        let mut spec = CampaignSpec::new(
            4,
            ParamSpace::default(),
            3,
            vec![
                Contender::new("plain", Mode::Plain),
                Contender::new(
                    "rs",
                    Mode::Fec {
                        fec: SchemeConfig::ReedSolomon { n: 30, k: 20 },
                    },
                ),
            ],
        );
        spec.traffic.duration_s = 2.0;
        spec
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(&[5.0, 7.0, 100.0]), 7.0);
        assert_eq!(median(&[100.0, 5.0, 7.0]), 7.0);
        assert_eq!(median(&[1.0, 3.0]), 2.0);
    }

    #[test]
    fn cell_count_arithmetic() {
        let mut spec = tiny_spec();
        spec.n_points = 120;
        spec.contenders
            .push(Contender::new("reliable", Mode::Reliable));
        let c = cells(&spec).unwrap();
        assert_eq!(c.len(), 360);
        assert_eq!(c.len() * spec.repeats, 1080);
    }

    #[test]
    fn seeds_ignore_contender_and_differ_per_repeat() {
        let spec = tiny_spec();
        let pts = spec.resolve_points().unwrap();
        let a = spec.experiment(&pts[1], &spec.contenders[0], 2).unwrap();
        let b = spec.experiment(&pts[1], &spec.contenders[1], 2).unwrap();
        assert_eq!(a.seed, b.seed);
        assert_ne!(run_seed(4, 1, 0), run_seed(4, 1, 1));
        assert_ne!(run_seed(4, 0, 1), run_seed(4, 1, 0));
    }

    #[test]
    fn sampled_points_in_ranges() {
        for loss in [
            SpaceLoss::GilbertElliott,
            SpaceLoss::Simplified,
            SpaceLoss::Uniform,
        ] {
            let space = ParamSpace {
                loss,
                paths: 2,
                ..ParamSpace::default()
            };
            for p in wsp_sample(&space, 30, 1).unwrap() {
                assert!((0.0..=100.0).contains(&p.owd_ms));
                for g in [p.path1, p.path2.unwrap()] {
                    assert!(g.validate().is_ok(), "{g:?}");
                    match loss {
                        SpaceLoss::GilbertElliott => {
                            assert!((0.0..=0.01).contains(&g.p) && (0.025..=0.5).contains(&g.r));
                            assert!(
                                (0.97..=1.0).contains(&g.k_good) && (0.0..=0.4).contains(&g.h_bad)
                            );
                        }
                        SpaceLoss::Simplified => assert_eq!((g.k_good, g.h_bad), (1.0, 0.0)),
                        SpaceLoss::Uniform => {
                            assert!((0.0..=0.03).contains(&g.stationary_loss()));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn toml_roundtrip() {
        let text = r#"
schema = 1
seed = 7
n_points = 4
repeats = 1

[space]
loss = "simplified"
paths = 2
homogeneous = true

[[contender]]
name = "single"
mode = "fec"
fec = { scheme = "reed_solomon", n = 30, k = 20 }

[[contender]]
name = "rr"
mode = "fec"
fec = { scheme = "reed_solomon", n = 30, k = 20 }
scheduler = "round_robin"
paths = 2
"#;
        let spec = CampaignSpec::from_toml(text).unwrap();
        assert_eq!(spec.contenders[1].paths, 2);
        let pts = spec.resolve_points().unwrap();
        assert_eq!(pts.len(), 4);
        assert!(pts.iter().all(|p| p.path2 == Some(p.path1)));
        let back = CampaignSpec::from_toml(&toml::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(matches!(
            CampaignSpec::from_toml(
                "schema = 2\nseed = 1\n[[contender]]\nname='a'\nmode='plain'\n[space]\n"
            ),
            Err(XdesignError::Schema(2))
        ));
        assert!(CampaignSpec::from_toml(
            "schema = 1\nseed = 1\n[[contender]]\nname='a'\nmode='fec'\n[space]\n"
        )
        .is_err());
        assert!(CampaignSpec::from_toml(
            "schema = 1\nseed = 1\n[[contender]]\nname='a'\nmode='plain'\n"
        )
        .is_err());
    }

    #[test]
    fn csv_roundtrip_and_exact_header() {
        let spec = tiny_spec();
        let rows = run_campaign(&spec, Execution::Sequential).unwrap();
        assert_eq!(rows.len(), 6);
        let mut buf = Vec::new();
        write_results(&mut buf, &rows, false).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "point_id,contender,p1,r1,k1,h1,owd_ms,buffer_ms,fraction_received,rebuffer_ms,status\n"
        ));
        assert_eq!(read_results_from(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn resume_skips_completed_rows() {
        let spec = tiny_spec();
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("results.csv");
        assert_eq!(
            run_campaign_to_file(&spec, &out, Execution::Sequential, 2).unwrap(),
            6
        );
        let full = std::fs::read_to_string(&out).unwrap();
        // drop the last two rows, as if killed mid-run
        let lines: Vec<&str> = full.lines().collect();
        std::fs::write(&out, lines[..lines.len() - 2].join("\n") + "\n").unwrap();
        assert_eq!(
            run_campaign_to_file(&spec, &out, Execution::Sequential, 2).unwrap(),
            2
        );
        assert_eq!(std::fs::read_to_string(&out).unwrap(), full);
        assert_eq!(
            run_campaign_to_file(&spec, &out, Execution::Sequential, 2).unwrap(),
            0
        );
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn parallel_matches_sequential() {
        let spec = tiny_spec();
        let a = run_campaign(&spec, Execution::Sequential).unwrap();
        let b = run_campaign(&spec, Execution::Parallel(2)).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }
}
