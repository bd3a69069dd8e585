//! Configuration-driven experiments: problem construction, solver runs,
//! CSV reports, parameter studies and solution slices.
//!
//! Configurations are flat `key = value` text with `#` comments. Every key
//! can be overridden through an environment variable `HELMSWEEP_<KEY>`.

use std::collections::HashSet;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use thiserror::Error;

use crate::krylov::{gmres, workspace_bytes, GmresConfig, KrylovError, SolveReport};
use crate::media::hsw::{self, HswError};
use crate::media::{
    make_source, make_velocity, FaceBoundary, FaceFlags, Grid3D, MediaError, PmlProfile,
    SourceField, SourceKind, SourceParams, VelocityField, VelocityKind, VelocityParams,
};
use crate::operator::{assemble, OperatorError, StencilCoefficients};
use crate::sweep::{
    Fronts, IdentityPreconditioner, NonRecursiveSweepPreconditioner, Preconditioner,
    RecursiveSweepPreconditioner, SweepConfig, SweepError, SweepMode,
};
use crate::C64;

pub const ENV_PREFIX: &str = "HELMSWEEP_";

pub const CSV_COLUMNS: [&str; 16] = [
    "key",
    "omega_over_2pi",
    "q",
    "n",
    "N",
    "velocity",
    "source",
    "preconditioner",
    "fronts",
    "T_setup",
    "N_iter",
    "T_solve",
    "final_residual",
    "converged",
    "peak_memory_bytes",
    "status",
];

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Media(#[from] MediaError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
    #[error(transparent)]
    Krylov(#[from] KrylovError),
    #[error(transparent)]
    Hsw(#[from] HswError),
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl ExperimentError {
    /// True for failures caused by the configuration or the filesystem.
    pub fn is_config_or_io(&self) -> bool {
        !matches!(self, Self::Sweep(SweepError::Factorization { .. }) | Self::Krylov(_))
    }
}

fn config_error(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Config(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PreconditionerKind {
    Recursive,
    NonRecursive,
    /// Recursive sweep with every subproblem extended to the domain edge.
    ExactSweep,
    None,
}

impl FromStr for PreconditionerKind {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "recursive" => Ok(Self::Recursive),
            "nonrecursive" => Ok(Self::NonRecursive),
            "exact_sweep" => Ok(Self::ExactSweep),
            "none" => Ok(Self::None),
            other => Err(config_error(format!("unknown preconditioner `{other}`"))),
        }
    }
}

impl fmt::Display for PreconditionerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Recursive => "recursive",
            Self::NonRecursive => "nonrecursive",
            Self::ExactSweep => "exact_sweep",
            Self::None => "none",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Plane {
    X1,
    X2,
    X3,
}

impl Plane {
    pub fn axis(self) -> usize {
        match self {
            Self::X1 => 0,
            Self::X2 => 1,
            Self::X3 => 2,
        }
    }
}

impl FromStr for Plane {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "x1" => Ok(Self::X1),
            "x2" => Ok(Self::X2),
            "x3" => Ok(Self::X3),
            other => Err(config_error(format!("unknown plane `{other}`"))),
        }
    }
}

impl fmt::Display for Plane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}", self.axis() + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub omega_over_2pi: f64,
    pub q: usize,
    pub velocity: VelocityKind,
    pub velocity_params: VelocityParams,
    pub velocity_file: Option<PathBuf>,
    pub source: SourceKind,
    pub source_params: SourceParams,
    pub source_file: Option<PathBuf>,
    /// Zero the source inside the boundary PML.
    pub confine_source: bool,
    pub pml_faces: FaceFlags,
    pub sweep: SweepConfig,
    pub preconditioner: PreconditionerKind,
    pub gmres: GmresConfig,
    pub output_dir: Option<PathBuf>,
    pub save_solution: bool,
    pub slice_plane: Option<Plane>,
    /// Node index of the slice; the midpoint when unset.
    pub slice_index: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::paper_replica()
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T, ExperimentError> {
    value
        .parse()
        .map_err(|_| config_error(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_list<T: FromStr, const K: usize>(key: &str, value: &str) -> Result<[T; K], ExperimentError> {
    let parts: Vec<T> = value
        .split(',')
        .map(|p| parse_num(key, p.trim()))
        .collect::<Result<_, _>>()?;
    parts
        .try_into()
        .map_err(|_| config_error(format!("`{key}` needs {K} comma-separated values")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ExperimentError> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(config_error(format!("`{key}`: expected true or false, got `{value}`"))),
    }
}

fn parse_faces(value: &str) -> Result<FaceFlags, ExperimentError> {
    match value {
        "all" => return Ok(FaceFlags::all_pml()),
        "two" => return Ok(FaceFlags::two_faces()),
        "none" => return Ok(FaceFlags::all_dirichlet()),
        _ => {}
    }
    let mut flags = FaceFlags::all_dirichlet();
    for face in value.split(',').map(str::trim) {
        let (axis, side) = face
            .split_once('_')
            .ok_or_else(|| config_error(format!("bad PML face `{face}`")))?;
        let axis = match axis {
            "x1" => 0,
            "x2" => 1,
            "x3" => 2,
            _ => return Err(config_error(format!("bad PML face `{face}`"))),
        };
        match side {
            "low" => flags.low[axis] = FaceBoundary::Pml,
            "high" => flags.high[axis] = FaceBoundary::Pml,
            _ => return Err(config_error(format!("bad PML face `{face}`"))),
        }
    }
    Ok(flags)
}

fn faces_to_string(flags: &FaceFlags) -> String {
    if *flags == FaceFlags::all_pml() {
        return "all".into();
    }
    if *flags == FaceFlags::all_dirichlet() {
        return "none".into();
    }
    let mut names = Vec::new();
    for axis in 0..3 {
        if flags.low[axis] == FaceBoundary::Pml {
            names.push(format!("x{}_low", axis + 1));
        }
        if flags.high[axis] == FaceBoundary::Pml {
            names.push(format!("x{}_high", axis + 1));
        }
    }
    names.join(",")
}

impl ExperimentConfig {
    /// `q = 8`, 9 boundary layers, 5 auxiliary layers, groups of 4, two
    /// fronts, relative residual `1e-3`, restart 40, PML on every face.
    pub fn paper_replica() -> Self {
        Self {
            omega_over_2pi: 4.0,
            q: 8,
            velocity: VelocityKind::Lens,
            velocity_params: VelocityParams::default(),
            velocity_file: None,
            source: SourceKind::PointGaussian,
            source_params: SourceParams::default(),
            source_file: None,
            confine_source: true,
            pml_faces: FaceFlags::all_pml(),
            sweep: SweepConfig::default(),
            preconditioner: PreconditionerKind::Recursive,
            gmres: GmresConfig::default(),
            output_dir: None,
            save_solution: false,
            slice_plane: None,
            slice_index: None,
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ExperimentError> {
        let value = value.trim();
        match key {
            "omega_over_2pi" => self.omega_over_2pi = parse_num(key, value)?,
            "q" => self.q = parse_num(key, value)?,
            "velocity" => self.velocity = value.parse()?,
            "velocity_c0" => self.velocity_params.c0 = parse_num(key, value)?,
            "velocity_seed" => self.velocity_params.seed = Some(parse_num(key, value)?),
            "velocity_smoothing" => self.velocity_params.smoothing_passes = parse_num(key, value)?,
            "velocity_file" => self.velocity_file = Some(PathBuf::from(value)),
            "source" => self.source = value.parse()?,
            "source_center" => self.source_params.center = Some(parse_list(key, value)?),
            "source_direction" => self.source_params.direction = parse_list(key, value)?,
            "source_width" => self.source_params.width = Some(parse_num(key, value)?),
            "source_node" => self.source_params.node = parse_list(key, value)?,
            "source_file" => self.source_file = Some(PathBuf::from(value)),
            "confine_source" => self.confine_source = parse_bool(key, value)?,
            "pml_faces" => self.pml_faces = parse_faces(value)?,
            "pml_constant" => self.sweep.pml_constant = parse_num(key, value)?,
            "boundary_layers" => self.sweep.boundary_layers = parse_num(key, value)?,
            "aux_layers" => self.sweep.aux_layers = parse_num(key, value)?,
            "group_size" => self.sweep.group_size = parse_num(key, value)?,
            "fronts" => {
                self.sweep.fronts = match value {
                    "one" => Fronts::One,
                    "two" => Fronts::Two,
                    _ => return Err(config_error(format!("`fronts`: expected one or two, got `{value}`"))),
                }
            }
            "preconditioner" => self.preconditioner = value.parse()?,
            "tol" => self.gmres.tol = parse_num(key, value)?,
            "restart" => self.gmres.restart = parse_num(key, value)?,
            "max_iter" => self.gmres.max_iter = parse_num(key, value)?,
            "output_dir" => self.output_dir = Some(PathBuf::from(value)),
            "save_solution" => self.save_solution = parse_bool(key, value)?,
            "slice_plane" => self.slice_plane = Some(value.parse()?),
            "slice_index" => self.slice_index = Some(parse_num(key, value)?),
            other => return Err(config_error(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ExperimentError> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                config_error(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            self.set(key.trim(), value)
                .map_err(|e| config_error(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    /// Applies `HELMSWEEP_<KEY>` variables from `vars`.
    pub fn apply_env<I>(&mut self, vars: I) -> Result<(), ExperimentError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        for (name, value) in vars {
            if let Some(key) = name.strip_prefix(ENV_PREFIX) {
                self.set(&key.to_ascii_lowercase(), &value)
                    .map_err(|e| config_error(format!("{name}: {e}")))?;
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, ExperimentError> {
        let mut cfg = Self::paper_replica();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file and applies the process environment on top.
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::paper_replica();
        cfg.apply_text(&text)?;
        cfg.apply_env(std::env::vars())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if !(self.gmres.tol > 0.0 && self.gmres.tol < 1.0) {
            return Err(config_error(format!("tol must lie in (0, 1), got {}", self.gmres.tol)));
        }
        if self.gmres.restart == 0 || self.gmres.max_iter == 0 {
            return Err(config_error("restart and max_iter must be at least 1"));
        }
        if self.sweep.boundary_layers == 0 || self.sweep.aux_layers == 0 || self.sweep.group_size == 0 {
            return Err(config_error("all layer widths must be at least 1"));
        }
        if self.velocity == VelocityKind::Random && self.velocity_params.seed.is_none() {
            return Err(config_error("a random velocity needs `velocity_seed`"));
        }
        if self.velocity == VelocityKind::Custom && self.velocity_file.is_none() {
            return Err(config_error("a custom velocity needs `velocity_file`"));
        }
        if self.source == SourceKind::Custom && self.source_file.is_none() {
            return Err(config_error("a custom source needs `source_file`"));
        }
        self.sweep.validate()?;
        Grid3D::from_wavelength(self.omega_over_2pi, self.q)?;
        Ok(())
    }

    /// The sweep settings actually used by the selected preconditioner.
    pub fn sweep_config(&self) -> SweepConfig {
        let mut cfg = self.sweep;
        if self.preconditioner == PreconditionerKind::ExactSweep {
            cfg.mode = SweepMode::Exact;
        }
        cfg
    }

    /// Canonical `key = value` rendering; parsing it gives back `self`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        line("omega_over_2pi", self.omega_over_2pi.to_string());
        line("q", self.q.to_string());
        line("velocity", self.velocity.to_string());
        line("velocity_c0", self.velocity_params.c0.to_string());
        if let Some(seed) = self.velocity_params.seed {
            line("velocity_seed", seed.to_string());
        }
        line("velocity_smoothing", self.velocity_params.smoothing_passes.to_string());
        if let Some(p) = &self.velocity_file {
            line("velocity_file", p.display().to_string());
        }
        line("source", self.source.to_string());
        if let Some(c) = self.source_params.center {
            line("source_center", join(&c));
        }
        line("source_direction", join(&self.source_params.direction));
        if let Some(w) = self.source_params.width {
            line("source_width", w.to_string());
        }
        let node = self.source_params.node;
        line("source_node", format!("{},{},{}", node[0], node[1], node[2]));
        if let Some(p) = &self.source_file {
            line("source_file", p.display().to_string());
        }
        line("confine_source", self.confine_source.to_string());
        line("pml_faces", faces_to_string(&self.pml_faces));
        line("pml_constant", self.sweep.pml_constant.to_string());
        line("boundary_layers", self.sweep.boundary_layers.to_string());
        line("aux_layers", self.sweep.aux_layers.to_string());
        line("group_size", self.sweep.group_size.to_string());
        line(
            "fronts",
            match self.sweep.fronts {
                Fronts::One => "one".into(),
                Fronts::Two => "two".into(),
            },
        );
        line("preconditioner", self.preconditioner.to_string());
        line("tol", self.gmres.tol.to_string());
        line("restart", self.gmres.restart.to_string());
        line("max_iter", self.gmres.max_iter.to_string());
        if let Some(p) = &self.output_dir {
            line("output_dir", p.display().to_string());
        }
        line("save_solution", self.save_solution.to_string());
        if let Some(p) = self.slice_plane {
            line("slice_plane", p.to_string());
        }
        if let Some(i) = self.slice_index {
            line("slice_index", i.to_string());
        }
        out
    }

    fn default_key(&self) -> String {
        format!(
            "omega_over_2pi={};velocity={};source={};preconditioner={}",
            self.omega_over_2pi, self.velocity, self.source, self.preconditioner
        )
    }
}

/// Grid, media and assembled operator of one experiment.
#[derive(Debug, Clone)]
pub struct Problem {
    pub grid: Grid3D,
    pub pml: PmlProfile,
    pub velocity: VelocityField,
    pub source: SourceField,
    pub operator: StencilCoefficients,
}

fn load_velocity(path: &Path, grid: &Grid3D) -> Result<VelocityField, ExperimentError> {
    match hsw::load(path)? {
        hsw::HswField::Real { dims, values } if dims == grid.dims() => {
            Ok(VelocityField::from_values(dims, values, VelocityKind::Custom)?)
        }
        hsw::HswField::Real { .. } => Err(config_error(format!(
            "{} does not match a grid of {} points per axis",
            path.display(),
            grid.n()
        ))),
        hsw::HswField::Complex { .. } => Err(config_error("velocity files must hold real values")),
    }
}

pub fn build_velocity(cfg: &ExperimentConfig, grid: &Grid3D) -> Result<VelocityField, ExperimentError> {
    match (&cfg.velocity_file, cfg.velocity) {
        (Some(path), VelocityKind::Custom) => load_velocity(path, grid),
        _ => Ok(make_velocity(cfg.velocity, grid, &cfg.velocity_params)?),
    }
}

pub fn build_source(
    cfg: &ExperimentConfig,
    grid: &Grid3D,
    pml: &PmlProfile,
) -> Result<SourceField, ExperimentError> {
    let mut source = match (&cfg.source_file, cfg.source) {
        (Some(path), SourceKind::Custom) => {
            let field = hsw::load(path)?;
            if field.dims() != grid.dims() {
                return Err(config_error(format!(
                    "{} does not match a grid of {} points per axis",
                    path.display(),
                    grid.n()
                )));
            }
            SourceField::from_values(grid.dims(), field.to_complex())?
        }
        _ => make_source(cfg.source, grid, &cfg.source_params)?,
    };
    if cfg.confine_source {
        source.confine_to_interior(grid, pml);
    }
    Ok(source)
}

pub fn build_problem(cfg: &ExperimentConfig) -> Result<Problem, ExperimentError> {
    cfg.validate()?;
    let grid = Grid3D::from_wavelength(cfg.omega_over_2pi, cfg.q)?;
    let pml = PmlProfile::new(cfg.sweep.pml_constant, cfg.sweep.boundary_layers, &grid, cfg.pml_faces)?;
    let velocity = build_velocity(cfg, &grid)?;
    let source = build_source(cfg, &grid, &pml)?;
    let operator = assemble(&grid, &velocity, &pml)?;
    Ok(Problem {
        grid,
        pml,
        velocity,
        source,
        operator,
    })
}

/// Builds the configured preconditioner, returning it with its setup time in seconds.
pub fn setup_preconditioner(
    cfg: &ExperimentConfig,
    a: &StencilCoefficients,
) -> Result<(Box<dyn Preconditioner>, f64), ExperimentError> {
    let start = Instant::now();
    let sweep = cfg.sweep_config();
    let pc: Box<dyn Preconditioner> = match cfg.preconditioner {
        PreconditionerKind::Recursive | PreconditionerKind::ExactSweep => {
            Box::new(RecursiveSweepPreconditioner::new(a, &sweep)?)
        }
        PreconditionerKind::NonRecursive => Box::new(NonRecursiveSweepPreconditioner::new(a, &sweep)?),
        PreconditionerKind::None => Box::new(IdentityPreconditioner::new(a.len())),
    };
    Ok((pc, start.elapsed().as_secs_f64()))
}

/// Runs GMRES and fills the timing and memory fields of the report.
pub fn solve_with(
    a: &StencilCoefficients,
    pc: &dyn Preconditioner,
    setup_seconds: f64,
    f: &[C64],
    gmres_cfg: &GmresConfig,
) -> Result<(Vec<C64>, SolveReport), ExperimentError> {
    let (u, mut report) = gmres(
        |v| a.apply(v).map_err(Into::into),
        |v| pc.apply(v).map_err(Into::into),
        f,
        gmres_cfg,
    )?;
    report.setup_seconds = setup_seconds;
    report.peak_memory_bytes =
        pc.memory_bytes() + a.memory_bytes() + workspace_bytes(a.len(), gmres_cfg.restart);
    Ok((u, report))
}

/// One line of the CSV report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub key: String,
    pub omega_over_2pi: f64,
    pub q: usize,
    pub n: usize,
    pub unknowns: usize,
    pub velocity: String,
    pub source: String,
    pub preconditioner: String,
    pub fronts: String,
    pub setup_seconds: f64,
    pub iterations: usize,
    pub solve_seconds: f64,
    pub final_residual: f64,
    pub converged: bool,
    pub peak_memory_bytes: usize,
    pub status: String,
}

impl ReportRow {
    fn skeleton(key: &str, cfg: &ExperimentConfig) -> Self {
        let n = Grid3D::from_wavelength(cfg.omega_over_2pi, cfg.q).map_or(0, |g| g.n());
        Self {
            key: key.to_string(),
            omega_over_2pi: cfg.omega_over_2pi,
            q: cfg.q,
            n,
            unknowns: n * n * n,
            velocity: cfg.velocity.to_string(),
            source: cfg.source.to_string(),
            preconditioner: cfg.preconditioner.to_string(),
            fronts: match cfg.sweep.fronts {
                Fronts::One => "one".into(),
                Fronts::Two => "two".into(),
            },
            setup_seconds: 0.0,
            iterations: 0,
            solve_seconds: 0.0,
            final_residual: f64::NAN,
            converged: false,
            peak_memory_bytes: 0,
            status: String::new(),
        }
    }

    pub fn from_report(key: &str, cfg: &ExperimentConfig, report: &SolveReport) -> Self {
        let mut row = Self::skeleton(key, cfg);
        row.setup_seconds = report.setup_seconds;
        row.iterations = report.iterations;
        row.solve_seconds = report.solve_seconds;
        row.final_residual = report.final_residual;
        row.converged = report.converged;
        row.peak_memory_bytes = report.peak_memory_bytes;
        row.status = if report.converged { "converged" } else { "not_converged" }.into();
        row
    }

    pub fn failed(key: &str, cfg: &ExperimentConfig, error: &ExperimentError) -> Self {
        let mut row = Self::skeleton(key, cfg);
        row.status = format!("error: {error}");
        row
    }

    pub fn record(&self) -> Vec<String> {
        vec![
            self.key.clone(),
            self.omega_over_2pi.to_string(),
            self.q.to_string(),
            self.n.to_string(),
            self.unknowns.to_string(),
            self.velocity.clone(),
            self.source.clone(),
            self.preconditioner.clone(),
            self.fronts.clone(),
            format!("{:.6}", self.setup_seconds),
            self.iterations.to_string(),
            format!("{:.6}", self.solve_seconds),
            format!("{:e}", self.final_residual),
            self.converged.to_string(),
            self.peak_memory_bytes.to_string(),
            self.status.clone(),
        ]
    }

    pub fn from_record(record: &csv::StringRecord) -> Result<Self, ExperimentError> {
        if record.len() != CSV_COLUMNS.len() {
            return Err(config_error(format!(
                "report row has {} columns, expected {}",
                record.len(),
                CSV_COLUMNS.len()
            )));
        }
        let field = |i: usize| record.get(i).unwrap_or("");
        let num = |i: usize| parse_num::<f64>(CSV_COLUMNS[i], field(i));
        let int = |i: usize| parse_num::<usize>(CSV_COLUMNS[i], field(i));
        Ok(Self {
            key: field(0).into(),
            omega_over_2pi: num(1)?,
            q: int(2)?,
            n: int(3)?,
            unknowns: int(4)?,
            velocity: field(5).into(),
            source: field(6).into(),
            preconditioner: field(7).into(),
            fronts: field(8).into(),
            setup_seconds: num(9)?,
            iterations: int(10)?,
            solve_seconds: num(11)?,
            final_residual: num(12)?,
            converged: parse_bool(CSV_COLUMNS[13], field(13))?,
            peak_memory_bytes: int(14)?,
            status: field(15).into(),
        })
    }
}

/// Appends rows to a CSV report, writing the header when the file is new.
pub struct ReportWriter {
    inner: csv::Writer<File>,
}

impl ReportWriter {
    pub fn append(path: &Path) -> Result<Self, ExperimentError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let fresh = fs::metadata(path).map_or(true, |m| m.len() == 0);
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        if fresh {
            inner.write_record(CSV_COLUMNS)?;
            inner.flush()?;
        }
        Ok(Self { inner })
    }

    pub fn write(&mut self, row: &ReportRow) -> Result<(), ExperimentError> {
        self.inner.write_record(row.record())?;
        self.inner.flush()?;
        Ok(())
    }
}

pub fn read_report(path: &Path) -> Result<Vec<ReportRow>, ExperimentError> {
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?.clone();
    if header.iter().ne(CSV_COLUMNS.iter().copied()) {
        return Err(config_error(format!("{} is not a report file", path.display())));
    }
    reader
        .records()
        .map(|r| ReportRow::from_record(&r?))
        .collect()
}

#[derive(Debug)]
pub struct RunOutcome {
    pub problem: Problem,
    pub report: SolveReport,
    pub row: ReportRow,
    pub solution: Vec<C64>,
}

/// Builds the problem, solves it and writes the configured artifacts.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutcome, ExperimentError> {
    let problem = build_problem(cfg)?;
    let (pc, setup_seconds) = setup_preconditioner(cfg, &problem.operator)?;
    let (solution, report) = solve_with(
        &problem.operator,
        pc.as_ref(),
        setup_seconds,
        problem.source.values(),
        &cfg.gmres,
    )?;
    drop(pc);
    let row = ReportRow::from_report(&cfg.default_key(), cfg, &report);
    if let Some(dir) = &cfg.output_dir {
        fs::create_dir_all(dir)?;
        ReportWriter::append(&dir.join("report.csv"))?.write(&row)?;
        if cfg.save_solution {
            hsw::save_complex(&dir.join("solution.hsw"), problem.grid.dims(), &solution)?;
        }
        if let Some(plane) = cfg.slice_plane {
            let index = cfg.slice_index.unwrap_or(problem.grid.n() / 2);
            let path = dir.join(format!("slice_{plane}_{index}.hsw"));
            export_slice(&solution, problem.grid.dims(), plane, index, &path)?;
        }
    }
    Ok(RunOutcome {
        problem,
        report,
        row,
        solution,
    })
}

/// Parameter grid of a study: `key=v1,v2;key2=w1,w2`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VaryGrid {
    pub axes: Vec<(String, Vec<String>)>,
}

impl FromStr for VaryGrid {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut axes = Vec::new();
        for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, values) = part
                .split_once('=')
                .ok_or_else(|| config_error(format!("bad study axis `{part}`")))?;
            let values: Vec<String> = values
                .split(',')
                .map(|v| v.trim().to_string())
                .filter(|v| !v.is_empty())
                .collect();
            if values.is_empty() {
                return Err(config_error(format!("study axis `{key}` has no values")));
            }
            axes.push((key.trim().to_string(), values));
        }
        Ok(Self { axes })
    }
}

impl VaryGrid {
    /// Every assignment of the cartesian product; none for an empty grid.
    pub fn points(&self) -> Vec<Vec<(String, String)>> {
        if self.axes.is_empty() {
            return Vec::new();
        }
        let mut points: Vec<Vec<(String, String)>> = vec![Vec::new()];
        for (key, values) in &self.axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push((key.clone(), v.clone()));
                        q
                    })
                })
                .collect();
        }
        points
    }
}

fn point_key(point: &[(String, String)]) -> String {
    point
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(";")
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StudySummary {
    pub rows: Vec<ReportRow>,
    pub skipped: usize,
    pub failed: usize,
}

/// Runs every point of `vary` on top of `base`, appending one row per point to `csv_path`.
///
/// Points whose key already appears in the file are skipped. A failing point
/// is recorded with its error and the study continues.
pub fn sweep_study(
    base: &ExperimentConfig,
    vary: &VaryGrid,
    csv_path: &Path,
) -> Result<StudySummary, ExperimentError> {
    let done: HashSet<String> = if csv_path.exists() && fs::metadata(csv_path)?.len() > 0 {
        read_report(csv_path)?.into_iter().map(|r| r.key).collect()
    } else {
        HashSet::new()
    };
    let mut writer = ReportWriter::append(csv_path)?;
    let mut summary = StudySummary::default();
    for point in vary.points() {
        let key = point_key(&point);
        if done.contains(&key) {
            summary.skipped += 1;
            continue;
        }
        let mut cfg = base.clone();
        cfg.output_dir = None;
        let applied = point
            .iter()
            .try_for_each(|(k, v)| cfg.set(k, v))
            .and_then(|_| cfg.validate());
        let row = match applied.and_then(|_| run(&cfg)) {
            Ok(outcome) => ReportRow::from_report(&key, &cfg, &outcome.report),
            Err(e) => {
                summary.failed += 1;
                ReportRow::failed(&key, &cfg, &e)
            }
        };
        writer.write(&row)?;
        summary.rows.push(row);
    }
    Ok(summary)
}

/// Values of `field` on the plane `index` normal to `plane`, with their 2D dimensions.
pub fn extract_slice(
    field: &[C64],
    dims: [usize; 3],
    plane: Plane,
    index: usize,
) -> Result<([usize; 3], Vec<C64>), ExperimentError> {
    let axis = plane.axis();
    if index >= dims[axis] {
        return Err(config_error(format!(
            "slice index {index} outside 0..{} along {plane}",
            dims[axis]
        )));
    }
    if field.len() != dims.iter().product::<usize>() {
        return Err(config_error("field does not match its dimensions"));
    }
    let (a, b) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let mut values = Vec::with_capacity(dims[a] * dims[b]);
    for t in 0..dims[b] {
        for s in 0..dims[a] {
            let mut p = [0; 3];
            p[axis] = index;
            p[a] = s;
            p[b] = t;
            values.push(field[p[0] + dims[0] * (p[1] + dims[1] * p[2])]);
        }
    }
    Ok(([dims[a], dims[b], 1], values))
}

/// Writes a binary P5 image of the real part, second coordinate pointing up.
pub fn write_pgm(path: &Path, dims: [usize; 3], values: &[C64]) -> Result<(), ExperimentError> {
    let (w, h) = (dims[0], dims[1]);
    let scale = values.iter().map(|z| z.re.abs()).fold(0.0, f64::max);
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "P5\n{w} {h}\n255\n")?;
    let mut row = vec![0u8; w];
    for t in (0..h).rev() {
        for (s, px) in row.iter_mut().enumerate() {
            let v = if scale > 0.0 { values[s + w * t].re / scale } else { 0.0 };
            *px = (127.5 * (v + 1.0)).round().clamp(0.0, 255.0) as u8;
        }
        out.write_all(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes the slice as `HSW1` at `path` and as a PGM next to it.
pub fn export_slice(
    field: &[C64],
    dims: [usize; 3],
    plane: Plane,
    index: usize,
    path: &Path,
) -> Result<(), ExperimentError> {
    let (slice_dims, values) = extract_slice(field, dims, plane, index)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    hsw::save_complex(path, slice_dims, &values)?;
    write_pgm(&path.with_extension("pgm"), slice_dims, &values)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replica_preset() {
        let cfg = ExperimentConfig::paper_replica();
        assert_eq!(cfg.q, 8);
        assert_eq!(cfg.sweep.boundary_layers, 9);
        assert_eq!(cfg.sweep.aux_layers, 5);
        assert_eq!(cfg.sweep.group_size, 4);
        assert_eq!(cfg.sweep.fronts, Fronts::Two);
        assert_eq!(cfg.gmres.tol, 1e-3);
        assert_eq!(cfg.gmres.restart, 40);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn parses_keys_and_comments() {
        let cfg = ExperimentConfig::parse(
            "# study\nomega_over_2pi = 2   # small\nvelocity = random\nvelocity_seed = 11\n\
             preconditioner = nonrecursive\nfronts = one\npml_faces = x2_low,x3_low\n",
        )
        .unwrap();
        assert_eq!(cfg.omega_over_2pi, 2.0);
        assert_eq!(cfg.velocity, VelocityKind::Random);
        assert_eq!(cfg.velocity_params.seed, Some(11));
        assert_eq!(cfg.preconditioner, PreconditionerKind::NonRecursive);
        assert_eq!(cfg.sweep.fronts, Fronts::One);
        assert_eq!(cfg.pml_faces.low[1], FaceBoundary::Pml);
        assert_eq!(cfg.pml_faces.low[0], FaceBoundary::Dirichlet);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentConfig::parse("bogus = 1").is_err());
        assert!(ExperimentConfig::parse("velocity = random").is_err());
        assert!(ExperimentConfig::parse("tol = 1.5").is_err());
        assert!(ExperimentConfig::parse("aux_layers = 0").is_err());
        assert!(ExperimentConfig::parse("q = eight").is_err());
        assert!(ExperimentConfig::parse("just words").is_err());
    }

    #[test]
    fn environment_overrides_file() {
        let mut cfg = ExperimentConfig::parse("omega_over_2pi = 2").unwrap();
        cfg.apply_env([
            ("HELMSWEEP_OMEGA_OVER_2PI".to_string(), "3".to_string()),
            ("PATH".to_string(), "/bin".to_string()),
        ])
        .unwrap();
        assert_eq!(cfg.omega_over_2pi, 3.0);
        assert!(cfg
            .apply_env([("HELMSWEEP_NOPE".to_string(), "1".to_string())])
            .is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = ExperimentConfig::paper_replica();
        cfg.set("velocity", "random").unwrap();
        cfg.set("velocity_seed", "5").unwrap();
        cfg.set("source_center", "0.5,0.4,0.3").unwrap();
        cfg.set("pml_faces", "two").unwrap();
        cfg.set("slice_plane", "x1").unwrap();
        let again = ExperimentConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn vary_grid_is_a_cartesian_product() {
        let grid: VaryGrid = "omega_over_2pi=2,4,8; preconditioner=recursive,nonrecursive"
            .parse()
            .unwrap();
        let points = grid.points();
        assert_eq!(points.len(), 6);
        assert_eq!(point_key(&points[1]), "omega_over_2pi=2;preconditioner=nonrecursive");
        assert!("".parse::<VaryGrid>().unwrap().points().is_empty());
        assert!("q".parse::<VaryGrid>().is_err());
    }

    #[test]
    fn slice_geometry() {
        let dims = [2, 3, 4];
        let field: Vec<C64> = (0..24).map(|i| C64::new(i as f64, 0.0)).collect();
        let (d, v) = extract_slice(&field, dims, Plane::X1, 1).unwrap();
        assert_eq!(d, [3, 4, 1]);
        assert_eq!(v[0].re, 1.0);
        assert_eq!(v[1].re, 3.0);
        assert_eq!(v[3].re, 7.0);
        let (d, v) = extract_slice(&field, dims, Plane::X3, 2).unwrap();
        assert_eq!(d, [2, 3, 1]);
        assert_eq!(v[0].re, 12.0);
        assert!(extract_slice(&field, dims, Plane::X2, 3).is_err());
    }
}
