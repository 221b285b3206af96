use std::f64::consts::PI;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ranlase_core::medium::{effective_occupation, gamma_critical};
use ranlase_core::{DetectionConfig, Geometry, MediumSpec, Response};

use crate::table::Format;

#[derive(Parser, Debug)]
#[command(name = "ranlase", version, about = "Photocount statistics of thermal and amplified emission from random media")]
#[command(args_override_self = true)]
pub struct Cli {
    /// Flat key = value file of default flags; command-line flags override it
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Density of scattering strengths on a grid refined at the support edges
    #[command(args_override_self = true)]
    Density(DensityArgs),
    /// Mean, variance and nu_eff/nu of the photocount, optionally swept
    #[command(args_override_self = true)]
    Stats(StatsArgs),
    /// Photocount distribution P(n)
    #[command(args_override_self = true)]
    Pmf(PmfArgs),
    /// Random-matrix sampling checked against the analytic density
    #[command(args_override_self = true)]
    Montecarlo(MonteCarloArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GeometryArg {
    Cavity,
    /// Semi-infinite unless --length is given
    Waveguide,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ResponseArg {
    Absorbing,
    Amplifying,
}

#[derive(Args, Debug, Clone)]
pub struct MediumArgs {
    #[arg(long, value_enum, default_value_t = GeometryArg::Cavity)]
    pub geometry: GeometryArg,
    #[arg(long, value_enum, default_value_t = ResponseArg::Absorbing)]
    pub response: ResponseArg,
    /// Absorption or amplification rate gamma
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub gamma: f64,
    /// Number of modes N
    #[arg(long = "N", visible_alias = "modes", default_value_t = 1)]
    pub modes: usize,
    /// Waveguide length in mean free paths, L/l
    #[arg(long)]
    pub length: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct DetectionArgs {
    /// Detector efficiency alpha
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Occupation f; defaults to 1 for absorbing and -1 for amplifying media
    #[arg(long, allow_negative_numbers = true, conflicts_with = "x")]
    pub f: Option<f64>,
    /// hbar omega / k T, giving f through the Bose-Einstein function
    #[arg(long, allow_negative_numbers = true)]
    pub x: Option<f64>,
    /// Counting time t
    #[arg(long, default_value_t = 100.0)]
    pub t: f64,
    /// Detected bandwidth delta omega (narrow band)
    #[arg(long = "delta-omega", default_value_t = 1.0)]
    pub delta_omega: f64,
    /// Degrees of freedom nu = N t delta_omega / 2 pi; sets t
    #[arg(long, conflicts_with = "t")]
    pub nu: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    Gamma,
    Gamma0,
    /// gamma / gamma_c of a finite waveguide
    GammaRatio,
    Length,
    Alpha,
    F,
    Nu,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            Self::Gamma => "gamma",
            Self::Gamma0 => "gamma0",
            Self::GammaRatio => "gamma_ratio",
            Self::Length => "length",
            Self::Alpha => "alpha",
            Self::F => "f",
            Self::Nu => "nu",
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct SweepArgs {
    #[arg(long = "sweep-param", value_enum)]
    pub param: Option<SweepParam>,
    #[arg(long = "sweep-min", allow_negative_numbers = true, requires = "param")]
    pub min: Option<f64>,
    #[arg(long = "sweep-max", allow_negative_numbers = true, requires = "param")]
    pub max: Option<f64>,
    #[arg(long = "sweep-points", default_value_t = 51)]
    pub points: usize,
    /// Logarithmic spacing
    #[arg(long = "sweep-log")]
    pub log: bool,
}

#[derive(Args, Debug, Clone)]
pub struct OutputArgs {
    /// Output file; standard output when absent
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CavityFormula {
    Full,
    Weak,
}

#[derive(Args, Debug, Clone)]
pub struct DensityArgs {
    #[command(flatten)]
    pub medium: MediumArgs,
    /// Amplifying dual density sigma^-2 rho(1/sigma)
    #[arg(long)]
    pub dual: bool,
    /// Cavity formula; the weak form is valid for gamma << 1
    #[arg(long, value_enum, default_value_t = CavityFormula::Full)]
    pub formula: CavityFormula,
    #[arg(long, default_value_t = 400)]
    pub points: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BandArg {
    Narrow,
    /// Lorentzian profile of the rate with peak --gamma0 and width --width
    Broad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StatsMethod {
    Closed,
    /// Moments of the density by quadrature (narrow band only)
    Quadrature,
}

#[derive(Args, Debug, Clone)]
pub struct StatsArgs {
    #[command(flatten)]
    pub medium: MediumArgs,
    #[command(flatten)]
    pub detection: DetectionArgs,
    #[arg(long, value_enum, default_value_t = BandArg::Narrow)]
    pub band: BandArg,
    /// Peak rate of the Lorentzian band; defaults to --gamma
    #[arg(long)]
    pub gamma0: Option<f64>,
    /// Lorentzian width Gamma
    #[arg(long, default_value_t = 1.0)]
    pub width: f64,
    #[arg(long, value_enum, default_value_t = StatsMethod::Closed)]
    pub method: StatsMethod,
    #[command(flatten)]
    pub sweep: SweepArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PmfModel {
    BlackBody,
    Poisson,
    Glauber,
    Medium,
}

#[derive(Args, Debug, Clone)]
pub struct PmfArgs {
    #[arg(long, value_enum, default_value_t = PmfModel::Medium)]
    pub model: PmfModel,
    #[command(flatten)]
    pub medium: MediumArgs,
    #[command(flatten)]
    pub detection: DetectionArgs,
    /// Poisson mean
    #[arg(long)]
    pub mean: Option<f64>,
    /// Glauber parameter kappa (nu_eff of the distribution)
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Largest count tabulated; chosen automatically when absent
    #[arg(long = "n-max")]
    pub n_max: Option<usize>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Check {
    Both,
    Histogram,
    Mean,
}

#[derive(Args, Debug, Clone)]
pub struct MonteCarloArgs {
    #[command(flatten)]
    pub medium: MediumArgs,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    /// Compare reciprocal strengths with the dual density
    #[arg(long)]
    pub dual: bool,
    /// Transmission of each fictitious-channel barrier
    #[arg(long, default_value_t = 0.02)]
    pub barrier: f64,
    #[arg(long, default_value_t = 40)]
    pub bins: usize,
    /// p-value below which the histogram check fails
    #[arg(long, default_value_t = 0.01)]
    pub significance: f64,
    #[arg(long, value_enum, default_value_t = Check::Both)]
    pub check: Check,
    /// Stop drawing after this many seconds; the result then depends on timing
    #[arg(long = "time-limit")]
    pub time_limit: Option<f64>,
    /// Write the raw strengths of every sample to this file
    #[arg(long)]
    pub strengths: Option<PathBuf>,
    /// Waveguide slice length in mean free paths
    #[arg(long, default_value_t = 0.05)]
    pub slice: f64,
    /// Recalibrate the waveguide reflection coefficient against Ohm's law first
    #[arg(long)]
    pub calibrate: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Every parameter a point of a run can depend on, so sweeps can set any of them.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub geometry: GeometryArg,
    pub response: ResponseArg,
    pub gamma: f64,
    pub gamma0: Option<f64>,
    pub modes: usize,
    pub length: Option<f64>,
    pub alpha: f64,
    pub f: Option<f64>,
    pub x: Option<f64>,
    pub t: f64,
    pub delta_omega: f64,
    pub nu: Option<f64>,
    pub width: f64,
}

impl Params {
    pub fn new(m: &MediumArgs, d: Option<&DetectionArgs>) -> Self {
        let d = d.cloned().unwrap_or(DetectionArgs {
            alpha: 1.0,
            f: None,
            x: None,
            t: 100.0,
            delta_omega: 1.0,
            nu: None,
        });
        Self {
            geometry: m.geometry,
            response: m.response,
            gamma: m.gamma,
            gamma0: None,
            modes: m.modes,
            length: m.length,
            alpha: d.alpha,
            f: d.f,
            x: d.x,
            t: d.t,
            delta_omega: d.delta_omega,
            nu: d.nu,
            width: 1.0,
        }
    }

    pub fn response(&self) -> Response {
        match self.response {
            ResponseArg::Absorbing => Response::Absorbing,
            ResponseArg::Amplifying => Response::Amplifying,
        }
    }

    pub fn spec(&self) -> MediumSpec {
        let r = self.response();
        match (self.geometry, self.length) {
            (GeometryArg::Cavity, _) => MediumSpec::cavity(r, self.gamma, self.modes),
            (GeometryArg::Waveguide, None) => MediumSpec::waveguide(r, self.gamma, self.modes),
            (GeometryArg::Waveguide, Some(l)) => MediumSpec::finite_waveguide(r, self.gamma, self.modes, l),
        }
    }

    pub fn geometry(&self) -> Geometry {
        self.spec().geometry
    }

    pub fn occupation(&self) -> ranlase_core::Result<f64> {
        match (self.f, self.x) {
            (Some(f), _) => Ok(f),
            (None, Some(x)) => effective_occupation(self.response(), x),
            (None, None) => Ok(match self.response {
                ResponseArg::Absorbing => 1.0,
                ResponseArg::Amplifying => -1.0,
            }),
        }
    }

    fn count_time(&self) -> f64 {
        match self.nu {
            Some(nu) => 2.0 * PI * nu / (self.modes as f64 * self.delta_omega),
            None => self.t,
        }
    }

    pub fn narrow(&self) -> ranlase_core::Result<DetectionConfig> {
        Ok(DetectionConfig::narrow(self.alpha, self.count_time(), self.delta_omega, self.occupation()?))
    }

    pub fn broad(&self) -> ranlase_core::Result<DetectionConfig> {
        let g0 = self.gamma0.unwrap_or(self.gamma);
        Ok(DetectionConfig::broad(self.alpha, self.count_time(), self.width, g0, self.occupation()?))
    }

    pub fn set(&mut self, param: SweepParam, value: f64) -> ranlase_core::Result<()> {
        match param {
            SweepParam::Gamma => self.gamma = value,
            SweepParam::Gamma0 => self.gamma0 = Some(value),
            SweepParam::GammaRatio => {
                let Some(l) = self.length else {
                    return Err(ranlase_core::Error::Domain("sweeping gamma/gamma_c needs --length".into()));
                };
                self.gamma = value * gamma_critical(l)?;
            }
            SweepParam::Length => self.length = Some(value),
            SweepParam::Alpha => self.alpha = value,
            SweepParam::F => {
                self.f = Some(value);
                self.x = None;
            }
            SweepParam::Nu => self.nu = Some(value),
        }
        Ok(())
    }

    /// Parameter list for the provenance header.
    pub fn describe(&self) -> Vec<(&'static str, String)> {
        let mut v = vec![
            (
                "geometry",
                match self.geometry() {
                    Geometry::CavityHole => "cavity",
                    Geometry::WaveguideSemiInfinite => "semi-infinite waveguide",
                    Geometry::WaveguideFinite => "finite waveguide",
                }
                .to_string(),
            ),
            ("response", format!("{:?}", self.response()).to_lowercase()),
            ("gamma", self.gamma.to_string()),
            ("N", self.modes.to_string()),
        ];
        if let Some(l) = self.length {
            v.push(("length", l.to_string()));
        }
        v
    }

    pub fn describe_detection(&self) -> Vec<(&'static str, String)> {
        let mut v = vec![
            ("alpha", self.alpha.to_string()),
            ("f", self.occupation().map_or_else(|e| e.to_string(), |f| f.to_string())),
            ("t", self.count_time().to_string()),
            ("delta_omega", self.delta_omega.to_string()),
        ];
        if let Some(x) = self.x {
            v.push(("x", x.to_string()));
        }
        v
    }
}

impl SweepArgs {
    pub fn grid(&self) -> ranlase_core::Result<Option<Vec<f64>>> {
        use ranlase_core::Error::Domain;
        let Some(_) = self.param else { return Ok(None) };
        let (Some(lo), Some(hi)) = (self.min, self.max) else {
            return Err(Domain("a sweep needs --sweep-min and --sweep-max".into()));
        };
        if self.points < 2 {
            return Err(Domain(format!("a sweep needs at least 2 points, got {}", self.points)));
        }
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Domain("sweep bounds must be finite".into()));
        }
        let last = (self.points - 1) as f64;
        if self.log {
            if !(lo > 0.0 && hi > 0.0) {
                return Err(Domain("a logarithmic sweep needs positive bounds".into()));
            }
            let (a, b) = (lo.ln(), hi.ln());
            Ok(Some((0..self.points).map(|i| (a + (b - a) * i as f64 / last).exp()).collect()))
        } else {
            Ok(Some((0..self.points).map(|i| lo + (hi - lo) * i as f64 / last).collect()))
        }
    }
}
