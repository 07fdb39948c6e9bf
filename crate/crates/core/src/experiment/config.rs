//! Flat `key = value` experiment configurations.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kernels::{
    constant_eta, gaussian_psi, hilbert_kernel, inverse_power_kernel, riesz_kernel, standard_bump, zero_psi,
    ConvolutionKernel, Localizer,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CheckId {
    CertifyKernel,
    LocalizeCompare,
    PvAccuracy,
    Norms,
    AtomDecompose,
    Thm51,
    Thm54,
    Prop47,
    Prop48,
    Thm411,
    Prop412,
    Cor414,
    Ratios,
}

impl CheckId {
    pub const ALL: [CheckId; 13] = [
        CheckId::CertifyKernel,
        CheckId::LocalizeCompare,
        CheckId::PvAccuracy,
        CheckId::Norms,
        CheckId::AtomDecompose,
        CheckId::Thm51,
        CheckId::Thm54,
        CheckId::Prop47,
        CheckId::Prop48,
        CheckId::Thm411,
        CheckId::Prop412,
        CheckId::Cor414,
        CheckId::Ratios,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            CheckId::CertifyKernel => "certify-kernel",
            CheckId::LocalizeCompare => "localize-compare",
            CheckId::PvAccuracy => "pv-accuracy",
            CheckId::Norms => "norms",
            CheckId::AtomDecompose => "atom-decompose",
            CheckId::Thm51 => "thm51",
            CheckId::Thm54 => "thm54",
            CheckId::Prop47 => "prop47",
            CheckId::Prop48 => "prop48",
            CheckId::Thm411 => "thm411",
            CheckId::Prop412 => "prop412",
            CheckId::Cor414 => "cor414",
            CheckId::Ratios => "ratios",
        }
    }
}

impl fmt::Display for CheckId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CheckId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CheckId::ALL.into_iter().find(|c| c.as_str() == s.trim()).ok_or_else(|| Error::UnknownCheck(s.trim().into()))
    }
}

/// Everything a run depends on. Two runs with equal configs produce
/// byte-identical CSV output.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub check: CheckId,
    pub dim: usize,
    /// Grid sizes; two or more give a refinement comparison.
    pub sizes: Vec<usize>,
    pub half_width: f64,
    /// Kernel specs: `hilbert`, `riesz:j:n`, `inverse-power:n`, each optionally
    /// followed by `*<eta spec>` for the localized product.
    pub kernels: Vec<String>,
    /// Expected certificate verdict per kernel, `pass` or `fail`; missing
    /// entries default to `pass`.
    pub expect: Vec<String>,
    /// `bump` or `const:c`.
    pub eta: String,
    /// `gaussian:sigma` or `zero`.
    pub psi: String,
    /// Builtin names or `.gfn` paths.
    pub b: Vec<String>,
    pub radii: Vec<f64>,
    /// Radii of the mean bound sweep; the radii below 1 when empty.
    pub mean_radii: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub budget: usize,
    pub mu: f64,
    pub delta: f64,
    pub p: f64,
    /// Box half-width for the shell profile of the error kernel.
    pub star_half_width: f64,
    pub center_step: f64,
    pub center_range: f64,
    /// Largest radius in the ball family.
    pub family_radius: f64,
    pub force: bool,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            check: CheckId::Norms,
            dim: 1,
            sizes: vec![1024],
            half_width: 4.0,
            kernels: vec!["hilbert".into()],
            expect: Vec::new(),
            eta: "bump".into(),
            psi: "gaussian:0.25".into(),
            b: vec!["clipped-log".into()],
            radii: dyadic_radii(-6, 1),
            mean_radii: Vec::new(),
            trials: 100,
            seed: 42,
            budget: 20000,
            mu: 0.75,
            delta: 1.0,
            p: 2.0,
            star_half_width: 32.0,
            center_step: 1.0 / 64.0,
            center_range: 0.5,
            family_radius: 2.0,
            force: false,
            output: None,
        }
    }
}

/// `2^lo, ..., 2^hi`.
pub fn dyadic_radii(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|k| (k as f64).exp2()).collect()
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|_| Error::Parse(format!("bad entry `{s}` for `{key}`"))))
        .collect()
}

fn parse_one<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse::<T>().map_err(|_| Error::Parse(format!("bad value `{v}` for `{key}`")))
}

/// `dyadic:lo:hi` or a comma list.
fn parse_radii(v: &str) -> Result<Vec<f64>> {
    if let Some(rest) = v.trim().strip_prefix("dyadic:") {
        let (lo, hi) = rest.split_once(':').ok_or_else(|| Error::Parse(format!("bad radii `{v}`")))?;
        let lo: i32 = parse_one("radii", lo)?;
        let hi: i32 = parse_one("radii", hi)?;
        return Ok(dyadic_radii(lo, hi));
    }
    parse_list("radii", v)
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", lineno + 1)))?;
            let k = k.trim().to_ascii_lowercase();
            if entries.insert(k.clone(), v.trim().to_string()).is_some() {
                return Err(Error::Parse(format!("line {}: duplicate key `{k}`", lineno + 1)));
            }
        }
        let mut c = ExperimentConfig::default();
        let check = entries.remove("check").ok_or_else(|| Error::Parse("missing `check`".into()))?;
        c.check = check.parse()?;
        let kernels_given = entries.contains_key("kernels") || entries.contains_key("kernel");
        for (k, v) in entries {
            match k.as_str() {
                "dim" => c.dim = parse_one(&k, &v)?,
                "n" => c.sizes = parse_list(&k, &v)?,
                "l" => c.half_width = parse_one(&k, &v)?,
                "kernels" | "kernel" => c.kernels = parse_list(&k, &v)?,
                "expect" => c.expect = parse_list(&k, &v)?,
                "eta" => c.eta = v,
                "psi" => c.psi = v,
                "b" => c.b = parse_list(&k, &v)?,
                "radii" => c.radii = parse_radii(&v)?,
                "mean_radii" => c.mean_radii = parse_radii(&v)?,
                "trials" => c.trials = parse_one(&k, &v)?,
                "seed" => c.seed = parse_one(&k, &v)?,
                "budget" => c.budget = parse_one(&k, &v)?,
                "mu" => c.mu = parse_one(&k, &v)?,
                "delta" => c.delta = parse_one(&k, &v)?,
                "p" => c.p = parse_one(&k, &v)?,
                "star_l" => c.star_half_width = parse_one(&k, &v)?,
                "center_step" => c.center_step = parse_one(&k, &v)?,
                "center_range" => c.center_range = parse_one(&k, &v)?,
                "family_radius" => c.family_radius = parse_one(&k, &v)?,
                "force" => c.force = parse_one(&k, &v)?,
                "out" => c.output = Some(PathBuf::from(v)),
                _ => return Err(Error::Parse(format!("unknown key `{k}`"))),
            }
        }
        if !kernels_given && c.dim == 2 {
            c.kernels = vec!["riesz:1:2".into()];
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dim == 1 || self.dim == 2) {
            return Err(Error::Parse(format!("dim must be 1 or 2, got {}", self.dim)));
        }
        if self.sizes.is_empty() {
            return Err(Error::Parse("`n` needs at least one grid size".into()));
        }
        if self.radii.iter().chain(&self.mean_radii).any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::Parse("radii must be positive".into()));
        }
        if !(self.half_width > 0.0 && self.center_step > 0.0) {
            return Err(Error::Parse("`l` and `center_step` must be positive".into()));
        }
        // Kernel certification accepts kernels of either dimension.
        let dim = (self.check != CheckId::CertifyKernel).then_some(self.dim);
        for k in &self.kernels {
            parse_kernel(k, dim)?;
        }
        if let Some(e) = self.expect.iter().find(|e| *e != "pass" && *e != "fail") {
            return Err(Error::Parse(format!("expected verdict must be `pass` or `fail`, got `{e}`")));
        }
        parse_eta(&self.eta, self.dim)?;
        parse_psi(&self.psi, self.dim)?;
        Ok(())
    }

    /// Canonical text form; parsing it gives back an equal config.
    pub fn to_text(&self) -> String {
        let join = |v: &[String]| v.join(",");
        let nums = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        line("check", self.check.to_string());
        line("dim", self.dim.to_string());
        line("n", self.sizes.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","));
        line("l", self.half_width.to_string());
        line("kernels", join(&self.kernels));
        if !self.expect.is_empty() {
            line("expect", join(&self.expect));
        }
        line("eta", self.eta.clone());
        line("psi", self.psi.clone());
        line("b", join(&self.b));
        line("radii", nums(&self.radii));
        if !self.mean_radii.is_empty() {
            line("mean_radii", nums(&self.mean_radii));
        }
        line("trials", self.trials.to_string());
        line("seed", self.seed.to_string());
        line("budget", self.budget.to_string());
        line("mu", self.mu.to_string());
        line("delta", self.delta.to_string());
        line("p", self.p.to_string());
        line("star_l", self.star_half_width.to_string());
        line("center_step", self.center_step.to_string());
        line("center_range", self.center_range.to_string());
        line("family_radius", self.family_radius.to_string());
        line("force", self.force.to_string());
        if let Some(o) = &self.output {
            line("out", o.display().to_string());
        }
        s
    }
}

/// Parses a kernel spec, applying `*eta` localization when present. With
/// `dim` given, kernels of another dimension are rejected.
pub fn parse_kernel(spec: &str, dim: Option<usize>) -> Result<ConvolutionKernel> {
    let (base, eta) = match spec.split_once('*') {
        Some((b, e)) => (b.trim(), Some(e.trim())),
        None => (spec.trim(), None),
    };
    let parts: Vec<&str> = base.split(':').collect();
    let int = |s: &str| s.parse::<usize>().map_err(|_| Error::Parse(format!("bad kernel spec `{spec}`")));
    let k = match parts.as_slice() {
        ["hilbert"] => hilbert_kernel(),
        ["riesz", j, n] => riesz_kernel(int(j)?, int(n)?)?,
        ["inverse-power", n] => inverse_power_kernel(int(n)?),
        _ => return Err(Error::Parse(format!("unknown kernel `{spec}`"))),
    };
    if let Some(d) = dim.filter(|d| *d != k.dim) {
        return Err(Error::Parse(format!("kernel `{spec}` is {}-dimensional, run is {d}-dimensional", k.dim)));
    }
    match eta {
        Some(e) => Ok(k.localized(&parse_eta(e, k.dim)?)),
        None => Ok(k),
    }
}

pub fn parse_eta(spec: &str, dim: usize) -> Result<Localizer> {
    match spec.trim().split_once(':') {
        None if spec.trim() == "bump" => Ok(standard_bump(dim)),
        Some(("const", c)) => Ok(constant_eta(dim, parse_one("eta", c)?)),
        _ => Err(Error::Parse(format!("unknown cutoff `{spec}`"))),
    }
}

pub fn parse_psi(spec: &str, dim: usize) -> Result<Localizer> {
    match spec.trim().split_once(':') {
        None if spec.trim() == "zero" => Ok(zero_psi(dim)),
        Some(("gaussian", s)) => Ok(gaussian_psi(dim, parse_one("psi", s)?)),
        _ => Err(Error::Parse(format!("unknown mollifier `{spec}`"))),
    }
}
