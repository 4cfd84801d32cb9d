//! Plain sectioned `key = value` run configuration: parser, defaults, and a
//! canonical byte-exact echo used for `config.resolved`.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ambient::AmbientSpace;
use crate::curve::ImmersedCurve;
use crate::density::WeightFn;
use crate::error::ConfigError;
use crate::flow::FlowConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurvePreset {
    Circle,
    Ellipse,
    FigureEight,
    PerturbedFigureEight,
    Custom,
}

impl CurvePreset {
    fn as_str(&self) -> &'static str {
        match self {
            CurvePreset::Circle => "circle",
            CurvePreset::Ellipse => "ellipse",
            CurvePreset::FigureEight => "figure_eight",
            CurvePreset::PerturbedFigureEight => "perturbed_figure_eight",
            CurvePreset::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveConfig {
    pub preset: CurvePreset,
    pub r: f64,
    pub a: f64,
    pub n: usize,
    pub perturb_amp: f64,
    pub perturb_mode: u32,
    pub points_file: String,
}

impl Default for CurveConfig {
    fn default() -> Self {
        Self {
            preset: CurvePreset::Circle,
            r: 1.0,
            a: 1.0,
            n: 256,
            perturb_amp: 0.0,
            perturb_mode: 2,
            points_file: String::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightKind {
    One,
    ThetaSq,
    Moment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    /// `None` = auto (curvature centroid)
    pub x0: Option<(f64, f64)>,
    /// `None` = auto (estimated singular time)
    pub t0: Option<f64>,
    pub r: f64,
    pub f: WeightKind,
    pub y: f64,
    pub q: u32,
    pub eps: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            x0: None,
            t0: None,
            r: f64::INFINITY,
            f: WeightKind::One,
            y: 0.0,
            q: 1,
            eps: 0.01,
        }
    }
}

impl ProbeConfig {
    pub fn weight(&self) -> WeightFn {
        match self.f {
            WeightKind::One => WeightFn::One,
            WeightKind::ThetaSq => WeightFn::ThetaSq,
            WeightKind::Moment => WeightFn::Moment {
                y: self.y,
                q: self.q.max(1),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    pub out_dir: String,
    pub seed: u64,
    pub svg: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            out_dir: "out".into(),
            seed: 0,
            svg: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub ambient_n: usize,
    pub ambient_w: String,
    pub curve: CurveConfig,
    pub flow: FlowConfig,
    pub probe: ProbeConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            ambient_n: 1,
            ambient_w: String::new(),
            curve: CurveConfig::default(),
            flow: FlowConfig::default(),
            probe: ProbeConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v}")
    }
}

fn parse_f64(line: usize, key: &str, v: &str) -> Result<f64, ConfigError> {
    match v {
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => v.parse().map_err(|e| ConfigError::Line {
            line,
            msg: format!("{key}: bad float `{v}` ({e})"),
        }),
    }
}

fn parse_usize(line: usize, key: &str, v: &str) -> Result<usize, ConfigError> {
    v.parse().map_err(|e| ConfigError::Line {
        line,
        msg: format!("{key}: bad integer `{v}` ({e})"),
    })
}

fn parse_u64(line: usize, key: &str, v: &str) -> Result<u64, ConfigError> {
    v.parse().map_err(|e| ConfigError::Line {
        line,
        msg: format!("{key}: bad integer `{v}` ({e})"),
    })
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(ConfigError::Line {
            line,
            msg: format!("{key}: expected true|false, got `{v}`"),
        }),
    }
}

impl RunConfig {
    /// Parse the sectioned text format. Unknown sections or keys are errors
    /// with their line number.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') {
                if !line.ends_with(']') {
                    return Err(ConfigError::Line {
                        line: lineno,
                        msg: format!("unterminated section header `{line}`"),
                    });
                }
                section = line[1..line.len() - 1].trim().to_string();
                match section.as_str() {
                    "ambient" | "curve" | "flow" | "probe" | "output" => {}
                    other => {
                        return Err(ConfigError::Line {
                            line: lineno,
                            msg: format!("unknown section `[{other}]`"),
                        })
                    }
                }
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Line {
                line: lineno,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            cfg.apply(lineno, &section, key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(
        &mut self,
        line: usize,
        section: &str,
        key: &str,
        value: &str,
    ) -> Result<(), ConfigError> {
        let unknown = |line: usize| ConfigError::Line {
            line,
            msg: format!("unknown key `{key}` in section `[{section}]`"),
        };
        match section {
            "ambient" => match key {
                "n" => self.ambient_n = parse_usize(line, key, value)?,
                "W" => self.ambient_w = value.to_string(),
                _ => return Err(unknown(line)),
            },
            "curve" => match key {
                "preset" => {
                    self.curve.preset = match value {
                        "circle" => CurvePreset::Circle,
                        "ellipse" => CurvePreset::Ellipse,
                        "figure_eight" => CurvePreset::FigureEight,
                        "perturbed_figure_eight" => CurvePreset::PerturbedFigureEight,
                        "custom" => CurvePreset::Custom,
                        _ => {
                            return Err(ConfigError::Line {
                                line,
                                msg: format!("unknown preset `{value}`"),
                            })
                        }
                    }
                }
                "R" => self.curve.r = parse_f64(line, key, value)?,
                "a" => self.curve.a = parse_f64(line, key, value)?,
                "N" => self.curve.n = parse_usize(line, key, value)?,
                "perturb_amp" => self.curve.perturb_amp = parse_f64(line, key, value)?,
                "perturb_mode" => {
                    self.curve.perturb_mode = parse_u64(line, key, value)? as u32
                }
                "points_file" => self.curve.points_file = value.to_string(),
                _ => return Err(unknown(line)),
            },
            "flow" => match key {
                "t_end" => self.flow.t_end = parse_f64(line, key, value)?,
                "cfl" => self.flow.cfl = parse_f64(line, key, value)?,
                "dt_floor" => self.flow.dt_floor = parse_f64(line, key, value)?,
                "A2_ceiling" => self.flow.a2_ceiling = parse_f64(line, key, value)?,
                "remesh" => self.flow.remesh = parse_bool(line, key, value)?,
                "remesh_interval" => {
                    self.flow.remesh_interval = parse_u64(line, key, value)?
                }
                "remesh_until_A2" => {
                    self.flow.remesh_until_a2 = parse_f64(line, key, value)?
                }
                "snapshot_stride" => {
                    self.flow.snapshot_stride = parse_u64(line, key, value)?
                }
                _ => return Err(unknown(line)),
            },
            "probe" => match key {
                "x0" => {
                    self.probe.x0 = if value == "auto" {
                        None
                    } else {
                        let (re, im) = value.split_once(',').ok_or_else(|| {
                            ConfigError::Line {
                                line,
                                msg: format!("x0: expected `re,im` or auto, got `{value}`"),
                            }
                        })?;
                        Some((
                            parse_f64(line, key, re.trim())?,
                            parse_f64(line, key, im.trim())?,
                        ))
                    }
                }
                "t0" => {
                    self.probe.t0 = if value == "auto" {
                        None
                    } else {
                        Some(parse_f64(line, key, value)?)
                    }
                }
                "r" => self.probe.r = parse_f64(line, key, value)?,
                "f" => {
                    self.probe.f = match value {
                        "one" => WeightKind::One,
                        "theta2" => WeightKind::ThetaSq,
                        "moment" => WeightKind::Moment,
                        _ => {
                            return Err(ConfigError::Line {
                                line,
                                msg: format!("f: expected one|theta2|moment, got `{value}`"),
                            })
                        }
                    }
                }
                "y" => self.probe.y = parse_f64(line, key, value)?,
                "q" => self.probe.q = parse_u64(line, key, value)? as u32,
                "eps" => self.probe.eps = parse_f64(line, key, value)?,
                _ => return Err(unknown(line)),
            },
            "output" => match key {
                "out_dir" => self.output.out_dir = value.to_string(),
                "seed" => self.output.seed = parse_u64(line, key, value)?,
                "svg" => self.output.svg = parse_bool(line, key, value)?,
                _ => return Err(unknown(line)),
            },
            "" => {
                return Err(ConfigError::Line {
                    line,
                    msg: format!("key `{key}` outside any section"),
                })
            }
            _ => unreachable!("section names are validated at the header"),
        }
        Ok(())
    }

    /// Programmatic override of a single `section.key`, used by sweeps.
    pub fn set(&mut self, section: &str, key: &str, value: &str) -> Result<(), ConfigError> {
        match section {
            "ambient" | "curve" | "flow" | "probe" | "output" => {}
            other => {
                return Err(ConfigError::Other(format!("unknown section `{other}`")));
            }
        }
        self.apply(0, section, key, value)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.ambient_n != 1 && self.ambient_n != 2 {
            return Err(ConfigError::Other(format!(
                "ambient n = {} unsupported",
                self.ambient_n
            )));
        }
        // weight spec must parse
        AmbientSpace::from_weight_spec(self.ambient_n, &self.ambient_w)?;
        if !(self.flow.cfl > 0.0 && self.flow.cfl <= 0.5) {
            return Err(ConfigError::Other(format!(
                "flow cfl = {} outside (0, 0.5]",
                self.flow.cfl
            )));
        }
        if self.flow.dt_floor <= 0.0 {
            return Err(ConfigError::Other("flow dt_floor must be positive".into()));
        }
        if self.probe.q == 0 {
            return Err(ConfigError::Other("probe q must be >= 1".into()));
        }
        if !(self.probe.r > 0.0) {
            return Err(ConfigError::Other("probe r must be positive".into()));
        }
        Ok(())
    }

    /// Canonical echo: fixed section and key order, shortest round-trip
    /// float formatting. Parsing the echo reproduces the config exactly.
    pub fn resolved_text(&self) -> String {
        let mut s = String::new();
        s.push_str("[ambient]\n");
        s.push_str(&format!("n = {}\n", self.ambient_n));
        s.push_str(&format!("W = {}\n", self.ambient_w));
        s.push_str("\n[curve]\n");
        s.push_str(&format!("preset = {}\n", self.curve.preset.as_str()));
        s.push_str(&format!("R = {}\n", fmt_f64(self.curve.r)));
        s.push_str(&format!("a = {}\n", fmt_f64(self.curve.a)));
        s.push_str(&format!("N = {}\n", self.curve.n));
        s.push_str(&format!("perturb_amp = {}\n", fmt_f64(self.curve.perturb_amp)));
        s.push_str(&format!("perturb_mode = {}\n", self.curve.perturb_mode));
        s.push_str(&format!("points_file = {}\n", self.curve.points_file));
        s.push_str("\n[flow]\n");
        s.push_str(&format!("t_end = {}\n", fmt_f64(self.flow.t_end)));
        s.push_str(&format!("cfl = {}\n", fmt_f64(self.flow.cfl)));
        s.push_str(&format!("dt_floor = {}\n", fmt_f64(self.flow.dt_floor)));
        s.push_str(&format!("A2_ceiling = {}\n", fmt_f64(self.flow.a2_ceiling)));
        s.push_str(&format!("remesh = {}\n", self.flow.remesh));
        s.push_str(&format!("remesh_interval = {}\n", self.flow.remesh_interval));
        s.push_str(&format!(
            "remesh_until_A2 = {}\n",
            fmt_f64(self.flow.remesh_until_a2)
        ));
        s.push_str(&format!("snapshot_stride = {}\n", self.flow.snapshot_stride));
        s.push_str("\n[probe]\n");
        match self.probe.x0 {
            None => s.push_str("x0 = auto\n"),
            Some((re, im)) => s.push_str(&format!("x0 = {},{}\n", fmt_f64(re), fmt_f64(im))),
        }
        match self.probe.t0 {
            None => s.push_str("t0 = auto\n"),
            Some(v) => s.push_str(&format!("t0 = {}\n", fmt_f64(v))),
        }
        s.push_str(&format!("r = {}\n", fmt_f64(self.probe.r)));
        s.push_str(&format!(
            "f = {}\n",
            match self.probe.f {
                WeightKind::One => "one",
                WeightKind::ThetaSq => "theta2",
                WeightKind::Moment => "moment",
            }
        ));
        s.push_str(&format!("y = {}\n", fmt_f64(self.probe.y)));
        s.push_str(&format!("q = {}\n", self.probe.q));
        s.push_str(&format!("eps = {}\n", fmt_f64(self.probe.eps)));
        s.push_str("\n[output]\n");
        s.push_str(&format!("out_dir = {}\n", self.output.out_dir));
        s.push_str(&format!("seed = {}\n", self.output.seed));
        s.push_str(&format!("svg = {}\n", self.output.svg));
        s
    }

    pub fn ambient(&self) -> Result<AmbientSpace, ConfigError> {
        Ok(AmbientSpace::from_weight_spec(
            self.ambient_n,
            &self.ambient_w,
        )?)
    }

    /// Build the initial curve from the `[curve]` section (seeded
    /// perturbations use `[output] seed`).
    pub fn initial_curve(&self) -> Result<ImmersedCurve, ConfigError> {
        let c = &self.curve;
        let curve = match c.preset {
            CurvePreset::Circle => ImmersedCurve::circle(c.r, c.n),
            CurvePreset::Ellipse => ImmersedCurve::ellipse(c.r, c.a, c.n),
            CurvePreset::FigureEight => ImmersedCurve::figure_eight(c.r, c.a, c.n),
            CurvePreset::PerturbedFigureEight => ImmersedCurve::perturbed_figure_eight(
                c.r,
                c.a,
                c.n,
                c.perturb_amp,
                c.perturb_mode,
                self.output.seed,
            ),
            CurvePreset::Custom => {
                let text = std::fs::read_to_string(&c.points_file).map_err(|e| {
                    ConfigError::Other(format!(
                        "cannot read points_file `{}`: {e}",
                        c.points_file
                    ))
                })?;
                let mut points = Vec::new();
                for (i, line) in text.lines().enumerate() {
                    let line = line.trim();
                    if line.is_empty() || line.starts_with('#') || line == "x,y" {
                        continue;
                    }
                    let (x, y) = line.split_once(',').ok_or_else(|| ConfigError::Line {
                        line: i + 1,
                        msg: format!("points_file: expected `x,y`, got `{line}`"),
                    })?;
                    points.push(Complex64::new(
                        parse_f64(i + 1, "x", x.trim())?,
                        parse_f64(i + 1, "y", y.trim())?,
                    ));
                }
                ImmersedCurve { points, t: 0.0 }
            }
        };
        curve
            .validate()
            .map_err(|e| ConfigError::Other(e.to_string()))?;
        Ok(curve)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Other(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_byte_exact() {
        let cfg = RunConfig::default();
        let echo = cfg.resolved_text();
        let parsed = RunConfig::parse(&echo).unwrap();
        assert_eq!(parsed, cfg);
        assert_eq!(parsed.resolved_text(), echo);
    }

    #[test]
    fn nontrivial_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.ambient_w = "1:0.3,0".into();
        cfg.curve.preset = CurvePreset::PerturbedFigureEight;
        cfg.curve.a = 1.2;
        cfg.curve.n = 512;
        cfg.curve.perturb_amp = 0.013;
        cfg.flow.t_end = 0.125;
        cfg.flow.dt_floor = 1e-11;
        cfg.flow.remesh = true;
        cfg.probe.x0 = Some((0.25, -0.5));
        cfg.probe.t0 = Some(0.11);
        cfg.probe.f = WeightKind::Moment;
        cfg.probe.q = 2;
        cfg.output.seed = 42;
        let echo = cfg.resolved_text();
        let parsed = RunConfig::parse(&echo).unwrap();
        assert_eq!(parsed, cfg);
        assert_eq!(parsed.resolved_text(), echo);
    }

    #[test]
    fn malformed_key_reports_line_number() {
        let text = "[flow]\nt_end = 0.1\nbogus_key = 3\n";
        match RunConfig::parse(text) {
            Err(ConfigError::Line { line, msg }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("bogus_key"));
            }
            other => panic!("expected line error, got {other:?}"),
        }
    }

    #[test]
    fn bad_float_reports_line_number() {
        let text = "[curve]\nR = soup\n";
        match RunConfig::parse(text) {
            Err(ConfigError::Line { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected line error, got {other:?}"),
        }
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let text = "# full-line comment\n[curve]\nN = 128  # trailing comment\n\n";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.curve.n, 128);
    }

    #[test]
    fn preset_curves_build() {
        for preset in ["circle", "ellipse", "figure_eight", "perturbed_figure_eight"] {
            let text = format!("[curve]\npreset = {preset}\nN = 64\n");
            let cfg = RunConfig::parse(&text).unwrap();
            let curve = cfg.initial_curve().unwrap();
            assert_eq!(curve.len(), 64);
        }
    }

    #[test]
    fn invalid_cfl_rejected() {
        let text = "[flow]\ncfl = 0.9\n";
        assert!(RunConfig::parse(text).is_err());
    }
}
