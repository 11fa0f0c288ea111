//! Flat key-value run configuration.
//!
//! The file format is line oriented: `[section]` headers followed by
//! `key = value` pairs, `#` comments, blank lines ignored. Physical
//! parameters (SI units) and dimensionless parameters are both accepted;
//! when physical values are present they are reduced through the
//! nondimensionalization map and echoed to the run log.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::limit2d::TimeScheme;
use crate::loads::{build_scenario, LoadSpec, Ramp, Scenario, ScenarioAmplitudes};
use crate::params::{derive_dimensionless, DimensionlessParams, PhysicalParams};
use crate::{Error, Result};

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub params: DimensionlessParams,
    /// Physical inputs, when the config supplied them.
    pub physical: Option<PhysicalParams>,
    pub nx: usize,
    pub nz: usize,
    pub t_end: f64,
    pub nsteps: usize,
    pub scheme: TimeScheme,
    pub scenario: Scenario,
    pub amplitudes: ScenarioAmplitudes,
    pub ramp_t0: f64,
    pub eps_list: Vec<f64>,
    pub mms_grids: Vec<usize>,
    pub mms_temporal_steps: Vec<usize>,
    pub output_dir: PathBuf,
    pub write_vtk: bool,
    /// Write trajectory snapshots every N steps.
    pub output_every: usize,
    pub export_matrices: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            params: DimensionlessParams::default(),
            physical: None,
            nx: 16,
            nz: 8,
            t_end: 1.0,
            nsteps: 50,
            scheme: TimeScheme::BackwardEuler,
            scenario: Scenario::Mixed,
            amplitudes: ScenarioAmplitudes::default(),
            ramp_t0: 0.25,
            eps_list: vec![0.4, 0.2, 0.1, 0.05],
            mms_grids: vec![16, 32, 64],
            mms_temporal_steps: vec![8, 16, 32],
            output_dir: PathBuf::from("out"),
            write_vtk: false,
            output_every: 10,
            export_matrices: false,
        }
    }
}

impl RunConfig {
    /// Parse a config file; unknown keys are rejected with line context.
    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str_inner(&text)
    }

    pub fn from_text(text: &str) -> Result<RunConfig> {
        Self::from_str_inner(text)
    }

    fn from_str_inner(text: &str) -> Result<RunConfig> {
        let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                section = line[1..line.len() - 1].trim().to_string();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config {
                    line: lineno + 1,
                    msg: format!("expected `key = value`, got `{line}`"),
                });
            };
            let full = if section.is_empty() {
                key.trim().to_string()
            } else {
                format!("{section}.{}", key.trim())
            };
            entries.insert(full, (lineno + 1, value.trim().to_string()));
        }
        Self::from_entries(entries)
    }

    fn from_entries(mut entries: BTreeMap<String, (usize, String)>) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();

        fn take(map: &mut BTreeMap<String, (usize, String)>, key: &str) -> Option<(usize, String)> {
            map.remove(key)
        }
        fn parse_f64(key: &str, line: usize, v: &str) -> Result<f64> {
            v.parse().map_err(|_| Error::Config {
                line,
                msg: format!("key `{key}`: expected a number, got `{v}`"),
            })
        }
        fn parse_usize(key: &str, line: usize, v: &str) -> Result<usize> {
            v.parse().map_err(|_| Error::Config {
                line,
                msg: format!("key `{key}`: expected an integer, got `{v}`"),
            })
        }
        fn parse_list_f64(key: &str, line: usize, v: &str) -> Result<Vec<f64>> {
            v.split(',')
                .map(|s| parse_f64(key, line, s.trim()))
                .collect()
        }
        fn parse_list_usize(key: &str, line: usize, v: &str) -> Result<Vec<usize>> {
            v.split(',')
                .map(|s| parse_usize(key, line, s.trim()))
                .collect()
        }

        // physical parameters take precedence when any is present
        let phys_keys = [
            "params.G",
            "params.k",
            "params.eta",
            "params.L",
            "params.ell",
            "params.gammaG",
        ];
        let has_physical = phys_keys.iter().any(|k| entries.contains_key(*k));
        let mut nu = cfg.params.nu;
        let mut alpha = cfg.params.alpha;
        if let Some((l, v)) = take(&mut entries, "params.nu") {
            nu = parse_f64("params.nu", l, &v)?;
        }
        if let Some((l, v)) = take(&mut entries, "params.alpha") {
            alpha = parse_f64("params.alpha", l, &v)?;
        }
        if has_physical {
            let mut need = |key: &str| -> Result<(usize, String)> {
                take(&mut entries, key).ok_or_else(|| Error::Config {
                    line: 0,
                    msg: format!("physical parameter set requires `{key}`"),
                })
            };
            let (l, v) = need("params.G")?;
            let g = parse_f64("params.G", l, &v)?;
            let (l, v) = need("params.k")?;
            let k = parse_f64("params.k", l, &v)?;
            let (l, v) = need("params.eta")?;
            let eta = parse_f64("params.eta", l, &v)?;
            let (l, v) = need("params.L")?;
            let length = parse_f64("params.L", l, &v)?;
            let (l, v) = need("params.ell")?;
            let ell = parse_f64("params.ell", l, &v)?;
            let (l, v) = need("params.gammaG")?;
            let gamma_g = parse_f64("params.gammaG", l, &v)?;
            let phys = PhysicalParams {
                shear_modulus: g,
                nu,
                gamma_g,
                alpha,
                permeability: k,
                viscosity: eta,
                length,
                thickness: ell,
            };
            cfg.params = derive_dimensionless(&phys)?;
            cfg.physical = Some(phys);
        } else {
            let mut gamma = cfg.params.gamma;
            let mut eps = cfg.params.eps;
            if let Some((l, v)) = take(&mut entries, "params.gamma") {
                gamma = parse_f64("params.gamma", l, &v)?;
            }
            if let Some((l, v)) = take(&mut entries, "params.eps") {
                eps = parse_f64("params.eps", l, &v)?;
            }
            cfg.params = DimensionlessParams::new(eps, gamma, alpha, nu)?;
            if let Some((l, v)) = take(&mut entries, "params.T") {
                cfg.params.t_terzaghi = parse_f64("params.T", l, &v)?;
            }
        }

        if let Some((l, v)) = take(&mut entries, "grid.nx") {
            cfg.nx = parse_usize("grid.nx", l, &v)?;
        }
        if let Some((l, v)) = take(&mut entries, "grid.nz") {
            cfg.nz = parse_usize("grid.nz", l, &v)?;
        }
        if let Some((l, v)) = take(&mut entries, "time.t_end") {
            cfg.t_end = parse_f64("time.t_end", l, &v)?;
        }
        if let Some((l, v)) = take(&mut entries, "time.nsteps") {
            cfg.nsteps = parse_usize("time.nsteps", l, &v)?;
        }
        if let Some((l, v)) = take(&mut entries, "time.scheme") {
            cfg.scheme = TimeScheme::parse(&v).map_err(|e| Error::Config {
                line: l,
                msg: e.to_string(),
            })?;
        }
        if let Some((l, v)) = take(&mut entries, "output.every") {
            cfg.output_every = parse_usize("output.every", l, &v)?.max(1);
        }
        if let Some((l, v)) = take(&mut entries, "output.export_matrices") {
            cfg.export_matrices = v == "true" || {
                if v != "false" {
                    return Err(Error::Config {
                        line: l,
                        msg: format!("key `output.export_matrices`: expected true|false, got `{v}`"),
                    });
                }
                false
            };
        }
        if let Some((l, v)) = take(&mut entries, "scenario.name") {
            cfg.scenario = Scenario::parse(&v).map_err(|e| Error::Config {
                line: l,
                msg: e.to_string(),
            })?;
        }
        if let Some((l, v)) = take(&mut entries, "scenario.amp_bend") {
            cfg.amplitudes.bend = parse_f64("scenario.amp_bend", l, &v)?;
        }
        if let Some((l, v)) = take(&mut entries, "scenario.amp_stretch") {
            cfg.amplitudes.stretch = parse_f64("scenario.amp_stretch", l, &v)?;
        }
        if let Some((l, v)) = take(&mut entries, "scenario.amp_drain") {
            cfg.amplitudes.drain = parse_f64("scenario.amp_drain", l, &v)?;
        }
        if let Some((l, v)) = take(&mut entries, "scenario.amp_lateral") {
            cfg.amplitudes.lateral = parse_f64("scenario.amp_lateral", l, &v)?;
        }
        if let Some((l, v)) = take(&mut entries, "scenario.ramp_t0") {
            cfg.ramp_t0 = parse_f64("scenario.ramp_t0", l, &v)?;
        }
        if let Some((l, v)) = take(&mut entries, "sweep.eps") {
            cfg.eps_list = parse_list_f64("sweep.eps", l, &v)?;
        }
        if let Some((l, v)) = take(&mut entries, "mms.grids") {
            cfg.mms_grids = parse_list_usize("mms.grids", l, &v)?;
        }
        if let Some((l, v)) = take(&mut entries, "mms.temporal_steps") {
            cfg.mms_temporal_steps = parse_list_usize("mms.temporal_steps", l, &v)?;
        }
        if let Some((_, v)) = take(&mut entries, "output.dir") {
            cfg.output_dir = PathBuf::from(v);
        }
        if let Some((l, v)) = take(&mut entries, "output.formats") {
            cfg.write_vtk = false;
            for f in v.split(',') {
                match f.trim() {
                    "csv" => {}
                    "vtk" => cfg.write_vtk = true,
                    other => {
                        return Err(Error::Config {
                            line: l,
                            msg: format!("unknown output format `{other}`"),
                        })
                    }
                }
            }
        }

        if let Some((key, (line, _))) = entries.into_iter().next() {
            return Err(Error::Config {
                line,
                msg: format!("unknown key `{key}`"),
            });
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.nsteps == 0 || !(self.t_end > 0.0) {
            return Err(Error::Param {
                name: "time",
                msg: format!("need t_end > 0 and nsteps > 0, got {} / {}", self.t_end, self.nsteps),
            });
        }
        for w in self.eps_list.windows(2) {
            if !(w[1] < w[0]) {
                return Err(Error::Param {
                    name: "sweep.eps",
                    msg: "epsilon list must be strictly decreasing".into(),
                });
            }
        }
        for &e in &self.eps_list {
            if !(e > 0.0 && e < 0.5) {
                return Err(Error::Param {
                    name: "sweep.eps",
                    msg: format!("epsilon {e} outside (0, 1/2)"),
                });
            }
        }
        Ok(())
    }

    /// Build the load scenario of this configuration.
    pub fn loads(&self) -> LoadSpec {
        build_scenario(
            self.scenario,
            self.amplitudes,
            Ramp::new(self.ramp_t0 * self.t_end),
        )
    }

    /// Resolved configuration as `key = value` lines (output provenance).
    pub fn echo(&self) -> Vec<String> {
        let p = self.params;
        let mut lines = vec![
            format!("params.nu = {}", p.nu),
            format!("params.alpha = {}", p.alpha),
            format!("params.gamma = {}", p.gamma),
            format!("params.eps = {}", p.eps),
            format!("params.lambda = {}", p.lambda),
            format!("params.T = {}", p.t_terzaghi),
            format!("grid.nx = {}", self.nx),
            format!("grid.nz = {}", self.nz),
            format!("time.t_end = {}", self.t_end),
            format!("time.nsteps = {}", self.nsteps),
            format!("time.scheme = {}", self.scheme.name()),
            format!("scenario.name = {}", self.scenario.name()),
            format!("scenario.amp_bend = {}", self.amplitudes.bend),
            format!("scenario.amp_stretch = {}", self.amplitudes.stretch),
            format!("scenario.amp_drain = {}", self.amplitudes.drain),
            format!("scenario.amp_lateral = {}", self.amplitudes.lateral),
            format!("scenario.ramp_t0 = {}", self.ramp_t0),
            format!(
                "sweep.eps = {}",
                self.eps_list.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(", ")
            ),
        ];
        if let Some(ph) = &self.physical {
            lines.push(format!("params.G = {}", ph.shear_modulus));
            lines.push(format!("params.k = {}", ph.permeability));
            lines.push(format!("params.eta = {}", ph.viscosity));
            lines.push(format!("params.L = {}", ph.length));
            lines.push(format!("params.ell = {}", ph.thickness));
            lines.push(format!("params.gammaG = {}", ph.gamma_g));
            lines.push(format!("derived.d = {}", ph.characteristic_displacement()));
            lines.push(format!("derived.P = {}", ph.characteristic_pressure()));
        }
        lines
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_dimensionless_config() {
        let cfg = RunConfig::from_text(
            "[params]\nnu = 0.3\nalpha = 0.8\ngamma = 0.5\neps = 0.2\n\
             [grid]\nnx = 32\nnz = 16\n[time]\nt_end = 2.0\nnsteps = 10\n\
             [scenario]\nname = bend\n[sweep]\neps = 0.4, 0.2\n",
        )
        .unwrap();
        assert_eq!(cfg.nx, 32);
        assert_eq!(cfg.params.nu, 0.3);
        assert_eq!(cfg.scenario, Scenario::Bend);
        assert_eq!(cfg.eps_list, vec![0.4, 0.2]);
    }

    #[test]
    fn rejects_invalid_nu_with_key_name() {
        let err = RunConfig::from_text("[params]\nnu = 0.5\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("nu"), "error names the key: {msg}");
    }

    #[test]
    fn rejects_unknown_key_with_line() {
        let err = RunConfig::from_text("[params]\nnu = 0.25\nbogus = 1\n").unwrap_err();
        match err {
            Error::Config { line, msg } => {
                assert_eq!(line, 3);
                assert!(msg.contains("bogus"));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn physical_parameters_are_reduced() {
        let cfg = RunConfig::from_text(
            "[params]\nnu = 0.25\nalpha = 0.9\nG = 2.0\ngammaG = 0.5\nk = 1.0\neta = 1.0\nL = 1.0\nell = 0.02\n",
        )
        .unwrap();
        assert_eq!(cfg.params.gamma, 1.0);
        assert_eq!(cfg.params.eps, 0.01);
        assert!(cfg.physical.is_some());
        assert!(cfg.echo().iter().any(|l| l.starts_with("derived.P")));
    }
}
