//! Simulator configuration, read from TOML.

use serde::{Deserialize, Serialize};

use crate::crossbar::{CrossbarGeometry, EnergyModel};
use crate::error::{Error, Result};

use super::address::{AddressField, AddressMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub rows: usize,
    pub cols: usize,
    pub read_width: usize,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        let g = CrossbarGeometry::default();
        GeometryConfig {
            rows: g.rows,
            cols: g.cols,
            read_width: g.read_width,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    pub crossbars_per_page: usize,
    pub banks: usize,
    pub controllers_per_bank: usize,
    pub subarrays_per_controller: usize,
    pub crossbars_per_subarray: usize,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig {
            crossbars_per_page: 64,
            banks: 64,
            controllers_per_bank: 64,
            subarrays_per_controller: 64,
            crossbars_per_subarray: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyConfig {
    pub logic_fj_per_bit: f64,
    pub read_pj_per_bit: f64,
    pub write_pj_per_bit: f64,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        EnergyConfig {
            logic_fj_per_bit: 81.6,
            read_pj_per_bit: 0.84,
            write_pj_per_bit: 6.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingConfig {
    pub logic_cycle_ns: f64,
    pub read_latency_ns: f64,
    pub write_latency_ns: f64,
    /// Host link bandwidth in GB/s (10^9 bytes per second).
    pub link_gb_per_s: f64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        TimingConfig {
            logic_cycle_ns: 30.0,
            read_latency_ns: 100.0,
            write_latency_ns: 300.0,
            link_gb_per_s: 25.0,
        }
    }
}

/// Timing constants in integer picoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Timing {
    pub logic_cycle_ps: u64,
    pub read_latency_ps: u64,
    pub write_latency_ps: u64,
    /// Time to move one 64-byte line over the link.
    pub line_transfer_ps: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub geometry: GeometryConfig,
    pub topology: TopologyConfig,
    pub energy: EnergyConfig,
    pub timing: TimingConfig,
    /// Page-offset bit fields from least to most significant. Derived from
    /// the geometry when absent.
    pub address_map: Option<Vec<AddressField>>,
}

/// Bounds on topology counts and crossbar height keep a module allocatable.
const MAX_COUNT: usize = 1 << 16;
const MAX_ROWS: usize = 1 << 16;

fn ps(ns: f64, what: &str) -> Result<u64> {
    let v = ns * 1000.0;
    if !v.is_finite() || v <= 0.0 || v > 1e15 {
        return Err(Error::Config(format!("{what} must be positive, got {ns}")));
    }
    Ok(v.round() as u64)
}

impl SimConfig {
    /// A configuration with the given crossbar shape and defaults elsewhere.
    pub fn with_geometry(
        rows: usize,
        cols: usize,
        read_width: usize,
        crossbars_per_page: usize,
    ) -> Self {
        SimConfig {
            geometry: GeometryConfig {
                rows,
                cols,
                read_width,
            },
            topology: TopologyConfig {
                crossbars_per_page,
                ..TopologyConfig::default()
            },
            ..SimConfig::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| {
            let (line, col) = e.span().map(|s| line_col(text, s.start)).unwrap_or((0, 0));
            Error::Parse {
                line,
                col,
                msg: e.message().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn geometry(&self) -> Result<CrossbarGeometry> {
        CrossbarGeometry::new(
            self.geometry.rows,
            self.geometry.cols,
            self.geometry.read_width,
        )
    }

    pub fn energy_model(&self) -> Result<EnergyModel> {
        EnergyModel::from_physical(
            self.energy.logic_fj_per_bit,
            self.energy.read_pj_per_bit,
            self.energy.write_pj_per_bit,
        )
    }

    pub fn timing(&self) -> Result<Timing> {
        let t = &self.timing;
        if !(t.link_gb_per_s.is_finite() && t.link_gb_per_s > 0.0) {
            return Err(Error::Config(format!(
                "link bandwidth must be positive, got {}",
                t.link_gb_per_s
            )));
        }
        Ok(Timing {
            logic_cycle_ps: ps(t.logic_cycle_ns, "logic cycle")?,
            read_latency_ps: ps(t.read_latency_ns, "read latency")?,
            write_latency_ps: ps(t.write_latency_ns, "write latency")?,
            // bytes / (GB/s) = ns
            line_transfer_ps: ps(64.0 / t.link_gb_per_s, "line transfer")?,
        })
    }

    pub fn address_map(&self) -> Result<AddressMap> {
        let g = self.geometry()?;
        match &self.address_map {
            Some(fields) => AddressMap::new(fields.clone(), &g, self.topology.crossbars_per_page),
            None => AddressMap::default_for(&g, self.topology.crossbars_per_page),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.geometry()?;
        let t = &self.topology;
        for (v, what) in [
            (g.rows, "rows"),
            (g.cols, "cols"),
            (g.read_width, "read width"),
        ] {
            if !v.is_power_of_two() {
                return Err(Error::Config(format!(
                    "{what} must be a power of two, got {v}"
                )));
            }
        }
        if g.read_width < 8 {
            return Err(Error::Config(
                "read width must be at least 8 bits for byte addressing".into(),
            ));
        }
        if g.rows > MAX_ROWS {
            return Err(Error::Config(format!(
                "at most {MAX_ROWS} rows per crossbar"
            )));
        }
        if t.crossbars_per_page == 0 || t.crossbars_per_page > MAX_COUNT {
            return Err(Error::Config(format!(
                "crossbars per page must be in 1..={MAX_COUNT}"
            )));
        }
        if g.cols > 1024 {
            return Err(Error::Config(
                "request codec addresses at most 1024 columns".into(),
            ));
        }
        for (v, what) in [
            (t.banks, "banks"),
            (t.controllers_per_bank, "controllers per bank"),
            (t.subarrays_per_controller, "subarrays per controller"),
            (t.crossbars_per_subarray, "crossbars per subarray"),
        ] {
            if v == 0 || v > MAX_COUNT {
                return Err(Error::Config(format!(
                    "{what} must be in 1..={MAX_COUNT}, got {v}"
                )));
            }
        }
        self.energy_model()?;
        self.timing()?;
        self.address_map()?;
        Ok(())
    }

    pub fn crossbars_per_controller(&self) -> usize {
        self.topology.subarrays_per_controller * self.topology.crossbars_per_subarray
    }
}

pub(crate) fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, col)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = SimConfig::default();
        c.validate().unwrap();
        assert_eq!(SimConfig::from_toml(&c.to_toml()).unwrap(), c);
        let t = c.timing().unwrap();
        assert_eq!(t.logic_cycle_ps, 30_000);
        assert_eq!(t.line_transfer_ps, 2_560);
        assert_eq!(c.energy_model().unwrap(), EnergyModel::default());
    }

    #[test]
    fn errors_carry_position() {
        let e = SimConfig::from_toml("[geometry]\nrows = \"x\"\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e:?}");
        let e = SimConfig::from_toml("[geometry]\nrows = 1000\n").unwrap_err();
        assert!(matches!(e, Error::Config(_)));
    }
}
