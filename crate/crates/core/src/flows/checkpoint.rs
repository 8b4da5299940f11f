//! Line-oriented text checkpoints: a header (grid descriptor, `t`, `κ`, `M`)
//! followed by one cell value per line.

use std::path::Path;
use std::sync::Arc;

use crate::error::{LabError, Result};
use crate::radial::{GridSpec, Kind, RadialDensity, RadialGrid};
use crate::scalar::Real;

const MAGIC: &str = "# gnslab checkpoint v1";

#[derive(Clone, Debug)]
pub struct Checkpoint<T> {
    pub state: RadialDensity<T>,
    pub t: T,
    pub kappa: T,
    pub mass: T,
}

impl<T: Real> Checkpoint<T> {
    pub fn to_text(&self) -> String {
        let spec = self.state.grid().spec();
        let f = |x: T| format!("{:?}", x.to_f64_lossy());
        let mut out = format!(
            "{MAGIC}\nr_max = {}\nn_cells = {}\nstretch = {}\nt = {}\nkappa = {}\nmass = {}\nvalues\n",
            f(spec.r_max),
            spec.n_cells,
            f(spec.stretch),
            f(self.t),
            f(self.kappa),
            f(self.mass)
        );
        for v in self.state.values() {
            out.push_str(&f(*v));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(MAGIC) {
            return Err(LabError::Parse("missing checkpoint header".into()));
        }
        let mut header = std::collections::BTreeMap::new();
        for line in lines.by_ref() {
            let line = line.trim();
            if line == "values" {
                break;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| LabError::Parse(format!("malformed header line '{line}'")))?;
            header.insert(k.trim().to_string(), v.trim().to_string());
        }
        let num = |key: &str| -> Result<f64> {
            header
                .get(key)
                .ok_or_else(|| LabError::Parse(format!("checkpoint header lacks '{key}'")))?
                .parse::<f64>()
                .map_err(|e| LabError::Parse(format!("bad '{key}': {e}")))
        };
        let n_cells = header
            .get("n_cells")
            .ok_or_else(|| LabError::Parse("checkpoint header lacks 'n_cells'".into()))?
            .parse::<usize>()
            .map_err(|e| LabError::Parse(format!("bad 'n_cells': {e}")))?;
        let cast = |x: f64| T::from_f64(x).ok_or_else(|| LabError::Parse(format!("{x} not representable")));
        let spec = GridSpec::new(cast(num("r_max")?)?, n_cells, cast(num("stretch")?)?);
        let grid = Arc::new(RadialGrid::new(spec)?);
        let values = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.trim()
                    .parse::<f64>()
                    .map_err(|e| LabError::Parse(format!("bad value '{l}': {e}")))
                    .and_then(cast)
            })
            .collect::<Result<Vec<T>>>()?;
        Ok(Self {
            state: RadialDensity::new(grid, values, Kind::Density)?,
            t: cast(num("t")?)?,
            kappa: cast(num("kappa")?)?,
            mass: cast(num("mass")?)?,
        })
    }
}

pub fn write_checkpoint<T: Real>(path: &Path, cp: &Checkpoint<T>) -> Result<()> {
    std::fs::write(path, cp.to_text()).map_err(|e| LabError::io(path, e))
}

pub fn read_checkpoint<T: Real>(path: &Path) -> Result<Checkpoint<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    Checkpoint::from_text(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radial::make_grid;

    #[test]
    fn round_trip_is_exact() {
        let g = Arc::new(make_grid(100.0_f64, 64, 2.0).unwrap());
        let state = RadialDensity::from_fn(g, Kind::Density, |r| 1.0 / (1.0 + r * r).powi(2)).unwrap();
        let cp = Checkpoint {
            state,
            t: 0.1,
            kappa: 1.0,
            mass: 3.0,
        };
        let back = Checkpoint::<f64>::from_text(&cp.to_text()).unwrap();
        assert_eq!(back.state.values(), cp.state.values());
        assert_eq!(back.t, 0.1);
        assert_eq!(back.state.grid().spec(), cp.state.grid().spec());
    }

    #[test]
    fn truncated_files_are_rejected() {
        assert!(Checkpoint::<f64>::from_text("r_max = 1").is_err());
    }
}
