//! Text format for trained devices.
//!
//! ```text
//! simdoa-model v1
//! geometry <sha256 of the layout>
//! wavelength <f64>
//! n_x <usize>            (one line per layout field, in this order)
//! ...
//! atom_area <f64>
//! beta <re> <im>
//! phases <L> <M>
//! <M phases of layer 1>
//! ...
//! <M phases of layer L>
//! end
//! ```
//!
//! Floats use the shortest representation that parses back to the same
//! bits, so a write/read cycle is exact.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{GeometryParams, SimGeometry};
use crate::model::SimState;
use crate::propagation::build_stack;

const MAGIC: &str = "simdoa-model v1";

/// Upper bound on atoms per layer accepted from a file; the coupling matrix
/// grows with its square.
pub const MAX_ATOMS: usize = 4096;
pub const MAX_LAYERS: usize = 256;
pub const MAX_ELEMENTS: usize = 1024;

/// Decoded contents of a model file, before any matrices are built.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub geometry: SimGeometry,
    pub beta: Complex64,
    pub phases: Array2<f64>,
}

/// A trained device: phases plus the least-squares scale that maps its
/// response onto the DFT target.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub state: SimState,
    pub beta: Complex64,
}

impl TrainedModel {
    pub fn new(state: SimState, beta: Complex64) -> Self {
        TrainedModel { state, beta }
    }

    /// `βG`, the response the trained device presents to the receiver.
    pub fn effective_operator(&self) -> Array2<Complex64> {
        self.state.transfer_matrix() * self.beta
    }

    pub fn to_text(&self) -> String {
        encode(self.state.geometry(), self.beta, self.state.phases())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let file = decode(text)?;
        let stack = Arc::new(build_stack(&file.geometry));
        let state = SimState::from_phases(&file.geometry, stack, file.phases)?;
        Ok(TrainedModel {
            state,
            beta: file.beta,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let text = std::str::from_utf8(&bytes).map_err(|_| Error::ModelFormat {
            line: 0,
            msg: "not valid UTF-8".into(),
        })?;
        Self::from_text(text)
    }
}

pub fn encode(geom: &SimGeometry, beta: Complex64, phases: &Array2<f64>) -> String {
    let p = geom.params();
    let mut s = String::new();
    // writing to a String cannot fail
    let _ = writeln!(s, "{MAGIC}");
    let _ = writeln!(s, "geometry {}", geom.digest());
    let _ = writeln!(s, "wavelength {}", p.wavelength);
    let _ = writeln!(s, "n_x {}", p.n_x);
    let _ = writeln!(s, "n_y {}", p.n_y);
    let _ = writeln!(s, "d_x {}", p.d_x);
    let _ = writeln!(s, "d_y {}", p.d_y);
    let _ = writeln!(s, "m_x {}", p.m_x);
    let _ = writeln!(s, "m_y {}", p.m_y);
    let _ = writeln!(s, "s_x {}", p.s_x);
    let _ = writeln!(s, "s_y {}", p.s_y);
    let _ = writeln!(s, "num_layers {}", p.num_layers);
    let _ = writeln!(s, "layer_spacing {}", p.layer_spacing);
    let _ = writeln!(s, "atom_area {}", geom.atom_area());
    let _ = writeln!(s, "beta {} {}", beta.re, beta.im);
    let _ = writeln!(s, "phases {} {}", phases.nrows(), phases.ncols());
    for row in phases.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{}", line.join(" "));
    }
    let _ = writeln!(s, "end");
    s
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::ModelFormat {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn next_line(&mut self) -> Result<&'a str> {
        match self.inner.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l)
            }
            None => Err(self.err("unexpected end of file")),
        }
    }

    /// Reads `key v1 v2 ...` and returns the values.
    fn field(&mut self, key: &str, count: usize) -> Result<Vec<&'a str>> {
        let line = self.next_line()?;
        let mut parts = line.split(' ');
        if parts.next() != Some(key) {
            return Err(self.err(format!("expected `{key}`")));
        }
        let values: Vec<_> = parts.collect();
        if values.len() != count {
            return Err(self.err(format!("`{key}` takes {count} value(s)")));
        }
        Ok(values)
    }

    fn float(&self, v: &str) -> Result<f64> {
        match v.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(x),
            _ => Err(self.err(format!("invalid number `{v}`"))),
        }
    }

    fn count(&self, v: &str) -> Result<usize> {
        v.parse::<usize>()
            .map_err(|_| self.err(format!("invalid count `{v}`")))
    }

    fn float_field(&mut self, key: &str) -> Result<f64> {
        let v = self.field(key, 1)?;
        self.float(v[0])
    }

    fn count_field(&mut self, key: &str) -> Result<usize> {
        let v = self.field(key, 1)?;
        self.count(v[0])
    }
}

/// Parses a model file without building any coupling matrices.
pub fn decode(text: &str) -> Result<ModelFile> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    if lines.next_line()? != MAGIC {
        return Err(lines.err("missing `simdoa-model v1` header"));
    }
    let digest = lines.field("geometry", 1)?[0];

    let params = GeometryParams {
        wavelength: lines.float_field("wavelength")?,
        n_x: lines.count_field("n_x")?,
        n_y: lines.count_field("n_y")?,
        d_x: lines.float_field("d_x")?,
        d_y: lines.float_field("d_y")?,
        m_x: lines.count_field("m_x")?,
        m_y: lines.count_field("m_y")?,
        s_x: lines.float_field("s_x")?,
        s_y: lines.float_field("s_y")?,
        num_layers: lines.count_field("num_layers")?,
        layer_spacing: lines.float_field("layer_spacing")?,
        atom_area: Some(lines.float_field("atom_area")?),
    };
    let atoms = params.m_x.checked_mul(params.m_y);
    let elements = params.n_x.checked_mul(params.n_y);
    if !matches!(atoms, Some(m) if m <= MAX_ATOMS)
        || !matches!(elements, Some(n) if n <= MAX_ELEMENTS)
        || params.num_layers > MAX_LAYERS
    {
        return Err(lines.err("layout exceeds supported size"));
    }
    let geometry = SimGeometry::new(params).map_err(|e| lines.err(e.to_string()))?;
    if geometry.digest() != digest {
        return Err(lines.err("geometry digest does not match layout"));
    }

    let b = lines.field("beta", 2)?;
    let beta = Complex64::new(lines.float(b[0])?, lines.float(b[1])?);

    let dims = lines.field("phases", 2)?;
    let (layers, m) = (lines.count(dims[0])?, lines.count(dims[1])?);
    if (layers, m) != (geometry.num_layers(), geometry.m()) {
        return Err(lines.err("phase block does not match layout"));
    }
    let mut values = Vec::with_capacity(layers * m);
    for _ in 0..layers {
        let row = lines.next_line()?;
        let before = values.len();
        for v in row.split(' ') {
            let x = lines.float(v)?;
            if !(0.0..std::f64::consts::TAU).contains(&x) {
                return Err(lines.err(format!("phase {x} outside [0, 2π)")));
            }
            values.push(x);
            if values.len() - before > m {
                break;
            }
        }
        if values.len() - before != m {
            return Err(lines.err(format!("expected {m} phases")));
        }
    }
    if lines.next_line()? != "end" {
        return Err(lines.err("expected `end`"));
    }
    if let Some((i, l)) = lines.inner.find(|(_, l)| !l.is_empty()) {
        return Err(Error::ModelFormat {
            line: i + 1,
            msg: format!("trailing content `{l}`"),
        });
    }
    let phases = Array2::from_shape_vec((layers, m), values).expect("counted above");
    Ok(ModelFile {
        geometry,
        beta,
        phases,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_model() -> TrainedModel {
        let geom = SimGeometry::new(GeometryParams {
            m_x: 3,
            m_y: 2,
            num_layers: 2,
            ..GeometryParams::default()
        })
        .unwrap();
        let state = SimState::random(&geom, Arc::new(build_stack(&geom)), 5);
        TrainedModel::new(state, Complex64::new(1.5e3, -2.25e-7))
    }

    #[test]
    fn round_trip_is_exact() {
        let m = small_model();
        let text = m.to_text();
        let back = TrainedModel::from_text(&text).unwrap();
        assert_eq!(back.state.phases(), m.state.phases());
        assert_eq!(back.beta, m.beta);
        assert_eq!(back.state.geometry(), m.state.geometry());
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn rejects_tampered_layout() {
        let text = small_model()
            .to_text()
            .replace("num_layers 2", "num_layers 3");
        let err = decode(&text).unwrap_err();
        assert!(err.to_string().contains("digest"), "{err}");
    }

    #[test]
    fn rejects_short_row_and_bad_values() {
        let text = small_model().to_text();
        let lines: Vec<&str> = text.lines().collect();
        let idx = lines.iter().position(|l| l.starts_with("phases")).unwrap() + 1;

        let mut short = lines.clone();
        let row: Vec<&str> = lines[idx].split(' ').take(5).collect();
        let joined = row.join(" ");
        short[idx] = &joined;
        assert!(decode(&short.join("\n")).is_err());

        let mut bad = lines.clone();
        bad[idx] = "7 0 0 0 0 0";
        assert!(decode(&bad.join("\n")).is_err());

        let mut nan = lines.clone();
        nan[idx] = "NaN 0 0 0 0 0";
        assert!(decode(&nan.join("\n")).is_err());
    }

    #[test]
    fn rejects_missing_end_and_trailing_data() {
        let text = small_model().to_text();
        assert!(decode(text.trim_end().trim_end_matches("end")).is_err());
        assert!(decode(&format!("{text}extra\n")).is_err());
        assert!(decode("").is_err());
        assert!(decode("simdoa-model v2\n").is_err());
    }
}
