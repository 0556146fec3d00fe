//! Reference centerline profiles for the lid-driven cavity.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Which centerline a profile samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Centerline {
    /// Horizontal velocity along `x = 0.5`, indexed by `y`.
    HorizontalVelocity,
    /// Vertical velocity along `y = 0.5`, indexed by `x`.
    VerticalVelocity,
}

impl Centerline {
    fn file_stem(self) -> &'static str {
        match self {
            Centerline::HorizontalVelocity => "u_x05",
            Centerline::VerticalVelocity => "v_y05",
        }
    }

    /// Wall values at coordinate 0 and 1.
    fn endpoint_values(self) -> [f64; 2] {
        match self {
            Centerline::HorizontalVelocity => [0.0, 1.0],
            Centerline::VerticalVelocity => [0.0, 0.0],
        }
    }

    /// Point on the centerline at coordinate `s`.
    pub fn point(self, s: f64) -> [f64; 2] {
        match self {
            Centerline::HorizontalVelocity => [0.5, s],
            Centerline::VerticalVelocity => [s, 0.5],
        }
    }

    /// Velocity component sampled along this line.
    pub fn component(self) -> usize {
        match self {
            Centerline::HorizontalVelocity => 0,
            Centerline::VerticalVelocity => 1,
        }
    }
}

/// Ghia-style reference data for one Reynolds number.
#[derive(Debug, Clone, PartialEq)]
pub struct GhiaProfile {
    pub reynolds: u32,
    /// `(y, u)` samples along `x = 0.5`, ascending in `y`.
    pub u_along_vertical: Vec<(f64, f64)>,
    /// `(x, v)` samples along `y = 0.5`, ascending in `x`.
    pub v_along_horizontal: Vec<(f64, f64)>,
}

impl GhiaProfile {
    /// File name holding one profile, e.g. `ghia_re100_u_x05.csv`.
    pub fn file_name(reynolds: u32, line: Centerline) -> String {
        format!("ghia_re{reynolds}_{}.csv", line.file_stem())
    }

    /// Loads both profiles for `reynolds` from `dir`.
    pub fn load(dir: &Path, reynolds: u32) -> Result<Self> {
        let read = |line| read_profile(&dir.join(Self::file_name(reynolds, line)), line);
        Ok(Self {
            reynolds,
            u_along_vertical: read(Centerline::HorizontalVelocity)?,
            v_along_horizontal: read(Centerline::VerticalVelocity)?,
        })
    }

    pub fn samples(&self, line: Centerline) -> &[(f64, f64)] {
        match line {
            Centerline::HorizontalVelocity => &self.u_along_vertical,
            Centerline::VerticalVelocity => &self.v_along_horizontal,
        }
    }
}

/// Reads a `coord,value` CSV and validates range, ordering and wall values.
pub fn read_profile(path: &Path, line: Centerline) -> Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path)?;
    parse_profile(&text, path, line)
}

pub fn parse_profile(text: &str, path: &Path, line: Centerline) -> Result<Vec<(f64, f64)>> {
    let bad = |line: usize, message: String| Error::Parse {
        path: PathBuf::from(path),
        line,
        message,
    };
    let mut rows = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match rows.next() {
        Some((_, "coord,value")) => {}
        Some((n, other)) => return Err(bad(n, format!("expected header `coord,value`, found {other:?}"))),
        None => return Err(bad(0, "empty file".into())),
    }
    let mut samples: Vec<(f64, f64)> = Vec::new();
    let mut last_line = 1;
    for (n, row) in rows {
        if row.is_empty() || row.starts_with('#') {
            continue;
        }
        last_line = n;
        let (c, v) = row
            .split_once(',')
            .ok_or_else(|| bad(n, format!("expected two comma-separated values, found {row:?}")))?;
        let parse = |s: &str, what: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| bad(n, format!("{what} {s:?}: {e}")))
        };
        let (c, v) = (parse(c, "coordinate")?, parse(v, "value")?);
        if !(0.0..=1.0).contains(&c) {
            return Err(bad(n, format!("coordinate {c} outside [0, 1]")));
        }
        if !v.is_finite() {
            return Err(bad(n, format!("value {v} is not finite")));
        }
        if let Some(&(prev, _)) = samples.last() {
            if c <= prev {
                return Err(bad(n, format!("coordinates must increase strictly, {c} follows {prev}")));
            }
        }
        samples.push((c, v));
    }
    if samples.len() < 2 {
        return Err(bad(last_line, "a profile needs at least two samples".into()));
    }
    let [lo, hi] = line.endpoint_values();
    let (first, last) = (samples[0], samples[samples.len() - 1]);
    if first != (0.0, lo) || last != (1.0, hi) {
        return Err(bad(
            last_line,
            format!("profile must start at (0, {lo}) and end at (1, {hi}), found {first:?} .. {last:?}"),
        ));
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Vec<(f64, f64)>> {
        parse_profile(text, Path::new("t.csv"), Centerline::HorizontalVelocity)
    }

    #[test]
    fn accepts_valid_profile() {
        let p = parse("coord,value\n0,0\n0.5,-0.2\n# note\n1,1\n").unwrap();
        assert_eq!(p, vec![(0.0, 0.0), (0.5, -0.2), (1.0, 1.0)]);
    }

    #[test]
    fn reports_line_numbers() {
        let line_of = |r: Result<Vec<(f64, f64)>>| match r {
            Err(Error::Parse { line, .. }) => line,
            other => panic!("expected parse error, got {other:?}"),
        };
        assert_eq!(line_of(parse("x,y\n0,0\n1,1\n")), 1);
        assert_eq!(line_of(parse("coord,value\n0,0\n0.5,abc\n1,1\n")), 3);
        assert_eq!(line_of(parse("coord,value\n0,0\n1.5,0\n")), 3);
        assert_eq!(line_of(parse("coord,value\n0,0\n0.6,1\n0.4,1\n1,1\n")), 4);
        assert_eq!(line_of(parse("coord,value\n0,0\n0.5\n")), 3);
        // lid value missing at the top
        assert_eq!(line_of(parse("coord,value\n0,0\n1,0.5\n")), 3);
    }

    #[test]
    fn file_names_encode_reynolds_and_axis() {
        assert_eq!(GhiaProfile::file_name(100, Centerline::HorizontalVelocity), "ghia_re100_u_x05.csv");
        assert_eq!(GhiaProfile::file_name(1000, Centerline::VerticalVelocity), "ghia_re1000_v_y05.csv");
    }

    #[test]
    fn bundled_reference_data_is_valid() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/ghia");
        for re in [100, 1000] {
            let g = GhiaProfile::load(&dir, re).unwrap();
            assert_eq!(g.u_along_vertical.len(), 17);
            assert_eq!(g.v_along_horizontal.len(), 17);
        }
    }
}
