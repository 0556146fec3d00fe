//! Experiment settings from a `key=value` file merged with command-line flags.

use std::path::{Path, PathBuf};

use penfem::{ElementPair, Error, Result};

/// Every setting is optional; unset values fall back to per-experiment
/// defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub pair: Option<ElementPair>,
    pub levels: Option<Vec<u32>>,
    pub c: Option<f64>,
    pub nu: Option<f64>,
    pub eps: Option<f64>,
    pub dt: Option<f64>,
    pub final_time: Option<f64>,
    pub out: Option<PathBuf>,
    pub ghia: Option<PathBuf>,
    pub full: Option<bool>,
}

impl Settings {
    /// Values from `over` replace those of `self`.
    pub fn merged(self, over: Settings) -> Settings {
        Settings {
            pair: over.pair.or(self.pair),
            levels: over.levels.or(self.levels),
            c: over.c.or(self.c),
            nu: over.nu.or(self.nu),
            eps: over.eps.or(self.eps),
            dt: over.dt.or(self.dt),
            final_time: over.final_time.or(self.final_time),
            out: over.out.or(self.out),
            ghia: over.ghia.or(self.ghia),
            full: over.full.or(self.full),
        }
    }

    pub fn from_file(path: &Path) -> Result<Settings> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Settings> {
        let mut s = Settings::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, found {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let number = || value.parse::<f64>().map_err(|e| bad(format!("{key}: {e}")));
            match key {
                "pair" => s.pair = Some(value.parse().map_err(|e: Error| bad(e.to_string()))?),
                "levels" => s.levels = Some(parse_levels(value).map_err(|e| bad(e.to_string()))?),
                "c" => s.c = Some(number()?),
                "nu" => s.nu = Some(number()?),
                "eps" => s.eps = Some(number()?),
                "dt" => s.dt = Some(number()?),
                "T" => s.final_time = Some(number()?),
                "out" => s.out = Some(PathBuf::from(value)),
                "ghia" => s.ghia = Some(PathBuf::from(value)),
                "full" => s.full = Some(value.parse().map_err(|_| bad(format!("full: expected true or false, found {value:?}")))?),
                other => return Err(bad(format!("unknown key {other:?}"))),
            }
        }
        Ok(s)
    }
}

/// Accepts `3`, `1-5` or `1,2,4`.
pub fn parse_levels(text: &str) -> Result<Vec<u32>> {
    let bad = || Error::param(format!("cannot read levels from {text:?}; use e.g. 1-5 or 1,2,3"));
    let text = text.trim();
    if let Some((a, b)) = text.split_once('-') {
        let (a, b): (u32, u32) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    text.split(',').map(|v| v.trim().parse().map_err(|_| bad())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_syntax() {
        assert_eq!(parse_levels("1-4").unwrap(), vec![1, 2, 3, 4]);
        assert_eq!(parse_levels("2, 3,5").unwrap(), vec![2, 3, 5]);
        assert_eq!(parse_levels("6").unwrap(), vec![6]);
        assert!(parse_levels("4-2").is_err());
        assert!(parse_levels("a").is_err());
    }

    #[test]
    fn file_values_and_overrides() {
        let text = "# study\npair = crp0\nlevels=1-3\nc=0.5  # coupling\nT=2\nfull=true\n";
        let file = Settings::parse(text, Path::new("cfg")).unwrap();
        assert_eq!(file.pair, Some(ElementPair::CrP0));
        assert_eq!(file.levels, Some(vec![1, 2, 3]));
        assert_eq!(file.final_time, Some(2.0));
        let flags = Settings {
            c: Some(2.0),
            ..Settings::default()
        };
        let s = file.merged(flags);
        assert_eq!(s.c, Some(2.0));
        assert_eq!(s.pair, Some(ElementPair::CrP0));
        assert_eq!(s.full, Some(true));
    }

    #[test]
    fn errors_name_the_line() {
        for (text, line) in [("nu=1\nbogus=3\n", 2), ("nu=x\n", 1), ("\n\nnu\n", 3)] {
            match Settings::parse(text, Path::new("cfg")) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{other:?}"),
            }
        }
    }
}
