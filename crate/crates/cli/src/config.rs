//! Run configuration: a plain key = value file merged with command-line
//! flags; flags win. Every accessor reports the offending field on failure
//! so config errors carry actionable diagnostics (exit code 2).

use std::collections::BTreeMap;
use std::path::Path;

use spikelab::prior::DiscretePrior;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }
    pub fn numerical(msg: impl Into<String>) -> Self {
        CliError::Numerical(msg.into())
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

const KNOWN_KEYS: &[&str] = &[
    "prior", "rho", "eps", "delta", "delta_grid", "rho_grid", "n", "L", "w", "seeds", "seed",
    "tmax", "tol", "out", "format", "se_driven", "grid", "samples", "fd_step", "bracket_amp",
    "bracket_rs", "family", "e0", "stride", "sizes", "open_chain",
];

/// Parsed key = value file.
pub fn parse_config_file(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::config(format!(
                "{}:{}: expected `key = value`, got `{raw}`",
                path.display(),
                lineno + 1
            ))
        })?;
        let key = key.trim();
        if !KNOWN_KEYS.contains(&key) {
            return Err(CliError::config(format!(
                "{}:{}: unknown field `{key}`",
                path.display(),
                lineno + 1
            )));
        }
        map.insert(key.to_string(), value.trim().to_string());
    }
    Ok(map)
}

/// Configuration after merging the file with flags.
#[derive(Debug, Default, Clone)]
pub struct Settings {
    pub map: BTreeMap<String, String>,
}

impl Settings {
    pub fn merge_flag(&mut self, key: &str, value: Option<String>) {
        if let Some(v) = value {
            self.map.insert(key.to_string(), v);
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                CliError::config(format!("field `{key}`: cannot parse `{raw}`"))
            }),
        }
    }

    pub fn parse_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, CliError> {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    pub fn require<T: std::str::FromStr>(&self, key: &str) -> Result<T, CliError> {
        self.parse(key)?
            .ok_or_else(|| CliError::config(format!("missing required field `{key}`")))
    }

    pub fn flag(&self, key: &str) -> Result<bool, CliError> {
        match self.get(key) {
            None => Ok(false),
            Some("true") | Some("1") | Some("yes") => Ok(true),
            Some("false") | Some("0") | Some("no") => Ok(false),
            Some(other) => Err(CliError::config(format!(
                "field `{key}`: expected a boolean, got `{other}`"
            ))),
        }
    }

    /// Grid syntax: `lo:hi:count` (linear), `lo:hi:count:log` (geometric),
    /// or a comma list of values. Grids must come out nonempty and sorted.
    pub fn grid(&self, key: &str) -> Result<Option<Vec<f64>>, CliError> {
        let Some(raw) = self.get(key) else {
            return Ok(None);
        };
        let bad = |msg: &str| CliError::config(format!("field `{key}`: {msg} in `{raw}`"));
        let vals: Vec<f64> = if raw.contains(',') {
            raw.split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| bad("unparsable value"))?
        } else {
            let parts: Vec<&str> = raw.split(':').collect();
            if parts.len() == 1 {
                vec![parts[0].parse().map_err(|_| bad("unparsable value"))?]
            } else if parts.len() == 3 || (parts.len() == 4 && parts[3] == "log") {
                let lo: f64 = parts[0].parse().map_err(|_| bad("unparsable lo"))?;
                let hi: f64 = parts[1].parse().map_err(|_| bad("unparsable hi"))?;
                let count: usize = parts[2].parse().map_err(|_| bad("unparsable count"))?;
                if count < 2 || hi <= lo {
                    return Err(bad("need hi > lo and count >= 2"));
                }
                let log = parts.len() == 4;
                if log && lo <= 0.0 {
                    return Err(bad("log grid needs lo > 0"));
                }
                (0..count)
                    .map(|i| {
                        let f = i as f64 / (count - 1) as f64;
                        if log {
                            lo * (hi / lo).powf(f)
                        } else {
                            lo + (hi - lo) * f
                        }
                    })
                    .collect()
            } else {
                return Err(bad("expected lo:hi:count[:log] or a comma list"));
            }
        };
        if vals.is_empty() {
            return Err(bad("grid is empty"));
        }
        if vals.windows(2).any(|w| w[1] <= w[0]) {
            return Err(bad("grid must be strictly increasing"));
        }
        Ok(Some(vals))
    }

    /// Bracket syntax: `lo:hi`.
    pub fn bracket(&self, key: &str) -> Result<Option<(f64, f64)>, CliError> {
        let Some(raw) = self.get(key) else {
            return Ok(None);
        };
        let bad = || CliError::config(format!("field `{key}`: expected `lo:hi`, got `{raw}`"));
        let (lo, hi) = raw.split_once(':').ok_or_else(bad)?;
        let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
        if !(hi > lo) {
            return Err(bad());
        }
        Ok(Some((lo, hi)))
    }

    /// Prior spec: `ber[:rho]`, `community[:rho[:eps]]`, `rademacher`,
    /// `dirac:a`, or `atoms:v:p,v:p,...`. The `rho`/`eps` fields supply the
    /// omitted parameters.
    pub fn prior(&self) -> Result<DiscretePrior, CliError> {
        let raw = self
            .get("prior")
            .ok_or_else(|| CliError::config("missing required field `prior`"))?;
        self.prior_from_spec(raw)
    }

    pub fn prior_from_spec(&self, raw: &str) -> Result<DiscretePrior, CliError> {
        let bad = |msg: String| CliError::config(format!("field `prior`: {msg}"));
        let mut parts = raw.splitn(2, ':');
        let kind = parts.next().unwrap_or("");
        let rest = parts.next();
        let rho_of = |inline: Option<&str>| -> Result<f64, CliError> {
            match inline {
                Some(s) => s
                    .parse()
                    .map_err(|_| bad(format!("unparsable rho `{s}`"))),
                None => self.require::<f64>("rho"),
            }
        };
        match kind {
            "ber" | "bernoulli" => {
                let rho = rho_of(rest)?;
                DiscretePrior::bernoulli(rho).map_err(|e| bad(e.to_string()))
            }
            "community" => {
                let (rho_part, eps_part) = match rest {
                    Some(r) => match r.split_once(':') {
                        Some((a, b)) => (Some(a), Some(b)),
                        None => (Some(r), None),
                    },
                    None => (None, None),
                };
                let rho = rho_of(rho_part)?;
                let eps = match eps_part {
                    Some(s) => s
                        .parse()
                        .map_err(|_| bad(format!("unparsable eps `{s}`")))?,
                    None => self.parse_or("eps", 1e-4)?,
                };
                DiscretePrior::community_biased(rho, eps).map_err(|e| bad(e.to_string()))
            }
            "rademacher" => DiscretePrior::rademacher().map_err(|e| bad(e.to_string())),
            "dirac" => {
                let a: f64 = rest
                    .ok_or_else(|| bad("dirac needs a value: dirac:a".into()))?
                    .parse()
                    .map_err(|_| bad("unparsable dirac value".into()))?;
                DiscretePrior::dirac(a).map_err(|e| bad(e.to_string()))
            }
            "atoms" => {
                let body = rest.ok_or_else(|| bad("atoms needs v:p,v:p,...".into()))?;
                let mut pairs = Vec::new();
                for item in body.split(',') {
                    let (v, p) = item
                        .split_once(':')
                        .ok_or_else(|| bad(format!("atom `{item}` is not v:p")))?;
                    let v: f64 = v
                        .trim()
                        .parse()
                        .map_err(|_| bad(format!("unparsable atom value `{v}`")))?;
                    let p: f64 = p
                        .trim()
                        .parse()
                        .map_err(|_| bad(format!("unparsable atom prob `{p}`")))?;
                    pairs.push((v, p));
                }
                DiscretePrior::new(&pairs).map_err(|e| bad(e.to_string()))
            }
            other => Err(bad(format!("unknown prior kind `{other}`"))),
        }
    }
}
