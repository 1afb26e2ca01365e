//! Model loading: files in the declared formats, or built-in names.

use crate::report::{parse_json, read_file, CliError, CliResult};
use hyperdyn_core::cocycle::CocycleSpec;
use hyperdyn_core::{GridSet, LocallyConstantCocycle, Sft, StandardAffineHorseshoe, Word};
use std::path::Path;

/// `full:K`, `golden`, `cycle:P`, or a path to an SFT text or JSON file.
pub fn load_sft(spec: &str) -> CliResult<Sft> {
    if let Some(k) = spec.strip_prefix("full:") {
        let k: usize = k.parse().map_err(|_| CliError::Usage(format!("bad alphabet size in {spec:?}")))?;
        if k == 0 {
            return Err(CliError::Usage("full shift needs at least one symbol".into()));
        }
        return Ok(Sft::full_shift(k));
    }
    if spec == "golden" {
        return Ok(Sft::golden_mean());
    }
    if let Some(p) = spec.strip_prefix("cycle:") {
        let p: usize = p.parse().map_err(|_| CliError::Usage(format!("bad period in {spec:?}")))?;
        return Ok(Sft::cycle(p.max(1)));
    }
    let text = read_file(Path::new(spec))?;
    if text.trim_start().starts_with('{') {
        let sft: Sft = parse_json(spec, &text)?;
        Sft::new(sft.transitions).map_err(|e| CliError::Validation { file: spec.into(), msg: e.to_string() })
    } else {
        Sft::parse_text(&text).map_err(|e| CliError::Parse { file: spec.into(), msg: e.to_string() })
    }
}

/// `smale`, `overlap`, `disjoint`, `integrable`, or a horseshoe JSON file.
pub fn load_horseshoe(spec: &str) -> CliResult<StandardAffineHorseshoe> {
    match spec {
        "smale" => Ok(StandardAffineHorseshoe::smale()),
        "overlap" => Ok(StandardAffineHorseshoe::overlap_model()),
        "disjoint" => Ok(StandardAffineHorseshoe::disjoint_model()),
        "integrable" => Ok(StandardAffineHorseshoe::integrable_model()),
        path => {
            let h: StandardAffineHorseshoe = parse_json(path, &read_file(Path::new(path))?)?;
            let lin = &h.linear;
            if lin.diag.len() != lin.dim() || h.branches.iter().any(|b| b.v.len() != lin.dim()) {
                return Err(CliError::Validation { file: path.into(), msg: "diag and branch translations must have length d_uu + d_c + d_s".into() });
            }
            if h.branches.is_empty() {
                return Err(CliError::Validation { file: path.into(), msg: "at least one branch is required".into() });
            }
            Ok(h)
        }
    }
}

pub fn load_cocycle(path: &str) -> CliResult<LocallyConstantCocycle> {
    let spec: CocycleSpec = parse_json(path, &read_file(Path::new(path))?)?;
    LocallyConstantCocycle::from_spec(&spec).map_err(|e| CliError::Validation { file: path.into(), msg: e.to_string() })
}

/// GridSet text (`gridset d n` header and runs) or its JSON form.
pub fn load_gridset(path: &str) -> CliResult<GridSet> {
    let text = read_file(Path::new(path))?;
    if text.trim_start().starts_with('{') {
        parse_json(path, &text)
    } else {
        GridSet::parse_text(&text).map_err(|e| CliError::Parse { file: path.into(), msg: e.to_string() })
    }
}

/// `0,1,1` or `011` for alphabets of at most ten symbols.
pub fn parse_word(s: &str) -> CliResult<Word> {
    let bad = || CliError::Usage(format!("bad word {s:?}"));
    if s.contains(',') {
        s.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect()
    } else {
        s.chars().map(|c| c.to_digit(10).map(|d| d as usize).ok_or_else(bad)).collect()
    }
}

/// A row-major matrix given inline as JSON, e.g. `[[2,0],[0,1]]`.
pub fn parse_matrix(s: &str) -> CliResult<Vec<Vec<f64>>> {
    parse_json("<matrix argument>", s)
}

pub fn parse_grid(s: &str) -> CliResult<Vec<f64>> {
    s.split(',').map(|t| t.trim().parse::<f64>().map_err(|_| CliError::Usage(format!("bad number {t:?} in {s:?}")))).collect()
}
