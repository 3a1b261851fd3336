//! `--spec FILE` support: a plain key=value file that stands in for
//! command-line flags, so a whole experiment is reproducible from one
//! artifact. Keys are the long flag names (kebab-case); explicit flags on
//! the command line override spec entries.

use std::fmt;

#[derive(Debug)]
pub struct SpecError(String);

impl fmt::Display for SpecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Replace `--spec FILE` in the raw argument list with the flags the file
/// encodes, inserted right after the subcommand so later (explicit) flags
/// win.
pub fn expand_spec_args(args: Vec<String>) -> Result<Vec<String>, SpecError> {
    let mut spec_path: Option<String> = None;
    let mut rest: Vec<String> = Vec::with_capacity(args.len());
    let mut iter = args.into_iter();
    while let Some(a) = iter.next() {
        if a == "--spec" {
            match iter.next() {
                Some(p) => spec_path = Some(p),
                None => return Err(SpecError("--spec requires a file path".into())),
            }
        } else if let Some(p) = a.strip_prefix("--spec=") {
            spec_path = Some(p.to_string());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = spec_path else {
        return Ok(rest);
    };
    if rest.len() < 2 || rest[1].starts_with('-') {
        return Err(SpecError("--spec requires a subcommand".into()));
    }
    let text = std::fs::read_to_string(&path)
        .map_err(|e| SpecError(format!("cannot read spec file {path}: {e}")))?;
    let mut tokens = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(SpecError(format!(
                "{path}:{}: expected key=value",
                lineno + 1
            )));
        };
        let key = key.trim();
        let value = value.trim();
        match value {
            // Boolean switches appear as key=true/false.
            "true" => tokens.push(format!("--{key}")),
            "false" => {}
            _ => {
                tokens.push(format!("--{key}"));
                tokens.push(value.to_string());
            }
        }
    }
    let mut out = Vec::with_capacity(rest.len() + tokens.len());
    out.extend(rest.drain(..2));
    out.extend(tokens);
    out.extend(rest);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn expands_after_subcommand() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "# comment\nsigma=25\nno-debias=true\nseed=7").unwrap();
        let args: Vec<String> = ["csc", "denoise", "--spec", f.path().to_str().unwrap(), "--sigma", "50"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let out = expand_spec_args(args).unwrap();
        assert_eq!(
            out,
            vec!["csc", "denoise", "--sigma", "25", "--no-debias", "--seed", "7", "--sigma", "50"]
        );
    }

    #[test]
    fn passthrough_without_spec() {
        let args: Vec<String> = ["csc", "synth"].iter().map(|s| s.to_string()).collect();
        assert_eq!(expand_spec_args(args.clone()).unwrap(), args);
    }
}
