//! `--config FILE` support. The file holds `key = value` lines, one flag
//! per line; `#` starts a comment. Keys are long flag names. `true` turns a
//! switch on and `false` leaves it off. The entries are spliced in right
//! after the subcommand so flags given on the command line win.

use std::ffi::OsString;
use std::path::Path;

use crate::error::CliError;

/// Replaces a `--config FILE` (or `--config=FILE`) argument with the flags
/// the file describes.
pub fn expand(args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    if args.len() < 2 || args[1].to_string_lossy().starts_with('-') {
        return Ok(args);
    }
    let mut rest = Vec::with_capacity(args.len());
    let mut file = None;
    let mut it = args.into_iter();
    let head: Vec<OsString> = it.by_ref().take(2).collect();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--" {
            rest.push(a);
            rest.extend(it.by_ref());
            break;
        }
        if s == "--config" {
            let path = it
                .next()
                .ok_or_else(|| CliError::Usage("--config needs a file path".into()))?;
            file = Some(path);
        } else if let Some(path) = s.strip_prefix("--config=") {
            file = Some(OsString::from(path));
        } else {
            rest.push(a);
        }
    }
    let mut out = head;
    if let Some(path) = file {
        out.extend(read_flags(Path::new(&path))?);
    }
    out.extend(rest);
    Ok(out)
}

fn read_flags(path: &Path) -> Result<Vec<OsString>, CliError> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(CliError::InputNotFound(path.to_path_buf()))
        }
        Err(e) => return Err(e.into()),
    };
    parse_flags(&text).map_err(|(line, msg)| {
        CliError::Usage(format!("{}:{line}: {msg}", path.display()))
    })
}

/// Turns config text into command-line flags. Errors carry a 1-based line.
pub fn parse_flags(text: &str) -> Result<Vec<OsString>, (usize, String)> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| (n + 1, format!("expected key = value, got {line:?}")))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '-') {
            return Err((n + 1, format!("bad key {key:?}")));
        }
        if key == "config" {
            return Err((n + 1, "config files cannot include other config files".into()));
        }
        match value {
            "true" => out.push(OsString::from(format!("--{key}"))),
            "false" => {}
            v => out.push(OsString::from(format!("--{key}={v}"))),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn parses_pairs_comments_and_switches() {
        let flags = parse_flags("# sweep\nretain = 0.1\nscale_color=1/2 # inline\njson = true\nno-ncb = false\n\n").unwrap();
        assert_eq!(flags, os(&["--retain=0.1", "--scale-color=1/2", "--json"]));
    }

    #[test]
    fn rejects_malformed_lines() {
        assert_eq!(parse_flags("a = 1\nnonsense\n").unwrap_err().0, 2);
        assert!(parse_flags("bad key = 1").is_err());
        assert!(parse_flags("config = x").is_err());
    }

    #[test]
    fn file_flags_go_before_command_line_flags() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.txt");
        std::fs::write(&cfg, "retain = 0.2\n").unwrap();
        let cfg_s = cfg.to_str().unwrap();
        let out = expand(os(&["vz", "compress", "in", "--config", cfg_s, "--retain", "0.3"])).unwrap();
        assert_eq!(out, os(&["vz", "compress", "--retain=0.2", "in", "--retain", "0.3"]));
        let out = expand(os(&["vz", "compress", &format!("--config={cfg_s}")])).unwrap();
        assert_eq!(out, os(&["vz", "compress", "--retain=0.2"]));
    }

    #[test]
    fn missing_config_file_is_input_not_found() {
        let err = expand(os(&["vz", "inspect", "--config", "/nonexistent/cfg"])).unwrap_err();
        assert_eq!(err.token(), "InputNotFound");
    }
}
