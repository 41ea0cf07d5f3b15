use std::ffi::OsString;
use std::io::Write;

use clap::error::ErrorKind;
use clap::Parser;

use crate::config::{parse_config, Cli};
use crate::runner::run;

/// Process entry point. Returns 0 on success, 2 when the run is flagged or a
/// solver fails, 1 for configuration and file errors.
pub fn execute<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    execute_to(args, &mut std::io::stdout(), &mut std::io::stderr())
}

pub fn execute_to<I, T>(args: I, out: &mut impl Write, err: &mut impl Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match parse_config(&cli).and_then(|config| run(&config)) {
        Ok(manifest) => {
            for (name, value) in &manifest.metrics {
                let _ = writeln!(out, "{name} = {value:.6e}");
            }
            for flag in &manifest.flags {
                let _ = writeln!(err, "flagged: {flag}");
            }
            if manifest.is_flagged() {
                2
            } else {
                0
            }
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use std::path::Path;

    use sha2::{Digest, Sha256};

    use super::*;

    fn rumheat(args: &[&str], dir: &Path, config: Option<&str>) -> (i32, String) {
        let mut argv: Vec<String> = vec!["rumheat".into()];
        argv.extend(args.iter().map(|s| s.to_string()));
        argv.push("--out".into());
        argv.push(dir.display().to_string());
        if let Some(text) = config {
            let path = dir.with_extension("toml");
            std::fs::write(&path, text).unwrap();
            argv.push("--config".into());
            argv.push(path.display().to_string());
        }
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = execute_to(argv, &mut out, &mut err);
        (code, String::from_utf8(err).unwrap())
    }

    fn summary(dir: &Path) -> Vec<(String, String)> {
        std::fs::read_to_string(dir.join("summary.csv"))
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| {
                let (a, b) = l.split_once(',').unwrap();
                (a.to_string(), b.to_string())
            })
            .collect()
    }

    #[test]
    fn zero_data_gives_zero_terminal() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("run");
        let (code, err) = rumheat(&["rum"], &dir, Some("zeta0 = \"zero\"\n"));
        assert_eq!(code, 0, "{err}");
        let rows = summary(&dir);
        let q = rows.iter().find(|r| r.0 == "terminal_q_norm").unwrap();
        assert_eq!(q.1.parse::<f64>().unwrap(), 0.0);
    }

    #[test]
    fn sweep_table_shape() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("run");
        let (code, err) = rumheat(&["sweep", "--k", "1"], &dir, None);
        assert_eq!(code, 0, "{err}");
        let text = std::fs::read_to_string(dir.join("sweep.csv")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "eps,terminal_q_norm,weighted_control_norm,J,slope"
        );
        assert_eq!(lines.len(), 8);
        assert!(lines[7].starts_with("slope,,,,"));
        assert!(lines[1..7].iter().all(|l| l.split(',').count() == 5));
    }

    #[test]
    fn manifest_checksums_match_files() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("run");
        let (code, err) = rumheat(&["odd"], &dir, None);
        assert_eq!(code, 0, "{err}");
        let manifest: toml::Value = std::fs::read_to_string(dir.join("manifest.toml"))
            .unwrap()
            .parse()
            .unwrap();
        let files = manifest["files"].as_array().unwrap();
        assert!(files.len() >= 4);
        for f in files {
            let name = f["name"].as_str().unwrap();
            let bytes = std::fs::read(dir.join(name)).unwrap();
            assert_eq!(
                f["sha256"].as_str().unwrap(),
                hex::encode(Sha256::digest(&bytes)),
                "{name}"
            );
        }
        assert_eq!(manifest["config"]["scenario"].as_str(), Some("odd"));
    }

    #[test]
    fn config_errors_exit_one() {
        let tmp = tempfile::tempdir().unwrap();
        let (code, err) = rumheat(&["rum", "--nt", "7"], &tmp.path().join("a"), None);
        assert_eq!(code, 1);
        assert!(err.contains("nt"), "{err}");
        let (code, err) = rumheat(
            &["rum"],
            &tmp.path().join("b"),
            Some("omega1 = [0.2, 0.6]\n"),
        );
        assert_eq!(code, 1);
        assert!(err.contains("omega1"), "{err}");
        let (code, err) = rumheat(&["rum"], &tmp.path().join("c"), Some("bogus = 1\n"));
        assert_eq!(code, 1);
        assert!(err.contains("bogus"), "{err}");
        let (code, _) = rumheat(&["no-such-scenario"], &tmp.path().join("d"), None);
        assert_eq!(code, 1);
    }

    #[test]
    fn unconverged_solve_is_flagged_and_kept() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("run");
        let (code, err) = rumheat(&["rum"], &dir, Some("max_iter = 1\ntol = 1e-14\n"));
        assert_eq!(code, 2, "{err}");
        assert!(err.contains("flagged"), "{err}");
        assert!(dir.join("field_control.csv").exists());
        assert!(dir.join("manifest.toml").exists());
    }

    #[test]
    fn even_complex_writes_imaginary_parts() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("run");
        let (code, err) = rumheat(&["even-complex", "--nx", "31", "--nt", "64"], &dir, None);
        assert_eq!(code, 0, "{err}");
        let text = std::fs::read_to_string(dir.join("field_u.csv")).unwrap();
        assert!(text.lines().skip(1).any(|l| l
            .rsplit(',')
            .next()
            .unwrap()
            .parse::<f64>()
            .unwrap()
            != 0.0));
    }
}
