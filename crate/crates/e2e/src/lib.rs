//! Runs the `wstate` command line in-process for end-to-end checks.

/// Exit code and captured output of one command.
#[derive(Debug)]
pub struct CliRun {
    pub code: u8,
    pub stdout: Vec<u8>,
    pub stderr: String,
}

/// Runs `wstate` with `args` (without the program name).
pub fn wstate(args: &[&str]) -> CliRun {
    let (mut stdout, mut stderr) = (Vec::new(), Vec::new());
    let code = wstate_cli::run(
        std::iter::once("wstate").chain(args.iter().copied()),
        &mut stdout,
        &mut stderr,
    );
    CliRun {
        code,
        stdout,
        stderr: String::from_utf8_lossy(&stderr).into_owned(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn captures_output_and_codes() {
        let ok = wstate(&["simulate", "--depth", "1"]);
        assert_eq!(ok.code, 0);
        assert!(String::from_utf8_lossy(&ok.stdout).contains("\"n_modes\": 2"));
        let bad = wstate(&["simulate", "--depth", "9"]);
        assert_eq!(bad.code, 2);
        assert!(!bad.stderr.is_empty());
        assert_eq!(wstate(&["--help"]).code, 0);
    }
}
