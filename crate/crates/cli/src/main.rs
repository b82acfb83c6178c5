mod args;
mod commands;

use std::ffi::OsString;
use std::io::Write;
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use commands::{Env, Failure};

/// Exit code plus the two streams of one invocation.
#[derive(Debug)]
struct Invocation {
    code: u8,
    stdout: String,
    stderr: String,
}

fn dispatch(cli: Cli, env: &Env) -> commands::CmdResult {
    match cli.command {
        Command::Mapping(cmd) => commands::mapping(cmd, env),
        Command::Space(cmd) => commands::space(cmd, env),
        Command::Cost(a) => commands::cost(a),
        Command::Simulate(a) => commands::simulate(a, env),
        Command::Rank(a) => commands::rank(a),
        Command::Search(a) => commands::search(a, env),
    }
}

/// Runs one command line. Failures leave stdout empty.
fn execute<I, T>(argv: I, env: &Env) -> Invocation
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // help and version are rendered as "errors" that go to stdout
            let text = e.render().to_string();
            return if e.use_stderr() {
                Invocation { code: 1, stdout: String::new(), stderr: text }
            } else {
                Invocation { code: 0, stdout: text, stderr: String::new() }
            };
        }
    };
    match dispatch(cli, env) {
        Ok(stdout) => Invocation { code: 0, stdout, stderr: String::new() },
        Err(Failure { code, error }) => {
            Invocation { code: code as u8, stdout: String::new(), stderr: format!("error: {error:#}\n") }
        }
    }
}

fn main() -> ExitCode {
    let env = Env { seed: std::env::var("VITAS_KIT_SEED").ok() };
    let out = execute(std::env::args_os(), &env);
    eprint!("{}", out.stderr);
    let mut stdout = std::io::stdout().lock();
    if stdout.write_all(out.stdout.as_bytes()).and_then(|_| stdout.flush()).is_err() {
        return ExitCode::from(commands::EXIT_RUNTIME as u8);
    }
    ExitCode::from(out.code)
}

#[cfg(test)]
mod tests;
