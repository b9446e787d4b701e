use std::process::ExitCode;

fn main() -> ExitCode {
    let code = match boltzlens_cli::parse_args(std::env::args_os()) {
        Ok(cmd) => boltzlens_cli::dispatch(cmd),
        Err(e) => boltzlens_cli::report_usage(&e),
    };
    ExitCode::from(code)
}
