use std::process::ExitCode;

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let code = groundloop::cli::run_from(std::env::args_os(), &mut std::io::stdout().lock());
    ExitCode::from(code as u8)
}
