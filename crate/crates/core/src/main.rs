use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CERTNN_LOG", "warn")).init();
    certnn::cli::run_from_args(std::env::args_os())
}
