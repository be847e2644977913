use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    ExitCode::from(metasynth::cli::main_with(std::env::args_os(), &|k| std::env::var(k).ok()))
}
