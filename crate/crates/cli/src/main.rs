use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(swapchain_cli::run(std::env::args_os()))
}
