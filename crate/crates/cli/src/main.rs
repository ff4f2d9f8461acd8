use std::process::ExitCode;

use bindiff_cli::ErrorCategory;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match bindiff_cli::run(std::env::args_os()) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            if let Some(clap_err) = err.downcast_ref::<clap::Error>() {
                let _ = clap_err.print();
                return ExitCode::from(clap_err.exit_code().clamp(0, 255) as u8);
            }
            let cat = ErrorCategory::of(&err);
            eprintln!("error[{}]: {err:#}", cat.label());
            ExitCode::from(cat.exit_code() as u8)
        }
    }
}
