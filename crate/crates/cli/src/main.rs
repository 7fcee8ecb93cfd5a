use std::process::ExitCode;

fn main() -> ExitCode {
    let cli = match sofia_cli::parse(std::env::args_os().collect()) {
        Ok(Ok(cli)) => cli,
        Ok(Err(e)) => e.exit(),
        Err(e) => {
            eprintln!("error: {}", sofia_cli::render_error(&e));
            return ExitCode::from(2);
        }
    };
    match sofia_cli::execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", sofia_cli::render_error(&e));
            ExitCode::FAILURE
        }
    }
}
