use std::process::ExitCode;

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let result = ghostpixel_cli::init_threads()
        .and_then(|()| ghostpixel_cli::run(&args, &mut std::io::stdout().lock()));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ghostpixel: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
