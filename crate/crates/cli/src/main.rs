use clap::Parser;
use octdyn_cli::{run, Cli, EXIT_FATAL};

fn main() {
    let cli = Cli::parse();
    let code = match run(&cli) {
        Ok(summary) => {
            for note in &summary.notes {
                eprintln!("note: {note}");
            }
            for path in &summary.outputs {
                println!("{}", path.display());
            }
            summary.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FATAL
        }
    };
    std::process::exit(code);
}
