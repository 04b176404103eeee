use clap::Parser;
use sassl_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => println!("{summary}"),
        Err(e) => {
            let doc = e.to_json();
            eprintln!("{doc}");
            if let Some(dir) = cli.out.as_ref().filter(|d| d.is_dir()) {
                let _ = std::fs::write(dir.join("error.json"), format!("{doc}\n"));
            }
            std::process::exit(e.exit_code());
        }
    }
}
