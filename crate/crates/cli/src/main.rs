use clap::Parser;

fn main() {
    let cli = qkdnet_cli::Cli::parse();
    match qkdnet_cli::run(cli) {
        Ok(summary) => println!("{summary}"),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}
