use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = cfcomm::cli::Cli::parse();
    if let Err(e) = cfcomm::cli::run(cli) {
        eprintln!("cfcomm: {e}");
        std::process::exit(e.exit_code());
    }
}
