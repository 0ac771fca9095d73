use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp_secs()
        .init();
    let cli = dass_cli::Cli::parse();
    if let Err(e) = dass_cli::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(dass_cli::exit_code(&e));
    }
}
