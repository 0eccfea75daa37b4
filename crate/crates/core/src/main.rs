fn main() { std::process::exit(mixmode::cli::run(std::env::args_os())); }
