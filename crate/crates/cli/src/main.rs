fn main() {
    std::process::exit(debias_cli::dispatch(std::env::args_os()));
}
