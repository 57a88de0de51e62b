fn main() {
    std::process::exit(taxstop::cli::run(std::env::args_os()));
}
