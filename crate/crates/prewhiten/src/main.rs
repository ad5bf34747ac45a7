fn main() {
    std::process::exit(prewhiten::cli::run(std::env::args_os()));
}
