fn main() {
    std::process::exit(fruitsize::cli::run(std::env::args_os()));
}
