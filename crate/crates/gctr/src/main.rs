fn main() {
    std::process::exit(gctr::cli::run(std::env::args_os()));
}
