fn main() {
    std::process::exit(slate_rerank::cli::run(std::env::args_os()));
}
