fn main() {
    std::process::exit(xpatch::cli::run(std::env::args_os()));
}
