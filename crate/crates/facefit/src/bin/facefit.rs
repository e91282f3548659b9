fn main() {
    std::process::exit(facefit::cli::main_with(std::env::args_os()));
}
