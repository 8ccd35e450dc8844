fn main() {
    std::process::exit(oscibench::cli::run(std::env::args_os()));
}
