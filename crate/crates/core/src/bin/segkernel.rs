fn main() {
    std::process::exit(segkernel::cli::run(std::env::args_os()));
}
