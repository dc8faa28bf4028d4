fn main() {
    std::process::exit(henonlab::run(std::env::args_os()));
}
