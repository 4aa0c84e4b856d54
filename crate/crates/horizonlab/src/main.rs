fn main() {
    std::process::exit(horizonlab::run());
}
