fn main() {
    std::process::exit(hri_anomaly::cli::run());
}
