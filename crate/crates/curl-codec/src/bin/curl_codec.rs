fn main() {
    std::process::exit(curl_codec::cli::main());
}
