use skgen::cli::{dispatch, CliError};

fn main() {
    if let Ok(threads) = std::env::var("SKGEN_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
    }
    let argv: Vec<String> = std::env::args().collect();
    match dispatch(&argv) {
        Ok(report) => println!("{}", report.to_json()),
        Err(CliError::Help(text)) => println!("{text}"),
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(err.exit_code());
        }
    }
}
