use std::process::ExitCode;

use clap::Parser;

mod commands;

use commands::{Cli, CliError};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

impl CliError {
    /// 1 usage, 2 data, 3 numerical failure.
    fn exit_code(&self) -> u8 {
        use enspost::Error as E;
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) => match e {
                E::InvalidConfig(_) | E::UnknownModel(_) => 1,
                E::Data(enspost::data::DataError::InvalidConfig(_)) => 1,
                E::DivergedTraining { .. } | E::NonFiniteLikelihood | E::Score(_) => 3,
                _ => 2,
            },
        }
    }
}
