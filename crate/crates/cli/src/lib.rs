//! Command surface of the `emogest` binary.

pub mod args;
pub mod commands;
pub mod exit;
pub mod render;
pub mod stage;

use args::{Cli, Command};

/// Runs one command and returns its exit code.
pub fn run(cli: &Cli) -> u8 {
    let result = match &cli.command {
        Command::InitConfig { preset, out, seed } => commands::init_config(*preset, out, *seed),
        Command::PrepareData(a) => commands::prepare_data(a),
        Command::PretrainClassifier(a) => commands::pretrain_classifier_stage(a),
        Command::PretrainSampler(a) => commands::pretrain_sampler_stage(a),
        Command::PretrainFgdExtractor(a) => commands::pretrain_fgd_stage(a),
        Command::Train(a) => commands::train_stage(a),
        Command::Generate(a) => commands::generate_stage(a),
        Command::Evaluate(a) => commands::evaluate_stage(a),
        Command::Render(a) => commands::render_stage(a),
    };
    match result {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit::code_for(&e)
        }
    }
}
