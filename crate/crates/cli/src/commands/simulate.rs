use std::path::PathBuf;

use rbbm::bayes_net::sample_dataset;
use rbbm::NetParams;
use serde::Serialize;

use crate::failure::{write, Failure, Outcome};
use crate::provenance;

#[derive(clap::Args, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct Args {
    /// Expected ranges to simulate, comma separated.
    #[arg(long = "z-star", value_delimiter = ',', required = true)]
    pub z_star: Vec<f64>,
    /// Readings per expected range.
    #[arg(long, default_value_t = 500)]
    pub per_range: usize,
    /// Ratio of the geometric prior on the number of unmodeled objects.
    #[arg(long, default_value_t = 0.8)]
    pub p: f64,
    #[arg(long, default_value_t = 0.15)]
    pub sigma_m: f64,
    #[arg(long, default_value_t = 0.2)]
    pub pi3: f64,
    #[arg(long, default_value_t = 0.02)]
    pub pi4: f64,
    #[arg(long, default_value_t = 10.0)]
    pub z_max: f64,
    #[arg(long)]
    pub seed: u64,
    /// Dataset CSV to write.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: Args) -> Outcome {
    if args.per_range == 0 {
        return Err(Failure::usage("--per-range must be at least 1"));
    }
    let params = NetParams::new(args.p, args.sigma_m, args.pi3, args.pi4, args.z_max)?;
    let data = sample_dataset(&args.z_star, &params, args.per_range, args.seed)?;
    write(&args.out, data.to_csv_string()?)?;
    provenance::record(&args.out, "simulate", Some(args.seed), &args, &[&args.out])
}
