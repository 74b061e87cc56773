use std::fmt::Write as _;
use std::path::PathBuf;

use clap::ValueEnum;
use rbbm::beam_model::{p_max, rbbm_continuous, thrun_components};
use rbbm::estimators::{ml_em_fit, thrun_ml_fit, vb_em_fit, vb_predictive, HitFrame, VbConfig, VbInit, VbPriors};
use rbbm::metrics::{
    build_histogram, discretize_density, hellinger_distance, kl_divergence, most_probable_bin, uniform_edges,
};
use rbbm::{BeamParams, Dataset, FitOptions, SegmentMap, ThrunParams};
use serde::Serialize;
use serde_json::{json, Value};

use crate::failure::{read, write, Failure, Outcome};
use crate::provenance;

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Ml,
    Vb,
    Thrun,
}

#[derive(clap::Args, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct Args {
    /// Dataset CSV (`z,z_star`, or `z,x,y,heading` together with --map).
    #[arg(long)]
    pub data: PathBuf,
    /// Map used to compute expected ranges from poses.
    #[arg(long)]
    pub map: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub estimator: Estimator,
    /// Sensor maximum range; taken from the map when one is given.
    #[arg(long, default_value_t = 10.0)]
    pub z_max: f64,
    #[arg(long, default_value_t = 30)]
    pub iters: usize,
    #[arg(long, default_value_t = 100)]
    pub bins: usize,
    /// Half-width of the max-range band.
    #[arg(long, default_value_t = 0.01)]
    pub eps: f64,
    /// Fit each group of expected ranges of this width separately.
    #[arg(long)]
    pub bucket_width: Option<f64>,
    /// Initial noise level.
    #[arg(long)]
    pub sigma_m: Option<f64>,
    /// Initial occlusion probability (ml).
    #[arg(long)]
    pub p_prime: Option<f64>,
    /// Initial random-reading weight (ml).
    #[arg(long)]
    pub pi3: Option<f64>,
    /// Initial max-range weight (ml).
    #[arg(long)]
    pub pi4: Option<f64>,
    /// Dirichlet prior concentration (vb).
    #[arg(long, default_value_t = 1.0)]
    pub alpha0: f64,
    /// Prior precision scale of the hit mean (vb).
    #[arg(long, default_value_t = 1.0)]
    pub beta0: f64,
    /// Prior precision scale (vb).
    #[arg(long, default_value_t = 12.0)]
    pub w0: f64,
    /// Prior degrees of freedom (vb).
    #[arg(long, default_value_t = 1.0)]
    pub nu0: f64,
    /// Recorded in the provenance file; learning itself is deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

const CURVE_POINTS: usize = 1000;
const MAX_REPRESENTATIVES: usize = 64;

/// Expected ranges standing in for the rows of a bucket, with weights.
fn representatives(data: &Dataset) -> Vec<(f64, f64)> {
    let mut stars = data.z_star().to_vec();
    stars.sort_by(f64::total_cmp);
    let n = stars.len() as f64;
    let mut unique: Vec<(f64, f64)> = Vec::new();
    for s in &stars {
        match unique.last_mut() {
            Some((v, c)) if v == s => *c += 1.0,
            _ => unique.push((*s, 1.0)),
        }
    }
    if unique.len() <= MAX_REPRESENTATIVES {
        return unique.into_iter().map(|(s, c)| (s, c / n)).collect();
    }
    stars
        .chunks(stars.len().div_ceil(MAX_REPRESENTATIVES))
        .map(|c| (c.iter().sum::<f64>() / c.len() as f64, c.len() as f64 / n))
        .collect()
}

struct Fitted {
    report: Value,
    /// Continuous density at an expected range.
    density: Box<dyn Fn(f64, f64) -> f64>,
    atom: f64,
}

fn fit_bucket(args: &Args, data: &Dataset, z_max: f64, single_range: bool) -> Outcome<Fitted> {
    let options = FitOptions {
        eps: args.eps,
        ..FitOptions::default()
    };
    Ok(match args.estimator {
        Estimator::Ml => {
            let mut init = BeamParams::ml_init(z_max);
            init.sigma_m = args.sigma_m.unwrap_or(init.sigma_m);
            init.p_prime = args.p_prime.unwrap_or(init.p_prime);
            init.pi3 = args.pi3.unwrap_or(init.pi3);
            init.pi4 = args.pi4.unwrap_or(init.pi4);
            let fit = ml_em_fit(data, &init, args.iters, &options)?;
            let params = fit.params;
            Fitted {
                report: json!({ "params": params, "fit": fit }),
                density: Box::new(move |z, s| rbbm_continuous(z, s, &params)),
                atom: params.pi4,
            }
        }
        Estimator::Thrun => {
            let mut init = ThrunParams::ml_init(z_max);
            init.sigma_m = args.sigma_m.unwrap_or(init.sigma_m);
            let fit = thrun_ml_fit(data, &init, args.iters, &options)?;
            let params = fit.params;
            Fitted {
                report: json!({ "params": params, "fit": fit }),
                density: Box::new(move |z, s| {
                    if !(0.0..=params.z_max).contains(&z) {
                        return 0.0;
                    }
                    let c = thrun_components(z, s, &params, 0.0);
                    params.z_hit * c[0] + params.z_short * c[1] + params.z_rand * c[3]
                }),
                atom: params.z_max_w,
            }
        }
        Estimator::Vb => {
            let (frame, x_mp) = if single_range {
                (
                    HitFrame::Absolute,
                    most_probable_bin(data.z(), &uniform_edges(0.0, z_max, args.bins)?)?,
                )
            } else {
                let residuals: Vec<f64> = data.rows().map(|(z, s)| z - s).collect();
                (
                    HitFrame::Residual,
                    most_probable_bin(&residuals, &uniform_edges(-z_max, z_max, 2 * args.bins)?)?,
                )
            };
            let cfg = VbConfig {
                eps: args.eps,
                frame,
                ..VbConfig::new(z_max)
            };
            let priors = VbPriors {
                alpha0: args.alpha0,
                beta0: args.beta0,
                mu_bar0: x_mp,
                w0: args.w0,
                nu0: args.nu0,
            };
            let mut init = VbInit::standard(x_mp);
            if let Some(p) = args.p_prime {
                init.p_prime = p;
            }
            let fit = vb_em_fit(data, &priors, &init, args.iters, &cfg)?;
            let post = fit.posterior;
            let atom = post.alpha[3] / post.alpha_sum();
            Fitted {
                report: json!({ "params": fit.point, "frame": frame, "x_mp": x_mp, "fit": fit }),
                density: Box::new(move |z, s| {
                    if !(0.0..=cfg.z_max).contains(&z) {
                        return 0.0;
                    }
                    vb_predictive(z, s, &post, &cfg) - atom * p_max(z, cfg.z_max, cfg.eps)
                }),
                atom,
            }
        }
    })
}

pub fn run(args: Args) -> Outcome {
    if args.iters == 0 {
        return Err(Failure::usage("--iters must be at least 1"));
    }
    if args.bins == 0 {
        return Err(Failure::usage("--bins must be at least 1"));
    }
    let text = read(&args.data)?;
    let (data, z_max) = match &args.map {
        Some(path) => {
            let map = SegmentMap::from_json_str(&read(path)?)?;
            (Dataset::from_pose_csv_str(&text, &map)?, map.z_max())
        }
        None => (Dataset::from_csv_str(&text, args.z_max)?, args.z_max),
    };
    let buckets = match args.bucket_width {
        Some(w) => data.buckets(w)?,
        None => {
            let mean = data.z_star().iter().sum::<f64>() / data.len() as f64;
            vec![(mean, data)]
        }
    };
    let edges = uniform_edges(0.0, z_max, args.bins)?;
    let grid: Vec<f64> = (0..=CURVE_POINTS)
        .map(|i| z_max * i as f64 / CURVE_POINTS as f64)
        .collect();
    let mut fits = Vec::new();
    let mut curve = String::from("bucket,z,density\n");
    for (index, (z_star, part)) in buckets.iter().enumerate() {
        let reps = representatives(part);
        let single_range = args.bucket_width.is_some() || reps.len() == 1;
        let fitted = fit_bucket(&args, part, z_max, single_range)?;
        let mixture = |z: f64| reps.iter().map(|(s, w)| w * (fitted.density)(z, *s)).sum::<f64>();
        let hist = build_histogram(part.z(), &edges)?;
        let model = discretize_density(mixture, &edges, Some((z_max, fitted.atom)))?;
        let kl = kl_divergence(&hist, &model)?;
        let d2 = hellinger_distance(&hist, &model)?;
        let mut entry = fitted.report;
        entry["bucket"] = json!(index);
        entry["z_star"] = json!(z_star);
        entry["rows"] = json!(part.len());
        entry["kl"] = json!(kl.value);
        entry["kl_floored"] = json!(kl.floored);
        entry["hellinger"] = json!(d2);
        fits.push(entry);
        for &z in &grid {
            writeln!(curve, "{index},{z},{}", mixture(z)).unwrap();
        }
    }
    std::fs::create_dir_all(&args.out_dir)?;
    let report_path = args.out_dir.join("report.json");
    let curve_path = args.out_dir.join("curve.csv");
    let report = json!({
        "estimator": args.estimator,
        "z_max": z_max,
        "bins": args.bins,
        "iterations": args.iters,
        "fits": fits,
    });
    write(
        &report_path,
        serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
    )?;
    write(&curve_path, curve)?;
    provenance::record(&report_path, "learn", args.seed, &args, &[&report_path, &curve_path])
}
