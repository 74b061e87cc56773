use std::path::PathBuf;

use clap::ValueEnum;
use rbbm::bayes_net::sample_beam;
use rbbm::numeric::normal_pdf;
use rbbm::rng::derive_seed;
use rbbm::scan_model::{beam_marginal, gaussian_marginal, probability_map, GridSpec};
use rbbm::{
    simulate_ideal_scan, BeamParams, LocalRegion, NetParams, Pose, Scan, ScanGeometry, ScanMode, ScanModelConfig,
    SegmentMap,
};
use serde::Serialize;
use serde_json::json;

use crate::failure::{read, write, Failure, Outcome};
use crate::provenance;

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Static,
    Dynamic,
}

#[derive(clap::Args, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct Args {
    /// Map JSON; defaults to a 4 m room with a box in the middle.
    #[arg(long)]
    pub map: Option<PathBuf>,
    /// Scan CSV `angle,z` with angles in radians relative to the heading.
    #[arg(long)]
    pub scan: Option<PathBuf>,
    /// Pose `x,y,heading` (radians) at which the scan is simulated and the
    /// marginals are evaluated.
    #[arg(long, value_delimiter = ',', default_value = "1,2,0", allow_hyphen_values = true)]
    pub pose: Vec<f64>,
    /// Beam layout `first,last,count` in degrees, used when no scan is given.
    #[arg(long, value_delimiter = ',', default_value = "-90,90,37", allow_hyphen_values = true)]
    pub beams: Vec<f64>,
    /// Standard deviation of the translational pose error.
    #[arg(long, default_value_t = 0.01)]
    pub region_trans: f64,
    /// Standard deviation of the heading error in degrees.
    #[arg(long, default_value_t = 5.0)]
    pub region_rot: f64,
    /// Poses drawn from the local region.
    #[arg(long = "samples-l", default_value_t = 150)]
    pub samples: usize,
    /// Noise inflation per square root of region diameter.
    #[arg(long = "smooth-c", default_value_t = 20.0)]
    pub smoothing: f64,
    #[arg(long, value_enum, default_value_t = Mode::Static)]
    pub mode: Mode,
    /// Grid `x_min,x_max,nx,y_min,y_max,ny` for the probability map.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0.5,1.5,21,1.5,2.5,21",
        allow_hyphen_values = true
    )]
    pub grid: Vec<f64>,
    /// Beams whose marginals are written; defaults to the beam nearest 15 degrees.
    #[arg(long)]
    pub beam_index: Vec<usize>,
    #[arg(long, default_value_t = 0.02)]
    pub sigma_m: f64,
    #[arg(long, default_value_t = 0.0)]
    pub p_prime: f64,
    #[arg(long, default_value_t = 0.0)]
    pub pi3: f64,
    #[arg(long, default_value_t = 0.0)]
    pub pi4: f64,
    /// Occluder ratio used when simulating the scan.
    #[arg(long, default_value_t = 0.0)]
    pub sim_p: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

const MARGINAL_POINTS: usize = 2001;

fn demo_map() -> rbbm::Result<SegmentMap> {
    let mut map = SegmentMap::rectangle(8.0, 0.0, 0.0, 4.0, 4.0)?;
    map.add_rectangle(1.8, 1.8, 2.2, 2.2)?;
    Ok(map)
}

fn read_scan(path: &std::path::Path, z_max: f64) -> Outcome<Scan> {
    let text = read(path)?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut angles = Vec::new();
    let mut z = Vec::new();
    for (i, row) in reader.deserialize::<(f64, f64)>().enumerate() {
        let (a, r) = row.map_err(|e| Failure::usage(format!("{}: row {}: {e}", path.display(), i + 2)))?;
        angles.push(a);
        z.push(r.min(z_max));
    }
    Ok(Scan::new(z, ScanGeometry::new(angles)?)?)
}

pub fn run(args: Args) -> Outcome {
    for (flag, values, len) in [
        ("--pose", &args.pose, 3),
        ("--beams", &args.beams, 3),
        ("--grid", &args.grid, 6),
    ] {
        if values.len() != len {
            return Err(Failure::usage(format!("{flag} takes {len} comma-separated values")));
        }
    }
    let map = match &args.map {
        Some(path) => SegmentMap::from_json_str(&read(path)?)?,
        None => demo_map()?,
    };
    let z_max = map.z_max();
    let params = BeamParams::new(args.sigma_m, args.p_prime, args.pi3, args.pi4, z_max)?;
    let region = LocalRegion::new(args.region_trans, args.region_rot.to_radians())?;
    let mode = match args.mode {
        Mode::Static => ScanMode::StaticHitOnly,
        Mode::Dynamic => ScanMode::DynamicFullMixture,
    };
    let cfg = ScanModelConfig::new(args.samples, args.smoothing, mode)?;
    let pose = Pose::new(args.pose[0], args.pose[1], args.pose[2]);

    let scan = match &args.scan {
        Some(path) => read_scan(path, z_max)?,
        None => {
            let count = args.beams[2];
            if count < 1.0 || count.fract() != 0.0 {
                return Err(Failure::usage("--beams count must be a positive integer"));
            }
            let geometry =
                ScanGeometry::uniform(args.beams[0].to_radians(), args.beams[1].to_radians(), count as usize)?;
            let net = NetParams::new(args.sim_p, args.sigma_m, args.pi3, args.pi4, z_max)?;
            let z = simulate_ideal_scan(&map, &pose, &geometry)
                .into_iter()
                .enumerate()
                .map(|(i, z_star)| sample_beam(z_star.max(1e-9), &net, derive_seed(args.seed, i as u64)).map(|t| t.z))
                .collect::<rbbm::Result<Vec<f64>>>()?;
            Scan::new(z, geometry)?
        }
    };

    for (i, &n) in [args.grid[2], args.grid[5]].iter().enumerate() {
        if n < 1.0 || n.fract() != 0.0 {
            return Err(Failure::usage(format!(
                "--grid cell count {} must be a positive integer",
                i + 1
            )));
        }
    }
    let grid = GridSpec {
        x_min: args.grid[0],
        x_max: args.grid[1],
        nx: args.grid[2] as usize,
        y_min: args.grid[3],
        y_max: args.grid[4],
        ny: args.grid[5] as usize,
        heading: pose.heading,
        heading_offsets: Vec::new(),
    };
    let map_seed = derive_seed(args.seed, u64::MAX);
    let prob = probability_map(&scan, &map, &params, &region, &cfg, &grid, map_seed)?;

    let beams = if args.beam_index.is_empty() {
        let target = 15f64.to_radians();
        let nearest = scan
            .geometry
            .angles()
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - target).abs().total_cmp(&(b.1 - target).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        vec![nearest]
    } else {
        args.beam_index.clone()
    };
    let z_grid: Vec<f64> = (0..MARGINAL_POINTS)
        .map(|i| z_max * i as f64 / (MARGINAL_POINTS - 1) as f64)
        .collect();

    std::fs::create_dir_all(&args.out_dir)?;
    let map_path = args.out_dir.join("probability_map.csv");
    write(&map_path, prob.to_csv_string())?;
    let mut outputs = vec![map_path.clone()];
    let mut summaries = Vec::new();
    for &b in &beams {
        let marginal_seed = derive_seed(args.seed, u64::MAX - 1 - b as u64);
        let sample = beam_marginal(
            b,
            &scan.geometry,
            &pose,
            &map,
            &params,
            &region,
            &cfg,
            &z_grid,
            marginal_seed,
        )?;
        let (mean, sd) = gaussian_marginal(b, &scan.geometry, &pose, &map, &params, &region, &cfg, marginal_seed)?;
        let mut gauss = String::from("z,density\n");
        for &z in &z_grid {
            gauss.push_str(&format!("{z},{}\n", normal_pdf(z, mean, sd)));
        }
        let sample_path = args.out_dir.join(format!("marginal_beam{b}.csv"));
        let gauss_path = args.out_dir.join(format!("marginal_beam{b}_gaussian.csv"));
        write(&sample_path, sample.to_csv_string())?;
        write(&gauss_path, gauss)?;
        outputs.push(sample_path);
        outputs.push(gauss_path);
        summaries.push(json!({
            "beam": b,
            "angle": scan.geometry.angles()[b],
            "observed": scan.z[b],
            "atom_mass": sample.atom_mass,
            "total_mass": sample.total_mass,
            "gaussian_mean": mean,
            "gaussian_sd": sd,
        }));
    }
    let summary_path = args.out_dir.join("summary.json");
    let best = prob
        .loglik
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| (prob.xs[i % prob.xs.len()], prob.ys[i / prob.xs.len()]));
    let summary = json!({
        "scan": { "angles": scan.geometry.angles(), "z": scan.z },
        "best_cell": best,
        "marginals": summaries,
    });
    write(
        &summary_path,
        serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n",
    )?;
    outputs.push(summary_path);
    let refs: Vec<&std::path::Path> = outputs.iter().map(|p| p.as_path()).collect();
    provenance::record(&map_path, "scanmap", Some(args.seed), &args, &refs)
}
