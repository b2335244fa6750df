use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use flatcluster::io::{read_labels, read_points, write_labels, write_points};
use flatcluster::lbf::Energy;
use flatcluster::model_order::{estimate_k_for, sod_values};
use flatcluster::synth::Support;
use flatcluster::{
    estimate_noise_epsilon, generate_hybrid, kflats, lbf_cluster, misclassification_rate, slbf_cluster, verify_theorem as run_theorem,
    wk_curve, Flat, HlmAlgorithm, InitStrategy, KFlatsConfig, Labeling, LbfConfig, PointCloud, ScaleParams, SlbfConfig, SynthSpec,
    TubeMixture,
};

use crate::error::{io_error, CliError};
use crate::{
    Algo, AlgoArgs, BenchArgs, ClusterArgs, DataArgs, EnergyArg, EstimateKArgs, EvaluateArgs, InitArg, NoiseArgs, SupportArg,
    SynthArgs, TheoremArgs,
};

type Result<T> = std::result::Result<T, CliError>;

/// The given seed, or a fresh one from the OS (reported so the run can be
/// repeated).
fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random::<u64>();
        eprintln!("seed {s} drawn from entropy");
        s
    })
}

fn echo(line: &str) {
    eprintln!("config: {line}");
}

fn read_cloud(path: &Path) -> Result<PointCloud<f64>> {
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    read_points(BufReader::new(file)).map_err(|e| match e {
        flatcluster::Error::Format(m) => CliError::Data(format!("{}: {m}", path.display())),
        other => other.into(),
    })
}

fn read_label_file(path: &Path) -> Result<Vec<i64>> {
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    read_labels(BufReader::new(file)).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| io_error(path, e))
}

fn flush(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| io_error(path, e))
}

fn synth_spec(data: &DataArgs, case: &str, seed: u64) -> Result<SynthSpec> {
    let mut spec = SynthSpec::from_case(case, seed)?;
    spec.points_per_flat = data.per_flat;
    spec.noise_sigma = data.sigma;
    spec.outlier_fraction = data.outliers;
    spec.affine = data.affine;
    spec.min_angle = data.min_angle;
    spec.support = match data.support {
        SupportArg::Ball => Support::Ball,
        SupportArg::Cube => Support::Cube,
    };
    spec.validate()?;
    Ok(spec)
}

fn fmt_list(values: &[f64]) -> String {
    let items: Vec<String> = values.iter().map(|v| format!("{v:.6}")).collect();
    format!("[{}]", items.join(", "))
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let seed = resolve_seed(args.seed);
    let spec = synth_spec(&args.data, &args.data.case, seed)?;
    echo(&format!(
        "case={} per_flat={} sigma={} outliers={} affine={} min_angle={:?} support={:?} seed={seed}",
        args.data.case, spec.points_per_flat, spec.noise_sigma, spec.outlier_fraction, spec.affine, spec.min_angle, spec.support
    ));
    let data = generate_hybrid::<f64>(&spec)?;
    let mut out = create(&args.out)?;
    write_points(&mut out, &data.cloud, args.header)?;
    flush(out, &args.out)?;
    if let Some(path) = &args.labels {
        let mut out = create(path)?;
        write_labels(&mut out, data.cloud.truth().expect("generated data carries truth").iter().copied())?;
        flush(out, path)?;
    }
    println!(
        "wrote {} points in R^{} ({} inliers, {} outliers)",
        data.cloud.len(),
        data.cloud.dim(),
        spec.inliers(),
        spec.outliers()
    );
    Ok(())
}

fn scale_params(params: &AlgoArgs, multiscale: bool) -> ScaleParams {
    let mut scale = ScaleParams::new(params.d).multiscale(multiscale);
    if let Some(s) = params.start_size {
        scale.start_size = s;
    }
    if let Some(t) = params.step_size {
        scale.step_size = t;
    }
    scale.max_neighbors = params.max_neighbors;
    scale
}

fn scale_echo(scale: &ScaleParams) -> String {
    format!(
        "S={} T={} max_neighbors={} first_scale={}",
        scale.start_size,
        scale.step_size,
        scale.max_neighbors.map_or("N".to_string(), |m| m.to_string()),
        scale.allow_first_scale
    )
}

struct Outcome {
    labeling: Labeling,
    flats: Option<Vec<Flat<f64>>>,
    score: String,
}

fn run_algo(cloud: &PointCloud<f64>, algo: Algo, k: usize, params: &AlgoArgs, seed: u64, verbose: bool) -> Result<Outcome> {
    let n = cloud.len();
    match algo {
        Algo::Lbf | Algo::LbfMs => {
            let mut config = LbfConfig::new(k, params.d, seed);
            config.scale = scale_params(params, algo == Algo::LbfMs);
            config.candidates = params.candidates;
            config.passes = params.passes;
            config.energy = match params.energy {
                EnergyArg::L1 => Energy::L1Sum,
                EnergyArg::Median => Energy::Median,
            };
            if verbose {
                if config.requested_candidates() > n {
                    eprintln!("warning: C = {} exceeds N = {n}; using C = {n}", config.requested_candidates());
                }
                echo(&format!(
                    "algo={algo:?} K={k} d={} C={} p={} {} energy={:?} seed={seed}",
                    params.d,
                    config.candidate_count(n),
                    config.pass_count(),
                    scale_echo(&config.scale),
                    config.energy
                ));
            }
            let res = lbf_cluster(cloud, &config)?;
            Ok(Outcome {
                labeling: res.labeling.clone(),
                score: format!("energy {:.6}", res.final_energy()),
                flats: Some(res.flats),
            })
        }
        Algo::Slbf | Algo::SlbfMs => {
            let mut config = SlbfConfig::new(k, params.d, seed);
            config.scale = scale_params(params, algo == Algo::SlbfMs);
            if let Some(l) = &params.lambdas {
                config.lambdas = l.clone();
            }
            config.kmeans_restarts = params.kmeans_restarts;
            if verbose {
                echo(&format!(
                    "algo={algo:?} K={k} d={} lambdas={} kmeans_restarts={} {} seed={seed}",
                    params.d,
                    fmt_list(&config.lambdas),
                    config.kmeans_restarts,
                    scale_echo(&config.scale)
                ));
            }
            let res = slbf_cluster(cloud, &config)?;
            if verbose {
                for t in &res.trials {
                    match &t.outcome {
                        Ok((_, e)) => eprintln!("lambda {:.6}: error {e:.6}", t.lambda),
                        Err(e) => eprintln!("lambda {:.6}: skipped ({e})", t.lambda),
                    }
                }
            }
            Ok(Outcome {
                labeling: res.labeling,
                flats: None,
                score: format!("error {:.6} (lambda {:.6})", res.error, res.lambda),
            })
        }
        Algo::Kflats => {
            let scale = scale_params(params, false);
            let init = match params.init {
                InitArg::Adaptive => InitStrategy::FarthestAdaptive(scale.clone()),
                InitArg::Fixed => InitStrategy::FarthestFixed(params.init_size),
                InitArg::Random => InitStrategy::Random,
            };
            let mut config = KFlatsConfig::new(k, params.d, seed).with_init(init);
            config.max_iter = params.max_iter;
            config.restarts = params.restarts;
            if verbose {
                let init = match params.init {
                    InitArg::Adaptive => format!("adaptive {}", scale_echo(&scale)),
                    InitArg::Fixed => format!("fixed m={}", params.init_size),
                    InitArg::Random => "random".to_string(),
                };
                echo(&format!(
                    "algo=Kflats K={k} d={} init={init} max_iter={} restarts={} seed={seed}",
                    params.d, config.max_iter, config.restarts
                ));
            }
            let res = kflats(cloud, &config)?;
            Ok(Outcome {
                labeling: res.labeling.clone(),
                score: format!(
                    "objective {:.6} after {} iterations{}",
                    res.objective(),
                    res.iterations,
                    if res.converged { "" } else { " (not converged)" }
                ),
                flats: Some(res.flats),
            })
        }
    }
}

pub fn cluster(args: ClusterArgs) -> Result<()> {
    let seed = resolve_seed(args.seed);
    let cloud = read_cloud(&args.input)?;
    let start = Instant::now();
    let outcome = run_algo(&cloud, args.algo, args.k, &args.params, seed, true)?;
    let elapsed = start.elapsed().as_secs_f64();

    let mut out = create(&args.output)?;
    write_labels(&mut out, outcome.labeling.labels().iter().map(|&l| l as i64))?;
    flush(out, &args.output)?;

    let sizes = outcome.labeling.cluster_sizes();
    for (j, size) in sizes.iter().enumerate() {
        match &outcome.flats {
            Some(flats) => {
                let members: Vec<usize> = (0..cloud.len()).filter(|&i| outcome.labeling.labels()[i] == j).collect();
                let rms = if members.is_empty() {
                    0.0
                } else {
                    (members.iter().map(|&i| flats[j].distance_sq(cloud.point(i))).sum::<f64>() / members.len() as f64).sqrt()
                };
                println!("flat {j}: {size} points, dim {}, rms distance {rms:.6}", flats[j].dim());
            }
            None => println!("cluster {j}: {size} points"),
        }
    }
    println!("{}", outcome.score);
    println!("time: {elapsed:.3} s");
    Ok(())
}

pub fn evaluate(args: EvaluateArgs) -> Result<()> {
    let pred = read_label_file(&args.pred)?;
    let truth = read_label_file(&args.truth)?;
    if pred.iter().any(|&l| l < 0) {
        return Err(CliError::Data(format!("{}: predicted labels must be nonnegative", args.pred.display())));
    }
    let k = pred.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
    let labeling = Labeling::new(pred.into_iter().map(|l| l as usize).collect(), k.max(1))?;
    let rate = misclassification_rate(&labeling, &truth)?;
    println!("misclassification: {rate:.2}%");
    Ok(())
}

fn hlm(algo: Algo) -> Result<HlmAlgorithm> {
    match algo {
        Algo::Lbf => Ok(HlmAlgorithm::Lbf),
        Algo::Slbf => Ok(HlmAlgorithm::Slbf),
        Algo::Kflats => Ok(HlmAlgorithm::KFlats),
        Algo::LbfMs | Algo::SlbfMs => Err(CliError::Usage("estimate-k supports lbf, slbf and kflats".into())),
    }
}

pub fn estimate_k(args: EstimateKArgs) -> Result<()> {
    let seed = resolve_seed(args.seed);
    let algorithm = hlm(args.algo)?;
    let cloud = read_cloud(&args.input)?;
    echo(&format!(
        "algo={:?} d={} kmax={} {} seed={seed}",
        args.algo,
        args.d,
        args.kmax,
        scale_echo(&ScaleParams::new(args.d))
    ));
    let wk = wk_curve(&cloud, args.d, args.kmax, algorithm, seed)?;
    let k_hat = estimate_k_for(&cloud, &wk)?;
    let diam = cloud.diameter();
    let sod = sod_values(&wk, (f64::EPSILON * diam * diam).max(f64::MIN_POSITIVE))?;
    println!("K_hat: {k_hat}");
    println!("K,W_K,SOD");
    for (i, w) in wk.iter().enumerate() {
        let k = i + 1;
        let s = if (2..args.kmax).contains(&k) { format!("{:.6}", sod[k - 2]) } else { String::new() };
        println!("{k},{w:.6e},{s}");
    }
    Ok(())
}

pub fn noise(args: NoiseArgs) -> Result<()> {
    let cloud = read_cloud(&args.input)?;
    let mut params = ScaleParams::new(args.d).multiscale(args.multiscale);
    if let Some(s) = args.start_size {
        params.start_size = s;
    }
    if let Some(t) = args.step_size {
        params.step_size = t;
    }
    echo(&format!("d={} {}", args.d, scale_echo(&params)));
    let eps = estimate_noise_epsilon(&cloud, &params)?;
    println!("epsilon: {eps:.6}");
    Ok(())
}

fn theorem_flats(args: &TheoremArgs) -> Result<Vec<Flat<f64>>> {
    let (ambient, d) = (args.ambient, args.d);
    if d == 0 || d >= ambient {
        return Err(CliError::Usage(format!("need 0 < d < D, got d = {d}, D = {ambient}")));
    }
    if let Some(deg) = args.angle {
        if d != 1 || args.k != 2 {
            return Err(CliError::Usage("--angle needs d = 1 and K = 2".into()));
        }
        let t = deg.to_radians();
        let mut dir = vec![0.0; ambient];
        dir[0] = t.cos();
        dir[1] = t.sin();
        return Ok(vec![
            Flat::coordinate(&[0], vec![0.0; ambient])?,
            Flat::new(vec![dir], vec![0.0; ambient], true)?,
        ]);
    }
    (0..args.k)
        .map(|j| {
            let axes: Vec<usize> = (0..d).map(|i| (j * d + i) % ambient).collect();
            Flat::coordinate(&axes, vec![0.0; ambient]).map_err(CliError::from)
        })
        .collect()
}

pub fn verify_theorem(args: TheoremArgs) -> Result<()> {
    let seed = resolve_seed(args.seed);
    let mixture = TubeMixture::new(theorem_flats(&args)?, args.width)?;
    let x_star = args.x_star.clone().unwrap_or_else(|| {
        let mut x = vec![0.0; args.ambient];
        x[0] = 2.0;
        x
    });
    echo(&format!(
        "D={} d={} K={} w={} x*={} mc_samples={} grid_density={} seed={seed}",
        args.ambient,
        args.d,
        args.k,
        args.width,
        fmt_list(&x_star),
        args.mc_samples,
        args.grid_density
    ));
    let start = Instant::now();
    let report = run_theorem(&mixture, &x_star, args.grid_density, args.mc_samples, seed)?;
    print!("{report}");
    println!("all claims pass: {}", if report.all_pass() { "yes" } else { "no" });
    println!("time: {:.3} s", start.elapsed().as_secs_f64());
    if let Some(path) = &args.profile {
        let mut out = create(path)?;
        out.write_all(report.profile_csv().as_bytes()).map_err(|e| io_error(path, e))?;
        flush(out, path)?;
    }
    Ok(())
}

fn default_algo_args(d: usize) -> AlgoArgs {
    AlgoArgs {
        d,
        start_size: None,
        step_size: None,
        max_neighbors: None,
        candidates: None,
        passes: None,
        energy: EnergyArg::L1,
        lambdas: None,
        kmeans_restarts: 10,
        init: InitArg::Adaptive,
        init_size: 20,
        max_iter: 100,
        restarts: 1,
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

pub fn bench(args: BenchArgs) -> Result<()> {
    if args.trials == 0 {
        return Err(CliError::Usage("--trials must be positive".into()));
    }
    let base = resolve_seed(args.seed);
    echo(&format!(
        "cases={} algos={:?} trials={} per_flat={} sigma={} outliers={} affine={} seed={base}",
        args.cases.join(","),
        args.algos,
        args.trials,
        args.data.per_flat,
        args.data.sigma,
        args.data.outliers,
        args.data.affine
    ));
    let mut rows = vec!["case,algo,trials,mean_error_pct,std_error_pct,mean_time_s".to_string()];
    for case in &args.cases {
        let specs = (0..args.trials as u64)
            .map(|t| synth_spec(&args.data, case, base.wrapping_add(t)))
            .collect::<Result<Vec<_>>>()?;
        let data = specs.iter().map(generate_hybrid::<f64>).collect::<flatcluster::Result<Vec<_>>>()?;
        let d = specs[0].dims[0];
        let k = specs[0].dims.len();
        let params = default_algo_args(d);
        for &algo in &args.algos {
            let mut errors = Vec::with_capacity(args.trials);
            let mut times = Vec::with_capacity(args.trials);
            for (t, set) in data.iter().enumerate() {
                let start = Instant::now();
                let outcome = run_algo(&set.cloud, algo, k, &params, base.wrapping_add(t as u64), t == 0)?;
                times.push(start.elapsed().as_secs_f64());
                errors.push(misclassification_rate(&outcome.labeling, set.cloud.truth().expect("synthetic truth"))?);
            }
            let (mean, std) = mean_std(&errors);
            let (time, _) = mean_std(&times);
            rows.push(format!("{case},{},{},{mean:.2},{std:.2},{time:.3}", algo_name(algo), args.trials));
        }
    }
    let text = rows.join("\n") + "\n";
    match &args.out {
        Some(path) => {
            let mut out = create(path)?;
            out.write_all(text.as_bytes()).map_err(|e| io_error(path, e))?;
            flush(out, path)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn algo_name(algo: Algo) -> &'static str {
    match algo {
        Algo::Lbf => "lbf",
        Algo::LbfMs => "lbf-ms",
        Algo::Slbf => "slbf",
        Algo::SlbfMs => "slbf-ms",
        Algo::Kflats => "kflats",
    }
}
