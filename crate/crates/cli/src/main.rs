//! Command-line front end for the tagging and mining pipeline.
//!
//! Exit codes: 0 on success, 1 for usage errors, 2 for data errors (missing
//! or malformed files, inconsistent parameters).

use std::fs;
use std::io::{BufReader, BufWriter, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use tagmine::category::{builtin_categories, builtin_category, Category};
use tagmine::eval::{category_names, evaluate, load_ground_truth, save_ground_truth, Metrics};
use tagmine::ingest::{load_dataset, save_dataset, Dataset};
use tagmine::miner::{mine, read_instances, write_instances, Instance};
use tagmine::model::{
    LateralActivity, LateralState, LeadVehicle, LongitudinalActivity, LongitudinalState,
    OnHighway, Params, Tag, TagStream, TaggedDataset,
};
use tagmine::synth::{
    add_noise, gen_cutin_scene, gen_overtake_scene, gen_random_dataset, CutInConfig, NoiseConfig,
    OvertakeConfig, Scene,
};
use tagmine::tagger::{self, read_tags, write_tags, RoadClassProvider};

#[derive(Parser)]
#[command(
    name = "tagmine",
    version,
    about = "Tag driving time series and mine scenario instances from them"
)]
struct Cli {
    /// Worker threads for tagging and mining (default: one per core).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// Parameter file with `key = value` lines overriding the defaults.
    #[arg(long, global = true, value_name = "FILE")]
    params: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene as ego/objects CSVs plus a truth CSV.
    Gen(GenArgs),
    /// Tag a dataset and write the tag streams as JSON lines.
    Tag(TagArgs),
    /// Mine scenario instances from a tag file.
    Mine(MineArgs),
    /// Score mined instances against ground truth.
    Eval(EvalArgs),
    /// Print a tag file as per-dimension ASCII strips.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct GenArgs {
    /// What to generate.
    #[arg(long, value_enum)]
    scenario: Scenario,
    /// Directory for ego.csv, objects.csv and truth.csv.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Seed for the random scenario and for noise.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Standard deviation of additive speed noise, m/s.
    #[arg(long, default_value_t = 0.0, value_name = "SIGMA")]
    noise_speed: f64,
    /// Standard deviation of additive line-distance noise, m.
    #[arg(long, default_value_t = 0.0, value_name = "SIGMA")]
    noise_line: f64,
}

#[derive(ValueEnum, Clone, Copy)]
enum Scenario {
    /// One vehicle cutting in ahead of the ego.
    Cutin,
    /// One vehicle overtaking, then the ego changing lanes behind it.
    Overtake,
    /// A random taggable timeline without planted truth.
    Random,
}

#[derive(Args)]
struct TagArgs {
    /// Ego track CSV.
    #[arg(long, value_name = "FILE")]
    ego: PathBuf,
    /// Object tracks CSV; omit for a recording without tracked objects.
    #[arg(long, value_name = "FILE")]
    objects: Option<PathBuf>,
    /// Road map GeoJSON, for datasets without a recorded road class.
    #[arg(long, value_name = "FILE")]
    road_map: Option<PathBuf>,
    /// Matching radius for --road-map, meters.
    #[arg(long, default_value_t = RoadClassProvider::DEFAULT_MATCH_RADIUS_M, value_name = "M")]
    match_radius: f64,
    /// Output tag file (JSON lines).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct MineArgs {
    /// Tag file produced by `tag`.
    #[arg(long, value_name = "FILE")]
    tags: PathBuf,
    /// Category definition JSON file; repeatable.
    #[arg(long = "category", value_name = "FILE")]
    categories: Vec<PathBuf>,
    /// Bundled category by name; repeatable. With no --category and no
    /// --builtin, every bundled category is mined.
    #[arg(long = "builtin", value_name = "NAME")]
    builtins: Vec<String>,
    /// Output instances file (JSON lines).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Instances file from `mine`.
    #[arg(long, value_name = "FILE")]
    instances: PathBuf,
    /// Ground-truth CSV (category,subject_id,start_k,end_k).
    #[arg(long, value_name = "FILE")]
    truth: PathBuf,
    /// Print the report as JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct InspectArgs {
    /// Tag file to render.
    #[arg(long, value_name = "FILE")]
    tags: PathBuf,
    /// First sample of the window.
    #[arg(long, default_value_t = 0, value_name = "K")]
    from: usize,
    /// Last sample of the window, inclusive (default: last sample).
    #[arg(long, value_name = "K")]
    to: Option<usize>,
    /// Character width of each strip.
    #[arg(long, default_value_t = 100, value_name = "COLS")]
    width: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind::{DisplayHelp, DisplayVersion};
            let usage_ok = matches!(e.kind(), DisplayHelp | DisplayVersion);
            let _ = e.print();
            return if usage_ok { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(1);
        }
        // Ignore the error: the pool can already be set in tests that call
        // the binary twice in one process; it is not, here.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let params = load_params(cli.params.as_deref())?;
    match cli.command {
        Command::Gen(args) => run_gen(args, &params),
        Command::Tag(args) => run_tag(args, &params),
        Command::Mine(args) => run_mine(args, &params),
        Command::Eval(args) => run_eval(args, &params),
        Command::Inspect(args) => run_inspect(args),
    }
}

fn load_params(path: Option<&Path>) -> anyhow::Result<Params> {
    let params = match path {
        None => Params::default(),
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("parameter file {}", path.display()))?;
            Params::parse_config(&text)
                .with_context(|| format!("parameter file {}", path.display()))?
        }
    };
    params.validate()?;
    Ok(params)
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

fn run_gen(args: GenArgs, params: &Params) -> anyhow::Result<()> {
    let mut scene = match args.scenario {
        Scenario::Cutin => gen_cutin_scene(&CutInConfig::default(), params)?,
        Scenario::Overtake => gen_overtake_scene(&OvertakeConfig::default(), params)?,
        Scenario::Random => Scene {
            dataset: gen_random_dataset(args.seed, params),
            truth: Vec::new(),
        },
    };
    if args.noise_speed > 0.0 || args.noise_line > 0.0 {
        add_noise(
            &mut scene.dataset,
            &NoiseConfig {
                sigma_speed: args.noise_speed,
                sigma_line: args.noise_line,
                seed: args.seed,
            },
        )?;
    }
    fs::create_dir_all(&args.out)
        .with_context(|| format!("output directory {}", args.out.display()))?;
    let ego = args.out.join("ego.csv");
    let objects = args.out.join("objects.csv");
    let truth = args.out.join("truth.csv");
    save_dataset(&scene.dataset, &ego, &objects)?;
    save_ground_truth(&scene.truth, &truth)?;
    println!(
        "wrote {} samples, {} objects, {} truth entries to {}",
        scene.dataset.timebase.n_samples,
        scene.dataset.objects.len(),
        scene.truth.len(),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// tag
// ---------------------------------------------------------------------------

/// Same streams and ordering as [`tagger::tag_dataset`], but with the
/// per-object work fanned out over the rayon pool.
fn tag_parallel(
    dataset: &Dataset,
    params: &Params,
    provider: Option<&RoadClassProvider>,
) -> tagmine::Result<TaggedDataset> {
    params.validate()?;
    let mut streams = vec![
        tagger::tag_ego_longitudinal(&dataset.ego, params),
        tagger::tag_ego_lateral(&dataset.ego, params),
        tagger::tag_environment(&dataset.ego, &dataset.timebase, provider)?,
    ];
    let lead = tagger::tag_lead_vehicle(&dataset.objects, &dataset.ego, params);
    let per_object: Vec<Vec<TagStream>> = dataset
        .objects
        .par_iter()
        .map(|track| tagger::tag_object(track, &dataset.ego, params))
        .collect();
    for (object_streams, lead_stream) in per_object.into_iter().zip(lead) {
        streams.extend(object_streams);
        streams.push(lead_stream);
    }
    Ok(TaggedDataset::new(
        dataset.timebase,
        streams,
        tagger::ego_dimensions(),
        tagger::object_dimensions(),
        tagger::environment_dimensions(),
        dataset.objects.iter().map(|t| t.id).collect(),
    ))
}

fn run_tag(args: TagArgs, params: &Params) -> anyhow::Result<()> {
    let dataset = load_dataset(&args.ego, args.objects.as_deref(), params)?;
    let provider = match &args.road_map {
        None => None,
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("road map {}", path.display()))?;
            Some(
                RoadClassProvider::from_geojson_str(&text, args.match_radius)
                    .with_context(|| format!("road map {}", path.display()))?,
            )
        }
    };
    if provider.is_some() && dataset.ego.road_class.is_some() {
        log::warn!("dataset has a recorded road class; the road map only fills unset samples");
    }
    let tagged = tag_parallel(&dataset, params, provider.as_ref())?;
    let out = fs::File::create(&args.out)
        .with_context(|| format!("output file {}", args.out.display()))?;
    let mut out = BufWriter::new(out);
    write_tags(&tagged, &mut out)?;
    out.flush()
        .with_context(|| format!("output file {}", args.out.display()))?;
    let intervals: usize = tagged.streams.iter().map(|s| s.intervals.len()).sum();
    println!(
        "tagged {} samples into {} streams ({} intervals)",
        tagged.timebase.n_samples,
        tagged.streams.len(),
        intervals
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// mine
// ---------------------------------------------------------------------------

fn load_categories(args: &MineArgs) -> anyhow::Result<Vec<Category>> {
    let mut categories = Vec::new();
    for path in &args.categories {
        categories.push(
            Category::from_json_file(path)
                .with_context(|| format!("category file {}", path.display()))?,
        );
    }
    for name in &args.builtins {
        categories.push(builtin_category(name).with_context(|| {
            let known: Vec<String> =
                builtin_categories().into_iter().map(|c| c.name).collect();
            format!("no bundled category `{name}` (available: {})", known.join(", "))
        })?);
    }
    if categories.is_empty() {
        categories = builtin_categories();
    }
    Ok(categories)
}

fn run_mine(args: MineArgs, params: &Params) -> anyhow::Result<()> {
    let categories = load_categories(&args)?;
    let file = fs::File::open(&args.tags)
        .with_context(|| format!("tag file {}", args.tags.display()))?;
    let tagged = read_tags(BufReader::new(file))
        .with_context(|| format!("tag file {}", args.tags.display()))?;

    let mined: tagmine::Result<Vec<Vec<Instance>>> = categories
        .par_iter()
        .map(|category| mine(&tagged, category, params))
        .collect();
    let instances: Vec<Instance> = mined?.into_iter().flatten().collect();

    let out = fs::File::create(&args.out)
        .with_context(|| format!("output file {}", args.out.display()))?;
    let mut out = BufWriter::new(out);
    write_instances(&instances, &tagged.timebase, &mut out)?;
    out.flush()
        .with_context(|| format!("output file {}", args.out.display()))?;
    for category in &categories {
        let count = instances.iter().filter(|i| i.category == category.name).count();
        println!("{}: {} instances", category.name, count);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

fn run_eval(args: EvalArgs, params: &Params) -> anyhow::Result<()> {
    let file = fs::File::open(&args.instances)
        .with_context(|| format!("instances file {}", args.instances.display()))?;
    let instances = read_instances(BufReader::new(file))
        .with_context(|| format!("instances file {}", args.instances.display()))?;
    let truth = load_ground_truth(&args.truth)?;

    let mut per_category = Vec::new();
    for name in category_names(&instances, &truth) {
        let sub_instances: Vec<Instance> = instances
            .iter()
            .filter(|i| i.category == name)
            .cloned()
            .collect();
        let sub_truth: Vec<_> = truth
            .iter()
            .filter(|t| t.category == name)
            .cloned()
            .collect();
        let report = evaluate(&sub_instances, &sub_truth, params)?;
        per_category.push((name, sub_truth.len(), sub_instances.len(), report.metrics));
    }
    let overall = evaluate(&instances, &truth, params)?;

    if args.json {
        let entry = |truth_count: usize, mined: usize, m: &Metrics| {
            serde_json::json!({
                "truth": truth_count,
                "mined": mined,
                "true_positives": m.true_positives,
                "false_positives": m.false_positives,
                "false_negatives": m.false_negatives,
                "precision": m.precision,
                "recall": m.recall,
                "f1": m.f1,
            })
        };
        let categories: serde_json::Map<String, serde_json::Value> = per_category
            .iter()
            .map(|(name, t, n, m)| (name.clone(), entry(*t, *n, m)))
            .collect();
        let report = serde_json::json!({
            "categories": categories,
            "overall": entry(truth.len(), instances.len(), &overall.metrics),
        });
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        println!(
            "{:<24} {:>6} {:>6} {:>5} {:>5} {:>5} {:>10} {:>10} {:>10}",
            "category", "truth", "mined", "tp", "fp", "fn", "precision", "recall", "f1"
        );
        let row = |name: &str, truth_count: usize, mined: usize, m: &Metrics| {
            println!(
                "{:<24} {:>6} {:>6} {:>5} {:>5} {:>5} {:>10.4} {:>10.4} {:>10.4}",
                name,
                truth_count,
                mined,
                m.true_positives,
                m.false_positives,
                m.false_negatives,
                m.precision,
                m.recall,
                m.f1
            );
        };
        for (name, truth_count, mined, metrics) in &per_category {
            row(name, *truth_count, *mined, metrics);
        }
        row("overall", truth.len(), instances.len(), &overall.metrics);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// inspect
// ---------------------------------------------------------------------------

fn glyph(tag: Tag) -> char {
    match tag {
        Tag::LongitudinalActivity(LongitudinalActivity::Cruising) => '-',
        Tag::LongitudinalActivity(LongitudinalActivity::Accelerating) => 'A',
        Tag::LongitudinalActivity(LongitudinalActivity::Decelerating) => 'D',
        Tag::LateralActivity(LateralActivity::FollowingLane) => '-',
        Tag::LateralActivity(LateralActivity::ChangingLaneLeft) => 'L',
        Tag::LateralActivity(LateralActivity::ChangingLaneRight) => 'R',
        Tag::LongitudinalState(LongitudinalState::InFrontOfEgo) => 'F',
        Tag::LongitudinalState(LongitudinalState::BehindEgo) => 'B',
        Tag::LateralState(LateralState::LeftOfEgo) => 'L',
        Tag::LateralState(LateralState::SameLaneAsEgo) => '=',
        Tag::LateralState(LateralState::RightOfEgo) => 'R',
        Tag::LateralState(LateralState::Unclear) => '?',
        Tag::LeadVehicle(LeadVehicle::Leader) => '#',
        Tag::LeadVehicle(LeadVehicle::NoLeader) => '-',
        Tag::OnHighway(OnHighway::Highway) => 'H',
        Tag::OnHighway(OnHighway::NoHighway) => '.',
    }
}

fn run_inspect(args: InspectArgs) -> anyhow::Result<()> {
    let file = fs::File::open(&args.tags)
        .with_context(|| format!("tag file {}", args.tags.display()))?;
    let tagged = read_tags(BufReader::new(file))
        .with_context(|| format!("tag file {}", args.tags.display()))?;
    let n = tagged.timebase.n_samples;
    let last = args.to.unwrap_or(n.saturating_sub(1));
    anyhow::ensure!(args.width > 0, "--width must be at least 1");
    anyhow::ensure!(
        args.from <= last && last < n,
        "window [{}, {last}] does not fit a timeline of {n} samples",
        args.from
    );

    let span = last - args.from + 1;
    let width = args.width.min(span);
    println!(
        "timeline: {n} samples at {:.3} s, showing [{}, {last}] ({} samples/column)",
        tagged.timebase.sample_time_s,
        args.from,
        span.div_ceil(width)
    );
    let mut current_subject = None;
    for stream in &tagged.streams {
        if current_subject != Some(stream.subject) {
            current_subject = Some(stream.subject);
            println!("{}", stream.subject.to_token());
        }
        let mut strip = String::with_capacity(width);
        for col in 0..width {
            let lo = args.from + col * span / width;
            let hi = args.from + ((col + 1) * span / width).max(col * span / width + 1) - 1;
            let first = stream.value_at(lo);
            let mut uniform = true;
            for k in lo + 1..=hi.min(last) {
                if stream.value_at(k) != first {
                    uniform = false;
                    break;
                }
            }
            strip.push(if !uniform {
                '*'
            } else {
                first.map_or(' ', glyph)
            });
        }
        println!("  {:<22} |{strip}|", stream.dimension.as_str());
    }
    println!(
        "legend: space untagged, * mixed column; A/D/- accel/decel/cruise, \
         L/R/- lane change left/right/following, F/B front/behind, \
         L/=/R/? left/same lane/right/unclear, #/- leader/no leader, \
         H/. highway/not highway"
    );
    Ok(())
}
