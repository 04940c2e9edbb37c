//! `tmlc`: batch front end for the tm-landcover toolkit.
//!
//! Exit codes: 0 on success, 1 for usage errors, 2 for data errors.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

use tm_landcover::accuracy::{accuracy_report, compare_methods, confusion_matrix_with, AssessOptions};
use tm_landcover::band_selection::{
    rank_combinations, rank_from_table, read_oif_table, write_membership_csv, write_ranking_csv, OifRanking,
    SortOrder,
};
use tm_landcover::classifiers::{
    classification_map_stats, classify, train_signatures_for, write_signatures_csv, BoxRule,
    ClassifierConfig, OverlapRule, TrainingSet,
};
use tm_landcover::indices::{
    compute_index_raster, vegetation_mask, water_mask, IndexKind, WaterRule, INDEX_NODATA,
};
use tm_landcover::landcover::{all_recommendations, band_prevalence, recommend, write_recommendations_csv};
use tm_landcover::raster::{
    read_labels, read_raster, write_labels, write_raster, write_raster_with_comments,
};
use tm_landcover::scene::{generate_scene, SceneClass, SceneSpec};
use tm_landcover::LandcoverObject;

#[derive(Parser, Debug)]
#[command(
    name = "tmlc",
    version,
    about = "Multispectral land-cover toolkit",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a seeded synthetic scene and its truth map
    Synth(SynthArgs),
    /// Compute a spectral index raster or a water/vegetation mask
    Index(IndexArgs),
    /// Rank band combinations by Optimum Index Factor
    Oif(OifArgs),
    /// Classify an image from training samples
    Classify(ClassifyArgs),
    /// Score a classification map against a truth map
    Assess(AssessArgs),
    /// Compare several classifier configurations on one scene
    Compare(CompareArgs),
    /// Look up recommended bands and indices for a land-cover object
    Recommend(RecommendArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Class table: label,fraction,mean1..meanN,sigma1..sigmaN
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    width: usize,
    #[arg(long)]
    height: usize,
    #[arg(long)]
    seed: u64,
    /// Output image header; truth goes to <stem>_truth.hdr
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MaskKind {
    WaterRatio,
    WaterIndex,
    Vegetation,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("what").required(true).args(["kind", "mask"])))]
struct IndexArgs {
    /// Index name, e.g. ndvi, savi, savi:0.25, water-index
    #[arg(long)]
    kind: Option<IndexKind>,
    /// SAVI soil adjustment factor
    #[arg(long, requires = "kind")]
    savi_l: Option<f64>,
    /// Write a label mask instead of index values
    #[arg(long, value_enum)]
    mask: Option<MaskKind>,
    /// Decision threshold for the water-index mask
    #[arg(long, default_value_t = 1.0)]
    water_threshold: f64,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("source").required(true).args(["input", "from_table"])))]
struct OifArgs {
    /// Image to compute statistics from
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Precomputed combo,oif table
    #[arg(long)]
    from_table: Option<PathBuf>,
    /// Bands per combination
    #[arg(long, default_value_t = 3, conflicts_with = "from_table")]
    r: usize,
    #[arg(long, default_value = "desc")]
    order: SortOrder,
    /// Records counted for band membership and printed
    #[arg(long, default_value_t = 10)]
    top: usize,
    /// Full ranking CSV
    #[arg(long)]
    out: Option<PathBuf>,
    /// Band membership CSV
    #[arg(long)]
    membership_out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Parallelepiped,
    Mindist,
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Training samples: label,b1..bN
    #[arg(long)]
    train: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// minmax or meansigma:<k>
    #[arg(long)]
    r#box: Option<BoxRule>,
    /// nearest, first or none
    #[arg(long)]
    overlap: Option<OverlapRule>,
    #[arg(long)]
    max_distance: Option<f64>,
    /// Comma-separated 1-based bands, e.g. 3,4,5
    #[arg(long, value_delimiter = ',')]
    bands: Option<Vec<usize>>,
    /// Write trained signatures as CSV
    #[arg(long)]
    signatures: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AssessArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Accuracy report CSV
    #[arg(long)]
    out: PathBuf,
    /// Confusion matrix CSV
    #[arg(long)]
    matrix_out: Option<PathBuf>,
    #[arg(long)]
    ignore_zero_ref: bool,
    #[arg(long)]
    ignore_unclassified: bool,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Comma-separated configs, e.g. mindist,parallelepiped/meansigma:2/first
    #[arg(long, value_delimiter = ',', required = true)]
    methods: Vec<ClassifierConfig>,
    /// Comma-separated 1-based bands, e.g. 3,4,5
    #[arg(long, value_delimiter = ',')]
    bands: Option<Vec<usize>>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    ignore_zero_ref: bool,
    #[arg(long)]
    ignore_unclassified: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("which").required(true).args(["object", "all", "prevalence"]).multiple(true)))]
struct RecommendArgs {
    /// e.g. water, vegetation, snow-ice
    #[arg(long, conflicts_with = "all")]
    object: Option<LandcoverObject>,
    #[arg(long)]
    all: bool,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Print how often each band appears across all recommended combinations
    #[arg(long)]
    prevalence: bool,
}

enum CliError {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Data(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn open(path: &Path) -> anyhow::Result<File> {
    File::open(path).with_context(|| format!("cannot open {}", path.display()))
}

fn truth_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}_truth.hdr"))
}

fn read_scene_spec(path: &Path) -> anyhow::Result<Vec<SceneClass>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let label = col("label").context("spec is missing the `label` column")?;
    let fraction = col("fraction").context("spec is missing the `fraction` column")?;
    let means: Vec<usize> = (1..).map_while(|i| col(&format!("mean{i}"))).collect();
    let sigmas: Vec<usize> = (1..).map_while(|i| col(&format!("sigma{i}"))).collect();
    anyhow::ensure!(!means.is_empty(), "spec has no mean1.. columns");
    anyhow::ensure!(
        means.len() == sigmas.len(),
        "spec has {} mean columns but {} sigma columns",
        means.len(),
        sigmas.len()
    );
    let mut classes = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let num = |i: usize| -> anyhow::Result<f64> {
            let v = &row[i];
            v.parse()
                .with_context(|| format!("spec line {line}: `{v}` is not a number"))
        };
        classes.push(SceneClass {
            label: row[label]
                .parse()
                .with_context(|| format!("spec line {line}: bad label `{}`", &row[label]))?,
            fraction: num(fraction)?,
            mean: means.iter().map(|&i| num(i)).collect::<anyhow::Result<_>>()?,
            sigma: sigmas.iter().map(|&i| num(i)).collect::<anyhow::Result<_>>()?,
        });
    }
    Ok(classes)
}

fn run_synth(a: SynthArgs) -> Result<()> {
    let spec = SceneSpec {
        classes: read_scene_spec(&a.spec)?,
        width: a.width,
        height: a.height,
        seed: a.seed,
    };
    let (image, truth) = generate_scene(&spec).map_err(anyhow::Error::from)?;
    write_raster(&image, &a.out).map_err(anyhow::Error::from)?;
    let tp = truth_path(&a.out);
    write_labels(&truth, &tp).map_err(anyhow::Error::from)?;
    println!("image,{}", a.out.display());
    println!("truth,{}", tp.display());
    Ok(())
}

fn run_index(a: IndexArgs) -> Result<()> {
    let image = read_raster(&a.input).map_err(anyhow::Error::from)?;
    if let Some(mask) = a.mask {
        let labels = match mask {
            MaskKind::WaterRatio => water_mask(&image, WaterRule::Ratio25),
            MaskKind::WaterIndex => water_mask(
                &image,
                WaterRule::Index {
                    threshold: a.water_threshold,
                },
            ),
            MaskKind::Vegetation => vegetation_mask(&image),
        }
        .map_err(anyhow::Error::from)?;
        write_labels(&labels, &a.out).map_err(anyhow::Error::from)?;
        for (label, count) in classification_map_stats(&labels) {
            println!("{label},{count}");
        }
        return Ok(());
    }
    let mut kind = a.kind.expect("clap group requires --kind or --mask");
    if let Some(l) = a.savi_l {
        if !matches!(kind, IndexKind::Savi(_)) {
            return Err(usage(format!("--savi-l only applies to --kind savi, not {kind}")));
        }
        kind = IndexKind::savi(l).map_err(|e| usage(format!("--savi-l: {e}")))?;
    }
    let raster = compute_index_raster(&image, kind).map_err(anyhow::Error::from)?;
    write_raster_with_comments(&raster.to_image(INDEX_NODATA), &a.out, &raster.header_comments())
        .map_err(anyhow::Error::from)?;
    println!("kind,{kind}");
    println!("valid,{}", raster.valid_count());
    Ok(())
}

fn print_ranking(ranking: &OifRanking, top: usize) -> anyhow::Result<()> {
    let membership = ranking.band_membership(top);
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for (i, rec) in ranking.records.iter().take(top).enumerate() {
        let oif = rec.oif.map(|v| v.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{},{}", i + 1, rec.combo, oif, rec.is_degenerate())?;
    }
    for (band, count) in &membership {
        writeln!(out, "band{band},{count}")?;
    }
    Ok(())
}

fn run_oif(a: OifArgs) -> Result<()> {
    if a.top == 0 {
        return Err(usage("--top must be at least 1"));
    }
    let ranking = if let Some(table) = &a.from_table {
        let records = read_oif_table(open(table)?).map_err(anyhow::Error::from)?;
        rank_from_table(records, a.order, a.top)
            .map_err(anyhow::Error::from)?
            .0
    } else {
        let input = a
            .input
            .as_ref()
            .expect("clap group requires --in or --from-table");
        let image = read_raster(input).map_err(anyhow::Error::from)?;
        rank_combinations(&image, a.r, a.order).map_err(anyhow::Error::from)?
    };
    if let Some(path) = &a.out {
        let mut w = create(path)?;
        write_ranking_csv(&ranking, &mut w).map_err(anyhow::Error::from)?;
        w.flush().context("flushing ranking")?;
    }
    if let Some(path) = &a.membership_out {
        let mut w = create(path)?;
        write_membership_csv(&ranking.band_membership(a.top), &mut w).map_err(anyhow::Error::from)?;
        w.flush().context("flushing membership")?;
    }
    print_ranking(&ranking, a.top)?;
    Ok(())
}

fn load_training(path: &Path, bands: Option<Vec<usize>>) -> anyhow::Result<TrainingSet> {
    let training = TrainingSet::from_csv(open(path)?)?;
    Ok(match bands {
        Some(b) => training.with_selected_bands(b)?,
        None => training,
    })
}

fn run_classify(a: ClassifyArgs) -> Result<()> {
    let mut config = match a.method {
        MethodArg::Mindist => {
            if a.r#box.is_some() || a.overlap.is_some() {
                return Err(usage("--box and --overlap only apply to --method parallelepiped"));
            }
            ClassifierConfig::minimum_distance().with_max_distance(a.max_distance)
        }
        MethodArg::Parallelepiped => {
            if a.max_distance.is_some() {
                return Err(usage("--max-distance only applies to --method mindist"));
            }
            ClassifierConfig::parallelepiped()
        }
    };
    if let Some(rule) = a.r#box {
        config = config.with_box_rule(rule);
    }
    if let Some(rule) = a.overlap {
        config = config.with_overlap_rule(rule);
    }
    config.validate().map_err(|e| usage(e.to_string()))?;
    let training = load_training(&a.train, a.bands)?;
    let image = read_raster(&a.input).map_err(anyhow::Error::from)?;
    let sigs = train_signatures_for(&training, &config).map_err(anyhow::Error::from)?;
    if let Some(path) = &a.signatures {
        let mut w = create(path)?;
        write_signatures_csv(&sigs, &mut w).map_err(anyhow::Error::from)?;
        w.flush().context("flushing signatures")?;
    }
    let map = classify(&image, &sigs, &config).map_err(anyhow::Error::from)?;
    write_labels(&map, &a.out).map_err(anyhow::Error::from)?;
    println!("method,{config}");
    for (label, count) in classification_map_stats(&map) {
        println!("{label},{count}");
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn run_assess(a: AssessArgs) -> Result<()> {
    let pred = read_labels(&a.pred).map_err(anyhow::Error::from)?;
    let truth = read_labels(&a.truth).map_err(anyhow::Error::from)?;
    let options = AssessOptions {
        ignore_zero_reference: a.ignore_zero_ref,
        ignore_unclassified: a.ignore_unclassified,
    };
    let cm = confusion_matrix_with(&truth, &pred, options).map_err(anyhow::Error::from)?;
    let report = accuracy_report(&cm).map_err(anyhow::Error::from)?;
    let mut w = create(&a.out)?;
    report.write_csv(&mut w).map_err(anyhow::Error::from)?;
    w.flush().context("flushing report")?;
    if let Some(path) = &a.matrix_out {
        let mut w = create(path)?;
        cm.write_csv(&mut w).map_err(anyhow::Error::from)?;
        w.flush().context("flushing matrix")?;
    }
    println!("overall_accuracy,{}", report.overall_accuracy);
    println!("kappa,{}", fmt_opt(report.kappa));
    Ok(())
}

fn run_compare(a: CompareArgs) -> Result<()> {
    let training = load_training(&a.train, a.bands)?;
    let image = read_raster(&a.input).map_err(anyhow::Error::from)?;
    let truth = read_labels(&a.truth).map_err(anyhow::Error::from)?;
    let options = AssessOptions {
        ignore_zero_reference: a.ignore_zero_ref,
        ignore_unclassified: a.ignore_unclassified,
    };
    let rows =
        compare_methods(&image, &training, &truth, &a.methods, options).map_err(anyhow::Error::from)?;
    let line = |r: &tm_landcover::accuracy::MethodAccuracy| {
        format!("{},{},{}", r.config, r.overall_accuracy, fmt_opt(r.kappa))
    };
    if let Some(path) = &a.out {
        let mut w = create(path)?;
        writeln!(w, "method,overall_accuracy,kappa").context("writing comparison")?;
        for r in &rows {
            writeln!(w, "{}", line(r)).context("writing comparison")?;
        }
        w.flush().context("flushing comparison")?;
    }
    for r in &rows {
        println!("{}", line(r));
    }
    Ok(())
}

fn run_recommend(a: RecommendArgs) -> Result<()> {
    let recs = match (a.object, a.all) {
        (Some(o), _) => vec![recommend(o)],
        (None, true) => all_recommendations(),
        (None, false) => vec![],
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    if !recs.is_empty() {
        match a.format {
            Format::Text => {
                let blocks: Vec<String> = recs.iter().map(|r| r.to_text()).collect();
                write!(out, "{}", blocks.join("\n")).context("writing recommendations")?;
            }
            Format::Csv => write_recommendations_csv(&recs, &mut out).context("writing recommendations")?,
        }
    }
    if a.prevalence {
        let p = band_prevalence();
        for (band, count) in &p.counts {
            writeln!(out, "band{band},{count},{:.4}", p.fraction(*band)).context("writing prevalence")?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => run_synth(a),
        Command::Index(a) => run_index(a),
        Command::Oif(a) => run_oif(a),
        Command::Classify(a) => run_classify(a),
        Command::Assess(a) => run_assess(a),
        Command::Compare(a) => run_compare(a),
        Command::Recommend(a) => run_recommend(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("\nFor more information, try '--help'.");
            ExitCode::from(1)
        }
        Err(CliError::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
