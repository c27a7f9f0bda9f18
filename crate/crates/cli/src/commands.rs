use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use fieldnet::archive;
use fieldnet::dump::write_table;
use fieldnet::field_sim::CellTable;
use fieldnet::harness::{evaluate_dataset, sweep, SweepBase};
use fieldnet::mnist_io::resolve_name;
use fieldnet::{
    binarize, build_network, compute_threshold, export_report, pair_weight_table,
    select_references, zero_layer_table, Dataset, DatasetIndex, Mode, NameConvention, Network,
    PhysicalConfig, ReferenceSpec, ReportFormat, SweepParam,
};

const ARCHIVE_FILE: &str = "network.fnet";
const MANIFEST_FILE: &str = "manifest.json";
const REFERENCES_FILE: &str = "references.txt";

#[derive(Debug, Parser)]
#[command(name = "fieldnet", version, about = "Electrostatic-field weighted metric-recognition network")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a network from a reference set and write its archive.
    Build {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        physics: PhysicsArgs,
        #[command(flatten)]
        source: RefSource,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate an archived network on a dataset.
    Eval {
        #[arg(long)]
        archive: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "strict")]
        mode: Mode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write zero-layer and pair weight tables as CSV + PGM.
    DumpWeights {
        /// Take tables from this archive (use with --pair).
        #[arg(long, conflicts_with = "names")]
        archive: Option<PathBuf>,
        /// Reference indices `k,k1` inside the archive.
        #[arg(long, requires = "archive")]
        pair: Option<String>,
        /// Two image names `a,b`, e.g. `0_157,1_46`, simulated directly.
        #[arg(long)]
        names: Option<String>,
        #[arg(long, default_value = "index")]
        naming: NameConvention,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        physics: PhysicsArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grow an archived network by cascade addition of references.
    AddRefs {
        #[arg(long)]
        archive: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        source: RefSource,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rebuild and evaluate for each value of one parameter.
    Sweep {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        physics: PhysicsArgs,
        #[arg(long, default_value_t = 3)]
        per_class: usize,
        #[arg(long)]
        seed: u64,
        /// `d2` (values in cm), `q` (coulombs) or `per-class`.
        #[arg(long)]
        param: SweepParam,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, default_value = "strict")]
        mode: Mode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw a balanced reference set and write it as a spec file.
    Select {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        per_class: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct DataArgs {
    #[arg(long, default_value = "data/t10k-images-idx3-ubyte.gz")]
    images: PathBuf,
    #[arg(long, default_value = "data/t10k-labels-idx1-ubyte.gz")]
    labels: PathBuf,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        Dataset::load(&self.images, &self.labels).with_context(|| {
            format!(
                "loading {} / {}",
                self.images.display(),
                self.labels.display()
            )
        })
    }
}

#[derive(Debug, Args)]
struct PhysicsArgs {
    /// Charge per white pixel, coulombs.
    #[arg(long, default_value_t = 1e-9)]
    q: f64,
    /// Pixel and sensor pitch, centimeters.
    #[arg(long, default_value_t = 2.0)]
    d1_cm: f64,
    /// Image-plane to sensor-plane distance, centimeters.
    #[arg(long, default_value_t = 4.0)]
    d2_cm: f64,
    #[arg(long, default_value_t = 8.9875e9)]
    coulomb_k: f64,
    #[arg(long, default_value_t = 150)]
    bin_threshold: u8,
}

impl PhysicsArgs {
    fn config(&self) -> Result<PhysicalConfig> {
        Ok(PhysicalConfig::from_cm(
            self.coulomb_k,
            self.q,
            self.d1_cm,
            self.d2_cm,
            self.bin_threshold,
        )?)
    }
}

#[derive(Debug, Args)]
#[group(required = true, multiple = true)]
struct RefSource {
    /// References per digit, drawn with --seed.
    #[arg(long, requires = "seed", conflicts_with = "ref_spec")]
    per_class: Option<usize>,
    #[arg(long, requires = "per_class")]
    seed: Option<u64>,
    /// File of `digit,ordinal` lines.
    #[arg(long)]
    ref_spec: Option<PathBuf>,
}

impl RefSource {
    fn spec(&self, labels: &[u8]) -> Result<ReferenceSpec> {
        match (&self.ref_spec, self.per_class, self.seed) {
            (Some(path), _, _) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                Ok(ReferenceSpec::parse(&text)
                    .with_context(|| format!("parsing {}", path.display()))?)
            }
            (None, Some(per_class), Some(seed)) => Ok(select_references(labels, per_class, seed)?),
            _ => bail!("give either --ref-spec or --per-class with --seed"),
        }
    }
}

#[derive(Serialize)]
struct ManifestConfig {
    coulomb_k: f64,
    q: f64,
    d1_cm: f64,
    d2_cm: f64,
    bin_threshold: u8,
}

#[derive(Serialize)]
struct ManifestRef {
    k: usize,
    digit: u8,
    ordinal: Option<usize>,
    position: Option<usize>,
    active_pixels: usize,
}

#[derive(Serialize)]
struct Manifest {
    archive: String,
    config: ManifestConfig,
    seed: Option<u64>,
    reference_count: usize,
    neuron_count: usize,
    second_layer_threshold: usize,
    references: Vec<ManifestRef>,
    /// Only set by `add-refs`: the references appended to the parent archive.
    #[serde(skip_serializing_if = "Option::is_none")]
    added: Option<Vec<ManifestRef>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    parent: Option<String>,
}

fn manifest_refs(net: &Network, index: Option<&DatasetIndex>, from: usize) -> Vec<ManifestRef> {
    net.references()
        .iter()
        .enumerate()
        .skip(from)
        .map(|(k, r)| ManifestRef {
            k,
            digit: r.digit,
            ordinal: r.source.zip(index).and_then(|(pos, idx)| {
                idx.positions(r.digit).binary_search(&pos).ok()
            }),
            position: r.source,
            active_pixels: r.image.len(),
        })
        .collect()
}

fn manifest(net: &Network, index: Option<&DatasetIndex>, seed: Option<u64>) -> Manifest {
    let c = net.config();
    Manifest {
        archive: ARCHIVE_FILE.into(),
        config: ManifestConfig {
            coulomb_k: c.coulomb_k,
            q: c.charge,
            d1_cm: c.pixel_pitch * 100.0,
            d2_cm: c.plane_gap * 100.0,
            bin_threshold: c.bin_threshold,
        },
        seed,
        reference_count: net.len(),
        neuron_count: net.neuron_count(),
        second_layer_threshold: net.second_layer_threshold(),
        references: manifest_refs(net, index, 0),
        added: None,
        parent: None,
    }
}

fn write_outputs(out: &Path, net: &Network, manifest: &Manifest, spec: &ReferenceSpec) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    archive::save(net, out.join(ARCHIVE_FILE))?;
    let json = serde_json::to_string_pretty(manifest)? + "\n";
    fs::write(out.join(MANIFEST_FILE), json)?;
    fs::write(out.join(REFERENCES_FILE), spec.to_text())?;
    Ok(())
}

/// The archive's references as `(digit, ordinal)` entries of `index`.
fn spec_of(net: &Network, index: &DatasetIndex) -> Result<ReferenceSpec> {
    let entries = net
        .references()
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let pos = r
                .source
                .with_context(|| format!("reference {k} has no dataset position"))?;
            let ordinal = index
                .positions(r.digit)
                .binary_search(&pos)
                .ok()
                .with_context(|| format!("reference {k}: position {pos} is not a {}", r.digit))?;
            Ok((r.digit, ordinal))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReferenceSpec { entries, seed: None })
}

/// Refuses archives whose references are not the images this dataset holds
/// at the recorded positions under the archive's threshold.
fn check_consistent(net: &Network, data: &Dataset) -> Result<()> {
    let threshold = net.config().bin_threshold;
    for (k, r) in net.references().iter().enumerate() {
        if let Some(img) = r.source.and_then(|p| data.images.get(p)) {
            if binarize(img, threshold) != r.image {
                return Err(fieldnet::Error::Archive(format!(
                    "reference {k} does not match dataset image {} at threshold {threshold}",
                    r.source.unwrap_or_default()
                ))
                .into());
            }
        }
    }
    Ok(())
}

fn parse_pair(s: &str) -> Result<(usize, usize)> {
    let (a, b) = s
        .split_once(',')
        .with_context(|| format!("--pair expects `k,k1`, got `{s}`"))?;
    Ok((a.trim().parse()?, b.trim().parse()?))
}

fn cmd_build(data: &DataArgs, physics: &PhysicsArgs, source: &RefSource, out: &Path) -> Result<()> {
    let cfg = physics.config()?;
    let dataset = data.load()?;
    let index = dataset.index();
    let spec = source.spec(&dataset.labels)?;
    let refs = spec.resolve(&dataset, &index, cfg.bin_threshold)?;
    let net = build_network(refs, &cfg)?;
    write_outputs(out, &net, &manifest(&net, Some(&index), spec.seed), &spec)?;
    println!(
        "built {} references, {} first-layer neurons -> {}",
        net.len(),
        net.neuron_count(),
        out.join(ARCHIVE_FILE).display()
    );
    Ok(())
}

fn cmd_eval(archive_path: &Path, data: &DataArgs, mode: Mode, out: &Path) -> Result<()> {
    let net = archive::load(archive_path)?;
    let dataset = data.load()?;
    check_consistent(&net, &dataset)?;
    let report = evaluate_dataset(&net, &dataset, mode)?;
    fs::create_dir_all(out)?;
    fs::write(out.join("report.csv"), export_report(&report, ReportFormat::Csv))?;
    fs::write(out.join("report.json"), export_report(&report, ReportFormat::Json))?;
    print!("{}", report.to_table());
    if report.rejected() > 0 {
        println!("rejected: {}", report.rejected());
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_dump(
    archive_path: Option<&Path>,
    pair: Option<&str>,
    names: Option<&str>,
    naming: NameConvention,
    data: &DataArgs,
    physics: &PhysicsArgs,
    out: &Path,
) -> Result<()> {
    fs::create_dir_all(out)?;
    let sidecar;
    if let Some(path) = archive_path {
        let net = archive::load(path)?;
        let (k, k1) = pair.map(parse_pair).transpose()?.unwrap_or((0, 1));
        if k >= net.len() || k1 >= net.len() || k == k1 {
            return Err(fieldnet::Error::Lookup(format!(
                "no pair neuron ({k}, {k1}) in a network of {} references",
                net.len()
            ))
            .into());
        }
        let neuron = net.neuron(k, k1);
        write_table(out, &format!("zero_{k}"), net.zero_layer(k).values())?;
        write_table(out, &format!("zero_{k1}"), net.zero_layer(k1).values())?;
        write_table(out, &format!("pair_{k}_{k1}"), neuron.weights.values())?;
        let sum = neuron.weights.dot(&net.references()[k].image);
        let sum1 = neuron.weights.dot(&net.references()[k1].image);
        sidecar = format!(
            "k = {k}, k1 = {k1}, Sum = {sum}, Sum1 = {sum1}, Wh1 = {}",
            neuron.wh1 + 0.0
        );
        fs::write(out.join(format!("pair_{k}_{k1}.txt")), format!("{sidecar}\n"))?;
    } else {
        let names = names.context("give --archive with --pair, or --names a,b")?;
        let (a, b) = names
            .split_once(',')
            .with_context(|| format!("--names expects `a,b`, got `{names}`"))?;
        let (a, b) = (a.trim(), b.trim());
        let cfg = physics.config()?;
        let dataset = data.load()?;
        let index = dataset.index();
        let pa = resolve_name(a, naming, &index, &dataset.labels)?;
        let pb = resolve_name(b, naming, &index, &dataset.labels)?;
        let ia = binarize(&dataset.images[pa], cfg.bin_threshold);
        let ib = binarize(&dataset.images[pb], cfg.bin_threshold);
        let weights = pair_weight_table(&ia, &ib, &cfg);
        write_table(out, &format!("zero_{a}"), zero_layer_table(&ia, &cfg).values())?;
        write_table(out, &format!("zero_{b}"), zero_layer_table(&ib, &cfg).values())?;
        write_table(out, &format!("pair_{a}_{b}"), weights.values())?;
        let sum = weights.dot(&ia);
        let sum1 = weights.dot(&ib);
        sidecar = format!(
            "{a}, {b}, Sum = {sum}, Sum1 = {sum1}, Wh1 = {}",
            compute_threshold(sum, sum1) + 0.0
        );
        fs::write(out.join(format!("pair_{a}_{b}.txt")), format!("{sidecar}\n"))?;
    }
    println!("{sidecar}");
    Ok(())
}

fn cmd_add_refs(archive_path: &Path, data: &DataArgs, source: &RefSource, out: &Path) -> Result<()> {
    let mut net = archive::load(archive_path)?;
    let dataset = data.load()?;
    check_consistent(&net, &dataset)?;
    let index = dataset.index();
    let existing = spec_of(&net, &index)?;
    let requested = source.spec(&dataset.labels)?;
    let additions = if source.ref_spec.is_some() {
        // explicit additions must all be new
        if let Some(e) = requested.entries.iter().find(|e| existing.entries.contains(e)) {
            return Err(fieldnet::Error::DuplicateReference(format!(
                "{},{} is already in the archive",
                e.0, e.1
            ))
            .into());
        }
        requested.clone()
    } else {
        ReferenceSpec {
            entries: requested
                .entries
                .iter()
                .filter(|e| !existing.entries.contains(e))
                .copied()
                .collect(),
            seed: requested.seed,
        }
    };
    let before = net.len();
    for r in additions.resolve(&dataset, &index, net.config().bin_threshold)? {
        net = net.add_reference(r)?;
    }
    let mut m = manifest(&net, Some(&index), requested.seed);
    m.added = Some(manifest_refs(&net, Some(&index), before));
    m.parent = Some(archive_path.display().to_string());
    let spec = existing.extended_with(&additions);
    write_outputs(out, &net, &m, &spec)?;
    println!(
        "added {} references: {} -> {} references, {} first-layer neurons",
        net.len() - before,
        before,
        net.len(),
        net.neuron_count()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    data: &DataArgs,
    physics: &PhysicsArgs,
    per_class: usize,
    seed: u64,
    param: SweepParam,
    values: &[f64],
    mode: Mode,
    out: &Path,
) -> Result<()> {
    let cfg = physics.config()?;
    let dataset = data.load()?;
    let base = SweepBase {
        cfg,
        seed,
        per_class,
        mode,
    };
    let si: Vec<f64> = match param {
        SweepParam::PlaneGap => values.iter().map(|v| v / 100.0).collect(),
        _ => values.to_vec(),
    };
    let results = sweep(&dataset, &base, param, &si)?;
    fs::create_dir_all(out)?;
    let mut csv = String::from("value,total,correct,percent,rejected,error\n");
    for (shown, (_, result)) in values.iter().zip(&results) {
        match result {
            Ok(r) => {
                csv += &format!(
                    "{shown},{},{},{},{},\n",
                    r.total(),
                    r.correct(),
                    r.percent(),
                    r.rejected()
                );
                println!("{shown}: {}", r.totals_line());
            }
            Err(e) => {
                csv += &format!("{shown},,,,,{}\n", e.to_string().replace(',', ";"));
                println!("{shown}: error[{}]: {e}", e.class());
            }
        }
    }
    fs::write(out.join("sweep.csv"), csv)?;
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Build {
            data,
            physics,
            source,
            out,
        } => cmd_build(&data, &physics, &source, &out),
        Command::Eval {
            archive,
            data,
            mode,
            out,
        } => cmd_eval(&archive, &data, mode, &out),
        Command::DumpWeights {
            archive,
            pair,
            names,
            naming,
            data,
            physics,
            out,
        } => cmd_dump(
            archive.as_deref(),
            pair.as_deref(),
            names.as_deref(),
            naming,
            &data,
            &physics,
            &out,
        ),
        Command::AddRefs {
            archive,
            data,
            source,
            out,
        } => cmd_add_refs(&archive, &data, &source, &out),
        Command::Sweep {
            data,
            physics,
            per_class,
            seed,
            param,
            values,
            mode,
            out,
        } => cmd_sweep(&data, &physics, per_class, seed, param, &values, mode, &out),
        Command::Select {
            data,
            per_class,
            seed,
            out,
        } => {
            let dataset = data.load()?;
            let spec = select_references(&dataset.labels, per_class, seed)?;
            fs::write(&out, spec.to_text())?;
            println!("{} references -> {}", spec.len(), out.display());
            Ok(())
        }
    }
}
