use std::fs;
use std::path::Path;

use tea_core::forge::{
    dataset_stats, format_stats, forge_split, param_count, read_labeled_quads, self_loop_delta, synth_tkg,
    write_forge_output, ForgeOutput, ForgeSpec,
};
use tea_core::tkg::parse_dataset;

use crate::args::{resolve_data, ForgeCommand, OnOff, SplitArgs, StatsArgs, SynthArgs};
use crate::manifest::{RunManifest, FORGE_RUN_FILE};

pub fn run(cmd: ForgeCommand) -> anyhow::Result<()> {
    match cmd {
        ForgeCommand::Synth(a) => {
            let mut m = RunManifest::new("forge synth", None, false);
            let outcome = synth(&a, &mut m);
            m.finish(&a.out, FORGE_RUN_FILE, &outcome)?;
            outcome
        }
        ForgeCommand::Split(a) => {
            let source = resolve_data(&a.source);
            let mut m = RunManifest::new("forge split", Some(&source), false);
            let outcome = split(&a, &source, &mut m);
            m.finish(&a.out, FORGE_RUN_FILE, &outcome)?;
            outcome
        }
        ForgeCommand::Stats(a) => stats(&a),
    }
}

fn dir_name(dir: &Path) -> String {
    dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "dataset".into())
}

fn load_spec(path: &Path) -> anyhow::Result<ForgeSpec> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => anyhow::Error::new(tea_core::Error::MissingFile(path.to_path_buf())),
        _ => anyhow::Error::new(e),
    })?;
    toml::from_str(&text).map_err(|e| tea_core::Error::Config(format!("{}: {e}", path.display())).into())
}

fn synth_spec(a: &SynthArgs) -> anyhow::Result<ForgeSpec> {
    let mut s = match &a.config {
        Some(p) => load_spec(p)?,
        None => ForgeSpec::default(),
    };
    macro_rules! set {
        ($($field:ident),*) => {
            $(if let Some(v) = a.$field { s.$field = v; })*
        };
    }
    set!(
        entities,
        relations,
        time_steps,
        quads_per_entity,
        planted,
        seed_count,
        overlap_ratio,
        non_temporal_ratio,
        twin_neighbors,
        twin_window,
        seed
    );
    if let Some(v) = a.anchor_twins {
        s.anchor_twins = v == OnOff::On;
    }
    Ok(s)
}

fn finish(out: &ForgeOutput, dir: &Path, m: &mut RunManifest) -> anyhow::Result<()> {
    m.seeds = vec![out.manifest.rng_seed];
    write_forge_output(out, dir, &dir_name(dir))?;
    print!("{}", fs::read_to_string(dir.join("stats.txt"))?);
    Ok(())
}

fn synth(a: &SynthArgs, m: &mut RunManifest) -> anyhow::Result<()> {
    let spec = synth_spec(a)?;
    m.config = serde_json::to_value(&spec)?;
    let out = synth_tkg(&spec)?;
    finish(&out, &a.out, m)
}

fn split(a: &SplitArgs, source: &Path, m: &mut RunManifest) -> anyhow::Result<()> {
    m.config = serde_json::json!({
        "source": source.display().to_string(),
        "ratio": a.ratio,
        "seed_count": a.seed_count,
        "seed": a.seed,
    });
    let (kg, times) = if source.is_dir() {
        let ds = parse_dataset(source)?;
        (ds.g1, ds.times)
    } else {
        read_labeled_quads(source)?
    };
    let mut out = forge_split(&kg, &times, a.ratio, a.seed_count, a.seed)?;
    out.manifest.source = Some(source.display().to_string());
    finish(&out, &a.out, m)
}

fn stats(a: &StatsArgs) -> anyhow::Result<()> {
    let data = resolve_data(&a.data);
    let ds = parse_dataset(&data)?;
    let s = dataset_stats(&ds);
    let name = a.name.clone().unwrap_or_else(|| dir_name(&data));
    print!("{}", format_stats(&name, &s, None));
    if let Some(k) = a.dim {
        let base = param_count(&s, k, a.layers);
        println!("params\t{base}");
        println!("params_with_self_loops\t{}", base + self_loop_delta(&s, ds.times.num_real(), k));
    }
    Ok(())
}
