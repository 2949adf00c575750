use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use aud_core::eval::{abx_error_dtw, abx_error_labels, bitrate, cluster_quality, MetricReport, Triplet};
use aud_core::frontend::{compute_mfcc, write_wav, FeatureSequence, WavFormat};
use aud_core::graph::Clustering;
use aud_core::hmm::{viterbi_align, Alignment, AlignmentEntry, UnitKind, UnitLabel};
use aud_core::pipeline::{
    analyze, corpus_bitrate, decode_exemplar, discover, encode, run_full, stage1_items, stage2_train, system2_train,
    Analysis, Discovery, ExemplarStore, PipelineConfig, Split, SystemRun, Transcription, Utterance,
};
use aud_core::segmenter::segments_to_jsonl;
use aud_core::synthetic::{audio_corpus, AudioCorpusSpec};
use clap::ValueEnum;
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::support::*;

fn segment_ids(a: &Analysis) -> Vec<String> {
    a.segments.iter().map(|s| format!("{}:{}-{}", s.utterance_id, s.start_frame, s.end_frame)).collect()
}

fn frame_shift(a: &Analysis) -> f64 {
    a.features.first().map_or(0.01, |f| f.frame_shift)
}

#[derive(Debug, Serialize, Deserialize)]
struct ClusteringFile {
    segment_ids: Vec<String>,
    assignment: Vec<usize>,
}

/// Forced alignments of every segment that belongs to a unit-owning cluster,
/// in utterance frame coordinates.
fn segment_alignments(a: &Analysis, d: &Discovery) -> String {
    let index_of: BTreeMap<usize, usize> = d.inventory.meta.cluster_of_index.iter().map(|(i, c)| (*c, *i)).collect();
    let shift = frame_shift(a);
    let mut out = String::new();
    for (k, seg) in a.segments.iter().enumerate() {
        let Some(&i) = index_of.get(&d.clustering.assignment[k]) else { continue };
        let transcript = [UnitKind::Onset, UnitKind::Rhyme, UnitKind::Offset].map(|kind| UnitLabel::new(kind, i));
        let Ok(al) = viterbi_align(&d.inventory, &a.segment_features[k], &transcript) else { continue };
        let shifted = Alignment {
            entries: al
                .entries
                .iter()
                .map(|e| AlignmentEntry {
                    start_frame: e.start_frame + seg.start_frame,
                    end_frame: e.end_frame + seg.start_frame,
                    ..e.clone()
                })
                .collect(),
            total_log_likelihood: al.total_log_likelihood,
        };
        out.push_str(&shifted.to_jsonl(&seg.utterance_id, shift));
    }
    out
}

fn write_discovery(out: &Path, a: &Analysis, d: &Discovery) -> CliResult<()> {
    let ids = segment_ids(a);
    write_text(&out.join("segments.jsonl"), &segments_to_jsonl(&a.segments, frame_shift(a)))?;
    let file = ClusteringFile { segment_ids: ids.clone(), assignment: d.clustering.assignment.clone() };
    let mut value = serde_json::to_value(&file).expect("clustering serializes");
    value["clusters"] = d.clustering.to_json(&ids)["clusters"].clone();
    write_text(&out.join("clustering.json"), &serde_json::to_string_pretty(&value).expect("json"))?;
    write_text(&out.join("clustering.dot"), &d.clustering.to_dot(&d.graph, &ids))?;
    write_text(&out.join("inventory.json"), &d.inventory.to_json())?;
    write_text(&out.join("alignments.jsonl"), &segment_alignments(a, d))
}

fn write_system(out: &Path, sys: &SystemRun, exemplars: &ExemplarStore, shift: f64) -> CliResult<()> {
    write_text(&out.join("inventory.json"), &sys.inventory.to_json())?;
    write_text(&out.join("transcriptions.jsonl"), &to_jsonl(&sys.transcriptions))?;
    let alignments: String =
        sys.alignments.iter().zip(&sys.transcriptions).map(|(a, t)| a.to_jsonl(&t.utterance_id, shift)).collect();
    write_text(&out.join("alignments.jsonl"), &alignments)?;
    write_text(&out.join("exemplars.json"), &exemplars.to_json())?;
    let b = corpus_bitrate(&sys.transcriptions)?;
    write_text(&out.join("bitrate.json"), &serde_json::to_string_pretty(&b).expect("json"))
}

pub struct Common {
    pub config: Option<PathBuf>,
    pub preset: Preset,
    pub out: PathBuf,
}

impl Common {
    fn config(&self) -> CliResult<PipelineConfig> {
        load_config(self.config.as_deref(), self.preset)
    }
}

pub fn cmd_discover(c: &Common, manifest: &Path) -> CliResult<()> {
    let cfg = c.config()?;
    let utts = load_utterances(manifest, Split::TrainUnit)?;
    let a = analyze(&utts, &cfg)?;
    let d = discover(&a, &cfg)?;
    create_dir(&c.out)?;
    write_discovery(&c.out, &a, &d)?;
    write_metadata(&c.out, "discover", &cfg, json!({ "manifest": manifest }), Some(&d.inventory))?;
    println!(
        "discover: {} utterances, {} segments, {} clusters, {} units -> {}",
        utts.len(),
        a.segments.len(),
        d.clustering.num_clusters(),
        d.inventory.len(),
        c.out.display()
    );
    Ok(())
}

pub fn cmd_train_stage2(c: &Common, manifest: &Path, inventory: &Path) -> CliResult<()> {
    let cfg = c.config()?;
    let utts = load_utterances(manifest, Split::TrainUnit)?;
    let inv = load_inventory(inventory)?;
    let a = analyze(&utts, &cfg)?;
    let trained = stage2_train(inv, &a.features, &cfg)?;
    let sys = SystemRun::decode(trained, &utts, &a.features, &cfg)?;
    let store = sys.exemplars(&utts, &a.features, &cfg)?;
    create_dir(&c.out)?;
    write_system(&c.out, &sys, &store, frame_shift(&a))?;
    let inputs = json!({ "manifest": manifest, "inventory": inventory });
    write_metadata(&c.out, "train-stage2", &cfg, inputs, Some(&sys.inventory))?;
    println!("train-stage2: {} units -> {}", sys.inventory.len(), c.out.display());
    Ok(())
}

pub fn cmd_merge(
    c: &Common,
    manifest: &Path,
    inventory: &Path,
    clustering: &Path,
    target: Option<usize>,
) -> CliResult<()> {
    let mut cfg = c.config()?;
    if let Some(t) = target {
        cfg.merge_target = t;
        cfg.validate()?;
    }
    let utts = load_utterances(manifest, Split::TrainUnit)?;
    let system1 = load_inventory(inventory)?;
    let file: ClusteringFile = parse_json(clustering, &read_text(clustering)?)?;
    let a = analyze(&utts, &cfg)?;
    if file.segment_ids != segment_ids(&a) {
        return Err(CliError::Usage(format!(
            "{} does not match the segments of this manifest and config",
            clustering.display()
        )));
    }
    let clusters = Clustering::from_labels(&file.assignment);
    let items = stage1_items(&system1, &clusters, &a.segment_features, &a.silence);
    let (merged, map) = system2_train(&system1, &items, &a.features, &cfg)?;
    let sys = SystemRun::decode(merged, &utts, &a.features, &cfg)?;
    let store = sys.exemplars(&utts, &a.features, &cfg)?;
    create_dir(&c.out)?;
    write_system(&c.out, &sys, &store, frame_shift(&a))?;
    let map_json: BTreeMap<String, String> = map.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    write_text(&c.out.join("label_map.json"), &serde_json::to_string_pretty(&map_json).expect("json"))?;
    let inputs = json!({ "manifest": manifest, "inventory": inventory, "clustering": clustering });
    write_metadata(&c.out, "merge", &cfg, inputs, Some(&sys.inventory))?;
    println!("merge: {} -> {} units -> {}", system1.len(), sys.inventory.len(), c.out.display());
    Ok(())
}

pub fn cmd_run(c: &Common, manifest: &Path) -> CliResult<()> {
    let cfg = c.config()?;
    let utts = load_utterances(manifest, Split::TrainUnit)?;
    let run = run_full(&utts, &cfg)?;
    let shift = frame_shift(&run.analysis);
    create_dir(&c.out)?;
    let stage1 = c.out.join("stage1");
    create_dir(&stage1)?;
    write_discovery(&stage1, &run.analysis, &run.discovery)?;
    let inputs = json!({ "manifest": manifest });
    write_metadata(&stage1, "run/discover", &cfg, inputs.clone(), Some(&run.discovery.inventory))?;
    let s1_store = run.system1.exemplars(&utts, &run.analysis.features, &cfg)?;
    for (name, sys, store) in [("system1", &run.system1, &s1_store), ("system2", &run.system2, &run.exemplars)] {
        let dir = c.out.join(name);
        write_system(&dir, sys, store, shift)?;
        write_metadata(&dir, &format!("run/{name}"), &cfg, inputs.clone(), Some(&sys.inventory))?;
    }
    let map_json: BTreeMap<String, String> = run.map.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    write_text(&c.out.join("system2/label_map.json"), &serde_json::to_string_pretty(&map_json).expect("json"))?;
    let b1 = corpus_bitrate(&run.system1.transcriptions)?;
    let b2 = corpus_bitrate(&run.system2.transcriptions)?;
    println!(
        "run: {} segments; system1 {} units {:.2} bits/s; system2 {} units {:.2} bits/s -> {}",
        run.analysis.segments.len(),
        run.system1.inventory.len(),
        b1.bits_per_second,
        run.system2.inventory.len(),
        b2.bits_per_second,
        c.out.display()
    );
    Ok(())
}

pub fn cmd_encode(
    c: &Common,
    inventory: &Path,
    wavs: &[PathBuf],
    manifest: Option<&Path>,
    split: Split,
) -> CliResult<()> {
    let cfg = c.config()?;
    let inv = load_inventory(inventory)?;
    let utts: Vec<Utterance> = match manifest {
        Some(m) => load_utterances(m, split)?,
        None if wavs.is_empty() => return Err(CliError::Usage("give --manifest or at least one WAV file".into())),
        None => wavs
            .iter()
            .map(|p| {
                let id = p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned());
                Ok(Utterance { id, waveform: aud_core::read_wav(p)? })
            })
            .collect::<CliResult<_>>()?,
    };
    let transcriptions: Vec<Transcription> = utts
        .iter()
        .map(|u| {
            let mut t = encode(&inv, &u.waveform, &cfg)?;
            t.utterance_id = u.id.clone();
            Ok(t)
        })
        .collect::<CliResult<_>>()?;
    write_text(&c.out, &to_jsonl(&transcriptions))?;
    let b = corpus_bitrate(&transcriptions)?;
    println!("{}", serde_json::to_string_pretty(&json!({ "utterances": utts.len(), "bitrate": b })).expect("json"));
    Ok(())
}

pub fn cmd_resynth(
    out: &Path,
    exemplars: &Path,
    transcriptions: &Path,
    utterance: Option<&str>,
    crossfade: f64,
) -> CliResult<()> {
    let store = ExemplarStore::from_json(&read_text(exemplars)?)?;
    let all = load_transcriptions(transcriptions)?;
    let t = match utterance {
        Some(id) => all.iter().find(|t| t.utterance_id == id),
        None => all.first(),
    }
    .ok_or_else(|| CliError::Usage(format!("no matching transcription in {}", transcriptions.display())))?;
    let w = decode_exemplar(&store, t, crossfade)?;
    write_wav(out, &w, WavFormat::Pcm16)?;
    println!("resynth: {} tokens, {:.3} s -> {}", t.tokens.len(), w.duration(), out.display());
    Ok(())
}

#[derive(Debug, Clone, Deserialize)]
pub struct Span {
    pub utterance_id: String,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct LabeledSpan {
    #[serde(flatten)]
    pub span: Span,
    pub label: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct TripletRow {
    pub a: Span,
    pub b: Span,
    pub x: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AbxDistance {
    /// DTW over feature slices.
    Dtw,
    /// Edit distance over the decoded labels inside each span.
    Labels,
}

fn token_at<'a>(ts: &'a BTreeMap<&str, &Transcription>, id: &str, time: f64) -> Option<&'a UnitLabel> {
    let t = ts.get(id)?;
    t.tokens.iter().find(|k| k.start <= time && time < k.end).or(t.tokens.last()).map(|k| &k.label)
}

fn labels_in(t: &Transcription, s: &Span) -> Vec<UnitLabel> {
    t.tokens.iter().filter(|k| k.end > s.start && k.start < s.end).map(|k| k.label).collect()
}

pub struct EvalArgs<'a> {
    pub transcriptions: &'a Path,
    pub inventory: Option<&'a Path>,
    pub reference: Option<&'a Path>,
    pub triplets: Option<&'a Path>,
    pub manifest: Option<&'a Path>,
    pub abx_distance: AbxDistance,
}

pub fn cmd_eval(c: &Common, args: &EvalArgs) -> CliResult<()> {
    let cfg = c.config()?;
    let ts = load_transcriptions(args.transcriptions)?;
    let by_id: BTreeMap<&str, &Transcription> = ts.iter().map(|t| (t.utterance_id.as_str(), t)).collect();
    let duration: f64 = ts.iter().map(|t| t.duration).sum();
    let labels: Vec<Vec<UnitLabel>> = ts.iter().map(Transcription::labels).collect();
    let b = bitrate(labels.iter().map(Vec::as_slice), duration)?;
    let inventory_size = match args.inventory {
        Some(p) => load_inventory(p)?.len(),
        None => labels.iter().flatten().collect::<std::collections::BTreeSet<_>>().len(),
    };
    let mut report = MetricReport::from_bitrate(&b, duration, inventory_size);

    if let Some(reference) = args.reference {
        // Spans in utterances that were not transcribed are skipped.
        let rows: Vec<LabeledSpan> = read_jsonl(reference)?;
        let mut predicted = Vec::new();
        let mut truth = Vec::new();
        for r in &rows {
            let mid = 0.5 * (r.span.start + r.span.end);
            if let Some(label) = token_at(&by_id, &r.span.utterance_id, mid) {
                predicted.push(*label);
                truth.push(r.label.clone());
            }
        }
        if predicted.is_empty() {
            return Err(CliError::Parse {
                path: reference.to_path_buf(),
                msg: "no reference span falls in a transcribed utterance".into(),
            });
        }
        let (purity, nmi) = cluster_quality(&predicted, &truth)?;
        report.purity = Some(purity);
        report.nmi = Some(nmi);
    }

    if let Some(path) = args.triplets {
        let mut rows: Vec<TripletRow> = read_jsonl(path)?;
        if args.abx_distance == AbxDistance::Labels {
            rows.retain(|r| [&r.a, &r.b, &r.x].iter().all(|s| by_id.contains_key(s.utterance_id.as_str())));
        }
        let missing = |id: &str| CliError::Parse { path: path.to_path_buf(), msg: format!("unknown utterance {id}") };
        let err = match args.abx_distance {
            AbxDistance::Labels => {
                let grab = |s: &Span| by_id.get(s.utterance_id.as_str()).map(|t| labels_in(t, s)).ok_or_else(|| missing(&s.utterance_id));
                let triplets = rows
                    .iter()
                    .map(|r| Ok(Triplet { a: grab(&r.a)?, b: grab(&r.b)?, x: grab(&r.x)? }))
                    .collect::<CliResult<Vec<_>>>()?;
                abx_error_labels(&triplets)?
            }
            AbxDistance::Dtw => {
                let manifest = args
                    .manifest
                    .ok_or_else(|| CliError::Usage("DTW ABX needs --manifest to read the audio".into()))?;
                let m = aud_core::CorpusManifest::load(manifest)?;
                let mut feats: BTreeMap<String, FeatureSequence> = BTreeMap::new();
                for e in &m.entries {
                    feats.insert(e.utterance_id.clone(), compute_mfcc(&aud_core::read_wav(&e.path)?, &cfg.frontend)?);
                }
                let grab = |s: &Span| -> CliResult<FeatureSequence> {
                    let f = feats.get(&s.utterance_id).ok_or_else(|| missing(&s.utterance_id))?;
                    let n = f.num_frames();
                    let a = ((s.start / f.frame_shift).round() as usize).min(n.saturating_sub(1));
                    let b = ((s.end / f.frame_shift).round() as usize).clamp(a + 1, n.max(a + 1));
                    Ok(f.slice(a, b.min(n)))
                };
                let triplets = rows
                    .iter()
                    .map(|r| Ok(Triplet { a: grab(&r.a)?, b: grab(&r.b)?, x: grab(&r.x)? }))
                    .collect::<CliResult<Vec<_>>>()?;
                abx_error_dtw(&triplets)?
            }
        };
        report.abx_error = Some(err);
        if args.abx_distance == AbxDistance::Labels {
            report.methods.abx = "flat average over triplets; normalized label edit distance; ties count 0.5".into();
        }
    }

    report.validate()?;
    create_dir(&c.out)?;
    write_text(&c.out.join("report.json"), &report.to_json())?;
    write_text(&c.out.join("report.csv"), &format!("{}\n{}\n", MetricReport::CSV_HEADER, report.to_csv_row()))?;
    println!("{}", report.to_json());
    println!("{}", report.to_csv_row());
    Ok(())
}

pub struct SynthArgs {
    pub utterances: usize,
    pub templates: usize,
    pub seed: u64,
    pub test_every: usize,
    pub triplets: usize,
}

pub fn cmd_synth_corpus(out: &Path, args: &SynthArgs) -> CliResult<()> {
    if !(1..=6).contains(&args.templates) || args.utterances == 0 {
        return Err(CliError::Usage("need 1..=6 templates and at least one utterance".into()));
    }
    let spec = AudioCorpusSpec {
        templates: args.templates,
        utterances: args.utterances,
        seed: args.seed,
        ..AudioCorpusSpec::default()
    };
    let corpus = audio_corpus(&spec);
    create_dir(out)?;
    let mut manifest = String::from("utterance_id,path,split\n");
    let mut reference = Vec::new();
    let mut syllables = Vec::new();
    for (i, u) in corpus.iter().enumerate() {
        let name = format!("{}.wav", u.id);
        write_wav(out.join(&name), &u.waveform, WavFormat::Pcm16)?;
        let test = args.test_every > 0 && i % args.test_every == args.test_every - 1;
        manifest.push_str(&format!("{},{name},{}\n", u.id, if test { "test" } else { "train_unit" }));
        let sr = f64::from(spec.sample_rate);
        for s in &u.syllables {
            let row = json!({
                "utterance_id": u.id,
                "start": s.start_sample as f64 / sr,
                "end": s.end_sample as f64 / sr,
                "label": format!("syl{}", s.template),
            });
            reference.push(row.clone());
            syllables.push((s.template, row));
        }
    }
    write_text(&out.join("manifest.csv"), &manifest)?;
    write_text(&out.join("reference.jsonl"), &to_jsonl(&reference))?;

    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let span = |v: &serde_json::Value| json!({ "utterance_id": v["utterance_id"], "start": v["start"], "end": v["end"] });
    let mut triplets = Vec::new();
    while triplets.len() < args.triplets && args.templates > 1 && syllables.len() > 2 {
        let picks: Vec<&(usize, serde_json::Value)> = syllables.choose_multiple(&mut rng, 3).collect();
        let (a, b, x) = (picks[0], picks[1], picks[2]);
        if a.0 == x.0 && b.0 != a.0 {
            triplets.push(json!({ "a": span(&a.1), "b": span(&b.1), "x": span(&x.1) }));
        }
    }
    write_text(&out.join("triplets.jsonl"), &to_jsonl(&triplets))?;
    println!(
        "synth-corpus: {} utterances, {} syllables, {} triplets -> {}",
        corpus.len(),
        syllables.len(),
        triplets.len(),
        out.display()
    );
    Ok(())
}
