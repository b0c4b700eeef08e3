use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use fadenet::datagen::{load_dataset, regenerate, save_dataset, split, Dataset, SplitPart};
use fadenet::metrics::select_best;
use fadenet::models::{
    evaluate_values, load_checkpoint, save_checkpoint, train_cgan, train_fnn, Checkpoint, EvalPlan, EvalSet,
    Evaluation, FnnState, GanState, ModelConfig, ModelKind, TrainReport,
};

use crate::config::RunConfig;
use crate::CliError;

pub const TRAIN_FILE: &str = "train.bin";
pub const VAL_FILE: &str = "val.bin";
pub const TEST_FILE: &str = "test.bin";
pub const CONFIG_FILE: &str = "config.toml";

fn prepare_out(cfg: &RunConfig) -> Result<&Path, CliError> {
    let out = cfg.out.as_path();
    fs::create_dir_all(out).map_err(|e| CliError::Other(format!("cannot create {}: {e}", out.display())))?;
    write(&out.join(CONFIG_FILE), &cfg.to_toml()?)?;
    Ok(out)
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Other(format!("cannot write {}: {e}", path.display())))
}

fn load(path: &Path) -> Result<Dataset, CliError> {
    load_dataset(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn generate(cfg: &RunConfig) -> Result<(), CliError> {
    let out = prepare_out(cfg)?;
    let pool = regenerate(&cfg.pool_meta())?;
    let (train, val) = split(&pool, cfg.data.train_ratio, cfg.seed)?;
    let test = regenerate(&cfg.test_meta())?;
    for (ds, name) in [(&train, TRAIN_FILE), (&val, VAL_FILE), (&test, TEST_FILE)] {
        save_dataset(ds, &out.join(name))?;
    }
    let stats = pool.stats()?;
    write(&out.join("generation_stats.tsv"), &stats.to_delimited())?;
    println!(
        "generated {} samples ({} train, {} validation, {} test) in {} categories; {} draws dropped",
        pool.len(),
        train.len(),
        val.len(),
        test.len(),
        pool.n_categories(),
        stats.dropped()
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn checkpoint_name(kind: ModelKind, epoch: u64) -> String {
    let k = match kind {
        ModelKind::Fnn => "fnn",
        ModelKind::Cgan => "cgan",
    };
    format!("{k}-{epoch:06}.ckpt")
}

fn expect_meta(ds: &Dataset, cfg: &RunConfig, part: SplitPart, path: &Path) -> Result<(), CliError> {
    if ds.meta != cfg.split_meta(part) {
        return Err(CliError::Data(format!(
            "{} was not generated from this configuration (approach, channel, noise, sizes, split or seed \
             differ); run `fadenet generate` with the same settings or point --data at a matching directory",
            path.display()
        )));
    }
    Ok(())
}

pub fn train(cfg: &RunConfig, data: &Path, resume: Option<&Path>) -> Result<(), CliError> {
    let (train_path, val_path) = (data.join(TRAIN_FILE), data.join(VAL_FILE));
    let train = load(&train_path)?;
    let val = load(&val_path)?;
    expect_meta(&train, cfg, SplitPart::Train, &train_path)?;
    expect_meta(&val, cfg, SplitPart::Validation, &val_path)?;
    let out = prepare_out(cfg)?;
    let ckpt_dir = out.join("checkpoints");
    fs::create_dir_all(&ckpt_dir)?;
    let previous = resume.map(load_checkpoint).transpose()?;

    let mut saved = 0usize;
    let mut sink = |c: Checkpoint| {
        save_checkpoint(&c, &ckpt_dir.join(checkpoint_name(c.kind(), c.epoch)))?;
        saved += 1;
        Ok(())
    };
    let report: TrainReport = match cfg.model_config() {
        ModelConfig::Fnn(m) => {
            let mut state = match &previous {
                Some(c) => FnnState::resume(c, &m, &train)?,
                None => FnnState::new(&m, &train)?,
            };
            train_fnn(&mut state, &train, &val, &m, &mut sink)?
        }
        ModelConfig::Cgan(m) => {
            let mut state = match &previous {
                Some(c) => GanState::resume(c, &m, &train)?,
                None => GanState::new(&m, &train)?,
            };
            train_cgan(&mut state, &train, &m, &mut sink)?
        }
    };

    let log_path = out.join("train_log.tsv");
    if previous.is_some() && log_path.exists() {
        let mut log = fs::read_to_string(&log_path)?;
        log.extend(report.to_delimited().lines().skip(1).map(|l| format!("{l}\n")));
        write(&log_path, &log)?;
    } else {
        write(&log_path, &report.to_delimited())?;
    }
    if !report.warnings.is_empty() {
        for w in &report.warnings {
            eprintln!("warning: {w}");
        }
        write(&out.join("warnings.txt"), &(report.warnings.join("\n") + "\n"))?;
    }
    let col = &report.columns[0];
    println!(
        "trained to epoch {}; {col} {:.6e} -> {:.6e}; {saved} checkpoints in {}",
        report.epoch,
        report.first(col).unwrap_or(f64::NAN),
        report.last(col).unwrap_or(f64::NAN),
        ckpt_dir.display()
    );
    Ok(())
}

/// Caches the evaluation set across checkpoints trained on the same data.
struct SetCache {
    plan: EvalPlan,
    sets: Vec<EvalSet>,
}

impl SetCache {
    fn get(&mut self, ckpt: &Checkpoint) -> Result<&EvalSet, CliError> {
        let want = EvalSet::base_meta(&ckpt.data_meta, &self.plan);
        if let Some(i) = self.sets.iter().position(|s| s.meta == want) {
            return Ok(&self.sets[i]);
        }
        self.sets.push(EvalSet::new(&ckpt.data_meta, &self.plan)?);
        Ok(self.sets.last().expect("just pushed"))
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "checkpoint".into())
}

pub fn evaluate(cfg: &RunConfig, checkpoints: &[PathBuf], self_check: bool) -> Result<(), CliError> {
    if checkpoints.is_empty() && !self_check {
        return Err(CliError::Config("nothing to evaluate: pass --checkpoint and/or --self-check".into()));
    }
    let out = prepare_out(cfg)?;
    let mut rows: Vec<(String, String, Evaluation)> = Vec::new();
    let mut cache = SetCache {
        plan: cfg.eval,
        sets: Vec::new(),
    };
    for path in checkpoints {
        let ckpt = load_checkpoint(path).map_err(|e| prefix(e.into(), path))?;
        let set = cache.get(&ckpt)?;
        let e = fadenet::models::evaluate(&ckpt, set, &cfg.eval, true)?;
        let kind = format!("{:?}", ckpt.kind()).to_lowercase();
        rows.push((stem(path), kind, e));
    }
    if self_check {
        let meta = cfg.pool_meta();
        let set = EvalSet::new(&meta, &cfg.eval)?;
        // A second, independent genuine draw stands in for a perfect model.
        let other = EvalSet::new(
            &meta,
            &EvalPlan {
                seed: cfg.eval.seed.wrapping_add(1),
                ..cfg.eval
            },
        )?;
        let generated: Vec<_> = (0..meta.out_dim()).map(|a| other.genuine_targets(a)).collect();
        let e = evaluate_values(&set, &generated, &cfg.eval, true)?;
        rows.push(("genuine".into(), "channel".into(), e));
    }
    let mut table = String::from("label\tkind\tepoch\tscaled_pe\toa\n");
    for (label, kind, e) in &rows {
        let _ = writeln!(
            table,
            "{label}\t{kind}\t{}\t{:.6}\t{:.6}",
            e.epoch,
            e.scaled_pe,
            e.oa_average.unwrap_or(f64::NAN)
        );
        if let Some(t) = e.to_delimited() {
            write(&out.join(format!("eval-{label}.tsv")), &t)?;
        }
    }
    write(&out.join("comparison.tsv"), &table)?;
    print!("{table}");
    Ok(())
}

fn prefix(e: CliError, path: &Path) -> CliError {
    let p = path.display();
    match e {
        CliError::Config(m) => CliError::Config(format!("{p}: {m}")),
        CliError::Data(m) => CliError::Data(format!("{p}: {m}")),
        CliError::Numeric(m) => CliError::Numeric(format!("{p}: {m}")),
        CliError::Other(m) => CliError::Other(format!("{p}: {m}")),
    }
}

/// Trailing digits of the file stem, used as the epoch of unreadable files.
fn epoch_from_name(path: &Path) -> u64 {
    let s = stem(path);
    let digits: String = s.chars().rev().take_while(char::is_ascii_digit).collect();
    digits.chars().rev().collect::<String>().parse().unwrap_or(0)
}

pub fn select(cfg: &RunConfig, dir: &Path) -> Result<(), CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::Data(format!("cannot read {}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ckpt"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Data(format!("no .ckpt files in {}", dir.display())));
    }
    let out = prepare_out(cfg)?;
    let mut cache = SetCache {
        plan: cfg.eval,
        sets: Vec::new(),
    };
    let mut scored: Vec<(PathBuf, u64, Result<f64, String>)> = Vec::new();
    for path in &paths {
        let (epoch, score) = match load_checkpoint(path) {
            Ok(ckpt) => {
                let s = cache
                    .get(&ckpt)
                    .and_then(|set| Ok(fadenet::models::evaluate(&ckpt, set, &cfg.eval, false)?.scaled_pe))
                    .map_err(|e| e.to_string());
                (ckpt.epoch, s)
            }
            Err(e) => (epoch_from_name(path), Err(e.to_string())),
        };
        scored.push((path.clone(), epoch, score));
    }
    let sel = select_best(&scored, |s| s.1, |s| s.2.clone())?;
    let mut ranking = String::from("rank\tpath\tepoch\tscaled_pe\terror\n");
    for (rank, r) in sel.ranking.iter().enumerate() {
        let _ = writeln!(
            ranking,
            "{}\t{}\t{}\t{}\t{}",
            rank + 1,
            scored[r.index].0.display(),
            r.epoch,
            r.scaled_pe.map_or("NA".into(), |v| format!("{v:.6}")),
            r.error.as_deref().unwrap_or("")
        );
    }
    write(&out.join("ranking.tsv"), &ranking)?;
    let failed = sel.ranking.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        eprintln!("warning: {failed} checkpoint(s) could not be evaluated; see ranking.tsv");
    }
    match sel.best {
        Some(i) => {
            let best = &scored[i];
            write(&out.join("best.txt"), &format!("{}\n", best.0.display()))?;
            println!("{}\tepoch {}\tScaledPE {:.6}", best.0.display(), best.1, best.2.as_ref().expect("ranked"));
            Ok(())
        }
        None => Err(CliError::Numeric("no checkpoint could be evaluated".into())),
    }
}
