use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{apply_recipe, sample_recipe, DegradationStep, Recipe};
use crate::error::{Error, Result};
use crate::imagecore::{load_image, resize, save_image, ResizeFilter};
use crate::labels::LabelVector;

#[derive(Clone, Debug)]
pub struct DatasetOptions {
    pub variants_per_source: usize,
    pub seed: u64,
    /// Working resolution; sources are resampled (and copied next to the
    /// manifest) when set.
    pub resolution: Option<(usize, usize)>,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            variants_per_source: 10,
            seed: 0,
            resolution: Some((256, 256)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestStep {
    pub order: usize,
    #[serde(flatten)]
    pub step: DegradationStep,
}

/// One line of `manifest.jsonl`. Relative paths resolve against the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub source: String,
    pub degraded: String,
    pub steps: Vec<ManifestStep>,
    pub label: LabelVector,
    pub seed: u64,
}

impl ManifestRecord {
    pub fn recipe(&self) -> Recipe {
        let mut steps = self.steps.clone();
        steps.sort_by_key(|s| s.order);
        let source_id = self
            .id
            .rsplit_once('_')
            .map_or(self.id.as_str(), |(s, _)| s);
        Recipe {
            steps: steps.into_iter().map(|s| s.step).collect(),
            seed: self.seed,
            source_id: source_id.to_string(),
        }
    }

    pub fn source_path(&self, root: &Path) -> PathBuf {
        root.join(&self.source)
    }

    pub fn degraded_path(&self, root: &Path) -> PathBuf {
        root.join(&self.degraded)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pub root: PathBuf,
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Recipe stream for `(seed, source_id, variant)`, independent of generation order.
fn variant_rng(seed: u64, source_id: &str, variant: usize) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(source_id.as_bytes());
    h.update((variant as u64).to_le_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// Image files directly inside `dir`, sorted by path.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
                    .unwrap_or(false)
        })
        .collect();
    out.sort();
    Ok(out)
}

/// Degrades every source `variants_per_source` times and writes
/// `out_dir/images/*.png` plus `out_dir/manifest.jsonl`.
pub fn generate_dataset(src_dir: &Path, out_dir: &Path, opts: &DatasetOptions) -> Result<Manifest> {
    if opts.variants_per_source == 0 {
        return Err(Error::ParamOutOfRange(
            "variants_per_source must be >= 1".into(),
        ));
    }
    let sources = list_images(src_dir)?;
    if sources.is_empty() {
        return Err(Error::EmptySourceSet(src_dir.to_path_buf()));
    }
    fs::create_dir_all(out_dir.join("images"))?;
    if opts.resolution.is_some() {
        fs::create_dir_all(out_dir.join("sources"))?;
    }
    let mut records = Vec::with_capacity(sources.len() * opts.variants_per_source);
    for src in &sources {
        let source_id = src
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("source")
            .to_string();
        let mut img = load_image(src)?;
        let source_ref = match opts.resolution {
            Some((w, h)) => {
                if img.dims() != (w, h) {
                    let filter = if img.width() > w {
                        ResizeFilter::Box
                    } else {
                        ResizeFilter::Bicubic
                    };
                    img = resize(&img, w, h, filter);
                }
                let rel = format!("sources/{source_id}.png");
                save_image(&img, out_dir.join(&rel))?;
                // re-read so the reference matches the 8-bit file exactly
                img = load_image(out_dir.join(&rel))?;
                rel
            }
            None => fs::canonicalize(src)?.display().to_string(),
        };
        for v in 0..opts.variants_per_source {
            let mut rng = variant_rng(opts.seed, &source_id, v);
            let recipe = sample_recipe(&mut rng, &source_id);
            let (degraded, label) = apply_recipe(&img, &recipe)?;
            let id = format!("{source_id}_{v:02}");
            let rel = format!("images/{id}.png");
            save_image(&degraded, out_dir.join(&rel))?;
            records.push(ManifestRecord {
                id,
                source: source_ref.clone(),
                degraded: rel,
                steps: recipe
                    .steps
                    .iter()
                    .enumerate()
                    .map(|(i, s)| ManifestStep {
                        order: i + 1,
                        step: s.clone(),
                    })
                    .collect(),
                label,
                seed: recipe.seed,
            });
        }
    }
    write_manifest(&out_dir.join("manifest.jsonl"), &records)?;
    Ok(Manifest {
        root: out_dir.to_path_buf(),
        records,
    })
}

pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a JSONL manifest; `root` becomes the manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let f = BufReader::new(fs::File::open(path)?);
    let mut records = Vec::new();
    for line in f.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line)?);
    }
    Ok(Manifest {
        root: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degrade::recipe_to_label;
    use crate::synth::write_corpus;

    #[test]
    fn counts_and_determinism() {
        let src = tempfile::tempdir().unwrap();
        write_corpus(src.path(), 5, 48, 1).unwrap();
        let opts = DatasetOptions {
            variants_per_source: 10,
            seed: 9,
            resolution: Some((40, 40)),
        };
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ma = generate_dataset(src.path(), a.path(), &opts).unwrap();
        let mb = generate_dataset(src.path(), b.path(), &opts).unwrap();
        assert_eq!(ma.len(), 50);
        assert_eq!(ma.records, mb.records);
        let ba = fs::read(a.path().join("manifest.jsonl")).unwrap();
        let bb = fs::read(b.path().join("manifest.jsonl")).unwrap();
        assert_eq!(ba, bb);
        assert_eq!(ba.iter().filter(|&&c| c == b'\n').count(), 50);

        let back = read_manifest(&a.path().join("manifest.jsonl")).unwrap();
        assert_eq!(back.records, ma.records);
        for r in &back.records {
            assert_eq!(recipe_to_label(&r.recipe()), r.label);
            assert!(r.degraded_path(&back.root).exists());
            assert_eq!(r.steps.first().map(|s| s.order), Some(1));
        }
        // same image bytes too
        let r0 = &ma.records[7];
        assert_eq!(
            fs::read(r0.degraded_path(a.path())).unwrap(),
            fs::read(r0.degraded_path(b.path())).unwrap()
        );
    }

    #[test]
    fn empty_source_dir_rejected() {
        let src = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        let err = generate_dataset(src.path(), out.path(), &DatasetOptions::default()).unwrap_err();
        assert!(matches!(err, Error::EmptySourceSet(_)));
    }

    #[test]
    fn step_count_distribution_is_uniform() {
        let mut counts = [0usize; 4];
        for v in 0..10_000 {
            let mut rng = variant_rng(5, "src", v);
            counts[sample_recipe(&mut rng, "src").steps.len() - 1] += 1;
        }
        for c in counts {
            let frac = c as f64 / 10_000.0;
            assert!((frac - 0.25).abs() <= 0.02, "{counts:?}");
        }
    }
}
