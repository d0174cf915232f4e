//! Directory layout: `A/<stem>.ppm`, `B/<stem>.ppm`, `label/<stem>.pgm`.

use std::fs;
use std::path::Path;

use super::netpbm::{read_image, read_mask, write_image, write_mask};
use super::{ImagePair, Sample};
use crate::error::{Error, Result};

fn stems(dir: &Path, ext: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) == Some(ext) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.push(stem.to_string());
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Loads every pair under `dir`, sorted by name.
pub fn load_dataset(dir: &Path) -> Result<Vec<Sample>> {
    let (a_dir, b_dir, l_dir) = (dir.join("A"), dir.join("B"), dir.join("label"));
    for d in [&a_dir, &b_dir, &l_dir] {
        if !d.is_dir() {
            return Err(Error::Dataset(format!("missing directory {}", d.display())));
        }
    }
    let names = stems(&a_dir, "ppm")?;
    for (sub, ext) in [(&b_dir, "ppm"), (&l_dir, "pgm")] {
        let other = stems(sub, ext)?;
        if let Some(orphan) = other.iter().find(|s| names.binary_search(s).is_err()) {
            return Err(Error::Dataset(format!("{} has no counterpart in A/", sub.join(format!("{orphan}.{ext}")).display())));
        }
    }
    names
        .into_iter()
        .map(|name| {
            let b_path = b_dir.join(format!("{name}.ppm"));
            let l_path = l_dir.join(format!("{name}.pgm"));
            for p in [&b_path, &l_path] {
                if !p.is_file() {
                    return Err(Error::Dataset(format!("missing counterpart {}", p.display())));
                }
            }
            let a = read_image(&a_dir.join(format!("{name}.ppm")))?;
            let b = read_image(&b_path)?;
            let mask = read_mask(&l_path)?;
            let pair = ImagePair::new(a, b, name.clone())
                .map_err(|_| Error::Dataset(format!("{name}: image extents differ")))?;
            Sample::new(pair, mask).map_err(|_| Error::Dataset(format!("{name}: mask extent differs from images")))
        })
        .collect()
}

pub fn write_dataset(dir: &Path, samples: &[Sample]) -> Result<()> {
    for sub in ["A", "B", "label"] {
        fs::create_dir_all(dir.join(sub))?;
    }
    for s in samples {
        write_image(&dir.join("A").join(format!("{}.ppm", s.name())), &s.pair.image_a)?;
        write_image(&dir.join("B").join(format!("{}.ppm", s.name())), &s.pair.image_b)?;
        write_mask(&dir.join("label").join(format!("{}.pgm", s.name())), &s.mask)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::netpbm::encode_pgm;
    use crate::data::{generate_dataset, SynthConfig};

    #[test]
    fn empty_directories_give_no_samples() {
        let dir = tempfile::tempdir().unwrap();
        for sub in ["A", "B", "label"] {
            fs::create_dir(dir.path().join(sub)).unwrap();
        }
        assert!(load_dataset(dir.path()).unwrap().is_empty());
    }

    #[test]
    fn missing_layout_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Dataset(_))));
    }

    #[test]
    fn loads_sorted_by_stem() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig { size: 8, ..SynthConfig::default() };
        let mut samples = generate_dataset(&cfg, 3).unwrap();
        for (s, name) in samples.iter_mut().zip(["b", "a", "c"]) {
            s.pair.name = name.into();
        }
        write_dataset(dir.path(), &samples).unwrap();
        let loaded = load_dataset(dir.path()).unwrap();
        let names: Vec<_> = loaded.iter().map(|s| s.name().to_string()).collect();
        assert_eq!(names, ["a", "b", "c"]);
        assert_eq!(loaded[0].mask, samples[1].mask);
    }

    #[test]
    fn mask_threshold_at_127() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig { size: 2, persistent_shapes: 0, change_shapes: 0, ..SynthConfig::default() };
        write_dataset(dir.path(), &generate_dataset(&cfg, 1).unwrap()).unwrap();
        fs::write(dir.path().join("label/0000.pgm"), encode_pgm(2, 2, &[128, 127, 255, 0]).unwrap()).unwrap();
        let s = &load_dataset(dir.path()).unwrap()[0];
        assert_eq!(s.mask.data(), &[1, 0, 1, 0]);
    }

    #[test]
    fn missing_counterpart_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig { size: 4, ..SynthConfig::default() };
        write_dataset(dir.path(), &generate_dataset(&cfg, 2).unwrap()).unwrap();
        fs::remove_file(dir.path().join("B/0001.ppm")).unwrap();
        let err = load_dataset(dir.path()).unwrap_err().to_string();
        assert!(err.contains("0001"), "{err}");
        fs::remove_file(dir.path().join("A/0001.ppm")).unwrap();
        assert!(load_dataset(dir.path()).is_err(), "orphan label must be reported");
    }

    #[test]
    fn extent_mismatch_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig { size: 4, ..SynthConfig::default() };
        write_dataset(dir.path(), &generate_dataset(&cfg, 1).unwrap()).unwrap();
        fs::write(dir.path().join("label/0000.pgm"), encode_pgm(2, 2, &[0; 4]).unwrap()).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Dataset(_))));
    }
}
