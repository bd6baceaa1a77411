use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::sample::{Image, LabeledCorpus, Sample};
use crate::error::{Error, Result};

const CIFAR_SIDE: usize = 32;
const CIFAR_RECORD: usize = 1 + 3 * CIFAR_SIDE * CIFAR_SIDE;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorpusFormat {
    /// `data_batch_{1..5}.bin` / `test_batch.bin` binary records.
    Cifar10Binary,
    /// One subdirectory per class, sorted by name.
    ImageFolder,
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn parse_cifar_records(bytes: &[u8], path: &Path) -> Result<(Vec<Sample>, Vec<usize>)> {
    if bytes.is_empty() || !bytes.len().is_multiple_of(CIFAR_RECORD) {
        return Err(Error::data(format!(
            "{}: {} bytes is not a whole number of {CIFAR_RECORD}-byte records",
            path.display(),
            bytes.len()
        )));
    }
    let plane = CIFAR_SIDE * CIFAR_SIDE;
    let mut samples = Vec::with_capacity(bytes.len() / CIFAR_RECORD);
    let mut labels = Vec::with_capacity(samples.capacity());
    for rec in bytes.chunks_exact(CIFAR_RECORD) {
        let label = rec[0] as usize;
        if label >= 10 {
            return Err(Error::data(format!(
                "{}: label byte {label} out of range",
                path.display()
            )));
        }
        let px = &rec[1..];
        let mut data = Vec::with_capacity(3 * plane);
        for i in 0..plane {
            data.extend_from_slice(&[px[i], px[plane + i], px[2 * plane + i]]);
        }
        samples.push(Sample::Image(Image::new(CIFAR_SIDE, CIFAR_SIDE, 3, data)?));
        labels.push(label);
    }
    Ok((samples, labels))
}

/// Read the CIFAR-10 binary release from `dir`. Returns `(train, test)`.
pub fn load_cifar10_binary(dir: &Path) -> Result<(LabeledCorpus, LabeledCorpus)> {
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    for i in 1..=5 {
        let path = dir.join(format!("data_batch_{i}.bin"));
        let (s, l) = parse_cifar_records(&read(&path)?, &path)?;
        samples.extend(s);
        labels.extend(l);
    }
    let path = dir.join("test_batch.bin");
    let (ts, tl) = parse_cifar_records(&read(&path)?, &path)?;
    Ok((
        LabeledCorpus::new(samples, labels, 10)?,
        LabeledCorpus::new(ts, tl, 10)?,
    ))
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    out.sort();
    Ok(out)
}

/// Read `root/<class>/<image>` files. Class indices follow the sorted
/// directory names; every image must share the first image's size.
pub fn load_image_folder(root: &Path) -> Result<(LabeledCorpus, Vec<String>)> {
    let class_dirs: Vec<PathBuf> = sorted_entries(root)?.into_iter().filter(|p| p.is_dir()).collect();
    if class_dirs.is_empty() {
        return Err(Error::data(format!("{}: no class subdirectories", root.display())));
    }
    let mut names = Vec::new();
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    let mut shape: Option<(usize, usize)> = None;
    for (class, dir) in class_dirs.iter().enumerate() {
        names.push(dir.file_name().unwrap_or_default().to_string_lossy().into_owned());
        for file in sorted_entries(dir)?.into_iter().filter(|p| p.is_file()) {
            let img = image::open(&file)
                .map_err(|e| Error::data(format!("{}: {e}", file.display())))?
                .to_rgb8();
            let (w, h) = (img.width() as usize, img.height() as usize);
            match shape {
                None => shape = Some((h, w)),
                Some(s) if s != (h, w) => {
                    return Err(Error::data(format!(
                        "{}: size {h}x{w} differs from {}x{}",
                        file.display(),
                        s.0,
                        s.1
                    )))
                }
                _ => {}
            }
            samples.push(Sample::Image(Image::new(h, w, 3, img.into_raw())?));
            labels.push(class);
        }
    }
    if samples.is_empty() {
        return Err(Error::data(format!("{}: no images found", root.display())));
    }
    Ok((LabeledCorpus::new(samples, labels, names.len())?, names))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planar_records_become_interleaved() {
        let mut rec = vec![0u8; CIFAR_RECORD];
        rec[0] = 3;
        rec[1] = 10; // R of pixel 0
        rec[1 + 1024] = 20; // G of pixel 0
        rec[1 + 2048] = 30; // B of pixel 0
        let (s, l) = parse_cifar_records(&rec, Path::new("x")).unwrap();
        assert_eq!(l, vec![3]);
        let Sample::Image(img) = &s[0] else { unreachable!() };
        assert_eq!(&img.data[..4], &[10, 20, 30, 0]);
    }

    #[test]
    fn truncated_file_is_a_data_error() {
        let err = parse_cifar_records(&[0u8; 100], Path::new("x")).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn missing_directory_is_a_data_error() {
        let err = load_cifar10_binary(Path::new("/nonexistent/cifar")).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }
}
