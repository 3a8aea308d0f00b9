use std::fmt;
use std::path::Path;
use std::sync::Arc;

use crate::data::{read_ppm, Image, Rng};
use crate::error::{Error, Result};

pub const CLASS_NAMES: [&str; 2] = ["with_mask", "without_mask"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    WithMask = 0,
    WithoutMask = 1,
}

impl Label {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        match i {
            0 => Some(Label::WithMask),
            1 => Some(Label::WithoutMask),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        CLASS_NAMES[self.index()]
    }

    pub fn from_name(name: &str) -> Option<Label> {
        CLASS_NAMES.iter().position(|&n| n == name).and_then(Label::from_index)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug)]
pub struct Sample {
    pub name: String,
    pub label: usize,
    pub image: Arc<Image>,
}

/// Images with class indices. Mask datasets use [`CLASS_NAMES`]; the
/// pretraining shape task carries its own names.
#[derive(Clone, Debug)]
pub struct LabeledDataset {
    pub class_names: Vec<String>,
    pub items: Vec<Sample>,
}

impl LabeledDataset {
    pub fn new(class_names: Vec<String>, items: Vec<Sample>) -> Result<Self> {
        if let Some(bad) = items.iter().find(|s| s.label >= class_names.len()) {
            return Err(Error::Dataset(format!("{}: label {} out of range", bad.name, bad.label)));
        }
        Ok(Self { class_names, items })
    }

    pub fn mask_classes() -> Vec<String> {
        CLASS_NAMES.iter().map(|s| s.to_string()).collect()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Item count per class index.
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_names.len()];
        for s in &self.items {
            counts[s.label] += 1;
        }
        counts
    }

    /// Minority over majority class count (0.518 for the 993/1918 corpus).
    pub fn imbalance_ratio(&self) -> f64 {
        let counts = self.counts();
        let max = counts.iter().copied().max().unwrap_or(0);
        let min = counts.iter().copied().min().unwrap_or(0);
        if max == 0 {
            0.0
        } else {
            min as f64 / max as f64
        }
    }

    pub fn describe_counts(&self) -> String {
        self.class_names
            .iter()
            .zip(self.counts())
            .map(|(n, c)| format!("{n}:{c}"))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

/// Loads `root/with_mask/*.ppm` and `root/without_mask/*.ppm`, each folder in
/// lexicographic filename order.
pub fn load_class_folders(root: &Path) -> Result<LabeledDataset> {
    let mut items = Vec::new();
    for (label, class) in CLASS_NAMES.iter().enumerate() {
        let dir = root.join(class);
        if !dir.is_dir() {
            return Err(Error::Dataset(format!("missing class directory {}", dir.display())));
        }
        let mut files: Vec<_> = std::fs::read_dir(&dir)
            .map_err(|e| Error::from(e).in_file(&dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("ppm")))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Error::Dataset(format!("class directory {} has no .ppm files", dir.display())));
        }
        for path in files {
            let image = read_ppm(&path)?;
            items.push(Sample {
                name: format!("{class}/{}", path.file_name().unwrap().to_string_lossy()),
                label,
                image: Arc::new(image),
            });
        }
    }
    LabeledDataset::new(LabeledDataset::mask_classes(), items)
}

/// Number of training items when a class of `count` is split at `fraction`:
/// the training share is rounded down.
pub fn train_count(count: usize, fraction: f64) -> usize {
    ((count as f64 * fraction + 1e-9).floor() as usize).clamp(1, count - 1)
}

/// Seeded, stratified split. Each class is shuffled independently and cut at
/// `train_fraction`; both sides receive at least one item of every class.
pub fn split(dataset: &LabeledDataset, train_fraction: f64, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("train_fraction {train_fraction} not in (0, 1)")));
    }
    let mut rng = Rng::new(seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for class in 0..dataset.num_classes() {
        let mut members: Vec<&Sample> = dataset.items.iter().filter(|s| s.label == class).collect();
        if members.len() < 2 {
            return Err(Error::Dataset(format!(
                "class {} has {} item(s); splitting needs at least 2",
                dataset.class_names[class],
                members.len()
            )));
        }
        rng.shuffle(&mut members);
        let cut = train_count(members.len(), train_fraction);
        train.extend(members[..cut].iter().map(|s| (*s).clone()));
        val.extend(members[cut..].iter().map(|s| (*s).clone()));
    }
    Ok((
        LabeledDataset::new(dataset.class_names.clone(), train)?,
        LabeledDataset::new(dataset.class_names.clone(), val)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::write_ppm;
    use std::collections::HashSet;

    fn toy(per_class: [usize; 2]) -> LabeledDataset {
        let mut items = Vec::new();
        for (label, &n) in per_class.iter().enumerate() {
            for i in 0..n {
                items.push(Sample {
                    name: format!("{label}-{i}"),
                    label,
                    image: Arc::new(Image::filled(1, 1, [i as u8, label as u8, 0])),
                });
            }
        }
        LabeledDataset::new(LabeledDataset::mask_classes(), items).unwrap()
    }

    fn names(d: &LabeledDataset) -> HashSet<String> {
        d.items.iter().map(|s| s.name.clone()).collect()
    }

    #[test]
    fn split_ten_and_ten() {
        let d = toy([10, 10]);
        let (train, val) = split(&d, 0.8, 3).unwrap();
        assert_eq!(train.counts(), vec![8, 8]);
        assert_eq!(val.counts(), vec![2, 2]);
        assert!(names(&train).is_disjoint(&names(&val)));
        let union: HashSet<_> = names(&train).union(&names(&val)).cloned().collect();
        assert_eq!(union, names(&d));
    }

    #[test]
    fn split_counts_of_imbalanced_corpus() {
        assert_eq!(train_count(993, 0.8), 794);
        assert_eq!(train_count(1918, 0.8), 1534);
        let d = toy([993, 1918]);
        let (train, val) = split(&d, 0.8, 1).unwrap();
        assert_eq!(train.counts(), vec![794, 1534]);
        assert_eq!(val.counts(), vec![199, 384]);
        assert!((d.imbalance_ratio() - 0.518).abs() < 5e-4);
    }

    #[test]
    fn split_determinism() {
        let d = toy([20, 20]);
        let a = split(&d, 0.5, 7).unwrap().0;
        let b = split(&d, 0.5, 7).unwrap().0;
        let c = split(&d, 0.5, 8).unwrap().0;
        let order = |d: &LabeledDataset| d.items.iter().map(|s| s.name.clone()).collect::<Vec<_>>();
        assert_eq!(order(&a), order(&b));
        assert_ne!(order(&a), order(&c));
    }

    #[test]
    fn split_rejects_tiny_class_and_bad_fraction() {
        assert!(matches!(split(&toy([1, 5]), 0.8, 0), Err(Error::Dataset(_))));
        assert!(split(&toy([5, 5]), 1.0, 0).is_err());
        assert!(split(&toy([5, 5]), 0.0, 0).is_err());
    }

    #[test]
    fn loads_folders_in_name_order() {
        let dir = tempfile::tempdir().unwrap();
        for (class, n) in [("with_mask", 3), ("without_mask", 5)] {
            std::fs::create_dir(dir.path().join(class)).unwrap();
            for i in (0..n).rev() {
                write_ppm(&dir.path().join(class).join(format!("img{i}.ppm")), &Image::filled(2, 2, [i as u8; 3])).unwrap();
            }
        }
        std::fs::write(dir.path().join("with_mask/notes.txt"), "ignored").unwrap();
        let d = load_class_folders(dir.path()).unwrap();
        assert_eq!(d.len(), 8);
        assert_eq!(d.counts(), vec![3, 5]);
        assert_eq!(d.items[0].name, "with_mask/img0.ppm");
        assert_eq!(d.items[2].name, "with_mask/img2.ppm");
        assert_eq!(d.describe_counts(), "with_mask:3, without_mask:5");
    }

    #[test]
    fn folder_errors() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("with_mask")).unwrap();
        std::fs::create_dir(dir.path().join("without_mask")).unwrap();
        // Empty with_mask/.
        write_ppm(&dir.path().join("without_mask/a.ppm"), &Image::filled(1, 1, [0; 3])).unwrap();
        assert!(matches!(load_class_folders(dir.path()), Err(Error::Dataset(_))));

        std::fs::write(dir.path().join("with_mask/broken.ppm"), b"P6\n4 4\n255\n").unwrap();
        let msg = load_class_folders(dir.path()).unwrap_err().to_string();
        assert!(msg.contains("broken.ppm"), "{msg}");

        let missing = tempfile::tempdir().unwrap();
        assert!(load_class_folders(missing.path()).is_err());
    }
}
