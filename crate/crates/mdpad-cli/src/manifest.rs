//! Dataset manifests: line-oriented text, one video per line with
//! tab-separated fields `id  path  label  subject  domain  split`.
//! `#` starts a comment and blank lines are ignored.

use anyhow::{bail, Context, Result};
use std::fmt;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Attack,
    Live,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::Attack => 0,
            Label::Live => 1,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Attack => "attack",
            Label::Live => "live",
        })
    }
}

impl std::str::FromStr for Label {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "attack" => Ok(Label::Attack),
            "live" => Ok(Label::Live),
            other => bail!("unknown label `{other}` (expected live|attack)"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => bail!("unknown split `{other}` (expected train|val|test)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VideoEntry {
    pub id: String,
    /// Frame directory; relative paths resolve against the manifest's
    /// own directory.
    pub path: PathBuf,
    pub label: Label,
    pub subject: String,
    pub domain: String,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    pub videos: Vec<VideoEntry>,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self> {
        let mut videos = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 6 {
                bail!(
                    "manifest line {}: expected 6 tab-separated fields, got {}",
                    lineno + 1,
                    fields.len()
                );
            }
            let entry = VideoEntry {
                id: fields[0].to_string(),
                path: PathBuf::from(fields[1]),
                label: fields[2].parse().with_context(|| format!("line {}", lineno + 1))?,
                subject: fields[3].to_string(),
                domain: fields[4].to_string(),
                split: fields[5].parse().with_context(|| format!("line {}", lineno + 1))?,
            };
            if !seen.insert(entry.id.clone()) {
                bail!("manifest line {}: duplicate video id `{}`", lineno + 1, entry.id);
            }
            videos.push(entry);
        }
        Ok(Self { videos })
    }

    pub fn serialize(&self) -> String {
        let mut out = String::from("# id\tpath\tlabel\tsubject\tdomain\tsplit\n");
        for v in &self.videos {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                v.id,
                v.path.display(),
                v.label,
                v.subject,
                v.domain,
                v.split
            ));
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading manifest {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.serialize())
            .with_context(|| format!("writing manifest {}", path.display()))
    }

    /// Frame directory of a video, resolved against `base` when relative.
    pub fn resolved_path(entry: &VideoEntry, base: &Path) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            base.join(&entry.path)
        }
    }

    /// Checks that every referenced frame directory exists.
    pub fn validate_paths(&self, base: &Path) -> Result<()> {
        for v in &self.videos {
            let p = Self::resolved_path(v, base);
            if !p.is_dir() {
                bail!("video `{}`: frame directory {} does not exist", v.id, p.display());
            }
        }
        Ok(())
    }

    pub fn split(&self, split: Split) -> Vec<&VideoEntry> {
        self.videos.iter().filter(|v| v.split == split).collect()
    }

    pub fn get(&self, id: &str) -> Option<&VideoEntry> {
        self.videos.iter().find(|v| v.id == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# comment line
vid_a\tvideos/vid_a\tlive\ts01\talpha\ttrain

vid_b\tvideos/vid_b\tattack\ts01\talpha\ttest
";

    #[test]
    fn parse_and_round_trip() {
        let m = Manifest::parse(SAMPLE).unwrap();
        assert_eq!(m.videos.len(), 2);
        assert_eq!(m.videos[0].id, "vid_a");
        assert_eq!(m.videos[0].label, Label::Live);
        assert_eq!(m.videos[1].split, Split::Test);
        let again = Manifest::parse(&m.serialize()).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn rejects_duplicates_and_bad_vocab() {
        let dup = "a\tp\tlive\ts\td\ttrain\na\tq\tattack\ts\td\ttest\n";
        assert!(Manifest::parse(dup).unwrap_err().to_string().contains("duplicate"));
        let bad_label = "a\tp\tspoof\ts\td\ttrain\n";
        assert!(Manifest::parse(bad_label).is_err());
        let bad_split = "a\tp\tlive\ts\td\tholdout\n";
        assert!(Manifest::parse(bad_split).is_err());
        let short = "a\tp\tlive\ttrain\n";
        assert!(Manifest::parse(short).is_err());
    }

    #[test]
    fn path_validation() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("exists")).unwrap();
        let m = Manifest::parse("a\texists\tlive\ts\td\ttrain\n").unwrap();
        m.validate_paths(dir.path()).unwrap();
        let m = Manifest::parse("a\tmissing\tlive\ts\td\ttrain\n").unwrap();
        let err = m.validate_paths(dir.path()).unwrap_err().to_string();
        assert!(err.contains("missing"), "{err}");
    }
}
