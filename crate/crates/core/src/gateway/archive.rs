//! Received files kept as raw bytes next to a tab-separated index:
//! `name<TAB>size<TAB>crc_hex<TAB>unix_ms` per line.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::GatewayError;
use crate::transport::crc16;

pub const INDEX_FILE: &str = "index.tsv";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchivedFile {
    /// Name under which the file is stored; repeats get a `.vN` suffix.
    pub name: String,
    pub bytes: Vec<u8>,
    pub crc: u16,
    pub received_at_ms: u64,
}

impl ArchivedFile {
    pub fn verify(&self) -> bool {
        crc16(&self.bytes) == self.crc
    }

    pub fn index_line(&self) -> String {
        format!(
            "{}\t{}\t{:04x}\t{}",
            self.name,
            self.bytes.len(),
            self.crc,
            self.received_at_ms
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct Archive {
    root: Option<PathBuf>,
    files: Vec<ArchivedFile>,
}

impl Archive {
    pub fn in_memory() -> Self {
        Archive::default()
    }

    /// Use `root` as the store, loading anything already indexed there.
    pub fn open(root: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root)?;
        let mut a = Archive {
            root: Some(root),
            files: Vec::new(),
        };
        a.files = a.load_index()?;
        Ok(a)
    }

    /// Read an existing store without creating anything.
    pub fn load(root: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let a = Archive {
            root: Some(root.as_ref().to_path_buf()),
            files: Vec::new(),
        };
        let files = a.load_index()?;
        Ok(Archive { files, ..a })
    }

    fn load_index(&self) -> Result<Vec<ArchivedFile>, GatewayError> {
        let root = self.root.as_ref().expect("disk archive");
        let index = root.join(INDEX_FILE);
        if !index.exists() {
            return Ok(Vec::new());
        }
        let text = fs::read_to_string(&index)?;
        let mut files = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let bad = || GatewayError::MalformedIndex { line: i + 1 };
            let f: Vec<&str> = line.split('\t').collect();
            let [name, size, crc, at] = f[..] else {
                return Err(bad());
            };
            let size: usize = size.parse().map_err(|_| bad())?;
            let crc = u16::from_str_radix(crc, 16).map_err(|_| bad())?;
            let received_at_ms = at.parse().map_err(|_| bad())?;
            let bytes = fs::read(root.join(name))?;
            if bytes.len() != size {
                return Err(GatewayError::Corrupt(name.to_string()));
            }
            files.push(ArchivedFile {
                name: name.to_string(),
                bytes,
                crc,
                received_at_ms,
            });
        }
        Ok(files)
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    fn unique_name(&self, name: &str) -> String {
        if !self.contains(name) {
            return name.to_string();
        }
        (2..)
            .map(|v| format!("{name}.v{v}"))
            .find(|n| !self.contains(n))
            .expect("unbounded")
    }

    /// Store a verified file and return the name it was stored under.
    pub fn store(&mut self, name: &str, bytes: Vec<u8>, received_at_ms: u64) -> Result<String, GatewayError> {
        let stored = self.unique_name(name);
        let file = ArchivedFile {
            name: stored.clone(),
            crc: crc16(&bytes),
            bytes,
            received_at_ms,
        };
        if let Some(root) = &self.root {
            fs::write(root.join(&stored), &file.bytes)?;
            let mut idx = fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(root.join(INDEX_FILE))?;
            writeln!(idx, "{}", file.index_line())?;
        }
        self.files.push(file);
        Ok(stored)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.files.iter().any(|f| f.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&ArchivedFile> {
        self.files.iter().find(|f| f.name == name)
    }

    /// Files in order of arrival.
    pub fn files(&self) -> &[ArchivedFile] {
        &self.files
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    /// Names whose stored bytes no longer match their checksum.
    pub fn verify(&self) -> Vec<String> {
        self.files
            .iter()
            .filter(|f| !f.verify())
            .map(|f| f.name.clone())
            .collect()
    }

    /// Write an in-memory archive out to `root` in the on-disk layout.
    pub fn export(&self, root: impl AsRef<Path>) -> Result<(), GatewayError> {
        let root = root.as_ref();
        fs::create_dir_all(root)?;
        let mut index = String::new();
        for f in &self.files {
            fs::write(root.join(&f.name), &f.bytes)?;
            index.push_str(&f.index_line());
            index.push('\n');
        }
        fs::write(root.join(INDEX_FILE), index)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn versions_and_disk_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = Archive::open(dir.path()).unwrap();
        assert_eq!(a.store("LOG0.BIN", vec![1, 2], 10).unwrap(), "LOG0.BIN");
        assert_eq!(a.store("LOG0.BIN", vec![3], 11).unwrap(), "LOG0.BIN.v2");
        assert_eq!(a.store("LOG0.BIN", vec![], 12).unwrap(), "LOG0.BIN.v3");
        let b = Archive::load(dir.path()).unwrap();
        assert_eq!(b.files(), a.files());
        assert!(b.verify().is_empty());
        let idx = fs::read_to_string(dir.path().join(INDEX_FILE)).unwrap();
        assert_eq!(
            idx.lines().next().unwrap(),
            format!("LOG0.BIN\t2\t{:04x}\t10", crc16(&[1, 2]))
        );
    }

    #[test]
    fn tampered_store_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = Archive::open(dir.path()).unwrap();
        a.store("X", vec![1, 2, 3], 0).unwrap();
        fs::write(dir.path().join("X"), [1, 2, 4]).unwrap();
        assert_eq!(Archive::load(dir.path()).unwrap().verify(), vec!["X".to_string()]);
        fs::write(dir.path().join("X"), [1]).unwrap();
        assert!(matches!(Archive::load(dir.path()), Err(GatewayError::Corrupt(_))));
        fs::write(dir.path().join(INDEX_FILE), "X\tnope\n").unwrap();
        assert!(matches!(
            Archive::load(dir.path()),
            Err(GatewayError::MalformedIndex { line: 1 })
        ));
    }
}
