//! `HLMV` binary vector files.
//!
//! Layout, little-endian: magic `HLMV`, `u32` version, `u32` dim, `u64` count,
//! then `count` ids (`u32` byte length + UTF-8), then the `count × dim` `f32`
//! matrix in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{EmbedError, VectorStore};

pub const MAGIC: &[u8; 4] = b"HLMV";
pub const VERSION: u32 = 1;

impl VectorStore<f32> {
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<(), EmbedError> {
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&(self.dim as u32).to_le_bytes())?;
        out.write_all(&(self.ids.len() as u64).to_le_bytes())?;
        for id in &self.ids {
            out.write_all(&(id.len() as u32).to_le_bytes())?;
            out.write_all(id.as_bytes())?;
        }
        for v in &self.matrix {
            out.write_all(&v.to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), EmbedError> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn read_from<R: Read>(input: R) -> Result<Self, EmbedError> {
        let mut r = Counting { inner: input, offset: 0 };
        let mut magic = [0u8; 4];
        r.fill(&mut magic, "magic")?;
        if &magic != MAGIC {
            return Err(EmbedError::Format {
                expected: format!("magic {:?}", String::from_utf8_lossy(MAGIC)),
                found: format!("magic {:?}", String::from_utf8_lossy(&magic)),
            });
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(EmbedError::Format {
                expected: format!("version {VERSION}"),
                found: format!("version {version}"),
            });
        }
        let dim = r.u32("dim")? as usize;
        let count = r.u64("count")? as usize;

        let mut ids = Vec::with_capacity(count.min(1 << 20));
        for i in 0..count {
            let len = r.u32(&format!("length of id {i}"))? as usize;
            let mut bytes = vec![0u8; len];
            r.fill(&mut bytes, &format!("id {i}"))?;
            let id = String::from_utf8(bytes).map_err(|_| EmbedError::Format {
                expected: "UTF-8 id".into(),
                found: format!("invalid UTF-8 in id {i}"),
            })?;
            ids.push(id);
        }

        let mut matrix = Vec::with_capacity(count.saturating_mul(dim).min(1 << 28));
        let mut row = vec![0u8; dim * 4];
        for i in 0..count {
            r.fill(&mut row, &format!("matrix row {i}"))?;
            matrix.extend(
                row.chunks_exact(4)
                    .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            );
        }
        let mut probe = [0u8; 1];
        if r.inner.read(&mut probe)? != 0 {
            return Err(EmbedError::Format {
                expected: format!("end of file after {} bytes", r.offset),
                found: "trailing bytes".into(),
            });
        }
        VectorStore::from_matrix(ids, matrix, dim)
    }

    pub fn load(path: &Path) -> Result<Self, EmbedError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }

    /// Loads a file and checks its width.
    pub fn load_with_dim(path: &Path, dim: usize) -> Result<Self, EmbedError> {
        let store = Self::load(path)?;
        if store.dim() != dim {
            return Err(EmbedError::DimMismatch {
                expected: dim,
                found: store.dim(),
            });
        }
        Ok(store)
    }
}

struct Counting<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Counting<R> {
    fn fill(&mut self, buf: &mut [u8], what: &str) -> Result<(), EmbedError> {
        let mut done = 0;
        while done < buf.len() {
            match self.inner.read(&mut buf[done..]) {
                Ok(0) => {
                    return Err(EmbedError::Truncated {
                        offset: self.offset + done as u64,
                        what: what.to_string(),
                    })
                }
                Ok(n) => done += n,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn u32(&mut self, what: &str) -> Result<u32, EmbedError> {
        let mut b = [0u8; 4];
        self.fill(&mut b, what)?;
        Ok(u32::from_le_bytes(b))
    }

    fn u64(&mut self, what: &str) -> Result<u64, EmbedError> {
        let mut b = [0u8; 8];
        self.fill(&mut b, what)?;
        Ok(u64::from_le_bytes(b))
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn sample() -> VectorStore<f32> {
        VectorStore::from_rows(
            vec![
                ("alpha".into(), vec![1.0, -0.0, 3.5]),
                ("β".into(), vec![f32::MIN_POSITIVE, 1e-40, -2.25]),
                ("c".into(), vec![0.1, 0.2, 0.3]),
            ],
            3,
        )
        .unwrap()
    }

    fn bytes(store: &VectorStore<f32>) -> Vec<u8> {
        let mut buf = Vec::new();
        store.write_to(&mut buf).unwrap();
        buf
    }

    #[test]
    fn empty_store_roundtrip() {
        let empty = VectorStore::<f32>::empty(768);
        let buf = bytes(&empty);
        assert_eq!(buf.len(), 4 + 4 + 4 + 8);
        let back = VectorStore::read_from(buf.as_slice()).unwrap();
        assert!(back.is_empty());
        assert_eq!(back.dim(), 768);
    }

    #[test]
    fn header_layout() {
        let buf = bytes(&sample());
        assert_eq!(&buf[..4], b"HLMV");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 3);
        assert_eq!(u64::from_le_bytes(buf[12..20].try_into().unwrap()), 3);
    }

    #[test]
    fn roundtrip_is_bitwise() {
        let store = sample();
        let back = VectorStore::read_from(bytes(&store).as_slice()).unwrap();
        assert_eq!(back.ids(), store.ids());
        let a: Vec<u32> = store.matrix().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u32> = back.matrix().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn truncation_names_offset() {
        let store = sample();
        let buf = bytes(&store);
        let ids_len: usize = store.ids().iter().map(|id| 4 + id.len()).sum();
        let matrix_start = 20 + ids_len;
        // Cut in the middle of row 1.
        let cut = matrix_start + 3 * 4 + 6;
        match VectorStore::read_from(&buf[..cut]) {
            Err(EmbedError::Truncated { offset, what }) => {
                assert_eq!(offset, cut as u64);
                assert_eq!(what, "matrix row 1");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_magic_and_version() {
        let mut buf = bytes(&sample());
        buf[0] = b'X';
        assert!(matches!(
            VectorStore::read_from(buf.as_slice()),
            Err(EmbedError::Format { .. })
        ));
        let mut buf = bytes(&sample());
        buf[4] = 2;
        match VectorStore::read_from(buf.as_slice()) {
            Err(EmbedError::Format { expected, found }) => {
                assert_eq!(expected, "version 1");
                assert_eq!(found, "version 2");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn load_with_dim_checks_width() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.hlmv");
        sample().save(&path).unwrap();
        assert!(VectorStore::load_with_dim(&path, 3).is_ok());
        assert!(matches!(
            VectorStore::load_with_dim(&path, 768),
            Err(EmbedError::DimMismatch { expected: 768, found: 3 })
        ));
    }

    proptest! {
        #[test]
        fn arbitrary_roundtrip(rows in proptest::collection::vec(
            ("[a-z0-9]{1,12}", proptest::collection::vec(-1e30f32..1e30, 4)), 0..20))
        {
            let mut seen = std::collections::HashSet::new();
            let rows: Vec<_> = rows.into_iter().filter(|(id, _)| seen.insert(id.clone())).collect();
            let store = VectorStore::from_rows(rows, 4).unwrap();
            let back = VectorStore::read_from(bytes(&store).as_slice()).unwrap();
            prop_assert_eq!(bytes(&back), bytes(&store));
        }
    }
}
