//! CSV snapshots of the tracking and label-distribution matrices.
//!
//! Layout of a snapshot file:
//!
//! ```text
//! #ldl-matrix,version=1,kind=label_distribution,class_count=4,domain_count=2,committed_epoch=3
//! class,domain,p0,p1,p2,p3
//! 0,0,0.55,0,0.3,0.15
//! ...
//! ```
//!
//! Values are written with the shortest representation that round-trips
//! exactly through `f64`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::engine::LdlEngine;
use crate::error::{LdlError, Result};
use crate::layout::DomainLayout;
use crate::scalar::Scalar;

pub const SNAPSHOT_VERSION: u32 = 1;
const MAGIC: &str = "#ldl-matrix";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixKind {
    Tracking,
    LabelDistribution,
}

impl MatrixKind {
    fn tag(self) -> &'static str {
        match self {
            MatrixKind::Tracking => "tracking",
            MatrixKind::LabelDistribution => "label_distribution",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "tracking" => Some(MatrixKind::Tracking),
            "label_distribution" => Some(MatrixKind::LabelDistribution),
            _ => None,
        }
    }
}

/// A matrix together with the layout it is indexed by.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixSnapshot {
    pub kind: MatrixKind,
    pub layout: DomainLayout,
    pub committed_epoch: usize,
    pub entries: Array2<f64>,
}

impl MatrixSnapshot {
    pub fn of_tracking<T: Scalar>(engine: &LdlEngine<T>) -> Self {
        Self::from_view(MatrixKind::Tracking, engine, engine.tracking().entries())
    }

    pub fn of_labels<T: Scalar>(engine: &LdlEngine<T>) -> Self {
        Self::from_view(MatrixKind::LabelDistribution, engine, engine.labels().entries())
    }

    fn from_view<T: Scalar>(kind: MatrixKind, engine: &LdlEngine<T>, m: ArrayView2<'_, T>) -> Self {
        Self {
            kind,
            layout: engine.layout().clone(),
            committed_epoch: engine.labels().committed_epoch(),
            entries: m.mapv(Scalar::as_f64),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| LdlError::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write_to(&mut out).map_err(|e| LdlError::io(path, e))?;
        out.flush().map_err(|e| LdlError::io(path, e))
    }

    fn write_to(&self, out: &mut impl Write) -> std::io::Result<()> {
        let c = self.layout.class_count();
        writeln!(
            out,
            "{MAGIC},version={SNAPSHOT_VERSION},kind={},class_count={c},domain_count={},committed_epoch={}",
            self.kind.tag(),
            self.layout.domain_count(),
            self.committed_epoch
        )?;
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["class".to_string(), "domain".to_string()];
        header.extend((0..c).map(|j| format!("p{j}")));
        w.write_record(&header)?;
        for (i, row) in self.entries.rows().into_iter().enumerate() {
            let mut rec = vec![i.to_string(), self.layout.domain_of(i).to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| LdlError::io(path, e))?;
        let mut reader = BufReader::new(file);
        let mut first = String::new();
        reader.read_line(&mut first).map_err(|e| LdlError::io(path, e))?;
        let bad = |reason: String| LdlError::format(path, reason);

        let mut fields = first.trim_end().split(',');
        if fields.next() != Some(MAGIC) {
            return Err(bad("missing #ldl-matrix header".into()));
        }
        let mut kind = None;
        let (mut version, mut class_count, mut domain_count, mut epoch) = (None, None, None, None);
        for field in fields {
            let (key, value) = field.split_once('=').ok_or_else(|| bad(format!("bad header field {field:?}")))?;
            let num = || value.parse::<usize>().map_err(|_| bad(format!("bad value for {key}")));
            match key {
                "version" => version = Some(num()?),
                "kind" => kind = MatrixKind::parse(value),
                "class_count" => class_count = Some(num()?),
                "domain_count" => domain_count = Some(num()?),
                "committed_epoch" => epoch = Some(num()?),
                _ => return Err(bad(format!("unknown header key {key}"))),
            }
        }
        if version != Some(SNAPSHOT_VERSION as usize) {
            return Err(bad(format!("unsupported version {version:?}")));
        }
        let kind = kind.ok_or_else(|| bad("missing or unknown kind".into()))?;
        let c = class_count.ok_or_else(|| bad("missing class_count".into()))?;
        let k = domain_count.ok_or_else(|| bad("missing domain_count".into()))?;

        let mut csv = csv::Reader::from_reader(reader);
        let mut phi = Vec::with_capacity(c);
        let mut values = Vec::with_capacity(c * c);
        for (i, rec) in csv.records().enumerate() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            if rec.len() != c + 2 {
                return Err(bad(format!("row {i} has {} fields, expected {}", rec.len(), c + 2)));
            }
            let class: usize = rec[0].parse().map_err(|_| bad(format!("row {i}: bad class")))?;
            if class != i {
                return Err(bad(format!("row {i} labelled as class {class}")));
            }
            phi.push(rec[1].parse().map_err(|_| bad(format!("row {i}: bad domain")))?);
            for f in rec.iter().skip(2) {
                values.push(f.parse::<f64>().map_err(|_| bad(format!("row {i}: bad value {f:?}")))?);
            }
        }
        if phi.len() != c {
            return Err(bad(format!("{} rows, expected {c}", phi.len())));
        }
        let layout = DomainLayout::from_assignment(phi, k)?;
        let entries = Array2::from_shape_vec((c, c), values).map_err(|e| bad(e.to_string()))?;
        Ok(Self { kind, layout, committed_epoch: epoch.unwrap_or(0), entries })
    }

    pub fn entries_as<T: Scalar>(&self) -> Array2<T> {
        self.entries.mapv(T::of)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Redistribution;

    #[test]
    fn roundtrip_is_exact() {
        let layout = DomainLayout::contiguous(&[2, 1, 2]).unwrap();
        let mut e = LdlEngine::<f64>::new(layout).unwrap();
        e.momentum_update(0, &[0.3, 0.1, 1.0 / 3.0, 0.2, 1.0 - 0.3 - 0.1 - 1.0 / 3.0 - 0.2], 0.2).unwrap();
        e.commit_epoch(Redistribution::Ldl3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for snap in [MatrixSnapshot::of_tracking(&e), MatrixSnapshot::of_labels(&e)] {
            let path = dir.path().join("m.csv");
            snap.save(&path).unwrap();
            let back = MatrixSnapshot::load(&path).unwrap();
            assert_eq!(back, snap);
        }
        let back = MatrixSnapshot::load(&dir.path().join("m.csv")).unwrap();
        assert_eq!(back.committed_epoch, 1);
        assert_eq!(back.kind, MatrixKind::LabelDistribution);
        let rebuilt = LdlEngine::<f64>::from_parts(
            back.layout.clone(),
            MatrixSnapshot::of_tracking(&e).entries,
            back.entries_as(),
            back.committed_epoch,
        )
        .unwrap();
        assert_eq!(rebuilt.labels().entries(), e.labels().entries());
    }

    #[test]
    fn header_is_documented_form() {
        let e = LdlEngine::<f64>::new(DomainLayout::contiguous(&[1, 1]).unwrap()).unwrap();
        let mut buf = Vec::new();
        MatrixSnapshot::of_tracking(&e).write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "#ldl-matrix,version=1,kind=tracking,class_count=2,domain_count=2,committed_epoch=0\n\
             class,domain,p0,p1\n0,0,0.5,0.5\n1,1,0.5,0.5\n"
        );
    }

    #[test]
    fn rejects_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "class,domain,p0\n0,0,1\n").unwrap();
        assert!(matches!(MatrixSnapshot::load(&path), Err(LdlError::Format { .. })));
        std::fs::write(
            &path,
            "#ldl-matrix,version=1,kind=tracking,class_count=2,domain_count=2\nclass,domain,p0,p1\n0,0,0.5,0.5\n",
        )
        .unwrap();
        assert!(matches!(MatrixSnapshot::load(&path), Err(LdlError::Format { .. })));
        assert!(matches!(MatrixSnapshot::load(&dir.path().join("missing.csv")), Err(LdlError::Io { .. })));
    }
}
