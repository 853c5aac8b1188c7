//! Line-delimited fact files.
//!
//! ```text
//! # mobikg-pkg v1
//! u1,visit,p7,1583020800,1583024400,0.75
//! bbox[22.5;88.3;22.51;88.32],hotspot,{r001c002|r001c003},1583020800,-,25
//! ```
//!
//! Floats are written in Rust's shortest round-trip form, so a load after a
//! save reproduces every value bit for bit.

use std::io::{BufRead, Write};

use super::{Entity, Interval, Pkg, PkgError, Relation, TemporalFact};

pub const PKG_VERSION: u32 = 1;
pub const PKG_HEADER: &str = "# mobikg-pkg v1";

impl Pkg {
    pub fn save<W: Write>(&self, mut w: W) -> Result<(), PkgError> {
        writeln!(w, "{PKG_HEADER}")?;
        for f in self.facts() {
            let end = f.interval.end.map_or_else(|| "-".to_string(), |e| e.to_string());
            writeln!(w, "{},{},{},{},{},{}", f.subject, f.relation, f.object, f.interval.start, end, f.feature)?;
        }
        Ok(())
    }

    pub fn load<R: BufRead>(r: R) -> Result<Pkg, PkgError> {
        let mut lines = r.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim_end() != PKG_HEADER {
            return Err(PkgError::Version(header));
        }
        let mut pkg = Pkg::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            let lineno = i + 2;
            if line.trim().is_empty() {
                continue;
            }
            let fact = parse_line(&line).map_err(|e| PkgError::Parse { line: lineno, msg: e.to_string() })?;
            pkg.assert_fact(fact).map_err(|e| PkgError::Parse { line: lineno, msg: e.to_string() })?;
        }
        Ok(pkg)
    }

    pub fn save_to_path(&self, path: &std::path::Path) -> Result<(), PkgError> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.save(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load_from_path(path: &std::path::Path) -> Result<Pkg, PkgError> {
        let file = std::fs::File::open(path)?;
        Pkg::load(std::io::BufReader::new(file))
    }
}

fn parse_line(line: &str) -> Result<TemporalFact, PkgError> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != 6 {
        return Err(PkgError::InvalidFact(format!("expected 6 fields, found {}", fields.len())));
    }
    let num = |s: &str, what: &str| {
        s.parse::<i64>().map_err(|_| PkgError::InvalidFact(format!("bad {what} {s:?}")))
    };
    let subject = Entity::parse(fields[0])?;
    let relation: Relation = fields[1].parse()?;
    let object = Entity::parse(fields[2])?;
    let start = num(fields[3], "t1")?;
    let end = if fields[4] == "-" { None } else { Some(num(fields[4], "t2")?) };
    let feature: f64 =
        fields[5].parse().map_err(|_| PkgError::InvalidFact(format!("bad feature {:?}", fields[5])))?;
    TemporalFact::new(subject, relation, object, Interval { start, end }, feature)
}
