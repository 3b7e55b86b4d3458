use std::fs;
use std::path::Path;

use crate::dataset::synth::ShipBox;
use crate::dataset::{encode_png, ChipRecord, ChipSource, SarAttributes, MAX_INCIDENCE, MIN_INCIDENCE};
use crate::error::{Error, Result};

pub const MANIFEST_HEADER: [&str; 5] = ["path", "label", "sensor", "polarization", "incidence_angle"];
const BOXES_HEADER: [&str; 5] = ["path", "x", "y", "w", "h"];

/// Read `<dir>/manifest.csv`. Image paths are checked for existence but not decoded.
pub fn load_manifest(dir: &Path) -> Result<Vec<ChipRecord>> {
    let file = dir.join("manifest.csv");
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(&file)
        .map_err(|e| Error::Data(format!("{}: {e}", file.display())))?;
    let header = reader.headers()?.clone();
    if header.iter().ne(MANIFEST_HEADER) {
        return Err(Error::Row {
            file,
            row: 1,
            msg: format!("header must be `{}`", MANIFEST_HEADER.join(",")),
        });
    }

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let fail = |msg: String| Error::Row { file: file.clone(), row: line, msg };

        let id = row[0].to_string();
        let path = dir.join(&id);
        if !path.is_file() {
            return Err(fail(format!("image {} does not exist", path.display())));
        }
        let label = row[1].parse().map_err(fail)?;
        let attributes = match (&row[2], &row[3], &row[4]) {
            ("", "", "") => None,
            (sensor, pol, angle) if !sensor.is_empty() && !pol.is_empty() && !angle.is_empty() => {
                let incidence_angle: f64 =
                    angle.parse().map_err(|_| fail(format!("invalid incidence angle {angle:?}")))?;
                if !(MIN_INCIDENCE..=MAX_INCIDENCE).contains(&incidence_angle) {
                    return Err(fail(format!("incidence angle {incidence_angle} outside [19, 47]")));
                }
                Some(SarAttributes {
                    sensor: sensor.parse().map_err(fail)?,
                    polarization: pol.parse().map_err(fail)?,
                    incidence_angle,
                })
            }
            _ => return Err(fail("SAR attributes must be all present or all empty".into())),
        };
        records.push(ChipRecord { id, source: ChipSource::File(path), label, attributes });
    }
    Ok(records)
}

/// Write `records` as `<dir>/manifest.csv` plus images, and `boxes.csv` when
/// `boxes` is given. Each record's `id` is its path under `dir`.
pub fn write_dataset(dir: &Path, records: &[ChipRecord], boxes: Option<&[ShipBox]>) -> Result<()> {
    fs::create_dir_all(dir.join("images")).map_err(|e| Error::io(dir, e))?;
    let manifest = dir.join("manifest.csv");
    let mut w = csv::Writer::from_path(&manifest)?;
    w.write_record(MANIFEST_HEADER)?;
    for rec in records {
        let target = dir.join(&rec.id);
        if let Some(parent) = target.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        match &rec.source {
            ChipSource::Pixels(img) => encode_png(img, &target)?,
            ChipSource::File(src) if src != &target => {
                fs::copy(src, &target).map_err(|e| Error::io(src, e))?;
            }
            ChipSource::File(_) => {}
        }
        let (sensor, pol, angle) = match &rec.attributes {
            Some(a) => (a.sensor.token().to_string(), a.polarization.token().to_string(), a.incidence_angle.to_string()),
            None => Default::default(),
        };
        w.write_record([rec.id.as_str(), rec.label.token(), &sensor, &pol, &angle])?;
    }
    w.flush().map_err(|e| Error::io(&manifest, e))?;

    if let Some(boxes) = boxes {
        let path = dir.join("boxes.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(BOXES_HEADER)?;
        for b in boxes {
            w.write_record([b.id.clone(), b.x.to_string(), b.y.to_string(), b.w.to_string(), b.h.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Read `<dir>/boxes.csv`.
pub fn load_boxes(dir: &Path) -> Result<Vec<ShipBox>> {
    let file = dir.join("boxes.csv");
    let mut reader = csv::Reader::from_path(&file).map_err(|e| Error::Data(format!("{}: {e}", file.display())))?;
    let mut boxes = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let num = |i: usize| {
            row[i].parse::<usize>().map_err(|_| Error::Row {
                file: file.clone(),
                row: line,
                msg: format!("invalid box field {:?}", &row[i]),
            })
        };
        boxes.push(ShipBox { id: row[0].to_string(), x: num(1)?, y: num(2)?, w: num(3)?, h: num(4)? });
    }
    Ok(boxes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, Label, Polarization, RawImage, Sensor, SyntheticConfig};

    fn write_manifest(dir: &Path, body: &str) {
        fs::create_dir_all(dir.join("images")).unwrap();
        fs::write(dir.join("manifest.csv"), format!("{}\n{body}", MANIFEST_HEADER.join(","))).unwrap();
    }

    fn touch_image(dir: &Path, name: &str) {
        fs::create_dir_all(dir.join("images")).unwrap();
        encode_png(&RawImage::new(2, 2, 1, vec![0; 4]).unwrap(), &dir.join("images").join(name)).unwrap();
    }

    #[test]
    fn empty_manifest_gives_no_records() {
        let dir = tempfile::tempdir().unwrap();
        write_manifest(dir.path(), "");
        assert!(load_manifest(dir.path()).unwrap().is_empty());
    }

    #[test]
    fn parses_sar_row() {
        let dir = tempfile::tempdir().unwrap();
        touch_image(dir.path(), "a.png");
        touch_image(dir.path(), "b.png");
        write_manifest(dir.path(), "images/a.png,ship,SCNA,HH,30.5\nimages/b.png,no_ship,,,\n");
        let recs = load_manifest(dir.path()).unwrap();
        let a = recs[0].attributes.unwrap();
        assert_eq!(recs[0].label, Label::Ship);
        assert_eq!((a.sensor, a.polarization, a.incidence_angle), (Sensor::Scna, Polarization::Hh, 30.5));
        assert_eq!(a.angle_bin().unwrap(), crate::dataset::AngleBin::Medium);
        assert!(recs[1].attributes.is_none());
    }

    #[test]
    fn row_errors_carry_the_row() {
        let dir = tempfile::tempdir().unwrap();
        touch_image(dir.path(), "a.png");
        for (body, needle) in [
            ("images/a.png,ship,GRDX,HH,30\n", "sensor"),
            ("images/a.png,ship,GRDH,HH,50\n", "outside"),
            ("images/missing.png,ship,GRDH,HH,30\n", "does not exist"),
            ("images/a.png,boat,,,\n", "label"),
            ("images/a.png,ship,GRDH,,30\n", "all present"),
        ] {
            write_manifest(dir.path(), body);
            let err = load_manifest(dir.path()).unwrap_err();
            match &err {
                Error::Row { row, msg, .. } => {
                    assert_eq!(*row, 2, "{err}");
                    assert!(msg.contains(needle), "{msg}");
                }
                other => panic!("expected row error, got {other}"),
            }
        }
    }

    #[test]
    fn synthetic_dataset_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let set = generate_synthetic(&SyntheticConfig::sar(24, 3, 4, 5)).unwrap();
        write_dataset(dir.path(), &set.records, Some(&set.boxes)).unwrap();
        let loaded = load_manifest(dir.path()).unwrap();
        assert_eq!(loaded.len(), set.records.len());
        for (a, b) in loaded.iter().zip(&set.records) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.label, b.label);
            assert_eq!(a.attributes, b.attributes);
            assert_eq!(a.image().unwrap(), b.image().unwrap());
        }
        assert_eq!(load_boxes(dir.path()).unwrap(), set.boxes);

        // Rewriting the loaded records reproduces the manifest byte for byte.
        let before = fs::read(dir.path().join("manifest.csv")).unwrap();
        write_dataset(dir.path(), &loaded, None).unwrap();
        assert_eq!(fs::read(dir.path().join("manifest.csv")).unwrap(), before);
    }
}
