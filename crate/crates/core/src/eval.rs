//! Normalized mean per-class accuracy, stratified by sensor, polarization and
//! incidence-angle bin.
//!
//! A report holds one cell per column of the results grid
//! (`GRDH … Large, Overall`). Each cell keeps raw counts plus the ship and
//! no-ship recalls and their mean. A recall is `None` when the cell has no
//! samples of that class.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{AngleBin, ChipRecord, Label, Polarization, Sensor};
use crate::error::{Error, Result};

pub const COLUMNS: [&str; 11] = [
    "GRDH", "GRDM", "SCNA", "HH", "HV", "VV", "VH", "Small", "Medium", "Large", "Overall",
];

pub const CSV_HEADER: [&str; 13] = [
    "training", "class", "GRDH", "GRDM", "SCNA", "HH", "HV", "VV", "VH", "Small", "Medium", "Large", "Overall",
];

/// Rendered in CSV for a recall that is undefined.
pub const EMPTY_CELL: &str = "—";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCount {
    pub correct: usize,
    pub total: usize,
}

impl ClassCount {
    pub fn recall(&self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }

    fn add(&mut self, correct: bool) {
        self.total += 1;
        self.correct += usize::from(correct);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub stratum: String,
    pub ship: ClassCount,
    pub no_ship: ClassCount,
    pub recall_ship: Option<f64>,
    pub recall_no_ship: Option<f64>,
    pub overall: Option<f64>,
}

impl Cell {
    fn new(stratum: &str) -> Cell {
        Cell {
            stratum: stratum.to_string(),
            ship: ClassCount::default(),
            no_ship: ClassCount::default(),
            recall_ship: None,
            recall_no_ship: None,
            overall: None,
        }
    }

    fn finish(&mut self) {
        self.recall_ship = self.ship.recall();
        self.recall_no_ship = self.no_ship.recall();
        self.overall = mean_per_class_accuracy(self.recall_ship, self.recall_no_ship);
    }

    pub fn samples(&self) -> usize {
        self.ship.total + self.no_ship.total
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Row label, e.g. "Only EO" or "TL to SAR".
    pub training: String,
    pub seed: Option<u64>,
    /// One cell per entry of [`COLUMNS`], in that order.
    pub cells: Vec<Cell>,
}

impl EvalReport {
    pub fn cell(&self, stratum: &str) -> Option<&Cell> {
        self.cells.iter().find(|c| c.stratum == stratum)
    }

    pub fn overall(&self) -> &Cell {
        self.cell("Overall").expect("report always has an Overall cell")
    }
}

/// `(recall_ship, recall_no_ship)`; each is `None` when that class is absent.
pub fn per_class_recall(predictions: &[Label], labels: &[Label]) -> Result<(Option<f64>, Option<f64>)> {
    if predictions.len() != labels.len() {
        return Err(Error::dim("per_class_recall", &[predictions.len()], &[labels.len()]));
    }
    let (mut ship, mut no_ship) = (ClassCount::default(), ClassCount::default());
    for (&p, &l) in predictions.iter().zip(labels) {
        match l {
            Label::Ship => ship.add(p == l),
            Label::NoShip => no_ship.add(p == l),
        }
    }
    Ok((ship.recall(), no_ship.recall()))
}

/// Mean of the defined per-class recalls.
pub fn mean_per_class_accuracy(recall_ship: Option<f64>, recall_no_ship: Option<f64>) -> Option<f64> {
    match (recall_ship, recall_no_ship) {
        (Some(a), Some(b)) => Some((a + b) / 2.0),
        (a, b) => a.or(b),
    }
}

fn column_of_sensor(s: Sensor) -> usize {
    match s {
        Sensor::Grdh => 0,
        Sensor::Grdm => 1,
        Sensor::Scna => 2,
    }
}

fn column_of_polarization(p: Polarization) -> usize {
    match p {
        Polarization::Hh => 3,
        Polarization::Hv => 4,
        Polarization::Vv => 5,
        Polarization::Vh => 6,
    }
}

fn column_of_angle(a: AngleBin) -> usize {
    match a {
        AngleBin::Small => 7,
        AngleBin::Medium => 8,
        AngleBin::Large => 9,
    }
}

/// Every record lands in exactly one sensor, polarization and angle cell,
/// and in Overall. Records without attributes (EO) only count toward Overall,
/// which is allowed only when no record has attributes.
pub fn stratified_report(predictions: &[Label], records: &[ChipRecord], training: &str) -> Result<EvalReport> {
    if predictions.len() != records.len() {
        return Err(Error::dim("stratified_report", &[predictions.len()], &[records.len()]));
    }
    let any_sar = records.iter().any(|r| r.attributes.is_some());
    let mut cells: Vec<Cell> = COLUMNS.iter().map(|c| Cell::new(c)).collect();
    for (&pred, rec) in predictions.iter().zip(records) {
        let correct = pred == rec.label;
        let mut columns = vec![COLUMNS.len() - 1];
        match (&rec.attributes, any_sar) {
            (Some(a), _) => columns.extend([
                column_of_sensor(a.sensor),
                column_of_polarization(a.polarization),
                column_of_angle(a.angle_bin()?),
            ]),
            (None, true) => {
                return Err(Error::Data(format!("SAR test record {} is missing its attributes", rec.id)));
            }
            (None, false) => {}
        }
        for c in columns {
            match rec.label {
                Label::Ship => cells[c].ship.add(correct),
                Label::NoShip => cells[c].no_ship.add(correct),
            }
        }
    }
    cells.iter_mut().for_each(Cell::finish);
    Ok(EvalReport { training: training.to_string(), seed: None, cells })
}

/// Round half up to two decimals. The small bias absorbs binary
/// representation error, so 0.495 renders as 0.50.
pub fn format_two_decimals(v: f64) -> String {
    let cents = (v * 100.0 + 0.5 + 1e-9).floor();
    format!("{:.2}", cents / 100.0)
}

fn render(v: Option<f64>) -> String {
    v.map_or_else(|| EMPTY_CELL.to_string(), format_two_decimals)
}

/// Three rows (Ship, No ship, Overall) per report.
pub fn write_csv(reports: &[EvalReport], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_HEADER)?;
    for report in reports {
        if report.cells.len() != COLUMNS.len() {
            return Err(Error::Data(format!("report {:?} has {} cells", report.training, report.cells.len())));
        }
        for (class, pick) in [
            ("Ship", (|c: &Cell| c.recall_ship) as fn(&Cell) -> Option<f64>),
            ("No ship", |c: &Cell| c.recall_no_ship),
            ("Overall", |c: &Cell| c.overall),
        ] {
            let mut row = vec![report.training.clone(), class.to_string()];
            row.extend(report.cells.iter().map(|c| render(pick(c))));
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json(report: &EvalReport, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json(path: &Path) -> Result<EvalReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
