use super::{csv_string, ReportError};
use crate::optim::{Evaluation, GridScan, OptimizerTrace};
use serde::Serialize;

/// Cost surface over a 2-axis grid: `cells[i][j]` is the cost at
/// `(k1[i], k2[j])`. Cells are written in shortest round-trip form so a
/// re-parsed matrix reproduces the scan bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Contour {
    pub k1: Vec<f64>,
    pub k2: Vec<f64>,
    pub cells: Vec<Vec<f64>>,
    /// Successive best points of an optimizer run over the same surface.
    pub path: Vec<Evaluation>,
}

/// The evaluations at which the running best improved, in order.
pub fn optimizer_path(trace: &OptimizerTrace) -> Vec<Evaluation> {
    let mut best = f64::INFINITY;
    let mut out = Vec::new();
    for e in &trace.evaluations {
        if e.cost < best {
            best = e.cost;
            out.push(e.clone());
        }
    }
    out
}

pub fn export_contour(scan: &GridScan, path: Option<&OptimizerTrace>) -> Result<Contour, ReportError> {
    if scan.axes.len() != 2 {
        return Err(ReportError::DimensionMismatch { found: scan.axes.len() });
    }
    let (k1, k2) = (scan.axes[0].clone(), scan.axes[1].clone());
    let expected = k1.len() * k2.len();
    let evals = &scan.trace.evaluations;
    if evals.len() != expected {
        return Err(ReportError::IncompleteScan {
            expected,
            found: evals.len(),
        });
    }
    // grid_search visits points with the second axis fastest
    let cells = evals.chunks(k2.len()).map(|row| row.iter().map(|e| e.cost).collect()).collect();
    Ok(Contour {
        k1,
        k2,
        cells,
        path: path.map(optimizer_path).unwrap_or_default(),
    })
}

impl Contour {
    /// `k1\k2` header row of k2 values, then one row per k1 value.
    pub fn to_matrix_csv(&self) -> Result<String, ReportError> {
        csv_string(|w| {
            let mut header = vec!["k1\\k2".to_string()];
            header.extend(self.k2.iter().map(f64::to_string));
            w.write_record(&header)?;
            for (k1, row) in self.k1.iter().zip(&self.cells) {
                let mut rec = vec![k1.to_string()];
                rec.extend(row.iter().map(f64::to_string));
                w.write_record(&rec)?;
            }
            Ok(())
        })
    }

    /// One `k1,k2,cost` row per grid point.
    pub fn to_long_csv(&self) -> Result<String, ReportError> {
        csv_string(|w| {
            w.write_record(["k1", "k2", "cost"])?;
            for (k1, row) in self.k1.iter().zip(&self.cells) {
                for (k2, c) in self.k2.iter().zip(row) {
                    w.write_record([k1.to_string(), k2.to_string(), c.to_string()])?;
                }
            }
            Ok(())
        })
    }

    pub fn path_csv(&self) -> Result<String, ReportError> {
        csv_string(|w| {
            w.write_record(["step", "k1", "k2", "cost"])?;
            for (i, e) in self.path.iter().enumerate() {
                let coord = |d: usize| e.point.get(d).map(f64::to_string).unwrap_or_default();
                w.write_record([i.to_string(), coord(0), coord(1), e.cost.to_string()])?;
            }
            Ok(())
        })
    }

    /// Reads back the output of [`to_matrix_csv`](Self::to_matrix_csv);
    /// the path is not part of the matrix.
    pub fn from_matrix_csv(text: &str) -> Result<Contour, ReportError> {
        let num = |s: &str| s.parse::<f64>().map_err(|_| ReportError::Parse(format!("not a number: {s:?}")));
        let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
        let mut rows = r.records();
        let header = rows.next().ok_or_else(|| ReportError::Parse("empty matrix".into()))??;
        let k2 = header.iter().skip(1).map(num).collect::<Result<Vec<_>, _>>()?;
        let (mut k1, mut cells) = (Vec::new(), Vec::new());
        for row in rows {
            let row = row?;
            let mut it = row.iter();
            k1.push(num(it.next().unwrap_or(""))?);
            let cells_row = it.map(num).collect::<Result<Vec<_>, _>>()?;
            if cells_row.len() != k2.len() {
                return Err(ReportError::Parse("ragged matrix row".into()));
            }
            cells.push(cells_row);
        }
        Ok(Contour {
            k1,
            k2,
            cells,
            path: Vec::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::{grid_search, GridAxis};

    fn bowl(k: &[f64]) -> Result<f64, crate::optim::CostError> {
        Ok((k[0].ln() - 0.7).powi(2) / 3.0 + (k[1].ln() + 0.1).powi(2) * std::f64::consts::PI)
    }

    #[test]
    fn default_axes_give_49_by_49() {
        let scan = grid_search(bowl, &[GridAxis::multiplier_study(); 2]).unwrap();
        let c = export_contour(&scan, None).unwrap();
        assert_eq!((c.k1.len(), c.k2.len()), (49, 49));
        assert_eq!(c.to_long_csv().unwrap().lines().count(), 1 + 2401);
        assert_eq!(c.cells[14][3], bowl(&[2.0, 0.9]).unwrap());
    }

    #[test]
    fn matrix_round_trips_exactly() {
        let scan = grid_search(bowl, &[GridAxis::new(0.6, 1.9, 0.1), GridAxis::new(1.0, 2.0, 0.25)]).unwrap();
        let c = export_contour(&scan, None).unwrap();
        let back = Contour::from_matrix_csv(&c.to_matrix_csv().unwrap()).unwrap();
        assert_eq!(back, c);
        for (a, b) in back.cells.iter().flatten().zip(c.cells.iter().flatten()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn single_cell_and_bad_shapes() {
        let one = grid_search(bowl, &[GridAxis::new(1.0, 1.0, 0.1); 2]).unwrap();
        let c = export_contour(&one, None).unwrap();
        assert_eq!(c.cells, [[bowl(&[1.0, 1.0]).unwrap()]]);

        let line = grid_search(|k: &[f64]| Ok(k[0]), &[GridAxis::new(1.0, 2.0, 0.5)]).unwrap();
        assert!(matches!(export_contour(&line, None), Err(ReportError::DimensionMismatch { found: 1 })));
    }

    #[test]
    fn path_keeps_only_improvements() {
        let trace = OptimizerTrace {
            evaluations: [(1.0, 5.0), (2.0, 3.0), (3.0, 4.0), (4.0, 1.0)]
                .iter()
                .map(|&(x, cost)| Evaluation { point: vec![x, x], cost })
                .collect(),
            iterations_used: 1,
            converged: true,
            termination: crate::optim::Termination::Converged,
            best_point: vec![4.0, 4.0],
            best_cost: 1.0,
        };
        let costs: Vec<f64> = optimizer_path(&trace).iter().map(|e| e.cost).collect();
        assert_eq!(costs, [5.0, 3.0, 1.0]);
    }
}
