use std::io::{self, Write};

use nalgebra::DVector;

use crate::linalg::Mat;

/// Recorded closed-loop run on a uniform grid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimTrace {
    pub t: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub x_m: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub e_y: Vec<DVector<f64>>,
    /// Empty for non-adaptive controllers.
    pub theta: Vec<Mat>,
    pub k: Vec<Mat>,
    /// Present when a Lyapunov function was supplied.
    pub v: Option<Vec<f64>>,
    /// Integration steps on which `V` rose by more than `tol_V dt`.
    pub vdot_violations: usize,
    /// Largest per-step increase of `V`.
    pub max_violation: f64,
    pub diverged: bool,
    /// Time at which the run was truncated.
    pub diverged_at: Option<f64>,
    pub dt: f64,
    /// Integration steps taken per recorded interval.
    pub substeps: usize,
    /// Largest `||x||` over every integration step, not only recorded rows.
    pub peak_state_norm: f64,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn ey_norms(&self) -> Vec<f64> {
        self.e_y.iter().map(|e| e.norm()).collect()
    }

    pub fn peak_ey_norm(&self) -> f64 {
        self.ey_norms().into_iter().fold(0.0, f64::max)
    }

    /// Largest `||e_y||` over the last `fraction` of the recorded horizon.
    pub fn final_window_ey_norm(&self, fraction: f64) -> f64 {
        let Some(&t_end) = self.t.last() else {
            return 0.0;
        };
        let start = t_end * (1.0 - fraction);
        self.t
            .iter()
            .zip(&self.e_y)
            .filter(|(t, _)| **t >= start)
            .map(|(_, e)| e.norm())
            .fold(0.0, f64::max)
    }

    pub fn csv_header(&self) -> String {
        let mut cols = vec!["t".to_string()];
        let dims = |v: &Vec<DVector<f64>>| v.first().map(|x| x.len()).unwrap_or(0);
        cols.extend((1..=dims(&self.x)).map(|i| format!("x_{i}")));
        cols.extend((1..=dims(&self.x_m)).map(|i| format!("xm_{i}")));
        cols.extend((1..=dims(&self.u)).map(|i| format!("u_{i}")));
        cols.extend((1..=dims(&self.e_y)).map(|i| format!("ey_{i}")));
        if self.v.is_some() {
            cols.push("V".into());
        }
        cols.join(",")
    }

    /// CSV with 17 significant digits per value.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", self.csv_header())?;
        let mut line = String::new();
        for i in 0..self.t.len() {
            line.clear();
            line.push_str(&format!("{:.16e}", self.t[i]));
            for v in self.x[i]
                .iter()
                .chain(self.x_m[i].iter())
                .chain(self.u[i].iter())
                .chain(self.e_y[i].iter())
            {
                line.push_str(&format!(",{v:.16e}"));
            }
            if let Some(v) = &self.v {
                line.push_str(&format!(",{:.16e}", v[i]));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV is ASCII")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn header_and_round_trip() {
        let tr = SimTrace {
            t: vec![0.0, 0.1],
            x: vec![dvector![1.0 / 3.0, 2.0]; 2],
            x_m: vec![dvector![0.0, 0.0]; 2],
            u: vec![dvector![1.0]; 2],
            e_y: vec![dvector![0.5]; 2],
            v: Some(vec![1.0, 0.5]),
            ..Default::default()
        };
        let csv = tr.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,x_1,x_2,xm_1,xm_2,u_1,ey_1,V");
        let first: Vec<f64> = lines.next().unwrap().split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(first[1], 1.0 / 3.0);
        assert_eq!(first.len(), 8);
    }
}
