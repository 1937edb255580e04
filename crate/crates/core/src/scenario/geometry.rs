//! Link angles, distances and delays, plus the user-to-RIS allocation.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::Vector3;
use rand::Rng;

use super::{stream_rng, ScenarioConfig, Side};
use crate::error::{Error, Result};
use crate::SPEED_OF_LIGHT;

/// RNG stream reserved for user-position jitter.
const JITTER_STREAM: u64 = u64::MAX - 1;

/// Angles, distances and delays of every BS-RIS and RIS-user link.
///
/// RIS-side angles follow the UPA convention: spatial frequencies
/// `sin u sin v` along the rows and `cos v` along the columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    /// BS departure angle toward each RIS.
    pub theta_b: Vec<f64>,
    pub u_b: Vec<f64>,
    pub v_b: Vec<f64>,
    pub d_b: Vec<f64>,
    pub t_b: Vec<f64>,
    /// `[r][k]` RIS r to user k.
    pub u_ru: Vec<Vec<f64>>,
    pub v_ru: Vec<Vec<f64>>,
    pub d_ru: Vec<Vec<f64>>,
    pub t_ru: Vec<Vec<f64>>,
    pub sides: Vec<Side>,
}

/// `(sin u sin v, cos v)`.
pub fn spatial_freqs(u: f64, v: f64) -> (f64, f64) {
    (u.sin() * v.sin(), v.cos())
}

impl Geometry {
    pub fn num_ris(&self) -> usize {
        self.theta_b.len()
    }

    pub fn num_users(&self) -> usize {
        self.sides.len()
    }

    pub fn incident(&self, r: usize) -> (f64, f64) {
        spatial_freqs(self.u_b[r], self.v_b[r])
    }

    pub fn departure(&self, r: usize, k: usize) -> (f64, f64) {
        spatial_freqs(self.u_ru[r][k], self.v_ru[r][k])
    }

    pub fn from_config(cfg: &ScenarioConfig) -> Result<Self> {
        let geo = match &cfg.geometry.angles {
            Some(a) => {
                let t_b = a.t_b.clone().unwrap_or_else(|| a.d_b.iter().map(|d| d / SPEED_OF_LIGHT).collect());
                let t_ru = a.t_ru.clone().unwrap_or_else(|| {
                    a.d_ru.iter().map(|row| row.iter().map(|d| d / SPEED_OF_LIGHT).collect()).collect()
                });
                Geometry {
                    theta_b: a.theta_b.clone(),
                    u_b: a.u_b.clone(),
                    v_b: a.v_b.clone(),
                    d_b: a.d_b.clone(),
                    t_b,
                    u_ru: a.u_ru.clone(),
                    v_ru: a.v_ru.clone(),
                    d_ru: a.d_ru.clone(),
                    t_ru,
                    sides: a.sides.clone(),
                }
            }
            None => from_positions(cfg)?,
        };
        geo.validate(cfg.system.num_ris, cfg.system.users)?;
        Ok(geo)
    }

    pub fn validate(&self, num_ris: usize, users: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidGeometry(msg));
        let per_ris = [&self.theta_b, &self.u_b, &self.v_b, &self.d_b, &self.t_b];
        if per_ris.iter().any(|v| v.len() != num_ris) {
            return bad(format!("per-RIS angle lists must have {num_ris} entries"));
        }
        if self.sides.len() != users {
            return bad(format!("sides must list {users} users"));
        }
        for table in [&self.u_ru, &self.v_ru, &self.d_ru, &self.t_ru] {
            if table.len() != num_ris || table.iter().any(|row| row.len() != users) {
                return bad(format!("per-link tables must be {num_ris} x {users}"));
            }
        }
        let in_u = |u: f64| (-FRAC_PI_2..=FRAC_PI_2).contains(&u);
        let in_v = |v: f64| (0.0..=PI).contains(&v);
        for r in 0..num_ris {
            if !in_u(self.theta_b[r]) || !in_u(self.u_b[r]) {
                return bad(format!("RIS {r}: theta_b and u_b must lie in [-pi/2, pi/2]"));
            }
            if !in_v(self.v_b[r]) {
                return bad(format!("RIS {r}: v_b must lie in [0, pi]"));
            }
            if !(self.d_b[r] > 0.0) {
                return bad(format!("RIS {r}: BS distance must be positive"));
            }
            for k in 0..users {
                if !in_u(self.u_ru[r][k]) || !in_v(self.v_ru[r][k]) {
                    return bad(format!("link ({r}, {k}): departure angles out of range"));
                }
                if !(self.d_ru[r][k] > 0.0) {
                    return bad(format!("link ({r}, {k}): distance must be positive"));
                }
            }
        }
        Ok(())
    }
}

fn vec3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

fn unit(a: [f64; 3], name: &str) -> Result<Vector3<f64>> {
    let v = vec3(a);
    let n = v.norm();
    if !(n > 0.0) {
        return Err(Error::InvalidGeometry(format!("{name} must be a nonzero vector")));
    }
    Ok(v / n)
}

/// `(u, v)` of the direction `w` in the RIS frame `(row, col)`.
fn upa_angles(w: &Vector3<f64>, row: &Vector3<f64>, col: &Vector3<f64>) -> (f64, f64) {
    let s = w.dot(row);
    let e = w.dot(col).clamp(-1.0, 1.0);
    let v = e.acos();
    let sv = v.sin();
    let u = if sv < 1e-12 { 0.0 } else { (s / sv).clamp(-1.0, 1.0).asin() };
    (u, v)
}

/// Default users sit on two half-circles around `user_center`: reflection
/// users on the `normal` side, transmission users opposite.
fn default_users(cfg: &ScenarioConfig, row: &Vector3<f64>, normal: &Vector3<f64>) -> Vec<Vector3<f64>> {
    let g = &cfg.geometry;
    let half = cfg.system.users / 2;
    let center = vec3(g.user_center);
    let mut rng = stream_rng(cfg.system.seed, JITTER_STREAM);
    let mut users = Vec::with_capacity(cfg.system.users);
    for side in [1.0, -1.0] {
        for j in 0..half {
            let mut a = PI - PI * (j as f64 + 1.0) / (half as f64 + 1.0);
            if g.user_jitter_rad > 0.0 {
                a += g.user_jitter_rad * rng.random_range(-1.0..=1.0);
            }
            users.push(center + g.user_radius * (a.cos() * row + side * a.sin() * normal));
        }
    }
    users
}

fn from_positions(cfg: &ScenarioConfig) -> Result<Geometry> {
    let g = &cfg.geometry;
    let row = unit(g.ris_row_axis, "ris_row_axis")?;
    let col = unit(g.ris_col_axis, "ris_col_axis")?;
    let normal = unit(g.ris_normal, "ris_normal")?;
    let bs_axis = unit(g.bs_axis, "bs_axis")?;
    if row.dot(&col).abs() > 1e-9 || row.dot(&normal).abs() > 1e-9 || col.dot(&normal).abs() > 1e-9 {
        return Err(Error::InvalidGeometry("RIS row, column and normal axes must be orthogonal".into()));
    }
    let bs = vec3(g.bs_position);
    let users: Vec<Vector3<f64>> = match &g.user_positions {
        Some(p) => p.iter().copied().map(vec3).collect(),
        None => default_users(cfg, &row, &normal),
    };
    let half = users.len() / 2;
    let sides = (0..users.len())
        .map(|k| if k < half { Side::Reflection } else { Side::Transmission })
        .collect();

    let mut geo = Geometry {
        theta_b: vec![],
        u_b: vec![],
        v_b: vec![],
        d_b: vec![],
        t_b: vec![],
        u_ru: vec![],
        v_ru: vec![],
        d_ru: vec![],
        t_ru: vec![],
        sides,
    };
    for (r, &p) in g.ris_positions.iter().enumerate() {
        let ris = vec3(p);
        let to_ris = ris - bs;
        let d = to_ris.norm();
        if !(d > 0.0) {
            return Err(Error::InvalidGeometry(format!("RIS {r} coincides with the BS")));
        }
        geo.theta_b.push((to_ris.dot(&bs_axis) / d).clamp(-1.0, 1.0).asin());
        let (u, v) = upa_angles(&(-to_ris / d), &row, &col);
        geo.u_b.push(u);
        geo.v_b.push(v);
        geo.d_b.push(d);
        geo.t_b.push(d / SPEED_OF_LIGHT);

        let (mut us, mut vs, mut ds, mut ts) = (vec![], vec![], vec![], vec![]);
        for (k, user) in users.iter().enumerate() {
            let w = user - ris;
            let d = w.norm();
            if !(d > 0.0) {
                return Err(Error::InvalidGeometry(format!("user {k} coincides with RIS {r}")));
            }
            let (u, v) = upa_angles(&(w / d), &row, &col);
            us.push(u);
            vs.push(v);
            ds.push(d);
            ts.push(d / SPEED_OF_LIGHT);
        }
        geo.u_ru.push(us);
        geo.v_ru.push(vs);
        geo.d_ru.push(ds);
        geo.t_ru.push(ts);
    }
    Ok(geo)
}

/// RIS r serves `reflection[r]` and `transmission[r]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Allocation {
    pub reflection: Vec<usize>,
    pub transmission: Vec<usize>,
    /// Serving RIS of every user.
    pub ris_of_user: Vec<usize>,
}

impl Allocation {
    pub fn user(&self, r: usize, side: Side) -> usize {
        match side {
            Side::Reflection => self.reflection[r],
            Side::Transmission => self.transmission[r],
        }
    }
}

/// Greedy nearest-boresight matching in RIS index order; ties go to the
/// lowest user index.
pub fn allocate_users(geo: &Geometry, num_ris: usize, users: usize) -> Result<Allocation> {
    if users != 2 * num_ris || geo.num_users() != users || geo.num_ris() != num_ris {
        return Err(Error::config(format!(
            "allocation needs users = 2 * num_ris (got {users} users, {num_ris} RISs)"
        )));
    }
    for side in Side::BOTH {
        let count = geo.sides.iter().filter(|&&s| s == side).count();
        if count != num_ris {
            return Err(Error::config(format!(
                "{count} users on side {} but {num_ris} RISs",
                side.as_str()
            )));
        }
    }
    let off_boresight = |r: usize, k: usize| {
        let (s, e) = geo.departure(r, k);
        (1.0 - s * s - e * e).max(0.0).sqrt().clamp(-1.0, 1.0).acos()
    };
    let mut taken = vec![false; users];
    let mut ris_of_user = vec![usize::MAX; users];
    let mut pick = |r: usize, side: Side| {
        let mut best: Option<(usize, f64)> = None;
        for k in 0..users {
            if taken[k] || geo.sides[k] != side {
                continue;
            }
            let a = off_boresight(r, k);
            if best.is_none_or(|(_, b)| a < b) {
                best = Some((k, a));
            }
        }
        let (k, _) = best.expect("side counts checked above");
        taken[k] = true;
        ris_of_user[k] = r;
        k
    };
    let mut reflection = Vec::with_capacity(num_ris);
    let mut transmission = Vec::with_capacity(num_ris);
    for r in 0..num_ris {
        reflection.push(pick(r, Side::Reflection));
        transmission.push(pick(r, Side::Transmission));
    }
    Ok(Allocation { reflection, transmission, ris_of_user })
}
