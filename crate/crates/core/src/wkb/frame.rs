use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;

use super::{amplitude, bump_normalization, cnorm, potential, CVec3, PacketSpec, Tracer, WkbError};
use crate::fields::FieldSpec;
use crate::flow::IntegratorConfig;
use crate::Vec3;

/// Upper bound on the node count of one frame.
pub const MAX_FRAME_NODES: usize = 4_000_000;

/// Packet fields on a uniform grid covering the transported support.
#[derive(Debug, Clone, Serialize)]
pub struct PacketFrame {
    pub t: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub p: f64,
    pub origin: Vec3,
    pub h: f64,
    pub dims: [usize; 3],
    pub s: Vec<f64>,
    /// Bump normalized to unit L^p norm at t = 0.
    pub phi: Vec<f64>,
    /// Ray wavevector; zero off the support.
    pub xi: Vec<Vec3>,
    /// Ray amplitude; zero off the support.
    pub b: Vec<Vec3>,
    pub a: Vec<CVec3>,
    /// `curl A` by second-order differences (one-sided on the grid faces).
    pub v: Vec<CVec3>,
    pub vv: Vec<CVec3>,
    /// Whether the bump is nonzero on a face node, where `v` used one-sided
    /// differences.
    pub boundary_support: bool,
}

/// Builds the frame at time `t` for one `ε`; the grid spacing is `pk.h`.
pub fn build_packet(
    spec: &FieldSpec,
    pk: &PacketSpec,
    t: f64,
    epsilon: f64,
    cfg: &IntegratorConfig,
) -> Result<PacketFrame, WkbError> {
    let tr = Tracer::new(spec, pk, cfg)?;
    if !(0.0..=pk.t_final).contains(&t) {
        return Err(WkbError::Invalid(format!("t = {t} outside [0, T]")));
    }
    if !(epsilon > 0.0) {
        return Err(WkbError::Invalid("epsilon must be positive".into()));
    }
    let (lo, hi) = tr.support_box(t)?;
    let h = pk.h;
    let dims: [usize; 3] =
        std::array::from_fn(|i| (((hi[i] - lo[i]) / h).ceil() as usize + 1).max(3));
    let total = dims[0]
        .checked_mul(dims[1])
        .and_then(|v| v.checked_mul(dims[2]))
        .unwrap_or(usize::MAX);
    if total > MAX_FRAME_NODES {
        return Err(WkbError::GridTooLarge(total));
    }
    let n = tr.steps_for(t);
    let c = bump_normalization(pk.delta, pk.p);
    let node = |idx: usize| {
        let k = idx % dims[2];
        let j = (idx / dims[2]) % dims[1];
        let i = idx / (dims[1] * dims[2]);
        lo + Vec3::new(i as f64, j as f64, k as f64) * h
    };
    let geos: Vec<_> = (0..total)
        .into_par_iter()
        .map(|idx| {
            let mut g = tr.geo(&node(idx), t, n);
            g.phi *= c;
            g
        })
        .collect();
    let a: Vec<CVec3> = geos.iter().map(|g| potential(g, epsilon, 0.0)).collect();
    let vv: Vec<CVec3> = geos.iter().map(|g| amplitude(g, epsilon, 0.0)).collect();
    let mut frame = PacketFrame {
        t,
        epsilon,
        delta: pk.delta,
        p: pk.p,
        origin: lo,
        h,
        dims,
        s: geos.iter().map(|g| g.s).collect(),
        phi: geos.iter().map(|g| g.phi).collect(),
        xi: geos.iter().map(|g| g.xi).collect(),
        b: geos.iter().map(|g| g.b).collect(),
        v: Vec::new(),
        a,
        vv,
        boundary_support: false,
    };
    frame.v = frame.curl_a();
    frame.boundary_support = (0..total).any(|idx| {
        let [i, j, k] = frame.unindex(idx);
        frame.phi[idx] != 0.0 && frame.on_face(i, j, k, 1)
    });
    Ok(frame)
}

impl PacketFrame {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    pub fn unindex(&self, idx: usize) -> [usize; 3] {
        let k = idx % self.dims[2];
        let j = (idx / self.dims[2]) % self.dims[1];
        [idx / (self.dims[1] * self.dims[2]), j, k]
    }

    pub fn node(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.origin + Vec3::new(i as f64, j as f64, k as f64) * self.h
    }

    /// Whether a node lies within `layer` nodes of a grid face.
    fn on_face(&self, i: usize, j: usize, k: usize, layer: usize) -> bool {
        [i, j, k]
            .iter()
            .zip(self.dims)
            .any(|(&c, n)| c < layer || c + layer >= n)
    }

    fn neighbour(&self, idx: usize, axis: usize, offset: isize) -> usize {
        let mut c = self.unindex(idx);
        c[axis] = (c[axis] as isize + offset) as usize;
        self.index(c[0], c[1], c[2])
    }

    /// Second-order derivative along `axis`, one-sided on the faces.
    fn diff<T, F>(&self, idx: usize, axis: usize, f: F) -> T
    where
        F: Fn(usize) -> T,
        T: std::ops::Sub<Output = T> + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
    {
        let c = self.unindex(idx)[axis];
        let n = self.dims[axis];
        let at = |o: isize| f(self.neighbour(idx, axis, o));
        let inv = 1.0 / (2.0 * self.h);
        if c == 0 {
            (at(1) * 4.0 - at(0) * 3.0 - at(2)) * inv
        } else if c + 1 == n {
            (at(0) * 3.0 - at(-1) * 4.0 + at(-2)) * inv
        } else {
            (at(1) - at(-1)) * inv
        }
    }

    fn curl_a(&self) -> Vec<CVec3> {
        (0..self.len())
            .into_par_iter()
            .map(|idx| {
                let d = |axis: usize, comp: usize| self.diff(idx, axis, |m| self.a[m][comp]);
                [d(1, 2) - d(2, 1), d(2, 0) - d(0, 2), d(0, 1) - d(1, 0)]
            })
            .collect()
    }

    /// max `|b·ξ|` over nodes where the bump is nonzero.
    pub fn max_b_dot_xi(&self) -> f64 {
        (0..self.len())
            .filter(|&i| self.phi[i] != 0.0)
            .map(|i| self.b[i].dot(&self.xi[i]).abs())
            .fold(0.0, f64::max)
    }

    /// max `|∇S − ξ|` with centered differences, over interior support nodes.
    pub fn grad_s_error(&self) -> f64 {
        (0..self.len())
            .filter(|&idx| {
                let [i, j, k] = self.unindex(idx);
                self.phi[idx] != 0.0 && !self.on_face(i, j, k, 1)
            })
            .map(|idx| {
                let g = Vec3::from_fn(|axis, _| self.diff(idx, axis, |m| self.s[m]));
                (g - self.xi[idx]).norm()
            })
            .fold(0.0, f64::max)
    }

    /// max `|div v|` with centered differences over nodes at least two away
    /// from every face (where `v` itself is centered).
    pub fn max_div_v(&self) -> f64 {
        (0..self.len())
            .filter(|&idx| {
                let [i, j, k] = self.unindex(idx);
                !self.on_face(i, j, k, 2)
            })
            .map(|idx| {
                let d = (0..3)
                    .map(|axis| self.diff(idx, axis, |m| self.v[m][axis]))
                    .fold(num_complex::Complex64::new(0.0, 0.0), |a, b| a + b);
                d.norm()
            })
            .fold(0.0, f64::max)
    }

    pub fn max_abs_v(&self) -> f64 {
        self.v.iter().map(cnorm).fold(0.0, f64::max)
    }

    /// Writes the frame as text: `key value` header lines, a `columns` line
    /// and one whitespace-separated record per node in index order.
    pub fn write_text<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "# raystab packet frame v1")?;
        writeln!(w, "t {:e}", self.t)?;
        writeln!(w, "epsilon {:e}", self.epsilon)?;
        writeln!(w, "delta {:e}", self.delta)?;
        writeln!(w, "p {:e}", self.p)?;
        writeln!(
            w,
            "origin {:e} {:e} {:e}",
            self.origin[0], self.origin[1], self.origin[2]
        )?;
        writeln!(w, "spacing {:e}", self.h)?;
        writeln!(w, "dims {} {} {}", self.dims[0], self.dims[1], self.dims[2])?;
        writeln!(w, "boundary_support {}", self.boundary_support)?;
        let mut cols = vec!["i", "j", "k", "S", "phi"];
        let named = |p: &'static str| -> Vec<String> {
            ["x", "y", "z"].iter().map(|c| format!("{p}_{c}")).collect()
        };
        let mut owned: Vec<String> = Vec::new();
        owned.extend(named("xi"));
        owned.extend(named("b"));
        for f in ["A", "v", "V"] {
            for c in ["x", "y", "z"] {
                owned.push(format!("{f}_{c}_re"));
                owned.push(format!("{f}_{c}_im"));
            }
        }
        cols.extend(owned.iter().map(String::as_str));
        writeln!(w, "columns {}", cols.join(" "))?;
        for idx in 0..self.len() {
            let [i, j, k] = self.unindex(idx);
            write!(w, "{i} {j} {k} {:e} {:e}", self.s[idx], self.phi[idx])?;
            for v in [self.xi[idx], self.b[idx]] {
                write!(w, " {:e} {:e} {:e}", v[0], v[1], v[2])?;
            }
            for f in [&self.a[idx], &self.v[idx], &self.vv[idx]] {
                for c in f {
                    write!(w, " {:e} {:e}", c.re, c.im)?;
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }
}
