use serde::{Deserialize, Serialize};

use super::fornberg::fd_weights;
use crate::error::{LabError, Result};
use crate::scalar::{lit, Real};

/// Descriptor of a power-law graded radial mesh: edges `r_k = r_max (k/N)^stretch`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec<T> {
    pub r_max: T,
    pub n_cells: usize,
    pub stretch: T,
}

impl<T: Real> GridSpec<T> {
    pub fn new(r_max: T, n_cells: usize, stretch: T) -> Self {
        Self {
            r_max,
            n_cells,
            stretch,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.r_max.is_finite() || self.r_max <= T::zero() {
            return Err(LabError::invalid("r_max must be positive and finite"));
        }
        if self.n_cells < 8 {
            return Err(LabError::invalid("n_cells must be at least 8"));
        }
        if !self.stretch.is_finite() || self.stretch < T::one() {
            return Err(LabError::invalid("stretch exponent must be >= 1"));
        }
        Ok(())
    }
}

/// Three-node quadratic reconstruction attached to one cell.
#[derive(Clone, Debug)]
pub(crate) struct CellStencil<T> {
    /// Value indices of the three nodes (mirrored nodes reuse an interior index).
    pub idx: [usize; 3],
    /// `∫ r L_j(r) dr` over the whole cell.
    pub full: [T; 3],
    /// `∫ r L_j(r) dr` over `[r_i, c_i]`.
    pub lower_half: [T; 3],
}

/// Truncated, stretched radial mesh representing rotationally symmetric
/// functions on the plane.
///
/// Values live at cell centers. Two weight sets are kept: `volumes` are the
/// exact `∫ r dr` of each cell (the finite-volume measure used by the flows)
/// and `quad_weights` integrate the piecewise quadratic reconstruction
/// through neighbouring centers, which is fourth order on the smooth
/// power-law meshes used here.
#[derive(Clone, Debug)]
pub struct RadialGrid<T> {
    spec: GridSpec<T>,
    edges: Vec<T>,
    centers: Vec<T>,
    volumes: Vec<T>,
    quad_weights: Vec<T>,
    stencils: Vec<CellStencil<T>>,
    /// Five-point first-derivative stencils at the centers.
    deriv: Vec<([usize; 5], [T; 5])>,
}

impl<T: Real> PartialEq for RadialGrid<T> {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
    }
}

/// Builds a radial grid. See [`GridSpec`].
pub fn make_grid<T: Real>(r_max: T, n_cells: usize, stretch: T) -> Result<RadialGrid<T>> {
    RadialGrid::new(GridSpec::new(r_max, n_cells, stretch))
}

impl<T: Real> RadialGrid<T> {
    pub fn new(spec: GridSpec<T>) -> Result<Self> {
        spec.validate()?;
        let n = spec.n_cells;
        let nn = T::from_usize_lossy(n);
        let mut edges: Vec<T> = (0..=n)
            .map(|k| spec.r_max * (T::from_usize_lossy(k) / nn).powf(spec.stretch))
            .collect();
        edges[n] = spec.r_max;
        for k in 0..n {
            if edges[k + 1] <= edges[k] {
                return Err(LabError::invalid(
                    "grid edges are not strictly increasing (too many cells for this precision)",
                ));
            }
        }
        let half = lit::<T>(0.5);
        let centers: Vec<T> = edges.windows(2).map(|e| half * (e[0] + e[1])).collect();
        let volumes: Vec<T> = edges
            .windows(2)
            .map(|e| half * (e[1] - e[0]) * (e[1] + e[0]))
            .collect();

        let stencils: Vec<CellStencil<T>> = (0..n)
            .map(|i| cell_stencil(i, &edges, &centers))
            .collect();
        let mut quad_weights = vec![T::zero(); n];
        for st in &stencils {
            for j in 0..3 {
                quad_weights[st.idx[j]] = quad_weights[st.idx[j]] + st.full[j];
            }
        }
        if quad_weights.iter().any(|w| *w <= T::zero()) {
            return Err(LabError::invalid("grid produced non-positive quadrature weights"));
        }
        let deriv = (0..n).map(|i| derivative_stencil(i, &centers)).collect();
        Ok(Self {
            spec,
            edges,
            centers,
            volumes,
            quad_weights,
            stencils,
            deriv,
        })
    }

    pub fn spec(&self) -> GridSpec<T> {
        self.spec
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn r_max(&self) -> T {
        self.spec.r_max
    }

    pub fn edges(&self) -> &[T] {
        &self.edges
    }

    pub fn centers(&self) -> &[T] {
        &self.centers
    }

    /// Exact `∫ r dr` of each cell.
    pub fn volumes(&self) -> &[T] {
        &self.volumes
    }

    /// Quadrature weights: `∫_{R²} f dx ≈ 2π Σ f_i w_i`.
    pub fn quad_weights(&self) -> &[T] {
        &self.quad_weights
    }

    /// Same mesh law with every length multiplied by `factor`.
    pub fn scaled(&self, factor: T) -> Result<Self> {
        Self::new(GridSpec::new(
            self.spec.r_max * factor,
            self.spec.n_cells,
            self.spec.stretch,
        ))
    }

    pub(crate) fn check_len(&self, values: &[T]) -> Result<()> {
        if values.len() != self.len() {
            return Err(LabError::Structural(format!(
                "grid has {} cells but {} values were supplied",
                self.len(),
                values.len()
            )));
        }
        Ok(())
    }

    /// Truncated planar integral `2π Σ f_i w_i`.
    pub fn integrate_values(&self, f: &[T]) -> Result<T> {
        self.check_len(f)?;
        Ok(T::two_pi() * dot(f, &self.quad_weights))
    }

    /// Finite-volume integral `2π Σ f_i |cell_i|` (exact for cell averages).
    pub fn integrate_cells(&self, f: &[T]) -> Result<T> {
        self.check_len(f)?;
        Ok(T::two_pi() * dot(f, &self.volumes))
    }

    /// Radial derivative at every center (fourth-order stencils, even
    /// reflection across the origin).
    pub fn derivative(&self, f: &[T]) -> Result<Vec<T>> {
        self.check_len(f)?;
        Ok(self
            .deriv
            .iter()
            .map(|(idx, w)| (0..5).fold(T::zero(), |acc, j| acc + w[j] * f[idx[j]]))
            .collect())
    }

    /// `∫_{|x|<r} f dx` at every edge, consistent with [`Self::integrate_values`].
    pub fn cumulative_at_edges(&self, f: &[T]) -> Result<Vec<T>> {
        self.check_len(f)?;
        let mut out = Vec::with_capacity(self.len() + 1);
        let mut acc = T::zero();
        out.push(acc);
        for st in &self.stencils {
            acc = acc + T::two_pi() * stencil_apply(&st.full, &st.idx, f);
            out.push(acc);
        }
        Ok(out)
    }

    /// `∫_{|x|<c_i} f dx` at every center.
    pub fn cumulative_at_centers(&self, f: &[T]) -> Result<Vec<T>> {
        let at_edges = self.cumulative_at_edges(f)?;
        Ok(self
            .stencils
            .iter()
            .enumerate()
            .map(|(i, st)| at_edges[i] + T::two_pi() * stencil_apply(&st.lower_half, &st.idx, f))
            .collect())
    }

    /// Midpoint-rule integral, used only to gauge quadrature error.
    pub(crate) fn integrate_midpoint(&self, f: &[T]) -> T {
        T::two_pi() * dot(f, &self.volumes)
    }

    /// Index of the first center with `c_i >= r` (clamped to the last cell).
    pub fn locate(&self, r: T) -> usize {
        self.centers.partition_point(|c| *c < r).min(self.len() - 1)
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}

fn stencil_apply<T: Real>(w: &[T; 3], idx: &[usize; 3], f: &[T]) -> T {
    w[0] * f[idx[0]] + w[1] * f[idx[1]] + w[2] * f[idx[2]]
}

fn cell_stencil<T: Real>(i: usize, edges: &[T], centers: &[T]) -> CellStencil<T> {
    let n = centers.len();
    let (idx, pos) = if i == 0 {
        ([0, 0, 1], [-centers[0], centers[0], centers[1]])
    } else if i == n - 1 {
        (
            [n - 3, n - 2, n - 1],
            [centers[n - 3], centers[n - 2], centers[n - 1]],
        )
    } else {
        (
            [i - 1, i, i + 1],
            [centers[i - 1], centers[i], centers[i + 1]],
        )
    };
    let origin = centers[i];
    // Near the origin a power-law mesh changes cell size by O(1) factors and
    // the quadratic reconstruction can produce negative weights; those cells
    // carry negligible measure and fall back to the midpoint rule.
    let ratio = (pos[2] - pos[1]) / (pos[1] - pos[0]);
    if !(lit::<T>(0.8)..=lit::<T>(1.25)).contains(&ratio) {
        let half = lit::<T>(0.5);
        return CellStencil {
            idx: [i, i, i],
            full: [
                half * (edges[i + 1] - edges[i]) * (edges[i + 1] + edges[i]),
                T::zero(),
                T::zero(),
            ],
            lower_half: [
                half * (origin - edges[i]) * (origin + edges[i]),
                T::zero(),
                T::zero(),
            ],
        };
    }
    let t: [T; 3] = [pos[0] - origin, pos[1] - origin, pos[2] - origin];
    let (a, mid, b) = (edges[i] - origin, T::zero(), edges[i + 1] - origin);
    let mut full = [T::zero(); 3];
    let mut lower_half = [T::zero(); 3];
    for j in 0..3 {
        let (k, l) = match j {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let den = (t[j] - t[k]) * (t[j] - t[l]);
        // L_j(t) = p0 + p1 t + p2 t^2
        let p2 = T::one() / den;
        let p1 = -(t[k] + t[l]) / den;
        let p0 = t[k] * t[l] / den;
        // (origin + t) L_j(t)
        let q = [origin * p0, origin * p1 + p0, origin * p2 + p1, p2];
        let anti = |x: T| {
            q[0] * x
                + q[1] * x * x / lit(2.0)
                + q[2] * x * x * x / lit(3.0)
                + q[3] * x * x * x * x / lit(4.0)
        };
        full[j] = anti(b) - anti(a);
        lower_half[j] = anti(mid) - anti(a);
    }
    CellStencil {
        idx,
        full,
        lower_half,
    }
}

fn derivative_stencil<T: Real>(i: usize, centers: &[T]) -> ([usize; 5], [T; 5]) {
    let n = centers.len() as isize;
    let lo = (i as isize - 2).min(n - 5);
    let mut idx = [0usize; 5];
    let mut pos = [T::zero(); 5];
    for (slot, j) in (lo..lo + 5).enumerate() {
        if j < 0 {
            let m = (-j - 1) as usize;
            idx[slot] = m;
            pos[slot] = -centers[m];
        } else {
            idx[slot] = j as usize;
            pos[slot] = centers[j as usize];
        }
    }
    let w = fd_weights(centers[i], &pos, 1);
    let mut out = [T::zero(); 5];
    out.copy_from_slice(&w);
    (idx, out)
}
