//! Pseudo-spectral evaluation on a dealiased tensor grid.
//!
//! The x-grid is uniform and periodic with `nx` points. The y-grid has `ny`
//! uniform intervals on `[0, 1]` and includes both walls, so trapezoid
//! weights integrate every product of retained modes exactly. Grid sizes at
//! or above the three-halves minimum make the projection of quadratic terms
//! alias-free, which is the two-thirds rule in physical-space form.

use crate::basis::{SpectralField, StokesBasis};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Collocation grid dimensions: `nx` periodic points, `ny` intervals in y.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridSize {
    pub nx: usize,
    pub ny: usize,
}

impl GridSize {
    /// Smallest alias-free grid for truncation `(mx, ny)`.
    pub fn dealiased(mx: usize, ny: usize) -> Self {
        GridSize {
            nx: (3 * (2 * mx + 1)).div_ceil(2),
            ny: (3 * ny).div_ceil(2) + 1,
        }
    }

    pub fn check_dealiased(&self, mx: usize, ny: usize) -> Result<()> {
        let min = GridSize::dealiased(mx, ny);
        if self.nx < min.nx || self.ny < min.ny {
            return Err(Error::invalid(format!(
                "grid {}x{} below dealiasing minimum {}x{}",
                self.nx, self.ny, min.nx, min.ny
            )));
        }
        Ok(())
    }
}

/// Velocity samples on the tensor grid, stored row-major with x outer.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocitySamples<T> {
    pub nx: usize,
    /// Number of y points (intervals + 1).
    pub ny_points: usize,
    pub u1: Vec<T>,
    pub u2: Vec<T>,
}

impl<T: Copy> VelocitySamples<T> {
    pub fn at(&self, i: usize, j: usize) -> (T, T) {
        let idx = i * self.ny_points + j;
        (self.u1[idx], self.u2[idx])
    }
}

/// Velocity and vorticity gradient of one field on the grid.
#[derive(Clone, Debug)]
pub struct GridFields<T> {
    pub u1: Vec<T>,
    pub u2: Vec<T>,
    pub wx: Vec<T>,
    pub wy: Vec<T>,
}

impl<T: Real> GridFields<T> {
    fn zeros(n: usize) -> Self {
        GridFields {
            u1: vec![T::zero(); n],
            u2: vec![T::zero(); n],
            wx: vec![T::zero(); n],
            wy: vec![T::zero(); n],
        }
    }
}

/// Reusable buffers for transforms; one per worker.
#[derive(Clone, Debug)]
pub struct Workspace<T> {
    stream: Vec<T>,
    vort: Vec<T>,
    slots: Vec<T>,
    mid: Vec<T>,
    product: Vec<T>,
    fields: GridFields<T>,
}

/// Transform tables for one basis and grid.
#[derive(Clone, Debug)]
pub struct Collocation<T: Real> {
    grid: GridSize,
    nyp: usize,
    xslots: usize,
    nmodes_y: usize,
    x: Vec<T>,
    y: Vec<T>,
    /// Basis index -> slot `xs * nmodes_y + (n - 1)`.
    slot_of: Vec<usize>,
    scale: Vec<T>,
    eigen: Vec<T>,
    ex: Vec<T>,
    dex: Vec<T>,
    siny: Vec<T>,
    dsiny: Vec<T>,
    ex_w: Vec<T>,
    dex_w: Vec<T>,
    siny_w: Vec<T>,
    dsiny_w: Vec<T>,
}

impl<T: Real> Collocation<T> {
    pub fn new(basis: &StokesBasis<T>, grid: GridSize) -> Result<Self> {
        let spec = basis.spec();
        grid.check_dealiased(spec.mx, spec.ny)?;
        let (nx, nyi) = (grid.nx, grid.ny);
        let nyp = nyi + 1;
        let xslots = 2 * spec.mx + 1;
        let nmodes_y = spec.ny;
        let pi = T::PI();
        let two_pi_over_l = T::lit(2.0) * pi / spec.length;

        let x: Vec<T> = (0..nx)
            .map(|i| spec.length * T::from_count(i) / T::from_count(nx))
            .collect();
        let y: Vec<T> = (0..nyp)
            .map(|j| T::from_count(j) / T::from_count(nyi))
            .collect();

        let wx = spec.length / T::from_count(nx);
        let mut ex = vec![T::zero(); xslots * nx];
        let mut dex = vec![T::zero(); xslots * nx];
        for xs in 0..xslots {
            let m = xs as i64 - spec.mx as i64;
            let kappa = two_pi_over_l * T::from_count(m.unsigned_abs() as usize);
            for i in 0..nx {
                let (s, c) = (kappa * x[i]).sin_cos();
                let (e, de) = if m >= 0 {
                    (c, -kappa * s)
                } else {
                    (s, kappa * c)
                };
                ex[xs * nx + i] = e;
                dex[xs * nx + i] = de;
            }
        }
        let mut siny = vec![T::zero(); nmodes_y * nyp];
        let mut dsiny = vec![T::zero(); nmodes_y * nyp];
        let mut wy = vec![T::one() / T::from_count(nyi); nyp];
        wy[0] *= T::lit(0.5);
        wy[nyi] *= T::lit(0.5);
        for n in 0..nmodes_y {
            let k = pi * T::from_count(n + 1);
            for j in 0..nyp {
                // Exact zeros at the walls keep the sine rows clean.
                let (s, c) = if j == 0 {
                    (T::zero(), T::one())
                } else if j == nyi {
                    let sign = if (n + 1) % 2 == 0 {
                        T::one()
                    } else {
                        -T::one()
                    };
                    (T::zero(), sign)
                } else {
                    (k * y[j]).sin_cos()
                };
                siny[n * nyp + j] = s;
                dsiny[n * nyp + j] = k * c;
            }
        }
        let ex_w = ex.iter().map(|v| *v * wx).collect();
        let dex_w = dex.iter().map(|v| *v * wx).collect();
        let siny_w = (0..nmodes_y * nyp)
            .map(|idx| siny[idx] * wy[idx % nyp])
            .collect();
        let dsiny_w = (0..nmodes_y * nyp)
            .map(|idx| dsiny[idx] * wy[idx % nyp])
            .collect();

        let slot_of = basis
            .modes()
            .iter()
            .map(|mode| (mode.m + spec.mx as i32) as usize * nmodes_y + (mode.n as usize - 1))
            .collect();
        let scale = (0..basis.dim()).map(|k| basis.stream_scale(k)).collect();

        Ok(Collocation {
            grid,
            nyp,
            xslots,
            nmodes_y,
            x,
            y,
            slot_of,
            scale,
            eigen: basis.eigenvalues().to_vec(),
            ex,
            dex,
            siny,
            dsiny,
            ex_w,
            dex_w,
            siny_w,
            dsiny_w,
        })
    }

    pub fn grid(&self) -> GridSize {
        self.grid
    }

    pub fn x_points(&self) -> &[T] {
        &self.x
    }

    pub fn y_points(&self) -> &[T] {
        &self.y
    }

    pub fn dim(&self) -> usize {
        self.slot_of.len()
    }

    fn npoints(&self) -> usize {
        self.grid.nx * self.nyp
    }

    pub fn workspace(&self) -> Workspace<T> {
        let nslots = self.xslots * self.nmodes_y;
        let np = self.npoints();
        Workspace {
            stream: vec![T::zero(); nslots],
            vort: vec![T::zero(); nslots],
            slots: vec![T::zero(); nslots],
            mid: vec![T::zero(); self.xslots * self.nyp],
            product: vec![T::zero(); np],
            fields: GridFields::zeros(np),
        }
    }

    pub fn grid_fields(&self) -> GridFields<T> {
        GridFields::zeros(self.npoints())
    }

    /// `out[i][j] = sum_{xs,n} xt[xs][i] yt[n][j] coef[xs][n]`.
    fn synth(&self, coef: &[T], xt: &[T], yt: &[T], sign: T, mid: &mut [T], out: &mut [T]) {
        let (nx, nyp, nmy) = (self.grid.nx, self.nyp, self.nmodes_y);
        mid.fill(T::zero());
        for xs in 0..self.xslots {
            let row = &mut mid[xs * nyp..(xs + 1) * nyp];
            for n in 0..nmy {
                let c = coef[xs * nmy + n] * sign;
                if c == T::zero() {
                    continue;
                }
                let yrow = &yt[n * nyp..(n + 1) * nyp];
                for (r, v) in row.iter_mut().zip(yrow) {
                    *r += c * *v;
                }
            }
        }
        out.fill(T::zero());
        for i in 0..nx {
            let orow = &mut out[i * nyp..(i + 1) * nyp];
            for xs in 0..self.xslots {
                let w = xt[xs * nx + i];
                let mrow = &mid[xs * nyp..(xs + 1) * nyp];
                for (o, v) in orow.iter_mut().zip(mrow) {
                    *o += w * *v;
                }
            }
        }
    }

    /// `coef[xs][n] += sum_{i,j} xt[xs][i] yt[n][j] grid[i][j]` (weights baked in).
    fn project(&self, grid: &[T], xt: &[T], yt: &[T], mid: &mut [T], coef: &mut [T]) {
        let (nx, nyp, nmy) = (self.grid.nx, self.nyp, self.nmodes_y);
        mid.fill(T::zero());
        for xs in 0..self.xslots {
            let row = &mut mid[xs * nyp..(xs + 1) * nyp];
            for i in 0..nx {
                let w = xt[xs * nx + i];
                let grow = &grid[i * nyp..(i + 1) * nyp];
                for (r, g) in row.iter_mut().zip(grow) {
                    *r += w * *g;
                }
            }
        }
        for xs in 0..self.xslots {
            let row = &mid[xs * nyp..(xs + 1) * nyp];
            for n in 0..nmy {
                let yrow = &yt[n * nyp..(n + 1) * nyp];
                let s = row
                    .iter()
                    .zip(yrow)
                    .fold(T::zero(), |acc, (a, b)| acc + *a * *b);
                coef[xs * nmy + n] += s;
            }
        }
    }

    fn scatter(&self, u: &[T], stream: &mut [T], vort: &mut [T]) {
        stream.fill(T::zero());
        vort.fill(T::zero());
        for (k, &slot) in self.slot_of.iter().enumerate() {
            let s = u[k] * self.scale[k];
            stream[slot] = s;
            vort[slot] = s * self.eigen[k];
        }
    }

    /// Velocity `(d_y psi, -d_x psi)` and vorticity gradient of `u` on the grid.
    pub fn fields_into(&self, u: &[T], ws: &mut Workspace<T>, out: &mut GridFields<T>) {
        let Workspace {
            stream, vort, mid, ..
        } = ws;
        self.scatter(u, stream, vort);
        let one = T::one();
        self.synth(stream, &self.ex, &self.dsiny, one, mid, &mut out.u1);
        self.synth(stream, &self.dex, &self.siny, -one, mid, &mut out.u2);
        self.synth(vort, &self.dex, &self.siny, one, mid, &mut out.wx);
        self.synth(vort, &self.ex, &self.dsiny, one, mid, &mut out.wy);
    }

    /// Coefficients `<f, phi_k>` of a field given by its curl on the grid.
    fn project_curl(&self, curl: &[T], ws_mid: &mut [T], slots: &mut [T], out: &mut [T]) {
        slots.fill(T::zero());
        self.project(curl, &self.ex_w, &self.siny_w, ws_mid, slots);
        for (k, &slot) in self.slot_of.iter().enumerate() {
            out[k] = slots[slot] * self.scale[k];
        }
    }

    /// `B(u) = Pi(u . grad u)` into `out`.
    pub fn nonlinearity_into(&self, u: &[T], ws: &mut Workspace<T>, out: &mut [T]) {
        let mut fields = std::mem::replace(&mut ws.fields, GridFields::zeros(0));
        self.fields_into(u, ws, &mut fields);
        for (idx, p) in ws.product.iter_mut().enumerate() {
            *p = fields.u1[idx] * fields.wx[idx] + fields.u2[idx] * fields.wy[idx];
        }
        ws.fields = fields;
        self.project_curl(&ws.product, &mut ws.mid, &mut ws.slots, out);
    }

    /// `Q(base, w)` where `base` is already on the grid; `w` is a coefficient vector.
    pub fn bilinear_with_into(
        &self,
        base: &GridFields<T>,
        w: &[T],
        ws: &mut Workspace<T>,
        out: &mut [T],
    ) {
        let mut fields = std::mem::replace(&mut ws.fields, GridFields::zeros(0));
        self.fields_into(w, ws, &mut fields);
        let n = ws.product.len();
        for idx in 0..n {
            ws.product[idx] = base.u1[idx] * fields.wx[idx]
                + base.u2[idx] * fields.wy[idx]
                + fields.u1[idx] * base.wx[idx]
                + fields.u2[idx] * base.wy[idx];
        }
        ws.fields = fields;
        self.project_curl(&ws.product, &mut ws.mid, &mut ws.slots, out);
    }

    fn check_field(&self, u: &SpectralField<T>) -> Result<()> {
        Error::check_dim(self.dim(), u.len())?;
        if !u.is_finite() {
            return Err(Error::NumericDomain("non-finite coefficient".into()));
        }
        Ok(())
    }

    /// Projected advection term `B(u)`.
    pub fn nonlinearity(&self, u: &SpectralField<T>) -> Result<SpectralField<T>> {
        self.check_field(u)?;
        let mut ws = self.workspace();
        let mut out = SpectralField::zeros(self.dim());
        self.nonlinearity_into(u.as_slice(), &mut ws, out.as_mut_slice());
        Ok(out)
    }

    /// Symmetric bilinear form `Q(a, b) = Pi(a . grad b) + Pi(b . grad a)`.
    pub fn bilinear(&self, a: &SpectralField<T>, b: &SpectralField<T>) -> Result<SpectralField<T>> {
        self.check_field(a)?;
        self.check_field(b)?;
        let mut ws = self.workspace();
        let mut base = self.grid_fields();
        self.fields_into(a.as_slice(), &mut ws, &mut base);
        let mut out = SpectralField::zeros(self.dim());
        self.bilinear_with_into(&base, b.as_slice(), &mut ws, out.as_mut_slice());
        Ok(out)
    }

    /// Pointwise velocity on the grid.
    pub fn synthesize(&self, u: &SpectralField<T>) -> Result<VelocitySamples<T>> {
        self.check_field(u)?;
        let mut ws = self.workspace();
        let Workspace {
            stream, vort, mid, ..
        } = &mut ws;
        self.scatter(u.as_slice(), stream, vort);
        let np = self.npoints();
        let mut u1 = vec![T::zero(); np];
        let mut u2 = vec![T::zero(); np];
        self.synth(stream, &self.ex, &self.dsiny, T::one(), mid, &mut u1);
        self.synth(stream, &self.dex, &self.siny, -T::one(), mid, &mut u2);
        Ok(VelocitySamples {
            nx: self.grid.nx,
            ny_points: self.nyp,
            u1,
            u2,
        })
    }

    /// `H`-orthogonal projection of grid velocity samples onto the basis.
    pub fn analyze(&self, samples: &VelocitySamples<T>) -> Result<SpectralField<T>> {
        if samples.nx != self.grid.nx || samples.ny_points != self.nyp {
            return Err(Error::invalid(format!(
                "samples on {}x{} grid, expected {}x{}",
                samples.nx, samples.ny_points, self.grid.nx, self.nyp
            )));
        }
        Error::check_dim(self.npoints(), samples.u1.len())?;
        Error::check_dim(self.npoints(), samples.u2.len())?;
        let nslots = self.xslots * self.nmodes_y;
        let mut slots = vec![T::zero(); nslots];
        let mut mid = vec![T::zero(); self.xslots * self.nyp];
        // <u, phi> = N (int u1 E n pi cos - int u2 E' sin)
        self.project(&samples.u1, &self.ex_w, &self.dsiny_w, &mut mid, &mut slots);
        let neg_u2: Vec<T> = samples.u2.iter().map(|v| -*v).collect();
        self.project(&neg_u2, &self.dex_w, &self.siny_w, &mut mid, &mut slots);
        let coeffs = self
            .slot_of
            .iter()
            .enumerate()
            .map(|(k, &slot)| slots[slot] * self.scale[k])
            .collect();
        Ok(SpectralField::from_vec(coeffs))
    }
}
