//! Real-to-complex 2D transforms on the unit-cell grid.
//!
//! The half spectrum is stored column-major in the frequency index along x:
//! `spec[kx * ny + ky]` for `kx in 0..=nx/2` and `ky in 0..ny`. The forward
//! transform is unnormalized and the inverse divides by `nx * ny`, so a
//! round trip is the identity.

use std::sync::Arc;

use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub struct Fft2 {
    nx: usize,
    ny: usize,
    nkx: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
    row_in: Vec<f64>,
    row_spec: Vec<Complex64>,
    row_scratch: Vec<Complex64>,
    work: Vec<Complex64>,
    y_scratch: Vec<Complex64>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2")
            .field("nx", &self.nx)
            .field("ny", &self.ny)
            .finish()
    }
}

impl Clone for Fft2 {
    fn clone(&self) -> Self {
        Fft2::new(self.nx, self.ny)
    }
}

impl Fft2 {
    pub fn new(nx: usize, ny: usize) -> Self {
        let mut real_planner = RealFftPlanner::<f64>::new();
        let r2c = real_planner.plan_fft_forward(nx);
        let c2r = real_planner.plan_fft_inverse(nx);
        let mut planner = FftPlanner::<f64>::new();
        let fwd_y = planner.plan_fft_forward(ny);
        let inv_y = planner.plan_fft_inverse(ny);
        let nkx = nx / 2 + 1;
        let row_scratch_len = r2c
            .get_scratch_len()
            .max(c2r.get_scratch_len());
        let y_scratch_len = fwd_y
            .get_inplace_scratch_len()
            .max(inv_y.get_inplace_scratch_len());
        Self {
            nx,
            ny,
            nkx,
            row_in: vec![0.0; nx],
            row_spec: vec![Complex64::default(); nkx],
            row_scratch: vec![Complex64::default(); row_scratch_len],
            work: vec![Complex64::default(); nkx * ny],
            y_scratch: vec![Complex64::default(); y_scratch_len],
            r2c,
            c2r,
            fwd_y,
            inv_y,
        }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    /// Number of stored x frequencies, `nx / 2 + 1`.
    pub fn nkx(&self) -> usize {
        self.nkx
    }

    /// Length of a half spectrum.
    pub fn spectrum_len(&self) -> usize {
        self.nkx * self.ny
    }

    /// Forward transform of a row-major real field into the half spectrum.
    pub fn forward(&mut self, input: &[f64], out: &mut [Complex64]) {
        let (nx, ny, nkx) = (self.nx, self.ny, self.nkx);
        debug_assert_eq!(input.len(), nx * ny);
        debug_assert_eq!(out.len(), nkx * ny);
        for iy in 0..ny {
            self.row_in.copy_from_slice(&input[iy * nx..(iy + 1) * nx]);
            self.r2c
                .process_with_scratch(&mut self.row_in, &mut self.row_spec, &mut self.row_scratch)
                .expect("buffer sizes fixed at construction");
            for (kx, v) in self.row_spec.iter().enumerate() {
                out[kx * ny + iy] = *v;
            }
        }
        self.fwd_y.process_with_scratch(out, &mut self.y_scratch);
    }

    /// Inverse transform of a half spectrum into a row-major real field.
    /// `spec` is used as scratch space and left in an unspecified state.
    pub fn inverse(&mut self, spec: &mut [Complex64], out: &mut [f64]) {
        let (nx, ny, nkx) = (self.nx, self.ny, self.nkx);
        debug_assert_eq!(spec.len(), nkx * ny);
        debug_assert_eq!(out.len(), nx * ny);
        self.inv_y.process_with_scratch(spec, &mut self.y_scratch);
        self.work.copy_from_slice(spec);
        let scale = 1.0 / (nx * ny) as f64;
        for iy in 0..ny {
            for kx in 0..nkx {
                self.row_spec[kx] = self.work[kx * ny + iy];
            }
            // imaginary parts of the self-conjugate bins carry no information
            self.row_spec[0].im = 0.0;
            if nx % 2 == 0 {
                self.row_spec[nkx - 1].im = 0.0;
            }
            let row = &mut out[iy * nx..(iy + 1) * nx];
            self.c2r
                .process_with_scratch(&mut self.row_spec, row, &mut self.row_scratch)
                .expect("buffer sizes fixed at construction");
            row.iter_mut().for_each(|v| *v *= scale);
        }
    }

    /// Parseval weight of column `kx` of the half spectrum.
    #[inline]
    pub fn column_weight(&self, kx: usize) -> f64 {
        if kx == 0 || (self.nx % 2 == 0 && kx == self.nkx - 1) {
            1.0
        } else {
            2.0
        }
    }
}
