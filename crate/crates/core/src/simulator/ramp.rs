//! Phase-ramp accumulation `acc[j] += src[j] * exp(-i dphi (k0 + j))` on
//! spectra stored as separate real and imaginary arrays.

use num_complex::Complex64;

/// Bins between exact re-evaluations of the ramp.
const RESYNC: usize = 256;
const LANES: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SplitSpectrum {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl SplitSpectrum {
    pub fn zeros(n: usize) -> Self {
        Self {
            re: vec![0.0; n],
            im: vec![0.0; n],
        }
    }

    pub fn from_complex(c: &[Complex64]) -> Self {
        Self {
            re: c.iter().map(|v| v.re).collect(),
            im: c.iter().map(|v| v.im).collect(),
        }
    }

    pub fn to_complex(&self) -> Vec<Complex64> {
        self.re
            .iter()
            .zip(&self.im)
            .map(|(&r, &i)| Complex64::new(r, i))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }
}

/// Precomputed phasors for one phase increment per bin.
pub(crate) struct Ramp {
    dphi: f64,
    step_re: f64,
    step_im: f64,
    off_re: [f64; LANES],
    off_im: [f64; LANES],
}

impl Ramp {
    pub fn new(dphi: f64) -> Self {
        let (step_im, step_re) = (-dphi * LANES as f64).sin_cos();
        let mut off_re = [0.0; LANES];
        let mut off_im = [0.0; LANES];
        for l in 0..LANES {
            let (im, re) = (-dphi * l as f64).sin_cos();
            off_re[l] = re;
            off_im[l] = im;
        }
        Self {
            dphi,
            step_re,
            step_im,
            off_re,
            off_im,
        }
    }

    /// Adds the ramped `src` into `acc`; `k0` is the bin index of element 0.
    pub fn accumulate(&self, acc: &mut SplitSpectrum, src: &SplitSpectrum, k0: usize) {
        self.accumulate_range(acc, src, k0, 0, acc.len());
    }

    /// As [`Ramp::accumulate`], restricted to elements `[from, to)`.
    pub fn accumulate_range(
        &self,
        acc: &mut SplitSpectrum,
        src: &SplitSpectrum,
        k0: usize,
        from: usize,
        to: usize,
    ) {
        let (ar, ai) = (&mut acc.re[from..to], &mut acc.im[from..to]);
        let (sr, si) = (&src.re[from..to], &src.im[from..to]);
        #[cfg(target_arch = "x86_64")]
        {
            if std::arch::is_x86_feature_detected!("avx2")
                && std::arch::is_x86_feature_detected!("fma")
            {
                // SAFETY: the required CPU features were detected at runtime.
                unsafe { self.kernel_avx2(ar, ai, sr, si, k0 + from) };
                return;
            }
        }
        self.kernel(ar, ai, sr, si, k0 + from);
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2,fma")]
    unsafe fn kernel_avx2(
        &self,
        ar: &mut [f64],
        ai: &mut [f64],
        sr: &[f64],
        si: &[f64],
        k0: usize,
    ) {
        self.kernel(ar, ai, sr, si, k0);
    }

    #[inline(always)]
    fn kernel(&self, ar: &mut [f64], ai: &mut [f64], sr: &[f64], si: &[f64], k0: usize) {
        let chunks = ar
            .chunks_mut(RESYNC)
            .zip(ai.chunks_mut(RESYNC))
            .zip(sr.chunks(RESYNC).zip(si.chunks(RESYNC)));
        for (c, ((ar, ai), (sr, si))) in chunks.enumerate() {
            let (bi, br) = (-self.dphi * (k0 + c * RESYNC) as f64).sin_cos();
            let mut zr = [0.0; LANES];
            let mut zi = [0.0; LANES];
            for l in 0..LANES {
                zr[l] = br * self.off_re[l] - bi * self.off_im[l];
                zi[l] = br * self.off_im[l] + bi * self.off_re[l];
            }
            let mut a_r = ar.chunks_exact_mut(LANES);
            let mut a_i = ai.chunks_exact_mut(LANES);
            let mut s_r = sr.chunks_exact(LANES);
            let mut s_i = si.chunks_exact(LANES);
            for (((xr, xi), yr), yi) in (&mut a_r).zip(&mut a_i).zip(&mut s_r).zip(&mut s_i) {
                for l in 0..LANES {
                    xr[l] += yr[l] * zr[l] - yi[l] * zi[l];
                    xi[l] += yr[l] * zi[l] + yi[l] * zr[l];
                    let nr = zr[l] * self.step_re - zi[l] * self.step_im;
                    zi[l] = zr[l] * self.step_im + zi[l] * self.step_re;
                    zr[l] = nr;
                }
            }
            let tail = a_r
                .into_remainder()
                .iter_mut()
                .zip(a_i.into_remainder())
                .zip(s_r.remainder().iter().zip(s_i.remainder()));
            for (l, ((xr, xi), (yr, yi))) in tail.enumerate() {
                *xr += yr * zr[l] - yi * zi[l];
                *xi += yr * zi[l] + yi * zr[l];
            }
        }
    }
}
