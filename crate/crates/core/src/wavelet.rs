//! Orthonormal Daubechies discrete wavelet transforms on dyadic grids.
//!
//! Signals are extended on the right to a power-of-two length and then
//! decomposed with the periodized pyramid algorithm. On the padded grid the
//! transform is an orthonormal change of basis, so the inverse is the
//! transpose and energy is preserved. Coefficients are laid out coarse to
//! fine:
//!
//! ```text
//! [ a_J | d_J | d_{J-1} | ... | d_1 ]
//! ```
//!
//! where `a_J` holds the `N / 2^J` scaling coefficients and detail level `j`
//! holds `N / 2^j` coefficients.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Low-pass reconstruction filters `db1..db10`, normalized so that the taps
/// sum to `sqrt(2)` and have unit energy.
#[allow(clippy::excessive_precision)]
const DAUBECHIES: [&[f64]; 10] = [
    // db1
    &[
        7.0710678118654752440e-1,
        7.0710678118654752440e-1,
    ],
    // db2
    &[
        4.8296291314453414337e-1,
        8.3651630373780790558e-1,
        2.2414386804201338103e-1,
        -1.2940952255126038117e-1,
    ],
    // db3
    &[
        3.3267055295008261600e-1,
        8.0689150931109257649e-1,
        4.5987750211849157010e-1,
        -1.3501102001025458870e-1,
        -8.5441273882026661693e-2,
        3.5226291885709536603e-2,
    ],
    // db4
    &[
        2.3037781330889650086e-1,
        7.1484657055291564709e-1,
        6.3088076792985890788e-1,
        -2.7983769416859854211e-2,
        -1.8703481171909308408e-1,
        3.0841381835560763627e-2,
        3.2883011666885199735e-2,
        -1.0597401785069032105e-2,
    ],
    // db5
    &[
        1.6010239797419291448e-1,
        6.0382926979718967054e-1,
        7.2430852843777292773e-1,
        1.3842814590132073151e-1,
        -2.4229488706638203186e-1,
        -3.2244869584638374648e-2,
        7.7571493840045713523e-2,
        -6.2414902127982742742e-3,
        -1.2580751999081999469e-2,
        3.3357252854737712780e-3,
    ],
    // db6
    &[
        1.1154074335010946362e-1,
        4.9462389039845308568e-1,
        7.5113390802109535068e-1,
        3.1525035170919762909e-1,
        -2.2626469396543982008e-1,
        -1.2976686756726193556e-1,
        9.7501605587323049102e-2,
        2.7522865530305728626e-2,
        -3.1582039317486029565e-2,
        5.5384220116149613925e-4,
        4.7772575109455106396e-3,
        -1.0773010853084795649e-3,
    ],
    // db7
    &[
        7.7852054085009179020e-2,
        3.9653931948191730654e-1,
        7.2913209084623511992e-1,
        4.6978228740519312247e-1,
        -1.4390600392856497541e-1,
        -2.2403618499387498264e-1,
        7.1309219266830264751e-2,
        8.0612609151083071913e-2,
        -3.8029936935014413580e-2,
        -1.6574541630666880654e-2,
        1.2550998556099840613e-2,
        4.2957797292136652113e-4,
        -1.8016407040474909153e-3,
        3.5371379997452024845e-4,
    ],
    // db8
    &[
        5.4415842243104009955e-2,
        3.1287159091429997066e-1,
        6.7563073629728980681e-1,
        5.8535468365420671277e-1,
        -1.5829105256349305667e-2,
        -2.8401554296154692652e-1,
        4.7248457391328277036e-4,
        1.2874742662047845886e-1,
        -1.7369301001807546170e-2,
        -4.4088253930794751507e-2,
        1.3981027917398281649e-2,
        8.7460940474057767164e-3,
        -4.8703529934515743104e-3,
        -3.9174037337694704630e-4,
        6.7544940645056936637e-4,
        -1.1747678412476953373e-4,
    ],
    // db9
    &[
        3.8077947363878346589e-2,
        2.4383467461259035373e-1,
        6.0482312369011111190e-1,
        6.5728807805130053808e-1,
        1.3319738582500757619e-1,
        -2.9327378327917490881e-1,
        -9.6840783222976460514e-2,
        1.4854074933810638014e-1,
        3.0725681479333379212e-2,
        -6.7632829061329973676e-2,
        2.5094711483145195759e-4,
        2.2361662123679097205e-2,
        -4.7232047577513972779e-3,
        -4.2815036824634298345e-3,
        1.8476468830562264766e-3,
        2.3038576352319596721e-4,
        -2.5196318894271013697e-4,
        3.9347320316271599481e-5,
    ],
    // db10
    &[
        2.6670057900555553587e-2,
        1.8817680007769148902e-1,
        5.2720118893172558648e-1,
        6.8845903945360356574e-1,
        2.8117234366057746075e-1,
        -2.4984642432731537942e-1,
        -1.9594627437737704350e-1,
        1.2736934033579326008e-1,
        9.3057364603572351160e-2,
        -7.1394147166397087145e-2,
        -2.9457536821875812858e-2,
        3.3212674059341001740e-2,
        3.6065535669561696554e-3,
        -1.0733175483330575044e-2,
        1.3953517470529011658e-3,
        1.9924052951850561172e-3,
        -6.8585669495971162656e-4,
        -1.1646685512928545095e-4,
        9.3588670320069591334e-5,
        -1.3264202894521244812e-5,
    ],
];

/// Largest supported number of vanishing moments.
pub const MAX_VANISHING_MOMENTS: usize = DAUBECHIES.len();

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Daubechies,
}

/// How a signal is extended from its original length to the dyadic length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Append zeros on the right.
    #[default]
    ZeroPad,
    /// Repeat the signal cyclically.
    Periodic,
    /// Half-sample symmetric reflection.
    Symmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveletSpec {
    pub family: Family,
    pub vanishing_moments: usize,
    pub levels: usize,
    pub boundary: Boundary,
    pub original_length: usize,
    pub padded_length: usize,
}

impl WaveletSpec {
    /// Daubechies settings with zero padding; the padded length is the smallest
    /// power of two that covers both the signal and `levels` halvings.
    pub fn daubechies(vanishing_moments: usize, levels: usize, original_length: usize) -> Self {
        let padded_length = original_length.max(1 << levels.min(60)).next_power_of_two();
        WaveletSpec {
            family: Family::Daubechies,
            vanishing_moments,
            levels,
            boundary: Boundary::ZeroPad,
            original_length,
            padded_length,
        }
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn filter_length(&self) -> usize {
        2 * self.vanishing_moments
    }

    /// Number of scaling coefficients left after the last decomposition.
    pub fn coarse_length(&self) -> usize {
        self.padded_length >> self.levels
    }

    pub fn validate(&self) -> Result<()> {
        if self.vanishing_moments == 0 || self.vanishing_moments > MAX_VANISHING_MOMENTS {
            return Err(Error::InvalidSpec(format!(
                "vanishing_moments must be in 1..={MAX_VANISHING_MOMENTS}, got {}",
                self.vanishing_moments
            )));
        }
        if self.levels == 0 || self.levels >= 48 {
            return Err(Error::InvalidSpec(format!("levels must be in 1..48, got {}", self.levels)));
        }
        if self.original_length == 0 {
            return Err(Error::InvalidSpec("original_length must be positive".into()));
        }
        if !self.padded_length.is_power_of_two() || self.padded_length < self.original_length {
            return Err(Error::InvalidSpec(format!(
                "padded_length {} must be a power of two no smaller than original_length {}",
                self.padded_length, self.original_length
            )));
        }
        if self.coarse_length() == 0 {
            return Err(Error::InvalidSpec(format!(
                "padded_length {} admits fewer than {} decompositions",
                self.padded_length, self.levels
            )));
        }
        // The periodized filter may wrap the last stage's input at most once.
        let last_input = self.padded_length >> (self.levels - 1);
        if 2 * last_input < self.filter_length() {
            return Err(Error::InvalidSpec(format!(
                "coarse level too short for the filter: {} / 2^{} = {} scaling coefficients, \
                 filter length {}",
                self.padded_length,
                self.levels,
                self.coarse_length(),
                self.filter_length()
            )));
        }
        Ok(())
    }
}

/// Which subband a coefficient belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Band {
    Scaling,
    /// Detail level `j`, with `j = 1` the finest.
    Detail(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WaveletIndex {
    pub band: Band,
    pub k: usize,
    pub flat: usize,
}

#[derive(Debug)]
pub struct WaveletOperator {
    spec: WaveletSpec,
    lo: Vec<f64>,
    hi: Vec<f64>,
    matrix: OnceLock<DMatrix<f64>>,
}

impl Clone for WaveletOperator {
    fn clone(&self) -> Self {
        WaveletOperator {
            spec: self.spec,
            lo: self.lo.clone(),
            hi: self.hi.clone(),
            matrix: self.matrix.clone(),
        }
    }
}

pub fn build_operator(spec: WaveletSpec) -> Result<WaveletOperator> {
    WaveletOperator::new(spec)
}

impl WaveletOperator {
    pub fn new(spec: WaveletSpec) -> Result<Self> {
        spec.validate()?;
        let lo = DAUBECHIES[spec.vanishing_moments - 1].to_vec();
        let len = lo.len();
        // Quadrature mirror: g_k = (-1)^k h_{L-1-k}.
        let hi = (0..len)
            .map(|k| if k % 2 == 0 { lo[len - 1 - k] } else { -lo[len - 1 - k] })
            .collect();
        Ok(WaveletOperator {
            spec,
            lo,
            hi,
            matrix: OnceLock::new(),
        })
    }

    pub fn spec(&self) -> &WaveletSpec {
        &self.spec
    }

    pub fn original_length(&self) -> usize {
        self.spec.original_length
    }

    pub fn padded_length(&self) -> usize {
        self.spec.padded_length
    }

    pub fn low_pass(&self) -> &[f64] {
        &self.lo
    }

    pub fn high_pass(&self) -> &[f64] {
        &self.hi
    }

    /// Extend `signal` to the padded grid according to the boundary rule.
    pub fn pad_into(&self, signal: &[f64], out: &mut [f64]) {
        let len = signal.len();
        debug_assert_eq!(len, self.spec.original_length);
        debug_assert_eq!(out.len(), self.spec.padded_length);
        out[..len].copy_from_slice(signal);
        match self.spec.boundary {
            Boundary::ZeroPad => out[len..].iter_mut().for_each(|v| *v = 0.0),
            Boundary::Periodic => {
                for i in len..out.len() {
                    out[i] = signal[i % len];
                }
            }
            Boundary::Symmetric => {
                for i in len..out.len() {
                    let j = i % (2 * len);
                    out[i] = if j < len { signal[j] } else { signal[2 * len - 1 - j] };
                }
            }
        }
    }

    /// Forward transform of a padded-length buffer, in place.
    pub fn forward_in_place(&self, buf: &mut [f64], scratch: &mut [f64]) {
        assert_eq!(buf.len(), self.spec.padded_length);
        let mut m = buf.len();
        for _ in 0..self.spec.levels {
            analysis_step(&buf[..m], &mut scratch[..m], &self.lo, &self.hi);
            buf[..m].copy_from_slice(&scratch[..m]);
            m /= 2;
        }
    }

    /// Inverse transform of a padded-length coefficient buffer, in place.
    pub fn inverse_in_place(&self, buf: &mut [f64], scratch: &mut [f64]) {
        assert_eq!(buf.len(), self.spec.padded_length);
        let mut m = self.spec.coarse_length() * 2;
        for _ in 0..self.spec.levels {
            synthesis_step(&buf[..m], &mut scratch[..m], &self.lo, &self.hi);
            buf[..m].copy_from_slice(&scratch[..m]);
            m *= 2;
        }
    }

    /// Pad and transform one signal of the original length.
    pub fn forward(&self, signal: &[f64]) -> Result<Vec<f64>> {
        self.check_len(signal.len(), self.spec.original_length, "signal")?;
        let mut buf = vec![0.0; self.spec.padded_length];
        let mut scratch = vec![0.0; self.spec.padded_length];
        self.pad_into(signal, &mut buf);
        self.forward_in_place(&mut buf, &mut scratch);
        Ok(buf)
    }

    /// Inverse transform on the padded grid, without truncation.
    pub fn inverse_padded(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        self.check_len(coeffs.len(), self.spec.padded_length, "coefficient vector")?;
        let mut buf = coeffs.to_vec();
        let mut scratch = vec![0.0; buf.len()];
        self.inverse_in_place(&mut buf, &mut scratch);
        Ok(buf)
    }

    /// Inverse transform truncated to the original length.
    pub fn inverse(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.inverse_padded(coeffs)?;
        out.truncate(self.spec.original_length);
        Ok(out)
    }

    fn check_len(&self, got: usize, want: usize, what: &str) -> Result<()> {
        if got != want {
            return Err(Error::Dimension(format!("{what} has length {got}, expected {want}")));
        }
        Ok(())
    }

    /// The padded-grid transform matrix; row `f` is the basis function for
    /// flat coefficient `f`, so `coeffs = M * padded`.
    pub fn matrix(&self) -> &DMatrix<f64> {
        self.matrix.get_or_init(|| {
            let n = self.spec.padded_length;
            let mut m = DMatrix::zeros(n, n);
            let mut buf = vec![0.0; n];
            let mut scratch = vec![0.0; n];
            for f in 0..n {
                buf.iter_mut().for_each(|v| *v = 0.0);
                buf[f] = 1.0;
                self.inverse_in_place(&mut buf, &mut scratch);
                for (c, v) in buf.iter().enumerate() {
                    m[(f, c)] = *v;
                }
            }
            m
        })
    }

    /// Length of a subband.
    pub fn band_len(&self, band: Band) -> usize {
        match band {
            Band::Scaling => self.spec.coarse_length(),
            Band::Detail(j) => self.spec.padded_length >> j,
        }
    }

    /// Subbands in storage order, coarse to fine.
    pub fn bands(&self) -> Vec<Band> {
        std::iter::once(Band::Scaling)
            .chain((1..=self.spec.levels).rev().map(Band::Detail))
            .collect()
    }

    /// Offset of the first coefficient of `band` in the flat layout.
    pub fn band_offset(&self, band: Band) -> usize {
        match band {
            Band::Scaling => 0,
            Band::Detail(j) => self.spec.padded_length >> j,
        }
    }

    pub fn index(&self, flat: usize) -> WaveletIndex {
        assert!(flat < self.spec.padded_length, "flat index {flat} out of range");
        let coarse = self.spec.coarse_length();
        if flat < coarse {
            return WaveletIndex { band: Band::Scaling, k: flat, flat };
        }
        // Detail level j occupies [N/2^j, N/2^(j-1)).
        let n = self.spec.padded_length;
        let mut j = self.spec.levels;
        while flat >= n >> (j - 1) {
            j -= 1;
        }
        WaveletIndex { band: Band::Detail(j), k: flat - (n >> j), flat }
    }

    pub fn flat_index(&self, band: Band, k: usize) -> Result<usize> {
        let valid = match band {
            Band::Scaling => true,
            Band::Detail(j) => j >= 1 && j <= self.spec.levels,
        };
        if !valid || k >= self.band_len(band) {
            return Err(Error::Dimension(format!("no coefficient {band:?}[{k}]")));
        }
        Ok(self.band_offset(band) + k)
    }

    /// Group label of every flat coefficient: 0 for scaling, `j` for detail level `j`.
    pub fn level_map(&self) -> Vec<usize> {
        (0..self.spec.padded_length)
            .map(|f| match self.index(f).band {
                Band::Scaling => 0,
                Band::Detail(j) => j,
            })
            .collect()
    }

    /// Whether the coefficient's support lies inside the padded grid without
    /// wrapping around the periodic boundary.
    pub fn is_interior(&self, idx: WaveletIndex) -> bool {
        let j = match idx.band {
            Band::Scaling => self.spec.levels,
            Band::Detail(j) => j,
        };
        let width = ((1usize << j) - 1) * (self.lo.len() - 1) + 1;
        (idx.k << j) + width <= self.spec.padded_length
    }
}

fn analysis_step(x: &[f64], out: &mut [f64], lo: &[f64], hi: &[f64]) {
    let m = x.len();
    let half = m / 2;
    let taps = lo.len();
    for i in 0..half {
        let start = 2 * i;
        let (mut a, mut d) = (0.0, 0.0);
        if start + taps <= m {
            let window = &x[start..start + taps];
            for k in 0..taps {
                a += lo[k] * window[k];
                d += hi[k] * window[k];
            }
        } else {
            for k in 0..taps {
                let v = x[(start + k) % m];
                a += lo[k] * v;
                d += hi[k] * v;
            }
        }
        out[i] = a;
        out[half + i] = d;
    }
}

fn synthesis_step(c: &[f64], out: &mut [f64], lo: &[f64], hi: &[f64]) {
    let m = c.len();
    let half = m / 2;
    let taps = lo.len();
    out.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..half {
        let (a, d) = (c[i], c[half + i]);
        if a == 0.0 && d == 0.0 {
            continue;
        }
        let start = 2 * i;
        if start + taps <= m {
            let window = &mut out[start..start + taps];
            for k in 0..taps {
                window[k] += lo[k] * a + hi[k] * d;
            }
        } else {
            for k in 0..taps {
                out[(start + k) % m] += lo[k] * a + hi[k] * d;
            }
        }
    }
}

fn check_cols(data: &DMatrix<f64>, want: usize, what: &str) -> Result<()> {
    if data.ncols() != want {
        return Err(Error::Dimension(format!(
            "{what} has {} columns, expected {want}",
            data.ncols()
        )));
    }
    Ok(())
}

/// Pad and transform every row: `n x L` to `n x L*`.
pub fn dwt_rows(data: &DMatrix<f64>, op: &WaveletOperator) -> Result<DMatrix<f64>> {
    check_cols(data, op.original_length(), "data matrix")?;
    let (n, len, padded) = (data.nrows(), op.original_length(), op.padded_length());
    let mut out = DMatrix::zeros(n, padded);
    let mut row = vec![0.0; len];
    let mut buf = vec![0.0; padded];
    let mut scratch = vec![0.0; padded];
    for r in 0..n {
        for (c, v) in row.iter_mut().enumerate() {
            *v = data[(r, c)];
        }
        op.pad_into(&row, &mut buf);
        op.forward_in_place(&mut buf, &mut scratch);
        for (c, v) in buf.iter().enumerate() {
            out[(r, c)] = *v;
        }
    }
    Ok(out)
}

/// Inverse-transform every row and truncate to the original length.
pub fn idwt_rows(coeffs: &DMatrix<f64>, op: &WaveletOperator) -> Result<DMatrix<f64>> {
    check_cols(coeffs, op.padded_length(), "coefficient matrix")?;
    let (n, len, padded) = (coeffs.nrows(), op.original_length(), op.padded_length());
    let mut out = DMatrix::zeros(n, len);
    let mut buf = vec![0.0; padded];
    let mut scratch = vec![0.0; padded];
    for r in 0..n {
        for (c, v) in buf.iter_mut().enumerate() {
            *v = coeffs[(r, c)];
        }
        op.inverse_in_place(&mut buf, &mut scratch);
        for c in 0..len {
            out[(r, c)] = buf[c];
        }
    }
    Ok(out)
}

/// Maps wavelet-space coefficient surfaces back to the data grid,
/// `beta = Phi' beta* Omega`, truncated to `T x S`.
///
/// Holds scratch space, so one projector per thread.
#[derive(Debug, Clone)]
pub struct SurfaceProjector<'a> {
    phi: &'a WaveletOperator,
    omega: &'a WaveletOperator,
    work: Vec<f64>,
    row: Vec<f64>,
    scratch: Vec<f64>,
}

impl<'a> SurfaceProjector<'a> {
    pub fn new(phi: &'a WaveletOperator, omega: &'a WaveletOperator) -> Self {
        let (tp, sp) = (phi.padded_length(), omega.padded_length());
        SurfaceProjector {
            phi,
            omega,
            work: vec![0.0; tp * sp],
            row: vec![0.0; sp],
            scratch: vec![0.0; tp.max(sp)],
        }
    }

    /// `beta_star` is column-major `T* x S*` (column `c` is the coefficient
    /// vector of outcome column `c`); `out` is row-major `T x S`.
    pub fn project_into(&mut self, beta_star: &[f64], out: &mut [f64]) {
        let (tp, sp) = (self.phi.padded_length(), self.omega.padded_length());
        let (t, s) = (self.phi.original_length(), self.omega.original_length());
        assert_eq!(beta_star.len(), tp * sp);
        assert_eq!(out.len(), t * s);
        self.work.copy_from_slice(beta_star);
        for col in self.work.chunks_exact_mut(tp) {
            if col.iter().any(|v| *v != 0.0) {
                self.phi.inverse_in_place(col, &mut self.scratch[..tp]);
            }
        }
        for r in 0..t {
            for c in 0..sp {
                self.row[c] = self.work[c * tp + r];
            }
            if self.row.iter().any(|v| *v != 0.0) {
                self.omega.inverse_in_place(&mut self.row, &mut self.scratch[..sp]);
            }
            out[r * s..(r + 1) * s].copy_from_slice(&self.row[..s]);
        }
    }
}

/// `Phi' beta* Omega` restricted to the original grid.
pub fn project_surface(
    beta_star: &DMatrix<f64>,
    phi: &WaveletOperator,
    omega: &WaveletOperator,
) -> Result<DMatrix<f64>> {
    if beta_star.nrows() != phi.padded_length() || beta_star.ncols() != omega.padded_length() {
        return Err(Error::Dimension(format!(
            "coefficient surface is {}x{}, expected {}x{}",
            beta_star.nrows(),
            beta_star.ncols(),
            phi.padded_length(),
            omega.padded_length()
        )));
    }
    let (t, s) = (phi.original_length(), omega.original_length());
    let mut out = vec![0.0; t * s];
    SurfaceProjector::new(phi, omega).project_into(beta_star.as_slice(), &mut out);
    Ok(DMatrix::from_row_slice(t, s, &out))
}
