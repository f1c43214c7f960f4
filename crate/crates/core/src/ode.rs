//! Dormand–Prince 8(5,3) explicit Runge–Kutta integrator with 7th-order dense output.
//!
//! Fixed-size state arrays keep the per-step cost allocation-free; the classical flow,
//! its tangent dynamics and the full fundamental matrix all run through this stepper.

use crate::error::{DickeError, Result};

/// Autonomous vector field y' = f(y).
pub trait OdeSystem<const N: usize> {
    /// Evaluate f. An `Err` marks y as outside the valid domain; the stepper then shrinks h.
    fn rhs(&self, y: &[f64; N], dy: &mut [f64; N]) -> Result<()>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
}

impl Tolerances {
    pub fn new(tol: f64) -> Self {
        Self {
            rtol: tol,
            atol: tol,
            h_max: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// Interpolant of the last accepted step on `[t_old, t_old + h]`.
#[derive(Debug, Clone, Copy)]
pub struct DenseSegment<const N: usize> {
    pub t_old: f64,
    pub h: f64,
    rcont: [[f64; N]; 8],
}

impl<const N: usize> DenseSegment<N> {
    pub fn t_new(&self) -> f64 {
        self.t_old + self.h
    }

    pub fn eval(&self, t: f64) -> [f64; N] {
        let s = (t - self.t_old) / self.h;
        let s1 = 1.0 - s;
        let r = &self.rcont;
        let mut out = [0.0; N];
        for i in 0..N {
            out[i] = r[0][i]
                + s * (r[1][i]
                    + s1 * (r[2][i] + s * (r[3][i] + s1 * (r[4][i] + s * (r[5][i] + s1 * (r[6][i] + s * r[7][i]))))));
        }
        out
    }

    pub fn component(&self, t: f64, i: usize) -> f64 {
        let s = (t - self.t_old) / self.h;
        let s1 = 1.0 - s;
        let r = &self.rcont;
        r[0][i] + s * (r[1][i] + s1 * (r[2][i] + s * (r[3][i] + s1 * (r[4][i] + s * (r[5][i] + s1 * (r[6][i] + s * r[7][i]))))))
    }
}

const A: [[f64; 15]; 16] = [
    [0.0; 15],
    [0.05260015195876773, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.0197250569845379, 0.0591751709536137, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.02958758547680685, 0.0, 0.08876275643042054, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2413651341592667, 0.0, -0.8845494793282861, 0.924834003261792, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.037037037037037035, 0.0, 0.0, 0.17082860872947386, 0.12546768756682242, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.037109375, 0.0, 0.0, 0.17025221101954405, 0.06021653898045596, -0.017578125, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.03709200011850479, 0.0, 0.0, 0.17038392571223998, 0.10726203044637328, -0.015319437748624402, 0.008273789163814023, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.6241109587160757, 0.0, 0.0, -3.3608926294469414, -0.868219346841726, 27.59209969944671, 20.154067550477894, -43.48988418106996, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.47766253643826434, 0.0, 0.0, -2.4881146199716677, -0.590290826836843, 21.230051448181193, 15.279233632882423, -33.28821096898486, -0.020331201708508627, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [-0.9371424300859873, 0.0, 0.0, 5.186372428844064, 1.0914373489967295, -8.149787010746927, -18.52006565999696, 22.739487099350505, 2.4936055526796523, -3.0467644718982196, 0.0, 0.0, 0.0, 0.0, 0.0],
    [2.273310147516538, 0.0, 0.0, -10.53449546673725, -2.0008720582248625, -17.9589318631188, 27.94888452941996, -2.8589982771350235, -8.87285693353063, 12.360567175794303, 0.6433927460157636, 0.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.056167502283047954, 0.0, 0.0, 0.0, 0.0, 0.0, 0.25350021021662483, -0.2462390374708025, -0.12419142326381637, 0.15329179827876568, 0.00820105229563469, 0.007567897660545699, -0.008298, 0.0, 0.0],
    [0.03183464816350214, 0.0, 0.0, 0.0, 0.0, 0.028300909672366776, 0.053541988307438566, -0.05492374857139099, 0.0, 0.0, -0.00010834732869724932, 0.0003825710908356584, -0.00034046500868740456, 0.1413124436746325, 0.0],
    [-0.42889630158379194, 0.0, 0.0, 0.0, 0.0, -4.697621415361164, 7.683421196062599, 4.06898981839711, 0.3567271874552811, 0.0, 0.0, 0.0, -0.0013990241651590145, 2.9475147891527724, -9.15095847217987],
];
const B: [f64; 12] = [0.054293734116568765, 0.0, 0.0, 0.0, 0.0, 4.450312892752409, 1.8915178993145003, -5.801203960010585, 0.3111643669578199, -0.1521609496625161, 0.20136540080403034, 0.04471061572777259];
const BHH: [f64; 3] = [0.2440944881889764, 0.7338466882816118, 0.022058823529411766];
const ER: [f64; 12] = [0.01312004499419488, 0.0, 0.0, 0.0, 0.0, -1.2251564463762044, -0.4957589496572502, 1.6643771824549864, -0.35032884874997366, 0.3341791187130175, 0.08192320648511571, -0.022355307863886294];
const D: [[f64; 16]; 4] = [
    [-8.428938276109013, 0.0, 0.0, 0.0, 0.0, 0.5667149535193777, -3.0689499459498917, 2.38466765651207, 2.117034582445028, -0.871391583777973, 2.2404374302607883, 0.6315787787694688, -0.08899033645133331, 18.148505520854727, -9.194632392478356, -4.436036387594894],
    [10.427508642579134, 0.0, 0.0, 0.0, 0.0, 242.28349177525817, 165.20045171727028, -374.5467547226902, -22.113666853125306, 7.733432668472264, -30.674084731089398, -9.332130526430229, 15.697238121770845, -31.139403219565178, -9.35292435884448, 35.81684148639408],
    [19.985053242002433, 0.0, 0.0, 0.0, 0.0, -387.0373087493518, -189.17813819516758, 527.8081592054236, -11.57390253995963, 6.8812326946963, -1.0006050966910838, 0.7777137798053443, -2.778205752353508, -60.19669523126412, 84.32040550667716, 11.99229113618279],
    [-25.69393346270375, 0.0, 0.0, 0.0, 0.0, -154.18974869023643, -231.5293791760455, 357.6391179106141, 93.40532418362432, -37.45832313645163, 104.0996495089623, 29.8402934266605, -43.53345659001114, 96.32455395918828, -39.17726167561544, -149.72683625798564],
];

const SAFE: f64 = 0.9;
const FAC_MIN: f64 = 1.0 / 3.0;
const FAC_MAX: f64 = 6.0;
const MAX_FAULT_RETRIES: usize = 60;

pub struct Dop853<'a, S, const N: usize> {
    sys: &'a S,
    t: f64,
    y: [f64; N],
    f0: [f64; N],
    h: f64,
    dir: f64,
    tol: Tolerances,
    last_rejected: bool,
    dense: Option<DenseSegment<N>>,
    stats: StepStats,
}

impl<'a, S: OdeSystem<N>, const N: usize> Dop853<'a, S, N> {
    /// Start at `(t0, y0)` integrating towards increasing time if `forward`, else backwards.
    pub fn new(sys: &'a S, t0: f64, y0: [f64; N], forward: bool, tol: Tolerances) -> Result<Self> {
        let mut f0 = [0.0; N];
        sys.rhs(&y0, &mut f0)?;
        let dir = if forward { 1.0 } else { -1.0 };
        let mut st = Self {
            sys,
            t: t0,
            y: y0,
            f0,
            h: 0.0,
            dir,
            tol,
            last_rejected: false,
            dense: None,
            stats: StepStats {
                evaluations: 1,
                ..StepStats::default()
            },
        };
        st.h = st.initial_step()?;
        Ok(st)
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64; N] {
        &self.y
    }

    pub fn stats(&self) -> StepStats {
        self.stats
    }

    pub fn last_segment(&self) -> Option<&DenseSegment<N>> {
        self.dense.as_ref()
    }

    /// Replace the state (e.g. after renormalising a tangent vector) at the current time.
    pub fn reset_state(&mut self, y: [f64; N]) -> Result<()> {
        self.sys.rhs(&y, &mut self.f0)?;
        self.stats.evaluations += 1;
        self.y = y;
        self.dense = None;
        Ok(())
    }

    fn scale(&self, a: f64, b: f64) -> f64 {
        self.tol.atol + self.tol.rtol * a.abs().max(b.abs())
    }

    fn initial_step(&mut self) -> Result<f64> {
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for i in 0..N {
            let sk = self.scale(self.y[i], 0.0);
            d0 += (self.y[i] / sk).powi(2);
            d1 += (self.f0[i] / sk).powi(2);
        }
        let mut h = if d0 <= 1e-10 || d1 <= 1e-10 { 1e-6 } else { 0.01 * (d0 / d1).sqrt() };
        h = h.min(self.tol.h_max);
        let mut y1 = [0.0; N];
        for i in 0..N {
            y1[i] = self.y[i] + self.dir * h * self.f0[i];
        }
        let mut f1 = [0.0; N];
        if self.sys.rhs(&y1, &mut f1).is_err() {
            return Ok(self.dir * h * 1e-3);
        }
        self.stats.evaluations += 1;
        let mut d2 = 0.0;
        for i in 0..N {
            let sk = self.scale(self.y[i], 0.0);
            d2 += ((f1[i] - self.f0[i]) / sk).powi(2);
        }
        d2 = d2.sqrt() / h;
        let der = d1.sqrt().max(d2);
        let h1 = if der <= 1e-15 { (h * 1e-3).max(1e-6) } else { (0.01 / der).powf(1.0 / 8.0) };
        Ok(self.dir * (100.0 * h).min(h1).min(self.tol.h_max))
    }

    fn stage(&self, s: usize, k: &[[f64; N]; 16], h: f64) -> [f64; N] {
        let mut y1 = self.y;
        for (j, &a) in A[s].iter().enumerate().take(s) {
            if a != 0.0 {
                for i in 0..N {
                    y1[i] += h * a * k[j][i];
                }
            }
        }
        y1
    }

    /// Take one accepted step, never stepping past `t_limit`. Fills the dense segment.
    pub fn step(&mut self, t_limit: f64) -> Result<()> {
        let remaining = (t_limit - self.t) * self.dir;
        if remaining <= 0.0 {
            return Err(DickeError::Domain(format!("step requested past limit {t_limit} from t = {}", self.t)));
        }
        let mut faults = 0;
        loop {
            let mut h = self.h;
            if h.abs() > self.tol.h_max {
                h = self.dir * self.tol.h_max;
            }
            let mut last = false;
            if (h.abs() * 1.01) >= remaining {
                h = self.dir * remaining;
                last = true;
            }
            if 0.1 * h.abs() <= f64::EPSILON * self.t.abs().max(1.0) {
                return Err(DickeError::Domain(format!("step size collapsed to {h:e} at t = {}", self.t)));
            }

            match self.attempt(h) {
                Ok(Some((y_new, f_new, dense, h_next))) => {
                    self.stats.accepted += 1;
                    self.t = if last { t_limit } else { self.t + h };
                    self.y = y_new;
                    self.f0 = f_new;
                    self.dense = Some(dense);
                    self.h = if self.last_rejected { self.dir * h_next.abs().min(h.abs()) } else { h_next };
                    self.last_rejected = false;
                    return Ok(());
                }
                Ok(None) => {
                    self.stats.rejected += 1;
                    self.last_rejected = true;
                }
                Err(e) => {
                    // a stage left the valid domain: shrink and retry
                    faults += 1;
                    self.stats.rejected += 1;
                    self.last_rejected = true;
                    self.h = h * 0.25;
                    if faults > MAX_FAULT_RETRIES {
                        return Err(e);
                    }
                }
            }
        }
    }

    /// One trial step of size `h`. `Ok(None)` means rejected (with `self.h` updated).
    #[allow(clippy::type_complexity)]
    fn attempt(&mut self, h: f64) -> Result<Option<([f64; N], [f64; N], DenseSegment<N>, f64)>> {
        let mut k = [[0.0; N]; 16];
        k[0] = self.f0;
        for s in 1..12 {
            let y1 = self.stage(s, &k, h);
            self.sys.rhs(&y1, &mut k[s])?;
            self.stats.evaluations += 1;
        }
        let mut y_new = self.y;
        let mut incr = [0.0; N];
        for i in 0..N {
            let mut acc = 0.0;
            for j in 0..12 {
                acc += B[j] * k[j][i];
            }
            incr[i] = acc;
            y_new[i] = self.y[i] + h * acc;
        }
        let mut err = 0.0;
        let mut err2 = 0.0;
        for i in 0..N {
            let sk = self.scale(self.y[i], y_new[i]);
            let e2 = incr[i] - BHH[0] * k[0][i] - BHH[1] * k[8][i] - BHH[2] * k[11][i];
            err2 += (e2 / sk).powi(2);
            let mut e1 = 0.0;
            for j in 0..12 {
                e1 += ER[j] * k[j][i];
            }
            err += (e1 / sk).powi(2);
        }
        let mut deno = err + 0.01 * err2;
        if deno <= 0.0 {
            deno = 1.0;
        }
        let err = h.abs() * err * (1.0 / (deno * N as f64)).sqrt();
        if !err.is_finite() {
            return Err(DickeError::Domain("non-finite error estimate".into()));
        }

        let fac11 = err.powf(1.0 / 8.0);
        if err > 1.0 {
            self.h = h / (1.0 / FAC_MIN).min(fac11 / SAFE);
            return Ok(None);
        }
        let fac = (fac11 / SAFE).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
        let h_next = h / fac;

        // FSAL evaluation at the new point, then the three extra dense-output stages
        self.sys.rhs(&y_new, &mut k[12])?;
        self.stats.evaluations += 1;
        let mut rcont = [[0.0; N]; 8];
        for i in 0..N {
            let ydiff = y_new[i] - self.y[i];
            let bspl = h * k[0][i] - ydiff;
            rcont[0][i] = self.y[i];
            rcont[1][i] = ydiff;
            rcont[2][i] = bspl;
            rcont[3][i] = ydiff - h * k[12][i] - bspl;
        }
        for s in 13..16 {
            let y1 = self.stage(s, &k, h);
            self.sys.rhs(&y1, &mut k[s])?;
            self.stats.evaluations += 1;
        }
        for (row, d) in D.iter().enumerate() {
            for i in 0..N {
                let mut acc = 0.0;
                for j in 0..16 {
                    if d[j] != 0.0 {
                        acc += d[j] * k[j][i];
                    }
                }
                rcont[4 + row][i] = h * acc;
            }
        }
        let dense = DenseSegment {
            t_old: self.t,
            h,
            rcont,
        };
        Ok(Some((y_new, k[12], dense, h_next)))
    }
}

/// Brent's method on `[a, b]` for a bracketed sign change of `f`.
pub fn brent_root(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, xtol: f64) -> Option<f64> {
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if fa.signum() == fb.signum() {
        return None;
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Some(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            if 2.0 * p < (3.0 * xm * q - (tol1 * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
    }
    Some(b)
}
