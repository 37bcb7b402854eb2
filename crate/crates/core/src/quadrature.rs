//! Gauss rules, a weighted adaptive integrator and the fiber rule used for
//! integrals over the extra coordinate of the lifted space.

use std::collections::{BinaryHeap, HashMap};
use std::cmp::Ordering;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};

/// Nodes and weights of a rule on [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Integral value with an error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

pub(crate) fn ln_beta(a: f64, b: f64) -> f64 {
    libm::lgamma(a) + libm::lgamma(b) - libm::lgamma(a + b)
}

/// Gauss-Legendre rule with `n` points (Newton iteration on the three-term recurrence).
pub fn gauss_legendre(n: usize) -> Rule {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
                p1 = x;
            }
            dp = nf * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            x = 0.0;
            dp = 1.0;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    Rule { nodes, weights }
}

/// Gauss-Jacobi rule for the weight (1-x)^alpha (1+x)^beta on [-1, 1], via Golub-Welsch.
pub fn gauss_jacobi(n: usize, alpha: f64, beta: f64) -> Result<Rule> {
    if n == 0 || alpha <= -1.0 || beta <= -1.0 {
        return Err(Error::InvalidArgument(format!(
            "gauss_jacobi needs n > 0 and exponents > -1 (n = {n}, alpha = {alpha}, beta = {beta})"
        )));
    }
    let ab = alpha + beta;
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n];
    diag[0] = (beta - alpha) / (ab + 2.0);
    for k in 1..n {
        let kf = k as f64;
        let t = 2.0 * kf + ab;
        diag[k] = (beta * beta - alpha * alpha) / (t * (t + 2.0));
        let b = if k == 1 {
            4.0 * (1.0 + alpha) * (1.0 + beta) / ((2.0 + ab).powi(2) * (3.0 + ab))
        } else {
            4.0 * kf * (kf + alpha) * (kf + beta) * (kf + ab) / (t * t * (t + 1.0) * (t - 1.0))
        };
        off[k - 1] = b.sqrt();
    }
    let mu0 = ((ab + 1.0) * std::f64::consts::LN_2 + ln_beta(alpha + 1.0, beta + 1.0)).exp();
    let mut first = vec![0.0; n];
    first[0] = 1.0;
    tridiagonal_ql(&mut diag, &mut off, &mut first)?;
    let mut pairs: Vec<(f64, f64)> = diag
        .into_iter()
        .zip(first)
        .map(|(x, v)| (x, mu0 * v * v))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(Rule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    })
}

// Implicit QL on a symmetric tridiagonal matrix, tracking only the first
// component of each eigenvector (all Golub-Welsch needs).
fn tridiagonal_ql(d: &mut [f64], e: &mut [f64], z0: &mut [f64]) -> Result<()> {
    let n = d.len();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 100 {
                return Err(Error::InvalidArgument("tridiagonal eigensolver did not converge".into()));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let zf = z0[i + 1];
                z0[i + 1] = s * z0[i] + c * zf;
                z0[i] = c * z0[i] - s * zf;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

type RuleKey = (usize, u64, u64);

fn rule_cache() -> &'static Mutex<HashMap<RuleKey, Arc<Rule>>> {
    static CACHE: OnceLock<Mutex<HashMap<RuleKey, Arc<Rule>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Cached Gauss-Jacobi rule. Legendre is the case alpha = beta = 0.
pub fn cached_rule(n: usize, alpha: f64, beta: f64) -> Result<Arc<Rule>> {
    let key = (n, alpha.to_bits(), beta.to_bits());
    if let Some(rule) = rule_cache().lock().expect("rule cache poisoned").get(&key) {
        return Ok(rule.clone());
    }
    let rule = if alpha == 0.0 && beta == 0.0 {
        gauss_legendre(n)
    } else {
        gauss_jacobi(n, alpha, beta)?
    };
    let rule = Arc::new(rule);
    rule_cache()
        .lock()
        .expect("rule cache poisoned")
        .insert(key, rule.clone());
    Ok(rule)
}

/// Integrate `f` over [a, b] with a fixed Gauss-Legendre rule.
pub fn fixed_legendre<F: FnMut(f64) -> f64>(rule: &Rule, a: f64, b: f64, mut f: F) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
        acc += w * f(mid + half * x);
    }
    acc * half
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Estimate {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let fc = f(mid);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = f(mid - dx) + f(mid + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    Estimate {
        value: k * half,
        error: ((k - g) * half).abs(),
    }
}

/// Algebraic endpoint singularity of a panel: the integrand behaves like
/// |x - endpoint|^gamma times a smooth function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Singularity {
    None,
    Left(f64),
    Right(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Panel {
    pub a: f64,
    pub b: f64,
    pub singularity: Singularity,
}

impl Panel {
    pub fn smooth(a: f64, b: f64) -> Self {
        Panel { a, b, singularity: Singularity::None }
    }

    pub fn left(a: f64, b: f64, gamma: f64) -> Self {
        Panel { a, b, singularity: Singularity::Left(gamma) }
    }

    pub fn right(a: f64, b: f64, gamma: f64) -> Self {
        Panel { a, b, singularity: Singularity::Right(gamma) }
    }

    fn split(&self) -> (Panel, Panel) {
        let m = 0.5 * (self.a + self.b);
        let (ls, rs) = match self.singularity {
            Singularity::None => (Singularity::None, Singularity::None),
            Singularity::Left(g) => (Singularity::Left(g), Singularity::None),
            Singularity::Right(g) => (Singularity::None, Singularity::Right(g)),
        };
        (
            Panel { a: self.a, b: m, singularity: ls },
            Panel { a: m, b: self.b, singularity: rs },
        )
    }
}

/// Split [a, b] into smooth panels at the given interior breakpoints.
pub fn panels_with_breaks(a: f64, b: f64, breaks: &[f64]) -> Vec<Panel> {
    let mut pts: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|&x| x > a && x < b)
        .collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|x, y| (*x - *y).abs() <= 1e-14 * (b - a));
    let mut out = Vec::with_capacity(pts.len() + 1);
    let mut lo = a;
    for p in pts {
        out.push(Panel::smooth(lo, p));
        lo = p;
    }
    out.push(Panel::smooth(lo, b));
    out
}

const JACOBI_LOW: usize = 8;
const JACOBI_HIGH: usize = 16;

fn jacobi_panel<F: FnMut(f64) -> f64>(f: &mut F, p: &Panel) -> Result<Estimate> {
    let (gamma, left) = match p.singularity {
        Singularity::Left(g) => (g, true),
        Singularity::Right(g) => (g, false),
        Singularity::None => unreachable!("smooth panel routed to Jacobi rule"),
    };
    let half = 0.5 * (p.b - p.a);
    let scale = half.powf(gamma + 1.0);
    let mut eval = |n: usize| -> Result<f64> {
        let rule = if left {
            cached_rule(n, 0.0, gamma)?
        } else {
            cached_rule(n, gamma, 0.0)?
        };
        let mut acc = 0.0;
        for (t, w) in rule.nodes.iter().zip(&rule.weights) {
            let (x, dist) = if left {
                (p.a + half * (1.0 + t), half * (1.0 + t))
            } else {
                (p.b - half * (1.0 - t), half * (1.0 - t))
            };
            acc += w * f(x) / dist.powf(gamma);
        }
        Ok(acc * scale)
    };
    let lo = eval(JACOBI_LOW)?;
    let hi = eval(JACOBI_HIGH)?;
    Ok(Estimate { value: hi, error: (hi - lo).abs() })
}

fn evaluate<F: FnMut(f64) -> f64>(f: &mut F, p: &Panel) -> Result<Estimate> {
    match p.singularity {
        Singularity::None => Ok(kronrod15(f, p.a, p.b)),
        _ => jacobi_panel(f, p),
    }
}

/// Stopping rule of the adaptive integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_panels: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { abs: 1e-13, rel: 1e-10, max_panels: 4000 }
    }
}

struct Queued {
    panel: Panel,
    est: Estimate,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.est.error == other.est.error
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        self.est.error.total_cmp(&other.est.error)
    }
}

/// Globally adaptive integration of `f` over a union of panels. Panels with an
/// endpoint singularity use Gauss-Jacobi rules; `f` must include the weight.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, panels: &[Panel], tol: Tolerance) -> Result<Estimate> {
    let mut heap = BinaryHeap::with_capacity(panels.len() * 4);
    let mut value = 0.0;
    let mut error = 0.0;
    for p in panels {
        if p.b <= p.a {
            continue;
        }
        let est = evaluate(&mut f, p)?;
        value += est.value;
        error += est.error;
        heap.push(Queued { panel: *p, est });
    }
    let mut count = heap.len();
    loop {
        let target = tol.abs.max(tol.rel * value.abs());
        if !error.is_finite() || !value.is_finite() {
            return Err(Error::Quadrature { value, error, target });
        }
        if error <= target {
            return Ok(Estimate { value, error });
        }
        if count >= tol.max_panels {
            return Err(Error::Quadrature { value, error, target });
        }
        let Some(worst) = heap.pop() else {
            return Ok(Estimate { value, error });
        };
        let (l, r) = worst.panel.split();
        if l.b - l.a <= 4.0 * f64::EPSILON * worst.panel.a.abs().max(worst.panel.b.abs()).max(1e-300) {
            return Err(Error::Quadrature { value, error, target });
        }
        let el = evaluate(&mut f, &l)?;
        let er = evaluate(&mut f, &r)?;
        value += el.value + er.value - worst.est.value;
        error += el.error + er.error - worst.est.error;
        heap.push(Queued { panel: l, est: el });
        heap.push(Queued { panel: r, est: er });
        count += 1;
        if count % 64 == 0 {
            // refresh running sums to keep cancellation from drifting
            value = heap.iter().map(|q| q.est.value).sum();
            error = heap.iter().map(|q| q.est.error).sum();
        }
    }
}

/// Weighted rule for the extra coordinate: nodes on [0, 1] for the weight u^gamma,
/// and the fiber map to [0, infinity).
#[derive(Debug, Clone)]
pub struct ExtendedQuadrature {
    pub gamma: f64,
    pub xi_nodes: usize,
    pub tolerance: Tolerance,
    rule: Arc<Rule>,
}

impl ExtendedQuadrature {
    pub fn new(gamma: f64, xi_nodes: usize, tolerance: Tolerance) -> Result<Self> {
        let rule = cached_rule(xi_nodes, 0.0, gamma)?;
        Ok(ExtendedQuadrature { gamma, xi_nodes, tolerance, rule })
    }

    /// Nodes and weights on [0, 1] for the weight u^gamma.
    pub fn unit_rule(&self) -> (Vec<f64>, Vec<f64>) {
        let scale = 0.5f64.powf(1.0 + self.gamma);
        self.rule
            .nodes
            .iter()
            .zip(&self.rule.weights)
            .map(|(t, w)| (0.5 * (1.0 + t), w * scale))
            .unzip()
    }

    /// Approximates the integral over xi in (0, infinity) of xi^gamma f(xi), through
    /// xi = scale u / (1 - u). `decay` is the algebraic decay rate p of f (f ~ xi^-p),
    /// absorbed into the Jacobi weight at u = 1; it must exceed gamma + 1.
    pub fn fiber<F: FnMut(f64) -> f64>(&self, scale: f64, decay: f64, mut f: F) -> Result<f64> {
        Ok(self.fiber_nodes(scale, decay)?.iter().map(|&(xi, w)| w * f(xi)).sum())
    }

    /// Nodes and weights of [`ExtendedQuadrature::fiber`]: the integral of xi^gamma f over
    /// (0, infinity) is approximated by the sum of w f(xi).
    pub fn fiber_nodes(&self, scale: f64, decay: f64) -> Result<Vec<(f64, f64)>> {
        if !(scale > 0.0 && scale.is_finite()) || !(decay > self.gamma + 1.0) {
            return Err(Error::InvalidArgument(format!(
                "fiber rule needs scale > 0 and decay > gamma + 1 (scale = {scale}, decay = {decay})"
            )));
        }
        let alpha = decay - self.gamma - 2.0;
        let rule = cached_rule(self.xi_nodes, alpha, self.gamma)?;
        let norm = 0.5f64.powf(1.0 + self.gamma + alpha) * scale.powf(self.gamma + 1.0);
        Ok(rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(t, w)| {
                let u = 0.5 * (1.0 + t);
                let om = 0.5 * (1.0 - t);
                (scale * u / om, w * norm * om.powf(-decay))
            })
            .collect())
    }
}
