//! Exact bounded-Lipschitz distance between weighted point sets on the line.
//!
//! For a signed measure `m = sum m_i delta_{x_i}` with zero total mass the
//! distance is `sup_r W(r) / (1 + r)`, where
//! `W(r) = max sum m_i h_i` subject to `|h_i| <= 1` and
//! `|h_{i+1} - h_i| <= r (x_{i+1} - x_i)`.
//! `W(r)` is evaluated by a dynamic program over concave piecewise-linear
//! value functions; the outer maximisation is over a quasiconcave function
//! of `r`, so every evaluated `r` yields a valid lower bound and the refined
//! maximum is exact up to the search tolerance.

use std::collections::VecDeque;

const LEN_EPS: f64 = 1e-15;

/// Concave piecewise-linear function on `[-1, 1]` split at its maximiser.
struct ConcaveChain {
    /// Segments left of the maximiser, nearest first: `(length, raw slope)`.
    left: VecDeque<(f64, f64)>,
    /// Segments right of the maximiser, nearest first.
    right: VecDeque<(f64, f64)>,
    left_len: f64,
    offset: f64,
    peak: f64,
}

impl ConcaveChain {
    fn zero() -> Self {
        let mut right = VecDeque::new();
        right.push_back((2.0, 0.0));
        ConcaveChain {
            left: VecDeque::new(),
            right,
            left_len: 0.0,
            offset: 0.0,
            peak: 0.0,
        }
    }

    fn argmax(&self) -> f64 {
        -1.0 + self.left_len
    }

    /// `f(h) += m h`.
    fn add_linear(&mut self, m: f64) {
        self.peak += m * self.argmax();
        self.offset += m;
        while let Some(&(len, raw)) = self.right.front() {
            let s = raw + self.offset;
            if s <= 0.0 {
                break;
            }
            self.right.pop_front();
            self.peak += s * len;
            self.left_len += len;
            self.left.push_front((len, raw));
        }
        while let Some(&(len, raw)) = self.left.front() {
            let s = raw + self.offset;
            if s >= 0.0 {
                break;
            }
            self.left.pop_front();
            self.peak -= s * len;
            self.left_len -= len;
            self.right.push_front((len, raw));
        }
    }

    /// `f(h) <- max_{|h' - h| <= delta, |h'| <= 1} f(h')`.
    fn window_max(&mut self, delta: f64) {
        if delta <= 0.0 {
            return;
        }
        let delta = delta.min(2.0);
        self.right.push_front((2.0 * delta, -self.offset));
        // Left end moves from -1 - delta to -1.
        let mut cut = delta;
        while cut > LEN_EPS {
            match self.left.back_mut() {
                Some(seg) if seg.0 > cut => {
                    seg.0 -= cut;
                    self.left_len -= cut;
                    cut = 0.0;
                }
                Some(_) => {
                    let (len, _) = self.left.pop_back().expect("nonempty");
                    self.left_len -= len;
                    cut -= len;
                }
                None => {
                    // Maximiser falls off the left end.
                    let seg = self.right.front_mut().expect("domain never empty");
                    let take = seg.0.min(cut);
                    self.peak += (seg.1 + self.offset) * take;
                    seg.0 -= take;
                    cut -= take;
                    if seg.0 <= LEN_EPS {
                        self.right.pop_front();
                    }
                }
            }
        }
        self.left_len = self.left_len.max(0.0);
        let mut cut = delta;
        while cut > LEN_EPS {
            match self.right.back_mut() {
                Some(seg) if seg.0 > cut => {
                    seg.0 -= cut;
                    cut = 0.0;
                }
                Some(_) => {
                    let (len, _) = self.right.pop_back().expect("nonempty");
                    cut -= len;
                }
                None => {
                    let seg = self.left.front_mut().expect("domain never empty");
                    let take = seg.0.min(cut);
                    self.peak -= (seg.1 + self.offset) * take;
                    seg.0 -= take;
                    self.left_len -= take;
                    cut -= take;
                    if seg.0 <= LEN_EPS {
                        self.left.pop_front();
                    }
                }
            }
        }
    }
}

/// Sorted, merged atoms of a signed measure.
#[derive(Clone, Debug, Default)]
pub struct SignedAtoms {
    points: Vec<f64>,
    masses: Vec<f64>,
}

impl SignedAtoms {
    /// `mu - nu` for weighted samples `(x, w)`.
    pub fn difference(mu: &[(f64, f64)], nu: &[(f64, f64)]) -> Self {
        let mut all: Vec<(f64, f64)> = mu
            .iter()
            .copied()
            .chain(nu.iter().map(|(x, w)| (*x, -*w)))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut points: Vec<f64> = Vec::with_capacity(all.len());
        let mut masses: Vec<f64> = Vec::with_capacity(all.len());
        for (x, m) in all {
            match points.last() {
                Some(&last) if last == x => *masses.last_mut().expect("paired") += m,
                _ => {
                    points.push(x);
                    masses.push(m);
                }
            }
        }
        SignedAtoms { points, masses }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `W(r)`.
    pub fn lipschitz_value(&self, r: f64) -> f64 {
        let mut chain = ConcaveChain::zero();
        let n = self.points.len();
        for i in 0..n {
            chain.add_linear(self.masses[i]);
            if i + 1 < n {
                chain.window_max(r * (self.points[i + 1] - self.points[i]));
            }
        }
        chain.peak
    }

    /// `W(r) / (1 + r)`.
    pub fn scaled_value(&self, r: f64) -> f64 {
        self.lipschitz_value(r) / (1.0 + r)
    }

    /// `sup_r W(r) / (1 + r)` together with the maximising `r`.
    pub fn distance(&self) -> (f64, f64) {
        if self.points.len() < 2 {
            return (0.0, 0.0);
        }
        let span = self.points[self.points.len() - 1] - self.points[0];
        let min_gap = self
            .points
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        // Beyond r = 2 / min_gap every constraint but the box is slack.
        let lo = (1e-3 / span.max(1e-300)).ln().min(-7.0);
        let hi = (4.0 / min_gap.max(1e-300)).ln().max(lo + 1.0);
        let per = 24usize;
        let steps = (((hi - lo) / std::f64::consts::LN_10) * 8.0)
            .ceil()
            .max(8.0) as usize;
        let grid: Vec<f64> = (0..=steps)
            .map(|j| lo + (hi - lo) * j as f64 / steps as f64)
            .collect();
        let mut best = (f64::NEG_INFINITY, 0.0, 0usize);
        for (j, s) in grid.iter().enumerate() {
            let v = self.scaled_value(s.exp());
            if v > best.0 {
                best = (v, s.exp(), j);
            }
        }
        let (mut a, mut b) = (
            grid[best.2.saturating_sub(1)],
            grid[(best.2 + 1).min(grid.len() - 1)],
        );
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = b - phi * (b - a);
        let mut d = a + phi * (b - a);
        let mut fc = self.scaled_value(c.exp());
        let mut fd = self.scaled_value(d.exp());
        for _ in 0..per * 3 {
            if fc > best.0 {
                best = (fc, c.exp(), best.2);
            }
            if fd > best.0 {
                best = (fd, d.exp(), best.2);
            }
            if fc >= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - phi * (b - a);
                fc = self.scaled_value(c.exp());
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + phi * (b - a);
                fd = self.scaled_value(d.exp());
            }
            if (b - a).abs() < 1e-12 {
                break;
            }
        }
        (best.0.max(0.0), best.1)
    }
}

/// Bounded-Lipschitz distance between two weighted samples on the line.
pub fn bounded_lipschitz_1d(mu: &[(f64, f64)], nu: &[(f64, f64)]) -> f64 {
    SignedAtoms::difference(mu, nu).distance().0
}
