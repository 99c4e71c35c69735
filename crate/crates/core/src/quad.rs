//! One-dimensional quadrature on piecewise-smooth integrands.

/// Initial uniform panels before adaptive refinement.
const SIMPSON_PANELS: usize = 16;
/// Refinement depth and evaluation budget; an interval that still disagrees
/// at either limit is accepted as is.
const SIMPSON_MAX_DEPTH: u32 = 48;
const SIMPSON_MAX_EVALS: usize = 1 << 22;

/// Adaptive Simpson on `[a, b]` to absolute tolerance `tol`.
///
/// The interval is split into 16 panels, each refined recursively where the
/// two-level estimates disagree. Agreement at the rounding level of the
/// estimate also counts, so a `tol` below machine precision terminates.
/// The endpoints are evaluated one ulp inside the interval so that a jump
/// exactly at `a` or `b` contributes its one-sided limit.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let h = (b - a) / SIMPSON_PANELS as f64;
    let knot = |k: usize| {
        if k == SIMPSON_PANELS {
            b
        } else {
            a + k as f64 * h
        }
    };
    let mut fk: Vec<f64> = (0..=SIMPSON_PANELS).map(|k| f(knot(k))).collect();
    fk[0] = f(a.next_up());
    fk[SIMPSON_PANELS] = f(b.next_down());
    let mut evals = 0usize;
    let mut total = 0.0;
    for k in 0..SIMPSON_PANELS {
        let (lo, hi) = (knot(k), knot(k + 1));
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        let whole = (hi - lo) / 6.0 * (fk[k] + 4.0 * fm + fk[k + 1]);
        let seg = Segment {
            a: lo,
            b: hi,
            fa: fk[k],
            fm,
            fb: fk[k + 1],
            whole,
        };
        total += refine(f, seg, tol / SIMPSON_PANELS as f64, 0, &mut evals);
    }
    total
}

#[derive(Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
}

fn refine<F: Fn(f64) -> f64>(f: &F, s: Segment, tol: f64, depth: u32, evals: &mut usize) -> f64 {
    let m = 0.5 * (s.a + s.b);
    let (lm, rm) = (0.5 * (s.a + m), 0.5 * (m + s.b));
    let (flm, frm) = (f(lm), f(rm));
    *evals += 2;
    let left = (m - s.a) / 6.0 * (s.fa + 4.0 * flm + s.fm);
    let right = (s.b - m) / 6.0 * (s.fm + 4.0 * frm + s.fb);
    let delta = left + right - s.whole;
    let floor = 64.0 * f64::EPSILON * (left.abs() + right.abs());
    if delta.abs() <= 15.0 * tol.max(floor)
        || depth >= SIMPSON_MAX_DEPTH
        || *evals >= SIMPSON_MAX_EVALS
    {
        return left + right + delta / 15.0;
    }
    let l = Segment {
        a: s.a,
        b: m,
        fa: s.fa,
        fm: flm,
        fb: s.fm,
        whole: left,
    };
    let r = Segment {
        a: m,
        b: s.b,
        fa: s.fm,
        fm: frm,
        fb: s.fb,
        whole: right,
    };
    refine(f, l, 0.5 * tol, depth + 1, evals) + refine(f, r, 0.5 * tol, depth + 1, evals)
}

/// Simpson integration over `[a, b]` split at the given interior breakpoints.
pub fn simpson_pieces<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, breaks: &[f64], tol: f64) -> f64 {
    let mut knots: Vec<f64> = std::iter::once(a)
        .chain(breaks.iter().copied().filter(|&x| x > a && x < b))
        .chain(std::iter::once(b))
        .collect();
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let per_piece = tol / knots.len().max(1) as f64;
    knots
        .windows(2)
        .map(|w| simpson(f, w[0], w[1], per_piece))
        .sum()
}

const GL5_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];
const GL5_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_08,
    0.478_628_670_499_366_47,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_47,
    0.236_926_885_056_189_08,
];

/// Five-point Gauss-Legendre rule on `[a, b]`; exact for degree ≤ 9.
pub fn gauss_legendre5<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    GL5_NODES
        .iter()
        .zip(GL5_WEIGHTS.iter())
        .map(|(x, w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

/// Composite Gauss-Legendre with `panels` equal panels per piece, pieces split
/// at the interior breakpoints.
pub fn gauss_legendre_pieces<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    breaks: &[f64],
    panels: usize,
) -> f64 {
    let mut knots: Vec<f64> = std::iter::once(a)
        .chain(breaks.iter().copied().filter(|&x| x > a && x < b))
        .chain(std::iter::once(b))
        .collect();
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let mut total = 0.0;
    for w in knots.windows(2) {
        let h = (w[1] - w[0]) / panels as f64;
        for k in 0..panels {
            let lo = w[0] + k as f64 * h;
            total += gauss_legendre5(f, lo, lo + h);
        }
    }
    total
}
