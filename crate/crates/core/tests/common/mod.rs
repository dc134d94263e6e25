#![allow(dead_code)]

//! Adaptive Gauss–Kronrod (7/15) quadrature, independent of the library.

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
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let (f1, f2) = (f(c - h * XGK[i]), f(c + h * XGK[i]));
        k += WGK[i] * (f1 + f2);
        if i % 2 == 1 {
            g += WG[i / 2] * (f1 + f2);
        }
    }
    (k * h, ((k - g) * h).abs())
}

fn adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (k, err) = gk15(f, a, b);
    if err <= tol || depth == 0 || (b - a).abs() < 1e-15 {
        return k;
    }
    let m = 0.5 * (a + b);
    adapt(f, a, m, 0.5 * tol, depth - 1) + adapt(f, m, b, 0.5 * tol, depth - 1)
}

/// `∫_a^b f`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    adapt(&f, a, b, 1e-13, 50)
}

/// `∫_{-∞}^b f` via `x = b - (1-t)/t`.
pub fn integrate_below<F: Fn(f64) -> f64>(f: F, b: f64) -> f64 {
    let g = |t: f64| {
        if t <= 0.0 {
            return 0.0;
        }
        let x = b - (1.0 - t) / t;
        let v = f(x) / (t * t);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    adapt(&g, 0.0, 1.0, 1e-13, 50)
}

/// `∫_a^∞ f`.
pub fn integrate_above<F: Fn(f64) -> f64>(f: F, a: f64) -> f64 {
    integrate_below(|x| f(-x), -a)
}

/// `∫ f` over the real line, split at `knot`.
pub fn integrate_line<F: Fn(f64) -> f64>(f: F, knot: f64) -> f64 {
    integrate_below(&f, knot) + integrate_above(&f, knot)
}

/// Mean, variance and total mass of a density by quadrature.
pub fn moments<F: Fn(f64) -> f64>(pdf: F, knot: f64) -> (f64, f64, f64) {
    let mass = integrate_line(&pdf, knot);
    let mean = integrate_line(|x| x * pdf(x), knot);
    let second = integrate_line(|x| x * x * pdf(x), knot);
    (mass, mean, second - mean * mean)
}

/// `(1/p) ∫_{-∞}^{q} x f(x) dx`, splitting at `knot` when it lies below `q`.
pub fn tail_mean<F: Fn(f64) -> f64>(pdf: F, q: f64, p: f64, knot: f64) -> f64 {
    let g = |x: f64| x * pdf(x);
    let total = if knot < q { integrate_below(g, knot) + integrate(g, knot, q) } else { integrate_below(g, q) };
    total / p
}
