//! Globally adaptive Gauss-Kronrod (7, 15) quadrature for vector-valued
//! integrands.

#![allow(clippy::excessive_precision)]

use crate::error::{Error, Result};

// Kronrod abscissae on [0, 1]; odd indices are the 7-point Gauss nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

const MAX_INTERVALS: usize = 4000;

#[derive(Debug, Clone, PartialEq)]
pub struct Integral {
    pub value: Vec<f64>,
    /// Estimated absolute error (max over components).
    pub error: f64,
    pub evaluations: usize,
}

struct Panel {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: f64,
}

fn gk15<F>(f: &mut F, a: f64, b: f64) -> Result<Panel>
where
    F: FnMut(f64) -> Result<Vec<f64>>,
{
    let c = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(c)?;
    let dim = fc.len();
    let mut kron: Vec<f64> = fc.iter().map(|v| v * WGK[7]).collect();
    let mut gauss: Vec<f64> = fc.iter().map(|v| v * WG[3]).collect();
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(c - dx)?;
        let f2 = f(c + dx)?;
        for k in 0..dim {
            let s = f1[k] + f2[k];
            kron[k] += WGK[j] * s;
            if j % 2 == 1 {
                gauss[k] += WG[j / 2] * s;
            }
        }
    }
    let mut error = 0.0f64;
    for k in 0..dim {
        kron[k] *= half;
        gauss[k] *= half;
        error = error.max((kron[k] - gauss[k]).abs());
    }
    Ok(Panel {
        a,
        b,
        value: kron,
        error,
    })
}

/// Integrates `f` over `[a, b]` to `max(abs_tol, rel_tol * |I|_inf)`.
pub fn integrate<F>(mut f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<Integral>
where
    F: FnMut(f64) -> Result<Vec<f64>>,
{
    let mut evaluations = 15;
    let mut panels = vec![gk15(&mut f, a, b)?];
    loop {
        let dim = panels[0].value.len();
        let mut value = vec![0.0; dim];
        let mut error = 0.0;
        for p in &panels {
            for (v, pv) in value.iter_mut().zip(&p.value) {
                *v += pv;
            }
            error += p.error;
        }
        let scale = value.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if error <= abs_tol.max(rel_tol * scale) {
            return Ok(Integral {
                value,
                error,
                evaluations,
            });
        }
        if panels.len() >= MAX_INTERVALS {
            return Err(Error::Quadrature(format!(
                "error estimate {error:e} after {} panels on [{a}, {b}]",
                panels.len()
            )));
        }
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .map(|(i, _)| i)
            .expect("non-empty");
        let p = panels.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        if !(mid > p.a.min(p.b) && mid < p.a.max(p.b)) {
            return Err(Error::Quadrature(format!(
                "panel [{}, {}] cannot be split further",
                p.a, p.b
            )));
        }
        panels.push(gk15(&mut f, p.a, mid)?);
        panels.push(gk15(&mut f, mid, p.b)?);
        evaluations += 30;
    }
}

/// Scalar convenience wrapper around [`integrate`].
pub fn integrate_scalar<F>(mut f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    Ok(integrate(|x| Ok(vec![f(x)]), a, b, abs_tol, rel_tol)?.value[0])
}
