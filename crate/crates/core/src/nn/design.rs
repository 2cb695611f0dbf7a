use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{layer_forward, Activation, Architecture, LayerParams, Model, Params};
use crate::design::{closed_form_iid_relu, design_optimal, estimate_moments, DesignedNvgf, Nonlinearity, SignalMoments};
use crate::error::{Error, Result};
use crate::graph::{GraphShift, SpectralBasis};

fn is_degenerate(m: &SignalMoments) -> bool {
    let spread = m.c_x.trace();
    spread <= 1e-12 * m.mu_x.norm_squared().max(1.0)
}

/// Order-zero gain of one half with an unbiasing offset.
fn fallback(m: &SignalMoments, order: usize) -> Result<DesignedNvgf> {
    let n = m.n();
    let mut d = closed_form_iid_relu(1.0, 0.5, 0.0, n)?;
    let mut taps = DMatrix::zeros(n, order + 1);
    taps.set_column(0, &d.taps.matrix().column(0));
    d.offset = &m.mu_rho - &m.mu_x * 0.5;
    d.taps = crate::filters::NvTaps::new(taps)?;
    Ok(d)
}

fn design_feature(
    samples: &[DVector<f64>],
    basis: &SpectralBasis,
    order: usize,
    rho: Nonlinearity,
    label: (usize, usize),
) -> Result<DesignedNvgf> {
    let m = estimate_moments(samples, rho)?;
    if is_degenerate(&m) {
        log::warn!(
            "layer {} feature {}: constant pre-activations; using the i.i.d. closed form",
            label.0,
            label.1
        );
        return fallback(&m, order);
    }
    match design_optimal(&m, basis, order) {
        Ok(d) => Ok(d),
        Err(e) if e.is_numerical() => {
            log::warn!("layer {} feature {}: {e}; using the i.i.d. closed form", label.0, label.1);
            fallback(&m, order)
        }
        Err(e) => Err(e),
    }
}

/// Replace every ReLU of a trained GCNN by the optimal unbiased node-variant
/// filter fitted to the pre-activation moments over `inputs`.
///
/// Layers are processed in order, so the moments of layer `ℓ` are those of
/// the designed model's own layer-`ℓ` pre-activations. Filter banks and the
/// readout are copied unchanged.
pub fn design_nvgf_from_gcnn(
    gcnn: &Model,
    g: &GraphShift,
    inputs: &[DVector<f64>],
    rho: Nonlinearity,
) -> Result<Model> {
    if gcnn.arch != Architecture::Gcnn {
        return Err(Error::InvalidArgument(format!(
            "designing needs a trained gcnn, got {}",
            gcnn.arch
        )));
    }
    if inputs.len() < 2 {
        return Err(Error::InsufficientData(
            "designing needs at least two training inputs".into(),
        ));
    }
    let basis = g.eigendecompose()?;
    let n = gcnn.spec.n;
    let mut spec = gcnn.spec.clone();
    for l in &mut spec.layers {
        l.activation = Activation::NvDesigned;
    }

    let mut current: Vec<DMatrix<f64>> = inputs.iter().map(super::train::as_input).collect();
    let mut layers = Vec::with_capacity(spec.layers.len());
    for (li, (l, p)) in spec.layers.iter().zip(&gcnn.params.layers).enumerate() {
        let linear = LayerParams {
            bank: p.bank.clone(),
            nv: Vec::new(),
            offset: None,
        };
        let mut linear_spec = *l;
        linear_spec.activation = Activation::None;
        let z: Vec<DMatrix<f64>> = current
            .par_iter()
            .map(|x| Ok(layer_forward(g, &linear_spec, &linear, x)?.0))
            .collect::<Result<_>>()?;

        let designed: Vec<DesignedNvgf> = (0..l.f_out)
            .into_par_iter()
            .map(|f| {
                let samples: Vec<DVector<f64>> = z.iter().map(|zs| zs.column(f).into_owned()).collect();
                design_feature(&samples, &basis, l.k, rho, (li, f))
            })
            .collect::<Result<_>>()?;

        let mut offset = DMatrix::zeros(n, l.f_out);
        let mut nv = Vec::with_capacity(l.f_out);
        for (f, d) in designed.into_iter().enumerate() {
            offset.set_column(f, &d.offset);
            nv.push(d.taps.matrix().clone());
        }
        let layer = LayerParams {
            bank: p.bank.clone(),
            nv,
            offset: Some(offset),
        };
        current = current
            .par_iter()
            .map(|x| Ok(layer_forward(g, l, &layer, x)?.0))
            .collect::<Result<_>>()?;
        layers.push(layer);
    }

    let params = Params::new(layers, gcnn.params.readout_w.clone(), gcnn.params.readout_b.clone());
    Model::from_parts(Architecture::DesignNvgf, spec, params)
}
