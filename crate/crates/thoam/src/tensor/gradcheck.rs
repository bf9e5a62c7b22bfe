use super::{Graph, NodeId, Tensor, TensorError};

/// Relative disagreement between an analytic and a numeric derivative,
/// `|a - n| / (|a| + 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + 1e-8)
}

/// Central finite difference `(f(p+eps) - f(p-eps)) / 2eps` of the scalar
/// produced by `build`, with respect to one coordinate of one parameter.
pub fn numeric_grad<F>(
    build: &F,
    params: &[Tensor],
    param: usize,
    coord: usize,
    eps: f64,
) -> Result<f64, TensorError>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId, TensorError>,
{
    let eval = |delta: f64| -> Result<f64, TensorError> {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = params
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut t = p.clone();
                t.requires_grad = false;
                t.grad = None;
                if i == param {
                    t.data_mut()[coord] += delta;
                }
                g.leaf(t)
            })
            .collect();
        let loss = build(&mut g, &ids)?;
        let v = g.value(loss);
        if v.numel() != 1 {
            return Err(TensorError::NonScalarLoss {
                shape: v.shape().to_vec(),
            });
        }
        Ok(v.data()[0])
    };
    Ok((eval(eps)? - eval(-eps)?) / (2.0 * eps))
}

/// Compare reverse-mode gradients against central finite differences.
///
/// `build` maps parameter leaves to a scalar loss node. Per parameter, up
/// to `max_coords_per_param` coordinates are checked, chosen by descending
/// gradient magnitude, and only where the central difference can actually
/// resolve the derivative: differencing a loss of size L at step `eps`
/// carries absolute rounding noise around `L·machine_epsilon/(2·eps)`
/// (about 1e-11 for unit-scale losses at eps = 1e-5), so coordinates whose
/// analytic derivative sits below 1e5 times that floor are excluded —
/// comparing them would measure rounding noise, not gradient correctness.
/// Returns the maximum relative error over all checked coordinates.
pub fn grad_check<F>(
    build: F,
    params: &[Tensor],
    eps: f64,
    max_coords_per_param: usize,
) -> Result<f64, TensorError>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId, TensorError>,
{
    let mut g = Graph::new();
    let ids: Vec<NodeId> = params
        .iter()
        .map(|p| {
            let mut t = p.clone();
            t.requires_grad = true;
            g.leaf(t)
        })
        .collect();
    let loss = build(&mut g, &ids)?;
    g.backward(loss)?;
    let loss_scale = g.value(loss).data()[0].abs().max(1.0);
    let resolvable = loss_scale * f64::EPSILON / (2.0 * eps) * 1e5;

    let mut worst = 0.0f64;
    for (pi, id) in ids.iter().enumerate() {
        let analytic = g
            .grad(*id)
            .expect("requires_grad leaves receive gradients")
            .to_vec();
        let mut coords: Vec<usize> = (0..analytic.len())
            .filter(|&c| analytic[c].abs() >= resolvable)
            .collect();
        coords.sort_by(|&a, &b| {
            analytic[b]
                .abs()
                .partial_cmp(&analytic[a].abs())
                .expect("finite gradients")
                .then(a.cmp(&b))
        });
        coords.truncate(max_coords_per_param);
        for c in coords {
            let numeric = numeric_grad(&build, params, pi, c, eps)?;
            worst = worst.max(relative_error(analytic[c], numeric));
        }
    }
    Ok(worst)
}
