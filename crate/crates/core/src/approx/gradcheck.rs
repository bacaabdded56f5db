use super::{ApproxError, Mlp, Sample};

/// Largest relative difference between the analytic gradient and central
/// finite differences with step `h`, over every parameter. Differences are
/// taken relative to `max(|analytic|, |numeric|, floor)`.
pub fn max_gradient_error(net: &Mlp<f64>, batch: &[Sample<'_, f64>], h: f64, floor: f64) -> Result<f64, ApproxError> {
    let (grads, _) = net.backward(batch)?;
    let analytic: Vec<f64> = grads.values().copied().collect();
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        let orig = *probe.params().nth(i).expect("same layout");
        let set = |net: &mut Mlp<f64>, v: f64| *net.params_mut().nth(i).expect("same layout") = v;
        set(&mut probe, orig + h);
        let up = probe.loss(batch)?;
        set(&mut probe, orig - h);
        let down = probe.loss(batch)?;
        set(&mut probe, orig);
        let numeric = (up - down) / (2.0 * h);
        let scale = a.abs().max(numeric.abs()).max(floor);
        worst = worst.max((a - numeric).abs() / scale);
    }
    Ok(worst)
}
