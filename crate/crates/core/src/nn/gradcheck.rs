use crate::error::{Error, Result};
use crate::nn::{Graph, ParamStore, Var};

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-6;

/// Round-off allowance of one central difference, in units of the loss's
/// last place: `ROUNDOFF_ULPS · ε · max(|up|, |down|) / (2h)` is subtracted
/// from each entry's discrepancy before it is compared. A gradient that
/// vanishes by symmetry then checks as zero instead of as pure noise.
pub const ROUNDOFF_ULPS: f64 = 16.0;

#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    /// `max_k (|g_ad − g_fd|_k − noise_k)₊ / max(‖g_ad‖∞, ‖g_fd‖∞)`, zero when both vanish.
    pub rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.rel_error).fold(0.0, f64::max)
    }

    /// Fails with the names of the parameters above `tol`.
    pub fn check(&self, tol: f64) -> Result<()> {
        let bad: Vec<String> = self
            .params
            .iter()
            .filter(|p| !(p.rel_error <= tol))
            .map(|p| format!("{} ({:.3e})", p.name, p.rel_error))
            .collect();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("gradient check above {tol:e}: {}", bad.join(", "))))
        }
    }
}

/// Compares reverse-mode parameter gradients of the scalar built by `build`
/// with central differences of step [`FD_STEP`].
pub fn gradient_check<F>(store: &ParamStore, mut build: F) -> Result<GradCheckReport>
where
    F: FnMut(&mut Graph, &ParamStore) -> Result<Var>,
{
    let mut work = store.clone();
    work.zero_grads();
    let mut g = Graph::new();
    let loss = build(&mut g, &work)?;
    g.backward(loss).accumulate_into(&g, &mut work);
    let analytic: Vec<Vec<f64>> = work.ids().map(|id| work.grad(id).to_vec()).collect();

    let mut eval = |s: &ParamStore| -> Result<f64> {
        let mut g = Graph::new();
        let l = build(&mut g, s)?;
        Ok(g.value(l).data[0])
    };
    let mut params = Vec::new();
    for id in store.ids() {
        let n = store.value(id).len();
        let mut fd = vec![0.0; n];
        let mut noise = vec![0.0; n];
        for k in 0..n {
            let orig = work.value(id).data[k];
            work.value_mut(id).data[k] = orig + FD_STEP;
            let up = eval(&work)?;
            work.value_mut(id).data[k] = orig - FD_STEP;
            let down = eval(&work)?;
            work.value_mut(id).data[k] = orig;
            fd[k] = (up - down) / (2.0 * FD_STEP);
            noise[k] = ROUNDOFF_ULPS * f64::EPSILON * up.abs().max(down.abs()) / (2.0 * FD_STEP);
        }
        let ad = &analytic[id.0];
        let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let excess = ad.iter().zip(&fd).zip(&noise).fold(0.0f64, |m, ((a, b), e)| m.max((a - b).abs() - e));
        let scale = inf(ad).max(inf(&fd));
        let rel_error = if excess <= 0.0 { 0.0 } else { excess / scale };
        params.push(ParamCheck { name: store.name(id).to_string(), rel_error });
    }
    Ok(GradCheckReport { params })
}
